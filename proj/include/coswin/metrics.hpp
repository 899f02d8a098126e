#pragma once

#include <string>
#include <vector>

#include "coswin/mask.hpp"

namespace coswin {

// Pixel confusion counters; road is the positive class. Merging is plain
// counter addition, so accumulation order is irrelevant.
struct ConfusionCounts {
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;

  int64_t total() const { return tp + fp + fn + tn; }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b) {
    a += b;
    return a;
  }
};

inline ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& truth) {
  if (pred.shape != truth.shape)
    throw ShapeError("confusion: mask shapes differ: " + shape_str(pred.shape) + " vs " +
                     shape_str(truth.shape));
  ConfusionCounts c;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    if (pred.data[i]) {
      if (truth.data[i]) ++c.tp;
      else ++c.fp;
    } else {
      if (truth.data[i]) ++c.fn;
      else ++c.tn;
    }
  }
  return c;
}

struct Scores {
  double precision = 0.0, recall = 0.0, f1 = 0.0, iou = 0.0, oa = 0.0;
  bool degenerate = false;  // some denominator was zero; that score is 0 by convention
};

inline Scores scores(const ConfusionCounts& c) {
  if (c.total() == 0) throw DomainError("scores over zero pixels");
  Scores s;
  auto ratio = [&s](double num, double den) {
    if (den == 0.0) {
      s.degenerate = true;
      return 0.0;
    }
    return num / den;
  };
  s.precision = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
  s.recall = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
  s.f1 = ratio(2.0 * s.precision * s.recall, s.precision + s.recall);
  s.iou = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp + c.fn));
  s.oa = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  return s;
}

inline double f1_from(double precision, double recall) {
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

inline double iou_from_f1(double f1) { return f1 / (2.0 - f1); }

std::string metrics_csv(const std::vector<std::pair<std::string, Scores>>& rows);
std::string metrics_table(const std::vector<std::pair<std::string, Scores>>& rows);

}  // namespace coswin
