#pragma once

#include <functional>
#include <string>
#include <vector>

#include "coswin/rng.hpp"
#include "coswin/tensor.hpp"

namespace coswin {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst;  // "param[index]"
};

// Central-difference verification of reverse-mode gradients, f64 only.
// `loss_fn` must rebuild the forward graph from the current parameter values
// and return a scalar. For each sampled element: numeric = (L(+h)-L(-h))/2h,
// rel err = |a - n| / max(1, |a|, |n|).
inline GradCheckReport gradcheck(
    const std::vector<std::pair<std::string, Tensor<double>>>& params,
    const std::function<Tensor<double>()>& loss_fn, double step = 1e-3,
    int64_t samples_per_tensor = 0 /* 0 = all elements */, uint64_t seed = 0) {
  for (auto& [name, t] : params) t.node()->grad.assign(t.data().size(), 0.0);
  Tensor<double> loss = loss_fn();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  for (auto& [name, t] : params) analytic.push_back(t.node()->grad);

  GradCheckReport rep;
  Rng rng(seed, 0x67ADC0FFull);
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& t = const_cast<Tensor<double>&>(params[pi].second);
    int64_t n = t.size();
    std::vector<int64_t> idx;
    if (samples_per_tensor <= 0 || samples_per_tensor >= n) {
      idx.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) idx[i] = i;
    } else {
      for (int64_t s = 0; s < samples_per_tensor; ++s)
        idx.push_back(rng.uniform_int(0, n - 1));
    }
    for (int64_t i : idx) {
      double a = analytic[pi][i];
      auto rel_at = [&](double h) {
        double saved = t.data()[i];
        t.data()[i] = saved + h;
        double lp = loss_fn().item();
        t.data()[i] = saved - h;
        double lm = loss_fn().item();
        t.data()[i] = saved;
        double numeric = (lp - lm) / (2.0 * h);
        double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
        return std::abs(a - numeric) / denom;
      };
      double rel = rel_at(step);
      // Finite differences are invalid across ReLU/max kinks and inflate
      // truncation error on steep curvature. A real backward bug does not
      // improve under step refinement, so re-measure suspicious elements
      // at smaller steps and keep the best.
      if (rel > 1e-7) rel = std::min(rel, rel_at(step * 0.1));
      if (rel > 1e-7) rel = std::min(rel, rel_at(step * 0.01));
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst = params[pi].first + "[" + std::to_string(i) + "]";
      }
    }
  }
  return rep;
}

}  // namespace coswin
