#include "coswin/metrics.hpp"

#include <cstdio>
#include <sstream>

namespace coswin {

std::string metrics_csv(const std::vector<std::pair<std::string, Scores>>& rows) {
  std::ostringstream os;
  os << "model,precision,recall,f1,iou,oa\n";
  char buf[160];
  for (const auto& [name, s] : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.4f,%.4f,%.4f,%.4f,%.4f\n", name.c_str(),
                  s.precision, s.recall, s.f1, s.iou, s.oa);
    os << buf;
  }
  return os.str();
}

std::string metrics_table(const std::vector<std::pair<std::string, Scores>>& rows) {
  std::ostringstream os;
  char buf[200];
  std::snprintf(buf, sizeof(buf), "%-24s %9s %9s %9s %9s %9s\n", "model", "precision",
                "recall", "f1", "iou", "oa");
  os << buf;
  for (const auto& [name, s] : rows) {
    std::snprintf(buf, sizeof(buf), "%-24s %9.4f %9.4f %9.4f %9.4f %9.4f%s\n",
                  name.c_str(), s.precision, s.recall, s.f1, s.iou, s.oa,
                  s.degenerate ? "  (degenerate)" : "");
    os << buf;
  }
  return os.str();
}

}  // namespace coswin
