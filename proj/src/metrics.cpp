#include "contextgen/metrics.hpp"

#include <algorithm>
#include <stdexcept>

namespace contextgen {

std::pair<long long, long long> iou_cells(const BBox& a, const BBox& b) {
  const long long ix = std::max(0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const long long iy = std::max(0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const long long inter = ix * iy;
  return {inter, a.area() + b.area() - inter};
}

double iou(const BBox& a, const BBox& b) {
  const auto [inter, uni] = iou_cells(a, b);
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

std::vector<double> instance_ious(const EvalCase& c) {
  std::vector<double> out;
  out.reserve(c.instances.size());
  for (const EvalInstance& inst : c.instances) out.push_back(iou(inst.target, inst.predicted));
  return out;
}

double miou(const EvalCase& c) {
  if (c.instances.empty())
    throw std::invalid_argument("case '" + c.id + "' has no instances");
  double sum = 0.0;
  for (double v : instance_ious(c)) sum += v;
  return sum / static_cast<double>(c.instances.size());
}

SuccessRates success_rates(const std::vector<EvalCase>& cases, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("threshold must lie in (0, 1)");

  SuccessRates r;
  for (const EvalCase& c : cases) {
    bool all_ok = true;
    for (const EvalInstance& inst : c.instances) {
      const bool ok = iou(inst.target, inst.predicted) >= threshold;
      ++r.instances_total;
      if (ok)
        ++r.instances_ok;
      else
        all_ok = false;
    }
    ++r.cases_total;
    if (all_ok) ++r.cases_ok;
  }
  r.instance_rate = r.instances_total > 0
                        ? static_cast<double>(r.instances_ok) / static_cast<double>(r.instances_total)
                        : 0.0;
  r.case_rate =
      r.cases_total > 0 ? static_cast<double>(r.cases_ok) / static_cast<double>(r.cases_total) : 0.0;
  return r;
}

}  // namespace contextgen
