#pragma once

#include <string>
#include <vector>

#include "contextgen/scene.hpp"

namespace contextgen {

/// Exact integer intersection and union cell counts under the half-open
/// box convention.
std::pair<long long, long long> iou_cells(const BBox& a, const BBox& b);

/// |a n b| / |a u b|; 0 when the union is empty.
double iou(const BBox& a, const BBox& b);

struct EvalInstance {
  int id = 0;
  BBox target;
  BBox predicted;
};

struct EvalCase {
  std::string id;
  std::vector<EvalInstance> instances;
};

std::vector<double> instance_ious(const EvalCase& c);

/// Arithmetic mean of per-instance IoU; rejects empty cases.
double miou(const EvalCase& c);

struct SuccessRates {
  double instance_rate = 0.0;  // I-SR: fraction of instances meeting the threshold
  double case_rate = 0.0;      // SR: fraction of cases with every instance successful
  long long instances_total = 0;
  long long instances_ok = 0;
  long long cases_total = 0;
  long long cases_ok = 0;
};

/// Spatial half of the COCO-MIG criterion: an instance succeeds when its
/// IoU reaches the threshold. threshold must lie in (0, 1); 0.5 is the
/// default.
SuccessRates success_rates(const std::vector<EvalCase>& cases, double threshold = 0.5);

}  // namespace contextgen
