#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "contextgen/scene.hpp"

namespace contextgen {

/// Hyperparameters of the hybrid priority score. Deterministic for a
/// given seed; lambda = 0 removes the random factor entirely.
struct LayerParams {
  double alpha = 1.0;
  double beta = 1.0;
  double lambda = 0.0;
  std::uint64_t seed = 0;
};

/// "above means drawn later": instance `above` must appear after `below`
/// in the bottom-to-top order.
struct LayerConstraint {
  int above = 0;
  int below = 0;

  bool operator==(const LayerConstraint&) const = default;
};

struct LayerOrder {
  std::vector<int> bottom_to_top;          // instance ids, draw order
  std::vector<double> scores;              // indexed by id - 1
  std::vector<LayerConstraint> constraints;
};

/// Pairwise IoU of effective areas (occupancy bitmaps when present, full
/// boxes otherwise). Diagonal holds 1 for nonempty areas.
Eigen::MatrixXd effective_iou_matrix(const Scene& scene);

/// P_i = alpha * A_i + beta * (1 - sum_{j != i} IoU_ij) + lambda * U_i,
/// with A_i the effective area normalized by canvas area and U_i uniform
/// in [0, 1) drawn from the seed in id order.
std::vector<double> priority_scores(const Scene& scene, const Eigen::MatrixXd& iou,
                                    const LayerParams& params);

/// "i above j" for every pair whose effective area is a strict subset of
/// another's.
std::vector<LayerConstraint> containment_constraints(const Scene& scene);

/// Scores descending give the bottom-to-top order (large, isolated
/// instances sink to the bottom); ties break by ascending id; the
/// containment constraints are then enforced by a topological pass that
/// follows the score ranking.
LayerOrder layering_order(const Scene& scene, const LayerParams& params);

/// Canvas grid of topmost owners; 0 marks cells no instance covers.
struct OwnershipMap {
  int width = 0;
  int height = 0;
  std::vector<int> cells;  // row-major

  int owner(int x, int y) const {
    return cells[static_cast<std::size_t>(y) * width + x];
  }
};

struct CompositeResult {
  OwnershipMap ownership;
  std::vector<double> occlusion;  // by id - 1: 1 - visible / effective cells
};

/// Paints effective areas bottom-to-top and reports per-instance occlusion
/// ratios. Instances with empty effective areas get ratio 0.
CompositeResult composite(const Scene& scene, const LayerOrder& order);

}  // namespace contextgen
