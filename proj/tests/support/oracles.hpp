// Independent reference implementations the library is checked against.
// Everything here works from first principles on the scene description:
// segment boundaries are recomputed arithmetically and rotations expanded
// with explicit trigonometry, so an implementation bug cannot hide by
// being shared with the oracle.
#pragma once

#include <Eigen/Core>
#include <utility>
#include <vector>

#include "contextgen/masks.hpp"
#include "contextgen/position.hpp"
#include "contextgen/scene.hpp"

namespace testsupport {

/// Token classification derived purely from scene dims and an index.
struct TokenClass {
  enum Kind { text, noise, layout, ref } kind = text;
  int ref_id = 0;
  int i = 0;
  int j = 0;
};

TokenClass classify_token(const contextgen::Scene& scene, Eigen::Index k);
Eigen::Index total_tokens(const contextgen::Scene& scene);

/// Direct per-pair evaluation of the CLA set-builder definition.
contextgen::BoolMatrix cla_mask_oracle(const contextgen::Scene& scene);

/// Direct per-pair evaluation of the ICA definition with union semantics
/// for overlapping boxes and CLA fallback elsewhere.
contextgen::BoolMatrix ica_mask_oracle(const contextgen::Scene& scene);

/// Dense attention oracle: rotates every token with explicit scalar
/// trigonometry, materializes each row's allowed-key subset, normalizes
/// it explicitly and accumulates the value rows.
Eigen::MatrixXd attention_oracle(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                                 const Eigen::MatrixXd& v, int heads,
                                 const contextgen::BoolMatrix& mask,
                                 const std::vector<contextgen::PositionIndex>& indices,
                                 const contextgen::RotationSpec& spec);

/// Cell-painting IoU: rasterizes both boxes onto a grid and counts.
std::pair<long long, long long> raster_iou_cells(const contextgen::BBox& a,
                                                 const contextgen::BBox& b);

/// Brute-force repaint: each cell owned by the last instance in the order
/// whose effective area covers it, found by scanning top to bottom.
std::vector<int> ownership_oracle(const contextgen::Scene& scene,
                                  const std::vector<int>& bottom_to_top);

}  // namespace testsupport
