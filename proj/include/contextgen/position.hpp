#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "contextgen/scene.hpp"

namespace contextgen {

/// Ternary position index (m, i, j). m = 0 marks the noise target (and
/// text), m = 1 marks auxiliary conditioning images.
struct PositionIndex {
  int m = 0;
  int i = 0;
  int j = 0;

  bool operator==(const PositionIndex&) const = default;
};

/// One PositionIndex per token of a TokenSequence, plus the cumulative
/// (W_n, H_n) offsets of the conditioning images: entry 0 is the layout
/// image, entries 1..N the references.
class PositionTable {
 public:
  PositionTable() = default;
  explicit PositionTable(std::vector<PositionIndex> indices) : indices_(std::move(indices)) {}

  Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(indices_.size()); }

  const PositionIndex& operator[](Eigen::Index k) const {
    return indices_[static_cast<std::size_t>(k)];
  }
  const PositionIndex& at(Eigen::Index k) const;

  const std::vector<PositionIndex>& indices() const noexcept { return indices_; }
  const std::vector<std::pair<int, int>>& conditioning_offsets() const noexcept {
    return offsets_;
  }

 private:
  friend PositionTable assign_indices(const Scene& scene, const TokenSequence& seq);

  std::vector<PositionIndex> indices_;
  std::vector<std::pair<int, int>> offsets_;
};

/// Assigns ternary indices: text -> (0,0,0), noise (i,j) -> (0,i,j),
/// layout (i,j) -> (1,i,j), ref_n (i,j) -> (1, W_n+i, H_n+j) where the
/// offsets accumulate the dims of the layout image and all preceding
/// references. Offsetting both axes packs the conditioning images along
/// the diagonal, so their index ranges never intersect.
PositionTable assign_indices(const Scene& scene, const TokenSequence& seq);

/// Per-axis head-dim split and base frequency of the rotation. Each axis
/// part must be even; parts sum to head_dim.
struct RotationSpec {
  int head_dim = 64;
  int dim_m = 8;
  int dim_i = 28;
  int dim_j = 28;
  double theta = 10000.0;

  void validate() const {
    if (head_dim <= 0 || head_dim % 2 != 0)
      throw std::invalid_argument("head_dim must be a positive even integer");
    if (dim_m < 0 || dim_i < 0 || dim_j < 0 || dim_m % 2 || dim_i % 2 || dim_j % 2)
      throw std::invalid_argument("axis dims must be even and >= 0");
    if (dim_m + dim_i + dim_j != head_dim)
      throw std::invalid_argument("axis dims must sum to head_dim");
    if (theta <= 0.0) throw std::invalid_argument("theta must be positive");
  }
};

namespace detail {

/// Rotates the (dim)-wide sub-block starting at column `col` of every row
/// by angles pos * theta^(-2t/dim) on pair t. sign = -1 applies the
/// inverse (transpose) rotation.
template <typename Matrix>
void rotate_axis(Matrix& out, Eigen::Index col, int dim, double theta,
                 const std::vector<PositionIndex>& table, int PositionIndex::* axis,
                 double sign) {
  using Scalar = typename Matrix::Scalar;
  for (int t = 0; t < dim / 2; ++t) {
    const double freq = std::pow(theta, -2.0 * t / dim);
    const Eigen::Index c0 = col + 2 * t;
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      const double angle = sign * freq * (table[static_cast<std::size_t>(r)].*axis);
      const Scalar ca = static_cast<Scalar>(std::cos(angle));
      const Scalar sa = static_cast<Scalar>(std::sin(angle));
      const Scalar a = out(r, c0);
      const Scalar b = out(r, c0 + 1);
      out(r, c0) = a * ca - b * sa;
      out(r, c0 + 1) = a * sa + b * ca;
    }
  }
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
rope_apply(const Eigen::MatrixBase<Derived>& vectors, const PositionTable& table,
           const RotationSpec& spec, double sign) {
  spec.validate();
  if (vectors.cols() != spec.head_dim)
    throw std::invalid_argument("embedding dim does not match head_dim");
  if (vectors.rows() != table.size())
    throw std::invalid_argument("token count does not match the position table");

  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> out = vectors;
  rotate_axis(out, 0, spec.dim_m, spec.theta, table.indices(), &PositionIndex::m, sign);
  rotate_axis(out, spec.dim_m, spec.dim_i, spec.theta, table.indices(), &PositionIndex::i,
              sign);
  rotate_axis(out, spec.dim_m + spec.dim_i, spec.dim_j, spec.theta, table.indices(),
              &PositionIndex::j, sign);
  return out;
}

}  // namespace detail

/// Rotates each row (one token, head_dim wide) by angles derived from its
/// ternary index: the [m | i | j] sub-blocks rotate pairwise with the
/// standard frequency schedule theta^(-2t/d_part). Orthogonal, so norms
/// are preserved and rotated dot products depend only on index offsets.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
rope_rotate(const Eigen::MatrixBase<Derived>& vectors, const PositionTable& table,
            const RotationSpec& spec) {
  return detail::rope_apply(vectors, table, spec, 1.0);
}

/// Inverse rotation; the adjoint used when back-propagating through
/// rope_rotate.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
rope_unrotate(const Eigen::MatrixBase<Derived>& vectors, const PositionTable& table,
              const RotationSpec& spec) {
  return detail::rope_apply(vectors, table, spec, -1.0);
}

}  // namespace contextgen
