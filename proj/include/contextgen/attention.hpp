#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "contextgen/masks.hpp"
#include "contextgen/position.hpp"
#include "contextgen/rng.hpp"
#include "contextgen/scene.hpp"

namespace contextgen {

using Matrix = Eigen::MatrixXd;

/// Deterministic uniform fill in [lo, hi), row-major draw order.
Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng rng, double lo = -1.0,
                     double hi = 1.0);

struct AttentionResult {
  Matrix output;                // tokens x (heads * head_dim)
  std::vector<Matrix> weights;  // per head: tokens x tokens softmax rows
};

/// Scaled dot-product attention over already-rotated q/k. Disallowed keys
/// are excluded from the softmax normalization (additive -inf before the
/// softmax), so their weights are exactly zero.
AttentionResult masked_sdpa(const Matrix& q_rot, const Matrix& k_rot, const Matrix& v,
                            int heads, const AttentionMask& mask);

/// Full masked multi-modal attention: per-head RoPE rotation of q and k,
/// then masked_sdpa.
AttentionResult masked_attention(const Matrix& q, const Matrix& k, const Matrix& v, int heads,
                                 const AttentionMask& mask, const PositionTable& table,
                                 const RotationSpec& spec);

struct AttentionGrads {
  Matrix dq, dk, dv;
};

/// Input gradients of masked_attention for upstream gradient d_output.
AttentionGrads masked_attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                                         int heads, const AttentionMask& mask,
                                         const PositionTable& table, const RotationSpec& spec,
                                         const Matrix& d_output);

struct ModelConfig {
  int heads = 2;
  RotationSpec rotation{};
  int hidden_mult = 4;

  int model_dim() const noexcept { return heads * rotation.head_dim; }
  int hidden_dim() const noexcept { return hidden_mult * model_dim(); }
};

/// Minimal pre-norm block: projections for q/k/v/output around the masked
/// attention, plus a two-layer tanh MLP, both with residuals. No biases.
struct BlockWeights {
  Matrix wq, wk, wv;  // model_dim x (heads * head_dim)
  Matrix wo;          // (heads * head_dim) x model_dim
  Matrix w1;          // model_dim x hidden_dim
  Matrix w2;          // hidden_dim x model_dim
};

/// Scaled-uniform init, deterministic for a given stream.
BlockWeights init_block_weights(const ModelConfig& cfg, const Rng& rng);
std::vector<BlockWeights> init_model_weights(const ModelConfig& cfg, int num_blocks,
                                             const Rng& rng);

/// x + Attn(norm(x)) followed by + MLP(norm(.)); x is tokens x model_dim.
Matrix block_forward(const Matrix& x, const BlockWeights& w, const ModelConfig& cfg,
                     const AttentionMask& mask, const PositionTable& table);

/// Input gradient of block_forward.
Matrix block_backward(const Matrix& x, const BlockWeights& w, const ModelConfig& cfg,
                      const AttentionMask& mask, const PositionTable& table,
                      const Matrix& dy);

/// Runs the block stack, choosing the CLA or ICA mask per the schedule,
/// and returns only the noise-image rows.
Matrix model_forward(const Matrix& x, const std::vector<BlockWeights>& blocks,
                     const ModelConfig& cfg, const BlockSchedule& schedule,
                     const AttentionMask& cla, const AttentionMask& ica,
                     const PositionTable& table, const TokenSequence& seq);

struct ProbeCheck {
  std::string name;
  bool pass = false;
  double max_abs_delta = 0.0;
  int nonzero_seeds = -1;  // only for the non-degeneracy check
  int total_seeds = -1;
};

struct ProbeReport {
  std::uint64_t seed = 0;
  Eigen::Index query_token = -1;
  int query_instance = 0;
  Eigen::Index background_token = -1;
  std::vector<ProbeCheck> checks;

  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

/// Single-ICA-layer isolation probe. Verifies that an in-box query is a
/// function only of text, its own box's noise tokens and its matching
/// references: perturbing foreign references or non-visible noise tokens
/// moves the query output by exactly zero, while perturbing the matching
/// reference moves it for nearly every input seed. Needs a scene with at
/// least two instances, a coordinate inside exactly one box, and a
/// background coordinate.
ProbeReport isolation_probe(const Scene& scene, const ModelConfig& cfg, std::uint64_t seed);

enum class GradTarget { masked_attention, block_forward };

std::string grad_target_name(GradTarget t);

struct GradCheckReport {
  GradTarget target = GradTarget::masked_attention;
  double eps = 0.0;
  std::uint64_t seed = 0;
  Eigen::Index param_count = 0;
  double max_rel_err = std::numeric_limits<double>::infinity();
  bool finite = false;

  bool pass(double tol = 1e-4) const { return finite && max_rel_err < tol; }
};

/// Compares the analytic input gradients of the target against central
/// finite differences on a random instance built from the scene (ICA
/// mask). eps must lie in [1e-6, 1e-3].
GradCheckReport grad_check(GradTarget target, const Scene& scene, const ModelConfig& cfg,
                           std::uint64_t seed, double eps);

}  // namespace contextgen
