#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numeric>

#include "contextgen/attention.hpp"
#include "contextgen/masks.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace contextgen;

namespace {

PositionTable zero_table(Eigen::Index tokens) {
  return PositionTable(std::vector<PositionIndex>(static_cast<std::size_t>(tokens)));
}

AttentionMask all_true(Eigen::Index tokens) {
  return AttentionMask(BoolMatrix::Constant(tokens, tokens, true));
}

/// Textbook unmasked scaled dot-product attention, one head.
Matrix plain_sdpa(const Matrix& q, const Matrix& k, const Matrix& v) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Matrix s = q * k.transpose() * scale;
  Matrix out(q.rows(), v.cols());
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const Eigen::ArrayXd e = (s.row(r).array() - s.row(r).maxCoeff()).exp();
    out.row(r) = (e / e.sum()).matrix().transpose() * v;
  }
  return out;
}

struct SmallInstance {
  Scene scene;
  TokenSequence seq;
  PositionTable table;
  AttentionMask cla;
  AttentionMask ica;
  RotationSpec spec{8, 2, 4, 2, 10000.0};
  int heads = 2;
  Matrix q, k, v;

  explicit SmallInstance(std::uint64_t seed,
                         Scene s = Scene(2, 2, 2,
                                         {{1, {0, 0, 1, 2}, 1, 2, std::nullopt}}))
      : scene(std::move(s)), seq(build_token_sequence(scene)),
        table(assign_indices(scene, seq)), cla(build_cla_mask(scene, seq)),
        ica(build_ica_mask(scene, seq)) {
    const Rng rng(seed);
    q = random_matrix(seq.size(), heads * spec.head_dim, rng.stream("q"));
    k = random_matrix(seq.size(), heads * spec.head_dim, rng.stream("k"));
    v = random_matrix(seq.size(), heads * spec.head_dim, rng.stream("v"));
  }
};

}  // namespace

TEST_CASE("neutral mask and zero indices reduce to plain attention") {
  const RotationSpec spec{8, 2, 4, 2, 10000.0};
  const Eigen::Index tokens = 7;
  const Rng rng(99);
  const Matrix q = random_matrix(tokens, 16, rng.stream("q"));
  const Matrix k = random_matrix(tokens, 16, rng.stream("k"));
  const Matrix v = random_matrix(tokens, 16, rng.stream("v"));

  const auto res = masked_attention(q, k, v, 2, all_true(tokens), zero_table(tokens), spec);
  for (int h = 0; h < 2; ++h) {
    const Matrix expect = plain_sdpa(q.middleCols(8 * h, 8), k.middleCols(8 * h, 8),
                                     v.middleCols(8 * h, 8));
    CHECK((res.output.middleCols(8 * h, 8) - expect).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("a single allowed key passes its value row through") {
  const Eigen::Index tokens = 5;
  BoolMatrix m = BoolMatrix::Constant(tokens, tokens, false);
  std::vector<Eigen::Index> pick = {3, 0, 4, 4, 1};
  for (Eigen::Index r = 0; r < tokens; ++r) m(r, pick[static_cast<std::size_t>(r)]) = true;

  SmallInstance inst(5);
  const Matrix q = inst.q.leftCols(8), k = inst.k.leftCols(8), v = inst.v.leftCols(8);
  const auto res = masked_attention(q.topRows(tokens), k.topRows(tokens), v.topRows(tokens), 1,
                                    AttentionMask(m), zero_table(tokens), inst.spec);
  for (Eigen::Index r = 0; r < tokens; ++r)
    CHECK((res.output.row(r) - v.row(pick[static_cast<std::size_t>(r)])).cwiseAbs().maxCoeff() ==
          0.0);
}

TEST_CASE("masked attention matches the subset-softmax oracle") {
  Rng scene_rng(1234);
  for (int trial = 0; trial < 12; ++trial) {
    // twelve-token instance: text 2, 2x2 noise + layout, one 1x2 reference
    SmallInstance inst(1000 + trial);
    REQUIRE(inst.seq.size() == 12);
    for (const AttentionMask* mask : {&inst.cla, &inst.ica}) {
      const auto res = masked_attention(inst.q, inst.k, inst.v, inst.heads, *mask, inst.table,
                                        inst.spec);
      const Matrix expect = testsupport::attention_oracle(
          inst.q, inst.k, inst.v, inst.heads, mask->matrix(), inst.table.indices(), inst.spec);
      CHECK((res.output - expect).cwiseAbs().maxCoeff() <= 1e-9);

      for (const Matrix& w : res.weights) {
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
          CHECK(std::abs(w.row(r).sum() - 1.0) <= 1e-9);
          for (Eigen::Index c = 0; c < w.cols(); ++c)
            if (!mask->allowed(r, c)) CHECK(w(r, c) == 0.0);
        }
      }
    }
  }
}

TEST_CASE("exclusion equals renormalizing the unmasked softmax") {
  SmallInstance inst(77);
  const auto full = masked_sdpa(inst.q, inst.k, inst.v, inst.heads, all_true(inst.seq.size()));
  const auto masked = masked_sdpa(inst.q, inst.k, inst.v, inst.heads, inst.ica);
  for (int h = 0; h < inst.heads; ++h) {
    const Matrix& wf = full.weights[static_cast<std::size_t>(h)];
    const Matrix& wm = masked.weights[static_cast<std::size_t>(h)];
    for (Eigen::Index r = 0; r < wf.rows(); ++r) {
      double denom = 0.0;
      for (Eigen::Index c = 0; c < wf.cols(); ++c)
        if (inst.ica.allowed(r, c)) denom += wf(r, c);
      for (Eigen::Index c = 0; c < wf.cols(); ++c) {
        const double renorm = inst.ica.allowed(r, c) ? wf(r, c) / denom : 0.0;
        CHECK(std::abs(wm(r, c) - renorm) <= 1e-12);
      }
    }
  }
}

TEST_CASE("attention is invariant under key permutations") {
  SmallInstance inst(31337);
  const auto base = masked_sdpa(inst.q, inst.k, inst.v, inst.heads, inst.ica);

  std::vector<Eigen::Index> perm(static_cast<std::size_t>(inst.seq.size()));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(5);
  for (std::size_t i = perm.size(); i > 1; --i)
    std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);

  Matrix kp(inst.k.rows(), inst.k.cols()), vp(inst.v.rows(), inst.v.cols());
  BoolMatrix mp(inst.seq.size(), inst.seq.size());
  for (Eigen::Index old = 0; old < inst.seq.size(); ++old) {
    kp.row(perm[static_cast<std::size_t>(old)]) = inst.k.row(old);
    vp.row(perm[static_cast<std::size_t>(old)]) = inst.v.row(old);
    for (Eigen::Index qi = 0; qi < inst.seq.size(); ++qi)
      mp(qi, perm[static_cast<std::size_t>(old)]) = inst.ica.allowed(qi, old);
  }
  const auto permuted = masked_sdpa(inst.q, kp, vp, inst.heads, AttentionMask(mp));
  CHECK((permuted.output - base.output).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("attention is equivariant under whole-sequence permutations") {
  SmallInstance inst(808);
  const auto base =
      masked_attention(inst.q, inst.k, inst.v, inst.heads, inst.ica, inst.table, inst.spec);

  std::vector<Eigen::Index> perm(static_cast<std::size_t>(inst.seq.size()));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(17);
  for (std::size_t i = perm.size(); i > 1; --i)
    std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);

  Matrix qp(inst.q.rows(), inst.q.cols()), kp = qp, vp = qp;
  BoolMatrix mp(inst.seq.size(), inst.seq.size());
  std::vector<PositionIndex> idx(static_cast<std::size_t>(inst.seq.size()));
  for (Eigen::Index old = 0; old < inst.seq.size(); ++old) {
    const Eigen::Index nw = perm[static_cast<std::size_t>(old)];
    qp.row(nw) = inst.q.row(old);
    kp.row(nw) = inst.k.row(old);
    vp.row(nw) = inst.v.row(old);
    idx[static_cast<std::size_t>(nw)] = inst.table[old];
    for (Eigen::Index k2 = 0; k2 < inst.seq.size(); ++k2)
      mp(nw, perm[static_cast<std::size_t>(k2)]) = inst.ica.allowed(old, k2);
  }
  const auto permuted = masked_attention(qp, kp, vp, inst.heads, AttentionMask(mp),
                                         PositionTable(idx), inst.spec);
  for (Eigen::Index old = 0; old < inst.seq.size(); ++old)
    CHECK((permuted.output.row(perm[static_cast<std::size_t>(old)]) - base.output.row(old))
              .cwiseAbs()
              .maxCoeff() <= 1e-9);
}

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.heads = 2;
  cfg.rotation = {8, 2, 4, 2, 10000.0};
  cfg.hidden_mult = 2;
  return cfg;
}

}  // namespace

TEST_CASE("block with zero output projections is the identity") {
  SmallInstance inst(4242);
  const ModelConfig cfg = small_config();
  BlockWeights w = init_block_weights(cfg, Rng(1).stream("w"));
  w.wo.setZero();
  w.w2.setZero();
  const Matrix x = random_matrix(inst.seq.size(), cfg.model_dim(), Rng(2));
  const Matrix y = block_forward(x, w, cfg, inst.ica, inst.table);
  CHECK((y - x).cwiseAbs().maxCoeff() == 0.0);

  // and its input gradient is the upstream gradient itself
  const Matrix g = random_matrix(inst.seq.size(), cfg.model_dim(), Rng(3));
  const Matrix dx = block_backward(x, w, cfg, inst.ica, inst.table, g);
  CHECK((dx - g).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("block forward is deterministic and mask-driven") {
  const ModelConfig cfg = small_config();

  SUBCASE("bit-identical across runs") {
    SmallInstance inst(9001);
    const BlockWeights w = init_block_weights(cfg, Rng(42).stream("block"));
    const Matrix x = random_matrix(inst.seq.size(), cfg.model_dim(), Rng(43));
    const Matrix a = block_forward(x, w, cfg, inst.ica, inst.table);
    const Matrix b = block_forward(x, w, cfg, inst.ica, inst.table);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("CLA over an instance-free scene equals the all-ones mask") {
    const Scene scene(2, 2, 3, {});
    const auto seq = build_token_sequence(scene);
    const auto table = assign_indices(scene, seq);
    const auto cla = build_cla_mask(scene, seq);
    const BlockWeights w = init_block_weights(cfg, Rng(7).stream("block"));
    const Matrix x = random_matrix(seq.size(), cfg.model_dim(), Rng(8));
    const Matrix with_cla = block_forward(x, w, cfg, cla, table);
    const Matrix with_ones = block_forward(x, w, cfg, all_true(seq.size()), table);
    CHECK((with_cla - with_ones).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("rows with coinciding mask rows coincide") {
    SmallInstance inst(5555,
                       Scene(3, 3, 2, {{1, {0, 0, 2, 2}, 2, 1, std::nullopt}}));
    const BlockWeights w = init_block_weights(cfg, Rng(9).stream("block"));
    const Matrix x = random_matrix(inst.seq.size(), cfg.model_dim(), Rng(10));
    const Matrix y_cla = block_forward(x, w, cfg, inst.cla, inst.table);
    const Matrix y_ica = block_forward(x, w, cfg, inst.ica, inst.table);
    int coinciding = 0;
    for (Eigen::Index r = 0; r < inst.seq.size(); ++r) {
      if ((inst.cla.matrix().row(r) == inst.ica.matrix().row(r)).all()) {
        CHECK((y_cla.row(r) - y_ica.row(r)).cwiseAbs().maxCoeff() == 0.0);
        ++coinciding;
      } else {
        CHECK((y_cla.row(r) - y_ica.row(r)).cwiseAbs().maxCoeff() > 0.0);
      }
    }
    CHECK(coinciding > 0);  // background and non-noise rows coincide
  }
}

TEST_CASE("model forward runs the schedule") {
  const ModelConfig cfg = small_config();

  SUBCASE("all-CLA and all-ICA agree when the masks agree") {
    const Scene scene(2, 2, 3, {});  // no instances: ICA falls back to CLA everywhere
    const auto seq = build_token_sequence(scene);
    const auto table = assign_indices(scene, seq);
    const auto cla = build_cla_mask(scene, seq);
    const auto ica = build_ica_mask(scene, seq);
    REQUIRE((cla.matrix() == ica.matrix()).all());  // mask-equality precheck

    const auto blocks = init_model_weights(cfg, 3, Rng(20).stream("m"));
    const Matrix x = random_matrix(seq.size(), cfg.model_dim(), Rng(21));
    const Matrix out_cla = model_forward(x, blocks, cfg, build_schedule(3, {}), cla, ica,
                                         table, seq);
    const Matrix out_ica = model_forward(
        x, blocks, cfg,
        build_schedule(3, {BlockGroup::FR, BlockGroup::MID, BlockGroup::BK}), cla, ica, table,
        seq);
    CHECK((out_cla - out_ica).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("57-block default schedule completes on an 8x8 scene with 3 instances") {
    const Scene scene(8, 8, 4,
                      {{1, {0, 0, 5, 5}, 3, 3, std::nullopt},
                       {2, {3, 3, 4, 4}, 2, 2, std::nullopt},
                       {3, {1, 1, 2, 2}, 2, 1, std::nullopt}});
    const auto seq = build_token_sequence(scene);
    const auto table = assign_indices(scene, seq);
    const auto blocks = init_model_weights(cfg, 57, Rng(30).stream("m"));
    const Matrix x = random_matrix(seq.size(), cfg.model_dim(), Rng(31));
    const Matrix out = model_forward(x, blocks, cfg, build_schedule(57, {BlockGroup::MID}),
                                     build_cla_mask(scene, seq), build_ica_mask(scene, seq),
                                     table, seq);
    CHECK(out.rows() == 64);
    CHECK(out.allFinite());
  }
  SUBCASE("schedule and weight counts must match") {
    const Scene scene(2, 2, 3, {});
    const auto seq = build_token_sequence(scene);
    const auto table = assign_indices(scene, seq);
    const auto cla = build_cla_mask(scene, seq);
    const auto blocks = init_model_weights(cfg, 4, Rng(40).stream("m"));
    const Matrix x = random_matrix(seq.size(), cfg.model_dim(), Rng(41));
    CHECK_THROWS_AS(
        model_forward(x, blocks, cfg, build_schedule(3, {}), cla, cla, table, seq),
        std::invalid_argument);
  }
}

TEST_CASE("isolation probe") {
  const ModelConfig cfg = small_config();
  const Scene scene(8, 8, 4,
                    {{1, {0, 0, 4, 4}, 2, 2, std::nullopt},
                     {2, {5, 5, 3, 3}, 2, 2, std::nullopt}});

  SUBCASE("all checks pass on a well-formed scene") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
      const ProbeReport r = isolation_probe(scene, cfg, seed);
      CHECK(r.all_pass());
      REQUIRE(r.checks.size() == 4);
      CHECK(r.checks[0].max_abs_delta == 0.0);  // foreign refs
      CHECK(r.checks[1].max_abs_delta == 0.0);  // outside noise
      CHECK(r.checks[2].nonzero_seeds >= 4);    // matching ref responds
      CHECK(r.checks[3].max_abs_delta > 0.0);   // layout visible to background
    }
  }
  SUBCASE("needs two instances") {
    const Scene single(4, 4, 2, {{1, {0, 0, 2, 2}, 1, 1, std::nullopt}});
    CHECK_THROWS_AS(isolation_probe(single, cfg, 1), std::invalid_argument);
  }
  SUBCASE("needs a background token") {
    const Scene covered(2, 2, 2,
                        {{1, {0, 0, 2, 2}, 1, 1, std::nullopt},
                         {2, {0, 0, 1, 1}, 1, 1, std::nullopt}});
    CHECK_THROWS_AS(isolation_probe(covered, cfg, 1), std::invalid_argument);
  }
}

TEST_CASE("gradient checks") {
  const ModelConfig cfg = small_config();

  SUBCASE("masked attention on a random 8-token instance") {
    const Scene scene(2, 1, 2, {{1, {0, 0, 1, 1}, 2, 1, std::nullopt}});
    REQUIRE(build_token_sequence(scene).size() == 8);
    const GradCheckReport r =
        grad_check(GradTarget::masked_attention, scene, cfg, 123, 1e-4);
    CHECK(r.finite);
    CHECK(r.max_rel_err < 1e-4);
  }
  SUBCASE("block forward") {
    const Scene scene(2, 2, 2, {{1, {0, 0, 1, 1}, 1, 1, std::nullopt}});
    const GradCheckReport r = grad_check(GradTarget::block_forward, scene, cfg, 321, 1e-4);
    CHECK(r.finite);
    CHECK(r.max_rel_err < 1e-4);
  }
  SUBCASE("eps outside the contract is rejected") {
    const Scene scene(2, 2, 2, {});
    CHECK_THROWS_AS(grad_check(GradTarget::masked_attention, scene, cfg, 1, 1e-2),
                    std::invalid_argument);
    CHECK_THROWS_AS(grad_check(GradTarget::masked_attention, scene, cfg, 1, 1e-7),
                    std::invalid_argument);
  }
  SUBCASE("fully masked value rows get zero gradient") {
    SmallInstance inst(606);
    BoolMatrix m = BoolMatrix::Constant(inst.seq.size(), inst.seq.size(), true);
    const Eigen::Index dead = 3;
    m.col(dead).setConstant(false);
    const Matrix upstream = random_matrix(inst.seq.size(), inst.q.cols(), Rng(60));
    const AttentionGrads g = masked_attention_backward(
        inst.q, inst.k, inst.v, inst.heads, AttentionMask(m), inst.table, inst.spec, upstream);
    CHECK(g.dv.row(dead).cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.dk.row(dead).cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.dv.cwiseAbs().maxCoeff() > 0.0);
  }
}
