#include "contextgen/attention.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

namespace contextgen {

namespace {

constexpr double kRmsEps = 1e-6;
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_shapes(const Matrix& q, const Matrix& k, const Matrix& v, int heads,
                  const AttentionMask& mask) {
  if (heads < 1) throw std::invalid_argument("heads must be >= 1");
  if (q.rows() != k.rows() || q.rows() != v.rows() || q.cols() != k.cols() ||
      q.cols() != v.cols())
    throw std::invalid_argument("q/k/v must share one shape");
  if (q.cols() % heads != 0)
    throw std::invalid_argument("embedding dim must be divisible by heads");
  if (mask.size() != q.rows())
    throw std::invalid_argument("mask size does not match token count");
}

/// Row-wise softmax of scores with disallowed keys pinned to -inf. The
/// row max is finite whenever a row allows at least one key, so masked
/// weights come out as exp(-inf) == 0 exactly.
Matrix masked_softmax_rows(Matrix scores, const AttentionMask& mask) {
  const Eigen::Index n = scores.rows();
  for (Eigen::Index qi = 0; qi < n; ++qi) {
    double mx = -kInf;
    for (Eigen::Index ki = 0; ki < n; ++ki) {
      if (!mask.allowed(qi, ki))
        scores(qi, ki) = -kInf;
      else
        mx = std::max(mx, scores(qi, ki));
    }
    if (!std::isfinite(mx))
      throw std::logic_error("attention row " + std::to_string(qi) + " allows no keys");
    double sum = 0.0;
    for (Eigen::Index ki = 0; ki < n; ++ki) {
      const double w = std::exp(scores(qi, ki) - mx);
      scores(qi, ki) = w;
      sum += w;
    }
    scores.row(qi) /= sum;
  }
  return scores;
}

Matrix rms_norm(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double rms = std::sqrt(x.row(r).squaredNorm() / x.cols() + kRmsEps);
    out.row(r) = x.row(r) / rms;
  }
  return out;
}

Matrix rms_norm_backward(const Matrix& x, const Matrix& dy) {
  Matrix dx(x.rows(), x.cols());
  const double d = static_cast<double>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double rr = x.row(r).squaredNorm() / d + kRmsEps;
    const double rms = std::sqrt(rr);
    const double dot = dy.row(r).dot(x.row(r));
    dx.row(r) = dy.row(r) / rms - x.row(r) * (dot / (d * rr * rms));
  }
  return dx;
}

struct BlockTrace {
  Matrix n1, q, k, v, attn, h, n2, hid, y;
};

BlockTrace run_block(const Matrix& x, const BlockWeights& w, const ModelConfig& cfg,
                     const AttentionMask& mask, const PositionTable& table) {
  if (x.cols() != cfg.model_dim())
    throw std::invalid_argument("token dim does not match model_dim");
  BlockTrace t;
  t.n1 = rms_norm(x);
  t.q = t.n1 * w.wq;
  t.k = t.n1 * w.wk;
  t.v = t.n1 * w.wv;
  t.attn = masked_attention(t.q, t.k, t.v, cfg.heads, mask, table, cfg.rotation).output;
  t.h = x + t.attn * w.wo;
  t.n2 = rms_norm(t.h);
  t.hid = (t.n2 * w.w1).array().tanh().matrix();
  t.y = t.h + t.hid * w.w2;
  return t;
}

Matrix fill_uniform(Eigen::Index rows, Eigen::Index cols, Rng rng, double lo, double hi) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(lo, hi);
  return m;
}

Matrix scaled_uniform(Eigen::Index rows, Eigen::Index cols, Rng rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  return fill_uniform(rows, cols, rng, -bound, bound);
}

}  // namespace

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng rng, double lo, double hi) {
  return fill_uniform(rows, cols, rng, lo, hi);
}

AttentionResult masked_sdpa(const Matrix& q_rot, const Matrix& k_rot, const Matrix& v,
                            int heads, const AttentionMask& mask) {
  check_shapes(q_rot, k_rot, v, heads, mask);
  const Eigen::Index d = q_rot.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  AttentionResult res;
  res.output.resize(q_rot.rows(), q_rot.cols());
  res.weights.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const auto qh = q_rot.middleCols(h * d, d);
    const auto kh = k_rot.middleCols(h * d, d);
    Matrix a = masked_softmax_rows(qh * kh.transpose() * scale, mask);
    res.output.middleCols(h * d, d) = a * v.middleCols(h * d, d);
    res.weights.push_back(std::move(a));
  }
  return res;
}

namespace {

Matrix rope_rotate_heads(const Matrix& m, int heads, const PositionTable& table,
                         const RotationSpec& spec) {
  const Eigen::Index d = m.cols() / heads;
  Matrix out(m.rows(), m.cols());
  for (int h = 0; h < heads; ++h)
    out.middleCols(h * d, d) = rope_rotate(m.middleCols(h * d, d), table, spec);
  return out;
}

Matrix rope_unrotate_heads(const Matrix& m, int heads, const PositionTable& table,
                           const RotationSpec& spec) {
  const Eigen::Index d = m.cols() / heads;
  Matrix out(m.rows(), m.cols());
  for (int h = 0; h < heads; ++h)
    out.middleCols(h * d, d) = rope_unrotate(m.middleCols(h * d, d), table, spec);
  return out;
}

}  // namespace

AttentionResult masked_attention(const Matrix& q, const Matrix& k, const Matrix& v, int heads,
                                 const AttentionMask& mask, const PositionTable& table,
                                 const RotationSpec& spec) {
  check_shapes(q, k, v, heads, mask);
  if (q.cols() / heads != spec.head_dim)
    throw std::invalid_argument("per-head dim does not match rotation head_dim");
  return masked_sdpa(rope_rotate_heads(q, heads, table, spec),
                     rope_rotate_heads(k, heads, table, spec), v, heads, mask);
}

AttentionGrads masked_attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                                         int heads, const AttentionMask& mask,
                                         const PositionTable& table, const RotationSpec& spec,
                                         const Matrix& d_output) {
  check_shapes(q, k, v, heads, mask);
  if (d_output.rows() != q.rows() || d_output.cols() != q.cols())
    throw std::invalid_argument("d_output shape does not match q/k/v");
  const Eigen::Index d = q.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  const Matrix q_rot = rope_rotate_heads(q, heads, table, spec);
  const Matrix k_rot = rope_rotate_heads(k, heads, table, spec);

  Matrix dq_rot(q.rows(), q.cols()), dk_rot(q.rows(), q.cols()), dv(q.rows(), q.cols());
  for (int h = 0; h < heads; ++h) {
    const auto qh = q_rot.middleCols(h * d, d);
    const auto kh = k_rot.middleCols(h * d, d);
    const auto vh = v.middleCols(h * d, d);
    const auto go = d_output.middleCols(h * d, d);

    const Matrix a = masked_softmax_rows(qh * kh.transpose() * scale, mask);
    dv.middleCols(h * d, d) = a.transpose() * go;

    // Softmax backward; masked entries carry a == 0, so they stay zero.
    const Matrix da = go * vh.transpose();
    const Eigen::VectorXd row_dot = (da.array() * a.array()).rowwise().sum();
    const Matrix ds = (a.array() * (da.array().colwise() - row_dot.array())).matrix();

    dq_rot.middleCols(h * d, d) = ds * kh * scale;
    dk_rot.middleCols(h * d, d) = ds.transpose() * qh * scale;
  }

  AttentionGrads g;
  g.dq = rope_unrotate_heads(dq_rot, heads, table, spec);
  g.dk = rope_unrotate_heads(dk_rot, heads, table, spec);
  g.dv = std::move(dv);
  return g;
}

BlockWeights init_block_weights(const ModelConfig& cfg, const Rng& rng) {
  cfg.rotation.validate();
  const Eigen::Index dm = cfg.model_dim();
  const Eigen::Index hd = static_cast<Eigen::Index>(cfg.heads) * cfg.rotation.head_dim;
  const Eigen::Index hid = cfg.hidden_dim();
  BlockWeights w;
  w.wq = scaled_uniform(dm, hd, rng.stream("wq"));
  w.wk = scaled_uniform(dm, hd, rng.stream("wk"));
  w.wv = scaled_uniform(dm, hd, rng.stream("wv"));
  w.wo = scaled_uniform(hd, dm, rng.stream("wo"));
  w.w1 = scaled_uniform(dm, hid, rng.stream("w1"));
  w.w2 = scaled_uniform(hid, dm, rng.stream("w2"));
  return w;
}

std::vector<BlockWeights> init_model_weights(const ModelConfig& cfg, int num_blocks,
                                             const Rng& rng) {
  std::vector<BlockWeights> blocks;
  blocks.reserve(static_cast<std::size_t>(num_blocks));
  for (int b = 0; b < num_blocks; ++b)
    blocks.push_back(init_block_weights(cfg, rng.stream(static_cast<std::uint64_t>(b))));
  return blocks;
}

Matrix block_forward(const Matrix& x, const BlockWeights& w, const ModelConfig& cfg,
                     const AttentionMask& mask, const PositionTable& table) {
  return run_block(x, w, cfg, mask, table).y;
}

Matrix block_backward(const Matrix& x, const BlockWeights& w, const ModelConfig& cfg,
                      const AttentionMask& mask, const PositionTable& table,
                      const Matrix& dy) {
  const BlockTrace t = run_block(x, w, cfg, mask, table);

  // y = h + tanh(n2 * w1) * w2
  const Matrix dhid = dy * w.w2.transpose();
  const Matrix dpre = (dhid.array() * (1.0 - t.hid.array().square())).matrix();
  const Matrix dn2 = dpre * w.w1.transpose();
  const Matrix dh = dy + rms_norm_backward(t.h, dn2);

  // h = x + attn * wo
  const Matrix dattn = dh * w.wo.transpose();
  const AttentionGrads ag = masked_attention_backward(t.q, t.k, t.v, cfg.heads, mask, table,
                                                      cfg.rotation, dattn);
  const Matrix dn1 =
      ag.dq * w.wq.transpose() + ag.dk * w.wk.transpose() + ag.dv * w.wv.transpose();
  return dh + rms_norm_backward(x, dn1);
}

Matrix model_forward(const Matrix& x, const std::vector<BlockWeights>& blocks,
                     const ModelConfig& cfg, const BlockSchedule& schedule,
                     const AttentionMask& cla, const AttentionMask& ica,
                     const PositionTable& table, const TokenSequence& seq) {
  if (schedule.num_blocks() != static_cast<int>(blocks.size()))
    throw std::invalid_argument("schedule covers " + std::to_string(schedule.num_blocks()) +
                                " blocks but " + std::to_string(blocks.size()) +
                                " weight blocks were given");
  if (x.rows() != seq.size())
    throw std::invalid_argument("token count does not match the sequence");

  Matrix cur = x;
  for (int b = 0; b < schedule.num_blocks(); ++b) {
    const AttentionMask& mask = schedule.mask_for(b) == MaskKind::ICA ? ica : cla;
    cur = block_forward(cur, blocks[static_cast<std::size_t>(b)], cfg, mask, table);
  }
  const auto [nb, ne] = seq.segment_range(TokenRole::noise_image);
  return cur.middleRows(nb, ne - nb);
}

ProbeReport isolation_probe(const Scene& scene, const ModelConfig& cfg, std::uint64_t seed) {
  if (scene.instance_count() < 2)
    throw std::invalid_argument("isolation probe needs at least 2 instances");

  const TokenSequence seq = build_token_sequence(scene);
  const PositionTable table = assign_indices(scene, seq);
  const AttentionMask ica = build_ica_mask(scene, seq);
  const auto [noise_b, noise_e] = seq.segment_range(TokenRole::noise_image);

  ProbeReport report;
  report.seed = seed;

  // First noise token inside exactly one box, and first background token.
  for (Eigen::Index t = noise_b; t < noise_e; ++t) {
    const Token& tok = seq[t];
    const auto members = box_membership(scene, tok.i, tok.j);
    if (members.size() == 1 && report.query_token < 0) {
      report.query_token = t;
      report.query_instance = members.front();
    }
    if (members.empty() && report.background_token < 0) report.background_token = t;
  }
  if (report.query_token < 0)
    throw std::invalid_argument("no noise token lies inside exactly one box");
  if (report.background_token < 0)
    throw std::invalid_argument("no background noise token outside every box");

  const Rng rng = Rng(seed);
  const BlockWeights weights = init_block_weights(cfg, rng.stream("probe-weights"));
  const Matrix x = random_matrix(seq.size(), cfg.model_dim(), rng.stream("probe-embeddings"));
  const Matrix base = block_forward(x, weights, cfg, ica, table);

  const int n = report.query_instance;
  const BBox& own_box = scene.instance(n).bbox;

  auto perturbed_delta = [&](const std::vector<std::pair<Eigen::Index, Eigen::Index>>& ranges,
                             Eigen::Index read_row, Rng prng) {
    Matrix x2 = x;
    for (const auto& [b, e] : ranges)
      if (e > b)
        x2.middleRows(b, e - b) +=
            random_matrix(e - b, cfg.model_dim(), prng.stream("delta"), -0.5, 0.5);
    const Matrix out = block_forward(x2, weights, cfg, ica, table);
    return (out.row(read_row) - base.row(read_row)).cwiseAbs().maxCoeff();
  };

  {  // references of every other instance must be invisible to the query
    std::vector<std::pair<Eigen::Index, Eigen::Index>> ranges;
    for (const Instance& inst : scene.instances())
      if (inst.id != n) ranges.push_back(seq.segment_range(TokenRole::reference, inst.id));
    const double d = perturbed_delta(ranges, report.query_token, rng.stream("foreign"));
    report.checks.push_back({"foreign_refs_frozen", d == 0.0, d, -1, -1});
  }
  {  // noise tokens outside the query's own box must be invisible
    std::vector<std::pair<Eigen::Index, Eigen::Index>> ranges;
    for (Eigen::Index t = noise_b; t < noise_e; ++t) {
      const Token& tok = seq[t];
      if (!own_box.contains(tok.i, tok.j)) ranges.push_back({t, t + 1});
    }
    const double d = perturbed_delta(ranges, report.query_token, rng.stream("outside"));
    report.checks.push_back({"outside_noise_frozen", d == 0.0, d, -1, -1});
  }
  {  // the matching reference must move the query for nearly every seed
    const auto range = seq.segment_range(TokenRole::reference, n);
    const int total = 5;
    int nonzero = 0;
    double max_delta = 0.0;
    for (int s = 0; s < total; ++s) {
      const double d = perturbed_delta({range}, report.query_token,
                                       rng.stream("matching").stream(
                                           static_cast<std::uint64_t>(s)));
      if (d != 0.0) ++nonzero;
      max_delta = std::max(max_delta, d);
    }
    report.checks.push_back({"matching_ref_responds", nonzero >= 4, max_delta, nonzero, total});
  }
  {  // background rows keep the CLA fallback, so the layout stays visible
    const auto range = seq.segment_range(TokenRole::layout);
    const double d = perturbed_delta({range}, report.background_token, rng.stream("layout"));
    report.checks.push_back({"layout_visible_to_background", d != 0.0, d, -1, -1});
  }
  return report;
}

std::string grad_target_name(GradTarget t) {
  switch (t) {
    case GradTarget::masked_attention: return "masked_attention";
    case GradTarget::block_forward: return "block_forward";
  }
  return "?";
}

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

GradCheckReport grad_check(GradTarget target, const Scene& scene, const ModelConfig& cfg,
                           std::uint64_t seed, double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-3))
    throw std::invalid_argument("eps must lie in [1e-6, 1e-3]");
  cfg.rotation.validate();

  const TokenSequence seq = build_token_sequence(scene);
  const PositionTable table = assign_indices(scene, seq);
  const AttentionMask mask = build_ica_mask(scene, seq);
  const Eigen::Index tokens = seq.size();
  const Eigen::Index dim = cfg.model_dim();

  const Rng rng = Rng(seed);
  const Matrix upstream = random_matrix(tokens, dim, rng.stream("upstream"));

  GradCheckReport report;
  report.target = target;
  report.eps = eps;
  report.seed = seed;

  // Inputs flattened into one parameter vector; loss is <upstream, f(inputs)>.
  std::vector<Matrix> inputs;
  std::function<double(const std::vector<Matrix>&)> loss;
  std::vector<Matrix> analytic;

  if (target == GradTarget::masked_attention) {
    inputs = {random_matrix(tokens, dim, rng.stream("q")),
              random_matrix(tokens, dim, rng.stream("k")),
              random_matrix(tokens, dim, rng.stream("v"))};
    loss = [&](const std::vector<Matrix>& in) {
      return (masked_attention(in[0], in[1], in[2], cfg.heads, mask, table, cfg.rotation)
                  .output.array() *
              upstream.array())
          .sum();
    };
    const AttentionGrads g = masked_attention_backward(inputs[0], inputs[1], inputs[2],
                                                       cfg.heads, mask, table, cfg.rotation,
                                                       upstream);
    analytic = {g.dq, g.dk, g.dv};
  } else {
    const BlockWeights w = init_block_weights(cfg, rng.stream("weights"));
    inputs = {random_matrix(tokens, dim, rng.stream("x"))};
    loss = [&, w](const std::vector<Matrix>& in) {
      return (block_forward(in[0], w, cfg, mask, table).array() * upstream.array()).sum();
    };
    analytic = {block_backward(inputs[0], w, cfg, mask, table, upstream)};
  }

  double max_err = 0.0;
  bool finite = true;
  Eigen::Index params = 0;
  for (std::size_t which = 0; which < inputs.size(); ++which) {
    Matrix& m = inputs[which];
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double saved = m(r, c);
        m(r, c) = saved + eps;
        const double up = loss(inputs);
        m(r, c) = saved - eps;
        const double down = loss(inputs);
        m(r, c) = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double exact = analytic[which](r, c);
        if (!std::isfinite(numeric) || !std::isfinite(exact)) finite = false;
        max_err = std::max(max_err, rel_err(exact, numeric));
        ++params;
      }
  }
  report.param_count = params;
  report.max_rel_err = max_err;
  report.finite = finite;
  return report;
}

}  // namespace contextgen
