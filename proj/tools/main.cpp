// contextgen CLI: scene ingestion, mask/index emission, compositing, model
// probes and spatial metrics, with reproducible seeded runs. Every
// subcommand writes its artifacts plus a manifest.json carrying content
// hashes; identical config and seed give byte-identical artifacts.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "contextgen/artifact_io.hpp"
#include "contextgen/attention.hpp"
#include "contextgen/compositor.hpp"
#include "contextgen/json_io.hpp"
#include "contextgen/masks.hpp"
#include "contextgen/metrics.hpp"
#include "contextgen/position.hpp"
#include "contextgen/rng.hpp"
#include "contextgen/scene.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace contextgen;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

int log_level() {
  static const int level = [] {
    const char* env = std::getenv("CONTEXTGEN_LOG");
    if (!env) return 0;
    const std::string v(env);
    if (v == "debug") return 2;
    if (v == "info") return 1;
    return 0;
  }();
  return level;
}

void log_info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "[contextgen] " << msg << "\n";
}

struct RunConfig {
  std::string scene_path;
  std::string cases_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int blocks = 57;
  std::vector<std::string> ica_groups = {"MID"};
  int heads = 2;
  int head_dim = 64;
  std::vector<int> dim_split = {8, 28, 28};
  double theta = 10000.0;
  double alpha = 1.0;
  double beta = 1.0;
  double lambda = 0.0;
  double iou_threshold = 0.5;
  double eps = 1e-4;
};

std::set<BlockGroup> parse_groups(const std::vector<std::string>& names) {
  std::set<BlockGroup> groups;
  for (const std::string& name : names) {
    if (name == "none") {
      if (names.size() != 1)
        throw std::invalid_argument("'none' cannot be combined with other groups");
      return {};
    }
    groups.insert(block_group_from_name(name));
  }
  return groups;
}

ModelConfig model_config(const RunConfig& cfg) {
  if (cfg.dim_split.size() != 3)
    throw std::invalid_argument("--dim-split needs exactly 3 values");
  ModelConfig mc;
  mc.heads = cfg.heads;
  mc.rotation = {cfg.head_dim, cfg.dim_split[0], cfg.dim_split[1], cfg.dim_split[2],
                 cfg.theta};
  mc.rotation.validate();
  return mc;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Collects artifacts for the manifest. Paths inside the manifest are
/// relative to the output dir, and the config omits the dir itself, so
/// two runs into different dirs stay byte-identical.
class ArtifactSink {
 public:
  explicit ArtifactSink(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
  }

  fs::path path(const std::string& name) const { return dir_ / name; }

  void add_text(const std::string& name, const std::string& contents) {
    write_text(dir_ / name, contents);
    names_.push_back(name);
  }
  void add_json(const std::string& name, const json& j) { add_text(name, j.dump(2) + "\n"); }
  void note(const std::string& name) { names_.push_back(name); }

  void write_manifest(const std::string& command, const json& config, std::uint64_t seed) {
    json m;
    m["command"] = command;
    m["config"] = config;
    m["seed"] = seed;
    m["version"] = kVersion;
    m["outputs"] = json::array();
    for (const std::string& name : names_) {
      m["outputs"].push_back(
          {{"path", name}, {"fnv1a64", hash_hex(fnv1a64_file(dir_ / name))}});
    }
    write_text(dir_ / "manifest.json", m.dump(2) + "\n");
    log_info("wrote manifest with " + std::to_string(names_.size()) + " artifacts");
  }

 private:
  fs::path dir_;
  std::vector<std::string> names_;
};

std::string indices_tsv(const TokenSequence& seq, const PositionTable& table) {
  std::ostringstream out;
  out << "token_index\trole\tm\ti\tj\n";
  for (Eigen::Index k = 0; k < seq.size(); ++k) {
    const Token& tok = seq[k];
    const PositionIndex& p = table[k];
    out << k << "\t" << role_name(tok.role, tok.ref_id) << "\t" << p.m << "\t" << p.i << "\t"
        << p.j << "\n";
  }
  return out.str();
}

std::vector<std::uint8_t> mask_pixels(const AttentionMask& mask) {
  const Eigen::Index n = mask.size();
  std::vector<std::uint8_t> px(static_cast<std::size_t>(n) * n);
  for (Eigen::Index q = 0; q < n; ++q)
    for (Eigen::Index k = 0; k < n; ++k)
      px[static_cast<std::size_t>(q) * n + k] = mask.allowed(q, k) ? 255 : 0;
  return px;
}

int cmd_indices(const RunConfig& cfg, ArtifactSink& sink) {
  const Scene scene = load_scene(cfg.scene_path);
  const TokenSequence seq = build_token_sequence(scene);
  const PositionTable table = assign_indices(scene, seq);
  sink.add_text("indices.tsv", indices_tsv(seq, table));
  return 0;
}

int cmd_masks(const RunConfig& cfg, ArtifactSink& sink) {
  const Scene scene = load_scene(cfg.scene_path);
  const TokenSequence seq = build_token_sequence(scene);
  const AttentionMask cla = build_cla_mask(scene, seq);
  const AttentionMask ica = build_ica_mask(scene, seq);

  const int n = static_cast<int>(seq.size());
  write_pgm(sink.path("cla.pgm"), n, n, mask_pixels(cla));
  sink.note("cla.pgm");
  write_pgm(sink.path("ica.pgm"), n, n, mask_pixels(ica));
  sink.note("ica.pgm");

  std::ostringstream out;
  out << "mask\tquery_segment\tkey_segment\tdensity\n";
  for (const auto& [name, mask] :
       {std::pair<const char*, const AttentionMask*>{"cla", &cla}, {"ica", &ica}}) {
    for (const MaskDensity& d : mask_stats(*mask, seq))
      out << name << "\t" << d.query.name() << "\t" << d.key.name() << "\t"
          << format_double(d.density) << "\n";
  }
  sink.add_text("mask_stats.tsv", out.str());
  return 0;
}

int cmd_compose(const RunConfig& cfg, ArtifactSink& sink) {
  const Scene scene = load_scene(cfg.scene_path);
  const LayerParams params{cfg.alpha, cfg.beta, cfg.lambda, cfg.seed};
  const LayerOrder order = layering_order(scene, params);
  const CompositeResult result = composite(scene, order);
  const int n = scene.instance_count();

  json jorder;
  jorder["bottom_to_top"] = order.bottom_to_top;
  jorder["params"] = {{"alpha", params.alpha},
                      {"beta", params.beta},
                      {"lambda", params.lambda},
                      {"seed", params.seed}};
  jorder["scores"] = json::array();
  for (int id = 1; id <= n; ++id)
    jorder["scores"].push_back(
        {{"id", id}, {"score", order.scores[static_cast<std::size_t>(id) - 1]}});
  jorder["constraints"] = json::array();
  for (const LayerConstraint& c : order.constraints)
    jorder["constraints"].push_back({{"above", c.above}, {"below", c.below}});
  sink.add_json("order.json", jorder);

  std::vector<std::uint8_t> gray(result.ownership.cells.size());
  for (std::size_t i = 0; i < gray.size(); ++i) {
    const int owner = result.ownership.cells[i];
    gray[i] = owner == 0 ? 0 : static_cast<std::uint8_t>(owner * 255 / n);
  }
  write_pgm(sink.path("ownership.pgm"), scene.canvas_w(), scene.canvas_h(), gray);
  sink.note("ownership.pgm");

  std::vector<std::array<std::uint8_t, 3>> rgb(result.ownership.cells.size());
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    const int owner = result.ownership.cells[i];
    rgb[i] = owner == 0 ? std::array<std::uint8_t, 3>{255, 255, 255}
                        : instance_color(owner, n);
  }
  write_ppm(sink.path("preview.ppm"), scene.canvas_w(), scene.canvas_h(), rgb);
  sink.note("preview.ppm");

  std::ostringstream occ;
  occ << "instance_id\tocclusion_ratio\n";
  for (int id = 1; id <= n; ++id)
    occ << id << "\t" << format_double(result.occlusion[static_cast<std::size_t>(id) - 1])
        << "\n";
  sink.add_text("occlusion.tsv", occ.str());
  return 0;
}

int cmd_forward(const RunConfig& cfg, ArtifactSink& sink) {
  const Scene scene = load_scene(cfg.scene_path);
  const ModelConfig mc = model_config(cfg);
  const TokenSequence seq = build_token_sequence(scene);
  const PositionTable table = assign_indices(scene, seq);
  const AttentionMask cla = build_cla_mask(scene, seq);
  const AttentionMask ica = build_ica_mask(scene, seq);
  const BlockSchedule schedule = build_schedule(cfg.blocks, parse_groups(cfg.ica_groups));

  const Rng rng(cfg.seed);
  const auto blocks = init_model_weights(mc, cfg.blocks, rng.stream("weights"));
  const Matrix x = random_matrix(seq.size(), mc.model_dim(), rng.stream("embeddings"));
  log_info("running " + std::to_string(cfg.blocks) + " blocks over " +
           std::to_string(seq.size()) + " tokens");
  const Matrix out = model_forward(x, blocks, mc, schedule, cla, ica, table, seq);

  std::ostringstream tsv;
  tsv << "i\tj";
  for (int c = 0; c < mc.model_dim(); ++c) tsv << "\tc" << c;
  tsv << "\n";
  const auto [nb, ne] = seq.segment_range(TokenRole::noise_image);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const Token& tok = seq[nb + r];
    tsv << tok.i << "\t" << tok.j;
    for (Eigen::Index c = 0; c < out.cols(); ++c) tsv << "\t" << format_double(out(r, c));
    tsv << "\n";
  }
  const std::string tsv_str = tsv.str();
  sink.add_text("noise_output.tsv", tsv_str);

  json report;
  report["blocks"] = cfg.blocks;
  report["dim_split"] = cfg.dim_split;
  report["head_dim"] = cfg.head_dim;
  report["heads"] = cfg.heads;
  report["hidden_dim"] = mc.hidden_dim();
  report["model_dim"] = mc.model_dim();
  report["theta"] = cfg.theta;
  report["tokens"] = seq.size();
  report["noise_tokens"] = out.rows();
  report["seed"] = cfg.seed;
  const auto& ranges = schedule.group_ranges();
  report["schedule"] = {{"fr", {ranges[0].first, ranges[0].second}},
                        {"mid", {ranges[1].first, ranges[1].second}},
                        {"bk", {ranges[2].first, ranges[2].second}},
                        {"ica_groups", cfg.ica_groups}};
  report["output_fnv1a64"] = hash_hex(fnv1a64(tsv_str));
  sink.add_json("forward.json", report);
  return 0;
}

int cmd_probe(const RunConfig& cfg, ArtifactSink& sink) {
  const Scene scene = load_scene(cfg.scene_path);
  const ProbeReport report = isolation_probe(scene, model_config(cfg), cfg.seed);

  json j;
  j["seed"] = report.seed;
  j["query_token"] = report.query_token;
  j["query_instance"] = report.query_instance;
  j["background_token"] = report.background_token;
  j["all_pass"] = report.all_pass();
  j["checks"] = json::array();
  for (const ProbeCheck& c : report.checks) {
    json jc = {{"name", c.name}, {"pass", c.pass}, {"max_abs_delta", c.max_abs_delta}};
    if (c.total_seeds >= 0) {
      jc["nonzero_seeds"] = c.nonzero_seeds;
      jc["total_seeds"] = c.total_seeds;
    }
    j["checks"].push_back(std::move(jc));
  }
  sink.add_json("probe.json", j);
  return report.all_pass() ? 0 : kExitNumeric;
}

int cmd_gradcheck(const RunConfig& cfg, ArtifactSink& sink) {
  const Scene scene = cfg.scene_path.empty()
                          ? Scene(2, 2, 2, {{1, {0, 0, 1, 1}, 1, 1, std::nullopt}})
                          : load_scene(cfg.scene_path);
  const ModelConfig mc = model_config(cfg);
  constexpr double kTol = 1e-4;

  json j;
  j["eps"] = cfg.eps;
  j["tolerance"] = kTol;
  j["results"] = json::array();
  bool all_pass = true;
  for (GradTarget target : {GradTarget::masked_attention, GradTarget::block_forward}) {
    const GradCheckReport r = grad_check(target, scene, mc, cfg.seed, cfg.eps);
    all_pass = all_pass && r.pass(kTol);
    j["results"].push_back({{"target", grad_target_name(target)},
                            {"seed", r.seed},
                            {"param_count", r.param_count},
                            {"max_rel_err", r.max_rel_err},
                            {"finite", r.finite},
                            {"pass", r.pass(kTol)}});
    log_info(grad_target_name(target) +
             " max rel err: " + format_double(r.max_rel_err));
  }
  j["all_pass"] = all_pass;
  sink.add_json("gradcheck.json", j);
  return all_pass ? 0 : kExitNumeric;
}

int cmd_metrics(const RunConfig& cfg, ArtifactSink& sink) {
  const std::string path = !cfg.cases_path.empty() ? cfg.cases_path : cfg.scene_path;
  if (path.empty()) throw std::invalid_argument("metrics needs --cases (or --scene) PATH");
  const std::vector<EvalCase> cases = load_eval_cases(path);
  if (cases.empty()) throw std::invalid_argument("no eval cases given");
  const SuccessRates rates = success_rates(cases, cfg.iou_threshold);

  std::ostringstream out;
  out << "case_id\tmiou\tinstance_ious\tisr\tsr\n";
  double miou_sum = 0.0;
  for (const EvalCase& c : cases) {
    const std::vector<double> ious = instance_ious(c);
    long long ok = 0;
    for (double v : ious)
      if (v >= cfg.iou_threshold) ++ok;
    std::string joined;
    for (std::size_t i = 0; i < ious.size(); ++i)
      joined += (i ? "," : "") + format_double(ious[i]);
    const double m = miou(c);
    miou_sum += m;
    out << c.id << "\t" << format_double(m) << "\t" << joined << "\t"
        << format_double(static_cast<double>(ok) / static_cast<double>(ious.size())) << "\t"
        << (ok == static_cast<long long>(ious.size()) ? 1 : 0) << "\n";
  }
  out << "overall\t" << format_double(miou_sum / static_cast<double>(cases.size())) << "\t-\t"
      << format_double(rates.instance_rate) << "\t" << format_double(rates.case_rate) << "\n";

  const std::string tsv = out.str();
  std::cout << tsv;
  sink.add_text("metrics.tsv", tsv);
  return 0;
}

json config_json(const std::string& command, const RunConfig& cfg) {
  json j;
  j["scene"] = cfg.scene_path;
  j["seed"] = cfg.seed;
  if (command == "forward") {
    j["blocks"] = cfg.blocks;
    j["ica_groups"] = cfg.ica_groups;
  }
  if (command == "forward" || command == "probe" || command == "gradcheck") {
    j["heads"] = cfg.heads;
    j["head_dim"] = cfg.head_dim;
    j["dim_split"] = cfg.dim_split;
    j["theta"] = cfg.theta;
  }
  if (command == "gradcheck") j["eps"] = cfg.eps;
  if (command == "compose") {
    j["alpha"] = cfg.alpha;
    j["beta"] = cfg.beta;
    j["lambda"] = cfg.lambda;
  }
  if (command == "metrics") {
    j["cases"] = !cfg.cases_path.empty() ? cfg.cases_path : cfg.scene_path;
    j["iou_threshold"] = cfg.iou_threshold;
  }
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ContextGen attention machinery: scenes, masks, indices, probes"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string command;

  auto add_common = [&](CLI::App* sub, bool scene_required) {
    auto* scene = sub->add_option("--scene", cfg.scene_path, "scene JSON path");
    if (scene_required) scene->required();
    sub->add_option("--out", cfg.out_dir, "output directory")->required();
    sub->add_option("--seed", cfg.seed, "run seed (u64)");
    return sub;
  };
  auto add_model = [&](CLI::App* sub) {
    sub->add_option("--heads", cfg.heads, "attention heads");
    sub->add_option("--head-dim", cfg.head_dim, "per-head dim (even)");
    sub->add_option("--dim-split", cfg.dim_split, "RoPE split d_m,d_i,d_j")
        ->delimiter(',')
        ->expected(3);
    sub->add_option("--theta", cfg.theta, "RoPE base frequency");
  };

  CLI::App* c_compose = add_common(app.add_subcommand("compose", "layer + composite a scene"),
                                   true);
  c_compose->add_option("--alpha", cfg.alpha, "area weight");
  c_compose->add_option("--beta", cfg.beta, "isolation weight");
  c_compose->add_option("--lambda", cfg.lambda, "random-factor weight");

  add_common(app.add_subcommand("masks", "emit CLA and ICA masks"), true);
  add_common(app.add_subcommand("indices", "emit the ternary position table"), true);

  CLI::App* c_forward =
      add_common(app.add_subcommand("forward", "run the block stack"), true);
  c_forward->add_option("--blocks", cfg.blocks, "DiT block count");
  c_forward->add_option("--ica-groups", cfg.ica_groups, "groups using ICA (FR MID BK, or none)")
      ->delimiter(',');
  add_model(c_forward);

  CLI::App* c_probe = add_common(app.add_subcommand("probe", "isolation probe"), true);
  add_model(c_probe);

  CLI::App* c_grad =
      add_common(app.add_subcommand("gradcheck", "finite-difference gradient check"), false);
  c_grad->add_option("--eps", cfg.eps, "finite-difference step, in [1e-6, 1e-3]");
  add_model(c_grad);

  CLI::App* c_metrics = app.add_subcommand("metrics", "IoU / mIoU / success rates");
  c_metrics->add_option("--cases", cfg.cases_path, "eval-case JSON path");
  c_metrics->add_option("--scene", cfg.scene_path, "alias for --cases");
  c_metrics->add_option("--out", cfg.out_dir, "output directory")->required();
  c_metrics->add_option("--seed", cfg.seed, "run seed (unused, kept for uniform manifests)");
  c_metrics->add_option("--iou-threshold", cfg.iou_threshold, "success threshold in (0,1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    json err = {{"error", {{"type", "usage"}, {"message", e.what()}}}};
    std::cout << err.dump(2) << "\n";
    return kExitValidation;
  }

  command = app.get_subcommands().front()->get_name();
  try {
    ArtifactSink sink{fs::path(cfg.out_dir)};
    int rc = 0;
    if (command == "compose") rc = cmd_compose(cfg, sink);
    else if (command == "masks") rc = cmd_masks(cfg, sink);
    else if (command == "indices") rc = cmd_indices(cfg, sink);
    else if (command == "forward") rc = cmd_forward(cfg, sink);
    else if (command == "probe") rc = cmd_probe(cfg, sink);
    else if (command == "gradcheck") rc = cmd_gradcheck(cfg, sink);
    else if (command == "metrics") rc = cmd_metrics(cfg, sink);
    sink.write_manifest(command, config_json(command, cfg), cfg.seed);
    if (rc == kExitNumeric) {
      json err = {{"error",
                   {{"type", "numeric"},
                    {"message", command + " checks failed; see the report in the output dir"}}}};
      std::cout << err.dump(2) << "\n";
    }
    return rc;
  } catch (const std::exception& e) {
    json err = {{"error", {{"type", "validation"}, {"message", e.what()}}}};
    std::cout << err.dump(2) << "\n";
    return kExitValidation;
  }
}
