#include "contextgen/json_io.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace contextgen {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

int require_int(const json& j, const std::string& ctx) {
  if (!j.is_number_integer()) fail(ctx + " must be an integer");
  return j.get<int>();
}

std::array<int, 4> require_int4(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.size() != 4) fail(ctx + " must be an array of 4 integers");
  return {require_int(j[0], ctx), require_int(j[1], ctx), require_int(j[2], ctx),
          require_int(j[3], ctx)};
}

std::array<int, 2> require_int2(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.size() != 2) fail(ctx + " must be an array of 2 integers");
  return {require_int(j[0], ctx), require_int(j[1], ctx)};
}

json parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    fail(path.string() + ": " + e.what());
  }
  return j;
}

}  // namespace

Scene scene_from_json(const json& j) {
  if (!j.is_object()) fail("scene must be a JSON object");
  if (!j.contains("canvas")) fail("scene is missing 'canvas'");
  if (!j.contains("text_len")) fail("scene is missing 'text_len'");
  const auto [cw, ch] = require_int2(j.at("canvas"), "'canvas'");
  const int text_len = require_int(j.at("text_len"), "'text_len'");

  std::vector<Instance> instances;
  if (j.contains("instances")) {
    const json& arr = j.at("instances");
    if (!arr.is_array()) fail("'instances' must be an array");
    for (const json& ji : arr) {
      Instance inst;
      if (!ji.is_object() || !ji.contains("id")) fail("each instance needs an 'id'");
      inst.id = require_int(ji.at("id"), "instance 'id'");
      const std::string tag = "instance id " + std::to_string(inst.id);
      if (!ji.contains("bbox") || !ji.contains("ref")) fail(tag + ": needs 'bbox' and 'ref'");
      const auto [x, y, w, h] = require_int4(ji.at("bbox"), tag + " 'bbox'");
      inst.bbox = {x, y, w, h};
      const auto [rw, rh] = require_int2(ji.at("ref"), tag + " 'ref'");
      inst.ref_w = rw;
      inst.ref_h = rh;
      if (ji.contains("occupancy") && !ji.at("occupancy").is_null()) {
        const json& occ = ji.at("occupancy");
        if (!occ.is_array() ||
            occ.size() != static_cast<std::size_t>(inst.bbox.w) * inst.bbox.h)
          fail(tag + ": occupancy must be a row-major array of bbox.w * bbox.h cells");
        Bitmap bm(inst.bbox.w, inst.bbox.h);
        for (int dy = 0; dy < inst.bbox.h; ++dy)
          for (int dx = 0; dx < inst.bbox.w; ++dx) {
            const int v = require_int(occ[static_cast<std::size_t>(dy) * inst.bbox.w + dx],
                                      tag + " occupancy cell");
            if (v != 0 && v != 1) fail(tag + ": occupancy cells must be 0 or 1");
            bm.set(dx, dy, v == 1);
          }
        inst.occupancy = std::move(bm);
      }
      instances.push_back(std::move(inst));
    }
  }
  return Scene(cw, ch, text_len, std::move(instances));
}

Scene load_scene(const std::filesystem::path& path) { return scene_from_json(parse_file(path)); }

json scene_to_json(const Scene& scene) {
  json j;
  j["canvas"] = {scene.canvas_w(), scene.canvas_h()};
  j["text_len"] = scene.text_len();
  j["instances"] = json::array();
  for (const Instance& inst : scene.instances()) {
    json ji;
    ji["id"] = inst.id;
    ji["bbox"] = {inst.bbox.x, inst.bbox.y, inst.bbox.w, inst.bbox.h};
    ji["ref"] = {inst.ref_w, inst.ref_h};
    if (inst.occupancy) {
      json occ = json::array();
      for (int dy = 0; dy < inst.occupancy->height(); ++dy)
        for (int dx = 0; dx < inst.occupancy->width(); ++dx)
          occ.push_back(inst.occupancy->at(dx, dy) ? 1 : 0);
      ji["occupancy"] = std::move(occ);
    }
    j["instances"].push_back(std::move(ji));
  }
  return j;
}

std::vector<EvalCase> eval_cases_from_json(const json& j) {
  if (!j.is_array()) fail("eval cases must be a JSON array");
  std::vector<EvalCase> cases;
  for (const json& jc : j) {
    EvalCase c;
    if (!jc.is_object() || !jc.contains("id")) fail("each case needs an 'id'");
    c.id = jc.at("id").is_string() ? jc.at("id").get<std::string>()
                                   : std::to_string(require_int(jc.at("id"), "case 'id'"));
    if (!jc.contains("instances") || !jc.at("instances").is_array() ||
        jc.at("instances").empty())
      fail("case '" + c.id + "' needs a non-empty 'instances' array");
    for (const json& ji : jc.at("instances")) {
      EvalInstance inst;
      inst.id = require_int(ji.at("id"), "case '" + c.id + "' instance 'id'");
      const std::string tag = "case '" + c.id + "' instance " + std::to_string(inst.id);
      const auto [tx, ty, tw, th] = require_int4(ji.at("target"), tag + " 'target'");
      const auto [px, py, pw, ph] = require_int4(ji.at("pred"), tag + " 'pred'");
      inst.target = {tx, ty, tw, th};
      inst.predicted = {px, py, pw, ph};
      if (inst.target.w < 1 || inst.target.h < 1 || inst.predicted.w < 1 ||
          inst.predicted.h < 1)
        fail(tag + ": box extents must be >= 1");
      c.instances.push_back(inst);
    }
    cases.push_back(std::move(c));
  }
  return cases;
}

std::vector<EvalCase> load_eval_cases(const std::filesystem::path& path) {
  return eval_cases_from_json(parse_file(path));
}

}  // namespace contextgen
