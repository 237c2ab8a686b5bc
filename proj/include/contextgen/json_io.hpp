#pragma once

#include <filesystem>
#include <nlohmann/json_fwd.hpp>
#include <vector>

#include "contextgen/metrics.hpp"
#include "contextgen/scene.hpp"

namespace contextgen {

/// Scene schema:
///   {"canvas": [w, h], "text_len": int,
///    "instances": [{"id": int, "bbox": [x, y, w, h], "ref": [w, h],
///                   "occupancy": optional row-major 0/1 array}]}
/// Ids must be 1..N in listed order. Throws std::invalid_argument with a
/// message naming the offending field or id.
Scene scene_from_json(const nlohmann::json& j);
Scene load_scene(const std::filesystem::path& path);
nlohmann::json scene_to_json(const Scene& scene);

/// Eval cases: a JSON list of
///   {"id": string, "instances": [{"id": int, "target": [x, y, w, h],
///                                 "pred": [x, y, w, h]}]}
std::vector<EvalCase> eval_cases_from_json(const nlohmann::json& j);
std::vector<EvalCase> load_eval_cases(const std::filesystem::path& path);

}  // namespace contextgen
