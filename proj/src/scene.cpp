#include "contextgen/scene.hpp"

#include <algorithm>
#include <stdexcept>

namespace contextgen {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

}  // namespace

Scene::Scene(int canvas_w, int canvas_h, int text_len, std::vector<Instance> instances)
    : canvas_w_(canvas_w), canvas_h_(canvas_h), text_len_(text_len),
      instances_(std::move(instances)) {
  if (canvas_w_ < 1 || canvas_h_ < 1)
    fail("canvas dims must be >= 1, got " + std::to_string(canvas_w_) + "x" +
         std::to_string(canvas_h_));
  if (text_len_ < 0) fail("text_len must be >= 0, got " + std::to_string(text_len_));

  for (std::size_t k = 0; k < instances_.size(); ++k) {
    const Instance& inst = instances_[k];
    const std::string tag = "instance id " + std::to_string(inst.id);
    if (inst.id != static_cast<int>(k) + 1)
      fail("instance ids must be 1..N in listed order: expected " +
           std::to_string(k + 1) + ", found " + std::to_string(inst.id));
    if (inst.bbox.w < 1 || inst.bbox.h < 1)
      fail(tag + ": bbox extents must be >= 1");
    if (inst.bbox.x < 0 || inst.bbox.y < 0 || inst.bbox.x + inst.bbox.w > canvas_w_ ||
        inst.bbox.y + inst.bbox.h > canvas_h_)
      fail(tag + ": bbox lies outside the canvas");
    if (inst.ref_w < 1 || inst.ref_h < 1)
      fail(tag + ": reference dims must be >= 1");
    if (inst.occupancy &&
        (inst.occupancy->width() != inst.bbox.w || inst.occupancy->height() != inst.bbox.h))
      fail(tag + ": occupancy dims must equal the bbox extents");
  }
}

const Instance& Scene::instance(int id) const {
  if (id < 1 || id > instance_count())
    throw std::out_of_range("no instance with id " + std::to_string(id));
  return instances_[static_cast<std::size_t>(id) - 1];
}

std::string role_name(TokenRole role, int ref_id) {
  switch (role) {
    case TokenRole::text: return "text";
    case TokenRole::noise_image: return "noise_image";
    case TokenRole::layout: return "layout";
    case TokenRole::reference: return "ref_" + std::to_string(ref_id);
  }
  return "?";
}

const Token& TokenSequence::at(Eigen::Index k) const {
  if (k < 0 || k >= size())
    throw std::out_of_range("token index " + std::to_string(k) + " out of range [0, " +
                            std::to_string(size()) + ")");
  return tokens_[static_cast<std::size_t>(k)];
}

std::pair<Eigen::Index, Eigen::Index> TokenSequence::segment_range(TokenRole role,
                                                                   int ref_id) const {
  switch (role) {
    case TokenRole::text: return {0, text_len_};
    case TokenRole::noise_image: return {text_len_, text_len_ + image_area_};
    case TokenRole::layout: return {text_len_ + image_area_, text_len_ + 2 * image_area_};
    case TokenRole::reference: {
      const int n = static_cast<int>(ref_offsets_.size()) - 1;
      if (ref_id < 1 || ref_id > n)
        throw std::out_of_range("no reference segment " + std::to_string(ref_id));
      return {ref_offsets_[static_cast<std::size_t>(ref_id) - 1],
              ref_offsets_[static_cast<std::size_t>(ref_id)]};
    }
  }
  throw std::invalid_argument("bad role");
}

TokenSequence build_token_sequence(const Scene& scene) {
  if (scene.text_len() == 0)
    throw std::invalid_argument("cannot build a token sequence with an empty text segment");

  TokenSequence seq;
  seq.text_len_ = scene.text_len();
  seq.image_area_ = scene.canvas_area();
  seq.tokens_.reserve(static_cast<std::size_t>(scene.text_len()) + 2 * scene.canvas_area());

  for (int t = 0; t < scene.text_len(); ++t)
    seq.tokens_.push_back({TokenRole::text, 0, 0, 0});

  auto push_grid = [&seq](TokenRole role, int ref_id, int w, int h) {
    for (int j = 0; j < h; ++j)
      for (int i = 0; i < w; ++i) seq.tokens_.push_back({role, ref_id, i, j});
  };
  push_grid(TokenRole::noise_image, 0, scene.canvas_w(), scene.canvas_h());
  push_grid(TokenRole::layout, 0, scene.canvas_w(), scene.canvas_h());

  for (const Instance& inst : scene.instances()) {
    seq.ref_offsets_.push_back(seq.size());
    push_grid(TokenRole::reference, inst.id, inst.ref_w, inst.ref_h);
  }
  seq.ref_offsets_.push_back(seq.size());
  return seq;
}

std::vector<int> box_membership(const Scene& scene, int i, int j) {
  if (i < 0 || j < 0 || i >= scene.canvas_w() || j >= scene.canvas_h())
    throw std::out_of_range("coordinate (" + std::to_string(i) + ", " + std::to_string(j) +
                            ") outside the canvas");
  std::vector<int> ids;
  for (const Instance& inst : scene.instances())
    if (inst.bbox.contains(i, j)) ids.push_back(inst.id);
  return ids;
}

Bitmap effective_area(const Scene& scene, const Instance& inst) {
  Bitmap area(scene.canvas_w(), scene.canvas_h());
  for (int dy = 0; dy < inst.bbox.h; ++dy)
    for (int dx = 0; dx < inst.bbox.w; ++dx) {
      const bool on = !inst.occupancy || inst.occupancy->at(dx, dy);
      if (on) area.set(inst.bbox.x + dx, inst.bbox.y + dy, true);
    }
  return area;
}

}  // namespace contextgen
