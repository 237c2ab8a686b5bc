#include "contextgen/position.hpp"

#include <stdexcept>
#include <string>

namespace contextgen {

const PositionIndex& PositionTable::at(Eigen::Index k) const {
  if (k < 0 || k >= size())
    throw std::out_of_range("position index " + std::to_string(k) + " out of range");
  return indices_[static_cast<std::size_t>(k)];
}

PositionTable assign_indices(const Scene& scene, const TokenSequence& seq) {
  PositionTable table;
  table.indices_.reserve(static_cast<std::size_t>(seq.size()));

  // Cumulative offsets over the conditioning images: the layout image is
  // conditioning image 1 (zero offset), references follow in order.
  table.offsets_.push_back({0, 0});
  int acc_w = scene.canvas_w();
  int acc_h = scene.canvas_h();
  for (const Instance& inst : scene.instances()) {
    table.offsets_.push_back({acc_w, acc_h});
    acc_w += inst.ref_w;
    acc_h += inst.ref_h;
  }

  for (Eigen::Index k = 0; k < seq.size(); ++k) {
    const Token& tok = seq[k];
    switch (tok.role) {
      case TokenRole::text:
        table.indices_.push_back({0, 0, 0});
        break;
      case TokenRole::noise_image:
        table.indices_.push_back({0, tok.i, tok.j});
        break;
      case TokenRole::layout:
        table.indices_.push_back({1, tok.i, tok.j});
        break;
      case TokenRole::reference: {
        const auto& [w_off, h_off] = table.offsets_[static_cast<std::size_t>(tok.ref_id)];
        table.indices_.push_back({1, w_off + tok.i, h_off + tok.j});
        break;
      }
    }
  }
  return table;
}

}  // namespace contextgen
