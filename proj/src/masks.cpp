#include "contextgen/masks.hpp"

#include <stdexcept>
#include <string>

namespace contextgen {

AttentionMask::AttentionMask(BoolMatrix m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols()) throw std::invalid_argument("attention mask must be square");
  for (Eigen::Index q = 0; q < m_.rows(); ++q)
    if (!m_.row(q).any())
      throw std::invalid_argument("attention mask row " + std::to_string(q) +
                                  " allows no keys");
}

AttentionMask build_cla_mask(const Scene& scene, const TokenSequence& seq) {
  const Eigen::Index len = seq.size();
  BoolMatrix m = BoolMatrix::Constant(len, len, false);

  const auto [text_b, text_e] = seq.segment_range(TokenRole::text);
  const auto [layout_b, layout_e] = seq.segment_range(TokenRole::layout);
  // Text, noise and layout are contiguous and fully inter-attend.
  m.block(text_b, text_b, layout_e - text_b, layout_e - text_b) = true;

  for (const Instance& inst : scene.instances()) {
    const auto [rb, re] = seq.segment_range(TokenRole::reference, inst.id);
    m.block(rb, text_b, re - rb, text_e - text_b) = true;  // refs see text
    m.block(rb, rb, re - rb, re - rb) = true;              // and themselves
  }
  return AttentionMask(std::move(m));
}

AttentionMask build_ica_mask(const Scene& scene, const TokenSequence& seq) {
  BoolMatrix m = build_cla_mask(scene, seq).matrix();

  const auto [text_b, text_e] = seq.segment_range(TokenRole::text);
  const auto [noise_b, noise_e] = seq.segment_range(TokenRole::noise_image);
  const Eigen::Index noise_len = noise_e - noise_b;

  // Allowed key sets per instance: noise tokens inside the box. Layout
  // tokens are conditioning inputs and keep their CLA rows.
  std::vector<Eigen::Array<bool, Eigen::Dynamic, 1>> in_box;
  in_box.reserve(scene.instances().size());
  for (const Instance& inst : scene.instances()) {
    Eigen::Array<bool, Eigen::Dynamic, 1> cols(noise_len);
    for (Eigen::Index k = 0; k < noise_len; ++k) {
      const Token& tok = seq[noise_b + k];
      cols[k] = inst.bbox.contains(tok.i, tok.j);
    }
    in_box.push_back(std::move(cols));
  }

  for (Eigen::Index q = noise_b; q < noise_e; ++q) {
    const Token& tok = seq[q];
    std::vector<int> members;
    for (const Instance& inst : scene.instances())
      if (inst.bbox.contains(tok.i, tok.j)) members.push_back(inst.id);
    if (members.empty()) continue;  // background rows default to CLA

    m.row(q).setConstant(false);
    m.row(q).segment(text_b, text_e - text_b) = true;
    Eigen::Array<bool, Eigen::Dynamic, 1> noise_keys =
        Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(noise_len, false);
    for (int id : members) {
      noise_keys = noise_keys || in_box[static_cast<std::size_t>(id) - 1];
      const auto [rb, re] = seq.segment_range(TokenRole::reference, id);
      m.row(q).segment(rb, re - rb) = true;
    }
    m.row(q).segment(noise_b, noise_len) = noise_keys.transpose();
  }
  return AttentionMask(std::move(m));
}

BlockGroup block_group_from_name(const std::string& name) {
  if (name == "FR") return BlockGroup::FR;
  if (name == "MID") return BlockGroup::MID;
  if (name == "BK") return BlockGroup::BK;
  throw std::invalid_argument("invalid block group name '" + name +
                              "' (expected FR, MID or BK)");
}

std::string block_group_name(BlockGroup g) {
  switch (g) {
    case BlockGroup::FR: return "FR";
    case BlockGroup::MID: return "MID";
    case BlockGroup::BK: return "BK";
  }
  return "?";
}

MaskKind BlockSchedule::mask_for(int block) const {
  return ica_groups_.contains(group_for(block)) ? MaskKind::ICA : MaskKind::CLA;
}

BlockGroup BlockSchedule::group_for(int block) const {
  if (block < 0 || block >= num_blocks_)
    throw std::out_of_range("block " + std::to_string(block) + " out of range");
  if (block < ranges_[0].second) return BlockGroup::FR;
  if (block < ranges_[1].second) return BlockGroup::MID;
  return BlockGroup::BK;
}

BlockSchedule build_schedule(int num_blocks, const std::set<BlockGroup>& ica_groups) {
  if (num_blocks < 3)
    throw std::invalid_argument("schedule needs at least 3 blocks, got " +
                                std::to_string(num_blocks));
  const int base = num_blocks / 3;
  const int rem = num_blocks % 3;
  const int fr = base + (rem > 0 ? 1 : 0);
  const int mid = base + (rem > 1 ? 1 : 0);

  BlockSchedule s;
  s.num_blocks_ = num_blocks;
  s.ranges_ = {{{0, fr}, {fr, fr + mid}, {fr + mid, num_blocks}}};
  s.ica_groups_ = ica_groups;
  return s;
}

std::vector<MaskDensity> mask_stats(const AttentionMask& mask, const TokenSequence& seq) {
  std::vector<SegmentKey> segments = {{TokenRole::text, 0},
                                      {TokenRole::noise_image, 0},
                                      {TokenRole::layout, 0}};
  for (int id = 1; id <= seq.reference_count(); ++id)
    segments.push_back({TokenRole::reference, id});

  std::vector<MaskDensity> stats;
  stats.reserve(segments.size() * segments.size());
  for (const SegmentKey& qs : segments) {
    const auto [qb, qe] = seq.segment_range(qs.role, qs.ref_id);
    for (const SegmentKey& ks : segments) {
      const auto [kb, ke] = seq.segment_range(ks.role, ks.ref_id);
      const double density =
          mask.matrix().block(qb, kb, qe - qb, ke - kb).cast<double>().mean();
      stats.push_back({qs, ks, density});
    }
  }
  return stats;
}

}  // namespace contextgen
