#pragma once

#include <Eigen/Core>
#include <array>
#include <set>
#include <string>
#include <vector>

#include "contextgen/scene.hpp"

namespace contextgen {

using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Boolean key-allowance matrix over a token sequence: allowed(q, k) means
/// key k is visible to query q. Every row must allow at least one key
/// (text is visible to every query under both masks here); construction
/// rejects masks violating that.
class AttentionMask {
 public:
  explicit AttentionMask(BoolMatrix m);

  Eigen::Index size() const noexcept { return m_.rows(); }
  bool allowed(Eigen::Index q, Eigen::Index k) const { return m_(q, k); }
  const BoolMatrix& matrix() const noexcept { return m_; }

 private:
  BoolMatrix m_;
};

/// Contextual Layout Anchoring mask: text/noise/layout tokens fully
/// inter-attend; each reference sees only text and itself.
AttentionMask build_cla_mask(const Scene& scene, const TokenSequence& seq);

/// Identity Consistency Attention mask: a noise query inside box set S
/// (union semantics for overlaps) sees text, noise tokens inside any box
/// of S, and the references of S. All other rows fall back to CLA.
AttentionMask build_ica_mask(const Scene& scene, const TokenSequence& seq);

enum class BlockGroup { FR, MID, BK };
enum class MaskKind { CLA, ICA };

BlockGroup block_group_from_name(const std::string& name);
std::string block_group_name(BlockGroup g);

/// Contiguous three-way split of the block stack with a mask choice per
/// block.
class BlockSchedule {
 public:
  int num_blocks() const noexcept { return num_blocks_; }
  MaskKind mask_for(int block) const;
  BlockGroup group_for(int block) const;
  /// Half-open [begin, end) ranges for FR, MID, BK.
  const std::array<std::pair<int, int>, 3>& group_ranges() const noexcept { return ranges_; }
  const std::set<BlockGroup>& ica_groups() const noexcept { return ica_groups_; }

 private:
  friend BlockSchedule build_schedule(int num_blocks, const std::set<BlockGroup>& ica_groups);

  int num_blocks_ = 0;
  std::array<std::pair<int, int>, 3> ranges_{};
  std::set<BlockGroup> ica_groups_;
};

/// Splits num_blocks (>= 3) into FR/MID/BK as equally as possible (sizes
/// differ by at most one, earlier groups take the remainder) and marks the
/// listed groups ICA, the rest CLA. 57 blocks -> 19/19/19.
BlockSchedule build_schedule(int num_blocks, const std::set<BlockGroup>& ica_groups);

struct SegmentKey {
  TokenRole role = TokenRole::text;
  int ref_id = 0;

  std::string name() const { return role_name(role, ref_id); }
  bool operator==(const SegmentKey&) const = default;
};

struct MaskDensity {
  SegmentKey query;
  SegmentKey key;
  double density = 0.0;  // fraction of allowed pairs in the segment block
};

/// Per (query-segment, key-segment) allowed-pair density, segments in
/// sequence order.
std::vector<MaskDensity> mask_stats(const AttentionMask& mask, const TokenSequence& seq);

}  // namespace contextgen
