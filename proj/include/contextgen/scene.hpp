#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace contextgen {

/// Axis-aligned box on the latent token grid, half-open on both axes:
/// a cell (i, j) is inside iff x <= i < x + w and y <= j < y + h.
struct BBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  long long area() const noexcept { return static_cast<long long>(w) * h; }

  bool contains(int i, int j) const noexcept {
    return i >= x && i < x + w && j >= y && j < y + h;
  }

  bool operator==(const BBox&) const = default;
};

/// Row-major boolean grid; backs occupancy bitmaps and effective areas.
class Bitmap {
 public:
  Bitmap() = default;
  Bitmap(int w, int h, bool fill = false)
      : w_(w), h_(h), cells_(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

  int width() const noexcept { return w_; }
  int height() const noexcept { return h_; }

  bool at(int x, int y) const { return cells_[idx(x, y)] != 0; }
  void set(int x, int y, bool v) { cells_[idx(x, y)] = v ? 1 : 0; }

  long long count() const noexcept {
    long long n = 0;
    for (auto c : cells_) n += c;
    return n;
  }

  bool operator==(const Bitmap&) const = default;

 private:
  std::size_t idx(int x, int y) const {
    return static_cast<std::size_t>(y) * w_ + x;
  }

  int w_ = 0;
  int h_ = 0;
  std::vector<std::uint8_t> cells_;
};

struct Instance {
  int id = 0;  // ordinal, 1-based
  BBox bbox;   // placement in the target canvas
  int ref_w = 0;
  int ref_h = 0;
  /// Effective area within the bbox; dims equal (bbox.w, bbox.h) when
  /// present. Absent means the full box counts.
  std::optional<Bitmap> occupancy;
};

/// Immutable scene description: canvas dims, text-token count and the
/// ordered instance list. The layout image shares the canvas dims.
/// Construction validates all invariants and throws std::invalid_argument
/// with a message naming the offending instance id.
class Scene {
 public:
  Scene(int canvas_w, int canvas_h, int text_len, std::vector<Instance> instances);

  int canvas_w() const noexcept { return canvas_w_; }
  int canvas_h() const noexcept { return canvas_h_; }
  long long canvas_area() const noexcept {
    return static_cast<long long>(canvas_w_) * canvas_h_;
  }
  int text_len() const noexcept { return text_len_; }

  const std::vector<Instance>& instances() const noexcept { return instances_; }
  int instance_count() const noexcept { return static_cast<int>(instances_.size()); }
  const Instance& instance(int id) const;  // 1-based lookup

 private:
  int canvas_w_;
  int canvas_h_;
  int text_len_;
  std::vector<Instance> instances_;
};

enum class TokenRole { text, noise_image, layout, reference };

std::string role_name(TokenRole role, int ref_id = 0);

struct Token {
  TokenRole role = TokenRole::text;
  int ref_id = 0;  // 1..N when role == reference, else 0
  int i = 0;       // column within the token's own grid; text uses (0, 0)
  int j = 0;       // row

  bool operator==(const Token&) const = default;
};

/// Unified token sequence [text..., noise_image..., layout..., ref_1..., ref_N...],
/// each image segment in row-major order.
class TokenSequence {
 public:
  Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(tokens_.size()); }

  const Token& operator[](Eigen::Index k) const { return tokens_[static_cast<std::size_t>(k)]; }

  /// Bounds-checked reverse lookup; throws std::out_of_range.
  const Token& at(Eigen::Index k) const;

  /// Half-open [begin, end) of a segment. ref_id selects a reference segment.
  std::pair<Eigen::Index, Eigen::Index> segment_range(TokenRole role, int ref_id = 0) const;

  int reference_count() const noexcept {
    return ref_offsets_.empty() ? 0 : static_cast<int>(ref_offsets_.size()) - 1;
  }

  const std::vector<Token>& tokens() const noexcept { return tokens_; }

 private:
  friend TokenSequence build_token_sequence(const Scene& scene);

  std::vector<Token> tokens_;
  Eigen::Index text_len_ = 0;
  Eigen::Index image_area_ = 0;
  std::vector<Eigen::Index> ref_offsets_;  // begin of each ref segment, plus end
};

/// Builds the unified sequence for a scene. Rejects empty segments
/// (text_len == 0, in particular); an empty reference list is fine.
TokenSequence build_token_sequence(const Scene& scene);

/// Role plus local coordinate of token k; constant-time.
inline const Token& segment_of(const TokenSequence& seq, Eigen::Index k) { return seq.at(k); }

/// All instance ids whose bbox contains the canvas coordinate, ascending.
/// Throws std::out_of_range for coordinates outside the canvas.
std::vector<int> box_membership(const Scene& scene, int i, int j);

/// Canvas-sized bitmap of the instance's effective area: the occupancy
/// bitmap placed at its bbox, or the full bbox when no bitmap is given.
Bitmap effective_area(const Scene& scene, const Instance& inst);

}  // namespace contextgen
