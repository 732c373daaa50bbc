#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace caseval {

// Segment id 0 marks void/ignore pixels everywhere in the toolkit.
constexpr std::uint32_t kVoidId = 0;

// Per-pixel segment-id image, the unit of all metric computation.
struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> ids;  // row-major, width*height entries

  LabelMap() = default;
  LabelMap(int w, int h, std::uint32_t fill = kVoidId)
      : width(w), height(h), ids(static_cast<std::size_t>(w) * h, fill) {}

  std::uint32_t at(int x, int y) const {
    return ids[static_cast<std::size_t>(y) * width + x];
  }
  std::uint32_t& at(int x, int y) {
    return ids[static_cast<std::size_t>(y) * width + x];
  }
  std::size_t pixel_count() const { return ids.size(); }
  bool same_size(const LabelMap& o) const {
    return width == o.width && height == o.height;
  }
  bool operator==(const LabelMap& o) const = default;
};

// Panoptic id convention (Cityscapes-style): ids >= 1000 encode
// category*1000 + instance; ids in [1, 1000) are stuff categories with no
// instance index. Class-agnostic maps use raw ids with no category.
constexpr std::uint32_t kPanopticIdBase = 1000;

inline std::uint32_t category_of_id(std::uint32_t id) {
  return id >= kPanopticIdBase ? id / kPanopticIdBase : id;
}
inline std::optional<std::uint32_t> instance_of_id(std::uint32_t id) {
  if (id >= kPanopticIdBase) return id % kPanopticIdBase;
  return std::nullopt;
}
inline std::uint32_t make_panoptic_id(std::uint32_t category, std::uint32_t instance) {
  return category * kPanopticIdBase + instance;
}

struct Segment {
  std::uint32_t id = 0;
  std::optional<std::uint32_t> category;  // absent for class-agnostic masks
  std::uint64_t area = 0;
};

struct Category {
  std::uint32_t id = 0;
  std::string name;
  bool isthing = false;
};

struct CategoryTable {
  std::vector<Category> entries;

  const Category* find(std::uint32_t id) const;
  bool empty() const { return entries.empty(); }
  // Throws std::invalid_argument on duplicate ids.
  void validate() const;
};

enum class IdEncoding { kRaw, kPanoptic };

// One Segment per distinct nonzero id; with kPanoptic the category is
// derived from the id, with kRaw it is left absent.
std::vector<Segment> extract_segments(const LabelMap& m,
                                      IdEncoding enc = IdEncoding::kRaw);

// Plain IoU of the pixel sets of two segments. Throws std::invalid_argument
// when either segment is empty or the maps differ in size.
double iou(const LabelMap& a, std::uint32_t id_a, const LabelMap& b,
           std::uint32_t id_b);

inline double iou_from_counts(std::uint64_t intersection, std::uint64_t area_a,
                              std::uint64_t area_b) {
  const std::uint64_t uni = area_a + area_b - intersection;
  return uni == 0 ? 0.0 : static_cast<double>(intersection) / static_cast<double>(uni);
}

// (pred id, gt id) -> overlap pixel count, void pairings included.
using ContingencyTable = std::unordered_map<std::uint64_t, std::uint64_t>;

inline std::uint64_t pair_key(std::uint32_t pred_id, std::uint32_t gt_id) {
  return (static_cast<std::uint64_t>(pred_id) << 32) | gt_id;
}
inline std::uint32_t pair_pred(std::uint64_t key) {
  return static_cast<std::uint32_t>(key >> 32);
}
inline std::uint32_t pair_gt(std::uint64_t key) {
  return static_cast<std::uint32_t>(key & 0xffffffffu);
}

// Single-pass overlap counting; sum of all counts equals width*height.
// Throws std::invalid_argument on dimension mismatch.
ContingencyTable contingency_table(const LabelMap& pred, const LabelMap& gt);

// 16-bit single-channel PNG codec for label maps. Encoding requires all ids
// < 2^16; decoding preserves ids exactly.
std::vector<std::uint8_t> encode_panoptic_png(const LabelMap& m);
LabelMap decode_panoptic_png(const std::vector<std::uint8_t>& bytes);
LabelMap decode_panoptic_png(const std::uint8_t* data, std::size_t size);

void write_label_png(const std::string& path, const LabelMap& m);
LabelMap read_label_png(const std::string& path);

}  // namespace caseval
