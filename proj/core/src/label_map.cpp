#include "caseval/label_map.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

#include "caseval/png_io.hpp"

namespace caseval {

const Category* CategoryTable::find(std::uint32_t id) const {
  for (const auto& c : entries) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

void CategoryTable::validate() const {
  std::unordered_set<std::uint32_t> seen;
  for (const auto& c : entries) {
    if (!seen.insert(c.id).second) {
      throw std::invalid_argument("duplicate category id " + std::to_string(c.id));
    }
  }
}

std::vector<Segment> extract_segments(const LabelMap& m, IdEncoding enc) {
  std::unordered_map<std::uint32_t, std::uint64_t> areas;
  for (std::uint32_t id : m.ids) {
    if (id != kVoidId) ++areas[id];
  }
  std::vector<Segment> out;
  out.reserve(areas.size());
  for (const auto& [id, area] : areas) {
    Segment s;
    s.id = id;
    s.area = area;
    if (enc == IdEncoding::kPanoptic) s.category = category_of_id(id);
    out.push_back(s);
  }
  std::sort(out.begin(), out.end(),
            [](const Segment& a, const Segment& b) { return a.id < b.id; });
  return out;
}

double iou(const LabelMap& a, std::uint32_t id_a, const LabelMap& b,
           std::uint32_t id_b) {
  if (!a.same_size(b)) {
    throw std::invalid_argument("iou: label map dimensions differ");
  }
  std::uint64_t area_a = 0, area_b = 0, inter = 0;
  for (std::size_t i = 0; i < a.ids.size(); ++i) {
    const bool in_a = a.ids[i] == id_a;
    const bool in_b = b.ids[i] == id_b;
    area_a += in_a;
    area_b += in_b;
    inter += in_a && in_b;
  }
  if (area_a == 0 || area_b == 0) {
    throw std::invalid_argument("iou: empty segment");
  }
  return iou_from_counts(inter, area_a, area_b);
}

ContingencyTable contingency_table(const LabelMap& pred, const LabelMap& gt) {
  if (!pred.same_size(gt)) {
    throw std::invalid_argument("contingency_table: label map dimensions differ");
  }
  ContingencyTable table;
  table.reserve(256);
  for (std::size_t i = 0; i < pred.ids.size(); ++i) {
    ++table[pair_key(pred.ids[i], gt.ids[i])];
  }
  return table;
}

std::vector<std::uint8_t> encode_panoptic_png(const LabelMap& m) {
  if (m.width <= 0 || m.height <= 0) {
    throw std::invalid_argument("encode_panoptic_png: empty label map");
  }
  Image16 img;
  img.width = m.width;
  img.height = m.height;
  img.channels = 1;
  img.pixels.resize(m.ids.size());
  for (std::size_t i = 0; i < m.ids.size(); ++i) {
    if (m.ids[i] > 0xffff) {
      throw std::invalid_argument("encode_panoptic_png: id " +
                                  std::to_string(m.ids[i]) +
                                  " exceeds 16-bit range");
    }
    img.pixels[i] = static_cast<std::uint16_t>(m.ids[i]);
  }
  return encode_png16(img);
}

LabelMap decode_panoptic_png(const std::uint8_t* data, std::size_t size) {
  Image16 img = decode_png16(data, size);
  if (img.channels != 1) {
    throw std::runtime_error("decode_panoptic_png: expected single-channel PNG");
  }
  LabelMap m;
  m.width = img.width;
  m.height = img.height;
  m.ids.assign(img.pixels.begin(), img.pixels.end());
  return m;
}

LabelMap decode_panoptic_png(const std::vector<std::uint8_t>& bytes) {
  return decode_panoptic_png(bytes.data(), bytes.size());
}

void write_label_png(const std::string& path, const LabelMap& m) {
  write_file_bytes(path, encode_panoptic_png(m));
}

LabelMap read_label_png(const std::string& path) {
  return decode_panoptic_png(read_file_bytes(path));
}

}  // namespace caseval
