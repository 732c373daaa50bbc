#include "caseval/stats.hpp"

namespace caseval {

DatasetStats compute_stats(const Manifest& manifest) {
  DatasetStats stats;
  for (const Frame& f : manifest.frames) {
    if (!f.motion) {
      throw std::runtime_error("compute_stats: frame '" + f.id +
                               "' has no motion flags");
    }
    SplitCounts& sc = stats.per_split[f.split];
    for (const auto& [id, moving] : *f.motion) {
      (void)id;
      if (moving) {
        ++sc.moving;
        ++stats.total_moving;
      } else {
        ++sc.static_;
        ++stats.total_static;
      }
    }
    if (f.paths.panoptic_gt) {
      const LabelMap gt = read_label_png(manifest.resolve(*f.paths.panoptic_gt));
      for (const std::uint32_t id : gt.ids) {
        if (id == kVoidId) continue;
        ++stats.pixels_per_category[category_of_id(id)];
      }
    }
  }
  return stats;
}

nlohmann::ordered_json stats_to_json(const DatasetStats& stats,
                                     const CategoryTable& cats) {
  nlohmann::ordered_json doc;
  nlohmann::ordered_json splits;
  for (const auto& [split, counts] : stats.per_split) {
    splits[split] = {{"moving", counts.moving}, {"static", counts.static_}};
  }
  doc["instances"] = splits;
  doc["total"] = {{"moving", stats.total_moving}, {"static", stats.total_static}};
  nlohmann::ordered_json pixels;
  for (const auto& [cat, count] : stats.pixels_per_category) {
    const Category* c = cats.find(cat);
    const std::string key = c ? c->name : ("category_" + std::to_string(cat));
    pixels[key] = count;
  }
  doc["pixels_per_category"] = pixels;
  return doc;
}

}  // namespace caseval
