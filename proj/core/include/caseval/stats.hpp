#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "json.hpp"

#include "caseval/manifest.hpp"

namespace caseval {

struct SplitCounts {
  std::uint64_t moving = 0;
  std::uint64_t static_ = 0;
};

struct DatasetStats {
  std::map<std::string, SplitCounts> per_split;
  std::map<std::uint32_t, std::uint64_t> pixels_per_category;
  std::uint64_t total_moving = 0;
  std::uint64_t total_static = 0;
};

// Exact counts of moving/static instances from the per-frame motion flags
// plus per-category pixel counts from the panoptic gt maps. Throws
// std::runtime_error naming the first frame without motion flags.
DatasetStats compute_stats(const Manifest& manifest);

nlohmann::ordered_json stats_to_json(const DatasetStats& stats,
                                     const CategoryTable& cats);

}  // namespace caseval
