#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "caseval/ego_flow.hpp"
#include "caseval/label_map.hpp"

namespace caseval {

// All per-frame file references; every field is optional and validated for
// existence at load time. Paths are relative to the manifest directory.
struct FramePaths {
  std::optional<std::string> panoptic_gt;
  std::optional<std::string> panoptic_pred;
  std::optional<std::string> ca_gt;
  std::optional<std::string> ca_pred;
  std::optional<std::string> flow;
  std::optional<std::string> depth;
  std::optional<std::string> embeddings;
  std::optional<std::string> labels;
  std::optional<std::string> features;
  std::optional<std::string> class_mask;
};

struct Frame {
  std::string id;
  std::string split;  // "train" or "test"
  FramePaths paths;
  std::optional<CameraIntrinsics> intrinsics;
  std::optional<PoseSE3> pose_to_next;
  std::optional<std::map<std::uint32_t, bool>> motion;  // instance id -> moving
};

struct Manifest {
  std::filesystem::path root;  // directory paths resolve against
  CategoryTable categories;
  std::map<std::uint32_t, std::string> class_names;  // fine-grained unknowns
  std::vector<Frame> frames;

  std::string resolve(const std::string& rel) const {
    return (root / rel).string();
  }
};

// Parses and eagerly validates: unique frame ids, known split names,
// existing referenced files. Throws std::runtime_error naming the offending
// frame or field.
Manifest load_manifest(const std::string& path);
Manifest manifest_from_json(const nlohmann::json& doc,
                            const std::filesystem::path& root,
                            bool check_files = true);

nlohmann::ordered_json manifest_to_json(const Manifest& m);
void save_manifest(const std::string& path, const Manifest& m);

}  // namespace caseval
