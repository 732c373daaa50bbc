#include "caseval/manifest.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace caseval {

namespace {

std::optional<std::string> opt_path(const nlohmann::json& paths,
                                    const char* key) {
  if (!paths.contains(key)) return std::nullopt;
  return paths.at(key).get<std::string>();
}

void check_file(const Manifest& m, const std::string& frame_id,
                const char* key, const std::optional<std::string>& rel) {
  if (!rel) return;
  if (!std::filesystem::exists(m.root / *rel)) {
    throw std::runtime_error("manifest: frame '" + frame_id + "' references missing " +
                             key + " file: " + *rel);
  }
}

}  // namespace

Manifest manifest_from_json(const nlohmann::json& doc,
                            const std::filesystem::path& root,
                            bool check_files) {
  Manifest m;
  m.root = root;

  if (doc.contains("categories")) {
    for (const auto& c : doc.at("categories")) {
      Category cat;
      cat.id = c.at("id").get<std::uint32_t>();
      cat.name = c.at("name").get<std::string>();
      cat.isthing = c.at("isthing").get<bool>();
      m.categories.entries.push_back(cat);
    }
    m.categories.validate();
  }

  if (doc.contains("class_names")) {
    for (const auto& [key, value] : doc.at("class_names").items()) {
      m.class_names[static_cast<std::uint32_t>(std::stoul(key))] =
          value.get<std::string>();
    }
  }

  std::set<std::string> seen_ids;
  for (const auto& f : doc.at("frames")) {
    Frame frame;
    frame.id = f.at("id").get<std::string>();
    if (!seen_ids.insert(frame.id).second) {
      throw std::runtime_error("manifest: duplicate frame id '" + frame.id + "'");
    }
    frame.split = f.value("split", std::string("test"));
    if (frame.split != "train" && frame.split != "test") {
      throw std::runtime_error("manifest: frame '" + frame.id +
                               "' has unknown split '" + frame.split + "'");
    }
    if (f.contains("paths")) {
      const auto& p = f.at("paths");
      frame.paths.panoptic_gt = opt_path(p, "panoptic_gt");
      frame.paths.panoptic_pred = opt_path(p, "panoptic_pred");
      frame.paths.ca_gt = opt_path(p, "ca_gt");
      frame.paths.ca_pred = opt_path(p, "ca_pred");
      frame.paths.flow = opt_path(p, "flow");
      frame.paths.depth = opt_path(p, "depth");
      frame.paths.embeddings = opt_path(p, "embeddings");
      frame.paths.labels = opt_path(p, "labels");
      frame.paths.features = opt_path(p, "features");
      frame.paths.class_mask = opt_path(p, "class_mask");
    }
    if (f.contains("intrinsics")) {
      const auto& k = f.at("intrinsics");
      CameraIntrinsics intr;
      intr.fx = k.at("fx").get<double>();
      intr.fy = k.at("fy").get<double>();
      intr.cx = k.at("cx").get<double>();
      intr.cy = k.at("cy").get<double>();
      if (!intr.valid()) {
        throw std::runtime_error("manifest: frame '" + frame.id +
                                 "' has non-positive focal length");
      }
      frame.intrinsics = intr;
    }
    if (f.contains("pose_to_next")) {
      const auto& pj = f.at("pose_to_next");
      PoseSE3 pose;
      const auto rot = pj.at("rotation");
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
          pose.rotation(r, c) = rot.at(r).at(c).get<double>();
        }
      }
      const auto tr = pj.at("translation");
      for (int r = 0; r < 3; ++r) pose.translation(r) = tr.at(r).get<double>();
      if (!pose.is_rigid(1e-6)) {
        throw std::runtime_error("manifest: frame '" + frame.id +
                                 "' pose rotation is not orthonormal");
      }
      frame.pose_to_next = pose;
    }
    if (f.contains("motion")) {
      std::map<std::uint32_t, bool> motion;
      for (const auto& [key, value] : f.at("motion").items()) {
        motion[static_cast<std::uint32_t>(std::stoul(key))] = value.get<bool>();
      }
      frame.motion = std::move(motion);
    }
    m.frames.push_back(std::move(frame));
  }

  if (check_files) {
    for (const auto& frame : m.frames) {
      check_file(m, frame.id, "panoptic_gt", frame.paths.panoptic_gt);
      check_file(m, frame.id, "panoptic_pred", frame.paths.panoptic_pred);
      check_file(m, frame.id, "ca_gt", frame.paths.ca_gt);
      check_file(m, frame.id, "ca_pred", frame.paths.ca_pred);
      check_file(m, frame.id, "flow", frame.paths.flow);
      check_file(m, frame.id, "depth", frame.paths.depth);
      check_file(m, frame.id, "embeddings", frame.paths.embeddings);
      check_file(m, frame.id, "labels", frame.paths.labels);
      check_file(m, frame.id, "features", frame.paths.features);
      check_file(m, frame.id, "class_mask", frame.paths.class_mask);
    }
  }
  return m;
}

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("manifest parse error in " + path + ": " + e.what());
  }
  return manifest_from_json(doc,
                            std::filesystem::absolute(path).parent_path());
}

nlohmann::ordered_json manifest_to_json(const Manifest& m) {
  nlohmann::ordered_json doc;
  doc["categories"] = nlohmann::ordered_json::array();
  for (const auto& c : m.categories.entries) {
    doc["categories"].push_back(
        {{"id", c.id}, {"name", c.name}, {"isthing", c.isthing}});
  }
  if (!m.class_names.empty()) {
    nlohmann::ordered_json names;
    for (const auto& [id, name] : m.class_names) {
      names[std::to_string(id)] = name;
    }
    doc["class_names"] = names;
  }
  doc["frames"] = nlohmann::ordered_json::array();
  for (const auto& f : m.frames) {
    nlohmann::ordered_json fj;
    fj["id"] = f.id;
    fj["split"] = f.split;
    nlohmann::ordered_json paths;
    auto put = [&](const char* key, const std::optional<std::string>& v) {
      if (v) paths[key] = *v;
    };
    put("panoptic_gt", f.paths.panoptic_gt);
    put("panoptic_pred", f.paths.panoptic_pred);
    put("ca_gt", f.paths.ca_gt);
    put("ca_pred", f.paths.ca_pred);
    put("flow", f.paths.flow);
    put("depth", f.paths.depth);
    put("embeddings", f.paths.embeddings);
    put("labels", f.paths.labels);
    put("features", f.paths.features);
    put("class_mask", f.paths.class_mask);
    if (!paths.empty()) fj["paths"] = paths;
    if (f.intrinsics) {
      fj["intrinsics"] = {{"fx", f.intrinsics->fx},
                          {"fy", f.intrinsics->fy},
                          {"cx", f.intrinsics->cx},
                          {"cy", f.intrinsics->cy}};
    }
    if (f.pose_to_next) {
      nlohmann::ordered_json rot = nlohmann::ordered_json::array();
      for (int r = 0; r < 3; ++r) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (int c = 0; c < 3; ++c) row.push_back(f.pose_to_next->rotation(r, c));
        rot.push_back(row);
      }
      fj["pose_to_next"] = {
          {"rotation", rot},
          {"translation", {f.pose_to_next->translation(0),
                           f.pose_to_next->translation(1),
                           f.pose_to_next->translation(2)}}};
    }
    if (f.motion) {
      nlohmann::ordered_json motion;
      for (const auto& [id, moving] : *f.motion) {
        motion[std::to_string(id)] = moving;
      }
      fj["motion"] = motion;
    }
    doc["frames"].push_back(fj);
  }
  return doc;
}

void save_manifest(const std::string& path, const Manifest& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  out << manifest_to_json(m).dump(2) << "\n";
}

}  // namespace caseval
