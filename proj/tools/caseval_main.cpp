#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "json.hpp"

#include "caseval/evaluate.hpp"
#include "caseval/manifest.hpp"
#include "caseval/open_set.hpp"
#include "caseval/prototypes.hpp"
#include "caseval/stats.hpp"
#include "caseval/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;  // evaluation-level failure
constexpr int kExitUsage = 2;    // bad arguments / unreadable inputs

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError(path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

caseval::Manifest load_manifest_or_usage(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("manifest not found: " + path);
  try {
    return caseval::load_manifest(path);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

int run_evaluation(const std::string& manifest_path,
                   const caseval::EvaluateOptions& options,
                   const std::string& out_prefix) {
  const caseval::Manifest manifest = load_manifest_or_usage(manifest_path);
  const caseval::EvaluationReport report =
      caseval::evaluate_dataset(manifest, options);
  const std::string csv = caseval::report_to_csv(report);
  write_text(out_prefix + ".json", caseval::report_to_json(report).dump(2) + "\n");
  write_text(out_prefix + ".csv", csv);
  std::cout << csv;
  if (report.frames_failed > 0) {
    std::cerr << report.frames_failed << " frame(s) failed; see " << out_prefix
              << ".json\n";
    return kExitFailure;
  }
  return kExitOk;
}

caseval::PoseSE3 pose_from_json(const json& pj) {
  caseval::PoseSE3 pose;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      pose.rotation(r, c) = pj.at("rotation").at(r).at(c).get<double>();
    }
  }
  for (int r = 0; r < 3; ++r) {
    pose.translation(r) = pj.at("translation").at(r).get<double>();
  }
  return pose;
}

int main_guarded(int argc, char** argv) {
  CLI::App app{"Class-agnostic segmentation evaluation toolkit"};
  app.require_subcommand(1);

  // --- synth ---------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::uint64_t synth_seed = 1;
  int synth_frames = 10;
  std::string synth_out;
  std::string synth_split = "test";
  caseval::SceneSpec scene_spec;
  synth->add_option("--seed", synth_seed, "Base RNG seed");
  synth->add_option("--frames", synth_frames, "Number of frames");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--split", synth_split, "Split label for all frames")
      ->check(CLI::IsMember({"train", "test"}));
  synth->add_option("--width", scene_spec.width, "Canvas width");
  synth->add_option("--height", scene_spec.height, "Canvas height");
  synth->add_option("--min-objects", scene_spec.min_objects, "Min objects per frame");
  synth->add_option("--max-objects", scene_spec.max_objects, "Max objects per frame");
  synth->add_option("--moving-fraction", scene_spec.moving_fraction,
                    "Probability an object moves");
  synth->add_flag("--perfect", scene_spec.perfect,
                  "Predictions byte-identical to ground truth");

  // --- evaluate-* ----------------------------------------------------------
  std::string manifest_path, out_prefix, split_filter, checkpoint_path,
      suppressed_dir;
  bool efs = false;
  int workers = 0;

  auto add_eval_options = [&](CLI::App* cmd) {
    cmd->add_option("--manifest", manifest_path, "Dataset manifest JSON")
        ->required();
    cmd->add_option("--out", out_prefix,
                    "Report path prefix (default: report_<track>)");
    cmd->add_option("--split", split_filter, "Evaluate only this split")
        ->check(CLI::IsMember({"train", "test"}));
    cmd->add_option("--workers", workers, "Worker threads (default: CASEVAL_WORKERS or hardware)");
  };

  auto* eval_ca = app.add_subcommand(
      "evaluate-ca", "Class-agnostic track: SQ, RQ, CAQ");
  add_eval_options(eval_ca);
  eval_ca->add_flag("--efs", efs, "Suppress ego flow before flow diagnostics");
  eval_ca->add_option("--suppressed-dir", suppressed_dir,
                      "Directory for suppressed flow PNGs");

  auto* eval_pan = app.add_subcommand(
      "evaluate-panoptic", "Panoptic track: PQ All/Th/St");
  add_eval_options(eval_pan);

  auto* eval_open = app.add_subcommand(
      "evaluate-openset", "Open-set track: mIoU and CA-IoU");
  add_eval_options(eval_open);
  eval_open->add_option("--checkpoint", checkpoint_path, "Trained head checkpoint")
      ->required();

  // --- suppress-flow -------------------------------------------------------
  auto* suppress = app.add_subcommand(
      "suppress-flow", "Subtract camera-induced flow from an observed flow field");
  std::string flow_path, depth_path, camera_path, flow_out, ego_out;
  bool invert_pose = false;
  suppress->add_option("--flow", flow_path, "Observed flow PNG")->required();
  suppress->add_option("--depth", depth_path, "Depth PNG")->required();
  suppress->add_option("--camera", camera_path,
                       "JSON with intrinsics {fx,fy,cx,cy} and pose "
                       "{rotation,translation}")
      ->required();
  suppress->add_option("--out", flow_out, "Suppressed flow PNG")->required();
  suppress->add_option("--ego-out", ego_out, "Also write the ego flow PNG");
  suppress->add_flag("--invert-pose", invert_pose,
                     "Pose maps frame-2 to frame-1 coordinates");

  // --- colorize-flow -------------------------------------------------------
  auto* colorize = app.add_subcommand("colorize-flow",
                                      "Render a flow field with the color wheel");
  std::string color_out;
  double max_norm = 0.0;
  colorize->add_option("--flow", flow_path, "Flow PNG")->required();
  colorize->add_option("--out", color_out, "8-bit RGB PNG")->required();
  colorize->add_option("--max-norm", max_norm,
                       "Norm mapped to full saturation (default: field max)");

  // --- prototypes ----------------------------------------------------------
  auto* protos = app.add_subcommand(
      "prototypes", "Masked-average-pool class prototypes from feature maps");
  std::string protos_out = "prototypes.json";
  bool l2_normalize = false;
  protos->add_option("--manifest", manifest_path, "Manifest with features/class_mask paths")
      ->required();
  protos->add_option("--out", protos_out, "Prototype JSON output");
  protos->add_flag("--normalize", l2_normalize,
                   "L2-normalize features before pooling");

  // --- dendrogram ----------------------------------------------------------
  auto* dendro = app.add_subcommand(
      "dendrogram", "Agglomerative clustering over prototype distances");
  std::string protos_in, dendro_out = "dendrogram.json", linkage_name = "average";
  dendro->add_option("--prototypes", protos_in, "Prototype JSON from `prototypes`")
      ->required();
  dendro->add_option("--out", dendro_out, "Dendrogram JSON output");
  dendro->add_option("--linkage", linkage_name, "Linkage criterion")
      ->check(CLI::IsMember({"average", "single", "complete"}));

  // --- train-openset -------------------------------------------------------
  auto* train = app.add_subcommand(
      "train-openset", "Train the prototype-distance open-set head");
  std::string train_config_path, train_prefix = "openset";
  train->add_option("--config", train_config_path,
                    "JSON config with optimizer settings, manifest, num_classes")
      ->required();
  train->add_option("--out-prefix", train_prefix,
                    "Prefix for <prefix>_loss.csv and <prefix>_checkpoint.bin");

  // --- stats ---------------------------------------------------------------
  auto* stats_cmd = app.add_subcommand(
      "stats", "Moving/static instance counts and per-class pixel statistics");
  std::string stats_out;
  stats_cmd->add_option("--manifest", manifest_path, "Dataset manifest JSON")
      ->required();
  stats_cmd->add_option("--out", stats_out, "Also write the JSON to this path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (synth->parsed()) {
    fs::create_directories(synth_out);
    caseval::Manifest manifest;
    manifest.root = synth_out;
    for (int i = 0; i < synth_frames; ++i) {
      const std::uint64_t frame_seed =
          synth_seed * 1000003ull + static_cast<std::uint64_t>(i);
      const caseval::SynthScene scene =
          caseval::generate_scene(frame_seed, scene_spec);
      char frame_id[32];
      std::snprintf(frame_id, sizeof(frame_id), "frame_%05d", i);
      manifest.frames.push_back(
          caseval::write_scene(synth_out, frame_id, synth_split, scene));
      if (i == 0) manifest.categories = scene.categories;
    }
    caseval::save_manifest((fs::path(synth_out) / "manifest.json").string(),
                           manifest);
    std::cout << "wrote " << synth_frames << " frame(s) to " << synth_out << "\n";
    return kExitOk;
  }

  if (eval_ca->parsed() || eval_pan->parsed() || eval_open->parsed()) {
    caseval::EvaluateOptions options;
    options.workers = workers;
    if (!split_filter.empty()) options.split = split_filter;
    if (eval_ca->parsed()) {
      options.track = caseval::Track::kClassAgnostic;
      if (out_prefix.empty()) out_prefix = "report_ca";
      options.efs = efs;
      if (!suppressed_dir.empty()) {
        fs::create_directories(suppressed_dir);
        options.suppressed_dir = suppressed_dir;
      }
    } else if (eval_pan->parsed()) {
      options.track = caseval::Track::kPanoptic;
      if (out_prefix.empty()) out_prefix = "report_panoptic";
    } else {
      options.track = caseval::Track::kOpenSet;
      if (out_prefix.empty()) out_prefix = "report_openset";
      if (!fs::exists(checkpoint_path)) {
        throw UsageError("checkpoint not found: " + checkpoint_path);
      }
      options.checkpoint = checkpoint_path;
    }
    return run_evaluation(manifest_path, options, out_prefix);
  }

  if (suppress->parsed()) {
    if (!fs::exists(flow_path)) throw UsageError("flow not found: " + flow_path);
    if (!fs::exists(depth_path)) throw UsageError("depth not found: " + depth_path);
    const json cam = load_json_file(camera_path);
    caseval::CameraIntrinsics intrinsics;
    intrinsics.fx = cam.at("intrinsics").at("fx").get<double>();
    intrinsics.fy = cam.at("intrinsics").at("fy").get<double>();
    intrinsics.cx = cam.at("intrinsics").at("cx").get<double>();
    intrinsics.cy = cam.at("intrinsics").at("cy").get<double>();
    caseval::PoseSE3 pose = pose_from_json(cam.at("pose"));
    if (invert_pose) pose = pose.inverse();

    const caseval::FlowField observed = caseval::read_flow_png(flow_path);
    const caseval::DepthMap depth = caseval::read_depth_png(depth_path);
    const caseval::FlowField ego =
        caseval::compute_ego_flow(depth, intrinsics, pose);
    caseval::write_flow_png(flow_out, caseval::suppress_ego_flow(observed, ego));
    if (!ego_out.empty()) caseval::write_flow_png(ego_out, ego);
    return kExitOk;
  }

  if (colorize->parsed()) {
    if (!fs::exists(flow_path)) throw UsageError("flow not found: " + flow_path);
    const caseval::FlowField flow = caseval::read_flow_png(flow_path);
    caseval::write_png8(color_out, caseval::flow_to_color(flow, max_norm));
    return kExitOk;
  }

  if (protos->parsed()) {
    const caseval::Manifest manifest = load_manifest_or_usage(manifest_path);
    std::vector<caseval::FeatureMap> features;
    std::vector<caseval::ClassMask> masks;
    for (const auto& frame : manifest.frames) {
      if (!frame.paths.features || !frame.paths.class_mask) continue;
      features.push_back(caseval::read_tensor(manifest.resolve(*frame.paths.features)));
      const caseval::LabelMap mask_map =
          caseval::read_label_png(manifest.resolve(*frame.paths.class_mask));
      caseval::ClassMask mask;
      mask.width = mask_map.width;
      mask.height = mask_map.height;
      mask.labels = mask_map.ids;
      masks.push_back(std::move(mask));
    }
    if (features.empty()) {
      throw UsageError("no frames with features and class_mask paths");
    }
    std::vector<std::pair<const caseval::FeatureMap*, const caseval::ClassMask*>> batch;
    for (std::size_t i = 0; i < features.size(); ++i) {
      batch.emplace_back(&features[i], &masks[i]);
    }
    caseval::PoolOptions opts;
    opts.l2_normalize = l2_normalize;
    const std::vector<caseval::Prototype> prototypes =
        caseval::pool_all_classes(batch, opts);

    ordered_json doc;
    doc["prototypes"] = ordered_json::array();
    for (const auto& p : prototypes) {
      ordered_json pj;
      pj["class_id"] = p.class_id;
      auto it = manifest.class_names.find(p.class_id);
      pj["name"] = it != manifest.class_names.end()
                       ? it->second
                       : ("class_" + std::to_string(p.class_id));
      pj["support"] = p.support;
      pj["vector"] = p.vec;
      doc["prototypes"].push_back(pj);
    }
    write_text(protos_out, doc.dump(2) + "\n");
    std::cout << "wrote " << prototypes.size() << " prototype(s) to "
              << protos_out << "\n";
    return kExitOk;
  }

  if (dendro->parsed()) {
    const json doc = load_json_file(protos_in);
    std::vector<caseval::Prototype> prototypes;
    std::map<std::uint32_t, std::string> names;
    for (const auto& pj : doc.at("prototypes")) {
      caseval::Prototype p;
      p.class_id = pj.at("class_id").get<std::uint32_t>();
      p.vec = pj.at("vector").get<std::vector<double>>();
      p.support = pj.value("support", 1ull);
      names[p.class_id] = pj.value("name", "class_" + std::to_string(p.class_id));
      prototypes.push_back(std::move(p));
    }
    if (prototypes.size() < 2) {
      throw UsageError("need at least 2 prototypes to cluster");
    }
    std::vector<std::uint32_t> leaf_ids;
    for (const auto& p : prototypes) leaf_ids.push_back(p.class_id);
    const caseval::Dendrogram tree = caseval::agglomerative_cluster(
        caseval::pairwise_distances(prototypes), leaf_ids,
        caseval::linkage_from_string(linkage_name));
    write_text(dendro_out,
               caseval::serialize_dendrogram(tree, names).dump(2) + "\n");
    std::cout << "wrote dendrogram to " << dendro_out << "\n";
    return kExitOk;
  }

  if (train->parsed()) {
    const json cfg = load_json_file(train_config_path);
    const caseval::TrainConfig config = caseval::TrainConfig::from_json(cfg);
    if (!cfg.contains("manifest") || !cfg.contains("num_classes")) {
      throw UsageError("train config needs 'manifest' and 'num_classes'");
    }
    const int num_classes = cfg.at("num_classes").get<int>();
    const fs::path cfg_dir = fs::absolute(train_config_path).parent_path();
    const std::string manifest_file =
        (cfg_dir / cfg.at("manifest").get<std::string>()).string();
    const caseval::Manifest manifest = load_manifest_or_usage(manifest_file);

    std::vector<caseval::EmbeddingMap> batches;
    for (const auto& frame : manifest.frames) {
      if (!frame.paths.embeddings || !frame.paths.labels) continue;
      if (frame.split != "train") continue;
      batches.push_back(caseval::embedding_map_from(
          caseval::read_tensor(manifest.resolve(*frame.paths.embeddings)),
          caseval::read_label_png(manifest.resolve(*frame.paths.labels)),
          num_classes));
    }
    if (batches.empty()) {
      throw UsageError("no train-split frames with embeddings and labels");
    }
    const caseval::TrainResult result = caseval::train(batches, config);

    std::string csv = "step,l_seg,l_cl,total\n";
    for (std::size_t i = 0; i < result.losses.size(); ++i) {
      const auto& l = result.losses[i];
      char line[128];
      std::snprintf(line, sizeof(line), "%zu,%.9g,%.9g,%.9g\n", i, l.l_seg,
                    l.l_cl, l.total);
      csv += line;
    }
    write_text(train_prefix + "_loss.csv", csv);
    caseval::save_checkpoint(train_prefix + "_checkpoint.bin", result.params);
    std::cout << "final loss " << result.losses.back().total << " after "
              << result.losses.size() << " step(s); checkpoint at "
              << train_prefix << "_checkpoint.bin\n";
    return kExitOk;
  }

  if (stats_cmd->parsed()) {
    const caseval::Manifest manifest = load_manifest_or_usage(manifest_path);
    const caseval::DatasetStats stats = caseval::compute_stats(manifest);
    const std::string text =
        caseval::stats_to_json(stats, manifest.categories).dump(2) + "\n";
    std::cout << text;
    if (!stats_out.empty()) write_text(stats_out, text);
    return kExitOk;
  }

  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return main_guarded(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}
