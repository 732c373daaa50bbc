#include "caseval/evaluate.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <thread>

#include "caseval/ego_flow.hpp"

namespace caseval {

Track track_from_string(const std::string& name) {
  if (name == "ca") return Track::kClassAgnostic;
  if (name == "panoptic") return Track::kPanoptic;
  if (name == "openset") return Track::kOpenSet;
  throw std::invalid_argument("unknown track: " + name);
}

std::string track_name(Track t) {
  switch (t) {
    case Track::kClassAgnostic: return "ca";
    case Track::kPanoptic: return "panoptic";
    case Track::kOpenSet: return "openset";
  }
  return "?";
}

namespace {

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("CASEVAL_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

std::string require_path(const std::optional<std::string>& p, const char* what) {
  if (!p) {
    throw std::runtime_error(std::string("missing ") + what + " path");
  }
  return *p;
}

// Mean flow norm per instance. With a panoptic map, only thing instances
// (ids >= 1000) are diagnosed; with a class-agnostic map, every nonzero id.
std::map<std::uint32_t, double> flow_diagnostics(const LabelMap& instances,
                                                 bool panoptic,
                                                 const FlowField& flow) {
  std::map<std::uint32_t, std::pair<double, std::uint64_t>> sums;
  for (int y = 0; y < instances.height; ++y) {
    for (int x = 0; x < instances.width; ++x) {
      const std::uint32_t id = instances.at(x, y);
      if (id == kVoidId) continue;
      if (panoptic && id < kPanopticIdBase) continue;
      const std::size_t i = flow.index(x, y);
      if (!flow.valid[i]) continue;
      auto& [sum, n] = sums[id];
      sum += std::hypot(flow.u[i], flow.v[i]);
      ++n;
    }
  }
  std::map<std::uint32_t, double> out;
  for (const auto& [id, sn] : sums) {
    out[id] = sn.second == 0 ? 0.0 : sn.first / static_cast<double>(sn.second);
  }
  return out;
}

void evaluate_frame(const Manifest& manifest, const Frame& frame,
                    const EvaluateOptions& options,
                    const OpenSetParams* openset_params, FrameResult& result) {
  result.id = frame.id;
  result.split = frame.split;

  switch (options.track) {
    case Track::kClassAgnostic: {
      const LabelMap gt =
          read_label_png(manifest.resolve(require_path(frame.paths.ca_gt, "ca_gt")));
      const LabelMap pred = read_label_png(
          manifest.resolve(require_path(frame.paths.ca_pred, "ca_pred")));
      const MatchResult match = match_instances(pred, gt, false);
      result.ca_raw.add(match);
      result.ca = compute_caq(match);

      if (frame.paths.flow) {
        FlowField flow = read_flow_png(manifest.resolve(*frame.paths.flow));
        if (options.efs) {
          if (!frame.paths.depth || !frame.intrinsics || !frame.pose_to_next) {
            throw std::runtime_error(
                "EFS requires depth, intrinsics, and pose for frame " + frame.id);
          }
          const DepthMap depth =
              read_depth_png(manifest.resolve(*frame.paths.depth));
          const FlowField ego =
              compute_ego_flow(depth, *frame.intrinsics, *frame.pose_to_next);
          flow = suppress_ego_flow(flow, ego);
          if (options.suppressed_dir) {
            write_flow_png((std::filesystem::path(*options.suppressed_dir) /
                            (frame.id + "_flow_suppressed.png"))
                               .string(),
                           flow);
          }
        }
        if (frame.paths.panoptic_gt) {
          result.instance_flow = flow_diagnostics(
              read_label_png(manifest.resolve(*frame.paths.panoptic_gt)), true,
              flow);
        } else {
          result.instance_flow = flow_diagnostics(gt, false, flow);
        }
      }
      break;
    }
    case Track::kPanoptic: {
      const LabelMap gt = read_label_png(
          manifest.resolve(require_path(frame.paths.panoptic_gt, "panoptic_gt")));
      const LabelMap pred = read_label_png(manifest.resolve(
          require_path(frame.paths.panoptic_pred, "panoptic_pred")));
      const MatchResult match = match_instances(pred, gt, true);
      result.per_class = per_class_stats(match);
      break;
    }
    case Track::kOpenSet: {
      const Tensor3 emb = read_tensor(
          manifest.resolve(require_path(frame.paths.embeddings, "embeddings")));
      const LabelMap labels = read_label_png(
          manifest.resolve(require_path(frame.paths.labels, "labels")));
      const int c = openset_params->num_classes();
      const EmbeddingMap batch = embedding_map_from(emb, labels, c);
      const std::vector<int> pred = predict_labels(batch, *openset_params);
      for (std::size_t i = 0; i < pred.size(); ++i) {
        const int gt_label = batch.labels[i];
        if (gt_label == kIgnoreLabel) continue;
        for (int k = 1; k <= c + 1; ++k) {
          const bool in_pred = pred[i] == k;
          const bool in_gt = gt_label == k;
          if (in_pred || in_gt) {
            auto& [inter, uni] = result.class_iu[k];
            inter += in_pred && in_gt;
            ++uni;
          }
        }
      }
      break;
    }
  }
}

}  // namespace

EvaluationReport evaluate_dataset(const Manifest& manifest,
                                  const EvaluateOptions& options) {
  EvaluationReport report;
  report.track = options.track;
  report.efs = options.efs;

  std::optional<OpenSetParams> openset_params;
  if (options.track == Track::kOpenSet) {
    if (!options.checkpoint) {
      throw std::runtime_error("open-set evaluation needs a checkpoint");
    }
    openset_params = load_checkpoint(*options.checkpoint);
  }

  std::vector<const Frame*> selected;
  for (const Frame& f : manifest.frames) {
    if (options.split && f.split != *options.split) continue;
    selected.push_back(&f);
  }
  report.frames.resize(selected.size());

  const int workers =
      std::max(1, std::min<int>(resolve_workers(options.workers),
                                static_cast<int>(selected.size())));
  std::atomic<std::size_t> next{0};
  auto run = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= selected.size()) break;
      FrameResult& r = report.frames[i];
      try {
        evaluate_frame(manifest, *selected[i], options,
                       openset_params ? &*openset_params : nullptr, r);
      } catch (const std::exception& e) {
        r.id = selected[i]->id;
        r.split = selected[i]->split;
        r.ok = false;
        r.error = e.what();
      }
    }
  };
  if (workers <= 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t) pool.emplace_back(run);
    for (auto& t : pool) t.join();
  }

  // Order-fixed reduction over per-frame partials.
  CAAccumulator ca_acc;
  std::map<std::uint32_t, ClassStats> class_acc;
  std::map<int, std::pair<std::uint64_t, std::uint64_t>> iu_acc;
  for (const FrameResult& r : report.frames) {
    if (!r.ok) {
      ++report.frames_failed;
      continue;
    }
    ++report.frames_evaluated;
    ca_acc.iou_sum += r.ca_raw.iou_sum;
    ca_acc.tp += r.ca_raw.tp;
    ca_acc.fp += r.ca_raw.fp;
    ca_acc.fn += r.ca_raw.fn;
    for (const auto& [cat, stats] : r.per_class) class_acc[cat] += stats;
    for (const auto& [label, iu] : r.class_iu) {
      iu_acc[label].first += iu.first;
      iu_acc[label].second += iu.second;
    }
  }

  switch (options.track) {
    case Track::kClassAgnostic:
      report.ca = ca_acc.finalize();
      break;
    case Track::kPanoptic:
      report.panoptic = compute_pq(class_acc, manifest.categories);
      break;
    case Track::kOpenSet: {
      const int c = openset_params->num_classes();
      double iou_sum = 0.0;
      int present = 0;
      for (int k = 1; k <= c; ++k) {
        auto it = iu_acc.find(k);
        if (it == iu_acc.end() || it->second.second == 0) continue;
        const double v = static_cast<double>(it->second.first) /
                         static_cast<double>(it->second.second);
        report.class_iou[k] = v;
        iou_sum += v;
        ++present;
      }
      report.miou = present == 0 ? 0.0 : iou_sum / present;
      const auto unknown = iu_acc.find(c + 1);
      report.ca_iou =
          unknown == iu_acc.end()
              ? 1.0
              : ca_iou_from_counts(unknown->second.first, unknown->second.second);
      if (unknown != iu_acc.end()) report.class_iou[c + 1] = report.ca_iou;
      break;
    }
  }
  return report;
}

namespace {

std::string pct1(double unit_value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", unit_value * 100.0);
  return buf;
}

}  // namespace

nlohmann::ordered_json report_to_json(const EvaluationReport& report) {
  nlohmann::ordered_json doc;
  doc["track"] = track_name(report.track);
  doc["efs"] = report.efs;
  doc["frames_evaluated"] = report.frames_evaluated;
  doc["frames_failed"] = report.frames_failed;

  nlohmann::ordered_json frames = nlohmann::ordered_json::array();
  for (const FrameResult& r : report.frames) {
    nlohmann::ordered_json fj;
    fj["id"] = r.id;
    fj["split"] = r.split;
    fj["ok"] = r.ok;
    if (!r.ok) {
      fj["error"] = r.error;
      frames.push_back(fj);
      continue;
    }
    switch (report.track) {
      case Track::kClassAgnostic: {
        fj["sq"] = r.ca.sq;
        fj["rq"] = r.ca.rq;
        fj["caq"] = r.ca.caq;
        fj["tp"] = r.ca.tp;
        fj["fp"] = r.ca.fp;
        fj["fn"] = r.ca.fn;
        fj["iou_sum"] = r.ca_raw.iou_sum;
        if (!r.instance_flow.empty()) {
          nlohmann::ordered_json flows;
          for (const auto& [id, norm] : r.instance_flow) {
            flows[std::to_string(id)] = norm;
          }
          fj["instance_mean_flow"] = flows;
        }
        break;
      }
      case Track::kPanoptic: {
        nlohmann::ordered_json classes;
        for (const auto& [cat, s] : r.per_class) {
          classes[std::to_string(cat)] = {{"iou_sum", s.iou_sum},
                                          {"tp", s.tp},
                                          {"fp", s.fp},
                                          {"fn", s.fn}};
        }
        fj["per_class"] = classes;
        break;
      }
      case Track::kOpenSet: {
        nlohmann::ordered_json classes;
        for (const auto& [label, iu] : r.class_iu) {
          classes[std::to_string(label)] = {{"intersection", iu.first},
                                            {"union", iu.second}};
        }
        fj["class_intersection_union"] = classes;
        break;
      }
    }
    frames.push_back(fj);
  }
  doc["frames"] = frames;

  nlohmann::ordered_json agg;
  switch (report.track) {
    case Track::kClassAgnostic:
      agg["sq"] = report.ca.sq;
      agg["rq"] = report.ca.rq;
      agg["caq"] = report.ca.caq;
      agg["tp"] = report.ca.tp;
      agg["fp"] = report.ca.fp;
      agg["fn"] = report.ca.fn;
      break;
    case Track::kPanoptic: {
      agg["pq_all"] = report.panoptic.pq_all;
      agg["pq_th"] = report.panoptic.pq_th;
      agg["pq_st"] = report.panoptic.pq_st;
      nlohmann::ordered_json classes;
      for (const auto& [cat, q] : report.panoptic.per_class) {
        classes[std::to_string(cat)] = {{"pq", q.pq},
                                        {"sq", q.sq},
                                        {"rq", q.rq},
                                        {"tp", q.counts.tp},
                                        {"fp", q.counts.fp},
                                        {"fn", q.counts.fn}};
      }
      agg["per_class"] = classes;
      break;
    }
    case Track::kOpenSet: {
      agg["miou"] = report.miou;
      agg["ca_iou"] = report.ca_iou;
      nlohmann::ordered_json classes;
      for (const auto& [label, v] : report.class_iou) {
        classes[std::to_string(label)] = v;
      }
      agg["class_iou"] = classes;
      break;
    }
  }
  doc["aggregate"] = agg;
  return doc;
}

std::string report_to_csv(const EvaluationReport& report) {
  switch (report.track) {
    case Track::kClassAgnostic:
      return "SQ,RQ,CAQ\n" + pct1(report.ca.sq) + "," + pct1(report.ca.rq) +
             "," + pct1(report.ca.caq) + "\n";
    case Track::kPanoptic:
      return "PQ_All,PQ_Th,PQ_St\n" + pct1(report.panoptic.pq_all) + "," +
             pct1(report.panoptic.pq_th) + "," + pct1(report.panoptic.pq_st) +
             "\n";
    case Track::kOpenSet:
      return "mIoU,CA-IoU\n" + pct1(report.miou) + "," + pct1(report.ca_iou) +
             "\n";
  }
  return "";
}

}  // namespace caseval
