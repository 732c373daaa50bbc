#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "caseval/manifest.hpp"
#include "caseval/metrics.hpp"
#include "caseval/open_set.hpp"

namespace caseval {

enum class Track { kClassAgnostic, kPanoptic, kOpenSet };

Track track_from_string(const std::string& name);
std::string track_name(Track t);

struct EvaluateOptions {
  Track track = Track::kClassAgnostic;
  std::optional<std::string> split;  // evaluate a single split when set
  bool efs = false;                  // suppress ego flow before diagnostics
  int workers = 0;                   // 0: CASEVAL_WORKERS env, else hardware
  std::optional<std::string> checkpoint;      // open-set params (openset track)
  std::optional<std::string> suppressed_dir;  // write suppressed flow PNGs here
};

struct FrameResult {
  std::string id;
  std::string split;
  bool ok = true;
  std::string error;

  // class-agnostic track
  CAAccumulator ca_raw;
  CAReport ca;
  // panoptic track
  std::map<std::uint32_t, ClassStats> per_class;
  // open-set track: label -> (intersection, union) pixel counts
  std::map<int, std::pair<std::uint64_t, std::uint64_t>> class_iu;
  // mean flow norm per ca-gt instance (after suppression when EFS is on)
  std::map<std::uint32_t, double> instance_flow;
};

struct EvaluationReport {
  Track track = Track::kClassAgnostic;
  bool efs = false;
  std::vector<FrameResult> frames;
  int frames_evaluated = 0;
  int frames_failed = 0;

  CAReport ca;                // aggregate, CA track
  PanopticReport panoptic;    // aggregate, panoptic track
  double miou = 0.0;          // aggregate, open-set track (known classes)
  double ca_iou = 0.0;        // aggregate, open-set track (unknown mask)
  std::map<int, double> class_iou;  // open-set per-class dataset IoU
};

// Runs the selected track over every manifest frame (optionally one split)
// with a deterministic frame-ordered reduction; per-frame failures are
// collected in the report, never silently skipped. Throws only for
// dataset-level problems (e.g. an unreadable checkpoint).
EvaluationReport evaluate_dataset(const Manifest& manifest,
                                  const EvaluateOptions& options);

// Full-precision JSON with per-frame and aggregate sections.
nlohmann::ordered_json report_to_json(const EvaluationReport& report);

// One header plus one aggregate row of 1-decimal percentages.
std::string report_to_csv(const EvaluationReport& report);

}  // namespace caseval
