#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "caseval/label_map.hpp"

namespace caseval {

// IoU strictly above this threshold makes a (pred, gt) pair a true positive.
constexpr double kMatchIouThreshold = 0.5;

struct TruePositive {
  std::uint32_t pred_id = 0;
  std::uint32_t gt_id = 0;
  double iou = 0.0;
};

// Matching outcome for one frame. Unmatched predictions whose overlap with
// gt void exceeds half their area are set aside in fp_ignored and do not
// count toward any metric; tp + fp + fp_ignored covers all predictions.
struct MatchResult {
  std::vector<TruePositive> tp;
  std::vector<std::uint32_t> fp;
  std::vector<std::uint32_t> fp_ignored;
  std::vector<std::uint32_t> fn;
};

// Matches instances under the IoU > 0.5 rule. The IoU denominator excludes
// the part of a prediction lying on gt void. With class_aware, both maps
// must use the panoptic id encoding and a match additionally requires equal
// categories. Throws std::invalid_argument on dimension mismatch.
MatchResult match_instances(const LabelMap& pred, const LabelMap& gt,
                            bool class_aware);

struct CAReport {
  double sq = 0.0;
  double rq = 0.0;
  double caq = 0.0;
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
};

// SQ = mean TP IoU, RQ = |TP| / (|TP| + |FN|), CAQ = SQ * RQ.
// Degenerate cases: no TP -> SQ 0; no TP and no FN -> RQ 0.
CAReport compute_caq(const MatchResult& m);

// Per-class accumulator; summable across frames.
struct ClassStats {
  double iou_sum = 0.0;
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  ClassStats& operator+=(const ClassStats& o) {
    iou_sum += o.iou_sum;
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  bool touched() const { return tp + fp + fn > 0; }
};

// Buckets a class-aware MatchResult by category id.
std::map<std::uint32_t, ClassStats> per_class_stats(const MatchResult& m);

struct PerClassQuality {
  double pq = 0.0;
  double sq = 0.0;
  double rq = 0.0;
  ClassStats counts;
};

struct PanopticReport {
  std::map<std::uint32_t, PerClassQuality> per_class;
  double pq_all = 0.0;
  double pq_th = 0.0;
  double pq_st = 0.0;
  // Number of classes entering each mean.
  int n_all = 0;
  int n_th = 0;
  int n_st = 0;
};

// Per class, PQ = sum of TP IoU / (|TP| + |FP|/2 + |FN|/2). Classes with no
// TP, FP, or FN in either map are skipped from the means. Throws
// std::invalid_argument on an empty category table or when panoptic means
// are requested without at least one thing and one stuff category.
PanopticReport compute_pq(const std::map<std::uint32_t, ClassStats>& per_class,
                          const CategoryTable& cats);
PanopticReport compute_pq(const MatchResult& m, const CategoryTable& cats);

// Binary IoU over unknown-object pixels (nonzero entries of each map).
// Both masks empty -> 1.0: nothing to find, nothing claimed.
double compute_ca_iou(const LabelMap& pred_unknown, const LabelMap& gt_unknown);

inline double ca_iou_from_counts(std::uint64_t intersection, std::uint64_t uni) {
  return uni == 0 ? 1.0 : static_cast<double>(intersection) / static_cast<double>(uni);
}

// Dataset-level accumulator for the class-agnostic track.
struct CAAccumulator {
  double iou_sum = 0.0;
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  void add(const MatchResult& m);
  CAReport finalize() const;
};

}  // namespace caseval
