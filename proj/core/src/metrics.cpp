#include "caseval/metrics.hpp"

#include <algorithm>
#include <stdexcept>

namespace caseval {

MatchResult match_instances(const LabelMap& pred, const LabelMap& gt,
                            bool class_aware) {
  if (!pred.same_size(gt)) {
    throw std::invalid_argument("match_instances: label map dimensions differ");
  }

  const ContingencyTable table = contingency_table(pred, gt);

  std::unordered_map<std::uint32_t, std::uint64_t> pred_area, gt_area;
  std::unordered_map<std::uint32_t, std::uint64_t> pred_void_overlap;
  for (const auto& [key, count] : table) {
    const std::uint32_t p = pair_pred(key);
    const std::uint32_t g = pair_gt(key);
    if (p != kVoidId) {
      pred_area[p] += count;
      if (g == kVoidId) pred_void_overlap[p] += count;
    }
    if (g != kVoidId) gt_area[g] += count;
  }

  MatchResult result;
  std::unordered_map<std::uint32_t, bool> pred_matched, gt_matched;
  pred_matched.reserve(pred_area.size());
  gt_matched.reserve(gt_area.size());
  for (const auto& [id, _] : pred_area) pred_matched[id] = false;
  for (const auto& [id, _] : gt_area) gt_matched[id] = false;

  for (const auto& [key, inter] : table) {
    const std::uint32_t p = pair_pred(key);
    const std::uint32_t g = pair_gt(key);
    if (p == kVoidId || g == kVoidId) continue;
    if (class_aware && category_of_id(p) != category_of_id(g)) continue;
    // Union excludes the part of the prediction lying on gt void.
    const std::uint64_t void_part =
        pred_void_overlap.count(p) ? pred_void_overlap.at(p) : 0;
    const std::uint64_t uni = pred_area.at(p) - void_part + gt_area.at(g) - inter;
    const double v = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
    if (v > kMatchIouThreshold) {
      result.tp.push_back({p, g, v});
      pred_matched[p] = true;
      gt_matched[g] = true;
    }
  }

  for (const auto& [id, matched] : pred_matched) {
    if (matched) continue;
    const std::uint64_t void_part =
        pred_void_overlap.count(id) ? pred_void_overlap.at(id) : 0;
    if (2 * void_part > pred_area.at(id)) {
      result.fp_ignored.push_back(id);
    } else {
      result.fp.push_back(id);
    }
  }
  for (const auto& [id, matched] : gt_matched) {
    if (!matched) result.fn.push_back(id);
  }

  auto by_pred = [](const TruePositive& a, const TruePositive& b) {
    return a.pred_id < b.pred_id;
  };
  std::sort(result.tp.begin(), result.tp.end(), by_pred);
  std::sort(result.fp.begin(), result.fp.end());
  std::sort(result.fp_ignored.begin(), result.fp_ignored.end());
  std::sort(result.fn.begin(), result.fn.end());
  return result;
}

CAReport compute_caq(const MatchResult& m) {
  CAReport r;
  r.tp = m.tp.size();
  r.fp = m.fp.size();
  r.fn = m.fn.size();
  double iou_sum = 0.0;
  for (const auto& t : m.tp) iou_sum += t.iou;
  r.sq = r.tp == 0 ? 0.0 : iou_sum / static_cast<double>(r.tp);
  r.rq = (r.tp + r.fn) == 0 ? 0.0
                            : static_cast<double>(r.tp) /
                                  static_cast<double>(r.tp + r.fn);
  r.caq = r.sq * r.rq;
  return r;
}

std::map<std::uint32_t, ClassStats> per_class_stats(const MatchResult& m) {
  std::map<std::uint32_t, ClassStats> stats;
  for (const auto& t : m.tp) {
    ClassStats& s = stats[category_of_id(t.gt_id)];
    ++s.tp;
    s.iou_sum += t.iou;
  }
  for (std::uint32_t id : m.fp) ++stats[category_of_id(id)].fp;
  for (std::uint32_t id : m.fn) ++stats[category_of_id(id)].fn;
  return stats;
}

PanopticReport compute_pq(const std::map<std::uint32_t, ClassStats>& per_class,
                          const CategoryTable& cats) {
  if (cats.empty()) {
    throw std::invalid_argument("compute_pq: empty category table");
  }
  cats.validate();
  bool has_thing = false, has_stuff = false;
  for (const auto& c : cats.entries) (c.isthing ? has_thing : has_stuff) = true;
  if (!has_thing || !has_stuff) {
    throw std::invalid_argument(
        "compute_pq: category table needs at least one thing and one stuff class");
  }

  PanopticReport report;
  double pq_all = 0.0, pq_th = 0.0, pq_st = 0.0;
  for (const auto& c : cats.entries) {
    auto it = per_class.find(c.id);
    if (it == per_class.end() || !it->second.touched()) continue;
    const ClassStats& s = it->second;
    PerClassQuality q;
    q.counts = s;
    const double denom =
        static_cast<double>(s.tp) + 0.5 * static_cast<double>(s.fp) +
        0.5 * static_cast<double>(s.fn);
    q.pq = denom == 0.0 ? 0.0 : s.iou_sum / denom;
    q.sq = s.tp == 0 ? 0.0 : s.iou_sum / static_cast<double>(s.tp);
    q.rq = denom == 0.0 ? 0.0 : static_cast<double>(s.tp) / denom;
    report.per_class[c.id] = q;

    pq_all += q.pq;
    ++report.n_all;
    if (c.isthing) {
      pq_th += q.pq;
      ++report.n_th;
    } else {
      pq_st += q.pq;
      ++report.n_st;
    }
  }
  report.pq_all = report.n_all == 0 ? 0.0 : pq_all / report.n_all;
  report.pq_th = report.n_th == 0 ? 0.0 : pq_th / report.n_th;
  report.pq_st = report.n_st == 0 ? 0.0 : pq_st / report.n_st;
  return report;
}

PanopticReport compute_pq(const MatchResult& m, const CategoryTable& cats) {
  return compute_pq(per_class_stats(m), cats);
}

double compute_ca_iou(const LabelMap& pred_unknown, const LabelMap& gt_unknown) {
  if (!pred_unknown.same_size(gt_unknown)) {
    throw std::invalid_argument("compute_ca_iou: mask dimensions differ");
  }
  std::uint64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred_unknown.ids.size(); ++i) {
    const bool p = pred_unknown.ids[i] != kVoidId;
    const bool g = gt_unknown.ids[i] != kVoidId;
    inter += p && g;
    uni += p || g;
  }
  return ca_iou_from_counts(inter, uni);
}

void CAAccumulator::add(const MatchResult& m) {
  for (const auto& t : m.tp) iou_sum += t.iou;
  tp += m.tp.size();
  fp += m.fp.size();
  fn += m.fn.size();
}

CAReport CAAccumulator::finalize() const {
  CAReport r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  r.sq = tp == 0 ? 0.0 : iou_sum / static_cast<double>(tp);
  r.rq = (tp + fn) == 0 ? 0.0
                        : static_cast<double>(tp) / static_cast<double>(tp + fn);
  r.caq = r.sq * r.rq;
  return r;
}

}  // namespace caseval
