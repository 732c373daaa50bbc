// Independent brute-force references the fast paths are checked against.
// Everything here recomputes from pixels or from the original distance
// matrix and must stay free of the library's matching/clustering internals.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <vector>

#include "caseval/label_map.hpp"
#include "caseval/metrics.hpp"
#include "caseval/prototypes.hpp"

namespace oracles {

struct BruteMatch {
  std::vector<caseval::TruePositive> tp;
  std::vector<std::uint32_t> fp;          // counting toward metrics
  std::vector<std::uint32_t> fp_ignored;  // unmatched, >50% on gt void
  std::vector<std::uint32_t> fn;
  double iou_sum = 0.0;
};

// O(P*G) matcher: every (pred, gt) pair is tested by a full pixel scan.
inline BruteMatch brute_force_match(const caseval::LabelMap& pred,
                                    const caseval::LabelMap& gt,
                                    bool class_aware) {
  std::set<std::uint32_t> pred_ids, gt_ids;
  for (auto id : pred.ids) {
    if (id != caseval::kVoidId) pred_ids.insert(id);
  }
  for (auto id : gt.ids) {
    if (id != caseval::kVoidId) gt_ids.insert(id);
  }

  BruteMatch result;
  std::set<std::uint32_t> matched_pred, matched_gt;
  for (std::uint32_t p : pred_ids) {
    for (std::uint32_t g : gt_ids) {
      if (class_aware &&
          caseval::category_of_id(p) != caseval::category_of_id(g)) {
        continue;
      }
      std::uint64_t inter = 0, pred_nonvoid = 0, gt_area = 0;
      for (std::size_t i = 0; i < pred.ids.size(); ++i) {
        const bool in_p = pred.ids[i] == p;
        const bool in_g = gt.ids[i] == g;
        inter += in_p && in_g;
        pred_nonvoid += in_p && gt.ids[i] != caseval::kVoidId;
        gt_area += in_g;
      }
      const std::uint64_t uni = pred_nonvoid + gt_area - inter;
      const double iou =
          uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
      if (iou > 0.5) {
        result.tp.push_back({p, g, iou});
        result.iou_sum += iou;
        matched_pred.insert(p);
        matched_gt.insert(g);
      }
    }
  }
  for (std::uint32_t p : pred_ids) {
    if (matched_pred.count(p)) continue;
    std::uint64_t area = 0, on_void = 0;
    for (std::size_t i = 0; i < pred.ids.size(); ++i) {
      if (pred.ids[i] == p) {
        ++area;
        on_void += gt.ids[i] == caseval::kVoidId;
      }
    }
    if (2 * on_void > area) {
      result.fp_ignored.push_back(p);
    } else {
      result.fp.push_back(p);
    }
  }
  for (std::uint32_t g : gt_ids) {
    if (!matched_gt.count(g)) result.fn.push_back(g);
  }
  std::sort(result.tp.begin(), result.tp.end(),
            [](const caseval::TruePositive& a, const caseval::TruePositive& b) {
              return a.pred_id < b.pred_id;
            });
  return result;
}

// Exhaustive-recompute hierarchical clustering: at every step the linkage is
// re-derived from the original matrix over all member pairs.
inline caseval::Dendrogram brute_force_linkage(
    const Eigen::MatrixXd& dist, const std::vector<std::uint32_t>& leaf_ids,
    caseval::Linkage linkage) {
  const int n = static_cast<int>(dist.rows());
  struct Cluster {
    int node;
    std::vector<int> members;  // original leaf indices
  };
  std::vector<Cluster> active;
  for (int i = 0; i < n; ++i) active.push_back({i, {i}});

  caseval::Dendrogram out;
  out.leaves = leaf_ids;

  for (int step = 0; step < n - 1; ++step) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 1;
    bool first = true;
    for (std::size_t i = 0; i < active.size(); ++i) {
      for (std::size_t j = i + 1; j < active.size(); ++j) {
        double v = 0.0;
        switch (linkage) {
          case caseval::Linkage::kAverage: {
            double sum = 0.0;
            for (int a : active[i].members) {
              for (int b : active[j].members) sum += dist(a, b);
            }
            v = sum / (static_cast<double>(active[i].members.size()) *
                       static_cast<double>(active[j].members.size()));
            break;
          }
          case caseval::Linkage::kSingle: {
            v = std::numeric_limits<double>::infinity();
            for (int a : active[i].members) {
              for (int b : active[j].members) v = std::min(v, dist(a, b));
            }
            break;
          }
          case caseval::Linkage::kComplete: {
            v = 0.0;
            for (int a : active[i].members) {
              for (int b : active[j].members) v = std::max(v, dist(a, b));
            }
            break;
          }
        }
        const int lo = std::min(active[i].node, active[j].node);
        const int hi = std::max(active[i].node, active[j].node);
        const int cur_lo = std::min(active[bi].node, active[bj].node);
        const int cur_hi = std::max(active[bi].node, active[bj].node);
        if (first || v < best ||
            (v == best && (lo < cur_lo || (lo == cur_lo && hi < cur_hi)))) {
          best = v;
          bi = i;
          bj = j;
          first = false;
        }
      }
    }
    caseval::Merge m;
    m.left = std::min(active[bi].node, active[bj].node);
    m.right = std::max(active[bi].node, active[bj].node);
    m.height = best;
    out.merges.push_back(m);

    Cluster merged;
    merged.node = n + step;
    merged.members = active[bi].members;
    merged.members.insert(merged.members.end(), active[bj].members.begin(),
                          active[bj].members.end());
    if (bi > bj) std::swap(bi, bj);
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(bj));
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(bi));
    active.push_back(merged);
    std::sort(active.begin(), active.end(),
              [](const Cluster& a, const Cluster& b) { return a.node < b.node; });
  }
  return out;
}

}  // namespace oracles
