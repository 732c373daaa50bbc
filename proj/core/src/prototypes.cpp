#include "caseval/prototypes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace caseval {

namespace {

// Mask grids may be an integer multiple of the feature grid; sample the mask
// at the center of each feature cell.
std::uint32_t mask_label_at(const ClassMask& mask, const FeatureMap& fm, int fx,
                            int fy) {
  if (mask.width == static_cast<int>(fm.width) &&
      mask.height == static_cast<int>(fm.height)) {
    return mask.at(fx, fy);
  }
  const int kx = mask.width / static_cast<int>(fm.width);
  const int ky = mask.height / static_cast<int>(fm.height);
  if (kx <= 0 || ky <= 0 || mask.width != kx * static_cast<int>(fm.width) ||
      mask.height != ky * static_cast<int>(fm.height)) {
    throw std::invalid_argument(
        "mask dimensions are not an integer multiple of the feature map");
  }
  return mask.at(fx * kx + kx / 2, fy * ky + ky / 2);
}

}  // namespace

Prototype masked_average_pool(
    const std::vector<std::pair<const FeatureMap*, const ClassMask*>>& batch,
    std::uint32_t class_id, const PoolOptions& opts) {
  if (batch.empty()) {
    throw std::invalid_argument("masked_average_pool: empty batch");
  }
  const std::uint32_t channels = batch.front().first->channels;
  if (channels == 0) {
    throw std::invalid_argument("masked_average_pool: zero-channel features");
  }

  Prototype p;
  p.class_id = class_id;
  p.vec.assign(channels, 0.0);
  std::vector<double> buf(channels);

  for (const auto& [fm, mask] : batch) {
    if (fm->channels != channels) {
      throw std::invalid_argument("masked_average_pool: mixed channel counts");
    }
    for (int y = 0; y < static_cast<int>(fm->height); ++y) {
      for (int x = 0; x < static_cast<int>(fm->width); ++x) {
        if (mask_label_at(*mask, *fm, x, y) != class_id) continue;
        const float* v = fm->pixel(x, y);
        if (opts.l2_normalize) {
          double norm_sq = 0.0;
          for (std::uint32_t c = 0; c < channels; ++c) {
            norm_sq += static_cast<double>(v[c]) * v[c];
          }
          const double inv = norm_sq > 0.0 ? 1.0 / std::sqrt(norm_sq) : 0.0;
          for (std::uint32_t c = 0; c < channels; ++c) buf[c] = v[c] * inv;
        } else {
          for (std::uint32_t c = 0; c < channels; ++c) buf[c] = v[c];
        }
        for (std::uint32_t c = 0; c < channels; ++c) p.vec[c] += buf[c];
        ++p.support;
      }
    }
  }

  if (p.support == 0) {
    throw std::invalid_argument("masked_average_pool: class " +
                                std::to_string(class_id) +
                                " absent from batch");
  }
  for (double& c : p.vec) c /= static_cast<double>(p.support);
  return p;
}

std::vector<Prototype> pool_all_classes(
    const std::vector<std::pair<const FeatureMap*, const ClassMask*>>& batch,
    const PoolOptions& opts) {
  std::set<std::uint32_t> classes;
  for (const auto& [fm, mask] : batch) {
    for (int y = 0; y < static_cast<int>(fm->height); ++y) {
      for (int x = 0; x < static_cast<int>(fm->width); ++x) {
        const std::uint32_t c = mask_label_at(*mask, *fm, x, y);
        if (c != 0) classes.insert(c);
      }
    }
  }
  std::vector<Prototype> out;
  out.reserve(classes.size());
  for (std::uint32_t c : classes) {
    out.push_back(masked_average_pool(batch, c, opts));
  }
  return out;
}

Eigen::MatrixXd pairwise_distances(const std::vector<Prototype>& ps) {
  const int n = static_cast<int>(ps.size());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    if (ps[i].vec.size() != ps[0].vec.size()) {
      throw std::invalid_argument("pairwise_distances: mixed dimensionalities");
    }
    for (int j = i + 1; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t c = 0; c < ps[i].vec.size(); ++c) {
        const double diff = ps[i].vec[c] - ps[j].vec[c];
        sum += diff * diff;
      }
      d(i, j) = d(j, i) = std::sqrt(sum);
    }
  }
  return d;
}

Linkage linkage_from_string(const std::string& name) {
  if (name == "average") return Linkage::kAverage;
  if (name == "single") return Linkage::kSingle;
  if (name == "complete") return Linkage::kComplete;
  throw std::invalid_argument("unknown linkage: " + name);
}

Dendrogram agglomerative_cluster(const Eigen::MatrixXd& dist,
                                 const std::vector<std::uint32_t>& leaf_ids,
                                 Linkage linkage) {
  const int n = static_cast<int>(dist.rows());
  if (n < 2) {
    throw std::invalid_argument("agglomerative_cluster: need at least 2 items");
  }
  if (dist.cols() != n) {
    throw std::invalid_argument("agglomerative_cluster: matrix not square");
  }
  if (static_cast<int>(leaf_ids.size()) != n) {
    throw std::invalid_argument("agglomerative_cluster: leaf id count mismatch");
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (std::abs(dist(i, j) - dist(j, i)) > 1e-12) {
        throw std::invalid_argument("agglomerative_cluster: matrix not symmetric");
      }
    }
  }

  struct Cluster {
    int node;         // dendrogram node index
    int size;         // leaf count
    bool active;
  };
  std::vector<Cluster> clusters(n);
  for (int i = 0; i < n; ++i) clusters[i] = {i, 1, true};

  // Lance-Williams update over a working copy of the distance matrix.
  Eigen::MatrixXd d = dist;

  Dendrogram out;
  out.leaves = leaf_ids;
  out.merges.reserve(n - 1);

  for (int step = 0; step < n - 1; ++step) {
    int bi = -1, bj = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      if (!clusters[i].active) continue;
      for (int j = i + 1; j < n; ++j) {
        if (!clusters[j].active) continue;
        const double v = d(i, j);
        // Tie-break on the smaller (left, right) node pair.
        const int li = std::min(clusters[i].node, clusters[j].node);
        const int ri = std::max(clusters[i].node, clusters[j].node);
        if (bi < 0 || v < best) {
          best = v;
          bi = i;
          bj = j;
        } else if (v == best) {
          const int cli = std::min(clusters[bi].node, clusters[bj].node);
          const int cri = std::max(clusters[bi].node, clusters[bj].node);
          if (li < cli || (li == cli && ri < cri)) {
            bi = i;
            bj = j;
          }
        }
      }
    }

    const int si = clusters[bi].size;
    const int sj = clusters[bj].size;
    for (int k = 0; k < n; ++k) {
      if (!clusters[k].active || k == bi || k == bj) continue;
      double nd = 0.0;
      switch (linkage) {
        case Linkage::kAverage:
          nd = (si * d(bi, k) + sj * d(bj, k)) / (si + sj);
          break;
        case Linkage::kSingle:
          nd = std::min(d(bi, k), d(bj, k));
          break;
        case Linkage::kComplete:
          nd = std::max(d(bi, k), d(bj, k));
          break;
      }
      d(bi, k) = d(k, bi) = nd;
    }

    Merge m;
    m.left = std::min(clusters[bi].node, clusters[bj].node);
    m.right = std::max(clusters[bi].node, clusters[bj].node);
    m.height = best;
    out.merges.push_back(m);

    clusters[bi].node = n + step;
    clusters[bi].size = si + sj;
    clusters[bj].active = false;
  }
  return out;
}

namespace {

nlohmann::ordered_json node_to_json(const Dendrogram& d, int node,
                                    const std::map<std::uint32_t, std::string>& names) {
  const int n = static_cast<int>(d.leaves.size());
  nlohmann::ordered_json j;
  if (node < n) {
    const std::uint32_t id = d.leaves[node];
    auto it = names.find(id);
    j["name"] = it != names.end() ? it->second : ("class_" + std::to_string(id));
    j["class_id"] = id;
  } else {
    const Merge& m = d.merges[node - n];
    j["merge"] = node - n;
    j["height"] = m.height;
    j["children"] =
        nlohmann::ordered_json::array({node_to_json(d, m.left, names),
                                       node_to_json(d, m.right, names)});
  }
  return j;
}

int node_from_json(const nlohmann::json& j,
                   const std::map<std::uint32_t, int>& leaf_index,
                   std::vector<Merge>& merges) {
  if (j.contains("class_id")) {
    return leaf_index.at(j.at("class_id").get<std::uint32_t>());
  }
  const int step = j.at("merge").get<int>();
  Merge& m = merges.at(step);
  m.height = j.at("height").get<double>();
  m.left = node_from_json(j.at("children").at(0), leaf_index, merges);
  m.right = node_from_json(j.at("children").at(1), leaf_index, merges);
  if (m.left > m.right) std::swap(m.left, m.right);
  return static_cast<int>(leaf_index.size()) + step;
}

}  // namespace

nlohmann::ordered_json serialize_dendrogram(
    const Dendrogram& d, const std::map<std::uint32_t, std::string>& names) {
  if (d.leaves.size() < 2 || d.merges.size() != d.leaves.size() - 1) {
    throw std::invalid_argument("serialize_dendrogram: malformed dendrogram");
  }
  nlohmann::ordered_json doc;
  doc["leaves"] = nlohmann::ordered_json::array();
  for (std::uint32_t id : d.leaves) {
    nlohmann::ordered_json leaf;
    leaf["class_id"] = id;
    auto it = names.find(id);
    leaf["name"] = it != names.end() ? it->second : ("class_" + std::to_string(id));
    doc["leaves"].push_back(leaf);
  }
  const int root = static_cast<int>(d.leaves.size()) + static_cast<int>(d.merges.size()) - 1;
  doc["root"] = node_to_json(d, root, names);
  return doc;
}

Dendrogram deserialize_dendrogram(const nlohmann::json& doc) {
  Dendrogram d;
  for (const auto& leaf : doc.at("leaves")) {
    d.leaves.push_back(leaf.at("class_id").get<std::uint32_t>());
  }
  const int n = static_cast<int>(d.leaves.size());
  if (n < 2) {
    throw std::invalid_argument("deserialize_dendrogram: fewer than 2 leaves");
  }
  d.merges.resize(n - 1);

  // The tree stores class ids at leaves; resolve them to leaf indices.
  std::map<std::uint32_t, int> leaf_index;
  for (int i = 0; i < n; ++i) leaf_index[d.leaves[i]] = i;
  node_from_json(doc.at("root"), leaf_index, d.merges);
  return d;
}

}  // namespace caseval
