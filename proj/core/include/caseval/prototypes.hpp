#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "caseval/tensor_io.hpp"

namespace caseval {

// Per-pixel feature vectors; same layout as Tensor3.
using FeatureMap = Tensor3;

// Per-pixel fine-grained class ids; 0 marks unlabeled pixels.
struct ClassMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> labels;

  std::uint32_t at(int x, int y) const {
    return labels[static_cast<std::size_t>(y) * width + x];
  }
};

struct Prototype {
  std::uint32_t class_id = 0;
  std::vector<double> vec;
  std::uint64_t support = 0;  // pixels pooled
};

struct PoolOptions {
  // L2-normalize each feature vector before pooling.
  bool l2_normalize = false;
};

// Mean feature vector over pixels labeled class_id across the batch.
// Throws std::invalid_argument when the class is absent or a mask does not
// tile its feature map by an integer factor.
Prototype masked_average_pool(
    const std::vector<std::pair<const FeatureMap*, const ClassMask*>>& batch,
    std::uint32_t class_id, const PoolOptions& opts = {});

// Prototypes for every class id present in the batch, ascending by id.
std::vector<Prototype> pool_all_classes(
    const std::vector<std::pair<const FeatureMap*, const ClassMask*>>& batch,
    const PoolOptions& opts = {});

// Symmetric Euclidean distance matrix with zero diagonal.
// Throws std::invalid_argument on mixed dimensionalities.
Eigen::MatrixXd pairwise_distances(const std::vector<Prototype>& ps);

enum class Linkage { kAverage, kSingle, kComplete };

Linkage linkage_from_string(const std::string& name);

struct Merge {
  int left = 0;   // node index: 0..n-1 leaves, n+k the cluster from merge k
  int right = 0;
  double height = 0.0;

  bool operator==(const Merge& o) const = default;
};

struct Dendrogram {
  std::vector<std::uint32_t> leaves;  // class ids in leaf order
  std::vector<Merge> merges;          // exactly leaves.size()-1 entries

  bool operator==(const Dendrogram& o) const = default;
};

// Hierarchical merge tree over a symmetric distance matrix. Ties break on
// the smallest (left, right) node index pair. Throws std::invalid_argument
// for fewer than 2 items or an asymmetric matrix.
Dendrogram agglomerative_cluster(const Eigen::MatrixXd& dist,
                                 const std::vector<std::uint32_t>& leaf_ids,
                                 Linkage linkage = Linkage::kAverage);

// Nested-node JSON with class names and merge heights; deserialize inverts.
nlohmann::ordered_json serialize_dendrogram(
    const Dendrogram& d, const std::map<std::uint32_t, std::string>& names = {});
Dendrogram deserialize_dendrogram(const nlohmann::json& doc);

}  // namespace caseval
