#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "caseval/label_map.hpp"
#include "caseval/tensor_io.hpp"

namespace caseval {

// Pixel labels: 0 = ignore, 1..C = known classes, C+1 = unknown.
constexpr int kIgnoreLabel = 0;

struct EmbeddingMap {
  int embedding_dim = 0;
  int num_classes = 0;                 // C
  std::vector<double> embeddings;      // N * E, pixel-major
  std::vector<int> labels;             // N

  int num_pixels() const { return static_cast<int>(labels.size()); }
  int unknown_label() const { return num_classes + 1; }
  Eigen::Map<const Eigen::VectorXd> embedding(int i) const {
    return {embeddings.data() + static_cast<std::size_t>(i) * embedding_dim,
            embedding_dim};
  }
};

// Builds an EmbeddingMap from an embedding tensor and a label image of the
// same grid. Throws std::invalid_argument on size mismatch or labels
// outside [0, C+1].
EmbeddingMap embedding_map_from(const Tensor3& embeddings,
                                const LabelMap& labels, int num_classes);

// Learnable state of the prototype-distance head: per-class (mu_k, sigma_k)
// with sigma stored as log for positivity, the global unknown constant
// gamma, and the contrastive projection.
struct OpenSetParams {
  Eigen::MatrixXd mu;         // C x E
  Eigen::VectorXd log_sigma;  // C
  double gamma = 0.0;
  Eigen::MatrixXd projection; // P x E

  int num_classes() const { return static_cast<int>(mu.rows()); }
  int embedding_dim() const { return static_cast<int>(mu.cols()); }
  int projection_dim() const { return static_cast<int>(projection.rows()); }
  Eigen::VectorXd sigma() const { return log_sigma.array().exp(); }
};

// C+1 scores: d_k = -|m - mu_k|^2 / (2 sigma_k^2) for known classes,
// d_{C+1} = gamma.
Eigen::VectorXd class_distances(const Eigen::VectorXd& embedding,
                                const OpenSetParams& p);

// Numerically stable softmax.
Eigen::VectorXd softmax_probs(const Eigen::VectorXd& scores);

// Softmax over the C+1 scores.
Eigen::VectorXd predict_probs(const Eigen::VectorXd& embedding,
                              const OpenSetParams& p);

// Mean cross-entropy -log p(y_i) over non-ignored pixels.
// Throws std::invalid_argument when every pixel is ignored.
double seg_loss(const EmbeddingMap& batch, const OpenSetParams& p);

// Deterministic per-class pixel sampling for the contrastive term: up to
// per_class pixels of every non-ignore label, in label order.
std::vector<int> sample_per_class(const EmbeddingMap& batch, int per_class,
                                  std::mt19937_64& rng);

// Supervised normalized-temperature contrastive loss over projected,
// L2-normalized embeddings of the sampled pixels; same-label pairs are
// positives. Throws std::invalid_argument when the sample holds fewer than
// 2 distinct labels or no positive pair.
double contrastive_loss(const EmbeddingMap& batch, const OpenSetParams& p,
                        const std::vector<int>& sample, double temperature);

struct LossBreakdown {
  double l_seg = 0.0;
  double l_cl = 0.0;
  double total = 0.0;
  double lambda = 0.0;
};

struct Gradients {
  Eigen::MatrixXd mu;
  Eigen::VectorXd log_sigma;
  double gamma = 0.0;
  Eigen::MatrixXd projection;

  static Gradients zero(const OpenSetParams& p);
};

// Analytic gradients of L = l_seg + lambda * l_cl with respect to all
// parameters. The contrastive term is evaluated on the given sample and
// contributes only to the projection gradient; pass an empty sample (with
// lambda 0) to skip it.
LossBreakdown gradients(const EmbeddingMap& batch, const OpenSetParams& p,
                        double lambda, double temperature,
                        const std::vector<int>& sample, Gradients& out);

struct TrainConfig {
  double learning_rate = 0.005;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int steps = 500;
  std::vector<int> lr_drop_steps;  // steps at which lr is multiplied by factor
  double lr_drop_factor = 0.1;
  double lambda = 0.1;
  double temperature = 0.1;
  int samples_per_class = 32;
  int projection_dim = 0;          // 0: same as embedding dim
  std::uint64_t seed = 1;

  static TrainConfig from_json(const nlohmann::json& j);
  nlohmann::ordered_json to_json() const;
};

struct TrainResult {
  OpenSetParams params;
  std::vector<LossBreakdown> losses;  // one entry per optimizer step
};

// SGD with momentum, weight decay, and a step learning-rate schedule over
// the given batches (cycled). mu is initialized by masked average pooling
// of the first batch unless initial params are supplied. Aborts with
// std::runtime_error if the loss turns non-finite.
TrainResult train(const std::vector<EmbeddingMap>& batches,
                  const TrainConfig& config,
                  const std::optional<OpenSetParams>& initial = std::nullopt);

// Per-pixel argmax class in 1..C+1 (ignore pixels are still classified).
std::vector<int> predict_labels(const EmbeddingMap& batch,
                                const OpenSetParams& p);

// Pixel marked unknown iff the argmax over the C+1 probabilities is C+1.
std::vector<std::uint8_t> predict_unknown_mask(const EmbeddingMap& batch,
                                               const OpenSetParams& p);

// Binary checkpoint (little-endian): header + doubles for all parameters.
void save_checkpoint(const std::string& path, const OpenSetParams& p);
OpenSetParams load_checkpoint(const std::string& path);

}  // namespace caseval
