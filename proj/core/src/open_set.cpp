#include "caseval/open_set.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace caseval {

EmbeddingMap embedding_map_from(const Tensor3& embeddings,
                                const LabelMap& labels, int num_classes) {
  if (static_cast<int>(embeddings.width) != labels.width ||
      static_cast<int>(embeddings.height) != labels.height) {
    throw std::invalid_argument("embedding_map_from: grid size mismatch");
  }
  if (num_classes < 1) {
    throw std::invalid_argument("embedding_map_from: need at least one class");
  }
  EmbeddingMap m;
  m.embedding_dim = static_cast<int>(embeddings.channels);
  m.num_classes = num_classes;
  m.embeddings.assign(embeddings.values.begin(), embeddings.values.end());
  m.labels.resize(labels.ids.size());
  for (std::size_t i = 0; i < labels.ids.size(); ++i) {
    const std::uint32_t v = labels.ids[i];
    if (v > static_cast<std::uint32_t>(num_classes) + 1) {
      throw std::invalid_argument("embedding_map_from: label " +
                                  std::to_string(v) + " outside [0, C+1]");
    }
    m.labels[i] = static_cast<int>(v);
  }
  return m;
}

Eigen::VectorXd class_distances(const Eigen::VectorXd& embedding,
                                const OpenSetParams& p) {
  if (embedding.size() != p.embedding_dim()) {
    throw std::invalid_argument("class_distances: embedding dimension mismatch");
  }
  const int c = p.num_classes();
  Eigen::VectorXd scores(c + 1);
  for (int k = 0; k < c; ++k) {
    const double sigma = std::exp(p.log_sigma(k));
    const double sq = (embedding - p.mu.row(k).transpose()).squaredNorm();
    scores(k) = -sq / (2.0 * sigma * sigma);
  }
  scores(c) = p.gamma;
  return scores;
}

Eigen::VectorXd softmax_probs(const Eigen::VectorXd& scores) {
  const Eigen::VectorXd shifted =
      (scores.array() - scores.maxCoeff()).exp();
  return shifted / shifted.sum();
}

Eigen::VectorXd predict_probs(const Eigen::VectorXd& embedding,
                              const OpenSetParams& p) {
  return softmax_probs(class_distances(embedding, p));
}

double seg_loss(const EmbeddingMap& batch, const OpenSetParams& p) {
  double sum = 0.0;
  std::int64_t count = 0;
  for (int i = 0; i < batch.num_pixels(); ++i) {
    if (batch.labels[i] == kIgnoreLabel) continue;
    const Eigen::VectorXd probs = predict_probs(batch.embedding(i), p);
    sum += -std::log(probs(batch.labels[i] - 1));
    ++count;
  }
  if (count == 0) {
    throw std::invalid_argument("seg_loss: every pixel is ignored");
  }
  return sum / static_cast<double>(count);
}

std::vector<int> sample_per_class(const EmbeddingMap& batch, int per_class,
                                  std::mt19937_64& rng) {
  std::map<int, std::vector<int>> by_label;
  for (int i = 0; i < batch.num_pixels(); ++i) {
    if (batch.labels[i] != kIgnoreLabel) by_label[batch.labels[i]].push_back(i);
  }
  std::vector<int> sample;
  for (auto& [label, idx] : by_label) {
    // Deterministic partial Fisher-Yates draw.
    const int take = std::min<int>(per_class, static_cast<int>(idx.size()));
    for (int j = 0; j < take; ++j) {
      const std::size_t pick =
          j + static_cast<std::size_t>(rng() % (idx.size() - j));
      std::swap(idx[j], idx[pick]);
      sample.push_back(idx[j]);
    }
  }
  std::sort(sample.begin(), sample.end());
  return sample;
}

namespace {

struct ContrastiveWork {
  Eigen::MatrixXd z;        // S x P, normalized projections
  Eigen::MatrixXd pre;      // S x P, projections before normalization
  Eigen::VectorXd pre_norm; // S
  std::vector<int> labels;
};

ContrastiveWork project_sample(const EmbeddingMap& batch,
                               const OpenSetParams& p,
                               const std::vector<int>& sample) {
  const int s = static_cast<int>(sample.size());
  ContrastiveWork w;
  w.pre.resize(s, p.projection_dim());
  w.z.resize(s, p.projection_dim());
  w.pre_norm.resize(s);
  w.labels.resize(s);
  for (int i = 0; i < s; ++i) {
    const Eigen::VectorXd a = p.projection * batch.embedding(sample[i]);
    const double norm = std::max(a.norm(), 1e-12);
    w.pre.row(i) = a.transpose();
    w.pre_norm(i) = norm;
    w.z.row(i) = (a / norm).transpose();
    w.labels[i] = batch.labels[sample[i]];
  }
  return w;
}

// Supervised contrastive loss on normalized projections; optionally
// accumulates d loss / d z into dz.
double supcon_loss(const ContrastiveWork& w, double temperature,
                   Eigen::MatrixXd* dz) {
  const int s = static_cast<int>(w.labels.size());
  {
    std::vector<int> distinct(w.labels);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()),
                   distinct.end());
    if (distinct.size() < 2) {
      throw std::invalid_argument(
          "contrastive_loss: need at least 2 classes in the sample");
    }
  }

  const Eigen::MatrixXd sim = (w.z * w.z.transpose()) / temperature;

  int anchors = 0;
  double loss = 0.0;
  if (dz) dz->setZero(s, w.z.cols());

  // Row-wise log-sum-exp over a != i, with softmax weights for gradients.
  for (int i = 0; i < s; ++i) {
    int positives = 0;
    for (int a = 0; a < s; ++a) {
      if (a != i && w.labels[a] == w.labels[i]) ++positives;
    }
    if (positives == 0) continue;
    ++anchors;

    double max_s = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < s; ++a) {
      if (a != i) max_s = std::max(max_s, sim(i, a));
    }
    double denom = 0.0;
    for (int a = 0; a < s; ++a) {
      if (a != i) denom += std::exp(sim(i, a) - max_s);
    }
    const double log_denom = std::log(denom) + max_s;

    double pos_sum = 0.0;
    for (int a = 0; a < s; ++a) {
      if (a != i && w.labels[a] == w.labels[i]) pos_sum += sim(i, a);
    }
    loss += -(pos_sum / positives - log_denom);

    if (dz) {
      for (int a = 0; a < s; ++a) {
        if (a == i) continue;
        const double softmax_w = std::exp(sim(i, a) - log_denom);
        double g = softmax_w;
        if (w.labels[a] == w.labels[i]) g -= 1.0 / positives;
        // d loss_i / d sim(i,a) = g; sim = z_i . z_a / temperature.
        dz->row(i) += g * w.z.row(a) / temperature;
        dz->row(a) += g * w.z.row(i) / temperature;
      }
    }
  }
  if (anchors == 0) {
    throw std::invalid_argument("contrastive_loss: no positive pair in sample");
  }
  if (dz) *dz /= static_cast<double>(anchors);
  return loss / static_cast<double>(anchors);
}

}  // namespace

double contrastive_loss(const EmbeddingMap& batch, const OpenSetParams& p,
                        const std::vector<int>& sample, double temperature) {
  if (sample.size() < 2) {
    throw std::invalid_argument("contrastive_loss: sample too small");
  }
  const ContrastiveWork w = project_sample(batch, p, sample);
  return supcon_loss(w, temperature, nullptr);
}

Gradients Gradients::zero(const OpenSetParams& p) {
  Gradients g;
  g.mu = Eigen::MatrixXd::Zero(p.mu.rows(), p.mu.cols());
  g.log_sigma = Eigen::VectorXd::Zero(p.log_sigma.size());
  g.gamma = 0.0;
  g.projection = Eigen::MatrixXd::Zero(p.projection.rows(), p.projection.cols());
  return g;
}

LossBreakdown gradients(const EmbeddingMap& batch, const OpenSetParams& p,
                        double lambda, double temperature,
                        const std::vector<int>& sample, Gradients& out) {
  out = Gradients::zero(p);
  const int c = p.num_classes();

  double seg_sum = 0.0;
  std::int64_t count = 0;
  for (int i = 0; i < batch.num_pixels(); ++i) {
    if (batch.labels[i] == kIgnoreLabel) continue;
    ++count;
  }
  if (count == 0) {
    throw std::invalid_argument("gradients: every pixel is ignored");
  }
  const double inv_count = 1.0 / static_cast<double>(count);

  for (int i = 0; i < batch.num_pixels(); ++i) {
    if (batch.labels[i] == kIgnoreLabel) continue;
    const Eigen::VectorXd m = batch.embedding(i);
    const Eigen::VectorXd scores = class_distances(m, p);
    const Eigen::VectorXd probs = softmax_probs(scores);
    const int target = batch.labels[i] - 1;
    seg_sum += -std::log(probs(target));

    for (int k = 0; k <= c; ++k) {
      const double g_score = (probs(k) - (k == target ? 1.0 : 0.0)) * inv_count;
      if (k == c) {
        out.gamma += g_score;
      } else {
        const double sigma = std::exp(p.log_sigma(k));
        const Eigen::VectorXd diff = m - p.mu.row(k).transpose();
        // d score / d mu_k = diff / sigma^2; d score / d log_sigma = -2 score.
        out.mu.row(k) += (g_score / (sigma * sigma)) * diff.transpose();
        out.log_sigma(k) += g_score * (-2.0 * scores(k));
      }
    }
  }

  LossBreakdown loss;
  loss.lambda = lambda;
  loss.l_seg = seg_sum * inv_count;

  if (lambda != 0.0 && !sample.empty()) {
    const ContrastiveWork w = project_sample(batch, p, sample);
    Eigen::MatrixXd dz;
    loss.l_cl = supcon_loss(w, temperature, &dz);
    // Backprop through z = a / |a| and a = W e.
    for (int i = 0; i < static_cast<int>(sample.size()); ++i) {
      const Eigen::VectorXd zi = w.z.row(i).transpose();
      const Eigen::VectorXd gz = dz.row(i).transpose();
      const Eigen::VectorXd ga = (gz - zi.dot(gz) * zi) / w.pre_norm(i);
      out.projection.noalias() +=
          lambda * ga * batch.embedding(sample[i]).transpose();
    }
  }
  loss.total = loss.l_seg + lambda * loss.l_cl;
  return loss;
}

namespace {

Eigen::MatrixXd pooled_class_means(const std::vector<EmbeddingMap>& batches,
                                   int num_classes, int dim) {
  Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(num_classes, dim);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(num_classes);
  auto accumulate = [&](const EmbeddingMap& b) {
    for (int i = 0; i < b.num_pixels(); ++i) {
      const int label = b.labels[i];
      if (label >= 1 && label <= num_classes) {
        mu.row(label - 1) += b.embedding(i).transpose();
        counts(label - 1) += 1.0;
      }
    }
  };
  // First batch preferred; later batches only fill classes it lacks.
  accumulate(batches.front());
  for (int k = 0; k < num_classes; ++k) {
    if (counts(k) > 0.0) mu.row(k) /= counts(k);
  }
  for (std::size_t bi = 1; bi < batches.size(); ++bi) {
    bool missing = false;
    for (int k = 0; k < num_classes; ++k) missing |= counts(k) == 0.0;
    if (!missing) break;
    Eigen::MatrixXd extra = Eigen::MatrixXd::Zero(num_classes, dim);
    Eigen::VectorXd extra_counts = Eigen::VectorXd::Zero(num_classes);
    const EmbeddingMap& b = batches[bi];
    for (int i = 0; i < b.num_pixels(); ++i) {
      const int label = b.labels[i];
      if (label >= 1 && label <= num_classes && counts(label - 1) == 0.0) {
        extra.row(label - 1) += b.embedding(i).transpose();
        extra_counts(label - 1) += 1.0;
      }
    }
    for (int k = 0; k < num_classes; ++k) {
      if (counts(k) == 0.0 && extra_counts(k) > 0.0) {
        mu.row(k) = extra.row(k) / extra_counts(k);
        counts(k) = extra_counts(k);
      }
    }
  }
  return mu;
}

}  // namespace

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.steps = j.value("steps", c.steps);
  if (j.contains("lr_drop_steps")) {
    c.lr_drop_steps = j.at("lr_drop_steps").get<std::vector<int>>();
  }
  c.lr_drop_factor = j.value("lr_drop_factor", c.lr_drop_factor);
  c.lambda = j.value("lambda", c.lambda);
  c.temperature = j.value("temperature", c.temperature);
  c.samples_per_class = j.value("samples_per_class", c.samples_per_class);
  c.projection_dim = j.value("projection_dim", c.projection_dim);
  c.seed = j.value("seed", c.seed);
  return c;
}

nlohmann::ordered_json TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["learning_rate"] = learning_rate;
  j["momentum"] = momentum;
  j["weight_decay"] = weight_decay;
  j["steps"] = steps;
  j["lr_drop_steps"] = lr_drop_steps;
  j["lr_drop_factor"] = lr_drop_factor;
  j["lambda"] = lambda;
  j["temperature"] = temperature;
  j["samples_per_class"] = samples_per_class;
  j["projection_dim"] = projection_dim;
  j["seed"] = seed;
  return j;
}

TrainResult train(const std::vector<EmbeddingMap>& batches,
                  const TrainConfig& config,
                  const std::optional<OpenSetParams>& initial) {
  if (batches.empty()) {
    throw std::invalid_argument("train: no batches");
  }
  const int num_classes = batches.front().num_classes;
  const int dim = batches.front().embedding_dim;
  for (const auto& b : batches) {
    if (b.num_classes != num_classes || b.embedding_dim != dim) {
      throw std::invalid_argument("train: inconsistent batch shapes");
    }
  }

  std::mt19937_64 rng(config.seed);

  OpenSetParams p;
  if (initial) {
    p = *initial;
  } else {
    p.mu = pooled_class_means(batches, num_classes, dim);
    p.log_sigma = Eigen::VectorXd::Zero(num_classes);
    p.gamma = 0.0;
    const int proj = config.projection_dim > 0 ? config.projection_dim : dim;
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(dim));
    p.projection.resize(proj, dim);
    for (int r = 0; r < proj; ++r) {
      for (int c = 0; c < dim; ++c) p.projection(r, c) = normal(rng);
    }
  }

  Gradients velocity = Gradients::zero(p);
  Gradients grad = Gradients::zero(p);

  std::vector<int> drops(config.lr_drop_steps);
  std::sort(drops.begin(), drops.end());

  TrainResult result;
  result.losses.reserve(config.steps);

  double lr = config.learning_rate;
  for (int step = 0; step < config.steps; ++step) {
    for (int d : drops) {
      if (d == step) lr *= config.lr_drop_factor;
    }
    const EmbeddingMap& batch = batches[step % batches.size()];

    std::vector<int> sample;
    if (config.lambda != 0.0) {
      sample = sample_per_class(batch, config.samples_per_class, rng);
    }
    const LossBreakdown loss =
        gradients(batch, p, config.lambda, config.temperature, sample, grad);
    if (!std::isfinite(loss.total)) {
      throw std::runtime_error("train: non-finite loss at step " +
                               std::to_string(step) + " (l_seg=" +
                               std::to_string(loss.l_seg) + ", l_cl=" +
                               std::to_string(loss.l_cl) + ")");
    }
    result.losses.push_back(loss);

    // SGD with momentum; weight decay folds into the gradient.
    auto update = [&](auto& param, auto& vel, const auto& g) {
      vel = config.momentum * vel + (g + config.weight_decay * param);
      param -= lr * vel;
    };
    update(p.mu, velocity.mu, grad.mu);
    update(p.log_sigma, velocity.log_sigma, grad.log_sigma);
    update(p.gamma, velocity.gamma, grad.gamma);
    update(p.projection, velocity.projection, grad.projection);
  }

  result.params = std::move(p);
  return result;
}

std::vector<int> predict_labels(const EmbeddingMap& batch,
                                const OpenSetParams& p) {
  std::vector<int> out(batch.num_pixels());
  for (int i = 0; i < batch.num_pixels(); ++i) {
    const Eigen::VectorXd scores = class_distances(batch.embedding(i), p);
    int best = 0;
    scores.maxCoeff(&best);
    out[i] = best + 1;
  }
  return out;
}

std::vector<std::uint8_t> predict_unknown_mask(const EmbeddingMap& batch,
                                               const OpenSetParams& p) {
  const std::vector<int> labels = predict_labels(batch, p);
  std::vector<std::uint8_t> mask(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    mask[i] = labels[i] == batch.unknown_label() ? 1 : 0;
  }
  return mask;
}

namespace {
constexpr char kCheckpointMagic[8] = {'C', 'S', 'O', 'S', 'P', '1', 0, 0};
}

void save_checkpoint(const std::string& path, const OpenSetParams& p) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, 8);
  const std::uint32_t c = static_cast<std::uint32_t>(p.num_classes());
  const std::uint32_t e = static_cast<std::uint32_t>(p.embedding_dim());
  const std::uint32_t proj = static_cast<std::uint32_t>(p.projection_dim());
  out.write(reinterpret_cast<const char*>(&c), 4);
  out.write(reinterpret_cast<const char*>(&e), 4);
  out.write(reinterpret_cast<const char*>(&proj), 4);
  out.write(reinterpret_cast<const char*>(&p.gamma), 8);
  auto write_matrix = [&](const Eigen::MatrixXd& m) {
    for (int r = 0; r < m.rows(); ++r) {
      for (int col = 0; col < m.cols(); ++col) {
        const double v = m(r, col);
        out.write(reinterpret_cast<const char*>(&v), 8);
      }
    }
  };
  write_matrix(p.mu);
  for (int k = 0; k < p.log_sigma.size(); ++k) {
    const double v = p.log_sigma(k);
    out.write(reinterpret_cast<const char*>(&v), 8);
  }
  write_matrix(p.projection);
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

OpenSetParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  std::uint32_t c = 0, e = 0, proj = 0;
  in.read(reinterpret_cast<char*>(&c), 4);
  in.read(reinterpret_cast<char*>(&e), 4);
  in.read(reinterpret_cast<char*>(&proj), 4);
  OpenSetParams p;
  in.read(reinterpret_cast<char*>(&p.gamma), 8);
  p.mu.resize(c, e);
  p.log_sigma.resize(c);
  p.projection.resize(proj, e);
  auto read_matrix = [&](Eigen::MatrixXd& m) {
    for (int r = 0; r < m.rows(); ++r) {
      for (int col = 0; col < m.cols(); ++col) {
        double v = 0.0;
        in.read(reinterpret_cast<char*>(&v), 8);
        m(r, col) = v;
      }
    }
  };
  read_matrix(p.mu);
  for (std::uint32_t k = 0; k < c; ++k) {
    double v = 0.0;
    in.read(reinterpret_cast<char*>(&v), 8);
    p.log_sigma(k) = v;
  }
  read_matrix(p.projection);
  if (!in) throw std::runtime_error("truncated checkpoint: " + path);
  return p;
}

}  // namespace caseval
