#pragma once

// Softmax classifiers (linear or one hidden layer), the xi-clipped
// cross-entropy and momentum SGD. Losses report their gradient with respect
// to the predicted probabilities; backward() carries it through the softmax
// and the layers, so composite losses (transition-mixed predictions, soft
// targets) reuse the same backward pass.

#include "lccn/core.hpp"
#include "lccn/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace lccn {

enum class Activation { relu, tanh };

struct Architecture {
  int hidden_width = 0;  // 0 selects the linear softmax model
  Activation activation = Activation::relu;

  bool is_linear() const { return hidden_width == 0; }
};

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

struct ClassifierParams {
  Architecture architecture;
  int input_dim = 0;
  int num_classes = 0;
  std::vector<Layer> layers;  // one layer (linear) or two (mlp)
};

struct OptimizerState {
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<Layer> velocity;
  long step_count = 0;
};

struct LossConfig {
  double xi = 1e-20;
};

/// Piecewise-constant learning rate: entry (epoch, lr) applies from `epoch` on.
struct LrSchedule {
  std::vector<std::pair<int, double>> phases{{0, 0.1}};

  double at(int epoch) const {
    double lr = phases.front().second;
    for (const auto& [start, value] : phases)
      if (epoch >= start) lr = value;
    return lr;
  }
};

inline ClassifierParams init_classifier(const Architecture& arch, int input_dim, int num_classes, std::uint64_t seed) {
  detail::require(input_dim >= 1 && num_classes >= 2, "init_classifier: invalid dimensions");
  detail::require(arch.hidden_width >= 0, "init_classifier: hidden width must be >= 0");
  Rng rng = Rng::derive(seed, 0x5eed);
  ClassifierParams params{arch, input_dim, num_classes, {}};
  auto make_layer = [&rng](int out, int in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Layer layer{Matrix(out, in), Vector::Zero(out)};
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = bound * (2.0 * rng.uniform() - 1.0);
    return layer;
  };
  if (arch.is_linear()) {
    params.layers.push_back(make_layer(num_classes, input_dim));
  } else {
    params.layers.push_back(make_layer(arch.hidden_width, input_dim));
    params.layers.push_back(make_layer(num_classes, arch.hidden_width));
  }
  return params;
}

inline OptimizerState make_optimizer(const ClassifierParams& params, double learning_rate, double momentum = 0.9,
                                     double weight_decay = 5e-4) {
  detail::require(learning_rate >= 0.0, "optimizer: learning rate must be >= 0");
  detail::require(momentum >= 0.0 && momentum < 1.0, "optimizer: momentum must lie in [0, 1)");
  detail::require(weight_decay >= 0.0, "optimizer: weight decay must be >= 0");
  OptimizerState opt{learning_rate, momentum, weight_decay, {}, 0};
  for (const auto& layer : params.layers)
    opt.velocity.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()), Vector::Zero(layer.bias.size())});
  return opt;
}

/// Intermediate values of one forward pass, kept for backward().
struct ForwardCache {
  Matrix input;
  Matrix hidden_pre;  // empty for the linear model
  Matrix hidden;
  Matrix probs;
};

namespace detail {

inline void softmax_rows(Matrix& logits) {
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double top = logits.row(i).maxCoeff();
    logits.row(i) = (logits.row(i).array() - top).exp().matrix();
    logits.row(i) /= logits.row(i).sum();
  }
}

inline Matrix affine(const Matrix& x, const Layer& layer) {
  Matrix out = x * layer.weight.transpose();
  out.rowwise() += layer.bias.transpose();
  return out;
}

}  // namespace detail

inline Matrix logits(const ClassifierParams& params, const Matrix& features) {
  detail::require(features.cols() == params.input_dim, "forward: feature dimension mismatch");
  if (params.architecture.is_linear()) return detail::affine(features, params.layers[0]);
  Matrix hidden = detail::affine(features, params.layers[0]);
  if (params.architecture.activation == Activation::relu)
    hidden = hidden.cwiseMax(0.0);
  else
    hidden = hidden.array().tanh().matrix();
  return detail::affine(hidden, params.layers[1]);
}

inline ForwardCache forward(const ClassifierParams& params, const Matrix& features) {
  detail::require(features.cols() == params.input_dim, "forward: feature dimension mismatch");
  ForwardCache cache;
  cache.input = features;
  if (params.architecture.is_linear()) {
    cache.probs = detail::affine(features, params.layers[0]);
  } else {
    cache.hidden_pre = detail::affine(features, params.layers[0]);
    cache.hidden = params.architecture.activation == Activation::relu ? Matrix(cache.hidden_pre.cwiseMax(0.0))
                                                                      : Matrix(cache.hidden_pre.array().tanh().matrix());
    cache.probs = detail::affine(cache.hidden, params.layers[1]);
  }
  detail::softmax_rows(cache.probs);
  return cache;
}

/// Class probabilities, one softmax row per input row.
inline Matrix forward_proba(const ClassifierParams& params, const Matrix& features) {
  return forward(params, features).probs;
}

/// Loss value plus its gradient with respect to the probability matrix.
struct LossResult {
  double loss = 0.0;
  Matrix grad_probs;
};

/// Mean of -ln(clip(p[target], xi, 1 - xi)); the gradient is zero where the
/// clip is active.
inline LossResult clipped_cross_entropy(const Matrix& probs, std::span<const int> targets, const LossConfig& cfg = {}) {
  detail::require(cfg.xi > 0.0 && cfg.xi < 0.5, "clipped_cross_entropy: xi must lie in (0, 0.5)");
  detail::require(static_cast<std::size_t>(probs.rows()) == targets.size() && probs.rows() > 0,
                  "clipped_cross_entropy: one target per row required");
  const double m = static_cast<double>(probs.rows());
  LossResult out{0.0, Matrix::Zero(probs.rows(), probs.cols())};
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const int t = targets[static_cast<std::size_t>(i)];
    detail::require(t >= 0 && t < probs.cols(), "clipped_cross_entropy: target index out of range");
    const double p = probs(i, t);
    const double clipped = std::clamp(p, cfg.xi, 1.0 - cfg.xi);
    out.loss -= std::log(clipped);
    if (p > cfg.xi && p < 1.0 - cfg.xi) out.grad_probs(i, t) = -1.0 / (m * p);
  }
  out.loss /= m;
  return out;
}

/// Mean of -sum_k w[k] ln(clip(p[k])) for nonnegative per-row weights w.
inline LossResult weighted_clipped_cross_entropy(const Matrix& probs, const Matrix& weights,
                                                 const LossConfig& cfg = {}) {
  detail::require(cfg.xi > 0.0 && cfg.xi < 0.5, "weighted_clipped_cross_entropy: xi must lie in (0, 0.5)");
  detail::require(weights.rows() == probs.rows() && weights.cols() == probs.cols() && probs.rows() > 0,
                  "weighted_clipped_cross_entropy: shape mismatch");
  const double m = static_cast<double>(probs.rows());
  LossResult out{0.0, Matrix::Zero(probs.rows(), probs.cols())};
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    for (Eigen::Index k = 0; k < probs.cols(); ++k) {
      const double w = weights(i, k);
      if (w == 0.0) continue;
      const double p = probs(i, k);
      out.loss -= w * std::log(std::clamp(p, cfg.xi, 1.0 - cfg.xi));
      if (p > cfg.xi && p < 1.0 - cfg.xi) out.grad_probs(i, k) = -w / (m * p);
    }
  }
  out.loss /= m;
  return out;
}

/// Parameter gradients for a given dL/dprobs.
inline std::vector<Layer> backward(const ClassifierParams& params, const ForwardCache& cache, const Matrix& grad_probs) {
  // Softmax Jacobian: dL/dz_k = p_k (g_k - sum_j p_j g_j).
  const Vector inner = (cache.probs.cwiseProduct(grad_probs)).rowwise().sum();
  Matrix grad_logits = cache.probs.cwiseProduct(grad_probs.colwise() - inner);

  std::vector<Layer> grads(params.layers.size());
  if (params.architecture.is_linear()) {
    grads[0] = {grad_logits.transpose() * cache.input, grad_logits.colwise().sum().transpose()};
    return grads;
  }
  grads[1] = {grad_logits.transpose() * cache.hidden, grad_logits.colwise().sum().transpose()};
  Matrix grad_hidden = grad_logits * params.layers[1].weight;
  if (params.architecture.activation == Activation::relu)
    grad_hidden = grad_hidden.cwiseProduct((cache.hidden_pre.array() > 0.0).cast<double>().matrix());
  else
    grad_hidden = grad_hidden.cwiseProduct((1.0 - cache.hidden.array().square()).matrix());
  grads[0] = {grad_hidden.transpose() * cache.input, grad_hidden.colwise().sum().transpose()};
  return grads;
}

/// Momentum SGD (PyTorch convention: v = mu v + g + wd theta; theta -= lr v).
inline void apply_gradients(ClassifierParams& params, OptimizerState& opt, const std::vector<Layer>& grads) {
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    if (!grads[l].weight.allFinite() || !grads[l].bias.allFinite())
      throw TrainingError("sgd_step: non-finite gradient at step " + std::to_string(opt.step_count));
  }
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    Layer& layer = params.layers[l];
    Layer& vel = opt.velocity[l];
    vel.weight = opt.momentum * vel.weight + grads[l].weight + opt.weight_decay * layer.weight;
    vel.bias = opt.momentum * vel.bias + grads[l].bias + opt.weight_decay * layer.bias;
    layer.weight -= opt.learning_rate * vel.weight;
    layer.bias -= opt.learning_rate * vel.bias;
  }
  ++opt.step_count;
}

/// One optimizer step on an arbitrary probability-space loss.
/// `loss_fn(const Matrix& probs) -> LossResult`.
template <typename LossFn>
double sgd_step_with(ClassifierParams& params, OptimizerState& opt, const Matrix& features, LossFn&& loss_fn) {
  detail::require(features.rows() > 0, "sgd_step: empty minibatch");
  const ForwardCache cache = forward(params, features);
  const LossResult loss = loss_fn(cache.probs);
  if (!std::isfinite(loss.loss)) throw TrainingError("sgd_step: non-finite loss");
  apply_gradients(params, opt, backward(params, cache, loss.grad_probs));
  return loss.loss;
}

/// Momentum-SGD step on the mean xi-clipped cross-entropy of hard labels.
inline double sgd_step(ClassifierParams& params, OptimizerState& opt, const Matrix& features,
                       std::span<const int> labels, const LossConfig& cfg = {}) {
  return sgd_step_with(params, opt, features,
                       [&](const Matrix& probs) { return clipped_cross_entropy(probs, labels, cfg); });
}

/// Gathers rows of a feature matrix.
inline Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

/// Fixed-size minibatches over a seeded per-epoch permutation.
class EpochBatcher {
 public:
  EpochBatcher(std::size_t n, std::size_t batch_size) : n_(n), batch_size_(batch_size) {
    detail::require(batch_size >= 1, "batch size must be >= 1");
    detail::require(n >= 1, "cannot batch an empty dataset");
  }

  std::size_t batches_per_epoch() const { return (n_ + batch_size_ - 1) / batch_size_; }

  /// Batches of one epoch; consumes the rng for the permutation.
  std::vector<std::vector<std::size_t>> epoch(Rng& rng) const {
    std::vector<std::size_t> order(n_);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n_; start += batch_size_)
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                           order.begin() + static_cast<std::ptrdiff_t>(std::min(n_, start + batch_size_)));
    return batches;
  }

 private:
  std::size_t n_;
  std::size_t batch_size_;
};

/// Cross-entropy training on the noisy labels for `epochs` full passes.
inline ClassifierParams pretrain_ce(ClassifierParams params, OptimizerState& opt, const LabeledDataset& ds, int epochs,
                                    std::size_t batch_size, Rng& rng, const LossConfig& cfg = {},
                                    const LrSchedule* schedule = nullptr) {
  detail::require(epochs >= 0, "pretrain_ce: epochs must be >= 0");
  if (epochs == 0) return params;
  const EpochBatcher batcher(ds.size(), batch_size);
  std::vector<int> labels;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    if (schedule) opt.learning_rate = schedule->at(epoch);
    for (const auto& batch : batcher.epoch(rng)) {
      labels.clear();
      for (std::size_t i : batch) labels.push_back(ds.noisy_labels[i]);
      sgd_step(params, opt, gather_rows(ds.features, batch), labels, cfg);
    }
  }
  return params;
}

inline std::vector<int> predict(const ClassifierParams& params, const Matrix& features) {
  const Matrix z = logits(params, features);
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) z.row(i).maxCoeff(&out[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace lccn
