#pragma once

#include "lccn/lccn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>

namespace lccn::testing {

/// K=4 pair-flip benchmark shared by the accuracy, correction, stability and
/// alpha checks: 4-D mixture, separation 3, 1000 samples per class, r = 0.4.
struct Benchmark {
  LabeledDataset train;
  LabeledDataset test;
  Matrix phi_star;
};

inline Benchmark pairflip_benchmark(std::uint64_t seed, int n_per_class = 1000, double ratio = 0.4) {
  const LabeledDataset clean = make_gaussian_mixture(4, 4, n_per_class, 3.0, seed);
  LabeledDataset test = make_gaussian_mixture(4, 4, 1000, 3.0, seed, 1);
  auto [noisy, report] = inject_asymmetric_pairflip(clean, ratio, circular_pair_map(4), seed + 100);
  return {std::move(noisy), std::move(test), pairflip_transition(4, ratio, circular_pair_map(4))};
}

/// Main-phase batch 16, lr 0.05 decaying to 0.025 at epoch 50 and 0.005 at 75,
/// 30 pretraining epochs followed by 60 epochs.
inline TrainConfig benchmark_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.batch_size = 16;
  cfg.pretrain_epochs = 30;
  cfg.epochs = 60;
  cfg.lr_schedule.phases = {{0, 0.05}, {50, 0.025}, {75, 0.005}};
  return cfg;
}

/// Short configuration for unit-level trainer checks.
inline TrainConfig quick_config(std::uint64_t seed, int pretrain = 5, int epochs = 5) {
  TrainConfig cfg = benchmark_config(seed);
  cfg.pretrain_epochs = pretrain;
  cfg.epochs = epochs;
  cfg.lr_schedule.phases = {{0, 0.05}};
  return cfg;
}

inline double relative_error(double a, double b) { return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)}); }

/// Largest relative error between analytic and central-difference gradients.
struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t entries = 0;

  void record(double analytic, double numeric) {
    max_relative_error = std::max(max_relative_error, relative_error(analytic, numeric));
    ++entries;
  }
};

struct GradientInstance {
  ClassifierParams params;
  Matrix features;
  std::vector<int> targets;
  Matrix transition_logits;  // R x K, S-adaptation layer
};

/// Random instance with D <= 4, K <= 3, M <= 8 and a random architecture.
inline GradientInstance random_gradient_instance(std::uint64_t seed) {
  Rng rng(Rng::derive(seed, 77));
  const int dim = 1 + static_cast<int>(rng.index(4));
  const int k = 2 + static_cast<int>(rng.index(2));
  const int m = 1 + static_cast<int>(rng.index(8));
  Architecture arch;
  const std::size_t kind = rng.index(3);
  arch.hidden_width = kind == 0 ? 0 : 2 + static_cast<int>(rng.index(4));
  arch.activation = kind == 2 ? Activation::tanh : Activation::relu;
  GradientInstance g;
  g.params = init_classifier(arch, dim, k, seed);
  for (Layer& layer : g.params.layers) {
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = 0.5 * rng.normal();
  }
  g.features = Matrix(m, dim);
  for (Eigen::Index i = 0; i < g.features.size(); ++i) g.features.data()[i] = rng.normal();
  for (int i = 0; i < m; ++i) g.targets.push_back(static_cast<int>(rng.index(static_cast<std::size_t>(k))));
  g.transition_logits = Matrix(k, k);
  for (Eigen::Index i = 0; i < g.transition_logits.size(); ++i) g.transition_logits.data()[i] = rng.normal();
  return g;
}

/// Visits every weight and bias entry alongside its analytic gradient.
template <typename Fn>
void for_each_entry(Layer& layer, const Layer& grad, Fn&& fn) {
  for (Eigen::Index i = 0; i < layer.weight.size(); ++i) fn(layer.weight.data()[i], grad.weight.data()[i]);
  for (Eigen::Index i = 0; i < layer.bias.size(); ++i) fn(layer.bias.data()[i], grad.bias.data()[i]);
}

/// Classifier parameters through the plain clipped cross-entropy.
inline GradientCheck check_classifier_gradients(GradientInstance g, double h = 1e-4) {
  const auto loss_at = [&](const ClassifierParams& p) {
    return clipped_cross_entropy(forward_proba(p, g.features), g.targets).loss;
  };
  const ForwardCache cache = forward(g.params, g.features);
  const auto grads = backward(g.params, cache, clipped_cross_entropy(cache.probs, g.targets).grad_probs);
  GradientCheck out;
  for (std::size_t l = 0; l < g.params.layers.size(); ++l)
    for_each_entry(g.params.layers[l], grads[l], [&](double& value, double analytic) {
      const double saved = value;
      value = saved + h;
      const double up = loss_at(g.params);
      value = saved - h;
      const double down = loss_at(g.params);
      value = saved;
      out.record(analytic, (up - down) / (2.0 * h));
    });
  return out;
}

/// S-adaptation: loss CE(P softmax_rows(W), noisy); checks dL/dW and the
/// classifier parameters through the corrected loss.
inline GradientCheck check_transition_gradients(GradientInstance g, double h = 1e-4) {
  const LossConfig cfg;
  const auto loss_at = [&](const ClassifierParams& p, const Matrix& w) {
    return forward_corrected_loss(forward_proba(p, g.features), TransitionLayer{w}.phi(), g.targets, cfg).loss;
  };
  const ForwardCache cache = forward(g.params, g.features);
  const Matrix phi = TransitionLayer{g.transition_logits}.phi();
  const CorrectedLoss loss = forward_corrected_loss(cache.probs, phi, g.targets, cfg);
  const Matrix grad_w = TransitionLayer::logit_gradient(phi, loss.grad_phi);
  const auto grads = backward(g.params, cache, loss.grad_probs);
  GradientCheck out;
  for (Eigen::Index i = 0; i < g.transition_logits.size(); ++i) {
    const double saved = g.transition_logits.data()[i];
    g.transition_logits.data()[i] = saved + h;
    const double up = loss_at(g.params, g.transition_logits);
    g.transition_logits.data()[i] = saved - h;
    const double down = loss_at(g.params, g.transition_logits);
    g.transition_logits.data()[i] = saved;
    out.record(grad_w.data()[i], (up - down) / (2.0 * h));
  }
  for (std::size_t l = 0; l < g.params.layers.size(); ++l)
    for_each_entry(g.params.layers[l], grads[l], [&](double& value, double analytic) {
      const double saved = value;
      value = saved + h;
      const double up = loss_at(g.params, g.transition_logits);
      value = saved - h;
      const double down = loss_at(g.params, g.transition_logits);
      value = saved;
      out.record(analytic, (up - down) / (2.0 * h));
    });
  return out;
}

struct CountsAndBatch {
  ConfusionCounts before;
  ConfusionCounts after;
  DirichletPrior prior;
};

inline DirichletPrior random_prior(int k, Rng& rng) {
  Vector alpha(k);
  if (rng.uniform() < 0.5) {
    alpha.setConstant(std::exp(6.0 * rng.uniform() - 3.0));
  } else {
    for (int j = 0; j < k; ++j) alpha(j) = std::exp(6.0 * rng.uniform() - 3.0);
  }
  return DirichletPrior{alpha};
}

// Random counts (zero rows allowed) and a batch of up to 8 reassignments or
// first-time assignments applied to them.
inline CountsAndBatch random_pair(Rng& rng, std::int64_t max_cell) {
  const int k = 2 + static_cast<int>(rng.index(4));
  const int r = rng.uniform() < 0.3 ? k + 1 : k;
  CountMatrix m(r, k);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<std::int64_t>(rng.index(static_cast<std::size_t>(max_cell + 1)));
  if (rng.uniform() < 0.2) m.row(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(r)))).setZero();
  CountsAndBatch out{ConfusionCounts::from_matrix(m), ConfusionCounts::from_matrix(m), random_prior(k, rng)};
  const std::size_t batch = 1 + rng.index(8);
  for (std::size_t b = 0; b < batch; ++b) {
    const int noisy = static_cast<int>(rng.index(static_cast<std::size_t>(k)));
    const int to = static_cast<int>(rng.index(static_cast<std::size_t>(r)));
    const int from = static_cast<int>(rng.index(static_cast<std::size_t>(r)));
    if (rng.uniform() < 0.2 || out.after(from, noisy) == 0)
      apply_reassignment(out.after, std::nullopt, to, noisy);
    else
      apply_reassignment(out.after, from, to, noisy);
  }
  return out;
}

}  // namespace lccn::testing
