#pragma once

// Collapsed Gibbs sampling of latent true labels, the exact enumeration
// posterior it must agree with, and the empirical mixing diagnostic.

#include "lccn/core.hpp"
#include "lccn/noise_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace lccn {

/// Current latent class per training sample; kUnassigned before the first draw.
struct LatentAssignment {
  static constexpr int kUnassigned = -1;
  std::vector<int> labels;

  LatentAssignment() = default;
  explicit LatentAssignment(std::size_t n) : labels(n, kUnassigned) {}

  std::size_t size() const { return labels.size(); }
  bool assigned(std::size_t i) const { return labels[i] != kUnassigned; }
  int operator[](std::size_t i) const { return labels[i]; }
};

/// Histogram of (latent, noisy) pairs over assigned, non-excluded samples.
inline ConfusionCounts histogram(const LatentAssignment& assignment, std::span<const int> noisy_labels,
                                 int latent_classes, int noisy_classes, const std::vector<bool>* excluded = nullptr) {
  detail::require(assignment.size() == noisy_labels.size(), "histogram: assignment and labels differ in length");
  ConfusionCounts counts(latent_classes, noisy_classes);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (!assignment.assigned(i) || (excluded && (*excluded)[i])) continue;
    counts.add(assignment[i], noisy_labels[i]);
  }
  return counts;
}

struct AnnealSchedule {
  long max_step = 1;
  double floor = 0.5;
  double decay = 0.8;
  bool enabled = false;
};

/// max{exp(-step / max_step * decay), floor}.
inline double anneal_coefficient(long step, const AnnealSchedule& sched) {
  detail::require(sched.max_step > 0, "anneal_coefficient: max_step must be > 0");
  detail::require(step >= 0, "anneal_coefficient: step must be >= 0");
  detail::require(sched.floor > 0.0 && sched.floor <= 1.0, "anneal_coefficient: floor must lie in (0, 1]");
  return std::max(std::exp(-static_cast<double>(step) / static_cast<double>(sched.max_step) * sched.decay),
                  sched.floor);
}

/// Where the annealing exponent is applied: to the transition factor only, or
/// to the whole product classifier * transition.
enum class AnnealTarget { transition, product };

struct GibbsOptions {
  const TransitionMatrix* warmup = nullptr;  // replaces the conditional transition when set
  double anneal = 1.0;
  AnnealTarget anneal_target = AnnealTarget::transition;
};

/// Normalized sampling distribution over latent classes for one sample,
/// given counts that already exclude it.
inline Vector sampling_distribution(const Eigen::Ref<const Vector>& classifier_probs,
                                    const ConfusionCounts& counts_without_sample, const DirichletPrior& prior,
                                    int noisy, const GibbsOptions& options = {}) {
  const int latent_classes = counts_without_sample.latent_classes();
  detail::require(classifier_probs.size() == latent_classes, "sampling_distribution: probability width must equal R");
  Vector scores(latent_classes);
  for (int y = 0; y < latent_classes; ++y) {
    const double transition = options.warmup ? (*options.warmup)(y, noisy)
                                             : conditional_transition(counts_without_sample, prior, y, noisy);
    if (options.anneal_target == AnnealTarget::transition)
      scores(y) = classifier_probs(y) * std::pow(transition, options.anneal);
    else
      scores(y) = std::pow(classifier_probs(y) * transition, options.anneal);
  }
  if (!scores.allFinite() || (scores.array() < 0.0).any())
    throw TrainingError("gibbs: non-finite or negative sampling score");
  const double total = scores.sum();
  if (total <= 0.0) {
    // Zero transition mass on every class with classifier support: fall back
    // to the classifier factor alone.
    const double p_total = classifier_probs.sum();
    if (!(p_total > 0.0)) throw TrainingError("gibbs: classifier row has no mass");
    return classifier_probs / p_total;
  }
  return scores / total;
}

/// Sequential collapsed Gibbs update of the samples in `batch`. Row m of
/// `batch_probs` is P(y | x) for sample batch[m]. Each draw removes the
/// sample's previous allocation, samples from classifier * transition, and
/// adds the new allocation before the next sample is visited.
inline std::vector<int> gibbs_sample_batch(const Matrix& batch_probs, std::span<const std::size_t> batch,
                                           std::span<const int> noisy_labels, ConfusionCounts& counts,
                                           const DirichletPrior& prior, LatentAssignment& assignment,
                                           const GibbsOptions& options, Rng& rng) {
  detail::require(static_cast<std::size_t>(batch_probs.rows()) == batch.size(),
                  "gibbs_sample_batch: one probability row per batch index required");
  detail::require(batch_probs.cols() == counts.latent_classes(), "gibbs_sample_batch: probability width must equal R");
  detail::require(assignment.size() == noisy_labels.size(), "gibbs_sample_batch: assignment length mismatch");
  if (options.warmup)
    detail::require(options.warmup->rows() == counts.latent_classes() && options.warmup->cols() == counts.noisy_classes(),
                    "gibbs_sample_batch: warm-up transition shape mismatch");
  std::vector<int> sampled;
  sampled.reserve(batch.size());
  for (std::size_t m = 0; m < batch.size(); ++m) {
    const std::size_t n = batch[m];
    detail::require(n < assignment.size(), "gibbs_sample_batch: batch index out of range");
    const int noisy = noisy_labels[n];
    if (assignment.assigned(n)) counts.remove(assignment[n], noisy);
    const Vector dist =
        sampling_distribution(batch_probs.row(static_cast<Eigen::Index>(m)).transpose(), counts, prior, noisy, options);
    const int drawn = rng.categorical(dist);
    counts.add(drawn, noisy);
    assignment.labels[n] = drawn;
    sampled.push_back(drawn);
  }
  return sampled;
}

namespace detail {

/// log of prod_k B(alpha + C_k) / B(alpha), dropping the constant B(alpha) terms.
inline double log_collapsed_likelihood(const CountMatrix& counts, const Vector& alpha) {
  const double alpha_total = alpha.sum();
  double out = 0.0;
  for (Eigen::Index k = 0; k < counts.rows(); ++k) {
    double row_total = 0.0;
    for (Eigen::Index j = 0; j < counts.cols(); ++j) {
      out += std::lgamma(alpha(j) + static_cast<double>(counts(k, j)));
      row_total += static_cast<double>(counts(k, j));
    }
    out -= std::lgamma(alpha_total + row_total);
  }
  return out;
}

}  // namespace detail

/// Per-sample marginals of the collapsed posterior P(Y | X, noisy; alpha) by
/// enumerating all R^N joint assignments in the log domain.
inline Matrix exact_posterior_bruteforce(const Matrix& probs, std::span<const int> noisy_labels,
                                         const DirichletPrior& prior) {
  prior.validate();
  const auto n = static_cast<std::size_t>(probs.rows());
  const auto r = static_cast<std::size_t>(probs.cols());
  const auto k = static_cast<int>(prior.size());
  detail::require(n >= 1 && r >= 1, "exact_posterior_bruteforce: empty instance");
  detail::require(noisy_labels.size() == n, "exact_posterior_bruteforce: one noisy label per row required");
  for (int label : noisy_labels)
    detail::require(label >= 0 && label < k, "exact_posterior_bruteforce: noisy label out of range");
  const double log_states = static_cast<double>(n) * std::log2(static_cast<double>(r));
  detail::require(log_states <= 22.0 + 1e-9, "exact_posterior_bruteforce: instance too large (R^N > 2^22)");

  const Matrix log_probs = probs.array().log().matrix();
  std::vector<int> state(n, 0);
  CountMatrix counts(static_cast<Eigen::Index>(r), k);
  Matrix log_marginal_acc = Matrix::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(r),
                                             -std::numeric_limits<double>::infinity());
  auto log_add = [](double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double hi = std::max(a, b);
    return hi + std::log1p(std::exp(std::min(a, b) - hi));
  };
  double log_total = -std::numeric_limits<double>::infinity();
  while (true) {
    double log_weight = 0.0;
    counts.setZero();
    for (std::size_t i = 0; i < n; ++i) {
      log_weight += log_probs(static_cast<Eigen::Index>(i), state[i]);
      counts(state[i], noisy_labels[i]) += 1;
    }
    if (log_weight > -std::numeric_limits<double>::infinity()) {
      log_weight += detail::log_collapsed_likelihood(counts, prior.alpha);
      log_total = log_add(log_total, log_weight);
      for (std::size_t i = 0; i < n; ++i) {
        double& cell = log_marginal_acc(static_cast<Eigen::Index>(i), state[i]);
        cell = log_add(cell, log_weight);
      }
    }
    std::size_t pos = 0;
    while (pos < n && ++state[pos] == static_cast<int>(r)) state[pos++] = 0;
    if (pos == n) break;
  }
  detail::require(log_total > -std::numeric_limits<double>::infinity(),
                  "exact_posterior_bruteforce: every assignment has zero probability");
  return (log_marginal_acc.array() - log_total).exp().matrix();
}

struct MixingCheckpoint {
  long sweep = 0;
  double max_tv = 0.0;
  double mean_tv = 0.0;
};

struct GibbsDiagnostics {
  long sweeps = 0;
  Matrix empirical;  // post-burn-in per-sample marginals (or the point mass if none were collected)
  Matrix exact;
  std::vector<MixingCheckpoint> trace;

  double final_max_tv() const { return trace.empty() ? 1.0 : trace.back().max_tv; }
};

/// Per-sample total variation 0.5 * sum_y |p(y) - q(y)|.
inline Vector total_variation_rows(const Matrix& p, const Matrix& q) {
  detail::require(p.rows() == q.rows() && p.cols() == q.cols(), "total_variation_rows: shape mismatch");
  return 0.5 * (p - q).cwiseAbs().rowwise().sum();
}

/// Fixed classifier outputs and noisy labels for sampler checks.
struct FrozenInstance {
  Matrix probs;
  std::vector<int> noisy_labels;
};

/// Rows are softmax(2 * N(0, 1)) draws; each noisy label is drawn from its row.
inline FrozenInstance random_frozen_instance(int n, int num_classes, std::uint64_t seed) {
  detail::require(n >= 1 && num_classes >= 2, "random_frozen_instance: need n >= 1 and K >= 2");
  Rng rng(Rng::derive(seed, 3));
  FrozenInstance out{Matrix(n, num_classes), std::vector<int>(static_cast<std::size_t>(n))};
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < num_classes; ++k) out.probs(i, k) = std::exp(2.0 * rng.normal());
    out.probs.row(i) /= out.probs.row(i).sum();
    const Vector row = out.probs.row(i).transpose();
    out.noisy_labels[static_cast<std::size_t>(i)] = rng.categorical(row);
  }
  return out;
}

/// Runs a frozen-classifier chain (all samples swept in order, anneal 1, no
/// warm-up) from y = noisy label and compares post-burn-in empirical
/// marginals with the exact posterior at roughly log-spaced checkpoints.
inline GibbsDiagnostics mixing_diagnostic(const Matrix& probs, std::span<const int> noisy_labels,
                                          const DirichletPrior& prior, long sweeps, long burn_in, std::uint64_t seed) {
  detail::require(sweeps >= 0 && burn_in >= 0, "mixing_diagnostic: sweeps and burn_in must be >= 0");
  GibbsDiagnostics out;
  out.sweeps = sweeps;
  out.exact = exact_posterior_bruteforce(probs, noisy_labels, prior);

  const auto n = static_cast<std::size_t>(probs.rows());
  const int latent = static_cast<int>(probs.cols());
  const int noisy_classes = static_cast<int>(prior.size());
  LatentAssignment assignment(n);
  for (std::size_t i = 0; i < n; ++i) assignment.labels[i] = std::min(noisy_labels[i], latent - 1);
  ConfusionCounts counts = histogram(assignment, noisy_labels, latent, noisy_classes);

  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;

  // Checkpoints at 1, 2, 5 x 10^k plus the final sweep.
  std::vector<long> checkpoints{0};
  for (long base = 1; base <= sweeps; base *= 10)
    for (long mult : {1L, 2L, 5L})
      if (base * mult <= sweeps) checkpoints.push_back(base * mult);
  if (checkpoints.back() != sweeps) checkpoints.push_back(sweeps);

  Matrix tally = Matrix::Zero(static_cast<Eigen::Index>(n), latent);
  long collected = 0;
  auto current_estimate = [&]() -> Matrix {
    if (collected > 0) return tally / static_cast<double>(collected);
    Matrix point = Matrix::Zero(static_cast<Eigen::Index>(n), latent);
    for (std::size_t i = 0; i < n; ++i) point(static_cast<Eigen::Index>(i), assignment[i]) = 1.0;
    return point;
  };
  auto record = [&](long sweep) {
    const Vector tv = total_variation_rows(current_estimate(), out.exact);
    out.trace.push_back({sweep, tv.maxCoeff(), tv.mean()});
  };

  Rng rng(seed);
  const GibbsOptions options{};
  std::size_t next_checkpoint = 0;
  for (long sweep = 0; sweep <= sweeps; ++sweep) {
    if (sweep > 0) {
      gibbs_sample_batch(probs, all, noisy_labels, counts, prior, assignment, options, rng);
      if (sweep > burn_in) {
        for (std::size_t i = 0; i < n; ++i) tally(static_cast<Eigen::Index>(i), assignment[i]) += 1.0;
        ++collected;
      }
    }
    if (next_checkpoint < checkpoints.size() && checkpoints[next_checkpoint] == sweep) {
      record(sweep);
      ++next_checkpoint;
    }
  }
  out.empirical = current_estimate();
  return out;
}

}  // namespace lccn
