#pragma once

// Dirichlet-smoothed confusion statistics and everything derived from them:
// the closed-form transition, the warm-up transition from classifier
// predictions, the collapsed conditional transition used by the sampler and
// the per-batch transition update bound.

#include "lccn/core.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace lccn {

struct DirichletPrior {
  Vector alpha;  // one concentration per noisy class

  static DirichletPrior symmetric(int num_classes, double value = 1.0) {
    detail::require(num_classes >= 1, "DirichletPrior: need at least one class");
    detail::require(value > 0.0 && std::isfinite(value), "DirichletPrior: alpha must be > 0");
    return {Vector::Constant(num_classes, value)};
  }

  Eigen::Index size() const { return alpha.size(); }
  double total() const { return alpha.sum(); }

  void validate() const {
    detail::require(alpha.size() >= 1, "DirichletPrior: empty alpha");
    for (Eigen::Index k = 0; k < alpha.size(); ++k)
      detail::require(alpha(k) > 0.0 && std::isfinite(alpha(k)), "DirichletPrior: every alpha must be > 0");
  }
};

/// Counts of (latent class, noisy class) allocations. R x K with R = K for
/// the closed-set model and K + 1 for the open-set variant.
class ConfusionCounts {
 public:
  ConfusionCounts() = default;
  ConfusionCounts(int latent_classes, int noisy_classes) : counts_(CountMatrix::Zero(latent_classes, noisy_classes)) {
    detail::require(latent_classes >= 1 && noisy_classes >= 1, "ConfusionCounts: invalid shape");
  }

  static ConfusionCounts from_matrix(const CountMatrix& counts) {
    ConfusionCounts c(static_cast<int>(counts.rows()), static_cast<int>(counts.cols()));
    for (Eigen::Index i = 0; i < counts.size(); ++i)
      detail::require(counts.data()[i] >= 0, "ConfusionCounts: negative entry");
    c.counts_ = counts;
    c.total_ = counts.sum();
    return c;
  }

  int latent_classes() const { return static_cast<int>(counts_.rows()); }
  int noisy_classes() const { return static_cast<int>(counts_.cols()); }
  std::int64_t total() const { return total_; }
  std::int64_t operator()(int latent, int noisy) const { return counts_(latent, noisy); }
  std::int64_t row_total(int latent) const { return counts_.row(latent).sum(); }
  const CountMatrix& matrix() const { return counts_; }

  void add(int latent, int noisy) {
    check_index(latent, noisy);
    counts_(latent, noisy) += 1;
    ++total_;
  }

  void remove(int latent, int noisy) {
    check_index(latent, noisy);
    detail::ensure(counts_(latent, noisy) >= 1, "ConfusionCounts: decrement below zero at (" +
                                                    std::to_string(latent) + ", " + std::to_string(noisy) + ")");
    counts_(latent, noisy) -= 1;
    --total_;
  }

  friend bool operator==(const ConfusionCounts& a, const ConfusionCounts& b) {
    return a.counts_.rows() == b.counts_.rows() && a.counts_.cols() == b.counts_.cols() && a.counts_ == b.counts_;
  }

 private:
  void check_index(int latent, int noisy) const {
    detail::require(latent >= 0 && latent < counts_.rows() && noisy >= 0 && noisy < counts_.cols(),
                    "ConfusionCounts: index out of range");
  }

  CountMatrix counts_;
  std::int64_t total_ = 0;
};

/// Row-stochastic transition phi[latent][noisy] = P(noisy | latent).
struct TransitionMatrix {
  Matrix phi;

  Eigen::Index rows() const { return phi.rows(); }
  Eigen::Index cols() const { return phi.cols(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return phi(i, j); }

  bool is_stochastic(double tol = 1e-9) const { return rows_are_distributions(phi, tol); }

  static TransitionMatrix identity(int n) { return {Matrix::Identity(n, n)}; }
};

enum class Normalization { smoothed, unsmoothed };

/// phi[k][j] = (C[k][j] + alpha[j]) / sum_j' (C[k][j'] + alpha[j']).
/// The unsmoothed variant drops alpha and falls back to the smoothed row when
/// a row has no counts.
inline TransitionMatrix transition_from_counts(const ConfusionCounts& counts, const DirichletPrior& prior,
                                               Normalization mode = Normalization::smoothed) {
  prior.validate();
  detail::require(prior.size() == counts.noisy_classes(), "transition_from_counts: prior size must equal K");
  TransitionMatrix out{Matrix(counts.latent_classes(), counts.noisy_classes())};
  for (int k = 0; k < counts.latent_classes(); ++k) {
    const std::int64_t row_total = counts.row_total(k);
    const bool smooth = mode == Normalization::smoothed || row_total == 0;
    double denom = 0.0;
    for (int j = 0; j < counts.noisy_classes(); ++j)
      denom += static_cast<double>(counts(k, j)) + (smooth ? prior.alpha(j) : 0.0);
    for (int j = 0; j < counts.noisy_classes(); ++j)
      out.phi(k, j) = (static_cast<double>(counts(k, j)) + (smooth ? prior.alpha(j) : 0.0)) / denom;
  }
  return out;
}

/// phi_init[k][j] = sum_n 1(noisy_n = j) P(y_n = k | x_n) / sum_n P(y_n = k | x_n).
/// Rows whose denominator is below 1e-12 become uniform.
inline TransitionMatrix warmup_transition(const Matrix& predictions, std::span<const int> noisy_labels,
                                          int noisy_classes) {
  detail::require(predictions.rows() > 0, "warmup_transition: empty dataset");
  detail::require(static_cast<std::size_t>(predictions.rows()) == noisy_labels.size(),
                  "warmup_transition: one noisy label per prediction row required");
  detail::require(noisy_classes >= 1, "warmup_transition: noisy_classes must be >= 1");
  const Eigen::Index latent = predictions.cols();
  Matrix numer = Matrix::Zero(latent, noisy_classes);
  Vector denom = Vector::Zero(latent);
  for (Eigen::Index n = 0; n < predictions.rows(); ++n) {
    const int j = noisy_labels[static_cast<std::size_t>(n)];
    detail::require(j >= 0 && j < noisy_classes, "warmup_transition: noisy label out of range");
    for (Eigen::Index k = 0; k < latent; ++k) {
      numer(k, j) += predictions(n, k);
      denom(k) += predictions(n, k);
    }
  }
  TransitionMatrix out{Matrix(latent, noisy_classes)};
  for (Eigen::Index k = 0; k < latent; ++k) {
    if (denom(k) < 1e-12)
      out.phi.row(k).setConstant(1.0 / noisy_classes);
    else
      out.phi.row(k) = numer.row(k) / denom(k);
  }
  return out;
}

/// Collapsed conditional transition (alpha[noisy] + C[y][noisy]) / sum_k (alpha[k] + C[y][k]),
/// where `counts_without_sample` already excludes the sample being resampled.
inline double conditional_transition(const ConfusionCounts& counts_without_sample, const DirichletPrior& prior,
                                     int latent, int noisy) {
  detail::require(latent >= 0 && latent < counts_without_sample.latent_classes(),
                  "conditional_transition: latent class out of range");
  detail::require(noisy >= 0 && noisy < counts_without_sample.noisy_classes(),
                  "conditional_transition: noisy class out of range");
  detail::require(prior.size() == counts_without_sample.noisy_classes(),
                  "conditional_transition: prior size must equal K");
  const double denom = static_cast<double>(counts_without_sample.row_total(latent)) + prior.total();
  return (prior.alpha(noisy) + static_cast<double>(counts_without_sample(latent, noisy))) / denom;
}

/// Moves one sample's allocation: removes (old, noisy) if the sample was
/// assigned, then adds (new, noisy).
inline void apply_reassignment(ConfusionCounts& counts, std::optional<int> latent_old, int latent_new, int noisy) {
  if (latent_old && *latent_old == latent_new) return;
  if (latent_old) counts.remove(*latent_old, noisy);
  counts.add(latent_new, noisy);
}

/// Per-row quantities of the transition update bound for one batch.
struct RowUpdateBound {
  double prior_count = 0.0;      // O_i: row count before the batch
  double net_change = 0.0;       // T_i
  double absolute_change = 0.0;  // T^_i = sum_j |T_ij|
  double r = 0.0;
  double r_hat = 0.0;
  double bound = 0.0;     // (|r| + r^) / (1 + r)
  double measured = 0.0;  // sum_j |phi_new - phi_old| (smoothed)

  bool holds(double tol = 1e-12) const { return measured <= bound + tol; }
};

/// Measured L1 change of each smoothed transition row between two count
/// snapshots, next to its theoretical bound.
inline std::vector<RowUpdateBound> update_bound(const ConfusionCounts& before, const ConfusionCounts& after,
                                                const DirichletPrior& prior) {
  detail::require(before.latent_classes() == after.latent_classes() && before.noisy_classes() == after.noisy_classes(),
                  "update_bound: count shapes differ");
  const TransitionMatrix old_phi = transition_from_counts(before, prior);
  const TransitionMatrix new_phi = transition_from_counts(after, prior);
  const double alpha_total = prior.total();
  std::vector<RowUpdateBound> rows(static_cast<std::size_t>(before.latent_classes()));
  for (int i = 0; i < before.latent_classes(); ++i) {
    RowUpdateBound& row = rows[static_cast<std::size_t>(i)];
    row.prior_count = static_cast<double>(before.row_total(i));
    double absolute = 0.0;
    for (int j = 0; j < before.noisy_classes(); ++j)
      absolute += std::abs(static_cast<double>(after(i, j) - before(i, j)));
    row.net_change = static_cast<double>(after.row_total(i) - before.row_total(i));
    row.absolute_change = absolute;
    const double scale = row.prior_count + alpha_total;
    row.r = row.net_change / scale;
    row.r_hat = row.absolute_change / scale;
    row.bound = (std::abs(row.r) + row.r_hat) / (1.0 + row.r);
    row.measured = (new_phi.phi.row(i) - old_phi.phi.row(i)).cwiseAbs().sum();
  }
  return rows;
}

/// Largest per-row measured variation and the largest per-row bound.
struct BatchVariation {
  double max_variation = 0.0;
  double max_bound = 0.0;
  bool holds = true;
};

inline BatchVariation summarize(const std::vector<RowUpdateBound>& rows, double tol = 1e-12) {
  BatchVariation out;
  for (const auto& row : rows) {
    out.max_variation = std::max(out.max_variation, row.measured);
    out.max_bound = std::max(out.max_bound, row.bound);
    out.holds = out.holds && row.holds(tol);
  }
  return out;
}

}  // namespace lccn
