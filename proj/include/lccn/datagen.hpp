#pragma once

// Synthetic datasets and the label-noise injection protocols (symmetric,
// pair-flip, open-set, generic transition) plus clean-subset marking.

#include "lccn/core.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace lccn {

struct LabeledDataset {
  Matrix features;               // N x D
  std::vector<int> true_labels;  // kNoClass for OOD samples
  std::vector<int> noisy_labels;
  std::vector<bool> clean_mask;
  std::vector<bool> ood_mask;
  int num_classes = 0;

  std::size_t size() const { return true_labels.size(); }
  Eigen::Index dim() const { return features.cols(); }

  std::size_t ood_count() const {
    return static_cast<std::size_t>(std::count(ood_mask.begin(), ood_mask.end(), true));
  }
  std::size_t clean_count() const {
    return static_cast<std::size_t>(std::count(clean_mask.begin(), clean_mask.end(), true));
  }
};

/// Throws ParameterError if the dataset breaks any of its structural invariants.
inline void validate(const LabeledDataset& ds) {
  const std::size_t n = ds.size();
  detail::require(ds.num_classes >= 2, "dataset: num_classes must be >= 2");
  detail::require(static_cast<std::size_t>(ds.features.rows()) == n && ds.noisy_labels.size() == n &&
                      ds.clean_mask.size() == n && ds.ood_mask.size() == n,
                  "dataset: field lengths differ");
  for (std::size_t i = 0; i < n; ++i) {
    const int noisy = ds.noisy_labels[i];
    detail::require(noisy >= 0 && noisy < ds.num_classes, "dataset: noisy label out of range");
    if (ds.ood_mask[i]) {
      detail::require(ds.true_labels[i] == kNoClass, "dataset: OOD sample must have no true class");
      detail::require(!ds.clean_mask[i], "dataset: clean and OOD masks overlap");
    } else {
      detail::require(ds.true_labels[i] >= 0 && ds.true_labels[i] < ds.num_classes,
                      "dataset: true label out of range");
    }
  }
}

enum class NoiseKind { symmetric, asymmetric_pairflip, openset };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::symmetric;
  double ratio = 0.0;
  std::optional<std::vector<int>> pair_map;
  double ood_fraction = 0.0;
  std::uint64_t seed = 0;
};

struct NoiseInjectionReport {
  double realized_flip_fraction = 0.0;
  CountMatrix realized_confusion;  // rows: true class, cols: noisy class; OOD excluded
};

/// Circular pair map k -> (k + 1) mod K.
inline std::vector<int> circular_pair_map(int num_classes) {
  std::vector<int> map(static_cast<std::size_t>(num_classes));
  for (int k = 0; k < num_classes; ++k) map[static_cast<std::size_t>(k)] = (k + 1) % num_classes;
  return map;
}

/// Ground-truth transition of the pair-flip protocol.
inline Matrix pairflip_transition(int num_classes, double ratio, const std::vector<int>& pair_map) {
  Matrix phi = Matrix::Identity(num_classes, num_classes);
  for (int k = 0; k < num_classes; ++k) {
    const int target = pair_map[static_cast<std::size_t>(k)];
    if (target == k) continue;
    phi(k, k) = 1.0 - ratio;
    phi(k, target) = ratio;
  }
  return phi;
}

/// Ground-truth transition of the symmetric (uniform resample) protocol.
inline Matrix symmetric_transition(int num_classes, double ratio) {
  Matrix phi = Matrix::Constant(num_classes, num_classes, ratio / num_classes);
  phi.diagonal().array() += 1.0 - ratio;
  return phi;
}

inline NoiseInjectionReport noise_report(const LabeledDataset& ds) {
  NoiseInjectionReport report;
  report.realized_confusion = CountMatrix::Zero(ds.num_classes, ds.num_classes);
  std::size_t in_dist = 0;
  std::size_t flipped = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.ood_mask[i]) continue;
    ++in_dist;
    report.realized_confusion(ds.true_labels[i], ds.noisy_labels[i]) += 1;
    if (ds.true_labels[i] != ds.noisy_labels[i]) ++flipped;
  }
  report.realized_flip_fraction = in_dist == 0 ? 0.0 : static_cast<double>(flipped) / static_cast<double>(in_dist);
  return report;
}

namespace detail {

/// Equidistant class means: a regular simplex rotated into D dimensions when
/// D >= K - 1, otherwise evenly spaced points on the first axis.
inline Matrix mixture_means(int num_classes, int dim, double separation, Rng& rng) {
  Matrix means = Matrix::Zero(num_classes, dim);
  if (dim >= num_classes - 1) {
    // Centered simplex vertices e_k - 1/K have pairwise distance sqrt(2).
    Matrix vertices = Matrix::Identity(num_classes, num_classes);
    vertices.array() -= 1.0 / num_classes;
    // Orthonormal basis of the sum-zero subspace.
    Matrix basis = Eigen::HouseholderQR<Matrix>(vertices).householderQ();
    Matrix coords = vertices * basis.leftCols(num_classes - 1);  // K x (K-1)
    Matrix gaussian(dim, num_classes - 1);
    for (Eigen::Index i = 0; i < gaussian.size(); ++i) gaussian.data()[i] = rng.normal();
    Matrix rotation = Eigen::HouseholderQR<Matrix>(gaussian).householderQ();
    means = (separation / std::sqrt(2.0)) * coords * rotation.leftCols(num_classes - 1).transpose();
  } else {
    for (int k = 0; k < num_classes; ++k)
      means(k, 0) = separation * (k - 0.5 * (num_classes - 1));
  }
  return means;
}

inline void require_unapplied_noise(const LabeledDataset& ds) {
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (!ds.ood_mask[i] && !ds.clean_mask[i])
      require(ds.noisy_labels[i] == ds.true_labels[i], "noise injection: dataset already carries label noise");
}

}  // namespace detail

/// Class means used by make_gaussian_mixture for the same (K, D, separation, seed).
inline Matrix gaussian_mixture_means(int num_classes, int dim, double separation, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, 0);
  return detail::mixture_means(num_classes, dim, separation, rng);
}

/// Balanced K-class Gaussian mixture with unit covariance. The means depend on
/// `seed` only; `draw` selects an independent sample from the same mixture
/// (draw 0 for training, 1 for a held-out test set, ...).
inline LabeledDataset make_gaussian_mixture(int num_classes, int dim, int n_per_class, double separation,
                                            std::uint64_t seed, std::uint64_t draw = 0) {
  detail::require(num_classes >= 2, "make_gaussian_mixture: K must be >= 2");
  detail::require(dim >= 1, "make_gaussian_mixture: D must be >= 1");
  detail::require(n_per_class >= 1, "make_gaussian_mixture: n_per_class must be >= 1");
  detail::require(separation > 0.0 && std::isfinite(separation), "make_gaussian_mixture: separation must be > 0");

  const Matrix means = gaussian_mixture_means(num_classes, dim, separation, seed);
  Rng rng = Rng::derive(seed, 1 + draw);

  const std::size_t n = static_cast<std::size_t>(num_classes) * static_cast<std::size_t>(n_per_class);
  LabeledDataset ds;
  ds.num_classes = num_classes;
  ds.features.resize(static_cast<Eigen::Index>(n), dim);
  ds.true_labels.reserve(n);
  std::size_t row = 0;
  for (int k = 0; k < num_classes; ++k) {
    for (int i = 0; i < n_per_class; ++i, ++row) {
      for (int d = 0; d < dim; ++d) ds.features(static_cast<Eigen::Index>(row), d) = means(k, d) + rng.normal();
      ds.true_labels.push_back(k);
    }
  }
  ds.noisy_labels = ds.true_labels;
  ds.clean_mask.assign(n, false);
  ds.ood_mask.assign(n, false);
  return ds;
}

/// With probability `ratio` each noisy label is redrawn uniformly over all K
/// classes (the original class included).
inline std::pair<LabeledDataset, NoiseInjectionReport> inject_symmetric(LabeledDataset ds, double ratio,
                                                                        std::uint64_t seed) {
  detail::require(ratio >= 0.0 && ratio <= 1.0, "inject_symmetric: ratio must lie in [0, 1]");
  validate(ds);
  detail::require_unapplied_noise(ds);
  Rng rng(seed);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.clean_mask[i]) continue;
    if (rng.bernoulli(ratio))
      ds.noisy_labels[i] = static_cast<int>(rng.index(static_cast<std::size_t>(ds.num_classes)));
  }
  auto report = noise_report(ds);
  return {std::move(ds), std::move(report)};
}

inline std::pair<LabeledDataset, NoiseInjectionReport> inject_asymmetric_pairflip(LabeledDataset ds, double ratio,
                                                                                  const std::vector<int>& pair_map,
                                                                                  std::uint64_t seed) {
  detail::require(ratio >= 0.0 && ratio <= 1.0, "inject_asymmetric_pairflip: ratio must lie in [0, 1]");
  validate(ds);
  detail::require(pair_map.size() == static_cast<std::size_t>(ds.num_classes),
                  "inject_asymmetric_pairflip: pair_map must have one entry per class");
  for (int target : pair_map)
    detail::require(target >= 0 && target < ds.num_classes, "inject_asymmetric_pairflip: pair_map entry out of range");
  detail::require_unapplied_noise(ds);

  Rng rng(seed);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.clean_mask[i] || ds.ood_mask[i]) continue;
    // One draw per sample regardless of class keeps streams aligned across pair maps.
    const bool flip = rng.bernoulli(ratio);
    const int source = ds.true_labels[i];
    if (flip) ds.noisy_labels[i] = pair_map[static_cast<std::size_t>(source)];
  }
  auto report = noise_report(ds);
  return {std::move(ds), std::move(report)};
}

/// Noisy labels drawn from Categorical(phi[y]) for every in-distribution
/// sample: the class-conditional generative process with a known transition.
inline std::pair<LabeledDataset, NoiseInjectionReport> inject_from_transition(LabeledDataset ds, const Matrix& phi,
                                                                              std::uint64_t seed) {
  validate(ds);
  detail::require(phi.rows() == ds.num_classes && phi.cols() == ds.num_classes,
                  "inject_from_transition: transition must be K x K");
  detail::require(rows_are_distributions(phi), "inject_from_transition: transition rows must be distributions");
  detail::require_unapplied_noise(ds);
  Rng rng(seed);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.clean_mask[i] || ds.ood_mask[i]) continue;
    ds.noisy_labels[i] = rng.categorical(phi.row(ds.true_labels[i]));
  }
  auto report = noise_report(ds);
  return {std::move(ds), std::move(report)};
}

/// Turns exactly round(ood_fraction * N) randomly chosen samples into
/// out-of-distribution samples by permuting each one's feature entries.
inline LabeledDataset inject_openset(LabeledDataset ds, double ood_fraction, std::uint64_t seed) {
  detail::require(ood_fraction >= 0.0 && ood_fraction <= 1.0, "inject_openset: ood_fraction must lie in [0, 1]");
  validate(ds);
  Rng rng(seed);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (!ds.ood_mask[i] && !ds.clean_mask[i]) candidates.push_back(i);
  const auto wanted = static_cast<std::size_t>(std::llround(ood_fraction * static_cast<double>(ds.size())));
  detail::require(wanted <= candidates.size(), "inject_openset: not enough eligible samples");
  rng.shuffle(candidates);
  candidates.resize(wanted);
  std::sort(candidates.begin(), candidates.end());

  std::vector<Eigen::Index> order(static_cast<std::size_t>(ds.dim()));
  for (std::size_t i : candidates) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    rng.shuffle(order);
    const Vector original = ds.features.row(static_cast<Eigen::Index>(i)).transpose();
    for (std::size_t d = 0; d < order.size(); ++d)
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = original(order[d]);
    ds.ood_mask[i] = true;
    ds.true_labels[i] = kNoClass;
  }
  return ds;
}

/// Marks n_clean random non-OOD samples as trusted and restores their labels.
inline LabeledDataset mark_clean_subset(LabeledDataset ds, std::size_t n_clean, std::uint64_t seed) {
  validate(ds);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (!ds.ood_mask[i] && !ds.clean_mask[i]) candidates.push_back(i);
  detail::require(n_clean <= candidates.size(), "mark_clean_subset: n_clean exceeds the number of non-OOD samples");
  Rng rng(seed);
  rng.shuffle(candidates);
  for (std::size_t j = 0; j < n_clean; ++j) {
    const std::size_t i = candidates[j];
    ds.clean_mask[i] = true;
    ds.noisy_labels[i] = ds.true_labels[i];
  }
  return ds;
}

/// Applies a NoiseSpec (label noise for symmetric / pair-flip, feature
/// corruption for open-set).
inline std::pair<LabeledDataset, NoiseInjectionReport> apply_noise(LabeledDataset ds, const NoiseSpec& spec) {
  switch (spec.kind) {
    case NoiseKind::symmetric:
      return inject_symmetric(std::move(ds), spec.ratio, spec.seed);
    case NoiseKind::asymmetric_pairflip: {
      const auto map = spec.pair_map.value_or(circular_pair_map(ds.num_classes));
      return inject_asymmetric_pairflip(std::move(ds), spec.ratio, map, spec.seed);
    }
    case NoiseKind::openset: {
      auto noisy = inject_symmetric(std::move(ds), spec.ratio, spec.seed);
      auto out = inject_openset(std::move(noisy.first), spec.ood_fraction, spec.seed + 1);
      auto report = noise_report(out);
      return {std::move(out), std::move(report)};
    }
  }
  throw ParameterError("apply_noise: unknown noise kind");
}

/// Transition the noise protocol would induce in expectation, or nullopt when
/// it is not class-conditional (open-set).
inline std::optional<Matrix> ground_truth_transition(const NoiseSpec& spec, int num_classes) {
  switch (spec.kind) {
    case NoiseKind::symmetric:
      return symmetric_transition(num_classes, spec.ratio);
    case NoiseKind::asymmetric_pairflip:
      return pairflip_transition(num_classes, spec.ratio, spec.pair_map.value_or(circular_pair_map(num_classes)));
    case NoiseKind::openset:
      return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace lccn
