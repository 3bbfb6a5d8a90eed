#pragma once

#include "lccn/classifier.hpp"
#include "lccn/datagen.hpp"
#include "lccn/noise_model.hpp"
#include "lccn/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace lccn {

enum class Split { train, test };

inline const char* to_string(Split split) { return split == Split::train ? "train" : "test"; }

/// One evaluation row. Quantities that do not apply to a trainer are NaN.
struct MetricsRecord {
  long step = 0;
  Split split = Split::test;
  double accuracy = 0.0;
  double loss = std::numeric_limits<double>::quiet_NaN();
  double correction_ratio = std::numeric_limits<double>::quiet_NaN();
  double phi_l1_error = std::numeric_limits<double>::quiet_NaN();
  double max_phi_row_variation = std::numeric_limits<double>::quiet_NaN();
  double theorem_bound = std::numeric_limits<double>::quiet_NaN();
};

/// Fraction of argmax predictions equal to the true label. When
/// `scored_classes` is smaller than the classifier width, the argmax is taken
/// over the first `scored_classes` outputs only. OOD test samples are skipped.
inline double test_accuracy(const ClassifierParams& params, const LabeledDataset& test, int scored_classes = 0) {
  detail::require(test.size() > 0, "test_accuracy: empty test set");
  const Matrix z = logits(params, test.features);
  const int width = scored_classes > 0 ? scored_classes : static_cast<int>(z.cols());
  std::size_t correct = 0;
  std::size_t scored = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const int truth = test.true_labels[static_cast<std::size_t>(i)];
    if (truth == kNoClass) continue;
    Eigen::Index best = 0;
    z.row(i).head(width).maxCoeff(&best);
    correct += best == truth ? 1 : 0;
    ++scored;
  }
  detail::require(scored > 0, "test_accuracy: no in-distribution test samples");
  return static_cast<double>(correct) / static_cast<double>(scored);
}

/// Fraction of latent assignments equal to the hidden true label, over
/// assigned in-distribution samples.
inline double correction_ratio(const LatentAssignment& assignment, std::span<const int> true_labels) {
  detail::require(assignment.size() == true_labels.size(), "correction_ratio: length mismatch");
  std::size_t hits = 0;
  std::size_t scored = 0;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (true_labels[i] == kNoClass || !assignment.assigned(i)) continue;
    hits += assignment[i] == true_labels[i] ? 1 : 0;
    ++scored;
  }
  detail::require(scored > 0, "correction_ratio: no assigned in-distribution samples");
  return static_cast<double>(hits) / static_cast<double>(scored);
}

/// Largest per-row L1 distance between two transitions.
inline double transition_l1_error(const Matrix& phi, const Matrix& phi_star) {
  detail::require(phi.rows() == phi_star.rows() && phi.cols() == phi_star.cols(), "transition_l1_error: shape mismatch");
  return (phi - phi_star).cwiseAbs().rowwise().sum().maxCoeff();
}

inline Vector transition_row_errors(const Matrix& phi, const Matrix& phi_star) {
  detail::require(phi.rows() == phi_star.rows() && phi.cols() == phi_star.cols(), "transition_row_errors: shape mismatch");
  return (phi - phi_star).cwiseAbs().rowwise().sum();
}

inline double transition_frobenius_error(const Matrix& phi, const Matrix& phi_star) {
  detail::require(phi.rows() == phi_star.rows() && phi.cols() == phi_star.cols(), "transition_frobenius_error: shape mismatch");
  return (phi - phi_star).norm();
}

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

/// Uniform bins over the observed range [min, max]. A degenerate range
/// collapses to a single bin.
inline std::vector<HistogramBin> variation_histogram(std::span<const double> values, std::size_t bins = 50) {
  detail::require(bins >= 1, "variation_histogram: need at least one bin");
  if (values.empty()) return {};
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (hi <= lo) return {{lo, hi, values.size()}};
  std::vector<HistogramBin> out(bins);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].lo = lo + width * static_cast<double>(b);
    out[b].hi = b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1);
  }
  for (double v : values) {
    auto b = static_cast<std::size_t>((v - lo) / width);
    out[std::min(b, bins - 1)].count += 1;
  }
  return out;
}

inline double median(std::vector<double> values) {
  detail::require(!values.empty(), "median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

}  // namespace lccn
