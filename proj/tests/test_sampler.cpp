#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace lccn;

namespace {

ConfusionCounts counts_3_1_0_4() {
  CountMatrix m(2, 2);
  m << 3, 1, 0, 4;
  return ConfusionCounts::from_matrix(m);
}

// Multivariate Beta in the linear domain.
double beta_fn(const Vector& a) {
  double num = 1.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) num *= std::tgamma(a(i));
  return num / std::tgamma(a.sum());
}

// Enumeration oracle with plain products and tgamma, independent of the
// log-domain implementation.
Matrix linear_domain_posterior(const Matrix& probs, const std::vector<int>& noisy, const Vector& alpha) {
  const int n = static_cast<int>(probs.rows());
  const int r = static_cast<int>(probs.cols());
  const int k = static_cast<int>(alpha.size());
  Matrix marginals = Matrix::Zero(n, r);
  double total = 0.0;
  std::vector<int> y(static_cast<std::size_t>(n), 0);
  long combos = 1;
  for (int i = 0; i < n; ++i) combos *= r;
  for (long c = 0; c < combos; ++c) {
    long rest = c;
    for (int i = 0; i < n; ++i) {
      y[static_cast<std::size_t>(i)] = static_cast<int>(rest % r);
      rest /= r;
    }
    Matrix counts = Matrix::Zero(r, k);
    double w = 1.0;
    for (int i = 0; i < n; ++i) {
      w *= probs(i, y[static_cast<std::size_t>(i)]);
      counts(y[static_cast<std::size_t>(i)], noisy[static_cast<std::size_t>(i)]) += 1.0;
    }
    for (int row = 0; row < r; ++row) w *= beta_fn(alpha + counts.row(row).transpose()) / beta_fn(alpha);
    total += w;
    for (int i = 0; i < n; ++i) marginals(i, y[static_cast<std::size_t>(i)]) += w;
  }
  return marginals / total;
}

}  // namespace

TEST(Anneal, HandValues) {
  AnnealSchedule s;
  s.max_step = 1000;
  EXPECT_DOUBLE_EQ(anneal_coefficient(0, s), 1.0);
  EXPECT_DOUBLE_EQ(anneal_coefficient(1000, s), 0.5);
  EXPECT_NEAR(anneal_coefficient(500, s), std::exp(-0.4), 1e-15);
  EXPECT_NEAR(anneal_coefficient(500, s), 0.6703, 1e-4);
  s.max_step = 0;
  EXPECT_THROW(anneal_coefficient(1, s), ParameterError);
}

TEST(SamplingDistribution, HandExample) {
  Vector p(2);
  p << 0.5, 0.5;
  const Vector dist = sampling_distribution(p, counts_3_1_0_4(), DirichletPrior::symmetric(2), 0);
  EXPECT_NEAR(dist(0), 0.8, 1e-15);
  EXPECT_NEAR(dist(1), 0.2, 1e-15);
}

TEST(SamplingDistribution, ZeroAnnealReturnsClassifier) {
  Vector p(3);
  p << 0.2, 0.3, 0.5;
  CountMatrix m(3, 3);
  m << 9, 0, 1, 2, 2, 2, 0, 0, 7;
  GibbsOptions opts;
  opts.anneal = 0.0;
  const Vector dist = sampling_distribution(p, ConfusionCounts::from_matrix(m), DirichletPrior::symmetric(3), 2, opts);
  EXPECT_TRUE(dist.isApprox(p, 1e-15));
}

TEST(SamplingDistribution, ScaleInvariance) {
  Vector p(2);
  p << 0.3, 0.7;
  const ConfusionCounts c = counts_3_1_0_4();
  const Vector a = sampling_distribution(p, c, DirichletPrior::symmetric(2), 1);
  const Vector b = sampling_distribution(Vector(p * 1e-3), c, DirichletPrior::symmetric(2), 1);
  EXPECT_TRUE(a.isApprox(b, 1e-14));
}

TEST(SamplingDistribution, WarmupReplacesTransitionOnly) {
  Vector p(2);
  p << 0.4, 0.6;
  TransitionMatrix warm{Matrix(2, 2)};
  warm.phi << 0.9, 0.1, 0.3, 0.7;
  GibbsOptions opts;
  opts.warmup = &warm;
  const Vector dist = sampling_distribution(p, counts_3_1_0_4(), DirichletPrior::symmetric(2), 0, opts);
  EXPECT_NEAR(dist(0), 0.4 * 0.9 / (0.4 * 0.9 + 0.6 * 0.3), 1e-15);
}

TEST(SamplingDistribution, NonFiniteScoresAreTrainingErrors) {
  Vector p(2);
  p << std::numeric_limits<double>::quiet_NaN(), 0.5;
  EXPECT_THROW(sampling_distribution(p, counts_3_1_0_4(), DirichletPrior::symmetric(2), 0), TrainingError);
}

TEST(GibbsBatch, OneHotClassifierAlwaysPicksItsClass) {
  Matrix probs = Matrix::Zero(1, 3);
  probs(0, 1) = 1.0;
  const std::vector<int> noisy{2};
  const std::vector<std::size_t> batch{0};
  ConfusionCounts counts(3, 3);
  LatentAssignment y(1);
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    gibbs_sample_batch(probs, batch, noisy, counts, DirichletPrior::symmetric(3), y, {}, rng);
    EXPECT_EQ(y[0], 1);
  }
  EXPECT_EQ(counts.total(), 1);
}

TEST(GibbsBatch, SequentialDrawsSeePreviousUpdates) {
  // Two samples with the same noisy label. After the first is forced into
  // class 0, the second sees that count in its conditional transition.
  Matrix probs(2, 2);
  probs << 1.0, 0.0, 0.5, 0.5;
  const std::vector<int> noisy{0, 0};
  const std::vector<std::size_t> batch{0, 1};
  Rng rng(2);
  int zeros = 0;
  const int draws = 100000;
  for (int t = 0; t < draws; ++t) {
    ConfusionCounts counts(2, 2);
    LatentAssignment y(2);
    gibbs_sample_batch(probs, batch, noisy, counts, DirichletPrior::symmetric(2), y, {}, rng);
    zeros += y[1] == 0;
  }
  // Second draw: (1 + 1) / (2 + 1) against 1 / 2 -> 2/3 / (2/3 + 1/2) = 4/7.
  EXPECT_NEAR(zeros / double(draws), 4.0 / 7.0, 0.01);
}

TEST(GibbsBatch, CountsStayConsistentWithAssignment) {
  const FrozenInstance inst = random_frozen_instance(40, 3, 9);
  LatentAssignment y(40);
  for (std::size_t i = 0; i < 20; ++i) y.labels[i] = inst.noisy_labels[i];
  ConfusionCounts counts = histogram(y, inst.noisy_labels, 3, 3);
  Rng rng(3);
  std::vector<std::size_t> order(40);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int sweep = 0; sweep < 50; ++sweep) {
    rng.shuffle(order);
    const std::vector<std::size_t> batch(order.begin(), order.begin() + 8);
    gibbs_sample_batch(gather_rows(inst.probs, batch), batch, inst.noisy_labels, counts, DirichletPrior::symmetric(3), y, {}, rng);
    EXPECT_EQ(counts, histogram(y, inst.noisy_labels, 3, 3));
  }
}

TEST(ExactPosterior, SingleSampleEqualsClassifier) {
  Matrix p(1, 2);
  p << 0.9, 0.1;
  const std::vector<int> noisy{1};
  EXPECT_TRUE(exact_posterior_bruteforce(p, noisy, DirichletPrior::symmetric(2)).isApprox(p, 1e-14));
  Matrix q(1, 3);
  q << 0.2, 0.5, 0.3;
  const std::vector<int> noisy3{0};
  EXPECT_TRUE(exact_posterior_bruteforce(q, noisy3, DirichletPrior::symmetric(3)).isApprox(q, 1e-14));
}

TEST(ExactPosterior, MatchesLinearDomainEnumeration) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const int n = 2 + static_cast<int>(seed % 4);
    const int k = 2 + static_cast<int>(seed % 2);
    const FrozenInstance inst = random_frozen_instance(n, k, seed);
    Vector alpha(k);
    Rng rng(seed);
    for (int j = 0; j < k; ++j) alpha(j) = 0.3 + 2.0 * rng.uniform();
    const Matrix log_domain = exact_posterior_bruteforce(inst.probs, inst.noisy_labels, DirichletPrior{alpha});
    const Matrix linear = linear_domain_posterior(inst.probs, inst.noisy_labels, alpha);
    EXPECT_TRUE(log_domain.isApprox(linear, 1e-10)) << "seed " << seed;
    EXPECT_TRUE(rows_are_distributions(log_domain));
  }
}

TEST(ExactPosterior, GuardsInstanceSize) {
  const FrozenInstance inst = random_frozen_instance(23, 2, 1);
  EXPECT_THROW(exact_posterior_bruteforce(inst.probs, inst.noisy_labels, DirichletPrior::symmetric(2)), ParameterError);
}

TEST(Mixing, ZeroSweepsReportsPointMassDistance) {
  const FrozenInstance inst = random_frozen_instance(4, 2, 2);
  const GibbsDiagnostics d = mixing_diagnostic(inst.probs, inst.noisy_labels, DirichletPrior::symmetric(2), 0, 0, 1);
  ASSERT_FALSE(d.trace.empty());
  EXPECT_GE(d.final_max_tv(), 0.0);
  EXPECT_LE(d.final_max_tv(), 1.0);
}

TEST(Mixing, ConvergesToExactPosterior) {
  const FrozenInstance inst = random_frozen_instance(6, 2, 0);
  const GibbsDiagnostics d = mixing_diagnostic(inst.probs, inst.noisy_labels, DirichletPrior::symmetric(2), 50000, 5000, 0);
  EXPECT_LE(d.final_max_tv(), 0.02);
  EXPECT_TRUE(rows_are_distributions(d.empirical));
}

TEST(Mixing, TraceTrendsDownward) {
  // Median over 5 seeds of the max TV at each checkpoint; late checkpoints
  // should not exceed early ones.
  std::vector<std::vector<double>> traces;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const FrozenInstance inst = random_frozen_instance(5, 2, seed);
    const GibbsDiagnostics d = mixing_diagnostic(inst.probs, inst.noisy_labels, DirichletPrior::symmetric(2), 20000, 0, seed);
    std::vector<double> tv;
    for (const auto& c : d.trace) tv.push_back(c.max_tv);
    traces.push_back(tv);
  }
  const std::size_t points = traces.front().size();
  std::vector<double> med;
  for (std::size_t i = 0; i < points; ++i) {
    std::vector<double> column;
    for (const auto& t : traces) column.push_back(t[i]);
    med.push_back(median(column));
  }
  EXPECT_LT(med.back(), med.front());
  EXPECT_LE(med.back(), *std::max_element(med.begin() + static_cast<std::ptrdiff_t>(points / 2), med.end()));
  for (std::size_t i = points / 2; i < points; ++i) EXPECT_LE(med[i], med[points / 4] + 1e-12);
}
