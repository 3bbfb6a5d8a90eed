#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace lccn;
using lccn::testing::CountsAndBatch;
using lccn::testing::random_pair;
using lccn::testing::random_prior;

namespace {

bool rows_stochastic(const Matrix& phi, double tol = 1e-9) {
  if ((phi.array() < 0.0).any()) return false;
  for (Eigen::Index i = 0; i < phi.rows(); ++i)
    if (std::abs(phi.row(i).sum() - 1.0) > tol) return false;
  return true;
}

}  // namespace

TEST(BoundProperty, HoldsOnTenThousandRandomPairs) {
  Rng rng(20240101);
  int violations = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const CountsAndBatch p = random_pair(rng, trial % 2 == 0 ? 5 : 60);
    for (const RowUpdateBound& row : update_bound(p.before, p.after, p.prior)) {
      ASSERT_GT(row.r, -1.0);
      ASSERT_GE(row.r_hat + 1e-15, std::abs(row.r));
      ASSERT_GE(row.bound, 0.0);
      if (row.measured > row.bound + 1e-12) ++violations;
    }
  }
  EXPECT_EQ(violations, 0);
}

TEST(BoundProperty, SmallBatchRegimeStaysWithinTwiceRelativeChange) {
  Rng rng(7);
  int checked = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const int k = 2 + static_cast<int>(rng.index(4));
    CountMatrix m(k, k);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 1000 + static_cast<std::int64_t>(rng.index(1000));
    ConfusionCounts before = ConfusionCounts::from_matrix(m);
    ConfusionCounts after = before;
    const std::size_t batch = 1 + rng.index(8);
    for (std::size_t b = 0; b < batch; ++b)
      apply_reassignment(after, static_cast<int>(rng.index(static_cast<std::size_t>(k))),
                         static_cast<int>(rng.index(static_cast<std::size_t>(k))), static_cast<int>(rng.index(static_cast<std::size_t>(k))));
    for (const RowUpdateBound& row : update_bound(before, after, random_prior(k, rng))) {
      ASSERT_LE(static_cast<double>(batch) / row.prior_count, 0.01);
      EXPECT_LE(row.measured, 2.0 * row.r_hat + 1e-6);
      ++checked;
    }
  }
  EXPECT_GT(checked, 2000);
}

TEST(CountsProperty, GibbsKeepsHistogramConsistentWithFixedSamples) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const int k = 2 + static_cast<int>(seed % 3);
    const int r = seed % 2 == 0 ? k : k + 1;
    const int n = 60;
    FrozenInstance inst = random_frozen_instance(n, r, seed);
    for (int& y : inst.noisy_labels) y = std::min(y, k - 1);
    std::vector<bool> fixed(static_cast<std::size_t>(n));
    LatentAssignment y(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < fixed.size(); ++i) {
      fixed[i] = rng.uniform() < 0.2;
      y.labels[i] = inst.noisy_labels[i];
    }
    ConfusionCounts counts = histogram(y, inst.noisy_labels, r, k, &fixed);
    std::vector<std::size_t> free;
    for (std::size_t i = 0; i < fixed.size(); ++i)
      if (!fixed[i]) free.push_back(i);
    const DirichletPrior prior = DirichletPrior::symmetric(k, 0.5);
    for (int step = 0; step < 30; ++step) {
      rng.shuffle(free);
      const std::vector<std::size_t> batch(free.begin(), free.begin() + 8);
      gibbs_sample_batch(gather_rows(inst.probs, batch), batch, inst.noisy_labels, counts, prior, y, {}, rng);
      ASSERT_EQ(counts, histogram(y, inst.noisy_labels, r, k, &fixed)) << "seed " << seed << " step " << step;
    }
  }
}

TEST(SimplexProperty, EveryTransitionConstructorIsRowStochastic) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    const CountsAndBatch p = random_pair(rng, 1000);
    EXPECT_TRUE(rows_stochastic(transition_from_counts(p.after, p.prior).phi));
    EXPECT_TRUE(rows_stochastic(transition_from_counts(p.after, p.prior, Normalization::unsmoothed).phi));

    const int k = 2 + static_cast<int>(seed % 4);
    const FrozenInstance inst = random_frozen_instance(30, k, seed);
    EXPECT_TRUE(rows_stochastic(warmup_transition(inst.probs, inst.noisy_labels, k).phi));

    Matrix logits(k, k);
    for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = 30.0 * rng.normal();
    EXPECT_TRUE(rows_stochastic(TransitionLayer{logits}.phi()));
    EXPECT_TRUE(rows_stochastic(pairflip_transition(k, rng.uniform(), circular_pair_map(k))));
    EXPECT_TRUE(rows_stochastic(symmetric_transition(k, rng.uniform())));
  }
}

TEST(SimplexProperty, SamplingDistributionIsADistribution) {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const CountsAndBatch p = random_pair(rng, 40);
    const int r = p.after.latent_classes();
    Vector probs(r);
    for (int j = 0; j < r; ++j) probs(j) = rng.uniform() < 0.1 ? 0.0 : rng.uniform();
    if (probs.sum() == 0.0) probs(0) = 1.0;
    probs /= probs.sum();
    GibbsOptions opts;
    opts.anneal = rng.uniform();
    const Vector d =
        sampling_distribution(probs, p.after, p.prior, static_cast<int>(rng.index(static_cast<std::size_t>(p.after.noisy_classes()))), opts);
    EXPECT_TRUE((d.array() >= 0.0).all());
    EXPECT_NEAR(d.sum(), 1.0, 1e-12);
  }
}

TEST(DeterminismProperty, EveryTrainerIsBitReproducible) {
  const auto data = lccn::testing::pairflip_benchmark(12, 60);
  for (auto kind : {TrainerKind::ce, TrainerKind::bootstrap_hard, TrainerKind::forward_fixed, TrainerKind::s_adaptation,
                    TrainerKind::em_reference, TrainerKind::lccn, TrainerKind::lccn_star, TrainerKind::lccn_plus}) {
    TrainConfig cfg = lccn::testing::quick_config(12, 2, 3);
    cfg.kind = kind;
    cfg.reference_phi = data.phi_star;
    LabeledDataset train_set = kind == TrainerKind::lccn_plus ? mark_clean_subset(data.train, 20, 3) : data.train;
    const RunResult a = train(train_set, data.test, cfg);
    const RunResult b = train(train_set, data.test, cfg);
    EXPECT_EQ(io::metrics_csv(a.metrics), io::metrics_csv(b.metrics)) << to_string(kind);
    EXPECT_EQ(io::variations_csv(a.batches), io::variations_csv(b.batches)) << to_string(kind);
    if (a.phi.phi.size() > 0) EXPECT_TRUE(rows_stochastic(a.phi.phi)) << to_string(kind);
  }
}

TEST(DeterminismProperty, DifferentSeedsDiffer) {
  const auto data = lccn::testing::pairflip_benchmark(13, 60);
  const RunResult a = train_lccn(data.train, data.test, lccn::testing::quick_config(1, 2, 3));
  const RunResult b = train_lccn(data.train, data.test, lccn::testing::quick_config(2, 2, 3));
  EXPECT_NE(io::metrics_csv(a.metrics), io::metrics_csv(b.metrics));
}

TEST(NoiseProperty, RealizedFlipsMatchRequestedRatio) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const LabeledDataset clean = make_gaussian_mixture(4, 2, 2500, 2.0, seed);
    const auto [noisy, report] = inject_asymmetric_pairflip(clean, 0.3, circular_pair_map(4), seed);
    std::size_t flipped = 0;
    for (std::size_t i = 0; i < noisy.size(); ++i) flipped += noisy.noisy_labels[i] != noisy.true_labels[i];
    EXPECT_NEAR(flipped / double(noisy.size()), 0.3, 0.02);
    EXPECT_TRUE(noisy.features == clean.features);
    EXPECT_EQ(noisy.true_labels, clean.true_labels);
  }
}
