#pragma once

// Training procedures: dynamic label regression (LCCN and its open-set and
// semi-supervised variants) and the comparison baselines (plain CE, hard
// bootstrapping, forward correction with a fixed transition, S-adaptation with
// a backpropagated transition layer, and the full-pass EM reference).

#include "lccn/classifier.hpp"
#include "lccn/datagen.hpp"
#include "lccn/metrics.hpp"
#include "lccn/noise_model.hpp"
#include "lccn/sampler.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lccn {

enum class TrainerKind { ce, bootstrap_hard, forward_fixed, s_adaptation, em_reference, lccn, lccn_star, lccn_plus };

inline constexpr std::string_view to_string(TrainerKind kind) {
  switch (kind) {
    case TrainerKind::ce: return "ce";
    case TrainerKind::bootstrap_hard: return "bootstrap_hard";
    case TrainerKind::forward_fixed: return "forward_fixed";
    case TrainerKind::s_adaptation: return "s_adaptation";
    case TrainerKind::em_reference: return "em_reference";
    case TrainerKind::lccn: return "lccn";
    case TrainerKind::lccn_star: return "lccn_star";
    case TrainerKind::lccn_plus: return "lccn_plus";
  }
  return "unknown";
}

inline TrainerKind trainer_kind_from_string(std::string_view name) {
  for (auto kind : {TrainerKind::ce, TrainerKind::bootstrap_hard, TrainerKind::forward_fixed, TrainerKind::s_adaptation,
                    TrainerKind::em_reference, TrainerKind::lccn, TrainerKind::lccn_star, TrainerKind::lccn_plus})
    if (to_string(kind) == name) return kind;
  throw ParameterError("unknown trainer kind '" + std::string(name) + "'");
}

struct TrainConfig {
  TrainerKind kind = TrainerKind::lccn;
  Architecture architecture;
  int epochs = 60;       // main-phase epochs after pretraining
  long iterations = 0;   // L; 0 means epochs * batches per epoch
  std::size_t batch_size = 16;
  LrSchedule lr_schedule{{{0, 0.05}, {50, 0.025}, {75, 0.005}}};  // indexed by global epoch, pretraining first
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int pretrain_epochs = 30;
  long warmup_steps = -1;  // delta; -1 means one epoch of steps
  double alpha = 1.0;
  double xi = 1e-20;
  AnnealSchedule anneal;
  AnnealTarget anneal_target = AnnealTarget::transition;
  bool identity_warmup = false;          // diagonal warm-up transition instead of the estimated one
  std::optional<double> grad_clip;       // tau, S-adaptation transition gradients
  double transition_lr = -1.0;           // S-adaptation; negative means "same as the classifier"
  double bootstrap_beta = 0.8;
  bool em_posterior_weights = true;      // EM M-step weights P(y|x) phi[y][noisy], normalized; false uses phi[:, noisy]
  std::optional<Matrix> oracle_phi;      // fixed transition (forward) or warm-up replacement (LCCN family)
  std::optional<Matrix> reference_phi;   // ground truth, used only for phi_l1_error
  Normalization phi_normalization = Normalization::smoothed;
  std::uint64_t seed = 0;
  std::optional<long> fault_bound_violation_step;  // test hook: corrupts the bound check at this step
};

struct BatchLog {
  long step = 0;
  double max_variation = 0.0;
  double max_bound = std::numeric_limits<double>::quiet_NaN();
};

struct RunResult {
  TrainerKind kind = TrainerKind::lccn;
  std::vector<MetricsRecord> metrics;
  ClassifierParams classifier;
  TransitionMatrix phi;
  std::vector<BatchLog> batches;
  LatentAssignment assignment;  // LCCN family only
  std::optional<NoiseInjectionReport> noise_report;
  long bound_violations = 0;
  double ood_recall = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> warnings;

  double final_accuracy() const { return metrics.empty() ? std::numeric_limits<double>::quiet_NaN() : metrics.back().accuracy; }

  double max_batch_variation() const {
    double out = 0.0;
    for (const auto& b : batches) out = std::max(out, b.max_variation);
    return out;
  }

  std::vector<double> batch_variations() const {
    std::vector<double> out;
    out.reserve(batches.size());
    for (const auto& b : batches) out.push_back(b.max_variation);
    return out;
  }
};

inline void validate(const TrainConfig& cfg) {
  detail::require(cfg.batch_size >= 1, "train config: batch_size must be >= 1");
  detail::require(cfg.epochs >= 0 && cfg.pretrain_epochs >= 0, "train config: epochs must be >= 0");
  detail::require(cfg.iterations >= 0, "train config: iterations must be >= 0");
  detail::require(cfg.iterations == 0 || cfg.warmup_steps <= cfg.iterations, "train config: warmup_steps must be <= iterations");
  detail::require(cfg.alpha > 0.0, "train config: alpha must be > 0");
  detail::require(cfg.xi > 0.0 && cfg.xi < 0.5, "train config: xi must lie in (0, 0.5)");
  detail::require(!cfg.lr_schedule.phases.empty(), "train config: empty learning-rate schedule");
  detail::require(cfg.bootstrap_beta >= 0.0 && cfg.bootstrap_beta <= 1.0, "train config: bootstrap_beta must lie in [0, 1]");
  if (cfg.grad_clip) detail::require(*cfg.grad_clip > 0.0, "train config: grad_clip must be > 0");
}

// ---------------------------------------------------------------------------
// Transition-corrected losses shared by forward correction and S-adaptation.

/// Loss on q = P phi (q(noisy = j | x) = sum_k phi[k][j] P(k | x)), with
/// gradients for P and for phi.
struct CorrectedLoss {
  double loss = 0.0;
  Matrix grad_probs;
  Matrix grad_phi;
};

inline CorrectedLoss forward_corrected_loss(const Matrix& probs, const Matrix& phi, std::span<const int> noisy_labels,
                                            const LossConfig& cfg) {
  detail::require(phi.rows() == probs.cols(), "forward_corrected_loss: transition rows must match classifier width");
  const Matrix mixed = probs * phi;
  LossResult inner = clipped_cross_entropy(mixed, noisy_labels, cfg);
  return {inner.loss, inner.grad_probs * phi.transpose(), probs.transpose() * inner.grad_probs};
}

/// Row-softmax transition layer used by S-adaptation.
struct TransitionLayer {
  Matrix logits;

  static TransitionLayer from_transition(const Matrix& phi) { return {phi.array().log().matrix()}; }

  Matrix phi() const {
    Matrix out = logits;
    detail::softmax_rows(out);
    return out;
  }

  /// dL/dlogits from dL/dphi through the row softmax.
  static Matrix logit_gradient(const Matrix& phi, const Matrix& grad_phi) {
    const Vector inner = phi.cwiseProduct(grad_phi).rowwise().sum();
    return phi.cwiseProduct(grad_phi.colwise() - inner);
  }
};

// ---------------------------------------------------------------------------

namespace detail {

class TrainingSession {
 public:
  TrainingSession(const LabeledDataset& train, const LabeledDataset& test, const TrainConfig& cfg, int outputs)
      : train_(train), test_(test), cfg_(cfg), batcher_(train.size(), cfg.batch_size),
        batch_rng_(Rng::derive(cfg.seed, 1)), sampler_rng_(Rng::derive(cfg.seed, 2)) {
    lccn::validate(cfg);
    lccn::validate(train);
    require(test.size() > 0, "training: empty test set");
    require(test.dim() == train.dim(), "training: train/test feature dimension mismatch");
    params_ = init_classifier(cfg.architecture, static_cast<int>(train.dim()), outputs, cfg.seed);
    opt_ = make_optimizer(params_, cfg.lr_schedule.at(0), cfg.momentum, cfg.weight_decay);
    loss_cfg_.xi = cfg.xi;
  }

  void pretrain() {
    params_ = pretrain_ce(std::move(params_), opt_, train_, cfg_.pretrain_epochs, cfg_.batch_size, batch_rng_, loss_cfg_,
                          &cfg_.lr_schedule);
    global_epoch_ = cfg_.pretrain_epochs;
  }

  long batches_per_epoch() const { return static_cast<long>(batcher_.batches_per_epoch()); }

  long total_steps() const {
    return cfg_.iterations > 0 ? cfg_.iterations : static_cast<long>(cfg_.epochs) * batches_per_epoch();
  }

  long warmup_steps() const {
    if (cfg_.warmup_steps < 0) return std::min(batches_per_epoch(), total_steps());
    detail::require(cfg_.warmup_steps <= total_steps(), "train config: warmup_steps must be <= the number of main-phase steps");
    return cfg_.warmup_steps;
  }

  /// Runs the main phase. `on_batch(batch, cache, step) -> loss` performs one
  /// update; `on_epoch(record&)` fills trainer-specific metric fields.
  template <typename OnBatch, typename OnEpoch>
  void run(OnBatch&& on_batch, OnEpoch&& on_epoch) {
    const long steps = total_steps();
    MetricsRecord initial = evaluate(0, std::numeric_limits<double>::quiet_NaN());
    on_epoch(initial, true);
    result_.metrics.push_back(initial);
    long step = 0;
    while (step < steps) {
      opt_.learning_rate = cfg_.lr_schedule.at(global_epoch_);
      double loss_sum = 0.0;
      long loss_count = 0;
      epoch_max_variation_ = 0.0;
      epoch_max_bound_ = std::numeric_limits<double>::quiet_NaN();
      for (const auto& batch : batcher_.epoch(batch_rng_)) {
        if (step >= steps) break;
        const ForwardCache cache = forward(params_, gather_rows(train_.features, batch));
        loss_sum += on_batch(batch, cache, step);
        ++loss_count;
        ++step;
      }
      ++global_epoch_;
      MetricsRecord record = evaluate(step, loss_sum / static_cast<double>(loss_count));
      record.max_phi_row_variation = epoch_max_variation_;
      record.theorem_bound = epoch_max_bound_;
      on_epoch(record, false);
      result_.metrics.push_back(record);
    }
  }

  void log_batch(long step, double variation, double bound) {
    result_.batches.push_back({step, variation, bound});
    epoch_max_variation_ = std::max(epoch_max_variation_, variation);
    if (!std::isnan(bound)) epoch_max_bound_ = std::isnan(epoch_max_bound_) ? bound : std::max(epoch_max_bound_, bound);
  }

  double update(const ForwardCache& cache, const LossResult& loss) {
    if (!std::isfinite(loss.loss)) throw TrainingError("training diverged: non-finite loss");
    apply_gradients(params_, opt_, backward(params_, cache, loss.grad_probs));
    return loss.loss;
  }

  MetricsRecord evaluate(long step, double loss) const {
    MetricsRecord record;
    record.step = step;
    record.split = Split::test;
    record.accuracy = test_accuracy(params_, test_, scored_classes_);
    record.loss = loss;
    return record;
  }

  std::vector<int> noisy_of(std::span<const std::size_t> batch) const {
    std::vector<int> out;
    out.reserve(batch.size());
    for (std::size_t i : batch) out.push_back(train_.noisy_labels[i]);
    return out;
  }

  Matrix predict_all() const { return forward_proba(params_, train_.features); }

  const LabeledDataset& train() const { return train_; }
  const TrainConfig& config() const { return cfg_; }
  const LossConfig& loss_config() const { return loss_cfg_; }
  ClassifierParams& params() { return params_; }
  OptimizerState& optimizer() { return opt_; }
  Rng& sampler_rng() { return sampler_rng_; }
  RunResult& result() { return result_; }
  void set_scored_classes(int k) { scored_classes_ = k; }

  RunResult finish(TrainerKind kind) {
    result_.kind = kind;
    result_.classifier = params_;
    return std::move(result_);
  }

 private:
  const LabeledDataset& train_;
  const LabeledDataset& test_;
  const TrainConfig& cfg_;
  EpochBatcher batcher_;
  Rng batch_rng_;
  Rng sampler_rng_;
  ClassifierParams params_;
  OptimizerState opt_;
  LossConfig loss_cfg_;
  int global_epoch_ = 0;
  int scored_classes_ = 0;
  double epoch_max_variation_ = 0.0;
  double epoch_max_bound_ = std::numeric_limits<double>::quiet_NaN();
  RunResult result_;
};

inline void fill_phi_error(MetricsRecord& record, const Matrix& phi, const TrainConfig& cfg) {
  if (!cfg.reference_phi) return;
  const Matrix& ref = *cfg.reference_phi;
  if (ref.cols() != phi.cols() || ref.rows() > phi.rows()) return;
  record.phi_l1_error = transition_l1_error(phi.topRows(ref.rows()), ref);
}

/// L1 change of each row, maximized over rows.
inline double max_row_change(const Matrix& before, const Matrix& after) {
  return (after - before).cwiseAbs().rowwise().sum().maxCoeff();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Baselines

/// Plain cross-entropy on the noisy labels for pretrain_epochs + epochs.
inline RunResult train_ce(const LabeledDataset& train, const LabeledDataset& test, const TrainConfig& cfg) {
  detail::TrainingSession session(train, test, cfg, train.num_classes);
  session.pretrain();
  session.run(
      [&](std::span<const std::size_t> batch, const ForwardCache& cache, long) {
        const auto labels = session.noisy_of(batch);
        return session.update(cache, clipped_cross_entropy(cache.probs, labels, session.loss_config()));
      },
      [](MetricsRecord&, bool) {});
  session.result().phi = TransitionMatrix::identity(train.num_classes);
  return session.finish(TrainerKind::ce);
}

/// Hard bootstrapping: target = beta * onehot(noisy) + (1 - beta) * onehot(argmax prediction).
inline RunResult train_bootstrap_hard(const LabeledDataset& train, const LabeledDataset& test, const TrainConfig& cfg) {
  detail::TrainingSession session(train, test, cfg, train.num_classes);
  if (cfg.bootstrap_beta == 0.0)
    session.result().warnings.push_back("bootstrap_beta = 0: pure self-training on the model's own argmax");
  session.pretrain();
  const double beta = cfg.bootstrap_beta;
  session.run(
      [&](std::span<const std::size_t> batch, const ForwardCache& cache, long) {
        Matrix weights = Matrix::Zero(cache.probs.rows(), cache.probs.cols());
        for (Eigen::Index i = 0; i < cache.probs.rows(); ++i) {
          Eigen::Index guess = 0;
          cache.probs.row(i).maxCoeff(&guess);
          weights(i, train.noisy_labels[batch[static_cast<std::size_t>(i)]]) += beta;
          weights(i, guess) += 1.0 - beta;
        }
        return session.update(cache, weighted_clipped_cross_entropy(cache.probs, weights, session.loss_config()));
      },
      [](MetricsRecord&, bool) {});
  session.result().phi = TransitionMatrix::identity(train.num_classes);
  return session.finish(TrainerKind::bootstrap_hard);
}

/// Forward correction with a frozen transition: the oracle if supplied,
/// otherwise the warm-up estimate from the pretrained classifier.
inline RunResult train_forward_fixed(const LabeledDataset& train, const LabeledDataset& test, const TrainConfig& cfg) {
  detail::TrainingSession session(train, test, cfg, train.num_classes);
  session.pretrain();
  const Matrix phi = cfg.oracle_phi ? *cfg.oracle_phi
                                    : warmup_transition(session.predict_all(), train.noisy_labels, train.num_classes).phi;
  detail::require(phi.rows() == train.num_classes && phi.cols() == train.num_classes,
                  "train_forward_fixed: transition must be K x K");
  detail::require(rows_are_distributions(phi), "train_forward_fixed: transition must be row-stochastic");
  session.run(
      [&](std::span<const std::size_t> batch, const ForwardCache& cache, long) {
        const auto labels = session.noisy_of(batch);
        const CorrectedLoss loss = forward_corrected_loss(cache.probs, phi, labels, session.loss_config());
        return session.update(cache, {loss.loss, loss.grad_probs});
      },
      [&](MetricsRecord& record, bool) { detail::fill_phi_error(record, phi, cfg); });
  session.result().phi = {phi};
  return session.finish(TrainerKind::forward_fixed);
}

/// S-adaptation: a row-softmax transition layer initialized from the warm-up
/// transition, frozen for the first delta steps and then trained by
/// backpropagation jointly with the classifier.
inline RunResult train_s_adaptation(const LabeledDataset& train, const LabeledDataset& test, const TrainConfig& cfg) {
  detail::TrainingSession session(train, test, cfg, train.num_classes);
  session.pretrain();
  const Matrix init = cfg.oracle_phi ? *cfg.oracle_phi
                      : cfg.identity_warmup
                          ? Matrix(Matrix::Identity(train.num_classes, train.num_classes))
                          : warmup_transition(session.predict_all(), train.noisy_labels, train.num_classes).phi;
  detail::require(rows_are_distributions(init), "train_s_adaptation: initial transition must be row-stochastic");
  TransitionLayer layer = TransitionLayer::from_transition(init);
  Matrix velocity = Matrix::Zero(layer.logits.rows(), layer.logits.cols());
  const long delta = session.warmup_steps();
  session.run(
      [&](std::span<const std::size_t> batch, const ForwardCache& cache, long step) {
        const auto labels = session.noisy_of(batch);
        const Matrix phi = layer.phi();
        const CorrectedLoss loss = forward_corrected_loss(cache.probs, phi, labels, session.loss_config());
        const double value = session.update(cache, {loss.loss, loss.grad_probs});
        double variation = 0.0;
        if (step >= delta) {
          Matrix grad = TransitionLayer::logit_gradient(phi, loss.grad_phi);
          if (cfg.grad_clip) grad = grad.cwiseMax(-*cfg.grad_clip).cwiseMin(*cfg.grad_clip);
          if (!grad.allFinite()) throw TrainingError("s_adaptation: non-finite transition gradient");
          const double lr = cfg.transition_lr < 0.0 ? session.optimizer().learning_rate : cfg.transition_lr;
          // Same momentum as the classifier, no weight decay. Entries
          // initialized at log(0) stay pinned there.
          velocity = cfg.momentum * velocity + grad;
          for (Eigen::Index i = 0; i < layer.logits.size(); ++i)
            if (std::isfinite(layer.logits.data()[i])) layer.logits.data()[i] -= lr * velocity.data()[i];
          variation = detail::max_row_change(phi, layer.phi());
        }
        session.log_batch(step, variation, std::numeric_limits<double>::quiet_NaN());
        return value;
      },
      [&](MetricsRecord& record, bool) { detail::fill_phi_error(record, layer.phi(), cfg); });
  session.result().phi = {layer.phi()};
  return session.finish(TrainerKind::s_adaptation);
}

/// E-step of the EM reference: the expected transition from full-dataset predictions.
inline TransitionMatrix em_expected_transition(const Matrix& predictions, std::span<const int> noisy_labels,
                                               int noisy_classes) {
  return warmup_transition(predictions, noisy_labels, noisy_classes);
}

/// Full-pass EM: each epoch recomputes the expected transition over the whole
/// dataset, then runs one SGD epoch maximizing
/// sum_n sum_y phi_bar[y][noisy_n] ln P(y | x_n).
inline RunResult train_em_reference(const LabeledDataset& train, const LabeledDataset& test, const TrainConfig& cfg) {
  detail::TrainingSession session(train, test, cfg, train.num_classes);
  session.pretrain();
  const int k = train.num_classes;
  TransitionMatrix phi_bar = em_expected_transition(session.predict_all(), train.noisy_labels, k);
  const long per_epoch = session.batches_per_epoch();
  session.run(
      [&](std::span<const std::size_t> batch, const ForwardCache& cache, long step) {
        if (step > 0 && step % per_epoch == 0) {
          const TransitionMatrix next = em_expected_transition(session.predict_all(), train.noisy_labels, k);
          session.log_batch(step, detail::max_row_change(phi_bar.phi, next.phi), std::numeric_limits<double>::quiet_NaN());
          phi_bar = next;
        }
        Matrix weights(cache.probs.rows(), cache.probs.cols());
        for (Eigen::Index i = 0; i < weights.rows(); ++i) {
          weights.row(i) = phi_bar.phi.col(train.noisy_labels[batch[static_cast<std::size_t>(i)]]).transpose();
          if (cfg.em_posterior_weights) {
            weights.row(i) = weights.row(i).cwiseProduct(cache.probs.row(i));
            const double total = weights.row(i).sum();
            if (total > 0.0) weights.row(i) /= total;
          }
        }
        return session.update(cache, weighted_clipped_cross_entropy(cache.probs, weights, session.loss_config()));
      },
      [&](MetricsRecord& record, bool) { detail::fill_phi_error(record, phi_bar.phi, cfg); });
  session.result().phi = em_expected_transition(session.predict_all(), train.noisy_labels, k);
  return session.finish(TrainerKind::em_reference);
}

// ---------------------------------------------------------------------------
// Dynamic label regression

namespace detail {

/// Shared body of LCCN, LCCN* (open_set) and LCCN+ (use_clean).
inline RunResult run_label_regression(const LabeledDataset& train, const LabeledDataset& test, const TrainConfig& cfg,
                                      bool open_set, bool use_clean, TrainerKind kind) {
  const int k = train.num_classes;
  const int latent = open_set ? k + 1 : k;
  TrainingSession session(train, test, cfg, latent);
  if (open_set) session.set_scored_classes(k);
  const DirichletPrior prior = DirichletPrior::symmetric(k, cfg.alpha);
  session.pretrain();

  if (open_set) {
    // The outlier output never receives a target during pretraining; give it
    // prior mass 1/(K+1) at the average in-distribution log-partition.
    const Matrix z = logits(session.params(), train.features);
    double mean_lse = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double top = z.row(i).head(k).maxCoeff();
      mean_lse += top + std::log((z.row(i).head(k).array() - top).exp().sum());
    }
    mean_lse /= static_cast<double>(z.rows());
    Layer& out = session.params().layers.back();
    out.weight.row(k).setZero();
    out.bias(k) = mean_lse - std::log(static_cast<double>(k));
    for (auto& v : session.optimizer().velocity) {
      v.weight.setZero();
      v.bias.setZero();
    }
  }

  TransitionMatrix phi_init;
  if (cfg.oracle_phi) {
    detail::require(cfg.oracle_phi->rows() == latent && cfg.oracle_phi->cols() == k,
                    "label regression: oracle transition must be R x K");
    phi_init = {*cfg.oracle_phi};
  } else if (cfg.identity_warmup) {
    phi_init = {Matrix::Constant(latent, k, 1.0 / k)};
    phi_init.phi.topRows(k).setIdentity();
  } else {
    phi_init = warmup_transition(session.predict_all(), train.noisy_labels, k);
  }
  detail::require(phi_init.is_stochastic(), "label regression: warm-up transition must be row-stochastic");

  std::vector<bool> fixed(train.size(), false);
  LatentAssignment assignment(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (use_clean && train.clean_mask[i]) {
      fixed[i] = true;
      assignment.labels[i] = train.true_labels[i];
    } else {
      assignment.labels[i] = train.noisy_labels[i];
    }
  }
  ConfusionCounts counts = histogram(assignment, train.noisy_labels, latent, k, &fixed);

  const long delta = session.warmup_steps();
  auto& result = session.result();
  std::vector<std::size_t> sample_idx;
  std::vector<Eigen::Index> sample_rows;
  std::vector<int> targets;

  auto epoch_metrics = [&](MetricsRecord& record, bool) {
    const TransitionMatrix phi = transition_from_counts(counts, prior, cfg.phi_normalization);
    fill_phi_error(record, phi.phi, cfg);
    record.correction_ratio = correction_ratio(assignment, train.true_labels);
    ensure(histogram(assignment, train.noisy_labels, latent, k, &fixed) == counts,
           "label regression: counts diverged from the latent assignment");
  };

  session.run(
      [&](std::span<const std::size_t> batch, const ForwardCache& cache, long step) {
        sample_idx.clear();
        sample_rows.clear();
        for (std::size_t m = 0; m < batch.size(); ++m) {
          if (fixed[batch[m]]) continue;
          sample_idx.push_back(batch[m]);
          sample_rows.push_back(static_cast<Eigen::Index>(m));
        }
        const ConfusionCounts before = counts;
        if (!sample_idx.empty()) {
          Matrix probs(static_cast<Eigen::Index>(sample_rows.size()), latent);
          for (std::size_t r = 0; r < sample_rows.size(); ++r)
            probs.row(static_cast<Eigen::Index>(r)) = cache.probs.row(sample_rows[r]);
          GibbsOptions options;
          options.warmup = step < delta ? &phi_init : nullptr;
          options.anneal = cfg.anneal.enabled ? anneal_coefficient(step, cfg.anneal) : 1.0;
          options.anneal_target = cfg.anneal_target;
          gibbs_sample_batch(probs, sample_idx, train.noisy_labels, counts, prior, assignment, options,
                             session.sampler_rng());
        }

        auto rows = update_bound(before, counts, prior);
        if (cfg.fault_bound_violation_step && *cfg.fault_bound_violation_step == step)
          rows.front().measured = rows.front().bound + 1.0;
        const BatchVariation variation = summarize(rows);
        session.log_batch(step, variation.max_variation, variation.max_bound);
        if (!variation.holds) {
          ++result.bound_violations;
          throw TrainingError("transition update bound violated at step " + std::to_string(step) + ": measured " +
                              std::to_string(variation.max_variation) + " > bound " +
                              std::to_string(variation.max_bound));
        }

        targets.clear();
        for (std::size_t i : batch) targets.push_back(assignment[i]);
        return session.update(cache, clipped_cross_entropy(cache.probs, targets, session.loss_config()));
      },
      epoch_metrics);

  result.phi = transition_from_counts(counts, prior, cfg.phi_normalization);
  result.assignment = assignment;
  if (open_set && train.ood_count() > 0) {
    std::size_t caught = 0;
    for (std::size_t i = 0; i < train.size(); ++i)
      if (train.ood_mask[i] && assignment[i] == k) ++caught;
    result.ood_recall = static_cast<double>(caught) / static_cast<double>(train.ood_count());
  }
  return session.finish(kind);
}

}  // namespace detail

inline RunResult train_lccn(const LabeledDataset& train, const LabeledDataset& test, const TrainConfig& cfg) {
  return detail::run_label_regression(train, test, cfg, false, false, TrainerKind::lccn);
}

/// Open-set variant: K + 1 latent classes, the last one collecting outliers.
inline RunResult train_lccn_star(const LabeledDataset& train, const LabeledDataset& test, const TrainConfig& cfg) {
  return detail::run_label_regression(train, test, cfg, true, false, TrainerKind::lccn_star);
}

/// Semi-supervised variant: clean-masked samples keep their label and stay
/// out of the confusion counts.
inline RunResult train_lccn_plus(const LabeledDataset& train, const LabeledDataset& test, const TrainConfig& cfg) {
  if (train.clean_count() == 0) {
    RunResult fallback = detail::run_label_regression(train, test, cfg, false, false, TrainerKind::lccn_plus);
    fallback.warnings.insert(fallback.warnings.begin(), "lccn_plus: empty clean subset, running plain lccn");
    return fallback;
  }
  return detail::run_label_regression(train, test, cfg, false, true, TrainerKind::lccn_plus);
}

inline RunResult train(const LabeledDataset& train_set, const LabeledDataset& test_set, const TrainConfig& cfg) {
  switch (cfg.kind) {
    case TrainerKind::ce: return train_ce(train_set, test_set, cfg);
    case TrainerKind::bootstrap_hard: return train_bootstrap_hard(train_set, test_set, cfg);
    case TrainerKind::forward_fixed: return train_forward_fixed(train_set, test_set, cfg);
    case TrainerKind::s_adaptation: return train_s_adaptation(train_set, test_set, cfg);
    case TrainerKind::em_reference: return train_em_reference(train_set, test_set, cfg);
    case TrainerKind::lccn: return train_lccn(train_set, test_set, cfg);
    case TrainerKind::lccn_star: return train_lccn_star(train_set, test_set, cfg);
    case TrainerKind::lccn_plus: return train_lccn_plus(train_set, test_set, cfg);
  }
  throw ParameterError("train: unknown trainer kind");
}

}  // namespace lccn
