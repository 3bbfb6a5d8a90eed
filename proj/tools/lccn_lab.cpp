// lccn_lab: dataset generation, training runs, sweeps and diagnostics for
// label-noise experiments.
//
// Exit codes: 0 success, 1 runtime or training failure, 2 usage or config error.

#include "lccn/lccn.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using lccn::io::json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

/// Missing inputs and bad arguments discovered after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::size_t worker_limit() {
  std::size_t limit = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("LCCN_LAB_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) limit = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw UsageError("LCCN_LAB_THREADS: expected a positive integer, got '" + std::string(env) + "'");
    }
  }
  return limit;
}

/// Runs jobs on at most worker_limit() threads. The first failure (by job
/// index) is rethrown after every worker has finished.
void run_parallel(std::size_t count, const std::function<void(std::size_t)>& job) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  const std::size_t workers = std::min(worker_limit(), count);
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string seed_dir_name(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

struct RunSummary {
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double correction_ratio = 0.0;
  double phi_l1_error = 0.0;
  double max_batch_variation = 0.0;
};

double median_of(const std::vector<RunSummary>& runs, double RunSummary::*field) {
  std::vector<double> values;
  for (const auto& r : runs)
    if (!std::isnan(r.*field)) values.push_back(r.*field);
  return values.empty() ? std::numeric_limits<double>::quiet_NaN() : lccn::median(values);
}

struct Aggregate {
  double accuracy, correction_ratio, phi_l1_error, max_batch_variation;
};

Aggregate aggregate(const std::vector<RunSummary>& runs) {
  return {median_of(runs, &RunSummary::accuracy), median_of(runs, &RunSummary::correction_ratio),
          median_of(runs, &RunSummary::phi_l1_error), median_of(runs, &RunSummary::max_batch_variation)};
}

std::string aggregate_cells(const Aggregate& a) {
  using lccn::io::format_real;
  return format_real(a.accuracy) + "," + format_real(a.correction_ratio) + "," + format_real(a.phi_l1_error) + "," +
         format_real(a.max_batch_variation);
}

/// One seeded run: data, training and every artifact under `dir`.
RunSummary run_one(lccn::io::ExperimentConfig cfg, std::uint64_t seed, const fs::path& dir, const fs::path& base) {
  cfg.train.seed = seed;
  cfg.seeds = {seed};
  cfg.out = dir.string();
  lccn::io::PreparedData data = lccn::io::prepare_data(cfg, seed, base);
  if (!cfg.train.reference_phi && data.ground_truth &&
      (cfg.train.kind != lccn::TrainerKind::lccn_star || data.ground_truth->rows() == data.train.num_classes))
    cfg.train.reference_phi = data.ground_truth;

  fs::create_directories(dir);
  lccn::io::write_json(dir / "config.json", lccn::io::experiment_to_json(cfg));
  if (data.report) lccn::io::write_json(dir / "noise_report.json", lccn::io::report_to_json(*data.report, data.ground_truth));

  lccn::RunResult result = lccn::train(data.train, data.test, cfg.train);
  result.noise_report = data.report;

  lccn::io::write_text(dir / "metrics.csv", lccn::io::metrics_csv(result.metrics));
  lccn::io::write_text(dir / "variations.csv", lccn::io::variations_csv(result.batches));
  lccn::io::write_json(dir / "phi_final.json", lccn::io::transition_to_json(result.phi));
  lccn::io::write_json(dir / "checkpoint.json", lccn::io::checkpoint_to_json(result.classifier));
  if (!result.warnings.empty()) {
    std::string text;
    for (const auto& w : result.warnings) text += w + "\n";
    lccn::io::write_text(dir / "warnings.txt", text);
  }

  RunSummary s;
  s.seed = seed;
  const lccn::MetricsRecord& last = result.metrics.back();
  s.accuracy = last.accuracy;
  s.correction_ratio = last.correction_ratio;
  s.phi_l1_error = last.phi_l1_error;
  s.max_batch_variation = result.max_batch_variation();
  return s;
}

/// Runs every seed in parallel and writes summary.csv with a median row.
std::vector<RunSummary> run_seeds(const lccn::io::ExperimentConfig& cfg, const fs::path& out, const fs::path& base) {
  std::vector<RunSummary> runs(cfg.seeds.size());
  run_parallel(cfg.seeds.size(), [&](std::size_t i) {
    runs[i] = run_one(cfg, cfg.seeds[i], out / seed_dir_name(cfg.seeds[i]), base);
  });
  std::string csv = "seed,final_accuracy,final_correction_ratio,final_phi_l1_error,max_batch_variation\n";
  for (const auto& r : runs) {
    csv += std::to_string(r.seed) + "," + aggregate_cells({r.accuracy, r.correction_ratio, r.phi_l1_error, r.max_batch_variation}) + "\n";
  }
  csv += "median," + aggregate_cells(aggregate(runs)) + "\n";
  lccn::io::write_text(out / "summary.csv", csv);
  return runs;
}

std::vector<std::uint64_t> parse_seed_list(const std::vector<std::string>& tokens) {
  std::vector<std::uint64_t> seeds;
  for (const auto& token : tokens) {
    std::stringstream ss(token);
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (part.empty()) continue;
      try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(part, &used);
        if (used != part.size()) throw std::invalid_argument(part);
        seeds.push_back(v);
      } catch (const std::exception&) {
        throw UsageError("--seed: invalid seed '" + part + "'");
      }
    }
  }
  return seeds;
}

std::vector<double> parse_value_list(const std::vector<std::string>& tokens) {
  std::vector<double> values;
  for (const auto& token : tokens) {
    std::stringstream ss(token);
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (part.empty()) continue;
      try {
        std::size_t used = 0;
        values.push_back(std::stod(part, &used));
        if (used != part.size()) throw std::invalid_argument(part);
      } catch (const std::exception&) {
        throw UsageError("--values: invalid number '" + part + "'");
      }
    }
  }
  return values;
}

lccn::io::ExperimentConfig load_config(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("--config: file not found: " + path);
  return lccn::io::experiment_from_json(lccn::io::read_json(path));
}

fs::path config_base(const std::string& path) { return fs::path(path).parent_path(); }

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
  int k = 4;
  int dim = 4;
  int n_per_class = 500;
  int test_per_class = 0;
  double separation = 3.0;
  std::string noise = "asymmetric";
  double ratio = 0.0;
  double ood_fraction = 0.0;
  std::size_t clean_count = 0;
  std::uint64_t seed = 0;
  std::string out = ".";
};

int cmd_generate(const GenerateArgs& a) {
  lccn::io::ExperimentConfig cfg;
  lccn::io::GeneratorSpec g;
  g.num_classes = a.k;
  g.dim = a.dim;
  g.n_per_class = a.n_per_class;
  g.test_per_class = a.test_per_class > 0 ? a.test_per_class : a.n_per_class;
  g.separation = a.separation;
  g.seed = static_cast<long long>(a.seed);
  cfg.dataset.generator = g;
  if (a.noise == "none") {
    cfg.noise.ratio = 0.0;
  } else {
    cfg.noise.kind = lccn::io::noise_kind_from_string(a.noise);
    cfg.noise.ratio = a.ratio;
  }
  cfg.noise.ood_fraction = a.ood_fraction;
  cfg.noise.clean_count = a.clean_count;
  cfg.noise.seed = static_cast<long long>(a.seed + 100);
  const lccn::io::PreparedData data = lccn::io::prepare_data(cfg, a.seed);
  const fs::path out(a.out);
  lccn::io::write_json(out / "dataset.json", lccn::io::dataset_to_json(data.train));
  lccn::io::write_json(out / "test.json", lccn::io::dataset_to_json(data.test));
  lccn::io::write_json(out / "noise_report.json", lccn::io::report_to_json(*data.report, data.ground_truth));
  std::cout << "wrote " << (out / "dataset.json").string() << " (" << data.train.size() << " samples, realized flip fraction "
            << data.report->realized_flip_fraction << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train / sweep

struct TrainArgs {
  std::string config;
  std::string out;
  std::vector<std::string> seeds;
  std::string kind;
};

int cmd_train(const TrainArgs& a) {
  lccn::io::ExperimentConfig cfg = load_config(a.config);
  if (!a.out.empty()) cfg.out = a.out;
  if (cfg.out.empty()) throw UsageError("--out: no output directory given (flag or config.out)");
  if (!a.seeds.empty()) cfg.seeds = parse_seed_list(a.seeds);
  if (cfg.seeds.empty()) throw UsageError("--seed: empty seed list");
  if (!a.kind.empty()) cfg.train.kind = lccn::trainer_kind_from_string(a.kind);
  // Re-validate the combined config (distinct seeds etc.).
  cfg = lccn::io::experiment_from_json(lccn::io::experiment_to_json(cfg));
  const auto runs = run_seeds(cfg, cfg.out, config_base(a.config));
  const Aggregate agg = aggregate(runs);
  std::cout << lccn::to_string(cfg.train.kind) << ": " << runs.size() << " run(s), median final accuracy "
            << lccn::io::format_real(agg.accuracy) << "\n";
  return 0;
}

struct SweepArgs {
  std::string config;
  std::string out;
  std::string param;
  std::vector<std::string> values;
  std::vector<std::string> seeds;
};

std::string value_label(double v) {
  std::string s = lccn::io::format_real(v);
  std::replace(s.begin(), s.end(), '.', 'p');
  return s;
}

int cmd_sweep(const SweepArgs& a) {
  lccn::io::ExperimentConfig cfg = load_config(a.config);
  if (!a.out.empty()) cfg.out = a.out;
  if (cfg.out.empty()) throw UsageError("--out: no output directory given (flag or config.out)");
  if (!a.seeds.empty()) cfg.seeds = parse_seed_list(a.seeds);
  const std::vector<double> values = parse_value_list(a.values);
  if (values.empty()) throw UsageError("--values: empty grid");
  if (a.param == "ratio" && !cfg.dataset.generator) throw UsageError("--param ratio: requires a generated dataset");

  const fs::path out(cfg.out);
  std::string csv = "param,value,median_accuracy,median_correction_ratio,median_phi_l1_error,median_max_batch_variation\n";
  for (double v : values) {
    lccn::io::ExperimentConfig point = cfg;
    if (a.param == "alpha") {
      point.train.alpha = v;
    } else if (a.param == "ratio") {
      point.noise.ratio = v;
    } else {
      if (v < 1.0 || v != std::floor(v)) throw UsageError("--values: batch_size values must be positive integers");
      point.train.batch_size = static_cast<std::size_t>(v);
    }
    point = lccn::io::experiment_from_json(lccn::io::experiment_to_json(point));
    const auto runs = run_seeds(point, out / (a.param + "_" + value_label(v)), config_base(a.config));
    csv += a.param + "," + lccn::io::format_real(v) + "," + aggregate_cells(aggregate(runs)) + "\n";
    std::cout << a.param << "=" << lccn::io::format_real(v) << ": median accuracy " << lccn::io::format_real(aggregate(runs).accuracy)
              << "\n";
  }
  lccn::io::write_text(out / "sweep.csv", csv);
  return 0;
}

// ---------------------------------------------------------------------------
// diagnose

fs::path require_artifact(const fs::path& dir, const std::string& name, const std::string& flag) {
  const fs::path p = dir / name;
  if (!fs::exists(p)) throw UsageError(flag + ": missing artifact " + p.string());
  return p;
}

struct MixingArgs {
  int n = 6;
  int k = 2;
  long sweeps = 50000;
  long burn_in = -1;
  double alpha = 1.0;
  std::uint64_t seed = 0;
  std::string out = ".";
};

int cmd_mixing(const MixingArgs& a) {
  const lccn::FrozenInstance inst = lccn::random_frozen_instance(a.n, a.k, a.seed);
  const long burn_in = a.burn_in >= 0 ? a.burn_in : a.sweeps / 10;
  const lccn::GibbsDiagnostics diag = lccn::mixing_diagnostic(inst.probs, inst.noisy_labels,
                                                              lccn::DirichletPrior::symmetric(a.k, a.alpha), a.sweeps,
                                                              burn_in, a.seed);
  std::string csv = "sweep,max_tv,mean_tv\n";
  for (const auto& c : diag.trace)
    csv += std::to_string(c.sweep) + "," + lccn::io::format_real(c.max_tv) + "," + lccn::io::format_real(c.mean_tv) + "\n";
  lccn::io::write_text(fs::path(a.out) / "mixing.csv", csv);
  std::cout << "final max TV " << lccn::io::format_real(diag.final_max_tv()) << " after " << a.sweeps << " sweeps\n";
  return 0;
}

int cmd_transition(const std::string& run, const std::string& oracle, const std::string& out) {
  const fs::path dir(run);
  const lccn::TransitionMatrix phi = lccn::io::transition_from_json(lccn::io::read_json(require_artifact(dir, "phi_final.json", "--run")));
  lccn::io::write_text(fs::path(out) / "transition_colormap.csv", lccn::io::colormap_csv(phi.phi));
  if (oracle.empty()) return 0;
  if (!fs::exists(oracle)) throw UsageError("--oracle: file not found: " + oracle);
  const lccn::TransitionMatrix ref = lccn::io::transition_from_json(lccn::io::read_json(oracle));
  if (ref.cols() != phi.cols() || ref.rows() > phi.rows()) throw UsageError("--oracle: shape does not match the run's transition");
  const Eigen::MatrixXd head = phi.phi.topRows(ref.rows());
  const lccn::Vector rows = lccn::transition_row_errors(head, ref.phi);
  std::string csv = "row,l1_error\n";
  for (Eigen::Index i = 0; i < rows.size(); ++i) csv += std::to_string(i) + "," + lccn::io::format_real(rows(i)) + "\n";
  lccn::io::write_text(fs::path(out) / "transition_errors.csv", csv);
  lccn::io::write_text(fs::path(out) / "oracle_colormap.csv", lccn::io::colormap_csv(ref.phi));
  std::cout << "max-row L1 " << lccn::io::format_real(rows.maxCoeff()) << ", frobenius "
            << lccn::io::format_real(lccn::transition_frobenius_error(head, ref.phi)) << "\n";
  return 0;
}

int cmd_variation(const std::string& run_a, const std::string& run_b, int bins, const std::string& out) {
  const auto load = [](const std::string& run, const std::string& flag) {
    return lccn::io::parse_variations_csv(lccn::io::read_text(require_artifact(run, "variations.csv", flag)));
  };
  const std::vector<double> a = load(run_a, "--run-a");
  lccn::io::write_text(fs::path(out) / "variation_histogram_a.csv", lccn::io::histogram_csv(lccn::variation_histogram(a, bins)));
  const double max_a = a.empty() ? 0.0 : *std::max_element(a.begin(), a.end());
  if (run_b.empty()) {
    std::cout << "max_a=" << lccn::io::format_real(max_a) << "\n";
    return 0;
  }
  const std::vector<double> b = load(run_b, "--run-b");
  lccn::io::write_text(fs::path(out) / "variation_histogram_b.csv", lccn::io::histogram_csv(lccn::variation_histogram(b, bins)));
  const double max_b = b.empty() ? 0.0 : *std::max_element(b.begin(), b.end());
  std::cout << "max_a=" << lccn::io::format_real(max_a) << " max_b=" << lccn::io::format_real(max_b)
            << " a_below_b=" << (max_a < max_b ? "true" : "false") << "\n";
  return 0;
}

int cmd_correction(const std::string& run, const std::string& out) {
  const auto records = lccn::io::parse_metrics_csv(lccn::io::read_text(require_artifact(run, "metrics.csv", "--run")));
  std::string csv = "step,correction_ratio\n";
  for (const auto& r : records) csv += std::to_string(r.step) + "," + lccn::io::format_real(r.correction_ratio) + "\n";
  lccn::io::write_text(fs::path(out) / "correction.csv", csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Label-noise experiments: generate data, train, sweep and diagnose"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic noisy dataset, its test set and a noise report");
  generate->add_option("--k", gen.k, "Number of classes")->check(CLI::Range(2, 1000));
  generate->add_option("--dim", gen.dim, "Feature dimension")->check(CLI::Range(1, 100000));
  generate->add_option("--n-per-class", gen.n_per_class, "Training samples per class")->check(CLI::Range(1, 10000000));
  generate->add_option("--test-per-class", gen.test_per_class, "Test samples per class (default: --n-per-class)")
      ->check(CLI::Range(0, 10000000));
  generate->add_option("--separation", gen.separation, "Distance between class means")->check(CLI::PositiveNumber);
  generate->add_option("--noise", gen.noise, "none | symmetric | asymmetric | openset")
      ->check(CLI::IsMember({"none", "symmetric", "asymmetric", "pairflip", "openset"}));
  generate->add_option("--ratio", gen.ratio, "Label noise ratio")->check(CLI::Range(0.0, 1.0));
  generate->add_option("--ood-fraction", gen.ood_fraction, "Open-set sample fraction")->check(CLI::Range(0.0, 0.999999));
  generate->add_option("--clean-count", gen.clean_count, "Size of the trusted clean subset");
  generate->add_option("--seed", gen.seed, "Random seed");
  generate->add_option("--out", gen.out, "Output directory");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train from an experiment config, one directory per seed");
  train->add_option("--config", tr.config, "Experiment config JSON")->required();
  train->add_option("--out", tr.out, "Output directory (overrides config.out)");
  train->add_option("--seed", tr.seeds, "Seeds (space or comma separated; overrides config.seeds)");
  train->add_option("--kind", tr.kind, "Trainer kind (overrides train.kind)");

  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep", "Run a one-parameter grid and aggregate median metrics");
  sweep->add_option("--config", sw.config, "Experiment config JSON")->required();
  sweep->add_option("--out", sw.out, "Output directory (overrides config.out)");
  sweep->add_option("--param", sw.param, "alpha | ratio | batch_size")->required()->check(CLI::IsMember({"alpha", "ratio", "batch_size"}));
  sweep->add_option("--values", sw.values, "Grid values (space or comma separated)");
  sweep->add_option("--seed,--seeds", sw.seeds, "Seeds (overrides config.seeds)");

  auto* diagnose = app.add_subcommand("diagnose", "Diagnostic CSVs from runs or tiny sampler instances");
  diagnose->require_subcommand(1);
  MixingArgs mx;
  auto* mixing = diagnose->add_subcommand("mixing", "Gibbs chain vs exact posterior on a random frozen instance");
  mixing->add_option("--n", mx.n, "Samples")->check(CLI::Range(1, 22));
  mixing->add_option("--k", mx.k, "Classes")->check(CLI::Range(2, 16));
  mixing->add_option("--sweeps", mx.sweeps, "Chain sweeps")->check(CLI::Range(1L, 100000000L));
  mixing->add_option("--burn-in", mx.burn_in, "Burn-in sweeps (default: sweeps / 10)");
  mixing->add_option("--alpha", mx.alpha, "Symmetric Dirichlet concentration")->check(CLI::PositiveNumber);
  mixing->add_option("--seed", mx.seed, "Random seed");
  mixing->add_option("--out", mx.out, "Output directory");

  std::string t_run, t_oracle, t_out = ".";
  auto* transition = diagnose->add_subcommand("transition", "Colormap of a run's transition and per-row errors");
  transition->add_option("--run", t_run, "Run directory")->required();
  transition->add_option("--oracle", t_oracle, "Reference transition JSON");
  transition->add_option("--out", t_out, "Output directory");

  std::string v_a, v_b, v_out = ".";
  int v_bins = 50;
  auto* variation = diagnose->add_subcommand("variation", "Histograms of per-batch transition changes");
  variation->add_option("--run-a", v_a, "Run directory")->required();
  variation->add_option("--run-b", v_b, "Second run directory for a paired comparison");
  variation->add_option("--bins", v_bins, "Histogram bins")->check(CLI::Range(1, 100000));
  variation->add_option("--out", v_out, "Output directory");

  std::string c_run, c_out = ".";
  auto* correction = diagnose->add_subcommand("correction", "Correction-ratio trace of a run");
  correction->add_option("--run", c_run, "Run directory")->required();
  correction->add_option("--out", c_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*generate) return cmd_generate(gen);
    if (*train) return cmd_train(tr);
    if (*sweep) return cmd_sweep(sw);
    if (*mixing) return cmd_mixing(mx);
    if (*transition) return cmd_transition(t_run, t_oracle, t_out);
    if (*variation) return cmd_variation(v_a, v_b, v_bins, v_out);
    if (*correction) return cmd_correction(c_run, c_out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const lccn::ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const lccn::TrainingError& e) {
    std::cerr << "training failed: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const lccn::InvariantViolation& e) {
    std::cerr << "invariant violated: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
