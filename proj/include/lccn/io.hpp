#pragma once

// JSON artifacts (datasets, transitions, checkpoints, configs) and the CSV
// writers used by the command-line driver.

#include "lccn/trainers.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace lccn::io {

using nlohmann::json;

/// Shortest text that round-trips a double.
inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json counts_to_json(const CountMatrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const json& j, const std::string& field) {
  detail::require(j.is_array(), field + ": expected a 2-D array");
  if (j.empty()) return Matrix(0, 0);
  const auto rows = static_cast<Eigen::Index>(j.size());
  detail::require(j[0].is_array(), field + ": expected a 2-D array");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    detail::require(row.is_array() && static_cast<Eigen::Index>(row.size()) == cols, field + ": ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) {
      detail::require(row[static_cast<std::size_t>(c)].is_number(), field + ": non-numeric entry");
      m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  }
  return m;
}

inline Vector vector_from_json(const json& j, const std::string& field) {
  detail::require(j.is_array(), field + ": expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    detail::require(j[i].is_number(), field + ": non-numeric entry");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  detail::require(static_cast<bool>(in), "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline json read_json(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParameterError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Datasets

inline json dataset_to_json(const LabeledDataset& ds) {
  json j;
  j["num_classes"] = ds.num_classes;
  j["features"] = matrix_to_json(ds.features);
  j["true_labels"] = ds.true_labels;
  j["noisy_labels"] = ds.noisy_labels;
  j["clean_mask"] = ds.clean_mask;
  j["ood_mask"] = ds.ood_mask;
  return j;
}

inline LabeledDataset dataset_from_json(const json& j) {
  detail::require(j.is_object(), "dataset: expected an object");
  for (const char* key : {"num_classes", "features", "true_labels", "noisy_labels"})
    detail::require(j.contains(key), std::string("dataset: missing field ") + key);
  LabeledDataset ds;
  ds.num_classes = j.at("num_classes").get<int>();
  ds.features = matrix_from_json(j.at("features"), "dataset.features");
  ds.true_labels = j.at("true_labels").get<std::vector<int>>();
  ds.noisy_labels = j.at("noisy_labels").get<std::vector<int>>();
  const std::size_t n = ds.true_labels.size();
  ds.clean_mask = j.contains("clean_mask") ? j.at("clean_mask").get<std::vector<bool>>() : std::vector<bool>(n, false);
  ds.ood_mask = j.contains("ood_mask") ? j.at("ood_mask").get<std::vector<bool>>() : std::vector<bool>(n, false);
  validate(ds);
  return ds;
}

inline json report_to_json(const NoiseInjectionReport& report, const std::optional<Matrix>& ground_truth) {
  json j;
  j["realized_flip_fraction"] = report.realized_flip_fraction;
  j["realized_confusion"] = counts_to_json(report.realized_confusion);
  j["ground_truth_transition"] = ground_truth ? matrix_to_json(*ground_truth) : json(nullptr);
  return j;
}

inline json transition_to_json(const TransitionMatrix& phi) { return json{{"phi", matrix_to_json(phi.phi)}}; }

/// Accepts either {"phi": [[...]]} or a bare 2-D array.
inline TransitionMatrix transition_from_json(const json& j) {
  const json& body = j.is_object() ? j.at("phi") : j;
  TransitionMatrix out{matrix_from_json(body, "phi")};
  detail::require(out.rows() > 0, "phi: empty matrix");
  detail::require(out.is_stochastic(), "phi: rows must be distributions");
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

inline Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ParameterError("architecture.activation: unknown activation '" + name + "'");
}

inline json checkpoint_to_json(const ClassifierParams& params) {
  json j;
  j["architecture"] = {{"hidden_width", params.architecture.hidden_width},
                       {"activation", to_string(params.architecture.activation)}};
  j["input_dim"] = params.input_dim;
  j["num_classes"] = params.num_classes;
  j["layers"] = json::array();
  for (const Layer& layer : params.layers)
    j["layers"].push_back({{"weight", matrix_to_json(layer.weight)}, {"bias", vector_to_json(layer.bias)}});
  return j;
}

inline ClassifierParams checkpoint_from_json(const json& j) {
  ClassifierParams params;
  params.architecture.hidden_width = j.at("architecture").at("hidden_width").get<int>();
  params.architecture.activation = activation_from_string(j.at("architecture").at("activation").get<std::string>());
  params.input_dim = j.at("input_dim").get<int>();
  params.num_classes = j.at("num_classes").get<int>();
  for (const json& layer : j.at("layers"))
    params.layers.push_back({matrix_from_json(layer.at("weight"), "layer.weight"), vector_from_json(layer.at("bias"), "layer.bias")});
  detail::require(params.layers.size() == (params.architecture.is_linear() ? 1u : 2u), "checkpoint: layer count does not match architecture");
  return params;
}

// ---------------------------------------------------------------------------
// Configs

inline NoiseKind noise_kind_from_string(const std::string& name) {
  if (name == "symmetric") return NoiseKind::symmetric;
  if (name == "asymmetric" || name == "pairflip" || name == "asymmetric_pairflip") return NoiseKind::asymmetric_pairflip;
  if (name == "openset") return NoiseKind::openset;
  throw ParameterError("noise.kind: unknown noise kind '" + name + "'");
}

inline const char* to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::symmetric: return "symmetric";
    case NoiseKind::asymmetric_pairflip: return "asymmetric";
    case NoiseKind::openset: return "openset";
  }
  return "symmetric";
}

/// Synthetic Gaussian-mixture source. A negative seed means "use the run seed".
struct GeneratorSpec {
  int num_classes = 4;
  int dim = 4;
  int n_per_class = 1000;
  int test_per_class = 1000;
  double separation = 3.0;
  long long seed = -1;
};

struct DatasetSource {
  std::optional<GeneratorSpec> generator;
  std::string train_path;
  std::string test_path;
};

/// Noise applied to generated data. A negative seed means "run seed + 100".
struct NoiseConfig {
  NoiseKind kind = NoiseKind::asymmetric_pairflip;
  double ratio = 0.0;
  double ood_fraction = 0.0;
  std::size_t clean_count = 0;
  long long seed = -1;
};

struct ExperimentConfig {
  DatasetSource dataset;
  NoiseConfig noise;
  TrainConfig train;
  std::string out;
  std::vector<std::uint64_t> seeds{0};
};

namespace detail_cfg {

template <typename T>
void read_field(const json& j, const char* key, T& target, const std::string& scope) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParameterError(scope + "." + key + ": wrong type");
  }
}

inline void check_keys(const json& j, std::initializer_list<const char*> known, const std::string& scope) {
  detail::require(j.is_object(), scope + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool found = false;
    for (const char* k : known) found = found || key == k;
    detail::require(found, scope + "." + key + ": unknown field");
  }
}

}  // namespace detail_cfg

inline json train_config_to_json(const TrainConfig& cfg) {
  json j;
  j["kind"] = to_string(cfg.kind);
  j["architecture"] = {{"hidden_width", cfg.architecture.hidden_width}, {"activation", to_string(cfg.architecture.activation)}};
  j["epochs"] = cfg.epochs;
  j["iterations"] = cfg.iterations;
  j["batch_size"] = cfg.batch_size;
  json phases = json::array();
  for (const auto& [epoch, lr] : cfg.lr_schedule.phases) phases.push_back({epoch, lr});
  j["lr_schedule"] = phases;
  j["momentum"] = cfg.momentum;
  j["weight_decay"] = cfg.weight_decay;
  j["pretrain_epochs"] = cfg.pretrain_epochs;
  j["warmup_steps"] = cfg.warmup_steps;
  j["alpha"] = cfg.alpha;
  j["xi"] = cfg.xi;
  j["anneal"] = {{"enabled", cfg.anneal.enabled},
                 {"max_step", cfg.anneal.max_step},
                 {"floor", cfg.anneal.floor},
                 {"decay", cfg.anneal.decay},
                 {"target", cfg.anneal_target == AnnealTarget::transition ? "transition" : "product"}};
  j["identity_warmup"] = cfg.identity_warmup;
  j["grad_clip"] = cfg.grad_clip ? json(*cfg.grad_clip) : json(nullptr);
  j["transition_lr"] = cfg.transition_lr;
  j["bootstrap_beta"] = cfg.bootstrap_beta;
  j["em_posterior_weights"] = cfg.em_posterior_weights;
  j["oracle_phi"] = cfg.oracle_phi ? matrix_to_json(*cfg.oracle_phi) : json(nullptr);
  j["reference_phi"] = cfg.reference_phi ? matrix_to_json(*cfg.reference_phi) : json(nullptr);
  j["phi_normalization"] = cfg.phi_normalization == Normalization::smoothed ? "smoothed" : "unsmoothed";
  j["seed"] = cfg.seed;
  if (cfg.fault_bound_violation_step) j["fault_bound_violation_step"] = *cfg.fault_bound_violation_step;
  return j;
}

inline TrainConfig train_config_from_json(const json& j, TrainConfig cfg = {}) {
  using detail_cfg::read_field;
  const std::string scope = "train";
  detail_cfg::check_keys(j,
                         {"kind", "architecture", "epochs", "iterations", "batch_size", "lr_schedule", "lr", "momentum",
                          "weight_decay", "pretrain_epochs", "warmup_steps", "alpha", "xi", "anneal", "identity_warmup",
                          "grad_clip", "transition_lr", "bootstrap_beta", "em_posterior_weights", "oracle_phi",
                          "reference_phi", "phi_normalization", "seed", "fault_bound_violation_step"},
                         scope);
  if (j.contains("kind")) {
    try {
      cfg.kind = trainer_kind_from_string(j.at("kind").get<std::string>());
    } catch (const json::exception&) {
      throw ParameterError("train.kind: wrong type");
    }
  }
  if (j.contains("architecture")) {
    const json& a = j.at("architecture");
    detail_cfg::check_keys(a, {"hidden_width", "activation"}, "train.architecture");
    read_field(a, "hidden_width", cfg.architecture.hidden_width, "train.architecture");
    if (a.contains("activation")) cfg.architecture.activation = activation_from_string(a.at("activation").get<std::string>());
  }
  read_field(j, "epochs", cfg.epochs, scope);
  read_field(j, "iterations", cfg.iterations, scope);
  read_field(j, "batch_size", cfg.batch_size, scope);
  if (j.contains("lr")) cfg.lr_schedule.phases = {{0, j.at("lr").get<double>()}};
  if (j.contains("lr_schedule")) {
    const json& s = j.at("lr_schedule");
    detail::require(s.is_array() && !s.empty(), "train.lr_schedule: expected a non-empty array of [epoch, lr]");
    cfg.lr_schedule.phases.clear();
    for (const json& phase : s) {
      detail::require(phase.is_array() && phase.size() == 2, "train.lr_schedule: each phase is [epoch, lr]");
      cfg.lr_schedule.phases.emplace_back(phase[0].get<int>(), phase[1].get<double>());
    }
  }
  read_field(j, "momentum", cfg.momentum, scope);
  read_field(j, "weight_decay", cfg.weight_decay, scope);
  read_field(j, "pretrain_epochs", cfg.pretrain_epochs, scope);
  read_field(j, "warmup_steps", cfg.warmup_steps, scope);
  read_field(j, "alpha", cfg.alpha, scope);
  read_field(j, "xi", cfg.xi, scope);
  if (j.contains("anneal")) {
    const json& a = j.at("anneal");
    detail_cfg::check_keys(a, {"enabled", "max_step", "floor", "decay", "target"}, "train.anneal");
    read_field(a, "enabled", cfg.anneal.enabled, "train.anneal");
    read_field(a, "max_step", cfg.anneal.max_step, "train.anneal");
    read_field(a, "floor", cfg.anneal.floor, "train.anneal");
    read_field(a, "decay", cfg.anneal.decay, "train.anneal");
    if (a.contains("target")) {
      const std::string t = a.at("target").get<std::string>();
      detail::require(t == "transition" || t == "product", "train.anneal.target: expected transition or product");
      cfg.anneal_target = t == "transition" ? AnnealTarget::transition : AnnealTarget::product;
    }
  }
  read_field(j, "identity_warmup", cfg.identity_warmup, scope);
  if (j.contains("grad_clip")) {
    if (j.at("grad_clip").is_null())
      cfg.grad_clip.reset();
    else
      cfg.grad_clip = j.at("grad_clip").get<double>();
  }
  read_field(j, "transition_lr", cfg.transition_lr, scope);
  read_field(j, "bootstrap_beta", cfg.bootstrap_beta, scope);
  read_field(j, "em_posterior_weights", cfg.em_posterior_weights, scope);
  if (j.contains("oracle_phi") && !j.at("oracle_phi").is_null()) cfg.oracle_phi = matrix_from_json(j.at("oracle_phi"), "train.oracle_phi");
  if (j.contains("reference_phi") && !j.at("reference_phi").is_null())
    cfg.reference_phi = matrix_from_json(j.at("reference_phi"), "train.reference_phi");
  if (j.contains("phi_normalization")) {
    const std::string n = j.at("phi_normalization").get<std::string>();
    detail::require(n == "smoothed" || n == "unsmoothed", "train.phi_normalization: expected smoothed or unsmoothed");
    cfg.phi_normalization = n == "smoothed" ? Normalization::smoothed : Normalization::unsmoothed;
  }
  read_field(j, "seed", cfg.seed, scope);
  if (j.contains("fault_bound_violation_step")) cfg.fault_bound_violation_step = j.at("fault_bound_violation_step").get<long>();
  validate(cfg);
  return cfg;
}

inline json experiment_to_json(const ExperimentConfig& cfg) {
  json j;
  if (cfg.dataset.generator) {
    const GeneratorSpec& g = *cfg.dataset.generator;
    j["dataset"] = {{"generator",
                     {{"num_classes", g.num_classes},
                      {"dim", g.dim},
                      {"n_per_class", g.n_per_class},
                      {"test_per_class", g.test_per_class},
                      {"separation", g.separation},
                      {"seed", g.seed}}}};
  } else {
    j["dataset"] = {{"train", cfg.dataset.train_path}, {"test", cfg.dataset.test_path}};
  }
  j["noise"] = {{"kind", to_string(cfg.noise.kind)},
                {"ratio", cfg.noise.ratio},
                {"ood_fraction", cfg.noise.ood_fraction},
                {"clean_count", cfg.noise.clean_count},
                {"seed", cfg.noise.seed}};
  j["train"] = train_config_to_json(cfg.train);
  j["out"] = cfg.out;
  j["seeds"] = cfg.seeds;
  return j;
}

inline ExperimentConfig experiment_from_json(const json& j) {
  using detail_cfg::read_field;
  detail_cfg::check_keys(j, {"dataset", "noise", "train", "out", "seeds"}, "config");
  ExperimentConfig cfg;
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    detail_cfg::check_keys(d, {"generator", "train", "test"}, "dataset");
    if (d.contains("generator")) {
      const json& g = d.at("generator");
      detail_cfg::check_keys(g, {"num_classes", "k", "dim", "n_per_class", "test_per_class", "separation", "seed"},
                             "dataset.generator");
      GeneratorSpec spec;
      read_field(g, "num_classes", spec.num_classes, "dataset.generator");
      read_field(g, "k", spec.num_classes, "dataset.generator");
      read_field(g, "dim", spec.dim, "dataset.generator");
      read_field(g, "n_per_class", spec.n_per_class, "dataset.generator");
      read_field(g, "test_per_class", spec.test_per_class, "dataset.generator");
      read_field(g, "separation", spec.separation, "dataset.generator");
      read_field(g, "seed", spec.seed, "dataset.generator");
      detail::require(spec.num_classes >= 2, "dataset.generator.num_classes: must be >= 2");
      detail::require(spec.dim >= 1, "dataset.generator.dim: must be >= 1");
      detail::require(spec.n_per_class >= 1, "dataset.generator.n_per_class: must be >= 1");
      detail::require(spec.test_per_class >= 1, "dataset.generator.test_per_class: must be >= 1");
      detail::require(spec.separation > 0.0, "dataset.generator.separation: must be > 0");
      cfg.dataset.generator = spec;
    } else {
      read_field(d, "train", cfg.dataset.train_path, "dataset");
      read_field(d, "test", cfg.dataset.test_path, "dataset");
      detail::require(!cfg.dataset.train_path.empty() && !cfg.dataset.test_path.empty(),
                      "dataset: need either generator or both train and test paths");
    }
  } else {
    cfg.dataset.generator = GeneratorSpec{};
  }
  if (j.contains("noise")) {
    const json& n = j.at("noise");
    detail_cfg::check_keys(n, {"kind", "ratio", "ood_fraction", "clean_count", "seed"}, "noise");
    if (n.contains("kind")) cfg.noise.kind = noise_kind_from_string(n.at("kind").get<std::string>());
    read_field(n, "ratio", cfg.noise.ratio, "noise");
    read_field(n, "ood_fraction", cfg.noise.ood_fraction, "noise");
    read_field(n, "clean_count", cfg.noise.clean_count, "noise");
    read_field(n, "seed", cfg.noise.seed, "noise");
    detail::require(cfg.noise.ratio >= 0.0 && cfg.noise.ratio <= 1.0, "noise.ratio: must lie in [0, 1]");
    detail::require(cfg.noise.ood_fraction >= 0.0 && cfg.noise.ood_fraction < 1.0, "noise.ood_fraction: must lie in [0, 1)");
  }
  if (j.contains("train")) cfg.train = train_config_from_json(j.at("train"));
  read_field(j, "out", cfg.out, "config");
  if (j.contains("seeds")) {
    cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    detail::require(!cfg.seeds.empty(), "seeds: must not be empty");
    std::vector<std::uint64_t> sorted = cfg.seeds;
    std::sort(sorted.begin(), sorted.end());
    detail::require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), "seeds: must be distinct");
  }
  return cfg;
}

/// Train/test pair for one run seed, plus the realized noise report.
struct PreparedData {
  LabeledDataset train;
  LabeledDataset test;
  std::optional<NoiseInjectionReport> report;
  std::optional<Matrix> ground_truth;
};

inline PreparedData prepare_data(const ExperimentConfig& cfg, std::uint64_t run_seed, const std::filesystem::path& base = {}) {
  PreparedData out;
  if (!cfg.dataset.generator) {
    const auto resolve = [&](const std::string& p) { return std::filesystem::path(p).is_absolute() ? std::filesystem::path(p) : base / p; };
    const auto train_path = resolve(cfg.dataset.train_path);
    const auto test_path = resolve(cfg.dataset.test_path);
    detail::require(std::filesystem::exists(train_path), "dataset.train: file not found: " + train_path.string());
    detail::require(std::filesystem::exists(test_path), "dataset.test: file not found: " + test_path.string());
    out.train = dataset_from_json(read_json(train_path));
    out.test = dataset_from_json(read_json(test_path));
    detail::require(out.train.num_classes == out.test.num_classes, "dataset: train and test class counts differ");
    return out;
  }
  const GeneratorSpec& g = *cfg.dataset.generator;
  const std::uint64_t data_seed = g.seed >= 0 ? static_cast<std::uint64_t>(g.seed) : run_seed;
  const LabeledDataset clean = make_gaussian_mixture(g.num_classes, g.dim, g.n_per_class, g.separation, data_seed);
  out.test = make_gaussian_mixture(g.num_classes, g.dim, g.test_per_class, g.separation, data_seed, 1);
  NoiseSpec spec;
  spec.kind = cfg.noise.kind;
  spec.ratio = cfg.noise.ratio;
  spec.ood_fraction = cfg.noise.ood_fraction;
  spec.seed = cfg.noise.seed >= 0 ? static_cast<std::uint64_t>(cfg.noise.seed) : run_seed + 100;
  LabeledDataset source = clean;
  if (cfg.noise.clean_count > 0) source = mark_clean_subset(std::move(source), cfg.noise.clean_count, spec.seed + 7);
  auto [noisy, report] = apply_noise(std::move(source), spec);
  out.train = std::move(noisy);
  out.report = report;
  out.ground_truth = ground_truth_transition(spec, g.num_classes);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string metrics_csv(const std::vector<MetricsRecord>& records) {
  std::string out = "step,split,accuracy,loss,correction_ratio,phi_l1_error,max_phi_row_variation,bound_value\n";
  for (const MetricsRecord& r : records) {
    out += std::to_string(r.step) + "," + to_string(r.split) + "," + format_real(r.accuracy) + "," + format_real(r.loss) +
           "," + format_real(r.correction_ratio) + "," + format_real(r.phi_l1_error) + "," +
           format_real(r.max_phi_row_variation) + "," + format_real(r.theorem_bound) + "\n";
  }
  return out;
}

inline std::string variations_csv(const std::vector<BatchLog>& batches) {
  std::string out = "step,max_phi_row_variation,bound_value\n";
  for (const BatchLog& b : batches)
    out += std::to_string(b.step) + "," + format_real(b.max_variation) + "," + format_real(b.max_bound) + "\n";
  return out;
}

inline std::string histogram_csv(const std::vector<HistogramBin>& bins) {
  std::string out = "bin_lo,bin_hi,count\n";
  for (const HistogramBin& b : bins) out += format_real(b.lo) + "," + format_real(b.hi) + "," + std::to_string(b.count) + "\n";
  return out;
}

/// Long-form matrix for heatmaps; log_value is log10 with a 1e-12 floor.
inline std::string colormap_csv(const Matrix& m) {
  std::string out = "row,col,value,log_value\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      out += std::to_string(i) + "," + std::to_string(j) + "," + format_real(m(i, j)) + "," +
             format_real(std::log10(std::max(m(i, j), 1e-12))) + "\n";
  return out;
}

/// Parses a CSV written by metrics_csv back into records.
inline std::vector<MetricsRecord> parse_metrics_csv(const std::string& text) {
  std::vector<MetricsRecord> out;
  std::istringstream in(text);
  std::string line;
  detail::require(static_cast<bool>(std::getline(in, line)), "metrics.csv: empty file");
  const auto number = [](const std::string& s) { return s == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(s); };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    detail::require(cells.size() == 8, "metrics.csv: expected 8 columns");
    MetricsRecord r;
    r.step = std::stol(cells[0]);
    r.split = cells[1] == "train" ? Split::train : Split::test;
    r.accuracy = number(cells[2]);
    r.loss = number(cells[3]);
    r.correction_ratio = number(cells[4]);
    r.phi_l1_error = number(cells[5]);
    r.max_phi_row_variation = number(cells[6]);
    r.theorem_bound = number(cells[7]);
    out.push_back(r);
  }
  return out;
}

/// Reads the max_phi_row_variation column of a variations.csv.
inline std::vector<double> parse_variations_csv(const std::string& text) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string line;
  detail::require(static_cast<bool>(std::getline(in, line)), "variations.csv: empty file");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto first = line.find(',');
    const auto second = line.find(',', first + 1);
    detail::require(first != std::string::npos, "variations.csv: malformed row");
    out.push_back(std::stod(line.substr(first + 1, second - first - 1)));
  }
  return out;
}

}  // namespace lccn::io
