// milgraph: batch experiment runner.
//
// Subcommands:
//   validate <config.json>          static config validation
//   run <config.json>               full protocol run; artifacts on disk
//   infer-graph <config.json>       base model + graph inference only
//   compare <run_dir> <run_dir>...  paired significance report
//
// MILGRAPH_OUTPUT_ROOT, when set, roots relative output directories.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "milgraph/bayespipe.hpp"
#include "milgraph/dataio.hpp"
#include "milgraph/evalkit.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace milgraph;

namespace {

constexpr const char* kVersion = "0.1.0";

struct CliConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "runs/out";
  // dataset
  std::string bags_path;
  std::string label_kind = "auto";
  std::string edge_list_path;  // empty = none
  bool standardize = false;
  std::string standardize_stats = "labeled";
  int knn_obs_k = 0;
  // encoder / head / training
  EncoderConfig encoder;
  HeadKind head = HeadKind::Linear;
  std::vector<int> gcn_hidden;
  TrainingConfig training;
  GraphLearnConfig graph_learn;
  McPredictConfig mc;
  TransductionMode transduction = TransductionMode::Transductive;
  bool embeddings_from_logits = false;
  // protocol
  std::string protocol_kind = "kfold";
  int folds = 10;
  int trials = 10;
  double train_fraction = 0.1;

  json resolved;  // config with defaults filled in
};

class ConfigErrors {
 public:
  void add(const std::string& key, const std::string& message) {
    lines_.push_back(key + ": " + message);
  }
  bool ok() const { return lines_.empty(); }
  const std::vector<std::string>& lines() const { return lines_; }

 private:
  std::vector<std::string> lines_;
};

const json* find(const json& obj, const std::string& key) {
  auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

void check_known_keys(const json& obj, const std::string& prefix,
                      const std::set<std::string>& known, ConfigErrors& errors) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!known.count(it.key())) errors.add(prefix + it.key(), "unknown key");
  }
}

double get_number(const json& obj, const std::string& prefix, const std::string& key,
                  double fallback, ConfigErrors& errors) {
  const json* v = find(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_number()) {
    errors.add(prefix + key, "expected a number");
    return fallback;
  }
  return v->get<double>();
}

int get_int(const json& obj, const std::string& prefix, const std::string& key, int fallback,
            ConfigErrors& errors) {
  const json* v = find(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_number_integer()) {
    errors.add(prefix + key, "expected an integer");
    return fallback;
  }
  return v->get<int>();
}

bool get_bool(const json& obj, const std::string& prefix, const std::string& key, bool fallback,
              ConfigErrors& errors) {
  const json* v = find(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_boolean()) {
    errors.add(prefix + key, "expected a boolean");
    return fallback;
  }
  return v->get<bool>();
}

std::string get_string(const json& obj, const std::string& prefix, const std::string& key,
                       const std::string& fallback, ConfigErrors& errors) {
  const json* v = find(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_string()) {
    errors.add(prefix + key, "expected a string");
    return fallback;
  }
  return v->get<std::string>();
}

std::vector<int> get_int_list(const json& obj, const std::string& prefix, const std::string& key,
                              std::vector<int> fallback, ConfigErrors& errors) {
  const json* v = find(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_array()) {
    errors.add(prefix + key, "expected an array of integers");
    return fallback;
  }
  std::vector<int> out;
  for (const auto& e : *v) {
    if (!e.is_number_integer()) {
      errors.add(prefix + key, "expected an array of integers");
      return fallback;
    }
    out.push_back(e.get<int>());
  }
  return out;
}

CliConfig parse_config(const json& root, ConfigErrors& errors) {
  CliConfig cfg;
  check_known_keys(root, "",
                   {"seed", "output_dir", "dataset", "encoder", "head", "graph_learn", "training",
                    "protocol", "mc", "transduction"},
                   errors);
  cfg.seed = static_cast<std::uint64_t>(get_int(root, "", "seed", 1, errors));
  cfg.output_dir = get_string(root, "", "output_dir", cfg.output_dir, errors);

  const json dataset = root.value("dataset", json::object());
  check_known_keys(dataset, "dataset.",
                   {"bags", "label_kind", "edge_list", "standardize", "standardize_stats",
                    "knn_obs_k"},
                   errors);
  cfg.bags_path = get_string(dataset, "dataset.", "bags", "", errors);
  if (cfg.bags_path.empty()) errors.add("dataset.bags", "required");
  cfg.label_kind = get_string(dataset, "dataset.", "label_kind", "auto", errors);
  if (cfg.label_kind != "auto" && cfg.label_kind != "categorical" && cfg.label_kind != "real") {
    errors.add("dataset.label_kind", "must be auto|categorical|real");
  }
  cfg.edge_list_path = get_string(dataset, "dataset.", "edge_list", "", errors);
  cfg.standardize = get_bool(dataset, "dataset.", "standardize", false, errors);
  cfg.standardize_stats = get_string(dataset, "dataset.", "standardize_stats", "labeled", errors);
  if (cfg.standardize_stats != "labeled" && cfg.standardize_stats != "all") {
    errors.add("dataset.standardize_stats", "must be labeled|all");
  }
  cfg.knn_obs_k = get_int(dataset, "dataset.", "knn_obs_k", 0, errors);
  if (cfg.knn_obs_k < 0) errors.add("dataset.knn_obs_k", "must be >= 0");

  const json enc = root.value("encoder", json::object());
  check_known_keys(enc, "encoder.",
                   {"kind", "hidden", "activation", "pooling", "dropout", "deep_supervision",
                    "instance_hidden", "bag_hidden", "attention_dim", "attention_heads",
                    "pma_seeds"},
                   errors);
  const std::string enc_kind = get_string(enc, "encoder.", "kind", "rff_pool", errors);
  try {
    cfg.encoder.kind = encoder_kind_from_string(enc_kind);
  } catch (const std::exception&) {
    errors.add("encoder.kind", "must be rff_pool|res_pool|deep_sets|set_transformer");
  }
  cfg.encoder.hidden = get_int_list(enc, "encoder.", "hidden", {256, 128, 64}, errors);
  for (int h : cfg.encoder.hidden)
    if (h < 1) errors.add("encoder.hidden", "layer widths must be >= 1");
  try {
    cfg.encoder.activation =
        activation_from_string(get_string(enc, "encoder.", "activation", "relu", errors));
  } catch (const std::exception&) {
    errors.add("encoder.activation", "must be relu|elu|tanh|identity");
  }
  try {
    cfg.encoder.pooling = pooling_from_string(get_string(enc, "encoder.", "pooling", "max", errors));
  } catch (const std::exception&) {
    errors.add("encoder.pooling", "must be mean|max|sum");
  }
  cfg.encoder.dropout_rate = get_number(enc, "encoder.", "dropout", 0.5, errors);
  if (cfg.encoder.dropout_rate < 0.0 || cfg.encoder.dropout_rate >= 1.0) {
    errors.add("encoder.dropout", "must be in [0, 1)");
  }
  cfg.encoder.deep_supervision = get_bool(enc, "encoder.", "deep_supervision", false, errors);
  cfg.encoder.instance_hidden = get_int_list(enc, "encoder.", "instance_hidden", {128, 128}, errors);
  cfg.encoder.bag_hidden = get_int_list(enc, "encoder.", "bag_hidden", {128, 64}, errors);
  cfg.encoder.attention_dim = get_int(enc, "encoder.", "attention_dim", 64, errors);
  cfg.encoder.attention_heads = get_int(enc, "encoder.", "attention_heads", 4, errors);
  cfg.encoder.pma_seeds = get_int(enc, "encoder.", "pma_seeds", 1, errors);
  if (cfg.encoder.kind == EncoderKind::SetTransformer &&
      (cfg.encoder.attention_heads < 1 ||
       cfg.encoder.attention_dim % std::max(1, cfg.encoder.attention_heads) != 0)) {
    errors.add("encoder.attention_dim", "must be divisible by encoder.attention_heads");
  }
  if (cfg.encoder.deep_supervision && cfg.encoder.kind != EncoderKind::RffPool) {
    errors.add("encoder.deep_supervision", "only rff_pool supports deep supervision");
  }

  const json head = root.value("head", json::object());
  check_known_keys(head, "head.", {"kind", "gcn_hidden"}, errors);
  const std::string head_kind = get_string(head, "head.", "kind", "linear", errors);
  try {
    cfg.head = head_kind_from_string(head_kind);
  } catch (const std::exception&) {
    errors.add("head.kind", "must be linear|gcn_obs|gcn_bayes");
  }
  cfg.gcn_hidden = get_int_list(head, "head.", "gcn_hidden", {}, errors);

  const json gl = root.value("graph_learn", json::object());
  check_known_keys(gl, "graph_learn.",
                   {"k", "r", "alpha", "beta", "max_iters", "rel_tol", "auto_calibrate",
                    "embeddings"},
                   errors);
  cfg.graph_learn.k = get_int(gl, "graph_learn.", "k", 5, errors);
  if (cfg.graph_learn.k < 1) errors.add("graph_learn.k", "must be >= 1");
  cfg.graph_learn.r = get_int(gl, "graph_learn.", "r", 1, errors);
  if (cfg.graph_learn.r < 1) errors.add("graph_learn.r", "must be >= 1");
  cfg.graph_learn.alpha = get_number(gl, "graph_learn.", "alpha", 1.0, errors);
  if (cfg.graph_learn.alpha <= 0.0) errors.add("graph_learn.alpha", "must be > 0");
  cfg.graph_learn.beta = get_number(gl, "graph_learn.", "beta", 1.0, errors);
  if (cfg.graph_learn.beta < 0.0) errors.add("graph_learn.beta", "must be >= 0");
  cfg.graph_learn.max_iters = get_int(gl, "graph_learn.", "max_iters", 1000, errors);
  if (cfg.graph_learn.max_iters < 1) errors.add("graph_learn.max_iters", "must be >= 1");
  cfg.graph_learn.rel_tol = get_number(gl, "graph_learn.", "rel_tol", 1e-5, errors);
  if (cfg.graph_learn.rel_tol <= 0.0) errors.add("graph_learn.rel_tol", "must be > 0");
  cfg.graph_learn.auto_calibrate = get_bool(gl, "graph_learn.", "auto_calibrate", true, errors);
  const std::string emb = get_string(gl, "graph_learn.", "embeddings", "penultimate", errors);
  if (emb != "penultimate" && emb != "logits") {
    errors.add("graph_learn.embeddings", "must be penultimate|logits");
  }
  cfg.embeddings_from_logits = emb == "logits";

  const json tr = root.value("training", json::object());
  check_known_keys(tr, "training.", {"learning_rate", "weight_decay", "epochs", "loss"}, errors);
  cfg.training.learning_rate = get_number(tr, "training.", "learning_rate", 1e-3, errors);
  if (cfg.training.learning_rate <= 0.0) errors.add("training.learning_rate", "must be > 0");
  cfg.training.weight_decay = get_number(tr, "training.", "weight_decay", 0.0, errors);
  if (cfg.training.weight_decay < 0.0) errors.add("training.weight_decay", "must be >= 0");
  cfg.training.epochs = get_int(tr, "training.", "epochs", 200, errors);
  if (cfg.training.epochs < 1) errors.add("training.epochs", "must be >= 1");
  const std::string loss = get_string(tr, "training.", "loss", "cross_entropy", errors);
  if (loss == "cross_entropy") {
    cfg.training.loss = LossKind::CrossEntropy;
  } else if (loss == "mse") {
    cfg.training.loss = LossKind::Mse;
  } else {
    errors.add("training.loss", "must be cross_entropy|mse");
  }

  const json proto = root.value("protocol", json::object());
  check_known_keys(proto, "protocol.", {"kind", "folds", "trials", "train_fraction"}, errors);
  cfg.protocol_kind = get_string(proto, "protocol.", "kind", "kfold", errors);
  if (cfg.protocol_kind != "kfold" && cfg.protocol_kind != "fraction") {
    errors.add("protocol.kind", "must be kfold|fraction");
  }
  cfg.folds = get_int(proto, "protocol.", "folds", 10, errors);
  cfg.trials = get_int(proto, "protocol.", "trials", 10, errors);
  if (cfg.trials < 1) errors.add("protocol.trials", "must be >= 1");
  if (cfg.protocol_kind == "kfold" && cfg.folds < 2) errors.add("protocol.folds", "must be >= 2");
  cfg.train_fraction = get_number(proto, "protocol.", "train_fraction", 0.1, errors);
  if (cfg.protocol_kind == "fraction" &&
      (cfg.train_fraction <= 0.0 || cfg.train_fraction >= 1.0)) {
    errors.add("protocol.train_fraction", "must be in (0, 1)");
  }

  const json mc = root.value("mc", json::object());
  check_known_keys(mc, "mc.", {"samples", "dropout"}, errors);
  cfg.mc.samples = get_int(mc, "mc.", "samples", 50, errors);
  if (cfg.mc.samples < 1) errors.add("mc.samples", "must be >= 1");
  cfg.mc.dropout_rate = get_number(mc, "mc.", "dropout", 0.5, errors);
  if (cfg.mc.dropout_rate < 0.0 || cfg.mc.dropout_rate >= 1.0) {
    errors.add("mc.dropout", "must be in [0, 1)");
  }

  try {
    cfg.transduction = transduction_from_string(
        get_string(root, "", "transduction", "transductive", errors));
  } catch (const std::exception&) {
    errors.add("transduction", "must be transductive|tnd|tnd_training");
  }

  // cross-field checks
  if (cfg.head == HeadKind::GcnObserved && cfg.edge_list_path.empty() && cfg.knn_obs_k < 1) {
    errors.add("head.kind", "gcn_obs needs dataset.edge_list or dataset.knn_obs_k >= 1");
  }

  // resolved config echo (defaults filled in)
  cfg.resolved = {
      {"seed", cfg.seed},
      {"output_dir", cfg.output_dir},
      {"dataset",
       {{"bags", cfg.bags_path},
        {"label_kind", cfg.label_kind},
        {"edge_list", cfg.edge_list_path},
        {"standardize", cfg.standardize},
        {"standardize_stats", cfg.standardize_stats},
        {"knn_obs_k", cfg.knn_obs_k}}},
      {"encoder",
       {{"kind", to_string(cfg.encoder.kind)},
        {"hidden", cfg.encoder.hidden},
        {"activation", to_string(cfg.encoder.activation)},
        {"pooling", to_string(cfg.encoder.pooling)},
        {"dropout", cfg.encoder.dropout_rate},
        {"deep_supervision", cfg.encoder.deep_supervision},
        {"instance_hidden", cfg.encoder.instance_hidden},
        {"bag_hidden", cfg.encoder.bag_hidden},
        {"attention_dim", cfg.encoder.attention_dim},
        {"attention_heads", cfg.encoder.attention_heads},
        {"pma_seeds", cfg.encoder.pma_seeds}}},
      {"head", {{"kind", to_string(cfg.head)}, {"gcn_hidden", cfg.gcn_hidden}}},
      {"graph_learn",
       {{"k", cfg.graph_learn.k},
        {"r", cfg.graph_learn.r},
        {"alpha", cfg.graph_learn.alpha},
        {"beta", cfg.graph_learn.beta},
        {"max_iters", cfg.graph_learn.max_iters},
        {"rel_tol", cfg.graph_learn.rel_tol},
        {"auto_calibrate", cfg.graph_learn.auto_calibrate},
        {"embeddings", emb}}},
      {"training",
       {{"learning_rate", cfg.training.learning_rate},
        {"weight_decay", cfg.training.weight_decay},
        {"epochs", cfg.training.epochs},
        {"loss", loss}}},
      {"protocol",
       {{"kind", cfg.protocol_kind},
        {"folds", cfg.folds},
        {"trials", cfg.trials},
        {"train_fraction", cfg.train_fraction}}},
      {"mc", {{"samples", cfg.mc.samples}, {"dropout", cfg.mc.dropout_rate}}},
      {"transduction", to_string(cfg.transduction)}};
  return cfg;
}

void validate_paths(const CliConfig& cfg, ConfigErrors& errors) {
  if (!cfg.bags_path.empty() && !fs::exists(cfg.bags_path)) {
    errors.add("dataset.bags", "file not found: " + cfg.bags_path);
  }
  if (!cfg.edge_list_path.empty() && !fs::exists(cfg.edge_list_path)) {
    errors.add("dataset.edge_list", "file not found: " + cfg.edge_list_path);
  }
}

std::uint64_t fnv1a_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  json root;
  in >> root;
  return root;
}

fs::path resolve_output_dir(const CliConfig& cfg) {
  fs::path out(cfg.output_dir);
  const char* env_root = std::getenv("MILGRAPH_OUTPUT_ROOT");
  if (env_root != nullptr && *env_root != '\0' && out.is_relative()) {
    out = fs::path(env_root) / out;
  }
  return out;
}

struct LoadedExperiment {
  BagDataset dataset;
  std::optional<Graph> g_obs;
  PipelineConfig pipeline;
  std::vector<SplitPlan> plans;
  std::vector<std::string> metric_names;
};

LoadedExperiment load_experiment(const CliConfig& cfg) {
  LoadedExperiment exp;
  exp.dataset = load_bags_jsonl(cfg.bags_path, cfg.label_kind);
  if (cfg.standardize) {
    exp.dataset = standardize_features(exp.dataset, cfg.standardize_stats == "labeled");
  }
  if (!cfg.edge_list_path.empty()) {
    exp.g_obs = load_edge_list(cfg.edge_list_path, exp.dataset.size());
  }

  exp.pipeline.model.encoder = cfg.encoder;
  exp.pipeline.model.encoder.input_dim = exp.dataset.feature_dim;
  exp.pipeline.model.gcn_hidden = cfg.gcn_hidden;
  exp.pipeline.model.head_dropout = cfg.encoder.dropout_rate;
  exp.pipeline.model.output_dim =
      exp.dataset.label_kind == LabelKind::Categorical ? exp.dataset.num_classes : 1;
  exp.pipeline.training = cfg.training;
  exp.pipeline.graph_learn = cfg.graph_learn;
  exp.pipeline.mc = cfg.mc;
  exp.pipeline.head = cfg.head;
  exp.pipeline.transduction = cfg.transduction;
  exp.pipeline.embeddings_from_logits = cfg.embeddings_from_logits;
  exp.pipeline.knn_obs_k = cfg.knn_obs_k;

  if (exp.pipeline.training.loss == LossKind::CrossEntropy &&
      exp.dataset.label_kind != LabelKind::Categorical) {
    throw std::runtime_error("training.loss cross_entropy needs categorical labels");
  }
  if (exp.pipeline.training.loss == LossKind::Mse && exp.dataset.label_kind != LabelKind::Real) {
    throw std::runtime_error("training.loss mse needs real-valued labels");
  }

  Rng split_rng = Rng(cfg.seed).fork(1000);
  if (cfg.protocol_kind == "kfold") {
    exp.plans = make_kfold_splits(exp.dataset.size(), cfg.folds, cfg.trials, split_rng);
  } else {
    exp.plans = make_fraction_splits(exp.dataset.size(), cfg.train_fraction, cfg.trials,
                                     split_rng);
  }
  exp.metric_names = exp.dataset.label_kind == LabelKind::Categorical
                         ? std::vector<std::string>{"accuracy"}
                         : std::vector<std::string>{"rmse", "mae", "mape", "nd"};
  return exp;
}

std::vector<int> argmax_rows(const Matrix& probs) {
  std::vector<int> out(probs.rows());
  for (int i = 0; i < probs.rows(); ++i) {
    int best = 0;
    for (int j = 1; j < probs.cols(); ++j)
      if (probs(i, j) > probs(i, best)) best = j;
    out[i] = best;
  }
  return out;
}

void write_manifest(const fs::path& dir, const std::string& config_path, const CliConfig& cfg,
                    const std::string& command) {
  std::ofstream out(dir / "manifest.txt");
  out << "command=" << command << "\n";
  out << "config_path=" << fs::absolute(config_path).string() << "\n";
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(fnv1a_hash(cfg.resolved.dump())));
  out << "config_hash=" << hash << "\n";
  out << "seed=" << cfg.seed << "\n";
  out << "version=" << kVersion << "\n";
  out << "protocol_kind=" << cfg.protocol_kind << "\n";
  out << "protocol_folds=" << (cfg.protocol_kind == "kfold" ? cfg.folds : 1) << "\n";
  out << "protocol_trials=" << cfg.trials << "\n";
}

void write_solver_trace(const fs::path& path, const std::vector<SolverTracePoint>& trace) {
  std::ofstream out(path);
  out << "iteration,objective,best_objective\n";
  for (const SolverTracePoint& p : trace) {
    out << p.iteration << ',' << format_double(p.objective) << ','
        << format_double(p.best_objective) << '\n';
  }
}

int cmd_validate(const std::string& config_path) {
  json root;
  try {
    root = load_config_file(config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  ConfigErrors errors;
  CliConfig cfg = parse_config(root, errors);
  validate_paths(cfg, errors);
  if (!errors.ok()) {
    for (const std::string& line : errors.lines()) std::cerr << "error: " << line << "\n";
    return 1;
  }
  std::cout << "OK\n" << cfg.resolved.dump(2) << "\n";
  return 0;
}

int cmd_run(const std::string& config_path) {
  ConfigErrors errors;
  CliConfig cfg = parse_config(load_config_file(config_path), errors);
  validate_paths(cfg, errors);
  if (!errors.ok()) {
    for (const std::string& line : errors.lines()) std::cerr << "error: " << line << "\n";
    return 1;
  }
  LoadedExperiment exp;
  try {
    exp = load_experiment(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: loading stage failed: " << e.what() << "\n";
    return 1;
  }

  const fs::path out_dir = resolve_output_dir(cfg);
  fs::create_directories(out_dir);

  const bool classification = exp.dataset.label_kind == LabelKind::Categorical;
  struct PredRow {
    std::string id;
    std::vector<double> mean, stddev;
  };
  std::vector<PredRow> pred_rows;
  std::vector<SolverTracePoint> first_trace;
  std::optional<Graph> first_graph;
  bool any_solver_warning = false;

  auto unit = [&](int trial, int fold, const std::vector<int>& train,
                  const std::vector<int>& test, Rng unit_rng) {
    PipelineResult res =
        run_pipeline(exp.dataset, train, exp.g_obs ? &*exp.g_obs : nullptr, exp.pipeline,
                       unit_rng);
    if (!res.diagnostics.solver_converged) any_solver_warning = true;
    if (trial == 0 && fold == 0 && cfg.head == HeadKind::GcnBayes) {
      first_trace = res.diagnostics.solver_trace;
      first_graph = res.learned_graph;
    }
    for (int i : test) {
      PredRow row;
      row.id = "t" + std::to_string(trial) + "f" + std::to_string(fold) + ":" +
               exp.dataset.bags[i].id;
      for (int j = 0; j < res.predictive.mean.cols(); ++j) {
        row.mean.push_back(res.predictive.mean(i, j));
        row.stddev.push_back(res.predictive.stddev(i, j));
      }
      pred_rows.push_back(std::move(row));
    }
    if (classification) {
      std::vector<int> preds;
      std::vector<int> truth;
      const std::vector<int> all_preds = argmax_rows(res.predictive.mean);
      for (int i : test) {
        preds.push_back(all_preds[i]);
        truth.push_back(static_cast<int>(*exp.dataset.bags[i].label));
      }
      return std::vector<double>{accuracy(preds, truth)};
    }
    std::vector<double> preds, truth;
    for (int i : test) {
      preds.push_back(res.predictive.mean(i, 0));
      truth.push_back(*exp.dataset.bags[i].label);
    }
    RegressionMetrics m = regression_metrics(preds, truth);
    return std::vector<double>{m.rmse, m.mae, m.mape, normalized_deviation(preds, truth)};
  };

  std::vector<MetricReport> reports;
  try {
    reports = run_protocol(exp.plans, exp.metric_names, unit, Rng(cfg.seed).fork(2000));
  } catch (const std::exception& e) {
    std::cerr << "error: protocol stage failed: " << e.what() << "\n";
    return 1;
  }

  write_metric_reports_csv((out_dir / "metrics.csv").string(), reports);
  // trials.csv (per-unit values, for paired comparisons)
  {
    std::ofstream out(out_dir / "trials.csv");
    out << "trial,fold";
    for (const MetricReport& r : reports) out << ',' << r.metric;
    out << '\n';
    std::size_t u = 0;
    for (std::size_t t = 0; t < exp.plans.size(); ++t) {
      for (std::size_t f = 0; f < exp.plans[t].folds.size(); ++f, ++u) {
        out << t << ',' << f;
        for (const MetricReport& r : reports) out << ',' << format_double(r.per_unit[u]);
        out << '\n';
      }
    }
  }
  // predictions.csv
  {
    std::ofstream out(out_dir / "predictions.csv");
    const int c = classification ? exp.dataset.num_classes : 1;
    out << "id";
    if (c == 1) {
      out << ",pred,std";
    } else {
      for (int j = 0; j < c; ++j) out << ",pred_" << j;
      for (int j = 0; j < c; ++j) out << ",std_" << j;
    }
    out << '\n';
    for (const PredRow& row : pred_rows) {
      out << row.id;
      for (double v : row.mean) out << ',' << format_double(v);
      for (double v : row.stddev) out << ',' << format_double(v);
      out << '\n';
    }
  }
  if (first_graph) {
    save_edge_list(*first_graph, (out_dir / "graph.edges").string());
    write_solver_trace(out_dir / "solver_trace.csv", first_trace);
  }
  // summary.txt
  {
    std::ofstream out(out_dir / "summary.txt");
    out << "dataset: " << cfg.bags_path << " (" << exp.dataset.size() << " bags, "
        << exp.dataset.labeled.size() << " labeled)\n";
    out << "model: " << to_string(cfg.encoder.kind) << " + " << to_string(cfg.head) << " head, "
        << to_string(cfg.transduction) << "\n";
    out << "protocol: " << cfg.protocol_kind << " folds=" << cfg.folds
        << " trials=" << cfg.trials << " seed=" << cfg.seed << "\n";
    for (const MetricReport& r : reports) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "%-10s %.4f +- %.4f (n=%zu)\n", r.metric.c_str(), r.mean,
                    r.std_error, r.per_unit.size());
      out << buf;
    }
    if (any_solver_warning) out << "warning: graph solver hit max_iters in at least one unit\n";
  }
  write_manifest(out_dir, config_path, cfg, "run");

  for (const MetricReport& r : reports) {
    std::cout << r.metric << ": " << r.mean << " +- " << r.std_error << " (n=" << r.per_unit.size()
              << ")\n";
  }
  std::cout << "artifacts written to " << out_dir.string() << "\n";
  return 0;
}

int cmd_infer_graph(const std::string& config_path) {
  ConfigErrors errors;
  CliConfig cfg = parse_config(load_config_file(config_path), errors);
  validate_paths(cfg, errors);
  if (!errors.ok()) {
    for (const std::string& line : errors.lines()) std::cerr << "error: " << line << "\n";
    return 1;
  }
  LoadedExperiment exp;
  try {
    exp = load_experiment(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: loading stage failed: " << e.what() << "\n";
    return 1;
  }
  if (exp.dataset.labeled.empty()) {
    std::cerr << "error: graph inference needs labeled bags for the base model\n";
    return 1;
  }

  const fs::path out_dir = resolve_output_dir(cfg);
  fs::create_directories(out_dir);
  try {
    Rng rng = Rng(cfg.seed).fork(1);
    ModelConfig mcfg;
    mcfg.encoder = exp.pipeline.model.encoder;
    mcfg.gcn_hidden = exp.pipeline.model.gcn_hidden;
    mcfg.head_dropout = exp.pipeline.model.head_dropout;
    mcfg.output_dim = exp.pipeline.model.output_dim;
    BaseModel base = train_base_model(exp.dataset, exp.dataset.labeled, mcfg, cfg.training,
                                      exp.g_obs ? &*exp.g_obs : nullptr, rng);
    GraphSolveResult solved = infer_graph(base, exp.dataset, exp.dataset.labeled, cfg.graph_learn,
                                          cfg.transduction, cfg.embeddings_from_logits);
    save_edge_list(solved.graph, (out_dir / "graph.edges").string());
    write_solver_trace(out_dir / "solver_trace.csv", solved.trace);
    write_manifest(out_dir, config_path, cfg, "infer-graph");
    std::cout << "nodes=" << solved.graph.n() << " edges=" << solved.graph.edges().size()
              << " mean_degree=" << solved.graph.mean_degree()
              << (solved.converged ? "" : " (warning: max_iters reached)") << "\n";
    std::cout << "graph written to " << (out_dir / "graph.edges").string() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: graph inference stage failed: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

struct RunData {
  std::string dir;
  std::map<std::string, std::string> manifest;
  std::vector<std::string> metrics;
  std::map<std::string, std::vector<double>> per_unit;
};

RunData read_run_dir(const std::string& dir) {
  RunData run;
  run.dir = dir;
  std::ifstream mf(fs::path(dir) / "manifest.txt");
  if (!mf) throw std::runtime_error("no manifest.txt in " + dir);
  std::string line;
  while (std::getline(mf, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) run.manifest[line.substr(0, eq)] = line.substr(eq + 1);
  }
  std::ifstream tf(fs::path(dir) / "trials.csv");
  if (!tf) throw std::runtime_error("no trials.csv in " + dir);
  std::getline(tf, line);
  std::stringstream header(line);
  std::string col;
  std::vector<std::string> cols;
  while (std::getline(header, col, ',')) cols.push_back(col);
  for (std::size_t c = 2; c < cols.size(); ++c) run.metrics.push_back(cols[c]);
  while (std::getline(tf, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::vector<std::string> vals;
    while (std::getline(row, col, ',')) vals.push_back(col);
    for (std::size_t c = 2; c < vals.size(); ++c) {
      run.per_unit[cols[c]].push_back(std::stod(vals[c]));
    }
  }
  return run;
}

bool lower_is_better(const std::string& metric) {
  return metric == "rmse" || metric == "mae" || metric == "mape" || metric == "nd";
}

int cmd_compare(const std::vector<std::string>& dirs) {
  std::vector<RunData> runs;
  try {
    for (const std::string& d : dirs) runs.push_back(read_run_dir(d));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  const RunData& base = runs[0];
  for (const RunData& run : runs) {
    for (const char* key : {"protocol_kind", "protocol_folds", "protocol_trials", "seed"}) {
      auto a = base.manifest.find(key);
      auto b = run.manifest.find(key);
      if (a == base.manifest.end() || b == run.manifest.end() || a->second != b->second) {
        std::cerr << "error: runs are not paired: " << key << " differs between " << base.dir
                  << " and " << run.dir << "\n";
        return 1;
      }
    }
  }
  for (const std::string& metric : base.metrics) {
    for (const RunData& run : runs) {
      if (!run.per_unit.count(metric) ||
          run.per_unit.at(metric).size() != base.per_unit.at(metric).size()) {
        std::cerr << "error: runs are not paired: metric " << metric
                  << " has mismatched trial counts\n";
        return 1;
      }
    }
  }

  std::cout << "paired comparison against base " << base.dir << " ("
            << base.per_unit.at(base.metrics[0]).size() << " paired units)\n";
  for (const std::string& metric : base.metrics) {
    const bool lower = lower_is_better(metric);
    const Alternative better = lower ? Alternative::Less : Alternative::Greater;
    std::cout << "metric " << metric << (lower ? " (lower is better)" : " (higher is better)")
              << "\n";
    // significance of variant i vs run j, one-sided "i better than j"
    auto p_better = [&](std::size_t i, std::size_t j) -> double {
      try {
        return wilcoxon_signed_rank(runs[j].per_unit.at(metric), runs[i].per_unit.at(metric),
                                    better)
            .p_value;
      } catch (const std::invalid_argument&) {
        return 1.0;  // identical samples: no evidence of a difference
      }
    };
    for (std::size_t i = 1; i < runs.size(); ++i) {
      const double p_vs_base = p_better(i, 0);
      bool beats_all_variants = true;
      for (std::size_t j = 1; j < runs.size(); ++j) {
        if (j != i && p_better(i, j) >= 0.05) beats_all_variants = false;
      }
      std::string stars;
      if (p_vs_base < 0.05) stars = beats_all_variants && runs.size() > 2 ? "**" : "*";
      const double mean_i = mean_of(runs[i].per_unit.at(metric));
      const double mean_0 = mean_of(runs[0].per_unit.at(metric));
      char buf[160];
      if (p_vs_base == 1.0 && mean_i == mean_0) {
        std::snprintf(buf, sizeof(buf), "  %-24s mean %.4f vs %.4f: no difference\n",
                      runs[i].dir.c_str(), mean_i, mean_0);
      } else {
        std::snprintf(buf, sizeof(buf), "  %-24s mean %.4f vs %.4f: p=%.6g %s\n",
                      runs[i].dir.c_str(), mean_i, mean_0, p_vs_base, stars.c_str());
      }
      std::cout << buf;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph-based multiple instance learning experiment runner"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> compare_dirs;

  CLI::App* validate = app.add_subcommand("validate", "statically validate a config file");
  validate->add_option("config", config_path, "experiment config (json)")->required();

  CLI::App* run = app.add_subcommand("run", "run the configured protocol");
  run->add_option("config", config_path, "experiment config (json)")->required();

  CLI::App* infer = app.add_subcommand("infer-graph", "base model + graph inference only");
  infer->add_option("config", config_path, "experiment config (json)")->required();

  CLI::App* compare = app.add_subcommand("compare", "paired significance report over run dirs");
  compare->add_option("runs", compare_dirs, "two or more run directories")->expected(2, -1);

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) return cmd_validate(config_path);
    if (run->parsed()) return cmd_run(config_path);
    if (infer->parsed()) return cmd_infer_graph(config_path);
    if (compare->parsed()) return cmd_compare(compare_dirs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
