#include "milgraph/bayespipe.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace milgraph {

namespace {
// Stage substreams off the pipeline root; the final model always trains
// on kFinalStream so graph-free and identity-adjacency runs coincide.
constexpr std::uint64_t kBaseStream = 1;
constexpr std::uint64_t kFinalStream = 2;
constexpr std::uint64_t kMcStream = 3;
}  // namespace

HeadKind head_kind_from_string(const std::string& name) {
  if (name == "linear") return HeadKind::Linear;
  if (name == "gcn_obs") return HeadKind::GcnObserved;
  if (name == "gcn_bayes") return HeadKind::GcnBayes;
  throw std::invalid_argument("unknown head kind: " + name);
}

std::string to_string(HeadKind k) {
  switch (k) {
    case HeadKind::Linear: return "linear";
    case HeadKind::GcnObserved: return "gcn_obs";
    case HeadKind::GcnBayes: return "gcn_bayes";
  }
  return "?";
}

TransductionMode transduction_from_string(const std::string& name) {
  if (name == "transductive") return TransductionMode::Transductive;
  if (name == "tnd") return TransductionMode::Tnd;
  if (name == "tnd_training") return TransductionMode::TndTraining;
  throw std::invalid_argument("unknown transduction mode: " + name);
}

std::string to_string(TransductionMode m) {
  switch (m) {
    case TransductionMode::Transductive: return "transductive";
    case TransductionMode::Tnd: return "tnd";
    case TransductionMode::TndTraining: return "tnd_training";
  }
  return "?";
}

void McPredictConfig::validate() const {
  if (samples < 1) throw std::invalid_argument("McPredictConfig: samples must be >= 1");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw std::invalid_argument("McPredictConfig: dropout_rate must be in [0, 1)");
  }
}

void MilModel::collect_params(std::vector<Matrix*>& out) {
  encoder.collect_params(out);
  for (GcnStack& head : heads) {
    for (DenseLayer& l : head.layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  }
}

long long MilModel::param_count() {
  std::vector<Matrix*> params;
  collect_params(params);
  long long total = 0;
  for (Matrix* p : params) total += static_cast<long long>(p->size());
  return total;
}

MilModel make_model(const ModelConfig& cfg, LossKind loss, Rng& rng) {
  if (cfg.output_dim < 1) throw std::invalid_argument("make_model: output_dim must be >= 1");
  MilModel model;
  model.loss = loss;
  model.encoder = make_encoder(cfg.encoder, rng);
  for (int d_in : model.encoder.head_dims()) {
    GcnStack head;
    head.dropout_rate = cfg.head_dropout;
    int in = d_in;
    for (int width : cfg.gcn_hidden) {
      head.layers.push_back(make_dense_layer(in, width, Activation::Relu, rng));
      in = width;
    }
    head.layers.push_back(make_dense_layer(in, cfg.output_dim, Activation::Identity, rng));
    model.heads.push_back(std::move(head));
  }
  return model;
}

namespace {

struct BoundModel {
  BoundEncoder encoder;
  std::vector<BoundGcnStack> heads;
  std::vector<Matrix*> params;
  std::vector<Var> param_vars;
};

BoundModel bind_model(Tape& tape, MilModel& model) {
  BoundModel bound;
  bound.encoder = bind_encoder(tape, model.encoder);
  for (GcnStack& head : model.heads) bound.heads.push_back(bind_gcn_stack(tape, head));
  model.collect_params(bound.params);
  collect_vars(bound.encoder, bound.param_vars);
  for (const BoundGcnStack& head : bound.heads) {
    for (const auto& [w, b] : head.layer_params) {
      bound.param_vars.push_back(w);
      bound.param_vars.push_back(b);
    }
  }
  if (bound.params.size() != bound.param_vars.size()) {
    throw std::logic_error("bind_model: parameter walk mismatch");
  }
  for (std::size_t i = 0; i < bound.params.size(); ++i) {
    if (!bound.params[i]->same_shape(tape.value(bound.param_vars[i]))) {
      throw std::logic_error("bind_model: parameter order mismatch");
    }
  }
  return bound;
}

std::vector<Matrix> bag_features(const BagDataset& ds) {
  std::vector<Matrix> features;
  features.reserve(ds.bags.size());
  for (const Bag& b : ds.bags) features.push_back(b.features);
  return features;
}

/// Builds per-head output matrices over the whole dataset on the tape.
std::vector<Var> model_forward(Tape& tape, const BoundModel& bound,
                               const std::vector<Matrix>& features, const Matrix* adj, Rng& rng,
                               bool stochastic) {
  std::vector<Var> reps = encode_dataset(tape, bound.encoder, features);
  std::vector<Var> outputs;
  for (std::size_t h = 0; h < bound.heads.size(); ++h) {
    outputs.push_back(gcn_forward(tape, bound.heads[h], adj, reps[h], rng, stochastic));
  }
  return outputs;
}

void check_labels(const MilModel& model, const BagDataset& ds) {
  if (model.loss == LossKind::CrossEntropy && ds.label_kind != LabelKind::Categorical) {
    throw std::invalid_argument("cross-entropy training needs categorical labels");
  }
  if (model.loss == LossKind::Mse && ds.label_kind != LabelKind::Real) {
    throw std::invalid_argument("mse training needs real-valued labels");
  }
}

}  // namespace

TrainResult train_model(MilModel& model, const BagDataset& ds, const std::vector<int>& train_idx,
                        const NormalizedAdjacency* adj, const TrainingConfig& cfg, Rng& rng) {
  cfg.validate();
  if (train_idx.empty()) throw std::invalid_argument("train_model: empty labeled set");
  check_labels(model, ds);
  if (adj != nullptr && adj->n != ds.size()) {
    throw std::invalid_argument("train_model: graph/bag count mismatch");
  }
  std::vector<int> labels_cls;
  Matrix labels_real;
  if (model.loss == LossKind::CrossEntropy) {
    labels_cls = ds.class_labels(train_idx);
  } else {
    labels_real = ds.real_labels(train_idx);
  }

  TrainResult result;
  AdamOptimizer opt;
  const Matrix* adj_matrix = adj == nullptr ? nullptr : &adj->matrix;
  const std::vector<Matrix> features = bag_features(ds);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Tape tape;
    BoundModel bound = bind_model(tape, model);
    std::vector<Var> outputs = model_forward(tape, bound, features, adj_matrix, rng, true);
    std::vector<Var> head_losses;
    for (Var out : outputs) {
      Var picked = tape.gather_rows(out, train_idx);
      head_losses.push_back(model.loss == LossKind::CrossEntropy
                                ? tape.cross_entropy_loss(picked, labels_cls)
                                : tape.mse_loss(picked, labels_real));
    }
    Var loss = tape.mean_of(head_losses);
    const double loss_value = tape.value(loss)(0, 0);
    if (!std::isfinite(loss_value)) {
      throw std::runtime_error("train_model: non-finite loss at epoch " + std::to_string(epoch));
    }
    tape.backward(loss);
    std::vector<Matrix> grads;
    grads.reserve(bound.param_vars.size());
    for (Var v : bound.param_vars) grads.push_back(tape.grad(v));
    opt.step(bound.params, grads, cfg);
    result.loss_history.push_back(loss_value);
  }
  return result;
}

namespace {

Matrix softmax_rows_plain(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i) {
    const double* r = x.row(i);
    double mx = r[0];
    for (int j = 1; j < x.cols(); ++j) mx = std::max(mx, r[j]);
    double z = 0.0;
    for (int j = 0; j < x.cols(); ++j) z += std::exp(r[j] - mx);
    for (int j = 0; j < x.cols(); ++j) out(i, j) = std::exp(r[j] - mx) / z;
  }
  return out;
}

Matrix head_forward_plain(const GcnStack& head, const Matrix* adj, const Matrix& z, Rng& rng,
                          bool stochastic) {
  Matrix h = z;
  for (const DenseLayer& layer : head.layers) {
    h = dropout_apply(h, head.dropout_rate, rng, stochastic);
    if (adj != nullptr) h = matmul(*adj, h);
    h = dense_forward(layer, h);
  }
  return h;
}

/// Per-head representation matrices for the whole dataset (no dropout).
std::vector<Matrix> encoder_reps_plain(const MilModel& model, const BagDataset& ds) {
  return encode_dataset(model.encoder, bag_features(ds));
}

Matrix combine_heads(const MilModel& model, const std::vector<Matrix>& head_outputs,
                     bool as_probabilities) {
  Matrix acc;
  for (const Matrix& out : head_outputs) {
    Matrix term = as_probabilities && model.loss == LossKind::CrossEntropy
                      ? softmax_rows_plain(out)
                      : out;
    acc = acc.empty() ? term : add(acc, term);
  }
  return scale(acc, 1.0 / static_cast<double>(head_outputs.size()));
}

Matrix model_forward_plain(const MilModel& model, const BagDataset& ds, const Matrix* adj,
                           Rng& rng, bool stochastic, bool as_probabilities) {
  const std::vector<Matrix> z = encoder_reps_plain(model, ds);
  std::vector<Matrix> outputs;
  for (std::size_t h = 0; h < model.heads.size(); ++h) {
    outputs.push_back(head_forward_plain(model.heads[h], adj, z[h], rng, stochastic));
  }
  return combine_heads(model, outputs, as_probabilities);
}

}  // namespace

Matrix predict_deterministic(const MilModel& model, const BagDataset& ds,
                             const NormalizedAdjacency* adj) {
  Rng unused(0);
  return model_forward_plain(model, ds, adj == nullptr ? nullptr : &adj->matrix, unused, false,
                             true);
}

Matrix predict_logits(const MilModel& model, const BagDataset& ds,
                      const NormalizedAdjacency* adj) {
  Rng unused(0);
  return model_forward_plain(model, ds, adj == nullptr ? nullptr : &adj->matrix, unused, false,
                             false);
}

EmbeddingMatrix model_embeddings(const MilModel& model, const BagDataset& ds) {
  std::vector<Matrix> bags;
  bags.reserve(ds.bags.size());
  for (const Bag& b : ds.bags) bags.push_back(b.features);
  return encode_bags(model.encoder, bags);
}

PredictiveDistribution mc_predict(const MilModel& model, const BagDataset& ds,
                                  const NormalizedAdjacency* adj, const McPredictConfig& cfg,
                                  const Rng& rng) {
  cfg.validate();
  const Matrix* adj_matrix = adj == nullptr ? nullptr : &adj->matrix;
  PredictiveDistribution out;

  if (cfg.dropout_rate == 0.0) {
    // All samples coincide with the deterministic forward; skip the
    // averaging so the equality is exact.
    out.mean = predict_deterministic(model, ds, adj);
    out.stddev = Matrix(out.mean.rows(), out.mean.cols());
    out.samples.assign(static_cast<std::size_t>(cfg.samples), out.mean);
    return out;
  }

  const std::vector<Matrix> z = encoder_reps_plain(model, ds);
  out.samples.resize(static_cast<std::size_t>(cfg.samples));
  for (int s = 0; s < cfg.samples; ++s) {
    Rng sample_rng = rng.fork(static_cast<std::uint64_t>(s));
    std::vector<Matrix> outputs;
    for (std::size_t h = 0; h < model.heads.size(); ++h) {
      GcnStack sampled = model.heads[h];
      sampled.dropout_rate = cfg.dropout_rate;
      outputs.push_back(head_forward_plain(sampled, adj_matrix, z[h], sample_rng, true));
    }
    out.samples[static_cast<std::size_t>(s)] = combine_heads(model, outputs, true);
  }

  const int rows = out.samples[0].rows(), cols = out.samples[0].cols();
  out.mean = Matrix(rows, cols);
  for (const Matrix& s : out.samples) out.mean = add(out.mean, s);
  out.mean = scale(out.mean, 1.0 / cfg.samples);
  out.stddev = Matrix(rows, cols);
  for (const Matrix& s : out.samples) {
    for (std::size_t i = 0; i < out.stddev.size(); ++i) {
      const double d = s.data()[i] - out.mean.data()[i];
      out.stddev.data()[i] += d * d;
    }
  }
  for (std::size_t i = 0; i < out.stddev.size(); ++i) {
    out.stddev.data()[i] = std::sqrt(out.stddev.data()[i] / cfg.samples);
  }
  return out;
}

BaseModel train_base_model(const BagDataset& ds, const std::vector<int>& train_idx,
                           const ModelConfig& mcfg, const TrainingConfig& tcfg, const Graph* g_obs,
                           Rng& rng) {
  BaseModel base;
  base.model = make_model(mcfg, tcfg.loss, rng);
  if (g_obs != nullptr) base.adj = normalize_adjacency(*g_obs);
  const NormalizedAdjacency* adj = base.adj ? &*base.adj : nullptr;
  base.training = train_model(base.model, ds, train_idx, adj, tcfg, rng);
  return base;
}

namespace {

Matrix embeddings_for_inference(const BaseModel& base, const BagDataset& ds, bool from_logits) {
  if (from_logits) {
    return predict_logits(base.model, ds, base.adj ? &*base.adj : nullptr);
  }
  return model_embeddings(base.model, ds).values;
}

Matrix gather_rows_plain(const Matrix& x, const std::vector<int>& idx) {
  Matrix out(static_cast<int>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (int j = 0; j < x.cols(); ++j) out(static_cast<int>(i), j) = x(idx[i], j);
  return out;
}

}  // namespace

GraphSolveResult infer_graph(const BaseModel& base, const BagDataset& ds,
                             const std::vector<int>& train_idx, const GraphLearnConfig& glcfg,
                             TransductionMode mode, bool embeddings_from_logits) {
  const Matrix z = embeddings_for_inference(base, ds, embeddings_from_logits);
  if (mode == TransductionMode::Transductive) {
    return solve_graph_map(pairwise_sq_euclidean(z), glcfg);
  }
  // Solve over the training bags only; test nodes stay isolated.
  GraphSolveResult res = solve_graph_map(pairwise_sq_euclidean(gather_rows_plain(z, train_idx)),
                                         glcfg);
  std::vector<WeightedEdge> remapped;
  remapped.reserve(res.graph.edges().size());
  for (const WeightedEdge& e : res.graph.edges()) {
    remapped.push_back(WeightedEdge{train_idx[e.i], train_idx[e.j], e.w});
  }
  res.graph = Graph(ds.size(), std::move(remapped), /*prune_eps=*/0.0);
  return res;
}

PipelineResult run_pipeline(const BagDataset& ds, const std::vector<int>& train_idx,
                              const Graph* g_obs, const PipelineConfig& cfg, const Rng& rng) {
  if (train_idx.empty()) throw std::invalid_argument("run_pipeline: empty labeled set");
  PipelineResult result;
  result.learned_graph = Graph::empty(ds.size());
  result.eval_graph = Graph::empty(ds.size());

  std::optional<NormalizedAdjacency> final_adj;
  std::optional<NormalizedAdjacency> eval_adj;

  switch (cfg.head) {
    case HeadKind::Linear:
      break;
    case HeadKind::GcnObserved: {
      Graph built;
      if (g_obs == nullptr) {
        if (cfg.knn_obs_k < 1) {
          throw std::invalid_argument(
              "run_pipeline: gcn_obs head needs an observed graph or a kNN spec");
        }
        // heuristic observed graph: kNN over base-model embeddings
        Rng base_rng = rng.fork(kBaseStream);
        BaseModel base = train_base_model(ds, train_idx, cfg.model, cfg.training, nullptr,
                                          base_rng);
        result.diagnostics.base_loss_history = base.training.loss_history;
        built = build_knn_graph(model_embeddings(base.model, ds).values, cfg.knn_obs_k);
        g_obs = &built;
      }
      result.eval_graph = *g_obs;
      final_adj = normalize_adjacency(*g_obs);
      eval_adj = final_adj;
      break;
    }
    case HeadKind::GcnBayes: {
      if (cfg.force_empty_graph) {
        final_adj = normalize_adjacency(Graph::empty(ds.size()));
        eval_adj = final_adj;
        break;
      }
      Rng base_rng = rng.fork(kBaseStream);
      BaseModel base = train_base_model(ds, train_idx, cfg.model, cfg.training, g_obs, base_rng);
      result.diagnostics.base_loss_history = base.training.loss_history;

      GraphSolveResult solved = infer_graph(base, ds, train_idx, cfg.graph_learn,
                                            cfg.transduction, cfg.embeddings_from_logits);
      result.diagnostics.solver_trace = solved.trace;
      result.diagnostics.solver_converged = solved.converged;
      result.learned_graph = solved.graph;
      final_adj = normalize_adjacency(solved.graph);

      if (cfg.transduction == TransductionMode::TndTraining) {
        // Trained on the L-only graph, evaluated on a full transductive solve.
        GraphSolveResult eval_solved = infer_graph(base, ds, train_idx, cfg.graph_learn,
                                                   TransductionMode::Transductive,
                                                   cfg.embeddings_from_logits);
        result.eval_graph = eval_solved.graph;
        eval_adj = normalize_adjacency(eval_solved.graph);
      } else {
        result.eval_graph = solved.graph;
        eval_adj = final_adj;
      }
      break;
    }
  }

  Rng final_rng = rng.fork(kFinalStream);
  MilModel model = make_model(cfg.model, cfg.training.loss, final_rng);
  TrainResult training = train_model(model, ds, train_idx, final_adj ? &*final_adj : nullptr,
                                     cfg.training, final_rng);
  result.diagnostics.final_loss_history = training.loss_history;

  result.predictive = mc_predict(model, ds, eval_adj ? &*eval_adj : nullptr, cfg.mc,
                                 rng.fork(kMcStream));
  return result;
}

}  // namespace milgraph
