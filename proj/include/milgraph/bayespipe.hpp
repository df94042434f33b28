#pragma once

#include <optional>
#include <string>
#include <vector>

#include "milgraph/dataio.hpp"
#include "milgraph/encoders.hpp"
#include "milgraph/evalkit.hpp"
#include "milgraph/graphcore.hpp"
#include "milgraph/graphlearn.hpp"

namespace milgraph {

enum class HeadKind { Linear, GcnObserved, GcnBayes };
HeadKind head_kind_from_string(const std::string& name);
std::string to_string(HeadKind k);

enum class TransductionMode { Transductive, Tnd, TndTraining };
TransductionMode transduction_from_string(const std::string& name);
std::string to_string(TransductionMode m);

struct ModelConfig {
  EncoderConfig encoder;
  int output_dim = 0;             // class count, or 1 for regression
  std::vector<int> gcn_hidden;    // widths of extra head layers; empty = single layer
  double head_dropout = 0.5;      // dropout on every head-layer input
};

/// Encoder plus one prediction head per encoder representation (deep
/// supervision yields one head per hidden layer). Heads are GcnStacks;
/// applied without an adjacency they are plain dense layers, so the
/// graph-free base model and its GCN variant share shapes and parameter
/// counts.
struct MilModel {
  Encoder encoder;
  std::vector<GcnStack> heads;
  LossKind loss = LossKind::CrossEntropy;

  void collect_params(std::vector<Matrix*>& out);
  long long param_count();
  int output_dim() const { return heads.front().layers.back().out_dim(); }
};

MilModel make_model(const ModelConfig& cfg, LossKind loss, Rng& rng);

struct TrainResult {
  std::vector<double> loss_history;
};

/// Full-batch joint training (encoder + heads) by Adam; dropout active
/// on head-layer inputs; loss over `train_idx` rows only. adj == nullptr
/// trains the graph-free model.
TrainResult train_model(MilModel& model, const BagDataset& ds, const std::vector<int>& train_idx,
                        const NormalizedAdjacency* adj, const TrainingConfig& cfg, Rng& rng);

/// Deterministic forward: no dropout; classification returns per-head
/// softmax probabilities averaged, regression per-head outputs averaged.
Matrix predict_deterministic(const MilModel& model, const BagDataset& ds,
                             const NormalizedAdjacency* adj);
/// Pre-softmax outputs averaged over heads (used for the logits
/// embedding option).
Matrix predict_logits(const MilModel& model, const BagDataset& ds, const NormalizedAdjacency* adj);

/// Final encoder representations of every bag (penultimate activations).
EmbeddingMatrix model_embeddings(const MilModel& model, const BagDataset& ds);

struct McPredictConfig {
  int samples = 50;
  double dropout_rate = 0.5;

  void validate() const;
};

struct PredictiveDistribution {
  Matrix mean;    // |V| x C (rows sum to 1) or |V| x 1
  Matrix stddev;  // MC standard deviation, same shape
  std::vector<Matrix> samples;
};

/// Monte-Carlo dropout predictive: the encoder runs once without
/// dropout; each of the S samples reruns the heads with fresh dropout
/// masks (per-sample RNG streams). With dropout_rate == 0 every sample
/// equals the deterministic forward and the averaging is skipped, so
/// the result matches it exactly.
PredictiveDistribution mc_predict(const MilModel& model, const BagDataset& ds,
                                  const NormalizedAdjacency* adj, const McPredictConfig& cfg,
                                  const Rng& rng);

struct BaseModel {
  MilModel model;
  std::optional<NormalizedAdjacency> adj;  // observed-graph head when set
  TrainResult training;
};

BaseModel train_base_model(const BagDataset& ds, const std::vector<int>& train_idx,
                           const ModelConfig& mcfg, const TrainingConfig& tcfg, const Graph* g_obs,
                           Rng& rng);

/// Steps 3-4: distances from base-model representations, then the MAP
/// solve. Transductive solves over all bags; tnd / tnd_training solve
/// over the training bags only, leaving test nodes isolated in the
/// returned |V|-node graph (tnd_training re-solves transductively at
/// evaluation time inside run_pipeline).
GraphSolveResult infer_graph(const BaseModel& base, const BagDataset& ds,
                             const std::vector<int>& train_idx, const GraphLearnConfig& glcfg,
                             TransductionMode mode, bool embeddings_from_logits = false);

struct PipelineConfig {
  ModelConfig model;
  TrainingConfig training;
  GraphLearnConfig graph_learn;
  McPredictConfig mc;
  HeadKind head = HeadKind::GcnBayes;
  TransductionMode transduction = TransductionMode::Transductive;
  bool embeddings_from_logits = false;
  /// gcn_obs with no supplied graph: build G_obs as a kNN graph over
  /// base-model embeddings with this k (0 disables).
  int knn_obs_k = 0;
  /// Diagnostic: skip graph inference and use the empty graph, whose
  /// normalized adjacency is the identity.
  bool force_empty_graph = false;
};

struct PipelineDiagnostics {
  std::vector<double> base_loss_history;
  std::vector<double> final_loss_history;
  std::vector<SolverTracePoint> solver_trace;
  bool solver_converged = true;
};

struct PipelineResult {
  PredictiveDistribution predictive;
  Graph learned_graph;  // training-time graph (empty for linear heads)
  Graph eval_graph;     // graph used at prediction time
  PipelineDiagnostics diagnostics;
};

/// End-to-end run: base model (when needed), graph inference, joint
/// retraining over the inferred graph, MC-dropout predictive. Only
/// labels at `train_idx` are ever read. Same seed, same outputs.
PipelineResult run_pipeline(const BagDataset& ds, const std::vector<int>& train_idx,
                              const Graph* g_obs, const PipelineConfig& cfg, const Rng& rng);

}  // namespace milgraph
