#pragma once

#include <optional>
#include <vector>

#include "milgraph/autodiff.hpp"
#include "milgraph/matrix.hpp"
#include "milgraph/nn.hpp"

namespace milgraph {

struct WeightedEdge {
  int i = 0;
  int j = 0;  // i < j
  double w = 1.0;
};

/// Undirected weighted graph over bags. Stored as an edge list with
/// i < j; the implied adjacency is symmetric, non-negative, and has a
/// zero diagonal. Edges lighter than kPruneEps are dropped at
/// construction. Immutable once built.
class Graph {
 public:
  static constexpr double kPruneEps = 1e-8;

  Graph() = default;
  /// Validates and canonicalizes: rejects self-loops, negative weights
  /// and out-of-range ids; duplicate pairs collapse (last weight wins);
  /// edges with w <= prune_eps are dropped.
  Graph(int n, std::vector<WeightedEdge> edges, double prune_eps = kPruneEps);

  static Graph empty(int n) { return Graph(n, {}); }

  int n() const { return n_; }
  const std::vector<WeightedEdge>& edges() const { return edges_; }
  Matrix dense_adjacency() const;
  std::vector<double> weighted_degrees() const;
  /// Number of incident edges per node (weight already > kPruneEps).
  std::vector<int> neighbor_counts() const;
  double mean_degree() const;
  bool has_isolated_node() const;

 private:
  int n_ = 0;
  std::vector<WeightedEdge> edges_;
};

/// Kipf-Welling renormalized adjacency D^{-1/2} (A + I) D^{-1/2} with
/// D = diag((A + I) 1). Self-loops live only here, not in Graph.
struct NormalizedAdjacency {
  int n = 0;
  Matrix matrix;
};

NormalizedAdjacency normalize_adjacency(const Graph& g);

/// kNN graph on squared Euclidean distances: each node links to its k
/// nearest neighbors (ties broken toward the lowest index), the union
/// symmetrized (edge present if either endpoint selects it), weight 1.
Graph build_knn_graph(const Matrix& points, int k);
Graph build_knn_graph_from_distances(const Matrix& sq_distances, int k);

/// GCN stack per layer: input dropout, adjacency premultiply, dense.
/// Layers reuse DenseLayer, so each carries a bias like the plain
/// linear layer it replaces.
struct GcnStack {
  std::vector<DenseLayer> layers;
  double dropout_rate = 0.0;
};

/// H <- act(adj * dropout(H) * W + b), chained over layers. Dropout is
/// active in train mode and in MC-sampling mode (stochastic=true).
Matrix gcn_forward(const GcnStack& stack, const NormalizedAdjacency& adj, const Matrix& z,
                   Rng& rng, bool stochastic);

/// Tape variant used during joint training; `adj` may be null for a
/// graph-free (plain dense) head.
struct BoundGcnStack {
  std::vector<std::pair<Var, Var>> layer_params;  // (weight, bias) per layer
  const GcnStack* stack = nullptr;
};
BoundGcnStack bind_gcn_stack(Tape& tape, GcnStack& stack);
Var gcn_forward(Tape& tape, const BoundGcnStack& bound, const Matrix* adj, Var z, Rng& rng,
                bool stochastic);

}  // namespace milgraph
