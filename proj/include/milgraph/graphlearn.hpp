#pragma once

#include <utility>
#include <vector>

#include "milgraph/graphcore.hpp"
#include "milgraph/matrix.hpp"

namespace milgraph {

/// Symmetric non-negative pairwise dissimilarities with zero diagonal.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(Matrix d);  // validates the invariants

  int n() const { return d_.rows(); }
  const Matrix& matrix() const { return d_; }
  double operator()(int i, int j) const { return d_(i, j); }

 private:
  Matrix d_;
};

/// D_ij = ||z_i - z_j||^2 over embedding rows. OpenMP-parallel over rows;
/// the serial variant is the reference the tests compare against.
DistanceMatrix pairwise_sq_euclidean(const Matrix& z);
DistanceMatrix pairwise_sq_euclidean_serial(const Matrix& z);

struct GraphLearnConfig {
  int k = 5;               // target neighbor count
  int r = 1;               // permissible-set restriction multiplier
  double alpha = 1.0;      // log-degree barrier weight
  double beta = 1.0;       // Frobenius sparsity weight
  int max_iters = 1000;
  double rel_tol = 1e-5;
  bool auto_calibrate = true;

  void validate(int n) const;
};

/// Unordered candidate pairs (i < j), sorted, no duplicates.
using EdgeSet = std::vector<std::pair<int, int>>;

/// Union over nodes of their k*r nearest neighbors (OR-symmetrized).
/// Solver variables exist only for these pairs.
EdgeSet restrict_edge_set(const DistanceMatrix& d, int k, int r);

/// ||A o D||_{1,1} - alpha 1' log(A 1) + beta ||A||_F^2.
/// Any zero-degree node makes the barrier infinite.
double graph_objective(const Graph& a, const DistanceMatrix& d, double alpha, double beta);

struct SolverTracePoint {
  int iteration = 0;
  double objective = 0.0;       // objective at this iterate
  double best_objective = 0.0;  // incumbent (best so far); non-increasing
};

struct GraphSolveResult {
  Graph graph;
  bool converged = false;
  int iterations = 0;
  double objective = 0.0;  // objective of the returned (best) iterate
  std::vector<SolverTracePoint> trace;
};

/// MAP estimate of the graph: minimizes graph_objective over symmetric
/// non-negative adjacencies supported on the kr-NN permissible edge set,
/// via a primal-dual forward-backward-forward scheme. Returns the best
/// iterate; converged=false flags hitting max_iters before the relative
/// objective change fell below rel_tol.
GraphSolveResult solve_graph_map(const DistanceMatrix& d, const GraphLearnConfig& cfg);

/// Same solver on an explicit permissible edge set (distances taken
/// as-is; alpha/beta from cfg).
GraphSolveResult solve_graph_map_on_edges(const DistanceMatrix& d, const EdgeSet& edges,
                                          const GraphLearnConfig& cfg);

/// Rescales D so that solving with alpha = beta = 1 yields roughly k
/// neighbors per node. Per-node scale bounds come from each node's
/// sorted distances; a single global factor is their geometric mean.
/// All-zero D is returned unchanged.
DistanceMatrix calibrate_scale(const DistanceMatrix& d, int k);

}  // namespace milgraph
