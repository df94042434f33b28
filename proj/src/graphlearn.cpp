#include "milgraph/graphlearn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace milgraph {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

DistanceMatrix::DistanceMatrix(Matrix d) : d_(std::move(d)) {
  if (d_.rows() != d_.cols()) throw std::invalid_argument("DistanceMatrix: must be square");
  for (int i = 0; i < d_.rows(); ++i) {
    if (d_(i, i) != 0.0) throw std::invalid_argument("DistanceMatrix: nonzero diagonal");
    for (int j = i + 1; j < d_.cols(); ++j) {
      if (d_(i, j) < 0.0) throw std::invalid_argument("DistanceMatrix: negative entry");
      if (d_(i, j) != d_(j, i)) throw std::invalid_argument("DistanceMatrix: not symmetric");
      if (!std::isfinite(d_(i, j))) throw std::invalid_argument("DistanceMatrix: non-finite entry");
    }
  }
}

DistanceMatrix pairwise_sq_euclidean_serial(const Matrix& z) {
  const int n = z.rows();
  if (n < 2) throw std::invalid_argument("pairwise_sq_euclidean: need at least 2 rows");
  Matrix d(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double s = 0.0;
      const double* zi = z.row(i);
      const double* zj = z.row(j);
      for (int c = 0; c < z.cols(); ++c) {
        const double diff = zi[c] - zj[c];
        s += diff * diff;
      }
      d(i, j) = s;
      d(j, i) = s;
    }
  }
  return DistanceMatrix(std::move(d));
}

DistanceMatrix pairwise_sq_euclidean(const Matrix& z) {
  const int n = z.rows();
  if (n < 2) throw std::invalid_argument("pairwise_sq_euclidean: need at least 2 rows");
  Matrix d(n, n);
#pragma omp parallel for schedule(dynamic, 8) if (static_cast<long long>(n) * n * z.cols() > (1 << 16))
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double s = 0.0;
      const double* zi = z.row(i);
      const double* zj = z.row(j);
      for (int c = 0; c < z.cols(); ++c) {
        const double diff = zi[c] - zj[c];
        s += diff * diff;
      }
      d(i, j) = s;
    }
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) d(j, i) = d(i, j);
  return DistanceMatrix(std::move(d));
}

void GraphLearnConfig::validate(int n) const {
  if (k < 1) throw std::invalid_argument("GraphLearnConfig: k must be >= 1");
  if (r < 1) throw std::invalid_argument("GraphLearnConfig: r must be >= 1");
  if (alpha <= 0.0) throw std::invalid_argument("GraphLearnConfig: alpha must be > 0");
  if (beta < 0.0) throw std::invalid_argument("GraphLearnConfig: beta must be >= 0");
  if (max_iters < 1) throw std::invalid_argument("GraphLearnConfig: max_iters must be >= 1");
  if (static_cast<long long>(k) * r >= n) {
    throw std::invalid_argument("GraphLearnConfig: k*r must be < node count");
  }
}

EdgeSet restrict_edge_set(const DistanceMatrix& d, int k, int r) {
  const int n = d.n();
  const long long kr = static_cast<long long>(k) * r;
  if (k < 1 || r < 1) throw std::invalid_argument("restrict_edge_set: k and r must be >= 1");
  if (kr >= n) throw std::invalid_argument("restrict_edge_set: k*r must be < node count");
  std::vector<std::vector<bool>> present(n, std::vector<bool>(n, false));
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) {
    int m = 0;
    for (int j = 0; j < n; ++j)
      if (j != i) order[m++] = j;
    std::stable_sort(order.begin(), order.begin() + m,
                     [&](int a, int b) { return d(i, a) < d(i, b); });
    for (long long t = 0; t < kr; ++t) {
      const int j = order[t];
      present[std::min(i, j)][std::max(i, j)] = true;
    }
  }
  EdgeSet edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (present[i][j]) edges.emplace_back(i, j);
  return edges;
}

double graph_objective(const Graph& a, const DistanceMatrix& d, double alpha, double beta) {
  if (a.n() != d.n()) throw std::invalid_argument("graph_objective: size mismatch");
  double fidelity = 0.0, frob = 0.0;
  for (const WeightedEdge& e : a.edges()) {
    fidelity += 2.0 * e.w * d(e.i, e.j);
    frob += 2.0 * e.w * e.w;
  }
  double barrier = 0.0;
  for (double deg : a.weighted_degrees()) {
    if (deg <= 0.0) return kInf;
    barrier += std::log(deg);
  }
  return fidelity - alpha * barrier + beta * frob;
}

namespace {

struct EdgeProblem {
  int n = 0;
  EdgeSet edges;
  std::vector<double> dist;  // distance per edge
};

std::vector<double> degrees_of(const EdgeProblem& p, const std::vector<double>& w) {
  std::vector<double> deg(p.n, 0.0);
  for (std::size_t e = 0; e < p.edges.size(); ++e) {
    deg[p.edges[e].first] += w[e];
    deg[p.edges[e].second] += w[e];
  }
  return deg;
}

double edge_objective(const EdgeProblem& p, const std::vector<double>& w, double alpha,
                      double beta) {
  double fidelity = 0.0, frob = 0.0;
  for (std::size_t e = 0; e < w.size(); ++e) {
    fidelity += 2.0 * w[e] * p.dist[e];
    frob += 2.0 * w[e] * w[e];
  }
  double barrier = 0.0;
  for (double deg : degrees_of(p, w)) {
    if (deg <= 0.0) return kInf;
    barrier += std::log(deg);
  }
  return fidelity - alpha * barrier + beta * frob;
}

Graph graph_from_weights(const EdgeProblem& p, const std::vector<double>& w) {
  std::vector<WeightedEdge> kept;
  std::vector<double> best_w(p.n, 0.0);
  std::vector<int> best_e(p.n, -1);
  for (std::size_t e = 0; e < w.size(); ++e) {
    const auto [i, j] = p.edges[e];
    if (w[e] > best_w[i]) { best_w[i] = w[e]; best_e[i] = static_cast<int>(e); }
    if (w[e] > best_w[j]) { best_w[j] = w[e]; best_e[j] = static_cast<int>(e); }
    if (w[e] > Graph::kPruneEps) kept.push_back(WeightedEdge{i, j, w[e]});
  }
  // The log-degree barrier keeps every node attached; if pruning would
  // still isolate one, keep its heaviest incident edge.
  std::vector<bool> covered(p.n, false);
  for (const WeightedEdge& e : kept) {
    covered[e.i] = true;
    covered[e.j] = true;
  }
  for (int i = 0; i < p.n; ++i) {
    if (covered[i]) continue;
    if (best_e[i] < 0 || best_w[i] <= 0.0) {
      throw std::runtime_error("solve_graph_map: node " + std::to_string(i) +
                               " has no positive-weight candidate edge");
    }
    const auto [a, b] = p.edges[best_e[i]];
    kept.push_back(WeightedEdge{a, b, best_w[i]});
    covered[a] = true;
    covered[b] = true;
  }
  return Graph(p.n, std::move(kept), /*prune_eps=*/0.0);
}

/// Near-stationary warm start: per-node multipliers lambda_i from the
/// mean-field stationarity k l^2 - b_k l - 2ab = 0 over the k nearest
/// candidates, then w_e = max(0, (l_i + l_j - 2 d_e) / (4b)). Nodes left
/// without an edge get their nearest candidate at the isolated-pair
/// stationary weight. Strictly feasible (all degrees positive).
std::vector<double> warm_start(const EdgeProblem& p, double alpha, double beta, int target_k) {
  const double b = std::max(beta, 1e-12);
  std::vector<std::vector<std::pair<double, int>>> candidates(p.n);
  for (std::size_t e = 0; e < p.edges.size(); ++e) {
    candidates[p.edges[e].first].emplace_back(p.dist[e], static_cast<int>(e));
    candidates[p.edges[e].second].emplace_back(p.dist[e], static_cast<int>(e));
  }
  std::vector<double> lambda(p.n, 0.0);
  for (int i = 0; i < p.n; ++i) {
    std::sort(candidates[i].begin(), candidates[i].end());
    const int k = std::min<int>(std::max(target_k, 1), static_cast<int>(candidates[i].size()));
    double bk = 0.0;
    for (int t = 0; t < k; ++t) bk += candidates[i][t].first;
    lambda[i] = (bk + std::sqrt(bk * bk + 8.0 * k * alpha * b)) / (2.0 * k);
  }
  std::vector<double> w(p.edges.size(), 0.0);
  for (std::size_t e = 0; e < p.edges.size(); ++e) {
    const auto [i, j] = p.edges[e];
    w[e] = std::max(0.0, (lambda[i] + lambda[j] - 2.0 * p.dist[e]) / (4.0 * b));
  }
  for (int i = 0; i < p.n; ++i) {
    bool attached = false;
    for (const auto& [dist, e] : candidates[i]) attached |= w[e] > 0.0;
    if (attached || candidates[i].empty()) continue;
    const auto [dist, e] = candidates[i].front();
    w[e] = (-dist + std::sqrt(dist * dist + 4.0 * alpha * b)) / (4.0 * b);
  }
  return w;
}

GraphSolveResult solve_on_problem(const EdgeProblem& p, double alpha, double beta, int max_iters,
                                  double rel_tol, int target_k) {
  const std::size_t m = p.edges.size();
  if (m == 0) throw std::invalid_argument("solve_graph_map: empty permissible edge set");

  // Operator norm bound for S (edge weights -> degrees):
  // ||S||^2 <= 2 * max incident candidate count.
  std::vector<int> incident(p.n, 0);
  for (const auto& [i, j] : p.edges) {
    ++incident[i];
    ++incident[j];
  }
  const int max_inc = *std::max_element(incident.begin(), incident.end());
  const double lip = 4.0 * beta + std::sqrt(2.0 * static_cast<double>(max_inc));
  const double gamma = 0.9 / lip;

  std::vector<double> w = warm_start(p, alpha, beta, target_k);
  std::vector<double> v(p.n, 0.0);
  std::vector<double> wt(m), vt(p.n), fw(m), deg(p.n), degt(p.n);
  deg = degrees_of(p, w);
  for (int i = 0; i < p.n; ++i) v[i] = -alpha / deg[i];

  GraphSolveResult result;
  std::vector<double> best_w = w;
  double best_obj = edge_objective(p, w, alpha, beta);  // feasible by construction
  double prev_obj = best_obj;
  bool converged = false;
  int iter = 0;

  for (iter = 1; iter <= max_iters; ++iter) {
    // forward step
    deg = degrees_of(p, w);
    for (std::size_t e = 0; e < m; ++e) {
      const auto [i, j] = p.edges[e];
      fw[e] = 4.0 * beta * w[e] + v[i] + v[j];  // grad of smooth part + S' v
    }
    // prox steps: nonnegativity with the linear fidelity term on the
    // primal, conjugate of the log barrier on the dual
    for (std::size_t e = 0; e < m; ++e) {
      wt[e] = std::max(0.0, w[e] - gamma * (fw[e] + 2.0 * p.dist[e]));
    }
    for (int i = 0; i < p.n; ++i) {
      const double z = v[i] + gamma * deg[i];
      vt[i] = 0.5 * (z - std::sqrt(z * z + 4.0 * alpha * gamma));
    }
    // correction step
    degt = degrees_of(p, wt);
    for (std::size_t e = 0; e < m; ++e) {
      const auto [i, j] = p.edges[e];
      const double fwt = 4.0 * beta * wt[e] + vt[i] + vt[j];
      w[e] = wt[e] + gamma * (fw[e] - fwt);
    }
    for (int i = 0; i < p.n; ++i) {
      v[i] = vt[i] + gamma * (degt[i] - deg[i]);
    }

    // progress is measured on the feasible (post-prox) iterate; the
    // corrected w may dip slightly below zero
    const double obj = edge_objective(p, wt, alpha, beta);
    if (obj < best_obj) {
      best_obj = obj;
      best_w = wt;
    }
    result.trace.push_back(SolverTracePoint{iter, obj, best_obj});
    if (std::isfinite(obj) && std::isfinite(prev_obj)) {
      if (std::abs(obj - prev_obj) <= rel_tol * std::max(1.0, std::abs(obj))) {
        converged = true;
        break;
      }
    }
    prev_obj = obj;
  }

  result.converged = converged;
  result.iterations = std::min(iter, max_iters);
  result.objective = best_obj;
  result.graph = graph_from_weights(p, best_w);
  return result;
}

double mean_over_edges(const DistanceMatrix& d, const EdgeSet& edges) {
  if (edges.empty()) return 0.0;
  double s = 0.0;
  for (const auto& [i, j] : edges) s += d(i, j);
  return s / static_cast<double>(edges.size());
}

}  // namespace

GraphSolveResult solve_graph_map_on_edges(const DistanceMatrix& d, const EdgeSet& edges,
                                          const GraphLearnConfig& cfg) {
  EdgeProblem p;
  p.n = d.n();
  p.edges = edges;
  p.dist.reserve(edges.size());
  for (const auto& [i, j] : edges) {
    if (i < 0 || j >= p.n || i >= j) throw std::invalid_argument("solve_graph_map: bad edge pair");
    p.dist.push_back(d(i, j));
  }
  return solve_on_problem(p, cfg.alpha, cfg.beta, cfg.max_iters, cfg.rel_tol, cfg.k);
}

GraphSolveResult solve_graph_map(const DistanceMatrix& d, const GraphLearnConfig& cfg) {
  cfg.validate(d.n());
  EdgeSet edges = restrict_edge_set(d, cfg.k, cfg.r);
  if (!cfg.auto_calibrate) return solve_graph_map_on_edges(d, edges, cfg);

  // Standardize over the permissible set for conditioning, then rescale
  // so alpha = beta = 1 lands near the target degree.
  Matrix scaled = d.matrix();
  const double mean = mean_over_edges(d, edges);
  if (mean > 0.0) scaled = scale(scaled, 1.0 / mean);
  DistanceMatrix calibrated = calibrate_scale(DistanceMatrix(std::move(scaled)), cfg.k);

  GraphLearnConfig unit = cfg;
  unit.alpha = 1.0;
  unit.beta = 1.0;
  return solve_graph_map_on_edges(calibrated, edges, unit);
}

DistanceMatrix calibrate_scale(const DistanceMatrix& d, int k) {
  const int n = d.n();
  if (k < 1 || k >= n) throw std::invalid_argument("calibrate_scale: need 1 <= k < n");

  // Per-node bounds on a global distance scale theta that make the
  // stationarity condition w_e = (a/deg_i + a/deg_j - 2 theta d_e)/(4b)
  // select ~k neighbors at alpha = beta = 1. Under deg_i ~ deg_j the
  // exact-k window is
  //   theta in sqrt(2) * [1/sqrt(k d_(k+1)^2 - b_k d_(k+1)),
  //                       1/sqrt(k d_(k)^2  - b_k d_(k))],
  // with b_k the sum of the k smallest distances from the node.
  double log_sum = 0.0;
  int counted = 0;
  std::vector<double> row(n - 1);
  for (int i = 0; i < n; ++i) {
    int m = 0;
    for (int j = 0; j < n; ++j)
      if (j != i) row[m++] = d(i, j);
    std::sort(row.begin(), row.end());
    double bk = 0.0;
    for (int t = 0; t < k; ++t) bk += row[t];
    const double dk = row[k - 1];
    const double dk1 = k < n - 1 ? row[k] : -1.0;

    const double up_den = k * dk * dk - bk * dk;
    const double lo_den = dk1 >= 0.0 ? k * dk1 * dk1 - bk * dk1 : -1.0;
    const double theta_up = up_den > 0.0 ? 1.0 / std::sqrt(up_den) : kInf;
    const double theta_lo = lo_den > 0.0 ? 1.0 / std::sqrt(lo_den) : kInf;

    double theta_i;
    if (std::isfinite(theta_lo) && std::isfinite(theta_up)) {
      theta_i = std::sqrt(theta_lo * theta_up);
    } else if (std::isfinite(theta_lo)) {
      theta_i = theta_lo;
    } else if (std::isfinite(theta_up)) {
      theta_i = theta_up;
    } else {
      continue;  // node swamped by duplicates; any scale gives it >= k neighbors
    }
    log_sum += std::log(theta_i);
    ++counted;
  }
  if (counted == 0) return d;  // degenerate (e.g. all-zero) distances
  const double theta = std::sqrt(2.0) * std::exp(log_sum / counted);
  return DistanceMatrix(scale(d.matrix(), theta));
}

}  // namespace milgraph
