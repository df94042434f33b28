#include "milgraph/graphcore.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace milgraph {

Graph::Graph(int n, std::vector<WeightedEdge> edges, double prune_eps) : n_(n) {
  if (n < 0) throw std::invalid_argument("Graph: negative node count");
  std::map<std::pair<int, int>, double> canon;
  for (const WeightedEdge& e : edges) {
    int a = e.i, b = e.j;
    if (a == b) throw std::invalid_argument("Graph: self-loop at node " + std::to_string(a));
    if (a > b) std::swap(a, b);
    if (a < 0 || b >= n) throw std::invalid_argument("Graph: edge id out of range");
    if (e.w < 0.0) throw std::invalid_argument("Graph: negative edge weight");
    if (!std::isfinite(e.w)) throw std::invalid_argument("Graph: non-finite edge weight");
    canon[{a, b}] = e.w;  // duplicates: last wins
  }
  edges_.reserve(canon.size());
  for (const auto& [key, w] : canon) {
    if (w <= prune_eps) continue;
    edges_.push_back(WeightedEdge{key.first, key.second, w});
  }
}

Matrix Graph::dense_adjacency() const {
  Matrix a(n_, n_);
  for (const WeightedEdge& e : edges_) {
    a(e.i, e.j) = e.w;
    a(e.j, e.i) = e.w;
  }
  return a;
}

std::vector<double> Graph::weighted_degrees() const {
  std::vector<double> deg(n_, 0.0);
  for (const WeightedEdge& e : edges_) {
    deg[e.i] += e.w;
    deg[e.j] += e.w;
  }
  return deg;
}

std::vector<int> Graph::neighbor_counts() const {
  std::vector<int> cnt(n_, 0);
  for (const WeightedEdge& e : edges_) {
    ++cnt[e.i];
    ++cnt[e.j];
  }
  return cnt;
}

double Graph::mean_degree() const {
  if (n_ == 0) return 0.0;
  return 2.0 * static_cast<double>(edges_.size()) / n_;
}

bool Graph::has_isolated_node() const {
  const std::vector<int> cnt = neighbor_counts();
  return std::any_of(cnt.begin(), cnt.end(), [](int c) { return c == 0; });
}

NormalizedAdjacency normalize_adjacency(const Graph& g) {
  const int n = g.n();
  Matrix a = g.dense_adjacency();
  for (int i = 0; i < n; ++i) a(i, i) += 1.0;
  std::vector<double> dinv(n);
  for (int i = 0; i < n; ++i) {
    double deg = 0.0;
    for (int j = 0; j < n; ++j) deg += a(i, j);
    dinv[i] = 1.0 / std::sqrt(deg);
  }
  NormalizedAdjacency out;
  out.n = n;
  out.matrix = Matrix(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out.matrix(i, j) = dinv[i] * a(i, j) * dinv[j];
  return out;
}

namespace {

Graph knn_from_distance_rows(const Matrix& d, int k) {
  const int n = d.rows();
  if (k < 1) throw std::invalid_argument("build_knn_graph: k must be >= 1");
  if (k >= n) throw std::invalid_argument("build_knn_graph: k must be < node count");
  std::vector<WeightedEdge> edges;
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) {
    int m = 0;
    for (int j = 0; j < n; ++j)
      if (j != i) order[m++] = j;
    // ties broken by lowest index: stable sort on distance
    std::stable_sort(order.begin(), order.begin() + m,
                     [&](int a, int b) { return d(i, a) < d(i, b); });
    for (int t = 0; t < k; ++t) {
      int j = order[t];
      edges.push_back(WeightedEdge{std::min(i, j), std::max(i, j), 1.0});
    }
  }
  return Graph(n, std::move(edges));
}

}  // namespace

Graph build_knn_graph_from_distances(const Matrix& sq_distances, int k) {
  if (sq_distances.rows() != sq_distances.cols()) {
    throw std::invalid_argument("build_knn_graph: distance matrix must be square");
  }
  return knn_from_distance_rows(sq_distances, k);
}

Graph build_knn_graph(const Matrix& points, int k) {
  const int n = points.rows();
  Matrix d(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (int c = 0; c < points.cols(); ++c) {
        const double diff = points(i, c) - points(j, c);
        s += diff * diff;
      }
      d(i, j) = s;
      d(j, i) = s;
    }
  }
  return knn_from_distance_rows(d, k);
}

Matrix gcn_forward(const GcnStack& stack, const NormalizedAdjacency& adj, const Matrix& z,
                   Rng& rng, bool stochastic) {
  if (stack.layers.empty()) throw std::invalid_argument("gcn_forward: empty stack");
  if (adj.n != z.rows()) throw std::invalid_argument("gcn_forward: adjacency/input row mismatch");
  Matrix h = z;
  for (const DenseLayer& layer : stack.layers) {
    h = dropout_apply(h, stack.dropout_rate, rng, stochastic);
    h = matmul(adj.matrix, h);
    h = dense_forward(layer, h);
  }
  return h;
}

BoundGcnStack bind_gcn_stack(Tape& tape, GcnStack& stack) {
  BoundGcnStack bound;
  bound.stack = &stack;
  for (DenseLayer& layer : stack.layers) {
    bound.layer_params.emplace_back(tape.leaf(layer.weight), tape.leaf(layer.bias));
  }
  return bound;
}

Var gcn_forward(Tape& tape, const BoundGcnStack& bound, const Matrix* adj, Var z, Rng& rng,
                bool stochastic) {
  Var h = z;
  for (std::size_t l = 0; l < bound.layer_params.size(); ++l) {
    h = tape.dropout(h, bound.stack->dropout_rate, rng, stochastic);
    if (adj != nullptr) h = tape.premul(*adj, h);
    h = tape.apply(tape.add_row(tape.matmul(h, bound.layer_params[l].first),
                                bound.layer_params[l].second),
                   bound.stack->layers[l].act);
  }
  return h;
}

}  // namespace milgraph
