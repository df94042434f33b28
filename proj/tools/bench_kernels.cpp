// Benchmark of the OpenMP kernels against their serial references:
// dense matmul, pairwise squared distances, and a GCN layer forward.
// Results must agree bitwise; only the wall time should differ.

#include <chrono>
#include <cstdio>

#include <omp.h>

#include "milgraph/graphcore.hpp"
#include "milgraph/graphlearn.hpp"
#include "milgraph/matrix.hpp"
#include "milgraph/rng.hpp"

using namespace milgraph;

namespace {

Matrix random_matrix(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  return m;
}

template <typename Fn>
double time_best_of(int reps, Fn&& fn) {
  double best = 1e100;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void report(const char* name, double serial_ms, double parallel_ms, bool identical) {
  std::printf("%-28s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx   %s\n", name,
              serial_ms, parallel_ms, serial_ms / parallel_ms,
              identical ? "bitwise equal" : "MISMATCH");
}

}  // namespace

int main() {
  std::printf("threads: %d\n\n", omp_get_max_threads());
  Rng rng(7);

  for (int n : {128, 256, 512}) {
    Matrix a = random_matrix(n, n, rng);
    Matrix b = random_matrix(n, n, rng);
    Matrix ref, fast;
    const double ts = time_best_of(3, [&] { ref = matmul_serial(a, b); });
    const double tp = time_best_of(3, [&] { fast = matmul(a, b); });
    char name[64];
    std::snprintf(name, sizeof(name), "matmul %dx%dx%d", n, n, n);
    report(name, ts, tp, max_abs_diff(ref, fast) == 0.0);
  }

  for (int n : {500, 1500}) {
    Matrix z = random_matrix(n, 64, rng);
    DistanceMatrix ref, fast;
    const double ts = time_best_of(3, [&] { ref = pairwise_sq_euclidean_serial(z); });
    const double tp = time_best_of(3, [&] { fast = pairwise_sq_euclidean(z); });
    char name[64];
    std::snprintf(name, sizeof(name), "pairwise dist n=%d d=64", n);
    report(name, ts, tp, max_abs_diff(ref.matrix(), fast.matrix()) == 0.0);
  }

  {
    const int n = 800;
    Rng init(3);
    GcnStack stack;
    stack.layers.push_back(make_dense_layer(64, 32, Activation::Relu, init));
    stack.layers.push_back(make_dense_layer(32, 2, Activation::Identity, init));
    Graph g = build_knn_graph(random_matrix(n, 4, rng), 8);
    NormalizedAdjacency adj = normalize_adjacency(g);
    Matrix z = random_matrix(n, 64, rng);
    Rng r1(0), r2(0);
    // the layer chain runs through matmul; serial route forced via matmul_serial
    Matrix fast, ref;
    const double tp = time_best_of(3, [&] { fast = gcn_forward(stack, adj, z, r1, false); });
    const double ts = time_best_of(3, [&] {
      Matrix h = z;
      for (const DenseLayer& layer : stack.layers) {
        h = matmul_serial(adj.matrix, h);
        h = apply_activation(layer.act,
                             add_row_broadcast(matmul_serial(h, layer.weight), layer.bias));
      }
      ref = h;
    });
    report("gcn forward n=800", ts, tp, max_abs_diff(ref, fast) == 0.0);
  }
  return 0;
}
