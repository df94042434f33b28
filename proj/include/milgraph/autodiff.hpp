#pragma once

#include <functional>
#include <vector>

#include "milgraph/matrix.hpp"
#include "milgraph/nn.hpp"
#include "milgraph/rng.hpp"

namespace milgraph {

enum class Pooling { Mean, Max, Sum };
Pooling pooling_from_string(const std::string& name);
std::string to_string(Pooling p);

/// Handle to a tape node.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Single-use reverse-mode tape over Matrix values. A training step
/// builds the graph, calls backward(loss) once, reads gradients off the
/// leaves, and discards the tape. Ops are evaluated eagerly; each node
/// stores its value plus a closure that routes the upstream gradient to
/// its parents.
class Tape {
 public:
  /// Untracked value: gradients do not flow into it.
  Var constant(Matrix value);
  /// Tracked leaf (parameter or input under test); grad readable after backward().
  Var leaf(const Matrix& value);

  const Matrix& value(Var v) const;
  const Matrix& grad(Var v) const;

  Var matmul(Var a, Var b);
  /// left is a fixed matrix (e.g. a normalized adjacency); out = left * r.
  Var premul(const Matrix& left, Var r);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var add_row(Var a, Var bias);  // bias: 1 x cols, broadcast over rows
  Var hadamard(Var a, Var b);
  Var scale(Var a, double c);
  Var apply(Var a, Activation act);
  Var transpose(Var a);
  Var softmax_rows(Var a);
  Var layer_norm_rows(Var x, Var gain, Var bias);  // eps = 1e-5
  Var dropout(Var a, double rate, Rng& rng, bool active);
  Var pool_rows(Var a, Pooling mode);  // n x d -> 1 x d
  /// Pools each row segment [offsets[i], offsets[i+1]) independently;
  /// offsets.front() == 0, offsets.back() == rows. Output: #segments x d.
  Var pool_segments(Var a, std::vector<int> offsets, Pooling mode);
  Var concat_rows(const std::vector<Var>& parts);
  Var slice_cols(Var a, int c0, int c1);
  Var concat_cols(const std::vector<Var>& parts);
  Var gather_rows(Var a, std::vector<int> indices);
  Var mean_of(const std::vector<Var>& scalars);

  // Fused scalar losses (1 x 1 nodes).
  Var cross_entropy_loss(Var logits, const std::vector<int>& labels);
  Var mse_loss(Var pred, const Matrix& target);

  /// Seeds d(loss)/d(loss) = 1 and propagates to all tracked nodes.
  void backward(Var scalar_loss);

  int node_count() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;  // allocated on first accumulation
    bool tracked = false;
    std::function<void(Tape&)> back;
  };

  int push(Matrix value, bool tracked, std::function<void(Tape&)> back);
  void accumulate(int id, const Matrix& g);
  bool tracked(Var v) const { return nodes_[v.id].tracked; }
  const Matrix& grad_of(int id) const { return nodes_[id].grad; }
  void check(Var v, const char* op) const;

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace milgraph
