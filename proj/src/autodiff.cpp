#include "milgraph/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace milgraph {

Pooling pooling_from_string(const std::string& name) {
  if (name == "mean") return Pooling::Mean;
  if (name == "max") return Pooling::Max;
  if (name == "sum") return Pooling::Sum;
  throw std::invalid_argument("unknown pooling: " + name);
}

std::string to_string(Pooling p) {
  switch (p) {
    case Pooling::Mean: return "mean";
    case Pooling::Max: return "max";
    case Pooling::Sum: return "sum";
  }
  return "?";
}

int Tape::push(Matrix value, bool tracked, std::function<void(Tape&)> back) {
  nodes_.push_back(Node{std::move(value), Matrix(), tracked, std::move(back)});
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::check(Var v, const char* op) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
    throw std::invalid_argument(std::string(op) + ": invalid Var");
  }
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.tracked) return;
  if (n.grad.empty()) {
    n.grad = g;
  } else {
    n.grad = milgraph::add(n.grad, g);
  }
}

Var Tape::constant(Matrix value) { return Var{push(std::move(value), false, nullptr)}; }

Var Tape::leaf(const Matrix& value) { return Var{push(value, true, nullptr)}; }

const Matrix& Tape::value(Var v) const {
  check(v, "value");
  return nodes_[v.id].value;
}

const Matrix& Tape::grad(Var v) const {
  check(v, "grad");
  if (!backward_done_) throw std::logic_error("Tape::grad: backward() not run");
  const Node& n = nodes_[v.id];
  if (n.grad.empty()) {
    // Tracked node that the loss does not depend on: zero gradient.
    const_cast<Node&>(n).grad = Matrix(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

Var Tape::matmul(Var a, Var b) {
  check(a, "matmul");
  check(b, "matmul");
  Matrix out = milgraph::matmul(value(a), value(b));
  bool tr = tracked(a) || tracked(b);
  int ai = a.id, bi = b.id;
  int self = push(std::move(out), tr, nullptr);
  if (tr) {
    nodes_[self].back = [ai, bi, self](Tape& t) {
      const Matrix& g = t.grad_of(self);
      t.accumulate(ai, milgraph::matmul(g, milgraph::transpose(t.nodes_[bi].value)));
      t.accumulate(bi, milgraph::matmul(milgraph::transpose(t.nodes_[ai].value), g));
    };
  }
  return Var{self};
}

Var Tape::premul(const Matrix& left, Var r) {
  check(r, "premul");
  Matrix out = milgraph::matmul(left, value(r));
  bool tr = tracked(r);
  int ri = r.id;
  Matrix left_t = milgraph::transpose(left);
  int self = push(std::move(out), tr, nullptr);
  if (tr) {
    nodes_[self].back = [ri, self, left_t = std::move(left_t)](Tape& t) {
      t.accumulate(ri, milgraph::matmul(left_t, t.grad_of(self)));
    };
  }
  return Var{self};
}

Var Tape::add(Var a, Var b) {
  check(a, "add");
  check(b, "add");
  Matrix out = milgraph::add(value(a), value(b));
  bool tr = tracked(a) || tracked(b);
  int ai = a.id, bi = b.id;
  int self = push(std::move(out), tr, nullptr);
  if (tr) {
    nodes_[self].back = [ai, bi, self](Tape& t) {
      t.accumulate(ai, t.grad_of(self));
      t.accumulate(bi, t.grad_of(self));
    };
  }
  return Var{self};
}

Var Tape::sub(Var a, Var b) {
  check(a, "sub");
  check(b, "sub");
  Matrix out = milgraph::sub(value(a), value(b));
  bool tr = tracked(a) || tracked(b);
  int ai = a.id, bi = b.id;
  int self = push(std::move(out), tr, nullptr);
  if (tr) {
    nodes_[self].back = [ai, bi, self](Tape& t) {
      t.accumulate(ai, t.grad_of(self));
      t.accumulate(bi, milgraph::scale(t.grad_of(self), -1.0));
    };
  }
  return Var{self};
}

Var Tape::add_row(Var a, Var bias) {
  check(a, "add_row");
  check(bias, "add_row");
  Matrix out = add_row_broadcast(value(a), value(bias));
  bool tr = tracked(a) || tracked(bias);
  int ai = a.id, bi = bias.id;
  int self = push(std::move(out), tr, nullptr);
  if (tr) {
    nodes_[self].back = [ai, bi, self](Tape& t) {
      const Matrix& g = t.grad_of(self);
      t.accumulate(ai, g);
      Matrix gb(1, g.cols());
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
      t.accumulate(bi, gb);
    };
  }
  return Var{self};
}

Var Tape::hadamard(Var a, Var b) {
  check(a, "hadamard");
  check(b, "hadamard");
  Matrix out = milgraph::hadamard(value(a), value(b));
  bool tr = tracked(a) || tracked(b);
  int ai = a.id, bi = b.id;
  int self = push(std::move(out), tr, nullptr);
  if (tr) {
    nodes_[self].back = [ai, bi, self](Tape& t) {
      const Matrix& g = t.grad_of(self);
      t.accumulate(ai, milgraph::hadamard(g, t.nodes_[bi].value));
      t.accumulate(bi, milgraph::hadamard(g, t.nodes_[ai].value));
    };
  }
  return Var{self};
}

Var Tape::scale(Var a, double c) {
  check(a, "scale");
  Matrix out = milgraph::scale(value(a), c);
  bool tr = tracked(a);
  int ai = a.id;
  int self = push(std::move(out), tr, nullptr);
  if (tr) {
    nodes_[self].back = [ai, self, c](Tape& t) {
      t.accumulate(ai, milgraph::scale(t.grad_of(self), c));
    };
  }
  return Var{self};
}

Var Tape::apply(Var a, Activation act) {
  check(a, "apply");
  Matrix out = apply_activation(act, value(a));
  bool tr = tracked(a);
  int ai = a.id;
  int self = push(std::move(out), tr, nullptr);
  if (tr) {
    nodes_[self].back = [ai, self, act](Tape& t) {
      const Matrix& g = t.grad_of(self);
      const Matrix& pre = t.nodes_[ai].value;
      Matrix ga(pre.rows(), pre.cols());
      for (std::size_t i = 0; i < ga.size(); ++i) {
        ga.data()[i] = g.data()[i] * activation_derivative(act, pre.data()[i]);
      }
      t.accumulate(ai, ga);
    };
  }
  return Var{self};
}

Var Tape::transpose(Var a) {
  check(a, "transpose");
  Matrix out = milgraph::transpose(value(a));
  bool tr = tracked(a);
  int ai = a.id;
  int self = push(std::move(out), tr, nullptr);
  if (tr) {
    nodes_[self].back = [ai, self](Tape& t) {
      t.accumulate(ai, milgraph::transpose(t.grad_of(self)));
    };
  }
  return Var{self};
}

Var Tape::softmax_rows(Var a) {
  check(a, "softmax_rows");
  const Matrix& x = value(a);
  Matrix out(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i) {
    const double* r = x.row(i);
    double mx = r[0];
    for (int j = 1; j < x.cols(); ++j) mx = std::max(mx, r[j]);
    double z = 0.0;
    for (int j = 0; j < x.cols(); ++j) z += std::exp(r[j] - mx);
    for (int j = 0; j < x.cols(); ++j) out(i, j) = std::exp(r[j] - mx) / z;
  }
  bool tr = tracked(a);
  int ai = a.id;
  int self = push(std::move(out), tr, nullptr);
  if (tr) {
    nodes_[self].back = [ai, self](Tape& t) {
      const Matrix& g = t.grad_of(self);
      const Matrix& y = t.nodes_[self].value;
      Matrix ga(y.rows(), y.cols());
      for (int i = 0; i < y.rows(); ++i) {
        double dot = 0.0;
        for (int j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
        for (int j = 0; j < y.cols(); ++j) ga(i, j) = y(i, j) * (g(i, j) - dot);
      }
      t.accumulate(ai, ga);
    };
  }
  return Var{self};
}

Var Tape::layer_norm_rows(Var x, Var gain, Var bias) {
  check(x, "layer_norm_rows");
  check(gain, "layer_norm_rows");
  check(bias, "layer_norm_rows");
  constexpr double kEps = 1e-5;
  const Matrix& v = value(x);
  const Matrix& gn = value(gain);
  const Matrix& bs = value(bias);
  if (gn.rows() != 1 || gn.cols() != v.cols() || bs.rows() != 1 || bs.cols() != v.cols()) {
    throw std::invalid_argument("layer_norm_rows: gain/bias must be 1 x cols");
  }
  const int n = v.rows(), d = v.cols();
  Matrix xhat(n, d);
  std::vector<double> inv_std(n);
  for (int i = 0; i < n; ++i) {
    const double* r = v.row(i);
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += r[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (r[j] - mu) * (r[j] - mu);
    var /= d;
    inv_std[i] = 1.0 / std::sqrt(var + kEps);
    for (int j = 0; j < d; ++j) xhat(i, j) = (r[j] - mu) * inv_std[i];
  }
  Matrix out(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out(i, j) = xhat(i, j) * gn(0, j) + bs(0, j);
  bool tr = tracked(x) || tracked(gain) || tracked(bias);
  int xi = x.id, gi = gain.id, bi = bias.id;
  int self = push(std::move(out), tr, nullptr);
  if (tr) {
    nodes_[self].back = [xi, gi, bi, self, xhat = std::move(xhat),
                         inv_std = std::move(inv_std)](Tape& t) {
      const Matrix& g = t.grad_of(self);
      const Matrix& gnv = t.nodes_[gi].value;
      const int n = g.rows(), d = g.cols();
      Matrix gx(n, d), ggain(1, d), gbias(1, d);
      for (int i = 0; i < n; ++i) {
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (int j = 0; j < d; ++j) {
          const double dxh = g(i, j) * gnv(0, j);
          mean_dxhat += dxh;
          mean_dxhat_xhat += dxh * xhat(i, j);
          ggain(0, j) += g(i, j) * xhat(i, j);
          gbias(0, j) += g(i, j);
        }
        mean_dxhat /= d;
        mean_dxhat_xhat /= d;
        for (int j = 0; j < d; ++j) {
          const double dxh = g(i, j) * gnv(0, j);
          gx(i, j) = inv_std[i] * (dxh - mean_dxhat - xhat(i, j) * mean_dxhat_xhat);
        }
      }
      t.accumulate(xi, gx);
      t.accumulate(gi, ggain);
      t.accumulate(bi, gbias);
    };
  }
  return Var{self};
}

Var Tape::dropout(Var a, double rate, Rng& rng, bool active) {
  check(a, "dropout");
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (!active || rate == 0.0) return a;
  const Matrix& x = value(a);
  Matrix mask(x.rows(), x.cols());
  const std::uint64_t base = rng.reserve(mask.size());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask.data()[i] = Rng::to_double(rng.at(base + i)) < rate ? 0.0 : keep_scale;
  }
  Matrix out = milgraph::hadamard(x, mask);
  bool tr = tracked(a);
  int ai = a.id;
  int self = push(std::move(out), tr, nullptr);
  if (tr) {
    nodes_[self].back = [ai, self, mask = std::move(mask)](Tape& t) {
      t.accumulate(ai, milgraph::hadamard(t.grad_of(self), mask));
    };
  }
  return Var{self};
}

Var Tape::pool_rows(Var a, Pooling mode) {
  check(a, "pool_rows");
  const Matrix& x = value(a);
  if (x.rows() < 1) throw std::invalid_argument("pool_rows: empty input");
  const int n = x.rows(), d = x.cols();
  Matrix out(1, d);
  std::vector<int> argmax(mode == Pooling::Max ? d : 0, 0);
  for (int j = 0; j < d; ++j) {
    switch (mode) {
      case Pooling::Sum:
      case Pooling::Mean: {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += x(i, j);
        out(0, j) = mode == Pooling::Sum ? s : s / n;
        break;
      }
      case Pooling::Max: {
        int best = 0;
        for (int i = 1; i < n; ++i)
          if (x(i, j) > x(best, j)) best = i;  // ties keep the lowest index
        argmax[j] = best;
        out(0, j) = x(best, j);
        break;
      }
    }
  }
  bool tr = tracked(a);
  int ai = a.id;
  int self = push(std::move(out), tr, nullptr);
  if (tr) {
    nodes_[self].back = [ai, self, mode, n, argmax = std::move(argmax)](Tape& t) {
      const Matrix& g = t.grad_of(self);
      Matrix ga(n, g.cols());
      for (int j = 0; j < g.cols(); ++j) {
        switch (mode) {
          case Pooling::Sum:
            for (int i = 0; i < n; ++i) ga(i, j) = g(0, j);
            break;
          case Pooling::Mean:
            for (int i = 0; i < n; ++i) ga(i, j) = g(0, j) / n;
            break;
          case Pooling::Max:
            ga(argmax[j], j) = g(0, j);
            break;
        }
      }
      t.accumulate(ai, ga);
    };
  }
  return Var{self};
}

Var Tape::pool_segments(Var a, std::vector<int> offsets, Pooling mode) {
  check(a, "pool_segments");
  const Matrix& x = value(a);
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != x.rows()) {
    throw std::invalid_argument("pool_segments: offsets must span [0, rows]");
  }
  const int segments = static_cast<int>(offsets.size()) - 1;
  const int d = x.cols();
  Matrix out(segments, d);
  std::vector<int> argmax(mode == Pooling::Max ? static_cast<std::size_t>(segments) * d : 0, 0);
  for (int s = 0; s < segments; ++s) {
    const int lo = offsets[s], hi = offsets[s + 1];
    if (hi <= lo) throw std::invalid_argument("pool_segments: empty segment");
    for (int j = 0; j < d; ++j) {
      switch (mode) {
        case Pooling::Sum:
        case Pooling::Mean: {
          double acc = 0.0;
          for (int i = lo; i < hi; ++i) acc += x(i, j);
          out(s, j) = mode == Pooling::Sum ? acc : acc / (hi - lo);
          break;
        }
        case Pooling::Max: {
          int best = lo;
          for (int i = lo + 1; i < hi; ++i)
            if (x(i, j) > x(best, j)) best = i;  // ties keep the lowest index
          argmax[static_cast<std::size_t>(s) * d + j] = best;
          out(s, j) = x(best, j);
          break;
        }
      }
    }
  }
  bool tr = tracked(a);
  int ai = a.id;
  int rows = x.rows();
  int self = push(std::move(out), tr, nullptr);
  if (tr) {
    nodes_[self].back = [ai, self, mode, rows, offsets = std::move(offsets),
                         argmax = std::move(argmax)](Tape& t) {
      const Matrix& g = t.grad_of(self);
      const int d = g.cols();
      Matrix ga(rows, d);
      for (int s = 0; s + 1 < static_cast<int>(offsets.size()); ++s) {
        const int lo = offsets[s], hi = offsets[s + 1];
        for (int j = 0; j < d; ++j) {
          switch (mode) {
            case Pooling::Sum:
              for (int i = lo; i < hi; ++i) ga(i, j) = g(s, j);
              break;
            case Pooling::Mean:
              for (int i = lo; i < hi; ++i) ga(i, j) = g(s, j) / (hi - lo);
              break;
            case Pooling::Max:
              ga(argmax[static_cast<std::size_t>(s) * d + j], j) = g(s, j);
              break;
          }
        }
      }
      t.accumulate(ai, ga);
    };
  }
  return Var{self};
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  int total = 0, d = value(parts[0]).cols();
  bool tr = false;
  for (Var p : parts) {
    check(p, "concat_rows");
    if (value(p).cols() != d) throw std::invalid_argument("concat_rows: column mismatch");
    total += value(p).rows();
    tr = tr || tracked(p);
  }
  Matrix out(total, d);
  std::vector<int> ids(parts.size());
  std::vector<int> offsets(parts.size());
  int at = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    ids[k] = parts[k].id;
    offsets[k] = at;
    const Matrix& v = value(parts[k]);
    for (int i = 0; i < v.rows(); ++i)
      for (int j = 0; j < d; ++j) out(at + i, j) = v(i, j);
    at += v.rows();
  }
  int self = push(std::move(out), tr, nullptr);
  if (tr) {
    nodes_[self].back = [self, ids = std::move(ids), offsets = std::move(offsets)](Tape& t) {
      const Matrix& g = t.grad_of(self);
      for (std::size_t k = 0; k < ids.size(); ++k) {
        const Matrix& v = t.nodes_[ids[k]].value;
        Matrix gp(v.rows(), v.cols());
        for (int i = 0; i < v.rows(); ++i)
          for (int j = 0; j < v.cols(); ++j) gp(i, j) = g(offsets[k] + i, j);
        t.accumulate(ids[k], gp);
      }
    };
  }
  return Var{self};
}

Var Tape::slice_cols(Var a, int c0, int c1) {
  check(a, "slice_cols");
  const Matrix& x = value(a);
  if (c0 < 0 || c1 > x.cols() || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
  Matrix out(x.rows(), c1 - c0);
  for (int i = 0; i < x.rows(); ++i)
    for (int j = c0; j < c1; ++j) out(i, j - c0) = x(i, j);
  bool tr = tracked(a);
  int ai = a.id;
  int rows = x.rows(), cols = x.cols();
  int self = push(std::move(out), tr, nullptr);
  if (tr) {
    nodes_[self].back = [ai, self, c0, rows, cols](Tape& t) {
      const Matrix& g = t.grad_of(self);
      Matrix ga(rows, cols);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < g.cols(); ++j) ga(i, c0 + j) = g(i, j);
      t.accumulate(ai, ga);
    };
  }
  return Var{self};
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  int total = 0, n = value(parts[0]).rows();
  bool tr = false;
  for (Var p : parts) {
    check(p, "concat_cols");
    if (value(p).rows() != n) throw std::invalid_argument("concat_cols: row mismatch");
    total += value(p).cols();
    tr = tr || tracked(p);
  }
  Matrix out(n, total);
  std::vector<int> ids(parts.size());
  std::vector<int> offsets(parts.size());
  int at = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    ids[k] = parts[k].id;
    offsets[k] = at;
    const Matrix& v = value(parts[k]);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < v.cols(); ++j) out(i, at + j) = v(i, j);
    at += v.cols();
  }
  int self = push(std::move(out), tr, nullptr);
  if (tr) {
    nodes_[self].back = [self, ids = std::move(ids), offsets = std::move(offsets)](Tape& t) {
      const Matrix& g = t.grad_of(self);
      for (std::size_t k = 0; k < ids.size(); ++k) {
        const Matrix& v = t.nodes_[ids[k]].value;
        Matrix gp(v.rows(), v.cols());
        for (int i = 0; i < v.rows(); ++i)
          for (int j = 0; j < v.cols(); ++j) gp(i, j) = g(i, offsets[k] + j);
        t.accumulate(ids[k], gp);
      }
    };
  }
  return Var{self};
}

Var Tape::gather_rows(Var a, std::vector<int> indices) {
  check(a, "gather_rows");
  const Matrix& x = value(a);
  Matrix out(static_cast<int>(indices.size()), x.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= x.rows()) {
      throw std::invalid_argument("gather_rows: index out of range");
    }
    for (int j = 0; j < x.cols(); ++j) out(static_cast<int>(i), j) = x(indices[i], j);
  }
  bool tr = tracked(a);
  int ai = a.id;
  int rows = x.rows();
  int self = push(std::move(out), tr, nullptr);
  if (tr) {
    nodes_[self].back = [ai, self, rows, indices = std::move(indices)](Tape& t) {
      const Matrix& g = t.grad_of(self);
      Matrix ga(rows, g.cols());
      for (std::size_t i = 0; i < indices.size(); ++i)
        for (int j = 0; j < g.cols(); ++j) ga(indices[i], j) += g(static_cast<int>(i), j);
      t.accumulate(ai, ga);
    };
  }
  return Var{self};
}

Var Tape::mean_of(const std::vector<Var>& scalars) {
  if (scalars.empty()) throw std::invalid_argument("mean_of: no terms");
  bool tr = false;
  double total = 0.0;
  std::vector<int> ids(scalars.size());
  for (std::size_t k = 0; k < scalars.size(); ++k) {
    check(scalars[k], "mean_of");
    const Matrix& v = value(scalars[k]);
    if (v.rows() != 1 || v.cols() != 1) throw std::invalid_argument("mean_of: non-scalar term");
    total += v(0, 0);
    tr = tr || tracked(scalars[k]);
    ids[k] = scalars[k].id;
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(scalars.size());
  int self = push(std::move(out), tr, nullptr);
  if (tr) {
    nodes_[self].back = [self, ids = std::move(ids)](Tape& t) {
      const double g = t.grad_of(self)(0, 0) / static_cast<double>(ids.size());
      Matrix gp(1, 1);
      gp(0, 0) = g;
      for (int id : ids) t.accumulate(id, gp);
    };
  }
  return Var{self};
}

Var Tape::cross_entropy_loss(Var logits, const std::vector<int>& labels) {
  check(logits, "cross_entropy_loss");
  LossResult lr = milgraph::loss_cross_entropy(value(logits), labels);
  Matrix out(1, 1);
  out(0, 0) = lr.loss;
  bool tr = tracked(logits);
  int li = logits.id;
  int self = push(std::move(out), tr, nullptr);
  if (tr) {
    nodes_[self].back = [li, self, g0 = std::move(lr.grad)](Tape& t) {
      t.accumulate(li, milgraph::scale(g0, t.grad_of(self)(0, 0)));
    };
  }
  return Var{self};
}

Var Tape::mse_loss(Var pred, const Matrix& target) {
  check(pred, "mse_loss");
  LossResult lr = milgraph::loss_mse(value(pred), target);
  Matrix out(1, 1);
  out(0, 0) = lr.loss;
  bool tr = tracked(pred);
  int pi = pred.id;
  int self = push(std::move(out), tr, nullptr);
  if (tr) {
    nodes_[self].back = [pi, self, g0 = std::move(lr.grad)](Tape& t) {
      t.accumulate(pi, milgraph::scale(g0, t.grad_of(self)(0, 0)));
    };
  }
  return Var{self};
}

void Tape::backward(Var scalar_loss) {
  check(scalar_loss, "backward");
  if (backward_done_) throw std::logic_error("Tape::backward: already run");
  const Matrix& v = value(scalar_loss);
  if (v.rows() != 1 || v.cols() != 1) throw std::invalid_argument("backward: loss must be 1x1");
  backward_done_ = true;
  Matrix seed(1, 1);
  seed(0, 0) = 1.0;
  accumulate(scalar_loss.id, seed);
  for (int id = scalar_loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.tracked && !n.grad.empty() && n.back) n.back(*this);
  }
}

}  // namespace milgraph
