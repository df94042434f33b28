#include "milgraph/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace milgraph {

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "elu") return Activation::Elu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "identity") return Activation::Identity;
  throw std::invalid_argument("unknown activation: " + name);
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::Relu: return "relu";
    case Activation::Elu: return "elu";
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
  }
  return "?";
}

double apply_activation(Activation act, double x) {
  switch (act) {
    case Activation::Relu: return x > 0.0 ? x : 0.0;
    case Activation::Elu: return x > 0.0 ? x : std::expm1(x);
    case Activation::Tanh: return std::tanh(x);
    case Activation::Identity: return x;
  }
  return x;
}

double activation_derivative(Activation act, double pre) {
  switch (act) {
    case Activation::Relu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::Elu: return pre > 0.0 ? 1.0 : std::exp(pre);
    case Activation::Tanh: {
      double t = std::tanh(pre);
      return 1.0 - t * t;
    }
    case Activation::Identity: return 1.0;
  }
  return 1.0;
}

Matrix apply_activation(Activation act, const Matrix& x) {
  Matrix out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = apply_activation(act, out.data()[i]);
  return out;
}

DenseLayer make_dense_layer(int in_dim, int out_dim, Activation act, Rng& rng) {
  if (in_dim < 1 || out_dim < 1) throw std::invalid_argument("make_dense_layer: bad dims");
  DenseLayer layer;
  layer.weight = Matrix(in_dim, out_dim);
  layer.bias = Matrix(1, out_dim);
  layer.act = act;
  const double bound = std::sqrt(6.0 / (in_dim + out_dim));
  for (std::size_t i = 0; i < layer.weight.size(); ++i) {
    layer.weight.data()[i] = rng.uniform(-bound, bound);
  }
  return layer;
}

Matrix dense_forward(const DenseLayer& layer, const Matrix& x) {
  if (x.cols() != layer.in_dim()) {
    throw std::invalid_argument("dense_forward: input has " + std::to_string(x.cols()) +
                                " cols, layer expects " + std::to_string(layer.in_dim()));
  }
  return apply_activation(layer.act, add_row_broadcast(matmul(x, layer.weight), layer.bias));
}

void TrainingConfig::validate() const {
  if (learning_rate <= 0.0) throw std::invalid_argument("TrainingConfig: learning_rate must be > 0");
  if (weight_decay < 0.0) throw std::invalid_argument("TrainingConfig: weight_decay must be >= 0");
  if (epochs < 1) throw std::invalid_argument("TrainingConfig: epochs must be >= 1");
}

Matrix dropout_apply(const Matrix& x, double rate, Rng& rng, bool train_mode) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout_apply: rate must be in [0, 1)");
  if (!train_mode || rate == 0.0) return x;
  Matrix out = x;
  const std::uint64_t base = rng.reserve(out.size());
  const double keep_scale = 1.0 / (1.0 - rate);
  const long long n = static_cast<long long>(out.size());
#pragma omp parallel for schedule(static) if (n > (1 << 14))
  for (long long i = 0; i < n; ++i) {
    const double u = Rng::to_double(rng.at(base + static_cast<std::uint64_t>(i)));
    out.data()[i] = u < rate ? 0.0 : out.data()[i] * keep_scale;
  }
  return out;
}

LossResult loss_cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
  if (static_cast<int>(labels.size()) != logits.rows()) {
    throw std::invalid_argument("loss_cross_entropy: one label per row required");
  }
  const int n = logits.rows(), c = logits.cols();
  LossResult res;
  res.grad = Matrix(n, c);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= c) {
      throw std::invalid_argument("loss_cross_entropy: label " + std::to_string(labels[i]) +
                                  " out of range for " + std::to_string(c) + " classes");
    }
    const double* row = logits.row(i);
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    total += lse - row[labels[i]];
    double* g = res.grad.row(i);
    for (int j = 0; j < c; ++j) g[j] = std::exp(row[j] - lse) / n;
    g[labels[i]] -= 1.0 / n;
  }
  res.loss = total / n;
  return res;
}

LossResult loss_mse(const Matrix& pred, const Matrix& target) {
  if (!pred.same_shape(target)) {
    throw std::invalid_argument("loss_mse: shape mismatch " + pred.shape_string() + " vs " +
                                target.shape_string());
  }
  const double n = static_cast<double>(pred.size());
  LossResult res;
  res.grad = Matrix(pred.rows(), pred.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data()[i] - target.data()[i];
    total += d * d;
    res.grad.data()[i] = 2.0 * d / n;
  }
  res.loss = total / n;
  return res;
}

namespace {
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;
}  // namespace

void adam_update(Matrix& param, const Matrix& grad, AdamState& state, const TrainingConfig& cfg) {
  if (!param.same_shape(grad)) throw std::invalid_argument("adam_update: param/grad shape mismatch");
  if (state.step == 0) {
    state.m = Matrix(param.rows(), param.cols());
    state.v = Matrix(param.rows(), param.cols());
  }
  if (!state.m.same_shape(param)) throw std::invalid_argument("adam_update: state shape mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.data()[i] + cfg.weight_decay * param.data()[i];
    state.m.data()[i] = kBeta1 * state.m.data()[i] + (1.0 - kBeta1) * g;
    state.v.data()[i] = kBeta2 * state.v.data()[i] + (1.0 - kBeta2) * g * g;
    const double mhat = state.m.data()[i] / bc1;
    const double vhat = state.v.data()[i] / bc2;
    param.data()[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + kEps);
  }
}

void AdamOptimizer::step(std::span<Matrix* const> params, std::span<const Matrix> grads,
                         const TrainingConfig& cfg) {
  if (params.size() != grads.size()) throw std::invalid_argument("AdamOptimizer: param/grad count mismatch");
  if (states_.empty()) states_.resize(params.size());
  if (states_.size() != params.size()) throw std::invalid_argument("AdamOptimizer: parameter count changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam_update(*params[i], grads[i], states_[i], cfg);
  }
}

double grad_check(const std::function<double()>& loss_fn, std::span<Matrix* const> params,
                  std::span<const Matrix> analytic_grads, double h) {
  if (h <= 0.0) throw std::invalid_argument("grad_check: h must be > 0");
  if (params.size() != analytic_grads.size()) {
    throw std::invalid_argument("grad_check: param/grad count mismatch");
  }
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& theta = *params[p];
    const Matrix& g = analytic_grads[p];
    if (!theta.same_shape(g)) throw std::invalid_argument("grad_check: grad shape mismatch");
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double saved = theta.data()[i];
      theta.data()[i] = saved + h;
      const double up = loss_fn();
      theta.data()[i] = saved - h;
      const double down = loss_fn();
      theta.data()[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw std::runtime_error("grad_check: non-finite loss during perturbation");
      }
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = g.data()[i];
      const double rel = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace milgraph
