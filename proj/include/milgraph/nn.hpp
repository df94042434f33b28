#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "milgraph/matrix.hpp"
#include "milgraph/rng.hpp"

namespace milgraph {

enum class Activation { Relu, Elu, Tanh, Identity };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation act);

double apply_activation(Activation act, double x);
// Derivative expressed from the pre-activation value.
double activation_derivative(Activation act, double pre);
Matrix apply_activation(Activation act, const Matrix& x);

/// Affine layer with elementwise activation: out = act(x W + b).
struct DenseLayer {
  Matrix weight;  // in_dim x out_dim
  Matrix bias;    // 1 x out_dim
  Activation act = Activation::Identity;

  int in_dim() const { return weight.rows(); }
  int out_dim() const { return weight.cols(); }
};

/// Glorot-uniform initialized layer: U(-sqrt(6/(fan_in+fan_out)), +...).
DenseLayer make_dense_layer(int in_dim, int out_dim, Activation act, Rng& rng);

Matrix dense_forward(const DenseLayer& layer, const Matrix& x);

enum class LossKind { CrossEntropy, Mse };

struct TrainingConfig {
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  int epochs = 200;
  LossKind loss = LossKind::CrossEntropy;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Inverted dropout. In train mode each entry is zeroed independently
/// with probability `rate` and survivors are scaled by 1/(1-rate), so
/// evaluation needs no rescaling. Outside train mode this is the exact
/// identity. Mask entries are addressed by rng counter, making the fill
/// order-independent.
Matrix dropout_apply(const Matrix& x, double rate, Rng& rng, bool train_mode);

/// Mean negative log softmax over rows, with the matching gradient.
/// Log-sum-exp stabilized.
struct LossResult {
  double loss = 0.0;
  Matrix grad;
};
LossResult loss_cross_entropy(const Matrix& logits, const std::vector<int>& labels);
LossResult loss_mse(const Matrix& pred, const Matrix& target);

/// Per-parameter Adam state (first/second moments, step count).
struct AdamState {
  Matrix m;
  Matrix v;
  long step = 0;
};

/// Standard Adam (beta1=0.9, beta2=0.999, eps=1e-8). Weight decay enters
/// the gradient as g + weight_decay * theta before the moment updates.
void adam_update(Matrix& param, const Matrix& grad, AdamState& state, const TrainingConfig& cfg);

/// Adam over a parameter list; states are created lazily on first step.
class AdamOptimizer {
 public:
  void step(std::span<Matrix* const> params, std::span<const Matrix> grads,
            const TrainingConfig& cfg);

 private:
  std::vector<AdamState> states_;
};

/// Central finite-difference check: perturbs every entry of every
/// parameter by +-h around its current value, re-evaluates `loss_fn`,
/// and returns max over entries of
/// |analytic - numeric| / max(1, |analytic|).
/// `loss_fn` must be deterministic given the parameter values.
double grad_check(const std::function<double()>& loss_fn, std::span<Matrix* const> params,
                  std::span<const Matrix> analytic_grads, double h = 1e-5);

}  // namespace milgraph
