#pragma once

#include <optional>
#include <vector>

#include "milgraph/autodiff.hpp"
#include "milgraph/matrix.hpp"
#include "milgraph/nn.hpp"

namespace milgraph {

enum class EncoderKind { RffPool, ResPool, DeepSets, SetTransformer };
EncoderKind encoder_kind_from_string(const std::string& name);
std::string to_string(EncoderKind kind);

struct EncoderConfig {
  EncoderKind kind = EncoderKind::RffPool;
  int input_dim = 0;
  // rff / res instance-net widths (res blocks keep one width)
  std::vector<int> hidden = {256, 128, 64};
  Activation activation = Activation::Relu;
  Pooling pooling = Pooling::Max;
  // dropout on head inputs; consumed by the model, not the encoder
  double dropout_rate = 0.5;
  bool deep_supervision = false;  // rff only: one head per hidden layer
  // deep sets
  std::vector<int> instance_hidden = {128, 128};
  std::vector<int> bag_hidden = {128, 64};
  // set transformer
  int attention_dim = 64;
  int attention_heads = 4;
  int pma_seeds = 1;

  void validate() const;
};

/// Columnwise mean/max/sum over instance rows (n_i x d -> 1 x d).
Matrix pool(const Matrix& instance_reps, Pooling mode);

/// Multihead attention projections; all d x d, d divisible by heads.
struct AttentionParams {
  Matrix wq, wk, wv, wo;
  int heads = 4;
};

/// Self-attention block with residuals and row layer normalization:
/// a = LN1(x + MHA(x, x)); out = LN2(a + relu(a W_ff + b_ff)).
struct SabParams {
  AttentionParams attn;
  Matrix ln1_gain, ln1_bias, ln2_gain, ln2_bias;  // 1 x d
  DenseLayer ff;
};

struct ResBlock {
  DenseLayer main;
  std::optional<DenseLayer> proj;  // learned projection when dims differ
};

/// Bag-level representation learner. Every kind maps an (n_i x d_x)
/// instance matrix to one or more fixed-width row vectors, invariant to
/// the instance order within the bag.
struct Encoder {
  EncoderConfig cfg;
  std::vector<DenseLayer> layers;  // rff
  std::vector<ResBlock> blocks;    // res
  std::vector<DenseLayer> instance_net, bag_net;  // deep sets
  DenseLayer st_embed;             // set transformer input projection
  SabParams sab;
  AttentionParams pma;
  Matrix pma_seed_values;          // m x d

  /// One representation per prediction head (deep supervision: one per
  /// hidden layer; otherwise a single final representation).
  int head_count() const;
  std::vector<int> head_dims() const;
  int embedding_dim() const { return head_dims().back(); }

  void collect_params(std::vector<Matrix*>& out);
};

Encoder make_encoder(const EncoderConfig& cfg, Rng& rng);

Matrix multihead_attention(const Matrix& queries, const Matrix& keys_values,
                           const AttentionParams& p);
Matrix set_attention_block(const Matrix& x, const SabParams& p);
/// Cross-attention from learnable seeds onto the set; invariant to row
/// permutations of x.
Matrix pma_pool(const Matrix& x, const Matrix& seeds, const AttentionParams& p);

/// Per-head representations of one bag (each 1 x d_h), deterministic.
std::vector<Matrix> encode_bag(const Encoder& enc, const Matrix& bag);

/// Row-wise encoders act on instances independently, so the whole
/// dataset can be stacked and encoded in one pass. Produces results
/// bitwise identical to the per-bag path with far fewer matmuls.
bool encoder_is_rowwise(EncoderKind kind);

/// Per-head representation matrices (#bags x d_h) over the dataset.
std::vector<Matrix> encode_dataset(const Encoder& enc, const std::vector<Matrix>& bags);

struct EmbeddingMatrix {
  Matrix values;  // |V| x d_z
  int dim() const { return values.cols(); }
};

/// Row i holds the final representation of bag i.
EmbeddingMatrix encode_bags(const Encoder& enc, const std::vector<Matrix>& bags);

// --- tape path (training) ---

struct BoundDense {
  Var w, b;
  Activation act = Activation::Identity;
};
Var dense_forward(Tape& tape, const BoundDense& layer, Var x);

struct BoundAttention {
  Var wq, wk, wv, wo;
  int heads = 4;
};
struct BoundSab {
  BoundAttention attn;
  Var ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  BoundDense ff;
};
struct BoundEncoder {
  const Encoder* enc = nullptr;
  std::vector<BoundDense> layers;
  std::vector<std::pair<BoundDense, std::optional<BoundDense>>> blocks;
  std::vector<BoundDense> instance_net, bag_net;
  BoundDense st_embed;
  BoundSab sab;
  BoundAttention pma;
  Var pma_seed_values;
};

BoundDense bind_dense(Tape& tape, DenseLayer& layer);
BoundEncoder bind_encoder(Tape& tape, Encoder& enc);
/// Parameter Vars of a bound encoder, in Encoder::collect_params order.
void collect_vars(const BoundEncoder& enc, std::vector<Var>& out);
Var multihead_attention(Tape& tape, const BoundAttention& p, Var queries, Var keys_values);
Var set_attention_block(Tape& tape, const BoundSab& p, Var x);
std::vector<Var> encode_bag(Tape& tape, const BoundEncoder& enc, Var instances);
/// Tape analogue of encode_dataset: one Var (#bags x d_h) per head.
std::vector<Var> encode_dataset(Tape& tape, const BoundEncoder& enc,
                                const std::vector<Matrix>& bags);

}  // namespace milgraph
