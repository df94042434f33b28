#include "milgraph/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace milgraph {

EncoderKind encoder_kind_from_string(const std::string& name) {
  if (name == "rff_pool") return EncoderKind::RffPool;
  if (name == "res_pool") return EncoderKind::ResPool;
  if (name == "deep_sets") return EncoderKind::DeepSets;
  if (name == "set_transformer") return EncoderKind::SetTransformer;
  throw std::invalid_argument("unknown encoder kind: " + name);
}

std::string to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::RffPool: return "rff_pool";
    case EncoderKind::ResPool: return "res_pool";
    case EncoderKind::DeepSets: return "deep_sets";
    case EncoderKind::SetTransformer: return "set_transformer";
  }
  return "?";
}

void EncoderConfig::validate() const {
  if (input_dim < 1) throw std::invalid_argument("EncoderConfig: input_dim must be >= 1");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw std::invalid_argument("EncoderConfig: dropout_rate must be in [0, 1)");
  }
  switch (kind) {
    case EncoderKind::RffPool:
    case EncoderKind::ResPool:
      if (hidden.empty()) throw std::invalid_argument("EncoderConfig: hidden layers required");
      break;
    case EncoderKind::DeepSets:
      if (bag_hidden.empty() && instance_hidden.empty()) break;  // identity nets are allowed
      break;
    case EncoderKind::SetTransformer:
      if (attention_dim < 1 || attention_heads < 1 || pma_seeds < 1) {
        throw std::invalid_argument("EncoderConfig: bad set transformer dims");
      }
      if (attention_dim % attention_heads != 0) {
        throw std::invalid_argument("EncoderConfig: attention_dim must be divisible by heads");
      }
      break;
  }
  if (deep_supervision && kind != EncoderKind::RffPool) {
    throw std::invalid_argument("EncoderConfig: deep_supervision applies to rff_pool only");
  }
}

Matrix pool(const Matrix& instance_reps, Pooling mode) {
  if (instance_reps.rows() < 1) throw std::invalid_argument("pool: empty bag");
  const int n = instance_reps.rows(), d = instance_reps.cols();
  Matrix out(1, d);
  for (int j = 0; j < d; ++j) {
    switch (mode) {
      case Pooling::Sum:
      case Pooling::Mean: {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += instance_reps(i, j);
        out(0, j) = mode == Pooling::Sum ? s : s / n;
        break;
      }
      case Pooling::Max: {
        double best = instance_reps(0, j);
        for (int i = 1; i < n; ++i) best = std::max(best, instance_reps(i, j));
        out(0, j) = best;
        break;
      }
    }
  }
  return out;
}

namespace {

Matrix make_attention_matrix(int d, Rng& rng) {
  Matrix m(d, d);
  const double bound = std::sqrt(6.0 / (d + d));
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

AttentionParams make_attention(int d, int heads, Rng& rng) {
  AttentionParams p;
  p.heads = heads;
  p.wq = make_attention_matrix(d, rng);
  p.wk = make_attention_matrix(d, rng);
  p.wv = make_attention_matrix(d, rng);
  p.wo = make_attention_matrix(d, rng);
  return p;
}

SabParams make_sab(int d, int heads, Activation ff_act, Rng& rng) {
  SabParams p;
  p.attn = make_attention(d, heads, rng);
  p.ln1_gain = Matrix::constant(1, d, 1.0);
  p.ln1_bias = Matrix(1, d);
  p.ln2_gain = Matrix::constant(1, d, 1.0);
  p.ln2_bias = Matrix(1, d);
  p.ff = make_dense_layer(d, d, ff_act, rng);
  return p;
}

void check_attention(const Matrix& x, const AttentionParams& p, const char* op) {
  const int d = x.cols();
  if (p.wq.rows() != d || p.wq.cols() != d || p.wk.rows() != d || p.wv.rows() != d ||
      p.wo.rows() != d) {
    throw std::invalid_argument(std::string(op) + ": projection dims do not match input");
  }
  if (p.heads < 1 || d % p.heads != 0) {
    throw std::invalid_argument(std::string(op) + ": dim not divisible by heads");
  }
}

Matrix softmax_rows_plain(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i) {
    const double* r = x.row(i);
    double mx = r[0];
    for (int j = 1; j < x.cols(); ++j) mx = std::max(mx, r[j]);
    double z = 0.0;
    for (int j = 0; j < x.cols(); ++j) z += std::exp(r[j] - mx);
    for (int j = 0; j < x.cols(); ++j) out(i, j) = std::exp(r[j] - mx) / z;
  }
  return out;
}

Matrix slice_cols_plain(const Matrix& x, int c0, int c1) {
  Matrix out(x.rows(), c1 - c0);
  for (int i = 0; i < x.rows(); ++i)
    for (int j = c0; j < c1; ++j) out(i, j - c0) = x(i, j);
  return out;
}

}  // namespace

Matrix multihead_attention(const Matrix& queries, const Matrix& keys_values,
                           const AttentionParams& p) {
  if (queries.cols() != keys_values.cols()) {
    throw std::invalid_argument("multihead_attention: query/key dims disagree");
  }
  if (keys_values.rows() < 1) throw std::invalid_argument("multihead_attention: empty set");
  check_attention(queries, p, "multihead_attention");
  const int d = queries.cols();
  const int dh = d / p.heads;
  const Matrix q = matmul(queries, p.wq);
  const Matrix k = matmul(keys_values, p.wk);
  const Matrix v = matmul(keys_values, p.wv);
  Matrix o(queries.rows(), d);
  for (int h = 0; h < p.heads; ++h) {
    const Matrix qh = slice_cols_plain(q, h * dh, (h + 1) * dh);
    const Matrix kh = slice_cols_plain(k, h * dh, (h + 1) * dh);
    const Matrix vh = slice_cols_plain(v, h * dh, (h + 1) * dh);
    const Matrix attn = softmax_rows_plain(scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(dh)));
    const Matrix oh = matmul(attn, vh);
    for (int i = 0; i < oh.rows(); ++i)
      for (int j = 0; j < dh; ++j) o(i, h * dh + j) = oh(i, j);
  }
  return matmul(o, p.wo);
}

namespace {

Matrix layer_norm_plain(const Matrix& x, const Matrix& gain, const Matrix& bias) {
  constexpr double kEps = 1e-5;
  const int n = x.rows(), d = x.cols();
  Matrix out(n, d);
  for (int i = 0; i < n; ++i) {
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += x(i, j);
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (x(i, j) - mu) * (x(i, j) - mu);
    var /= d;
    const double inv = 1.0 / std::sqrt(var + kEps);
    for (int j = 0; j < d; ++j) out(i, j) = (x(i, j) - mu) * inv * gain(0, j) + bias(0, j);
  }
  return out;
}

}  // namespace

Matrix set_attention_block(const Matrix& x, const SabParams& p) {
  const Matrix a = layer_norm_plain(add(x, multihead_attention(x, x, p.attn)), p.ln1_gain,
                                    p.ln1_bias);
  return layer_norm_plain(add(a, dense_forward(p.ff, a)), p.ln2_gain, p.ln2_bias);
}

Matrix pma_pool(const Matrix& x, const Matrix& seeds, const AttentionParams& p) {
  if (x.rows() < 1) throw std::invalid_argument("pma_pool: empty set");
  return multihead_attention(seeds, x, p);
}

int Encoder::head_count() const {
  if (cfg.kind == EncoderKind::RffPool && cfg.deep_supervision) {
    return static_cast<int>(layers.size());
  }
  return 1;
}

std::vector<int> Encoder::head_dims() const {
  switch (cfg.kind) {
    case EncoderKind::RffPool:
      if (cfg.deep_supervision) {
        std::vector<int> dims;
        for (const DenseLayer& l : layers) dims.push_back(l.out_dim());
        return dims;
      }
      return {layers.back().out_dim()};
    case EncoderKind::ResPool:
      return {blocks.back().main.out_dim()};
    case EncoderKind::DeepSets:
      return {bag_net.empty() ? (instance_net.empty() ? cfg.input_dim
                                                      : instance_net.back().out_dim())
                              : bag_net.back().out_dim()};
    case EncoderKind::SetTransformer:
      return {cfg.attention_dim};
  }
  return {};
}

void Encoder::collect_params(std::vector<Matrix*>& out) {
  auto add_dense = [&out](DenseLayer& l) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  };
  switch (cfg.kind) {
    case EncoderKind::RffPool:
      for (DenseLayer& l : layers) add_dense(l);
      break;
    case EncoderKind::ResPool:
      for (ResBlock& b : blocks) {
        add_dense(b.main);
        if (b.proj) add_dense(*b.proj);
      }
      break;
    case EncoderKind::DeepSets:
      for (DenseLayer& l : instance_net) add_dense(l);
      for (DenseLayer& l : bag_net) add_dense(l);
      break;
    case EncoderKind::SetTransformer:
      add_dense(st_embed);
      out.push_back(&sab.attn.wq);
      out.push_back(&sab.attn.wk);
      out.push_back(&sab.attn.wv);
      out.push_back(&sab.attn.wo);
      out.push_back(&sab.ln1_gain);
      out.push_back(&sab.ln1_bias);
      out.push_back(&sab.ln2_gain);
      out.push_back(&sab.ln2_bias);
      add_dense(sab.ff);
      out.push_back(&pma.wq);
      out.push_back(&pma.wk);
      out.push_back(&pma.wv);
      out.push_back(&pma.wo);
      out.push_back(&pma_seed_values);
      break;
  }
}

Encoder make_encoder(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  Encoder enc;
  enc.cfg = cfg;
  switch (cfg.kind) {
    case EncoderKind::RffPool: {
      int in = cfg.input_dim;
      for (int width : cfg.hidden) {
        enc.layers.push_back(make_dense_layer(in, width, cfg.activation, rng));
        in = width;
      }
      break;
    }
    case EncoderKind::ResPool: {
      int in = cfg.input_dim;
      for (int width : cfg.hidden) {
        ResBlock block;
        block.main = make_dense_layer(in, width, cfg.activation, rng);
        if (in != width) {
          block.proj = make_dense_layer(in, width, Activation::Identity, rng);
        }
        enc.blocks.push_back(std::move(block));
        in = width;
      }
      break;
    }
    case EncoderKind::DeepSets: {
      int in = cfg.input_dim;
      for (int width : cfg.instance_hidden) {
        enc.instance_net.push_back(make_dense_layer(in, width, cfg.activation, rng));
        in = width;
      }
      for (int width : cfg.bag_hidden) {
        enc.bag_net.push_back(make_dense_layer(in, width, cfg.activation, rng));
        in = width;
      }
      break;
    }
    case EncoderKind::SetTransformer: {
      enc.st_embed = make_dense_layer(cfg.input_dim, cfg.attention_dim, Activation::Identity, rng);
      enc.sab = make_sab(cfg.attention_dim, cfg.attention_heads, Activation::Relu, rng);
      enc.pma = make_attention(cfg.attention_dim, cfg.attention_heads, rng);
      enc.pma_seed_values = Matrix(cfg.pma_seeds, cfg.attention_dim);
      const double bound = std::sqrt(6.0 / (2.0 * cfg.attention_dim));
      for (std::size_t i = 0; i < enc.pma_seed_values.size(); ++i) {
        enc.pma_seed_values.data()[i] = rng.uniform(-bound, bound);
      }
      break;
    }
  }
  return enc;
}

std::vector<Matrix> encode_bag(const Encoder& enc, const Matrix& bag) {
  if (bag.rows() < 1) throw std::invalid_argument("encode_bag: empty bag");
  if (bag.cols() != enc.cfg.input_dim) {
    throw std::invalid_argument("encode_bag: bag has " + std::to_string(bag.cols()) +
                                " features, encoder expects " + std::to_string(enc.cfg.input_dim));
  }
  std::vector<Matrix> reps;
  switch (enc.cfg.kind) {
    case EncoderKind::RffPool: {
      Matrix h = bag;
      for (const DenseLayer& l : enc.layers) {
        h = dense_forward(l, h);
        if (enc.cfg.deep_supervision) reps.push_back(pool(h, enc.cfg.pooling));
      }
      if (!enc.cfg.deep_supervision) reps.push_back(pool(h, enc.cfg.pooling));
      break;
    }
    case EncoderKind::ResPool: {
      Matrix h = bag;
      for (const ResBlock& b : enc.blocks) {
        Matrix skip = b.proj ? dense_forward(*b.proj, h) : h;
        h = add(dense_forward(b.main, h), skip);
      }
      reps.push_back(pool(h, enc.cfg.pooling));
      break;
    }
    case EncoderKind::DeepSets: {
      Matrix h = bag;
      for (const DenseLayer& l : enc.instance_net) h = dense_forward(l, h);
      Matrix pooled = pool(h, enc.cfg.pooling);
      for (const DenseLayer& l : enc.bag_net) pooled = dense_forward(l, pooled);
      reps.push_back(std::move(pooled));
      break;
    }
    case EncoderKind::SetTransformer: {
      Matrix h = dense_forward(enc.st_embed, bag);
      h = set_attention_block(h, enc.sab);
      Matrix pooled = pma_pool(h, enc.pma_seed_values, enc.pma);
      if (pooled.rows() > 1) pooled = pool(pooled, Pooling::Mean);  // collapse multiple seeds
      reps.push_back(std::move(pooled));
      break;
    }
  }
  return reps;
}

bool encoder_is_rowwise(EncoderKind kind) { return kind != EncoderKind::SetTransformer; }

namespace {

struct StackedBags {
  Matrix instances;          // sum(n_i) x d
  std::vector<int> offsets;  // bag boundaries, size #bags+1
};

StackedBags stack_bags(const std::vector<Matrix>& bags, int expected_dim) {
  if (bags.empty()) throw std::invalid_argument("encode_dataset: no bags");
  StackedBags out;
  int total = 0;
  out.offsets.push_back(0);
  for (const Matrix& b : bags) {
    if (b.rows() < 1) throw std::invalid_argument("encode_dataset: empty bag");
    if (b.cols() != expected_dim) {
      throw std::invalid_argument("encode_dataset: bag feature dim mismatch");
    }
    total += b.rows();
    out.offsets.push_back(total);
  }
  out.instances = Matrix(total, expected_dim);
  int at = 0;
  for (const Matrix& b : bags) {
    for (int r = 0; r < b.rows(); ++r)
      for (int c = 0; c < b.cols(); ++c) out.instances(at + r, c) = b(r, c);
    at += b.rows();
  }
  return out;
}

Matrix pool_segments_plain(const Matrix& x, const std::vector<int>& offsets, Pooling mode) {
  const int segments = static_cast<int>(offsets.size()) - 1;
  const int d = x.cols();
  Matrix out(segments, d);
  for (int s = 0; s < segments; ++s) {
    const int lo = offsets[s], hi = offsets[s + 1];
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
          double best = x(lo, j);
          for (int i = lo + 1; i < hi; ++i) best = std::max(best, x(i, j));
          out(s, j) = best;
          break;
        }
      }
    }
  }
  return out;
}

}  // namespace

std::vector<Matrix> encode_dataset(const Encoder& enc, const std::vector<Matrix>& bags) {
  if (!encoder_is_rowwise(enc.cfg.kind)) {
    // attention mixes instances within a bag; encode bags one by one
    std::vector<Matrix> reps;
    const std::vector<int> dims = enc.head_dims();
    for (std::size_t h = 0; h < dims.size(); ++h) {
      reps.emplace_back(static_cast<int>(bags.size()), dims[h]);
    }
    for (std::size_t i = 0; i < bags.size(); ++i) {
      std::vector<Matrix> bag_reps = encode_bag(enc, bags[i]);
      for (std::size_t h = 0; h < bag_reps.size(); ++h)
        for (int j = 0; j < bag_reps[h].cols(); ++j)
          reps[h](static_cast<int>(i), j) = bag_reps[h](0, j);
    }
    return reps;
  }

  StackedBags stacked = stack_bags(bags, enc.cfg.input_dim);
  std::vector<Matrix> reps;
  switch (enc.cfg.kind) {
    case EncoderKind::RffPool: {
      Matrix h = std::move(stacked.instances);
      for (const DenseLayer& l : enc.layers) {
        h = dense_forward(l, h);
        if (enc.cfg.deep_supervision) {
          reps.push_back(pool_segments_plain(h, stacked.offsets, enc.cfg.pooling));
        }
      }
      if (!enc.cfg.deep_supervision) {
        reps.push_back(pool_segments_plain(h, stacked.offsets, enc.cfg.pooling));
      }
      break;
    }
    case EncoderKind::ResPool: {
      Matrix h = std::move(stacked.instances);
      for (const ResBlock& b : enc.blocks) {
        Matrix skip = b.proj ? dense_forward(*b.proj, h) : h;
        h = add(dense_forward(b.main, h), skip);
      }
      reps.push_back(pool_segments_plain(h, stacked.offsets, enc.cfg.pooling));
      break;
    }
    case EncoderKind::DeepSets: {
      Matrix h = std::move(stacked.instances);
      for (const DenseLayer& l : enc.instance_net) h = dense_forward(l, h);
      Matrix pooled = pool_segments_plain(h, stacked.offsets, enc.cfg.pooling);
      for (const DenseLayer& l : enc.bag_net) pooled = dense_forward(l, pooled);
      reps.push_back(std::move(pooled));
      break;
    }
    case EncoderKind::SetTransformer:
      break;  // handled above
  }
  return reps;
}

EmbeddingMatrix encode_bags(const Encoder& enc, const std::vector<Matrix>& bags) {
  if (bags.empty()) throw std::invalid_argument("encode_bags: no bags");
  EmbeddingMatrix z;
  z.values = encode_dataset(enc, bags).back();
  return z;
}

// --- tape path ---

BoundDense bind_dense(Tape& tape, DenseLayer& layer) {
  return BoundDense{tape.leaf(layer.weight), tape.leaf(layer.bias), layer.act};
}

Var dense_forward(Tape& tape, const BoundDense& layer, Var x) {
  return tape.apply(tape.add_row(tape.matmul(x, layer.w), layer.b), layer.act);
}

namespace {

BoundAttention bind_attention(Tape& tape, AttentionParams& p) {
  return BoundAttention{tape.leaf(p.wq), tape.leaf(p.wk), tape.leaf(p.wv), tape.leaf(p.wo),
                        p.heads};
}

BoundSab bind_sab(Tape& tape, SabParams& p) {
  BoundSab b;
  b.attn = bind_attention(tape, p.attn);
  b.ln1_gain = tape.leaf(p.ln1_gain);
  b.ln1_bias = tape.leaf(p.ln1_bias);
  b.ln2_gain = tape.leaf(p.ln2_gain);
  b.ln2_bias = tape.leaf(p.ln2_bias);
  b.ff = bind_dense(tape, p.ff);
  return b;
}

}  // namespace

BoundEncoder bind_encoder(Tape& tape, Encoder& enc) {
  BoundEncoder b;
  b.enc = &enc;
  switch (enc.cfg.kind) {
    case EncoderKind::RffPool:
      for (DenseLayer& l : enc.layers) b.layers.push_back(bind_dense(tape, l));
      break;
    case EncoderKind::ResPool:
      for (ResBlock& blk : enc.blocks) {
        std::optional<BoundDense> proj;
        BoundDense main = bind_dense(tape, blk.main);
        if (blk.proj) proj = bind_dense(tape, *blk.proj);
        b.blocks.emplace_back(main, proj);
      }
      break;
    case EncoderKind::DeepSets:
      for (DenseLayer& l : enc.instance_net) b.instance_net.push_back(bind_dense(tape, l));
      for (DenseLayer& l : enc.bag_net) b.bag_net.push_back(bind_dense(tape, l));
      break;
    case EncoderKind::SetTransformer:
      b.st_embed = bind_dense(tape, enc.st_embed);
      b.sab = bind_sab(tape, enc.sab);
      b.pma = bind_attention(tape, enc.pma);
      b.pma_seed_values = tape.leaf(enc.pma_seed_values);
      break;
  }
  return b;
}

void collect_vars(const BoundEncoder& b, std::vector<Var>& out) {
  auto add_dense = [&out](const BoundDense& d) {
    out.push_back(d.w);
    out.push_back(d.b);
  };
  switch (b.enc->cfg.kind) {
    case EncoderKind::RffPool:
      for (const BoundDense& l : b.layers) add_dense(l);
      break;
    case EncoderKind::ResPool:
      for (const auto& [main, proj] : b.blocks) {
        add_dense(main);
        if (proj) add_dense(*proj);
      }
      break;
    case EncoderKind::DeepSets:
      for (const BoundDense& l : b.instance_net) add_dense(l);
      for (const BoundDense& l : b.bag_net) add_dense(l);
      break;
    case EncoderKind::SetTransformer:
      add_dense(b.st_embed);
      out.push_back(b.sab.attn.wq);
      out.push_back(b.sab.attn.wk);
      out.push_back(b.sab.attn.wv);
      out.push_back(b.sab.attn.wo);
      out.push_back(b.sab.ln1_gain);
      out.push_back(b.sab.ln1_bias);
      out.push_back(b.sab.ln2_gain);
      out.push_back(b.sab.ln2_bias);
      add_dense(b.sab.ff);
      out.push_back(b.pma.wq);
      out.push_back(b.pma.wk);
      out.push_back(b.pma.wv);
      out.push_back(b.pma.wo);
      out.push_back(b.pma_seed_values);
      break;
  }
}

Var multihead_attention(Tape& tape, const BoundAttention& p, Var queries, Var keys_values) {
  const int d = tape.value(queries).cols();
  if (p.heads < 1 || d % p.heads != 0) {
    throw std::invalid_argument("multihead_attention: dim not divisible by heads");
  }
  const int dh = d / p.heads;
  Var q = tape.matmul(queries, p.wq);
  Var k = tape.matmul(keys_values, p.wk);
  Var v = tape.matmul(keys_values, p.wv);
  std::vector<Var> heads;
  for (int h = 0; h < p.heads; ++h) {
    Var qh = tape.slice_cols(q, h * dh, (h + 1) * dh);
    Var kh = tape.slice_cols(k, h * dh, (h + 1) * dh);
    Var vh = tape.slice_cols(v, h * dh, (h + 1) * dh);
    Var attn = tape.softmax_rows(
        tape.scale(tape.matmul(qh, tape.transpose(kh)), 1.0 / std::sqrt(dh)));
    heads.push_back(tape.matmul(attn, vh));
  }
  return tape.matmul(tape.concat_cols(heads), p.wo);
}

Var set_attention_block(Tape& tape, const BoundSab& p, Var x) {
  Var a = tape.layer_norm_rows(tape.add(x, multihead_attention(tape, p.attn, x, x)), p.ln1_gain,
                               p.ln1_bias);
  return tape.layer_norm_rows(tape.add(a, dense_forward(tape, p.ff, a)), p.ln2_gain, p.ln2_bias);
}

std::vector<Var> encode_dataset(Tape& tape, const BoundEncoder& enc,
                                const std::vector<Matrix>& bags) {
  const EncoderConfig& cfg = enc.enc->cfg;
  if (!encoder_is_rowwise(cfg.kind)) {
    std::vector<std::vector<Var>> per_head(enc.enc->head_count());
    for (const Matrix& bag : bags) {
      std::vector<Var> reps = encode_bag(tape, enc, tape.constant(bag));
      for (std::size_t h = 0; h < reps.size(); ++h) per_head[h].push_back(reps[h]);
    }
    std::vector<Var> out;
    for (const std::vector<Var>& rows : per_head) out.push_back(tape.concat_rows(rows));
    return out;
  }

  StackedBags stacked = stack_bags(bags, cfg.input_dim);
  Var h = tape.constant(std::move(stacked.instances));
  std::vector<Var> reps;
  switch (cfg.kind) {
    case EncoderKind::RffPool: {
      for (const BoundDense& l : enc.layers) {
        h = dense_forward(tape, l, h);
        if (cfg.deep_supervision) {
          reps.push_back(tape.pool_segments(h, stacked.offsets, cfg.pooling));
        }
      }
      if (!cfg.deep_supervision) {
        reps.push_back(tape.pool_segments(h, stacked.offsets, cfg.pooling));
      }
      break;
    }
    case EncoderKind::ResPool: {
      for (const auto& [main, proj] : enc.blocks) {
        Var skip = proj ? dense_forward(tape, *proj, h) : h;
        h = tape.add(dense_forward(tape, main, h), skip);
      }
      reps.push_back(tape.pool_segments(h, stacked.offsets, cfg.pooling));
      break;
    }
    case EncoderKind::DeepSets: {
      for (const BoundDense& l : enc.instance_net) h = dense_forward(tape, l, h);
      Var pooled = tape.pool_segments(h, stacked.offsets, cfg.pooling);
      for (const BoundDense& l : enc.bag_net) pooled = dense_forward(tape, l, pooled);
      reps.push_back(pooled);
      break;
    }
    case EncoderKind::SetTransformer:
      break;
  }
  return reps;
}

std::vector<Var> encode_bag(Tape& tape, const BoundEncoder& enc, Var instances) {
  const EncoderConfig& cfg = enc.enc->cfg;
  std::vector<Var> reps;
  switch (cfg.kind) {
    case EncoderKind::RffPool: {
      Var h = instances;
      for (const BoundDense& l : enc.layers) {
        h = dense_forward(tape, l, h);
        if (cfg.deep_supervision) reps.push_back(tape.pool_rows(h, cfg.pooling));
      }
      if (!cfg.deep_supervision) reps.push_back(tape.pool_rows(h, cfg.pooling));
      break;
    }
    case EncoderKind::ResPool: {
      Var h = instances;
      for (const auto& [main, proj] : enc.blocks) {
        Var skip = proj ? dense_forward(tape, *proj, h) : h;
        h = tape.add(dense_forward(tape, main, h), skip);
      }
      reps.push_back(tape.pool_rows(h, cfg.pooling));
      break;
    }
    case EncoderKind::DeepSets: {
      Var h = instances;
      for (const BoundDense& l : enc.instance_net) h = dense_forward(tape, l, h);
      Var pooled = tape.pool_rows(h, cfg.pooling);
      for (const BoundDense& l : enc.bag_net) pooled = dense_forward(tape, l, pooled);
      reps.push_back(pooled);
      break;
    }
    case EncoderKind::SetTransformer: {
      Var h = dense_forward(tape, enc.st_embed, instances);
      h = set_attention_block(tape, enc.sab, h);
      Var pooled = multihead_attention(tape, enc.pma, enc.pma_seed_values, h);
      if (tape.value(pooled).rows() > 1) pooled = tape.pool_rows(pooled, Pooling::Mean);
      reps.push_back(pooled);
      break;
    }
  }
  return reps;
}

}  // namespace milgraph
