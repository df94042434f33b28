#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "milgraph/encoders.hpp"
#include "testutil.hpp"

using namespace milgraph;
using test::random_matrix;

namespace {

Matrix permute_rows(const Matrix& x, const std::vector<int>& perm) {
  Matrix out(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < x.cols(); ++j) out(i, j) = x(perm[i], j);
  return out;
}

std::vector<int> random_permutation(int n, Rng& rng) {
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
    std::swap(perm[i], perm[j]);
  }
  return perm;
}

EncoderConfig small_config(EncoderKind kind, int input_dim) {
  EncoderConfig cfg;
  cfg.kind = kind;
  cfg.input_dim = input_dim;
  cfg.hidden = {7, 5};
  cfg.activation = Activation::Tanh;
  cfg.pooling = Pooling::Mean;
  cfg.instance_hidden = {6};
  cfg.bag_hidden = {5, 4};
  cfg.attention_dim = 8;
  cfg.attention_heads = 2;
  cfg.pma_seeds = 1;
  return cfg;
}

double encoder_grad_check(Encoder& enc, const Matrix& bag) {
  std::vector<Matrix*> params;
  enc.collect_params(params);
  const Matrix target(1, enc.head_dims().back());

  auto loss_plain = [&] {
    return loss_mse(encode_bag(enc, bag).back(), target).loss;
  };
  Tape tape;
  BoundEncoder bound = bind_encoder(tape, enc);
  Var loss = tape.mse_loss(encode_bag(tape, bound, tape.constant(bag)).back(), target);
  tape.backward(loss);
  std::vector<Var> vars;
  collect_vars(bound, vars);
  REQUIRE(vars.size() == params.size());
  std::vector<Matrix> grads;
  for (Var v : vars) grads.push_back(tape.grad(v));
  return grad_check(loss_plain, std::span<Matrix* const>(params.data(), params.size()),
                    std::span<const Matrix>(grads.data(), grads.size()));
}

}  // namespace

TEST_CASE("pool examples") {
  Matrix x = Matrix::from_rows({{1.0, 2.0}, {3.0, 4.0}});
  Matrix mean = pool(x, Pooling::Mean);
  CHECK(mean(0, 0) == 2.0);
  CHECK(mean(0, 1) == 3.0);
  Matrix mx = pool(x, Pooling::Max);
  CHECK(mx(0, 0) == 3.0);
  CHECK(mx(0, 1) == 4.0);
  Matrix sum = pool(x, Pooling::Sum);
  CHECK(sum(0, 0) == 4.0);
  CHECK(sum(0, 1) == 6.0);

  Matrix single = Matrix::from_rows({{5.0, -1.0}});
  for (Pooling mode : {Pooling::Mean, Pooling::Max, Pooling::Sum}) {
    CHECK(max_abs_diff(pool(single, mode), single) == 0.0);
  }
  CHECK_THROWS(pool(Matrix(0, 3), Pooling::Mean));
}

TEST_CASE("every encoder is invariant to instance order within a bag") {
  Rng rng(7);
  for (EncoderKind kind : {EncoderKind::RffPool, EncoderKind::ResPool, EncoderKind::DeepSets,
                           EncoderKind::SetTransformer}) {
    EncoderConfig cfg = small_config(kind, 4);
    Rng init = rng.fork(static_cast<int>(kind));
    Encoder enc = make_encoder(cfg, init);
    Matrix bag = random_matrix(9, 4, rng);
    std::vector<int> perm = random_permutation(9, rng);
    Matrix rep = encode_bag(enc, bag).back();
    Matrix rep_perm = encode_bag(enc, permute_rows(bag, perm)).back();
    CHECK(max_abs_diff(rep, rep_perm) < 1e-9);
  }
}

TEST_CASE("bag-order equivariance and constant output width across cardinalities") {
  Rng rng(19);
  EncoderConfig cfg = small_config(EncoderKind::DeepSets, 3);
  Encoder enc = make_encoder(cfg, rng);
  std::vector<Matrix> bags = {random_matrix(1, 3, rng), random_matrix(2, 3, rng),
                              random_matrix(40, 3, rng)};
  EmbeddingMatrix z = encode_bags(enc, bags);
  CHECK(z.values.rows() == 3);
  CHECK(z.values.cols() == 4);  // cfg.bag_hidden.back()

  std::vector<Matrix> swapped = {bags[2], bags[0], bags[1]};
  EmbeddingMatrix z2 = encode_bags(enc, swapped);
  for (int j = 0; j < z.values.cols(); ++j) {
    CHECK(z2.values(0, j) == z.values(2, j));
    CHECK(z2.values(1, j) == z.values(0, j));
    CHECK(z2.values(2, j) == z.values(1, j));
  }
}

TEST_CASE("deep sets with identity nets and sum pooling is a columnwise sum") {
  EncoderConfig cfg;
  cfg.kind = EncoderKind::DeepSets;
  cfg.input_dim = 3;
  cfg.instance_hidden = {};
  cfg.bag_hidden = {};
  cfg.pooling = Pooling::Sum;
  Rng rng(1);
  Encoder enc = make_encoder(cfg, rng);
  Matrix bag = Matrix::from_rows({{1.0, 2.0, 3.0}, {10.0, 20.0, 30.0}});
  Matrix rep = encode_bag(enc, bag).back();
  CHECK(rep(0, 0) == 11.0);
  CHECK(rep(0, 1) == 22.0);
  CHECK(rep(0, 2) == 33.0);
}

TEST_CASE("encoder input validation") {
  Rng rng(2);
  Encoder enc = make_encoder(small_config(EncoderKind::RffPool, 4), rng);
  CHECK_THROWS(encode_bag(enc, Matrix(0, 4)));
  CHECK_THROWS(encode_bag(enc, Matrix(3, 5)));
}

TEST_CASE("set attention block") {
  Rng rng(23);
  SabParams sab;
  sab.attn.heads = 2;
  sab.attn.wq = random_matrix(8, 8, rng, -0.4, 0.4);
  sab.attn.wk = random_matrix(8, 8, rng, -0.4, 0.4);
  sab.attn.wv = random_matrix(8, 8, rng, -0.4, 0.4);
  sab.attn.wo = random_matrix(8, 8, rng, -0.4, 0.4);
  sab.ln1_gain = Matrix::constant(1, 8, 1.0);
  sab.ln1_bias = Matrix(1, 8);
  sab.ln2_gain = Matrix::constant(1, 8, 1.0);
  sab.ln2_bias = Matrix(1, 8);
  Rng init(3);
  sab.ff = make_dense_layer(8, 8, Activation::Relu, init);

  SUBCASE("single-row input works and depends only on that row") {
    Matrix one = random_matrix(1, 8, rng);
    Matrix out = set_attention_block(one, sab);
    CHECK(out.rows() == 1);
    Matrix stacked(2, 8);
    for (int j = 0; j < 8; ++j) {
      stacked(0, j) = one(0, j);
      stacked(1, j) = rng.uniform(-1.0, 1.0);
    }
    // first row of a 2-row input differs (attention mixes the set),
    // while the 1-row result is a function of the single row alone
    Matrix again = set_attention_block(one, sab);
    CHECK(max_abs_diff(out, again) == 0.0);
  }
  SUBCASE("permutation equivariance") {
    Matrix x = random_matrix(6, 8, rng);
    std::vector<int> perm = random_permutation(6, rng);
    Matrix lhs = permute_rows(set_attention_block(x, sab), perm);
    Matrix rhs = set_attention_block(permute_rows(x, perm), sab);
    CHECK(max_abs_diff(lhs, rhs) < 1e-9);
  }
  SUBCASE("head divisibility enforced") {
    AttentionParams bad = sab.attn;
    bad.heads = 3;
    Matrix x = random_matrix(4, 8, rng);
    CHECK_THROWS(multihead_attention(x, x, bad));
  }
}

TEST_CASE("pma pool") {
  Rng rng(29);
  AttentionParams p;
  p.heads = 2;
  p.wq = random_matrix(8, 8, rng, -0.4, 0.4);
  p.wk = random_matrix(8, 8, rng, -0.4, 0.4);
  p.wv = random_matrix(8, 8, rng, -0.4, 0.4);
  p.wo = random_matrix(8, 8, rng, -0.4, 0.4);
  Matrix seeds = random_matrix(1, 8, rng);

  SUBCASE("invariant to row permutations of the set") {
    Matrix x = random_matrix(7, 8, rng);
    std::vector<int> perm = random_permutation(7, rng);
    Matrix a = pma_pool(x, seeds, p);
    Matrix b = pma_pool(permute_rows(x, perm), seeds, p);
    CHECK(max_abs_diff(a, b) < 1e-9);
  }
  SUBCASE("zeroed query/key projections degenerate to mean of value projections") {
    AttentionParams uniform = p;
    uniform.wq = Matrix(8, 8);
    uniform.wk = Matrix(8, 8);
    uniform.wo = Matrix::identity(8);
    Matrix x = random_matrix(5, 8, rng);
    Matrix expected = pool(matmul(x, uniform.wv), Pooling::Mean);
    Matrix got = pma_pool(x, seeds, uniform);
    CHECK(max_abs_diff(got, expected) < 1e-12);
  }
  SUBCASE("empty set rejected") {
    CHECK_THROWS(pma_pool(Matrix(0, 8), seeds, p));
  }
}

TEST_CASE("encoder gradients pass the finite-difference check") {
  Rng rng(31);
  for (EncoderKind kind : {EncoderKind::RffPool, EncoderKind::ResPool, EncoderKind::DeepSets,
                           EncoderKind::SetTransformer}) {
    EncoderConfig cfg = small_config(kind, 4);
    Rng init = rng.fork(100 + static_cast<int>(kind));
    Encoder enc = make_encoder(cfg, init);
    Matrix bag = random_matrix(5, 4, rng);
    CHECK_MESSAGE(encoder_grad_check(enc, bag) < 1e-4, "kind=", to_string(kind));
  }
}

TEST_CASE("deep supervision exposes one representation per hidden layer") {
  EncoderConfig cfg = small_config(EncoderKind::RffPool, 4);
  cfg.deep_supervision = true;
  Rng rng(5);
  Encoder enc = make_encoder(cfg, rng);
  CHECK(enc.head_count() == 2);
  std::vector<Matrix> reps = encode_bag(enc, random_matrix(6, 4, rng));
  REQUIRE(reps.size() == 2);
  CHECK(reps[0].cols() == 7);
  CHECK(reps[1].cols() == 5);
}

TEST_CASE("batched dataset encoding matches the per-bag path bitwise") {
  Rng rng(41);
  for (EncoderKind kind : {EncoderKind::RffPool, EncoderKind::ResPool, EncoderKind::DeepSets,
                           EncoderKind::SetTransformer}) {
    EncoderConfig cfg = small_config(kind, 4);
    if (kind == EncoderKind::RffPool) cfg.deep_supervision = true;
    cfg.pooling = Pooling::Max;
    Rng init = rng.fork(300 + static_cast<int>(kind));
    Encoder enc = make_encoder(cfg, init);
    std::vector<Matrix> bags;
    for (int i = 0; i < 5; ++i) {
      bags.push_back(random_matrix(1 + static_cast<int>(rng.next_below(6)), 4, rng));
    }
    std::vector<Matrix> batched = encode_dataset(enc, bags);
    REQUIRE(static_cast<int>(batched.size()) == enc.head_count());
    for (std::size_t i = 0; i < bags.size(); ++i) {
      std::vector<Matrix> reps = encode_bag(enc, bags[i]);
      for (std::size_t h = 0; h < reps.size(); ++h) {
        for (int j = 0; j < reps[h].cols(); ++j) {
          CHECK(batched[h](static_cast<int>(i), j) == reps[h](0, j));
        }
      }
    }
    // tape batched path agrees too
    Tape tape;
    BoundEncoder bound = bind_encoder(tape, enc);
    std::vector<Var> taped = encode_dataset(tape, bound, bags);
    for (std::size_t h = 0; h < batched.size(); ++h) {
      CHECK(max_abs_diff(tape.value(taped[h]), batched[h]) == 0.0);
    }
  }
}

TEST_CASE("gradients flow correctly through the batched dataset path") {
  Rng rng(43);
  EncoderConfig cfg = small_config(EncoderKind::RffPool, 4);
  cfg.deep_supervision = true;
  cfg.pooling = Pooling::Max;  // exercises segment argmax routing
  Rng init(9);
  Encoder enc = make_encoder(cfg, init);
  std::vector<Matrix> bags = {random_matrix(3, 4, rng), random_matrix(5, 4, rng),
                              random_matrix(2, 4, rng)};
  std::vector<Matrix*> params;
  enc.collect_params(params);
  const Matrix t0(3, 7), t1(3, 5);

  auto plain = [&] {
    std::vector<Matrix> reps = encode_dataset(enc, bags);
    return 0.5 * (loss_mse(reps[0], t0).loss + loss_mse(reps[1], t1).loss);
  };
  Tape tape;
  BoundEncoder bound = bind_encoder(tape, enc);
  std::vector<Var> reps = encode_dataset(tape, bound, bags);
  Var loss = tape.mean_of({tape.mse_loss(reps[0], t0), tape.mse_loss(reps[1], t1)});
  tape.backward(loss);
  std::vector<Var> vars;
  collect_vars(bound, vars);
  std::vector<Matrix> grads;
  for (Var v : vars) grads.push_back(tape.grad(v));
  const double err = grad_check(plain, std::span<Matrix* const>(params.data(), params.size()),
                                std::span<const Matrix>(grads.data(), grads.size()));
  CHECK(err < 1e-4);
}

TEST_CASE("plain and tape encoder forwards agree") {
  Rng rng(37);
  for (EncoderKind kind : {EncoderKind::RffPool, EncoderKind::ResPool, EncoderKind::DeepSets,
                           EncoderKind::SetTransformer}) {
    Rng init = rng.fork(200 + static_cast<int>(kind));
    Encoder enc = make_encoder(small_config(kind, 4), init);
    Matrix bag = random_matrix(6, 4, rng);
    Matrix plain = encode_bag(enc, bag).back();
    Tape tape;
    BoundEncoder bound = bind_encoder(tape, enc);
    Matrix taped = tape.value(encode_bag(tape, bound, tape.constant(bag)).back());
    CHECK(max_abs_diff(plain, taped) == 0.0);
  }
}
