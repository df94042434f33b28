// Acceptance suite: one line per criterion, nonzero exit on any failure.
// Usage: acceptance [path-to-milgraph-cli]
// The MUSK1 criterion runs only when MILGRAPH_MUSK1 points at the
// converted bag JSONL file (or data/musk1.jsonl exists).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "milgraph/bayespipe.hpp"
#include "milgraph/evalkit.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

namespace fs = std::filesystem;
using namespace milgraph;
using test::make_clustered_dataset;
using test::random_matrix;

namespace {

std::string g_cli_binary;
int g_failures = 0;

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw Failure(message);
}

void run_criterion(int number, const std::string& name, const std::function<void()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[PASS] criterion %d: %s (%.1fs)\n", number, name.c_str(), secs);
  } catch (const Failure& f) {
    std::printf("[FAIL] criterion %d: %s: %s\n", number, name.c_str(), f.what());
    ++g_failures;
  } catch (const std::exception& e) {
    std::printf("[FAIL] criterion %d: %s: unexpected error: %s\n", number, name.c_str(), e.what());
    ++g_failures;
  }
  std::fflush(stdout);
}

void skip_criterion(int number, const std::string& name, const std::string& why) {
  std::printf("[SKIP] criterion %d: %s: %s\n", number, name.c_str(), why.c_str());
  std::fflush(stdout);
}

double elapsed_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- helpers

double check_params_fd(std::vector<Matrix*> params, const std::function<double()>& plain_loss,
                       const std::function<Var(Tape&, const std::vector<Var>&)>& build) {
  Tape tape;
  std::vector<Var> vars;
  for (Matrix* p : params) vars.push_back(tape.leaf(*p));
  Var loss = build(tape, vars);
  tape.backward(loss);
  std::vector<Matrix> grads;
  for (Var v : vars) grads.push_back(tape.grad(v));
  return grad_check(plain_loss, std::span<Matrix* const>(params.data(), params.size()),
                    std::span<const Matrix>(grads.data(), grads.size()));
}

double encoder_fd(Encoder& enc, const Matrix& bag) {
  std::vector<Matrix*> params;
  enc.collect_params(params);
  const Matrix target(1, enc.head_dims().back());
  auto plain = [&] { return loss_mse(encode_bag(enc, bag).back(), target).loss; };
  Tape tape;
  BoundEncoder bound = bind_encoder(tape, enc);
  Var loss = tape.mse_loss(encode_bag(tape, bound, tape.constant(bag)).back(), target);
  tape.backward(loss);
  std::vector<Var> vars;
  collect_vars(bound, vars);
  std::vector<Matrix> grads;
  for (Var v : vars) grads.push_back(tape.grad(v));
  return grad_check(plain, std::span<Matrix* const>(params.data(), params.size()),
                    std::span<const Matrix>(grads.data(), grads.size()));
}

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

std::vector<int> argmax_rows(const Matrix& probs) {
  std::vector<int> out(probs.rows());
  for (int i = 0; i < probs.rows(); ++i) {
    int best = 0;
    for (int j = 1; j < probs.cols(); ++j)
      if (probs(i, j) > probs(i, best)) best = j;
    out[i] = best;
  }
  return out;
}

EncoderConfig encoder_config_for(EncoderKind kind, int input_dim) {
  EncoderConfig cfg;
  cfg.kind = kind;
  cfg.input_dim = input_dim;
  cfg.hidden = {7, 5};
  cfg.activation = Activation::Tanh;
  cfg.pooling = Pooling::Mean;
  cfg.instance_hidden = {6};
  cfg.bag_hidden = {5};
  cfg.attention_dim = 8;
  cfg.attention_heads = 2;
  cfg.pma_seeds = 1;
  return cfg;
}

// --------------------------------------------------------------- criteria

// 1. Finite-difference gradient suite over >= 20 seeds, under 2 minutes.
void criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const EncoderKind kinds[] = {EncoderKind::RffPool, EncoderKind::ResPool, EncoderKind::DeepSets,
                               EncoderKind::SetTransformer};
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(4000 + seed);

    // dense layer + cross entropy; relu kept away from its kink
    {
      const int n = 3 + static_cast<int>(rng.next_below(3));
      const int din = 2 + static_cast<int>(rng.next_below(4));
      const int dout = 2 + static_cast<int>(rng.next_below(3));
      DenseLayer layer = make_dense_layer(din, dout, Activation::Relu, rng);
      Matrix x;
      bool clean = false;
      for (int attempt = 0; attempt < 50 && !clean; ++attempt) {
        x = random_matrix(n, din, rng);
        Matrix pre = add_row_broadcast(matmul(x, layer.weight), layer.bias);
        clean = true;
        for (std::size_t i = 0; i < pre.size(); ++i) clean &= std::abs(pre.data()[i]) > 1e-2;
      }
      require(clean, "could not place relu inputs away from the kink");
      std::vector<int> labels(n);
      for (int i = 0; i < n; ++i) labels[i] = static_cast<int>(rng.next_below(dout));
      auto plain = [&] { return loss_cross_entropy(dense_forward(layer, x), labels).loss; };
      std::vector<Matrix*> params = {&layer.weight, &layer.bias};
      const double err = check_params_fd(params, plain, [&](Tape& t, const std::vector<Var>& v) {
        Var pre = t.add_row(t.matmul(t.constant(x), v[0]), v[1]);
        return t.cross_entropy_loss(t.apply(pre, Activation::Relu), labels);
      });
      require(err < 1e-4, "dense+cross-entropy check at " + std::to_string(err));
    }
    // mse loss path
    {
      Matrix pred = random_matrix(3, 4, rng);
      Matrix target = random_matrix(3, 4, rng);
      std::vector<Matrix*> params = {&pred};
      auto plain = [&] { return loss_mse(pred, target).loss; };
      const double err = check_params_fd(params, plain, [&](Tape& t, const std::vector<Var>& v) {
        return t.mse_loss(v[0], target);
      });
      require(err < 1e-4, "mse check at " + std::to_string(err));
    }
    // one encoder per seed, rotating through all four kinds (SAB and PMA
    // gradients ride along with the set transformer)
    {
      const EncoderKind kind = kinds[seed % 4];
      Rng init = rng.fork(17);
      Encoder enc = make_encoder(encoder_config_for(kind, 4), init);
      Matrix bag = random_matrix(4 + static_cast<int>(rng.next_below(4)), 4, rng);
      const double err = encoder_fd(enc, bag);
      require(err < 1e-4, "encoder " + to_string(kind) + " check at " + std::to_string(err));
    }
    // two-layer GCN stack on a small graph
    {
      Rng init = rng.fork(23);
      GcnStack stack;
      stack.layers.push_back(make_dense_layer(3, 4, Activation::Tanh, init));
      stack.layers.push_back(make_dense_layer(4, 2, Activation::Identity, init));
      Graph g = build_knn_graph(random_matrix(5, 2, rng), 2);
      NormalizedAdjacency adj = normalize_adjacency(g);
      Matrix z = random_matrix(5, 3, rng);
      Matrix target = random_matrix(5, 2, rng);
      std::vector<Matrix*> params;
      for (DenseLayer& l : stack.layers) {
        params.push_back(&l.weight);
        params.push_back(&l.bias);
      }
      auto plain = [&] {
        Rng r(0);
        return loss_mse(gcn_forward(stack, adj, z, r, false), target).loss;
      };
      Tape tape;
      BoundGcnStack bound = bind_gcn_stack(tape, stack);
      Rng r(0);
      Var out = gcn_forward(tape, bound, &adj.matrix, tape.constant(z), r, false);
      Var loss = tape.mse_loss(out, target);
      tape.backward(loss);
      std::vector<Matrix> grads;
      for (const auto& [w, b] : bound.layer_params) {
        grads.push_back(tape.grad(w));
        grads.push_back(tape.grad(b));
      }
      const double err =
          grad_check(plain, std::span<Matrix* const>(params.data(), params.size()),
                     std::span<const Matrix>(grads.data(), grads.size()));
      require(err < 1e-4, "gcn stack check at " + std::to_string(err));
    }
  }
  require(elapsed_since(t0) < 120.0, "gradient suite exceeded 2 minutes");
}

// 2. Solver vs closed form and vs the projected-gradient oracle.
void criterion_solver_oracle() {
  GraphLearnConfig tight;
  tight.k = 1;
  tight.r = 1;
  tight.alpha = 1.0;
  tight.beta = 1.0;
  tight.max_iters = 200000;
  tight.rel_tol = 1e-13;
  tight.auto_calibrate = false;

  Matrix dm(2, 2);
  dm(0, 1) = dm(1, 0) = 1.0;
  GraphSolveResult two = solve_graph_map(DistanceMatrix(dm), tight);
  require(two.graph.edges().size() == 1, "two-node solve lost its edge");
  const double w = two.graph.edges()[0].w;
  require(std::abs(w - 0.5) <= 1e-4,
          "closed form w=0.5 violated: got " + std::to_string(w));

  int checked = 0;
  Rng rng(5000);
  for (int t = 0; t < 50; ++t) {
    const int n = 4 + static_cast<int>(rng.next_below(3));  // 4..6
    Matrix d(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        d(i, j) = rng.uniform(0.2, 2.0);
        d(j, i) = d(i, j);
      }
    DistanceMatrix dist(std::move(d));
    const double alpha = rng.uniform(0.5, 2.0);
    const double beta = rng.uniform(0.5, 2.0);
    GraphLearnConfig cfg = tight;
    cfg.k = n - 1;
    cfg.alpha = alpha;
    cfg.beta = beta;
    GraphSolveResult res = solve_graph_map(dist, cfg);
    EdgeSet es = restrict_edge_set(dist, n - 1, 1);
    const double oracle = test::projected_gradient_objective(dist, es, alpha, beta);
    const double rel = std::abs(res.objective - oracle) / std::abs(oracle);
    require(rel < 1e-3, "instance " + std::to_string(t) + " off oracle by " + std::to_string(rel));
    ++checked;
  }
  require(checked >= 50, "fewer than 50 oracle instances");
}

// 3. Degree calibration on 100 uniform 2-D points with k = 5.
void criterion_calibration() {
  Rng rng(41);
  Matrix pts = random_matrix(100, 2, rng, 0.0, 1.0);
  GraphLearnConfig cfg;
  cfg.k = 5;
  cfg.r = 3;
  cfg.auto_calibrate = true;
  cfg.max_iters = 5000;
  cfg.rel_tol = 1e-9;
  GraphSolveResult res = solve_graph_map(pairwise_sq_euclidean(pts), cfg);
  const double mean_degree = res.graph.mean_degree();
  require(mean_degree >= 2.5 && mean_degree <= 10.0,
          "mean degree " + std::to_string(mean_degree) + " outside [2.5, 10]");
  require(!res.graph.has_isolated_node(), "isolated node in the calibrated graph");
}

// 4. Permutation invariance/equivariance of encoders, GCN, and solver.
void criterion_permutation() {
  Rng rng(6000);
  // encoders: instance permutation within a bag
  for (EncoderKind kind : {EncoderKind::RffPool, EncoderKind::ResPool, EncoderKind::DeepSets,
                           EncoderKind::SetTransformer}) {
    Rng init = rng.fork(static_cast<int>(kind));
    Encoder enc = make_encoder(encoder_config_for(kind, 4), init);
    Matrix bag = random_matrix(9, 4, rng);
    std::vector<int> perm = random_permutation(9, rng);
    const double diff = max_abs_diff(encode_bag(enc, bag).back(),
                                     encode_bag(enc, permute_rows(bag, perm)).back());
    require(diff < 1e-9, to_string(kind) + " not permutation invariant: " + std::to_string(diff));
  }
  // GCN node relabeling
  {
    Rng init = rng.fork(100);
    GcnStack stack;
    stack.layers.push_back(make_dense_layer(3, 4, Activation::Tanh, init));
    stack.layers.push_back(make_dense_layer(4, 2, Activation::Identity, init));
    Graph g = build_knn_graph(random_matrix(6, 2, rng), 2);
    NormalizedAdjacency adj = normalize_adjacency(g);
    Matrix z = random_matrix(6, 3, rng);
    std::vector<int> perm = random_permutation(6, rng);
    Matrix pz = permute_rows(z, perm);
    Matrix pa(6, 6);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) pa(i, j) = adj.matrix(perm[i], perm[j]);
    Rng r1(0), r2(0);
    Matrix base = gcn_forward(stack, adj, z, r1, false);
    Matrix permuted = gcn_forward(stack, NormalizedAdjacency{6, pa}, pz, r2, false);
    double worst = 0.0;
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 2; ++j)
        worst = std::max(worst, std::abs(permuted(i, j) - base(perm[i], j)));
    require(worst < 1e-9, "gcn equivariance violated: " + std::to_string(worst));
  }
  // solver equivariance
  {
    const int n = 5;
    Matrix d(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        d(i, j) = rng.uniform(0.2, 2.0);
        d(j, i) = d(i, j);
      }
    std::vector<int> perm = random_permutation(n, rng);
    Matrix pd(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) pd(i, j) = d(perm[i], perm[j]);
    GraphLearnConfig cfg;
    cfg.k = n - 1;
    cfg.r = 1;
    cfg.max_iters = 200000;
    cfg.rel_tol = 1e-13;
    cfg.auto_calibrate = false;
    Matrix a = solve_graph_map(DistanceMatrix(d), cfg).graph.dense_adjacency();
    Matrix pa = solve_graph_map(DistanceMatrix(pd), cfg).graph.dense_adjacency();
    double worst = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        worst = std::max(worst, std::abs(pa(i, j) - a(perm[i], perm[j])));
    require(worst < 1e-9, "solver equivariance violated: " + std::to_string(worst));
  }
}

// 5. Pipeline-level oracles: identity adjacency and zero-dropout MC.
void criterion_pipeline_oracle() {
  Rng data_rng(47);
  BagDataset ds = make_clustered_dataset(20, 3, 1, 2.0, 1.0, data_rng);
  std::vector<int> train;
  for (int i = 0; i < 12; ++i) train.push_back(i);

  PipelineConfig cfg;
  cfg.model.encoder.kind = EncoderKind::RffPool;
  cfg.model.encoder.input_dim = 3;
  cfg.model.encoder.hidden = {8, 4};
  cfg.model.encoder.dropout_rate = 0.3;
  cfg.model.output_dim = 2;
  cfg.model.head_dropout = 0.3;
  cfg.training.learning_rate = 0.01;
  cfg.training.epochs = 20;
  cfg.mc.samples = 5;
  cfg.mc.dropout_rate = 0.3;

  PipelineConfig linear = cfg;
  linear.head = HeadKind::Linear;
  PipelineConfig empty = cfg;
  empty.head = HeadKind::GcnBayes;
  empty.force_empty_graph = true;
  PipelineResult a = run_pipeline(ds, train, nullptr, linear, Rng(59));
  PipelineResult b = run_pipeline(ds, train, nullptr, empty, Rng(59));
  require(max_abs_diff(a.predictive.mean, b.predictive.mean) == 0.0,
          "identity-adjacency pipeline deviates from the graph-free base model");

  Rng model_rng(61);
  MilModel model = make_model(cfg.model, LossKind::CrossEntropy, model_rng);
  Matrix det = predict_deterministic(model, ds, nullptr);
  for (int s : {1, 7, 50}) {
    McPredictConfig mc;
    mc.samples = s;
    mc.dropout_rate = 0.0;
    PredictiveDistribution pred = mc_predict(model, ds, nullptr, mc, Rng(67));
    require(max_abs_diff(pred.mean, det) == 0.0,
            "zero-dropout mc_predict deviates at S=" + std::to_string(s));
  }
}

// 6. Synthetic end-to-end comparison over 10 paired seeds, under 5 minutes.
void criterion_synthetic_end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  double base_sum = 0.0, bayes_sum = 0.0;
  for (int seed = 0; seed < 10; ++seed) {
    Rng data_rng(9000 + seed);
    BagDataset ds = make_clustered_dataset(200, 5, 2, 2.0, 3.5, data_rng, 3, 8);
    std::vector<int> train, test;
    for (int i = 0; i < ds.size(); ++i) (i % 2 == 0 ? train : test).push_back(i);

    PipelineConfig cfg;
    cfg.model.encoder.kind = EncoderKind::RffPool;
    cfg.model.encoder.input_dim = 5;
    cfg.model.encoder.hidden = {16, 8};
    cfg.model.encoder.activation = Activation::Relu;
    cfg.model.encoder.pooling = Pooling::Mean;
    cfg.model.encoder.dropout_rate = 0.5;
    cfg.model.output_dim = 2;
    cfg.model.head_dropout = 0.5;
    cfg.training.learning_rate = 0.01;
    cfg.training.weight_decay = 1e-3;
    cfg.training.epochs = 60;
    cfg.graph_learn.k = 5;
    cfg.graph_learn.r = 2;
    cfg.graph_learn.max_iters = 2000;
    cfg.graph_learn.rel_tol = 1e-8;
    cfg.mc.samples = 30;
    cfg.mc.dropout_rate = 0.5;

    auto evaluate = [&](HeadKind head) {
      PipelineConfig c = cfg;
      c.head = head;
      PipelineResult res = run_pipeline(ds, train, nullptr, c, Rng(100 + seed));
      std::vector<int> preds, truth;
      const std::vector<int> all = argmax_rows(res.predictive.mean);
      for (int i : test) {
        preds.push_back(all[i]);
        truth.push_back(static_cast<int>(*ds.bags[i].label));
      }
      return accuracy(preds, truth);
    };
    base_sum += evaluate(HeadKind::Linear);
    bayes_sum += evaluate(HeadKind::GcnBayes);
  }
  const double base_mean = base_sum / 10.0, bayes_mean = bayes_sum / 10.0;
  require(base_mean >= 0.80, "base accuracy " + std::to_string(base_mean) + " below 0.80");
  require(bayes_mean >= base_mean, "bayesian mean " + std::to_string(bayes_mean) +
                                       " below base mean " + std::to_string(base_mean));
  require(elapsed_since(t0) < 300.0, "synthetic end-to-end exceeded 5 minutes");
}

// 7. MUSK1 cross-validation (needs the converted dataset), under 15 minutes.
void criterion_musk1(const std::string& path) {
  const auto t0 = std::chrono::steady_clock::now();
  BagDataset raw = load_bags_jsonl(path, "categorical");
  require(raw.size() >= 80, "unexpected bag count " + std::to_string(raw.size()));
  BagDataset ds = standardize_features(raw, /*labeled_only=*/true);

  // supplementary table settings for MUSK1
  PipelineConfig cfg;
  cfg.model.encoder.kind = EncoderKind::RffPool;
  cfg.model.encoder.input_dim = ds.feature_dim;
  cfg.model.encoder.hidden = {256, 128, 64};
  cfg.model.encoder.activation = Activation::Relu;
  cfg.model.encoder.pooling = Pooling::Max;
  cfg.model.encoder.dropout_rate = 0.5;
  cfg.model.encoder.deep_supervision = true;
  cfg.model.output_dim = 2;
  cfg.model.head_dropout = 0.5;
  cfg.training.learning_rate = 5e-4;
  cfg.training.weight_decay = 5e-3;
  cfg.training.epochs = 200;
  cfg.graph_learn.k = 2;
  cfg.graph_learn.r = 1;
  cfg.graph_learn.max_iters = 2000;
  cfg.graph_learn.rel_tol = 1e-8;
  cfg.mc.samples = 50;
  cfg.mc.dropout_rate = 0.5;

  Rng split_rng = Rng(1).fork(1000);
  const auto plans = make_kfold_splits(ds.size(), 10, 1, split_rng);

  auto fold_accuracy = [&](HeadKind head, const std::vector<int>& train,
                           const std::vector<int>& test, const Rng& rng) {
    // hide the test labels from the pipeline
    BagDataset fold = ds;
    for (int i : test) fold.bags[i].label.reset();
    fold.finalize();
    fold.num_classes = 2;
    PipelineConfig c = cfg;
    c.head = head;
    PipelineResult res = run_pipeline(fold, train, nullptr, c, rng);
    std::vector<int> preds, truth;
    const std::vector<int> all = argmax_rows(res.predictive.mean);
    for (int i : test) {
      preds.push_back(all[i]);
      truth.push_back(static_cast<int>(*ds.bags[i].label));
    }
    return accuracy(preds, truth);
  };

  double base_sum = 0.0, bayes_sum = 0.0;
  int units = 0;
  Rng root(7);
  for (const auto& [train, test] : plans[0].folds) {
    Rng unit = root.fork(units);
    base_sum += fold_accuracy(HeadKind::Linear, train, test, unit);
    bayes_sum += fold_accuracy(HeadKind::GcnBayes, train, test, unit);
    ++units;
  }
  const double base_acc = base_sum / units;
  const double bayes_acc = bayes_sum / units;
  std::printf("       musk1: rFF+pool %.4f, B-rFF+pool-GCN %.4f\n", base_acc, bayes_acc);
  require(base_acc >= 0.80 && base_acc <= 0.95,
          "rFF+pool accuracy " + std::to_string(base_acc) + " outside [0.80, 0.95]");
  require(bayes_acc >= 0.82 && bayes_acc <= 0.96,
          "B-rFF+pool-GCN accuracy " + std::to_string(bayes_acc) + " outside [0.82, 0.96]");
  require(elapsed_since(t0) < 900.0, "musk1 run exceeded 15 minutes");
}

// 8. Exact Wilcoxon p-values against full sign enumeration.
void criterion_statistics() {
  WilcoxonResult fixed = wilcoxon_signed_rank({0.0, 0.0, 0.0}, {1.0, 2.0, 3.0});
  require(fixed.p_value == 0.125, "diffs [1,2,3] gave p=" + std::to_string(fixed.p_value));

  Rng rng(7000);
  for (int n = 1; n <= 10; ++n) {
    for (int t = 0; t < 20; ++t) {
      std::vector<double> a(n, 0.0), b(n);
      for (int i = 0; i < n; ++i) {
        double d = std::round(rng.uniform(-1.0, 1.0) * 4.0) / 4.0;  // ties likely
        if (d == 0.0) d = 0.25;
        b[i] = d;
      }
      const double via_impl = wilcoxon_signed_rank(a, b, Alternative::Greater).p_value;
      const double via_enum = test::wilcoxon_enumeration_p_greater(b);
      require(std::abs(via_impl - via_enum) < 1e-12,
              "n=" + std::to_string(n) + " mismatch: " + std::to_string(via_impl) + " vs " +
                  std::to_string(via_enum));
    }
  }
}

// 9. Byte-identical reruns of cmd_run from the same manifest.
void criterion_determinism() {
  require(!g_cli_binary.empty() && fs::exists(g_cli_binary),
          "milgraph CLI binary not found (pass its path as argv[1])");
  const fs::path dir = fs::temp_directory_path() / "milgraph_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);

  Rng data_rng(81);
  BagDataset ds = make_clustered_dataset(20, 3, 1, 2.0, 1.5, data_rng);
  save_bags_jsonl(ds, (dir / "bags.jsonl").string());

  auto config_for = [&](const std::string& out) {
    std::ostringstream os;
    os << "{\n"
       << "  \"seed\": 3,\n"
       << "  \"output_dir\": \"" << (dir / out).string() << "\",\n"
       << "  \"dataset\": { \"bags\": \"" << (dir / "bags.jsonl").string() << "\" },\n"
       << "  \"encoder\": { \"kind\": \"rff_pool\", \"hidden\": [8, 4], \"pooling\": \"mean\","
          " \"dropout\": 0.2 },\n"
       << "  \"head\": { \"kind\": \"gcn_bayes\" },\n"
       << "  \"graph_learn\": { \"k\": 2, \"r\": 2, \"max_iters\": 500, \"rel_tol\": 1e-7 },\n"
       << "  \"training\": { \"learning_rate\": 0.01, \"epochs\": 15, \"loss\":"
          " \"cross_entropy\" },\n"
       << "  \"protocol\": { \"kind\": \"kfold\", \"folds\": 4, \"trials\": 1 },\n"
       << "  \"mc\": { \"samples\": 4, \"dropout\": 0.2 }\n"
       << "}\n";
    return os.str();
  };
  for (const char* name : {"a", "b"}) {
    std::ofstream cfg(dir / (std::string(name) + ".json"));
    cfg << config_for(std::string("run_") + name);
  }
  // different thread counts: the artifacts must not depend on the schedule
  int threads = 1;
  for (const char* name : {"a", "b"}) {
    const std::string cmd = "OMP_NUM_THREADS=" + std::to_string(threads) + " " + g_cli_binary +
                            " run " + (dir / (std::string(name) + ".json")).string() +
                            " > /dev/null 2>&1";
    require(std::system(cmd.c_str()) == 0, std::string("cmd_run failed for config ") + name);
    threads = 4;
  }
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  for (const char* file : {"metrics.csv", "trials.csv", "predictions.csv"}) {
    const std::string a = slurp(dir / "run_a" / file);
    const std::string b = slurp(dir / "run_b" / file);
    require(!a.empty() && a == b, std::string(file) + " differs between identical runs");
  }
  fs::remove_all(dir);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) {
    g_cli_binary = argv[1];
  } else if (fs::exists("tools/milgraph")) {
    g_cli_binary = "tools/milgraph";
  }

  run_criterion(1, "finite-difference gradient suite", criterion_gradients);
  run_criterion(2, "graph solver oracle equivalence", criterion_solver_oracle);
  run_criterion(3, "degree calibration heuristic", criterion_calibration);
  run_criterion(4, "permutation properties", criterion_permutation);
  run_criterion(5, "pipeline oracle equivalence", criterion_pipeline_oracle);
  run_criterion(6, "synthetic end-to-end comparison", criterion_synthetic_end_to_end);

  std::string musk_path;
  if (const char* env = std::getenv("MILGRAPH_MUSK1"); env != nullptr && fs::exists(env)) {
    musk_path = env;
  } else if (fs::exists("data/musk1.jsonl")) {
    musk_path = "data/musk1.jsonl";
  } else if (fs::exists("../data/musk1.jsonl")) {
    musk_path = "../data/musk1.jsonl";
  }
  if (musk_path.empty()) {
    skip_criterion(7, "musk1 cross-validation",
                   "dataset not supplied (set MILGRAPH_MUSK1 to the converted jsonl)");
  } else {
    run_criterion(7, "musk1 cross-validation", [&] { criterion_musk1(musk_path); });
  }

  run_criterion(8, "exact wilcoxon statistics", criterion_statistics);
  run_criterion(9, "byte-identical reruns", criterion_determinism);

  if (g_failures > 0) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all criteria satisfied\n");
  return 0;
}
