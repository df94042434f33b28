#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "milgraph/dataio.hpp"
#include "milgraph/graphcore.hpp"
#include "milgraph/rng.hpp"

namespace fs = std::filesystem;
using namespace milgraph;

namespace {

std::string g_binary;

struct CommandResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

CommandResult run_command(const std::string& args, const std::string& env = "") {
  CommandResult res;
  const std::string cmd = (env.empty() ? "" : env + " ") + g_binary + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 512> buf;
  while (fgets(buf.data(), buf.size(), pipe) != nullptr) res.output += buf.data();
  const int status = pclose(pipe);
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return res;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() / ("milgraph_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

/// Two well-separated clusters; bags 0..half-1 are class 0.
void write_clustered_bags(const std::string& path, int bags, bool label_all) {
  Rng rng(11);
  BagDataset ds;
  ds.label_kind = LabelKind::Categorical;
  for (int i = 0; i < bags; ++i) {
    const int label = i < bags / 2 ? 0 : 1;
    Bag bag;
    bag.id = "bag" + std::to_string(i);
    if (label_all || i % 4 != 3) bag.label = label;
    const int ni = 4 + static_cast<int>(rng.next_below(4));
    bag.features = Matrix(ni, 3);
    for (int r = 0; r < ni; ++r)
      for (int c = 0; c < 3; ++c) {
        bag.features(r, c) = (label == 0 ? 1.5 : -1.5) + 0.5 * rng.normal();
      }
    ds.bags.push_back(std::move(bag));
  }
  ds.finalize();
  save_bags_jsonl(ds, path);
}

std::string base_config(const Workspace& ws, const std::string& head,
                        const std::string& out_name, int seed = 5) {
  std::ostringstream os;
  os << R"({
  "seed": )" << seed << R"(,
  "output_dir": ")" << ws.path(out_name) << R"(",
  "dataset": { "bags": ")" << ws.path("bags.jsonl") << R"(" },
  "encoder": { "kind": "rff_pool", "hidden": [8, 4], "activation": "relu",
               "pooling": "mean", "dropout": 0.2, "deep_supervision": false },
  "head": { "kind": ")" << head << R"(" },
  "graph_learn": { "k": 2, "r": 2, "max_iters": 800, "rel_tol": 1e-7 },
  "training": { "learning_rate": 0.01, "weight_decay": 0.001, "epochs": 30,
                "loss": "cross_entropy" },
  "protocol": { "kind": "kfold", "folds": 4, "trials": 1 },
  "mc": { "samples": 4, "dropout": 0.2 },
  "transduction": "transductive"
})";
  return os.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

void write_fake_run(const fs::path& dir, const std::vector<double>& accs) {
  fs::create_directories(dir);
  std::ofstream mf(dir / "manifest.txt");
  mf << "command=run\nconfig_path=/x\nconfig_hash=0\nseed=5\nprotocol_kind=kfold\n"
     << "protocol_folds=4\nprotocol_trials=" << accs.size() / 4 << "\n";
  std::ofstream tf(dir / "trials.csv");
  tf << "trial,fold,accuracy\n";
  for (std::size_t u = 0; u < accs.size(); ++u) {
    tf << u / 4 << ',' << u % 4 << ',' << format_double(accs[u]) << '\n';
  }
}

}  // namespace

TEST_CASE("validate") {
  Workspace ws;
  write_clustered_bags(ws.path("bags.jsonl"), 16, true);

  SUBCASE("valid config prints OK with resolved defaults") {
    write_file(ws.path("ok.json"), base_config(ws, "linear", "out"));
    CommandResult res = run_command("validate " + ws.path("ok.json"));
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("OK") != std::string::npos);
    CHECK(res.output.find("\"max_iters\": 800") != std::string::npos);  // defaults echoed
  }
  SUBCASE("range error names the config key") {
    std::string cfg = base_config(ws, "linear", "out");
    cfg.replace(cfg.find("\"k\": 2"), 6, "\"k\": 0");
    write_file(ws.path("bad.json"), cfg);
    CommandResult res = run_command("validate " + ws.path("bad.json"));
    CHECK(res.exit_code == 1);
    CHECK(res.output.find("graph_learn.k") != std::string::npos);
  }
  SUBCASE("gcn_obs without a graph source is a cross-field error") {
    write_file(ws.path("obs.json"), base_config(ws, "gcn_obs", "out"));
    CommandResult res = run_command("validate " + ws.path("obs.json"));
    CHECK(res.exit_code == 1);
    CHECK(res.output.find("gcn_obs needs") != std::string::npos);
  }
  SUBCASE("unknown keys are rejected") {
    std::string cfg = base_config(ws, "linear", "out");
    cfg.replace(cfg.find("\"seed\": 5"), 9, "\"sede\": 5");
    write_file(ws.path("typo.json"), cfg);
    CommandResult res = run_command("validate " + ws.path("typo.json"));
    CHECK(res.exit_code == 1);
    CHECK(res.output.find("sede") != std::string::npos);
  }
  SUBCASE("missing dataset path fails validation") {
    std::string cfg = base_config(ws, "linear", "out");
    const std::string target = ws.path("bags.jsonl");
    cfg.replace(cfg.find(target), target.size(), ws.path("nope.jsonl"));
    write_file(ws.path("missing.json"), cfg);
    CommandResult res = run_command("validate " + ws.path("missing.json"));
    CHECK(res.exit_code == 1);
    CHECK(res.output.find("not found") != std::string::npos);
  }
}

TEST_CASE("run with a linear head") {
  Workspace ws;
  write_clustered_bags(ws.path("bags.jsonl"), 24, true);
  write_file(ws.path("a.json"), base_config(ws, "linear", "run_a"));
  write_file(ws.path("b.json"), base_config(ws, "linear", "run_b"));

  CommandResult first = run_command("run " + ws.path("a.json"));
  REQUIRE(first.exit_code == 0);
  CHECK(fs::exists(ws.path("run_a") + "/metrics.csv"));
  CHECK(fs::exists(ws.path("run_a") + "/trials.csv"));
  CHECK(fs::exists(ws.path("run_a") + "/predictions.csv"));
  CHECK(fs::exists(ws.path("run_a") + "/summary.txt"));
  CHECK(fs::exists(ws.path("run_a") + "/manifest.txt"));
  CHECK(slurp(ws.path("run_a") + "/metrics.csv").find("accuracy") != std::string::npos);
  CHECK(slurp(ws.path("run_a") + "/predictions.csv").find("id,pred_0,pred_1,std_0,std_1") !=
        std::string::npos);

  SUBCASE("same config, same bytes") {
    CommandResult second = run_command("run " + ws.path("b.json"));
    REQUIRE(second.exit_code == 0);
    CHECK(slurp(ws.path("run_a") + "/metrics.csv") == slurp(ws.path("run_b") + "/metrics.csv"));
    CHECK(slurp(ws.path("run_a") + "/trials.csv") == slurp(ws.path("run_b") + "/trials.csv"));
    CHECK(slurp(ws.path("run_a") + "/predictions.csv") ==
          slurp(ws.path("run_b") + "/predictions.csv"));
  }
}

TEST_CASE("run with the bayesian head emits a graph near the target degree") {
  Workspace ws;
  write_clustered_bags(ws.path("bags.jsonl"), 24, true);
  std::string cfg = base_config(ws, "gcn_bayes", "run_bayes");
  cfg.replace(cfg.find("\"k\": 2, \"r\": 2"), 14, "\"k\": 2, \"r\": 1");
  write_file(ws.path("bayes.json"), cfg);
  CommandResult res = run_command("run " + ws.path("bayes.json"));
  REQUIRE(res.exit_code == 0);
  REQUIRE(fs::exists(ws.path("run_bayes") + "/graph.edges"));
  REQUIRE(fs::exists(ws.path("run_bayes") + "/solver_trace.csv"));
  Graph g = load_edge_list(ws.path("run_bayes") + "/graph.edges", 24);
  CHECK(g.mean_degree() >= 1.0);   // k/2
  CHECK(g.mean_degree() <= 4.0);   // 2k
  CHECK_FALSE(g.has_isolated_node());
}

TEST_CASE("infer-graph") {
  Workspace ws;
  write_clustered_bags(ws.path("bags.jsonl"), 20, true);
  std::string cfg = base_config(ws, "gcn_bayes", "ig_a", 7);
  write_file(ws.path("ig.json"), cfg);

  CommandResult res = run_command("infer-graph " + ws.path("ig.json"));
  REQUIRE(res.exit_code == 0);
  REQUIRE(fs::exists(ws.path("ig_a") + "/graph.edges"));
  REQUIRE(fs::exists(ws.path("ig_a") + "/solver_trace.csv"));

  SUBCASE("intra-cluster mass dominates") {
    Graph g = load_edge_list(ws.path("ig_a") + "/graph.edges", 20);
    double intra = 0.0, inter = 0.0;
    for (const WeightedEdge& e : g.edges()) {
      const bool same = (e.i < 10) == (e.j < 10);
      (same ? intra : inter) += e.w;
    }
    CHECK(intra > inter);
  }
  SUBCASE("k=1, r=1 keeps mean degree at most 2") {
    std::string small = cfg;
    small.replace(small.find("\"k\": 2, \"r\": 2"), 14, "\"k\": 1, \"r\": 1");
    const std::string out_a = ws.path("ig_a");
    small.replace(small.find(out_a), out_a.size(), ws.path("ig_small"));
    write_file(ws.path("ig_small.json"), small);
    CommandResult r2 = run_command("infer-graph " + ws.path("ig_small.json"));
    REQUIRE(r2.exit_code == 0);
    Graph g = load_edge_list(ws.path("ig_small") + "/graph.edges", 20);
    CHECK(g.mean_degree() <= 2.0 + 1e-12);
  }
  SUBCASE("same seed, identical graph file") {
    std::string again = cfg;
    const std::string out_a = ws.path("ig_a");
    again.replace(again.find(out_a), out_a.size(), ws.path("ig_b"));
    write_file(ws.path("ig_b.json"), again);
    CommandResult r2 = run_command("infer-graph " + ws.path("ig_b.json"));
    REQUIRE(r2.exit_code == 0);
    CHECK(slurp(ws.path("ig_a") + "/graph.edges") == slurp(ws.path("ig_b") + "/graph.edges"));
  }
}

TEST_CASE("compare") {
  Workspace ws;

  SUBCASE("identical runs report no difference") {
    write_fake_run(ws.dir / "r1", {0.8, 0.9, 0.7, 0.85});
    write_fake_run(ws.dir / "r2", {0.8, 0.9, 0.7, 0.85});
    CommandResult res = run_command("compare " + ws.path("r1") + " " + ws.path("r2"));
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("no difference") != std::string::npos);
  }
  SUBCASE("a dominating run yields the enumeration p-value 2^-n") {
    std::vector<double> base(8), better(8);
    for (int i = 0; i < 8; ++i) {
      base[i] = 0.5 + 0.01 * i;
      better[i] = base[i] + 0.05 + 0.001 * i;
    }
    write_fake_run(ws.dir / "base", base);
    write_fake_run(ws.dir / "dom", better);
    CommandResult res = run_command("compare " + ws.path("base") + " " + ws.path("dom"));
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("p=0.00390625") != std::string::npos);  // 1/256
    CHECK(res.output.find("*") != std::string::npos);
  }
  SUBCASE("mismatched trial counts are a pairing error") {
    write_fake_run(ws.dir / "p1", {0.8, 0.9, 0.7, 0.85});
    write_fake_run(ws.dir / "p2", {0.8, 0.9, 0.7, 0.85, 0.8, 0.8, 0.8, 0.8});
    CommandResult res = run_command("compare " + ws.path("p1") + " " + ws.path("p2"));
    CHECK(res.exit_code == 1);
    CHECK(res.output.find("not paired") != std::string::npos);
  }
}

TEST_CASE("relative output dirs are rooted at MILGRAPH_OUTPUT_ROOT") {
  Workspace ws;
  write_clustered_bags(ws.path("bags.jsonl"), 16, true);
  std::string cfg = base_config(ws, "linear", "ignored");
  const std::string abs_out = ws.path("ignored");
  cfg.replace(cfg.find(abs_out), abs_out.size(), "rel_out");
  write_file(ws.path("env.json"), cfg);
  CommandResult res = run_command("run " + ws.path("env.json"), "MILGRAPH_OUTPUT_ROOT=" + ws.path("rooted"));
  REQUIRE(res.exit_code == 0);
  CHECK(fs::exists(ws.path("rooted") + "/rel_out/metrics.csv"));
}

TEST_CASE("failures exit nonzero naming the stage") {
  Workspace ws;
  write_clustered_bags(ws.path("bags.jsonl"), 16, true);
  std::string cfg = base_config(ws, "linear", "out");
  // corrupt the dataset after validation would pass: point at a file
  // that exists but is not valid jsonl
  write_file(ws.path("garbage.jsonl"), "this is not json\n");
  const std::string target = ws.path("bags.jsonl");
  cfg.replace(cfg.find(target), target.size(), ws.path("garbage.jsonl"));
  write_file(ws.path("bad_run.json"), cfg);
  CommandResult res = run_command("run " + ws.path("bad_run.json"));
  CHECK(res.exit_code == 1);
  CHECK(res.output.find("loading stage") != std::string::npos);
}

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: test_cli <milgraph-binary> [doctest args]\n");
    return 2;
  }
  g_binary = argv[argc - 1];
  doctest::Context context;
  context.applyCommandLine(argc - 1, argv);
  return context.run();
}
