#include "milgraph/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace milgraph {

using nlohmann::json;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<int> BagDataset::unlabeled() const {
  std::vector<int> out;
  std::size_t li = 0;
  for (int i = 0; i < size(); ++i) {
    if (li < labeled.size() && labeled[li] == i) {
      ++li;
    } else {
      out.push_back(i);
    }
  }
  return out;
}

std::vector<int> BagDataset::class_labels(const std::vector<int>& indices) const {
  if (label_kind != LabelKind::Categorical) {
    throw std::logic_error("class_labels: dataset labels are real-valued");
  }
  std::vector<int> out;
  out.reserve(indices.size());
  for (int i : indices) {
    if (!bags[i].label) throw std::logic_error("class_labels: bag " + bags[i].id + " unlabeled");
    out.push_back(static_cast<int>(*bags[i].label));
  }
  return out;
}

Matrix BagDataset::real_labels(const std::vector<int>& indices) const {
  Matrix out(static_cast<int>(indices.size()), 1);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const Bag& b = bags[indices[r]];
    if (!b.label) throw std::logic_error("real_labels: bag " + b.id + " unlabeled");
    out(static_cast<int>(r), 0) = *b.label;
  }
  return out;
}

void BagDataset::finalize() {
  labeled.clear();
  feature_dim = bags.empty() ? 0 : bags.front().features.cols();
  int max_class = -1;
  for (int i = 0; i < size(); ++i) {
    const Bag& b = bags[i];
    if (b.features.rows() < 1) {
      throw std::invalid_argument("BagDataset: bag " + b.id + " has no instances");
    }
    if (b.features.cols() != feature_dim) {
      throw std::invalid_argument("BagDataset: bag " + b.id + " has " +
                                  std::to_string(b.features.cols()) + " features, expected " +
                                  std::to_string(feature_dim));
    }
    if (b.label) {
      labeled.push_back(i);
      if (label_kind == LabelKind::Categorical) {
        max_class = std::max(max_class, static_cast<int>(*b.label));
      }
    }
  }
  if (label_kind == LabelKind::Categorical) num_classes = std::max(num_classes, max_class + 1);
}

BagDataset load_bags_jsonl(const std::string& path, const std::string& label_kind_hint) {
  if (label_kind_hint != "auto" && label_kind_hint != "categorical" && label_kind_hint != "real") {
    throw std::invalid_argument("load_bags_jsonl: label_kind_hint must be auto|categorical|real");
  }
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_bags_jsonl: cannot open " + path);
  BagDataset ds;
  bool all_integral = true;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("load_bags_jsonl: " + path + " line " + std::to_string(line_no) +
                               ": " + e.what());
    }
    if (!rec.is_object() || !rec.contains("id") || !rec.contains("instances")) {
      throw std::runtime_error("load_bags_jsonl: " + path + " line " + std::to_string(line_no) +
                               ": record needs id and instances");
    }
    Bag bag;
    bag.id = rec["id"].is_string() ? rec["id"].get<std::string>() : rec["id"].dump();
    const json& inst = rec["instances"];
    if (!inst.is_array() || inst.empty()) {
      throw std::runtime_error("load_bags_jsonl: record " + bag.id + " has an empty instance list");
    }
    const int d = static_cast<int>(inst[0].size());
    bag.features = Matrix(static_cast<int>(inst.size()), d);
    for (std::size_t r = 0; r < inst.size(); ++r) {
      if (!inst[r].is_array() || static_cast<int>(inst[r].size()) != d) {
        throw std::runtime_error("load_bags_jsonl: record " + bag.id +
                                 " has inconsistent instance dimensions");
      }
      for (int c = 0; c < d; ++c) bag.features(static_cast<int>(r), c) = inst[r][c].get<double>();
    }
    if (rec.contains("label") && !rec["label"].is_null()) {
      const json& lab = rec["label"];
      if (!lab.is_number()) {
        throw std::runtime_error("load_bags_jsonl: record " + bag.id + " has a non-numeric label");
      }
      if (!lab.is_number_integer() || lab.get<double>() < 0) all_integral = false;
      bag.label = lab.get<double>();
    }
    ds.bags.push_back(std::move(bag));
  }
  if (label_kind_hint == "categorical") {
    ds.label_kind = LabelKind::Categorical;
  } else if (label_kind_hint == "real") {
    ds.label_kind = LabelKind::Real;
  } else {
    ds.label_kind = all_integral ? LabelKind::Categorical : LabelKind::Real;
  }
  ds.finalize();
  return ds;
}

void save_bags_jsonl(const BagDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_bags_jsonl: cannot write " + path);
  for (const Bag& b : ds.bags) {
    out << "{\"id\":" << json(b.id).dump() << ",\"label\":";
    if (b.label) {
      if (ds.label_kind == LabelKind::Categorical) {
        out << static_cast<long long>(*b.label);
      } else {
        out << format_double(*b.label);
      }
    } else {
      out << "null";
    }
    out << ",\"instances\":[";
    for (int r = 0; r < b.features.rows(); ++r) {
      if (r) out << ',';
      out << '[';
      for (int c = 0; c < b.features.cols(); ++c) {
        if (c) out << ',';
        out << format_double(b.features(r, c));
      }
      out << ']';
    }
    out << "]}\n";
  }
}

Graph load_edge_list(const std::string& path, int n) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_edge_list: cannot open " + path);
  std::vector<WeightedEdge> edges;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    long long i, j;
    if (!(ss >> i)) continue;  // blank
    double w = 1.0;
    if (!(ss >> j)) {
      throw std::runtime_error("load_edge_list: " + path + " line " + std::to_string(line_no) +
                               ": expected at least two ids");
    }
    ss >> w;
    std::string extra;
    if (ss >> extra) {
      throw std::runtime_error("load_edge_list: " + path + " line " + std::to_string(line_no) +
                               ": trailing tokens");
    }
    if (i < 0 || j < 0 || i >= n || j >= n) {
      throw std::runtime_error("load_edge_list: " + path + " line " + std::to_string(line_no) +
                               ": node id out of range [0, " + std::to_string(n) + ")");
    }
    if (i == j) {
      throw std::runtime_error("load_edge_list: " + path + " line " + std::to_string(line_no) +
                               ": self-loop on node " + std::to_string(i));
    }
    if (w < 0.0) {
      throw std::runtime_error("load_edge_list: " + path + " line " + std::to_string(line_no) +
                               ": negative weight");
    }
    edges.push_back(WeightedEdge{static_cast<int>(i), static_cast<int>(j), w});
  }
  return Graph(n, std::move(edges));
}

void save_edge_list(const Graph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_edge_list: cannot write " + path);
  out << "# " << g.n() << " nodes, " << g.edges().size() << " edges\n";
  for (const WeightedEdge& e : g.edges()) {
    out << e.i << ' ' << e.j << ' ' << format_double(e.w) << '\n';
  }
}

BagDataset sample_bags(const std::vector<InstanceGroup>& groups, int per_group, Rng& rng) {
  if (per_group < 1) throw std::invalid_argument("sample_bags: per_group must be >= 1");
  BagDataset ds;
  ds.label_kind = LabelKind::Real;
  for (const InstanceGroup& g : groups) {
    const int m = g.instances.rows();
    if (m < 1) throw std::invalid_argument("sample_bags: group " + g.key + " is empty");
    Bag bag;
    bag.id = g.key;
    bag.label = g.label;
    bag.features = Matrix(per_group, g.instances.cols());
    if (m >= per_group) {
      // partial Fisher-Yates: first per_group entries, without replacement
      std::vector<int> idx(m);
      for (int i = 0; i < m; ++i) idx[i] = i;
      for (int i = 0; i < per_group; ++i) {
        const int j = i + static_cast<int>(rng.next_below(m - i));
        std::swap(idx[i], idx[j]);
        for (int c = 0; c < g.instances.cols(); ++c) bag.features(i, c) = g.instances(idx[i], c);
      }
    } else {
      for (int i = 0; i < per_group; ++i) {
        const int j = static_cast<int>(rng.next_below(m));
        for (int c = 0; c < g.instances.cols(); ++c) bag.features(i, c) = g.instances(j, c);
      }
    }
    ds.bags.push_back(std::move(bag));
  }
  ds.finalize();
  return ds;
}

BagDataset standardize_features(const BagDataset& ds, bool labeled_only) {
  if (labeled_only && ds.labeled.empty()) {
    throw std::invalid_argument("standardize_features: labeled set is empty");
  }
  const int d = ds.feature_dim;
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  long long count = 0;
  auto include = [&](int i) {
    return !labeled_only || ds.bags[i].label.has_value();
  };
  for (int i = 0; i < ds.size(); ++i) {
    if (!include(i)) continue;
    const Matrix& f = ds.bags[i].features;
    for (int r = 0; r < f.rows(); ++r)
      for (int c = 0; c < d; ++c) mean[c] += f(r, c);
    count += f.rows();
  }
  for (int c = 0; c < d; ++c) mean[c] /= static_cast<double>(count);
  for (int i = 0; i < ds.size(); ++i) {
    if (!include(i)) continue;
    const Matrix& f = ds.bags[i].features;
    for (int r = 0; r < f.rows(); ++r)
      for (int c = 0; c < d; ++c) {
        const double dev = f(r, c) - mean[c];
        var[c] += dev * dev;
      }
  }
  BagDataset out = ds;
  for (int c = 0; c < d; ++c) {
    var[c] /= static_cast<double>(count);
    const double sd = std::sqrt(var[c]);
    if (sd <= 1e-12 * std::max(1.0, std::abs(mean[c]))) {
      var[c] = -1.0;  // constant feature: pass through
    } else {
      var[c] = sd;
    }
  }
  for (Bag& b : out.bags) {
    for (int r = 0; r < b.features.rows(); ++r)
      for (int c = 0; c < d; ++c) {
        if (var[c] < 0.0) continue;
        b.features(r, c) = (b.features(r, c) - mean[c]) / var[c];
      }
  }
  return out;
}

namespace {

std::vector<int> shuffled_indices(int n, Rng& rng) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

}  // namespace

std::vector<SplitPlan> make_kfold_splits(int n, int folds, int trials, Rng& rng) {
  if (folds < 2) throw std::invalid_argument("make_kfold_splits: folds must be >= 2");
  if (folds > n) throw std::invalid_argument("make_kfold_splits: folds exceed item count");
  if (trials < 1) throw std::invalid_argument("make_kfold_splits: trials must be >= 1");
  std::vector<SplitPlan> plans;
  for (int t = 0; t < trials; ++t) {
    Rng trial_rng = rng.fork(static_cast<std::uint64_t>(t));
    SplitPlan plan;
    plan.trial_seed = static_cast<std::uint64_t>(t);
    const std::vector<int> idx = shuffled_indices(n, trial_rng);
    for (int f = 0; f < folds; ++f) {
      const int lo = static_cast<int>(static_cast<long long>(f) * n / folds);
      const int hi = static_cast<int>(static_cast<long long>(f + 1) * n / folds);
      std::vector<int> test(idx.begin() + lo, idx.begin() + hi);
      std::vector<int> train;
      train.insert(train.end(), idx.begin(), idx.begin() + lo);
      train.insert(train.end(), idx.begin() + hi, idx.end());
      std::sort(test.begin(), test.end());
      std::sort(train.begin(), train.end());
      plan.folds.emplace_back(std::move(train), std::move(test));
    }
    plans.push_back(std::move(plan));
  }
  return plans;
}

std::vector<SplitPlan> make_fraction_splits(int n, double train_fraction, int trials, Rng& rng) {
  if (train_fraction <= 0.0 || train_fraction >= 1.0) {
    throw std::invalid_argument("make_fraction_splits: fraction must be in (0, 1)");
  }
  if (trials < 1) throw std::invalid_argument("make_fraction_splits: trials must be >= 1");
  const int train_count = std::max(1, static_cast<int>(std::floor(train_fraction * n)));
  if (train_count >= n) throw std::invalid_argument("make_fraction_splits: no test items left");
  std::vector<SplitPlan> plans;
  for (int t = 0; t < trials; ++t) {
    Rng trial_rng = rng.fork(static_cast<std::uint64_t>(t));
    SplitPlan plan;
    plan.trial_seed = static_cast<std::uint64_t>(t);
    const std::vector<int> idx = shuffled_indices(n, trial_rng);
    std::vector<int> train(idx.begin(), idx.begin() + train_count);
    std::vector<int> test(idx.begin() + train_count, idx.end());
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    plan.folds.emplace_back(std::move(train), std::move(test));
    plans.push_back(std::move(plan));
  }
  return plans;
}

void save_predictions_csv(const std::string& path, const std::vector<std::string>& ids,
                          const Matrix& mean, const Matrix& stddev) {
  if (static_cast<int>(ids.size()) != mean.rows() || !mean.same_shape(stddev)) {
    throw std::invalid_argument("save_predictions_csv: shape mismatch");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_predictions_csv: cannot write " + path);
  const int c = mean.cols();
  out << "id";
  if (c == 1) {
    out << ",pred,std";
  } else {
    for (int j = 0; j < c; ++j) out << ",pred_" << j;
    for (int j = 0; j < c; ++j) out << ",std_" << j;
  }
  out << '\n';
  for (int i = 0; i < mean.rows(); ++i) {
    out << ids[i];
    for (int j = 0; j < c; ++j) out << ',' << format_double(mean(i, j));
    for (int j = 0; j < c; ++j) out << ',' << format_double(stddev(i, j));
    out << '\n';
  }
}

}  // namespace milgraph
