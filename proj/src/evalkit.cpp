#include "milgraph/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace milgraph {

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.empty()) throw std::invalid_argument("accuracy: empty input");
  if (preds.size() != labels.size()) throw std::invalid_argument("accuracy: length mismatch");
  long long correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

double normalized_deviation(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.empty()) throw std::invalid_argument("normalized_deviation: empty input");
  if (pred.size() != truth.size()) {
    throw std::invalid_argument("normalized_deviation: length mismatch");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    num += std::abs(pred[i] - truth[i]);
    den += std::abs(truth[i]);
  }
  if (den == 0.0) throw std::invalid_argument("normalized_deviation: all-zero reference");
  return num / den;
}

RegressionMetrics regression_metrics(const std::vector<double>& preds,
                                     const std::vector<double>& targets) {
  if (preds.empty()) throw std::invalid_argument("regression_metrics: empty input");
  if (preds.size() != targets.size()) {
    throw std::invalid_argument("regression_metrics: length mismatch");
  }
  RegressionMetrics m;
  double sq = 0.0, abs_sum = 0.0, pct = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double d = preds[i] - targets[i];
    sq += d * d;
    abs_sum += std::abs(d);
    if (targets[i] == 0.0) {
      throw std::invalid_argument("regression_metrics: zero target makes MAPE undefined");
    }
    pct += std::abs(d / targets[i]);
  }
  const double n = static_cast<double>(preds.size());
  m.rmse = std::sqrt(sq / n);
  m.mae = abs_sum / n;
  m.mape = 100.0 * pct / n;
  return m;
}

namespace {

/// Average-rank assignment: best score gets rank 1.
std::vector<double> rank_scores(const std::vector<double>& scores, bool higher_is_better) {
  const int m = static_cast<int>(scores.size());
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return higher_is_better ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  std::vector<double> ranks(m, 0.0);
  int i = 0;
  while (i < m) {
    int j = i;
    while (j + 1 < m && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = (i + j) / 2.0 + 1.0;  // ranks are 1-based
    for (int t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

RankTable rank_table(const std::vector<std::string>& algorithms,
                     const std::vector<std::vector<double>>& scores, bool higher_is_better) {
  const int m = static_cast<int>(algorithms.size());
  if (m == 0 || scores.empty()) throw std::invalid_argument("rank_table: empty input");
  RankTable table;
  table.algorithms = algorithms;
  for (const auto& row : scores) {
    if (static_cast<int>(row.size()) != m) {
      throw std::invalid_argument("rank_table: incomplete score row");
    }
    for (double s : row) {
      if (!std::isfinite(s)) throw std::invalid_argument("rank_table: missing/non-finite score");
    }
    table.ranks.push_back(rank_scores(row, higher_is_better));
  }
  table.average_rank.assign(m, 0.0);
  table.median_rank.assign(m, 0.0);
  std::vector<double> col(table.ranks.size());
  for (int a = 0; a < m; ++a) {
    for (std::size_t d = 0; d < table.ranks.size(); ++d) {
      table.average_rank[a] += table.ranks[d][a];
      col[d] = table.ranks[d][a];
    }
    table.average_rank[a] /= static_cast<double>(table.ranks.size());
    std::sort(col.begin(), col.end());
    const std::size_t n = col.size();
    table.median_rank[a] = n % 2 == 1 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
  }
  return table;
}

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Exact tail probabilities of W+ by dynamic programming over the
/// doubled (integer) ranks: ways[s] = #sign assignments with 2*W+ = s.
void exact_tails(const std::vector<double>& ranks, double w_plus, double& p_ge, double& p_le) {
  std::vector<long long> scaled(ranks.size());
  long long total = 0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    scaled[i] = static_cast<long long>(std::llround(2.0 * ranks[i]));
    total += scaled[i];
  }
  std::vector<double> ways(static_cast<std::size_t>(total) + 1, 0.0);
  ways[0] = 1.0;
  long long reach = 0;
  for (long long s : scaled) {
    reach += s;
    for (long long v = reach; v >= s; --v) ways[v] += ways[v - s];
  }
  const double count = std::pow(2.0, static_cast<double>(ranks.size()));
  const long long obs = static_cast<long long>(std::llround(2.0 * w_plus));
  double ge = 0.0, le = 0.0;
  for (long long v = 0; v <= total; ++v) {
    if (v >= obs) ge += ways[v];
    if (v <= obs) le += ways[v];
  }
  p_ge = ge / count;
  p_le = le / count;
}

}  // namespace

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b,
                                    Alternative alt, int exact_threshold) {
  if (a.size() != b.size()) throw std::invalid_argument("wilcoxon_signed_rank: length mismatch");
  if (a.empty()) throw std::invalid_argument("wilcoxon_signed_rank: empty input");
  std::vector<double> diffs;
  int zeros = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = b[i] - a[i];
    if (d == 0.0) {
      ++zeros;
    } else {
      diffs.push_back(d);
    }
  }
  if (diffs.empty()) {
    throw std::invalid_argument("wilcoxon_signed_rank: all differences are zero");
  }
  const int n = static_cast<int>(diffs.size());

  // rank |d| ascending with average ties
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return std::abs(diffs[x]) < std::abs(diffs[y]); });
  std::vector<double> ranks(n, 0.0);
  std::vector<double> tie_sizes;
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && std::abs(diffs[order[j + 1]]) == std::abs(diffs[order[i]])) ++j;
    const double avg = (i + j) / 2.0 + 1.0;
    for (int t = i; t <= j; ++t) ranks[order[t]] = avg;
    tie_sizes.push_back(j - i + 1);
    i = j + 1;
  }

  double w_plus = 0.0;
  for (int t = 0; t < n; ++t)
    if (diffs[t] > 0.0) w_plus += ranks[t];

  WilcoxonResult res;
  res.statistic = w_plus;
  res.n_used = n;
  res.zeros_dropped = zeros;

  double p_ge, p_le;
  if (n <= exact_threshold) {
    res.exact = true;
    exact_tails(ranks, w_plus, p_ge, p_le);
  } else {
    res.exact = false;
    const double mu = n * (n + 1) / 4.0;
    double sigma2 = n * (n + 1) * (2.0 * n + 1) / 24.0;
    for (double t : tie_sizes) sigma2 -= (t * t * t - t) / 48.0;
    const double sigma = std::sqrt(sigma2);
    if (sigma == 0.0) throw std::invalid_argument("wilcoxon_signed_rank: degenerate ranks");
    p_ge = 1.0 - normal_cdf((w_plus - mu - 0.5) / sigma);
    p_le = normal_cdf((w_plus - mu + 0.5) / sigma);
  }
  switch (alt) {
    case Alternative::Greater: res.p_value = p_ge; break;
    case Alternative::Less: res.p_value = p_le; break;
    case Alternative::TwoSided: res.p_value = std::min(1.0, 2.0 * std::min(p_ge, p_le)); break;
  }
  return res;
}

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean_of: empty");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double std_error_of(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("std_error_of: empty");
  if (xs.size() == 1) return 0.0;
  const double mu = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - mu) * (x - mu);
  const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return sd / std::sqrt(static_cast<double>(xs.size()));
}

void write_metric_reports_csv(const std::string& path, const std::vector<MetricReport>& reports) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_metric_reports_csv: cannot write " + path);
  out << "metric,mean,std_error,units\n";
  for (const MetricReport& r : reports) {
    out << r.metric << ',' << format_double(r.mean) << ',' << format_double(r.std_error) << ','
        << r.per_unit.size() << '\n';
  }
}

void write_rank_table_csv(const std::string& path, const RankTable& table,
                          const std::vector<std::string>& dataset_names) {
  if (dataset_names.size() != table.ranks.size()) {
    throw std::invalid_argument("write_rank_table_csv: dataset name count mismatch");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_rank_table_csv: cannot write " + path);
  out << "dataset";
  for (const std::string& a : table.algorithms) out << ',' << a;
  out << '\n';
  for (std::size_t d = 0; d < table.ranks.size(); ++d) {
    out << dataset_names[d];
    for (double r : table.ranks[d]) out << ',' << format_double(r);
    out << '\n';
  }
  out << "average_rank";
  for (double r : table.average_rank) out << ',' << format_double(r);
  out << "\nmedian_rank";
  for (double r : table.median_rank) out << ',' << format_double(r);
  out << '\n';
}

std::vector<MetricReport> run_protocol(const std::vector<SplitPlan>& plans,
                                       const std::vector<std::string>& metric_names,
                                       const ProtocolUnitFn& unit, const Rng& rng,
                                       const std::vector<int>* execution_order) {
  if (plans.empty()) throw std::invalid_argument("run_protocol: no split plans");
  struct UnitRef {
    int trial, fold;
  };
  std::vector<UnitRef> units;
  for (std::size_t t = 0; t < plans.size(); ++t) {
    for (std::size_t f = 0; f < plans[t].folds.size(); ++f) {
      units.push_back(UnitRef{static_cast<int>(t), static_cast<int>(f)});
    }
  }
  std::vector<int> order(units.size());
  std::iota(order.begin(), order.end(), 0);
  if (execution_order != nullptr) {
    if (execution_order->size() != units.size()) {
      throw std::invalid_argument("run_protocol: execution_order size mismatch");
    }
    order = *execution_order;
  }

  std::vector<std::vector<double>> results(units.size());
  for (int u : order) {
    const UnitRef& ref = units[u];
    const auto& [train, test] = plans[ref.trial].folds[ref.fold];
    Rng unit_rng = rng.fork(static_cast<std::uint64_t>(u));
    std::vector<double> values;
    try {
      values = unit(ref.trial, ref.fold, train, test, unit_rng);
    } catch (const std::exception& e) {
      throw std::runtime_error("run_protocol: trial " + std::to_string(ref.trial) + " fold " +
                               std::to_string(ref.fold) + " (seed " +
                               std::to_string(plans[ref.trial].trial_seed) + ") failed: " +
                               e.what());
    }
    if (values.size() != metric_names.size()) {
      throw std::runtime_error("run_protocol: unit returned " + std::to_string(values.size()) +
                               " values for " + std::to_string(metric_names.size()) + " metrics");
    }
    results[u] = std::move(values);
  }

  std::vector<MetricReport> reports(metric_names.size());
  for (std::size_t m = 0; m < metric_names.size(); ++m) {
    reports[m].metric = metric_names[m];
    for (const auto& vals : results) reports[m].per_unit.push_back(vals[m]);
    reports[m].mean = mean_of(reports[m].per_unit);
    reports[m].std_error = std_error_of(reports[m].per_unit);
  }
  return reports;
}

}  // namespace milgraph
