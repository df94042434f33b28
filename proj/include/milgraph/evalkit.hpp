#pragma once

#include <functional>
#include <string>
#include <vector>

#include "milgraph/dataio.hpp"
#include "milgraph/rng.hpp"

namespace milgraph {

/// Fraction of matching entries.
double accuracy(const std::vector<int>& preds, const std::vector<int>& labels);

/// Normalized Deviation: sum_i |pred_i - truth_i| / sum_i |truth_i|.
double normalized_deviation(const std::vector<double>& pred, const std::vector<double>& truth);

struct RegressionMetrics {
  double rmse = 0.0;
  double mae = 0.0;
  double mape = 0.0;  // percent
};
RegressionMetrics regression_metrics(const std::vector<double>& preds,
                                     const std::vector<double>& targets);

/// Per-dataset ranks (1 = best, ties averaged) plus per-algorithm
/// average and median rank.
struct RankTable {
  std::vector<std::string> algorithms;
  std::vector<std::vector<double>> ranks;  // [dataset][algorithm]
  std::vector<double> average_rank;
  std::vector<double> median_rank;
};
RankTable rank_table(const std::vector<std::string>& algorithms,
                     const std::vector<std::vector<double>>& scores,  // [dataset][algorithm]
                     bool higher_is_better = true);

enum class Alternative { Greater, Less, TwoSided };

struct WilcoxonResult {
  double statistic = 0.0;  // W+: rank sum of positive differences b - a
  double p_value = 1.0;
  int n_used = 0;          // pairs left after dropping zero differences
  int zeros_dropped = 0;
  bool exact = false;
};

/// Paired signed-rank test on differences b - a; zero differences are
/// dropped (count reported). Exact p over all 2^n sign assignments for
/// n <= exact_threshold, otherwise the normal approximation with tie
/// correction and continuity correction. Alternative::Greater tests
/// whether b exceeds a.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b,
                                    Alternative alt = Alternative::Greater,
                                    int exact_threshold = 20);

struct MetricReport {
  std::string metric;
  std::vector<double> per_unit;  // one value per (trial, fold), fixed order
  double mean = 0.0;
  double std_error = 0.0;  // sample std / sqrt(units)
};

/// One experiment unit: returns one value per metric.
using ProtocolUnitFn = std::function<std::vector<double>(
    int trial, int fold, const std::vector<int>& train, const std::vector<int>& test,
    Rng unit_rng)>;

/// Runs the unit over every (trial, fold) of the plans with an
/// independent RNG stream per unit, then aggregates mean +- standard
/// error per metric. Results are identical for any execution_order
/// permutation (pass nullptr for natural order). A failing unit aborts
/// with the trial/fold named.
std::vector<MetricReport> run_protocol(const std::vector<SplitPlan>& plans,
                                       const std::vector<std::string>& metric_names,
                                       const ProtocolUnitFn& unit, const Rng& rng,
                                       const std::vector<int>* execution_order = nullptr);

double mean_of(const std::vector<double>& xs);
double std_error_of(const std::vector<double>& xs);

/// CSV serializations: "metric,mean,std_error,units" rows, and a rank
/// table with one row per dataset plus average/median summary rows.
void write_metric_reports_csv(const std::string& path, const std::vector<MetricReport>& reports);
void write_rank_table_csv(const std::string& path, const RankTable& table,
                          const std::vector<std::string>& dataset_names);

}  // namespace milgraph
