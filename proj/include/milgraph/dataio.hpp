#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "milgraph/graphcore.hpp"
#include "milgraph/matrix.hpp"
#include "milgraph/rng.hpp"

namespace milgraph {

enum class LabelKind { Categorical, Real };

struct Bag {
  std::string id;
  Matrix features;              // n_i x d_x, n_i >= 1
  std::optional<double> label;  // class index or real value
};

/// Ordered bag collection. The labeled set L is exactly the bags whose
/// label is present; the rest form the test set.
struct BagDataset {
  std::vector<Bag> bags;
  std::vector<int> labeled;  // L, ascending
  LabelKind label_kind = LabelKind::Categorical;
  int num_classes = 0;  // categorical only
  int feature_dim = 0;

  int size() const { return static_cast<int>(bags.size()); }
  std::vector<int> unlabeled() const;
  std::vector<int> class_labels(const std::vector<int>& indices) const;
  Matrix real_labels(const std::vector<int>& indices) const;  // m x 1
  /// Recomputes L/feature_dim/num_classes from the bags and checks the
  /// invariants (non-empty bags, consistent dims).
  void finalize();
};

/// One JSON record per line: {"id": str, "label": number|null (optional),
/// "instances": [[float,...],...]}. Malformed input reports the line
/// number; inconsistent instance dims report the record id.
/// label_kind_hint: "auto" infers categorical iff every label is a
/// non-negative JSON integer; "categorical"/"real" force the kind.
BagDataset load_bags_jsonl(const std::string& path, const std::string& label_kind_hint = "auto");
/// Floats serialized with 17 significant digits; write->read round-trips
/// bit-exactly.
void save_bags_jsonl(const BagDataset& ds, const std::string& path);

/// Whitespace-separated "i j [w]" lines, '#' comments, 0-based ids < n.
/// Duplicate pairs collapse (last wins); self-loops are rejected.
Graph load_edge_list(const std::string& path, int n);
void save_edge_list(const Graph& g, const std::string& path);

struct InstanceGroup {
  std::string key;
  Matrix instances;             // all rows available for this group
  std::optional<double> label;  // group-level label
};

/// One bag per group: per_group instances sampled without replacement,
/// falling back to sampling with replacement when the group is smaller
/// than per_group.
BagDataset sample_bags(const std::vector<InstanceGroup>& groups, int per_group, Rng& rng);

/// Per-feature zero-mean unit-variance mapping fitted on the instances
/// of labeled bags (or of all bags when labeled_only=false), applied to
/// every bag. Zero-variance features pass through unchanged.
BagDataset standardize_features(const BagDataset& ds, bool labeled_only = true);

struct SplitPlan {
  std::vector<std::pair<std::vector<int>, std::vector<int>>> folds;  // (train, test)
  std::uint64_t trial_seed = 0;
};

/// `trials` independent shuffles, each cut into `folds` disjoint test
/// sets partitioning [0, n).
std::vector<SplitPlan> make_kfold_splits(int n, int folds, int trials, Rng& rng);
/// One (train, test) plan per trial; train size = max(1, floor(f * n)).
std::vector<SplitPlan> make_fraction_splits(int n, double train_fraction, int trials, Rng& rng);

/// Header "id,pred...,std...": pred_0..pred_{C-1},std_0..std_{C-1} for
/// C columns, or plain pred,std when C == 1.
void save_predictions_csv(const std::string& path, const std::vector<std::string>& ids,
                          const Matrix& mean, const Matrix& stddev);

std::string format_double(double v);  // %.17g, round-trip exact

}  // namespace milgraph
