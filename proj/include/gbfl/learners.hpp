#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "gbfl/clauses.hpp"
#include "gbfl/matrix.hpp"

namespace gbfl {

struct TreeConfig {
  int max_height = 5;
  int min_leaf = 1;
  std::uint64_t seed = 0;  // CART here is deterministic; kept for the model record
};

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;  // go left when x[feature] <= threshold
  int left = -1;
  int right = -1;
  int depth = 0;
  std::size_t n_samples = 0;
  double impurity = 0.0;
  std::vector<double> class_counts;

  bool is_leaf() const { return feature < 0; }
};

/// Greedy Gini CART over numeric columns.
///
/// Splits sit at midpoints of consecutive distinct values (0.5 on boolean
/// columns). The best decrease wins, lowest column then lowest threshold on ties.
/// Growth stops at a pure node, the height cap, or when no split leaves
/// min_leaf rows on both sides.
class DecisionTree {
 public:
  static DecisionTree fit(const Matrix& features, std::span<const int> labels, int n_classes,
                          const TreeConfig& config);

  int predict(std::span<const double> row) const;
  std::vector<double> leaf_distribution(std::span<const double> row) const;

  int height() const;
  int n_classes() const { return n_classes_; }
  std::size_t n_features() const { return n_features_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeConfig& config() const { return config_; }

  /// Impurity decrease weighted by node sample fraction, summed per column.
  std::vector<double> importances() const;
  /// The same tree grown with a lower height cap (greedy growth makes this exact).
  DecisionTree truncated(int max_height) const;

  nlohmann::json to_json() const;
  static DecisionTree from_json(const nlohmann::json& j);
  std::string pretty(const std::vector<std::string>& feature_names) const;

 private:
  std::vector<TreeNode> nodes_;
  int n_classes_ = 0;
  std::size_t n_features_ = 0;
  TreeConfig config_;
};

DecisionTree fit_tree(const BooleanDataset& data, int max_height, int min_leaf, std::uint64_t seed = 0);

struct LogisticConfig {
  double l1 = 0.01;
  int epochs = 300;
  double learning_rate = 1.0;  // initial step relative to the mean loss scale
  std::uint64_t seed = 0;      // weights start at zero; kept for the model record
};

/// Multinomial logistic regression over boolean columns.
class LogisticModel {
 public:
  LogisticModel() = default;
  LogisticModel(Matrix weights, std::vector<double> intercepts, double l1)
      : weights_(std::move(weights)), intercepts_(std::move(intercepts)), l1_(l1) {}

  std::vector<double> scores(std::span<const double> row) const;
  int predict(std::span<const double> row) const;

  const Matrix& weights() const { return weights_; }  // K x F
  const std::vector<double>& intercepts() const { return intercepts_; }
  double l1() const { return l1_; }
  /// Regularized objective value after each proximal step.
  const std::vector<double>& loss_history() const { return loss_history_; }

  nlohmann::json to_json() const;
  static LogisticModel from_json(const nlohmann::json& j);

 private:
  friend LogisticModel fit_logistic_l1(const Matrix&, std::span<const int>, int, const LogisticConfig&);
  Matrix weights_;
  std::vector<double> intercepts_;
  double l1_ = 0.0;
  std::vector<double> loss_history_;
};

/// Proximal gradient with backtracking on sum cross-entropy + l1 * |W|_1 (intercepts unpenalized).
LogisticModel fit_logistic_l1(const Matrix& features, std::span<const int> labels, int n_classes,
                              const LogisticConfig& config);
LogisticModel fit_logistic_l1(const BooleanDataset& data, double l1, int epochs, double learning_rate,
                              std::uint64_t seed = 0);

using Learner = std::variant<DecisionTree, LogisticModel>;

int predict(const Learner& model, std::span<const double> row);

struct RankedFeature {
  std::size_t column = 0;
  double importance = 0.0;
};

/// Tree: Gini importance over split columns. Logistic: max |weight| over classes,
/// non-zero columns only. Ties by column index; at most k entries.
std::vector<RankedFeature> top_k_features(const Learner& model, std::size_t k);

/// A learner plus the feature map from raw samples to its inputs.
struct TransparentModel {
  std::string method;
  bool uses_clauses = false;
  std::vector<Clause> clauses;
  Learner learner;

  int predict(std::span<const double> raw) const;
  std::vector<int> predict_batch(const Matrix& raw) const;

  nlohmann::json to_json(const std::vector<std::string>& feature_names) const;
  static TransparentModel from_json(const nlohmann::json& j);
};

}  // namespace gbfl
