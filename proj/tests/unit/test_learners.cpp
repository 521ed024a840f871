#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>

#include "gbfl/error.hpp"
#include "gbfl/learners.hpp"
#include "gbfl/random.hpp"

using namespace gbfl;

namespace {

struct Table {
  Matrix x;
  std::vector<int> y;
};

Table random_boolean_table(std::size_t n, std::size_t f, int k, Rng& rng) {
  Table t{Matrix(n, f), std::vector<int>(n)};
  for (auto& v : t.x.data()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
  for (auto& y : t.y) y = static_cast<int>(rng.index(static_cast<std::uint64_t>(k)));
  return t;
}

Table random_numeric_table(std::size_t n, std::size_t f, int k, Rng& rng) {
  Table t{Matrix(n, f), std::vector<int>(n)};
  for (auto& v : t.x.data()) v = std::round(rng.uniform(0.0, 6.0));  // coarse values force ties
  for (auto& y : t.y) y = static_cast<int>(rng.index(static_cast<std::uint64_t>(k)));
  return t;
}

double gini(const std::vector<double>& counts) {
  double n = 0.0, s = 0.0;
  for (double c : counts) n += c;
  if (n == 0.0) return 0.0;
  for (double c : counts) s += (c / n) * (c / n);
  return 1.0 - s;
}

struct Split {
  int column = -1;
  double threshold = 0.0;
  double gain = -1.0;
};

// Every column, every midpoint; strict improvement keeps the first best.
Split brute_force_root(const Table& t, int k, int min_leaf) {
  const std::size_t n = t.x.rows();
  std::vector<double> all(static_cast<std::size_t>(k), 0.0);
  for (int y : t.y) all[static_cast<std::size_t>(y)] += 1.0;
  const double parent = gini(all);
  Split best;
  for (std::size_t j = 0; j < t.x.cols(); ++j) {
    auto values = t.x.column(j);
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (std::size_t v = 0; v + 1 < values.size(); ++v) {
      const double thr = 0.5 * (values[v] + values[v + 1]);
      std::vector<double> left(static_cast<std::size_t>(k), 0.0), right = left;
      double nl = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        auto& side = t.x(i, j) <= thr ? left : right;
        side[static_cast<std::size_t>(t.y[i])] += 1.0;
        nl += t.x(i, j) <= thr;
      }
      const double nr = static_cast<double>(n) - nl;
      if (nl < min_leaf || nr < min_leaf) continue;
      const double gain = parent - (nl * gini(left) + nr * gini(right)) / static_cast<double>(n);
      if (gain > best.gain + 1e-12) best = {static_cast<int>(j), thr, gain};
    }
  }
  return best;
}

double tree_accuracy(const DecisionTree& tree, const Table& t) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < t.x.rows(); ++i) hit += tree.predict(t.x.row(i)) == t.y[i];
  return static_cast<double>(hit) / static_cast<double>(t.x.rows());
}

}  // namespace

TEST_CASE("a pure node is a leaf") {
  const Table t{Matrix::from_rows({{0, 1}, {1, 0}, {1, 1}}), {2, 2, 2}};
  const auto tree = DecisionTree::fit(t.x, t.y, 3, {});
  CHECK(tree.height() == 0);
  CHECK(tree.predict(std::vector<double>{0.0, 0.0}) == 2);
  CHECK(tree.leaf_distribution(std::vector<double>{0.0, 0.0}) == std::vector<double>{0.0, 0.0, 3.0});
  CHECK(top_k_features(Learner{tree}, 5).empty());
}

TEST_CASE("xor needs two levels and a zero-gain root") {
  const Table t{Matrix::from_rows({{0, 0}, {0, 1}, {1, 0}, {1, 1}}), {0, 1, 1, 0}};
  const auto tree = DecisionTree::fit(t.x, t.y, 2, {});
  CHECK(tree.height() == 2);
  CHECK(tree_accuracy(tree, t) == 1.0);
  CHECK(tree.nodes()[0].feature == 0);
  const auto imp = tree.importances();
  CHECK(imp[0] == 0.0);
  CHECK(imp[1] == doctest::Approx(0.5));
  const auto top = top_k_features(Learner{tree}, 5);
  REQUIRE(top.size() == 2);
  CHECK(top[0].column == 1);
  CHECK(top[0].importance > 0.0);
  CHECK(top[1].column == 0);
  CHECK(top[1].importance == 0.0);
}

TEST_CASE("labels copied from one column give a stump on it") {
  Rng rng(3);
  auto t = random_boolean_table(64, 6, 2, rng);
  for (std::size_t i = 0; i < 64; ++i) t.y[i] = static_cast<int>(t.x(i, 3));
  const auto tree = DecisionTree::fit(t.x, t.y, 2, {});
  CHECK(tree.height() == 1);
  CHECK(tree.nodes()[0].feature == 3);
  CHECK(tree.nodes()[0].threshold == 0.5);
  CHECK(tree_accuracy(tree, t) == 1.0);
}

TEST_CASE("root split matches an exhaustive search") {
  Rng rng(11);
  for (int trial = 0; trial < 150; ++trial) {
    const int k = 2 + static_cast<int>(rng.index(3));
    const int min_leaf = 1 + static_cast<int>(rng.index(3));
    auto t = trial % 2 ? random_boolean_table(10 + rng.index(30), 1 + rng.index(5), k, rng)
                       : random_numeric_table(10 + rng.index(30), 1 + rng.index(5), k, rng);
    const auto tree = DecisionTree::fit(t.x, t.y, k, {3, min_leaf, 0});
    const auto oracle = brute_force_root(t, k, min_leaf);
    const auto& root = tree.nodes()[0];
    if (root.is_leaf()) {
      // pure, or no admissible split
      const bool pure = std::all_of(t.y.begin(), t.y.end(), [&](int y) { return y == t.y[0]; });
      CHECK((pure || oracle.column < 0));
      continue;
    }
    CHECK(root.feature == oracle.column);
    CHECK(root.threshold == oracle.threshold);
  }
}

TEST_CASE("height cap, leaf sizes and truncation") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(rng.index(2));
    auto t = random_numeric_table(20 + rng.index(40), 1 + rng.index(6), k, rng);
    const int h = static_cast<int>(rng.index(6));
    const int min_leaf = 1 + static_cast<int>(rng.index(4));
    const auto tree = DecisionTree::fit(t.x, t.y, k, {h, min_leaf, 0});
    CHECK(tree.height() <= h);
    std::size_t leaf_total = 0;
    for (const auto& node : tree.nodes()) {
      if (!node.is_leaf()) continue;
      CHECK(node.n_samples >= static_cast<std::size_t>(min_leaf));
      double counted = 0.0;
      for (double c : node.class_counts) counted += c;
      CHECK(counted == static_cast<double>(node.n_samples));
      leaf_total += node.n_samples;
    }
    CHECK(leaf_total == t.x.rows());
    const int lower = static_cast<int>(rng.index(static_cast<std::uint64_t>(h + 1)));
    CHECK(tree.truncated(lower).to_json() == DecisionTree::fit(t.x, t.y, k, {lower, min_leaf, 0}).to_json());
  }
}

TEST_CASE("height zero predicts the majority class") {
  const Table t{Matrix::from_rows({{0}, {1}, {1}, {0}, {1}}), {1, 0, 2, 2, 0}};
  const auto tree = DecisionTree::fit(t.x, t.y, 3, {0, 1, 0});
  CHECK(tree.height() == 0);
  CHECK(tree.predict(std::vector<double>{1.0}) == 0);  // 0 and 2 tie, lowest wins
}

TEST_CASE("tree fitting is deterministic and round trips through json") {
  Rng rng(8);
  const auto t = random_numeric_table(80, 4, 3, rng);
  const auto a = DecisionTree::fit(t.x, t.y, 3, {});
  const auto b = DecisionTree::fit(t.x, t.y, 3, {});
  CHECK(a.to_json() == b.to_json());
  const auto back = DecisionTree::from_json(a.to_json());
  for (std::size_t i = 0; i < t.x.rows(); ++i) CHECK(back.predict(t.x.row(i)) == a.predict(t.x.row(i)));
  CHECK(back.to_json() == a.to_json());
  CHECK_FALSE(a.pretty({"a", "b", "c", "d"}).empty());
  CHECK_THROWS_AS(DecisionTree::fit(t.x, std::vector<int>(3, 0), 3, {}), Error);
}

TEST_CASE("heavy l1 zeroes every weight") {
  Rng rng(1);
  const auto t = random_boolean_table(30, 5, 3, rng);
  LogisticConfig cfg;
  cfg.l1 = 30.0;
  const auto m = fit_logistic_l1(t.x, t.y, 3, cfg);
  for (double w : m.weights().data()) CHECK(w == 0.0);
  std::map<int, int> freq;
  for (int y : t.y) ++freq[y];
  const int majority = std::max_element(freq.begin(), freq.end(),
                                        [](auto& a, auto& b) { return a.second < b.second; })->first;
  CHECK(m.predict(t.x.row(0)) == majority);
  CHECK(top_k_features(Learner{m}, 5).empty());
}

TEST_CASE("zero epochs leaves the zero model") {
  Rng rng(2);
  const auto t = random_boolean_table(10, 3, 2, rng);
  LogisticConfig cfg;
  cfg.epochs = 0;
  const auto m = fit_logistic_l1(t.x, t.y, 2, cfg);
  CHECK(m.predict(t.x.row(0)) == 0);
  CHECK(m.loss_history().empty());
}

TEST_CASE("the separating column carries the largest weight") {
  Rng rng(4);
  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    auto t = random_boolean_table(10, 4, 2, rng);
    const std::size_t key = rng.index(4);
    for (std::size_t i = 0; i < 10; ++i) t.y[i] = static_cast<int>(t.x(i, key));
    // exhaustive check: the key column is the only one that separates the rows
    std::size_t separating = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      bool same = true, flipped = true;
      for (std::size_t i = 0; i < 10; ++i) {
        same = same && static_cast<int>(t.x(i, j)) == t.y[i];
        flipped = flipped && static_cast<int>(t.x(i, j)) != t.y[i];
      }
      separating += same || flipped;
    }
    if (separating != 1) continue;
    ++checked;
    const auto m = fit_logistic_l1(t.x, t.y, 2, {0.05, 300, 1.0, 0});
    const auto top = top_k_features(Learner{m}, 4);
    REQUIRE_FALSE(top.empty());
    CHECK(top[0].column == key);
    for (std::size_t i = 0; i < 10; ++i) CHECK(m.predict(t.x.row(i)) == t.y[i]);
  }
  CHECK(checked >= 5);
}

TEST_CASE("logistic objective decreases and respects column order") {
  Rng rng(6);
  const auto t = random_boolean_table(50, 5, 3, rng);
  const auto m = fit_logistic_l1(t.x, t.y, 3, {0.1, 200, 1.0, 0});
  const auto& h = m.loss_history();
  REQUIRE(h.size() == 200);
  for (std::size_t i = 1; i < h.size(); ++i) CHECK(h[i] <= h[i - 1] + 1e-12);

  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  Matrix px(50, 5);
  for (std::size_t i = 0; i < 50; ++i)
    for (std::size_t j = 0; j < 5; ++j) px(i, j) = t.x(i, perm[j]);
  const auto pm = fit_logistic_l1(px, t.y, 3, {0.1, 200, 1.0, 0});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t j = 0; j < 5; ++j) CHECK(pm.weights()(c, j) == doctest::Approx(m.weights()(c, perm[j])).epsilon(1e-9));

  const auto back = LogisticModel::from_json(m.to_json());
  CHECK(back.weights() == m.weights());
  CHECK(back.intercepts() == m.intercepts());
  CHECK_THROWS_AS(fit_logistic_l1(t.x, t.y, 3, {-1.0, 10, 1.0, 0}), Error);
}

TEST_CASE("transparent model maps raw samples through its clauses") {
  Clause low;
  low.literals = {Literal{0, std::nullopt, Bound{5.0, false}}};
  low.provenance = {0};
  low.assign_id();
  Clause high;
  high.literals = {Literal{1, Bound{2.0, true}, std::nullopt}};
  high.provenance = {1};
  high.assign_id();
  const Matrix bools = Matrix::from_rows({{1, 0}, {0, 1}, {1, 1}, {0, 0}});
  const std::vector<int> y{0, 1, 0, 1};
  TransparentModel model{"GBFL", true, {low, high}, DecisionTree::fit(bools, y, 2, {})};
  const Matrix raw = Matrix::from_rows({{1.0, 0.0}, {7.0, 3.0}, {2.0, 9.0}, {6.0, 1.0}});
  CHECK(model.predict_batch(raw) == y);
  const auto back = TransparentModel::from_json(model.to_json({"a", "b"}));
  CHECK(back.method == "GBFL");
  CHECK(back.clauses.size() == 2);
  CHECK(back.predict_batch(raw) == y);

  TransparentModel direct{"Standard", false, {}, DecisionTree::fit(raw, y, 2, {})};
  CHECK(TransparentModel::from_json(direct.to_json({"a", "b"})).predict_batch(raw) == direct.predict_batch(raw));
}
