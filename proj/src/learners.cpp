#include "gbfl/learners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "gbfl/blackbox.hpp"
#include "gbfl/error.hpp"

namespace gbfl {

namespace {

double gini(std::span<const double> counts, double n) {
  if (n <= 0.0) return 0.0;
  double s = 0.0;
  for (double c : counts) s += (c / n) * (c / n);
  return 1.0 - s;
}

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double gain = -std::numeric_limits<double>::infinity();
};

constexpr double kGainTie = 1e-12;

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, std::span<const int> y, int k, const TreeConfig& cfg)
      : x_(x), y_(y), k_(static_cast<std::size_t>(k)), cfg_(cfg), binary_(x.cols(), true) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      for (std::size_t r = 0; r < x.rows() && binary_[c]; ++r) {
        const double v = x(r, c);
        binary_[c] = v == 0.0 || v == 1.0;
      }
    }
  }

  std::vector<TreeNode> build() {
    std::vector<std::size_t> all(x_.rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    grow(all, 0);
    return std::move(nodes_);
  }

 private:
  int grow(const std::vector<std::size_t>& rows, int depth) {
    TreeNode node;
    node.depth = depth;
    node.n_samples = rows.size();
    node.class_counts.assign(k_, 0.0);
    for (std::size_t r : rows) node.class_counts[static_cast<std::size_t>(y_[r])] += 1.0;
    node.impurity = gini(node.class_counts, static_cast<double>(rows.size()));
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);

    if (node.impurity <= 0.0 || depth >= cfg_.max_height) return id;
    const SplitChoice best = best_split(rows, node);
    if (best.feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (std::size_t r : rows) (x_(r, static_cast<std::size_t>(best.feature)) <= best.threshold ? left : right).push_back(r);
    nodes_[static_cast<std::size_t>(id)].feature = best.feature;
    nodes_[static_cast<std::size_t>(id)].threshold = best.threshold;
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    nodes_[static_cast<std::size_t>(id)].left = l;
    nodes_[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  SplitChoice best_split(const std::vector<std::size_t>& rows, const TreeNode& node) const {
    SplitChoice best;
    const double n = static_cast<double>(rows.size());
    const auto min_leaf = static_cast<double>(std::max(cfg_.min_leaf, 1));
    std::vector<double> left(k_), right(k_);
    std::vector<std::pair<double, int>> sorted;

    auto consider = [&](int feature, double threshold, double nl) {
      const double nr = n - nl;
      if (nl < min_leaf || nr < min_leaf) return;
      const double gain = node.impurity - (nl / n) * gini(left, nl) - (nr / n) * gini(right, nr);
      if (gain < -kGainTie) return;
      if (gain > best.gain + kGainTie) best = {feature, threshold, gain};
    };

    for (std::size_t c = 0; c < x_.cols(); ++c) {
      const int feature = static_cast<int>(c);
      if (binary_[c]) {
        std::fill(left.begin(), left.end(), 0.0);
        double nl = 0.0;
        for (std::size_t r : rows) {
          if (x_(r, c) == 0.0) {
            left[static_cast<std::size_t>(y_[r])] += 1.0;
            nl += 1.0;
          }
        }
        if (nl == 0.0 || nl == n) continue;
        for (std::size_t k = 0; k < k_; ++k) right[k] = node.class_counts[k] - left[k];
        consider(feature, 0.5, nl);
        continue;
      }
      sorted.clear();
      for (std::size_t r : rows) sorted.emplace_back(x_(r, c), y_[r]);
      std::sort(sorted.begin(), sorted.end());
      std::fill(left.begin(), left.end(), 0.0);
      right = node.class_counts;
      for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        left[static_cast<std::size_t>(sorted[i].second)] += 1.0;
        right[static_cast<std::size_t>(sorted[i].second)] -= 1.0;
        if (sorted[i].first == sorted[i + 1].first) continue;
        const double threshold = 0.5 * (sorted[i].first + sorted[i + 1].first);
        consider(feature, threshold, static_cast<double>(i + 1));
      }
    }
    return best;
  }

  const Matrix& x_;
  std::span<const int> y_;
  std::size_t k_;
  TreeConfig cfg_;
  std::vector<bool> binary_;
  std::vector<TreeNode> nodes_;
};

}  // namespace

DecisionTree DecisionTree::fit(const Matrix& features, std::span<const int> labels, int n_classes,
                               const TreeConfig& config) {
  if (features.rows() == 0) throw Error("cannot fit a tree on an empty dataset");
  if (labels.size() != features.rows()) throw Error("label count does not match row count");
  if (config.max_height < 0) throw Error("max_height must be >= 0");
  for (int y : labels) {
    if (y < 0 || y >= n_classes) throw Error("label out of range");
  }
  DecisionTree tree;
  tree.n_classes_ = n_classes;
  tree.n_features_ = features.cols();
  tree.config_ = config;
  tree.nodes_ = TreeBuilder(features, labels, n_classes, config).build();
  return tree;
}

DecisionTree fit_tree(const BooleanDataset& data, int max_height, int min_leaf, std::uint64_t seed) {
  return DecisionTree::fit(data.as_matrix(), data.targets, data.n_classes, {max_height, min_leaf, seed});
}

std::vector<double> DecisionTree::leaf_distribution(std::span<const double> row) const {
  if (row.size() != n_features_) {
    throw Error("row has " + std::to_string(row.size()) + " columns, tree expects " + std::to_string(n_features_));
  }
  std::size_t i = 0;
  while (!nodes_[i].is_leaf()) {
    const auto& node = nodes_[i];
    i = static_cast<std::size_t>(row[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right);
  }
  return nodes_[i].class_counts;
}

int DecisionTree::predict(std::span<const double> row) const { return argmax(leaf_distribution(row)); }

int DecisionTree::height() const {
  int h = 0;
  for (const auto& n : nodes_) h = std::max(h, n.depth);
  return h;
}

std::vector<double> DecisionTree::importances() const {
  std::vector<double> imp(n_features_, 0.0);
  const double total = static_cast<double>(nodes_.front().n_samples);
  for (const auto& node : nodes_) {
    if (node.is_leaf()) continue;
    const auto& l = nodes_[static_cast<std::size_t>(node.left)];
    const auto& r = nodes_[static_cast<std::size_t>(node.right)];
    const double n = static_cast<double>(node.n_samples);
    const double decrease = node.impurity - (static_cast<double>(l.n_samples) / n) * l.impurity -
                            (static_cast<double>(r.n_samples) / n) * r.impurity;
    imp[static_cast<std::size_t>(node.feature)] += (n / total) * std::max(decrease, 0.0);
  }
  return imp;
}

DecisionTree DecisionTree::truncated(int max_height) const {
  DecisionTree out;
  out.n_classes_ = n_classes_;
  out.n_features_ = n_features_;
  out.config_ = config_;
  out.config_.max_height = max_height;
  // preorder copy keeps the same node numbering scheme as a fresh fit
  auto copy = [&](auto&& self, int src) -> int {
    TreeNode node = nodes_[static_cast<std::size_t>(src)];
    const int id = static_cast<int>(out.nodes_.size());
    const bool cut = node.depth >= max_height;
    const int l = node.left, r = node.right;
    if (cut) {
      node.feature = -1;
      node.threshold = 0.0;
    }
    node.left = node.right = -1;
    out.nodes_.push_back(node);
    if (!cut && l >= 0) {
      const int nl = self(self, l);
      const int nr = self(self, r);
      out.nodes_[static_cast<std::size_t>(id)].left = nl;
      out.nodes_[static_cast<std::size_t>(id)].right = nr;
    }
    return id;
  };
  copy(copy, 0);
  return out;
}

nlohmann::json DecisionTree::to_json() const {
  auto node_json = [&](auto&& self, int i) -> nlohmann::json {
    const auto& n = nodes_[static_cast<std::size_t>(i)];
    nlohmann::json j = {{"n_samples", n.n_samples}, {"impurity", n.impurity}, {"class_counts", n.class_counts}};
    if (!n.is_leaf()) {
      j["feature"] = n.feature;
      j["threshold"] = n.threshold;
      j["left"] = self(self, n.left);
      j["right"] = self(self, n.right);
    }
    return j;
  };
  return {{"type", "tree"},
          {"n_classes", n_classes_},
          {"n_features", n_features_},
          {"max_height", config_.max_height},
          {"min_leaf", config_.min_leaf},
          {"seed", config_.seed},
          {"root", node_json(node_json, 0)}};
}

DecisionTree DecisionTree::from_json(const nlohmann::json& j) {
  DecisionTree t;
  t.n_classes_ = j.at("n_classes").get<int>();
  t.n_features_ = j.at("n_features").get<std::size_t>();
  t.config_ = {j.at("max_height").get<int>(), j.at("min_leaf").get<int>(), j.value("seed", std::uint64_t{0})};
  auto read = [&](auto&& self, const nlohmann::json& nj, int depth) -> int {
    TreeNode n;
    n.depth = depth;
    n.n_samples = nj.at("n_samples").get<std::size_t>();
    n.impurity = nj.at("impurity").get<double>();
    n.class_counts = nj.at("class_counts").get<std::vector<double>>();
    const int id = static_cast<int>(t.nodes_.size());
    t.nodes_.push_back(n);
    if (nj.contains("feature")) {
      t.nodes_[static_cast<std::size_t>(id)].feature = nj["feature"].get<int>();
      t.nodes_[static_cast<std::size_t>(id)].threshold = nj.at("threshold").get<double>();
      const int l = self(self, nj.at("left"), depth + 1);
      const int r = self(self, nj.at("right"), depth + 1);
      t.nodes_[static_cast<std::size_t>(id)].left = l;
      t.nodes_[static_cast<std::size_t>(id)].right = r;
    }
    return id;
  };
  read(read, j.at("root"), 0);
  return t;
}

std::string DecisionTree::pretty(const std::vector<std::string>& feature_names) const {
  std::ostringstream out;
  auto name = [&](int f) {
    const auto i = static_cast<std::size_t>(f);
    return i < feature_names.size() ? feature_names[i] : "f" + std::to_string(f);
  };
  auto walk = [&](auto&& self, int i, int indent) -> void {
    const auto& n = nodes_[static_cast<std::size_t>(i)];
    const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
    if (n.is_leaf()) {
      out << pad << "predict " << argmax(n.class_counts) << "  (n=" << n.n_samples << ")\n";
      return;
    }
    out << pad << "if " << name(n.feature) << " <= " << n.threshold << ":\n";
    self(self, n.left, indent + 1);
    out << pad << "else:\n";
    self(self, n.right, indent + 1);
  };
  walk(walk, 0, 0);
  return out.str();
}

// ---------------------------------------------------------------------------
// L1 logistic regression

std::vector<double> LogisticModel::scores(std::span<const double> row) const {
  if (row.size() != weights_.cols()) {
    throw Error("row has " + std::to_string(row.size()) + " columns, model expects " + std::to_string(weights_.cols()));
  }
  std::vector<double> s(intercepts_);
  for (std::size_t k = 0; k < s.size(); ++k) {
    const auto w = weights_.row(k);
    for (std::size_t c = 0; c < row.size(); ++c) s[k] += w[c] * row[c];
  }
  return s;
}

int LogisticModel::predict(std::span<const double> row) const { return argmax(scores(row)); }

nlohmann::json LogisticModel::to_json() const {
  std::vector<std::vector<double>> w;
  for (std::size_t k = 0; k < weights_.rows(); ++k) w.emplace_back(weights_.row(k).begin(), weights_.row(k).end());
  return {{"type", "logistic"}, {"l1", l1_}, {"intercepts", intercepts_}, {"weights", w}, {"n_features", weights_.cols()}};
}

LogisticModel LogisticModel::from_json(const nlohmann::json& j) {
  const auto w = j.at("weights").get<std::vector<std::vector<double>>>();
  Matrix m(w.size(), j.at("n_features").get<std::size_t>());
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (w[k].size() != m.cols()) throw Error("logistic weight row has the wrong width");
    std::copy(w[k].begin(), w[k].end(), m.row(k).begin());
  }
  return LogisticModel(std::move(m), j.at("intercepts").get<std::vector<double>>(), j.at("l1").get<double>());
}

namespace {

// Sum cross-entropy and its gradient (weights K x F, then intercepts K).
double smooth_loss(const Matrix& x, std::span<const int> y, const Matrix& w, std::span<const double> b,
                   Matrix* grad_w, std::vector<double>* grad_b) {
  const std::size_t K = w.rows(), F = w.cols();
  if (grad_w) {
    *grad_w = Matrix(K, F);
    grad_b->assign(K, 0.0);
  }
  std::vector<double> s(K);
  double loss = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto row = x.row(i);
    for (std::size_t k = 0; k < K; ++k) {
      double v = b[k];
      const auto wk = w.row(k);
      for (std::size_t c = 0; c < F; ++c) v += wk[c] * row[c];
      s[k] = v;
    }
    const double m = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (double v : s) z += std::exp(v - m);
    const double log_z = m + std::log(z);
    loss += log_z - s[static_cast<std::size_t>(y[i])];
    if (grad_w) {
      for (std::size_t k = 0; k < K; ++k) {
        const double g = std::exp(s[k] - log_z) - (static_cast<int>(k) == y[i] ? 1.0 : 0.0);
        (*grad_b)[k] += g;
        if (g == 0.0) continue;
        auto gw = grad_w->row(k);
        for (std::size_t c = 0; c < F; ++c) gw[c] += g * row[c];
      }
    }
  }
  return loss;
}

double l1_norm(const Matrix& w) {
  double s = 0.0;
  for (double v : w.data()) s += std::abs(v);
  return s;
}

}  // namespace

LogisticModel fit_logistic_l1(const Matrix& features, std::span<const int> labels, int n_classes,
                              const LogisticConfig& config) {
  if (features.rows() == 0) throw Error("cannot fit logistic regression on an empty dataset");
  if (labels.size() != features.rows()) throw Error("label count does not match row count");
  if (!(config.l1 >= 0.0)) throw Error("l1 must be >= 0");
  const auto K = static_cast<std::size_t>(n_classes);
  const std::size_t F = features.cols();
  LogisticModel model(Matrix(K, F, 0.0), std::vector<double>(K, 0.0), config.l1);

  Matrix gw;
  std::vector<double> gb;
  double step = config.learning_rate / static_cast<double>(features.rows());
  double f = smooth_loss(features, labels, model.weights_, model.intercepts_, &gw, &gb);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Matrix nw(K, F);
    std::vector<double> nb(K);
    double nf = 0.0;
    for (int attempt = 0;; ++attempt) {
      for (std::size_t i = 0; i < nw.data().size(); ++i) {
        const double v = model.weights_.data()[i] - step * gw.data()[i];
        nw.data()[i] = std::copysign(std::max(std::abs(v) - step * config.l1, 0.0), v);
      }
      for (std::size_t k = 0; k < K; ++k) nb[k] = model.intercepts_[k] - step * gb[k];
      nf = smooth_loss(features, labels, nw, nb, nullptr, nullptr);
      // sufficient decrease of the quadratic upper model
      double lin = 0.0, quad = 0.0;
      for (std::size_t i = 0; i < nw.data().size(); ++i) {
        const double d = nw.data()[i] - model.weights_.data()[i];
        lin += gw.data()[i] * d;
        quad += d * d;
      }
      for (std::size_t k = 0; k < K; ++k) {
        const double d = nb[k] - model.intercepts_[k];
        lin += gb[k] * d;
        quad += d * d;
      }
      if (nf <= f + lin + quad / (2.0 * step) + 1e-12 * std::abs(f)) break;
      step *= 0.5;
      if (attempt > 60) throw Error("logistic regression line search failed (diverging objective)");
    }
    if (!std::isfinite(nf)) throw Error("logistic regression diverged");
    model.weights_ = std::move(nw);
    model.intercepts_ = std::move(nb);
    f = smooth_loss(features, labels, model.weights_, model.intercepts_, &gw, &gb);
    model.loss_history_.push_back(f + config.l1 * l1_norm(model.weights_));
    step *= 1.25;  // let the step recover after backtracking
  }
  return model;
}

LogisticModel fit_logistic_l1(const BooleanDataset& data, double l1, int epochs, double learning_rate,
                              std::uint64_t seed) {
  return fit_logistic_l1(data.as_matrix(), data.targets, data.n_classes, {l1, epochs, learning_rate, seed});
}

int predict(const Learner& model, std::span<const double> row) {
  return std::visit([&](const auto& m) { return m.predict(row); }, model);
}

std::vector<RankedFeature> top_k_features(const Learner& model, std::size_t k) {
  std::vector<RankedFeature> ranked;
  if (const auto* tree = std::get_if<DecisionTree>(&model)) {
    const auto imp = tree->importances();
    std::vector<bool> used(imp.size(), false);
    for (const auto& n : tree->nodes()) {
      if (!n.is_leaf()) used[static_cast<std::size_t>(n.feature)] = true;
    }
    for (std::size_t c = 0; c < imp.size(); ++c) {
      if (used[c]) ranked.push_back({c, imp[c]});
    }
  } else {
    const auto& w = std::get<LogisticModel>(model).weights();
    for (std::size_t c = 0; c < w.cols(); ++c) {
      double m = 0.0;
      for (std::size_t r = 0; r < w.rows(); ++r) m = std::max(m, std::abs(w(r, c)));
      if (m > 0.0) ranked.push_back({c, m});
    }
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedFeature& a, const RankedFeature& b) { return a.importance > b.importance; });
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

int TransparentModel::predict(std::span<const double> raw) const {
  if (!uses_clauses) return gbfl::predict(learner, raw);
  return gbfl::predict(learner, clause_features(clauses, raw));
}

std::vector<int> TransparentModel::predict_batch(const Matrix& raw) const {
  std::vector<int> out(raw.rows());
  for (std::size_t i = 0; i < raw.rows(); ++i) out[i] = predict(raw.row(i));
  return out;
}

nlohmann::json TransparentModel::to_json(const std::vector<std::string>& feature_names) const {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["method"] = method;
  j["uses_clauses"] = uses_clauses;
  j["feature_names"] = feature_names;
  if (uses_clauses) j["clauses"] = nlohmann::json::parse(clauses_to_json(clauses, feature_names)).at("clauses");
  j["learner"] = std::visit([](const auto& m) { return m.to_json(); }, learner);
  return j;
}

TransparentModel TransparentModel::from_json(const nlohmann::json& j) {
  TransparentModel m;
  try {
    m.method = j.at("method").get<std::string>();
    m.uses_clauses = j.at("uses_clauses").get<bool>();
    if (m.uses_clauses) m.clauses = clauses_from_json(nlohmann::json({{"clauses", j.at("clauses")}}).dump());
    const auto& l = j.at("learner");
    if (l.at("type") == "tree") m.learner = DecisionTree::from_json(l);
    else if (l.at("type") == "logistic") m.learner = LogisticModel::from_json(l);
    else throw Error("unknown learner type");
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad transparent model JSON: ") + e.what());
  }
  return m;
}

}  // namespace gbfl
