#include "doctest.h"

#include <algorithm>

#include "gbfl/baselines.hpp"
#include "gbfl/random.hpp"

using namespace gbfl;

namespace {

Dataset line_dataset(const std::vector<double>& xs, const std::vector<int>& ys) {
  Dataset d;
  for (double x : xs) d.features.append_row(std::vector<double>{x});
  d.labels = ys;
  d.n_classes = 2;
  d.feature_names = {"x"};
  d.class_names = {"0", "1"};
  return d;
}

Dataset uniform_square(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<double> row{rng.uniform(0, 10), rng.uniform(0, 10)};
    d.features.append_row(row);
    d.labels.push_back(rng.uniform() < 0.5);
  }
  d.n_classes = 2;
  d.feature_names = {"a", "b"};
  d.class_names = {"0", "1"};
  return d;
}

// Labels the black-box would have produced on the training rows.
class LabelEcho final : public BlackBoxModel {
 public:
  explicit LabelEcho(const Dataset& d) : data_(d) {}
  std::string kind() const override { return "echo"; }
  std::size_t n_features() const override { return data_.n_features(); }
  int n_classes() const override { return data_.n_classes; }
  Matrix confidence_batch(const Matrix& inputs) const override {
    Matrix out(inputs.rows(), 2, 0.0);
    for (std::size_t i = 0; i < inputs.rows(); ++i) {
      for (std::size_t r = 0; r < data_.n_samples(); ++r) {
        if (std::equal(inputs.row(i).begin(), inputs.row(i).end(), data_.features.row(r).begin())) {
          out(i, static_cast<std::size_t>(data_.labels[r])) = 1.0;
          break;
        }
      }
    }
    return out;
  }

 private:
  const Dataset& data_;
};

}  // namespace

TEST_CASE("standard tree splits a 1-D set at the midpoint") {
  const auto d = line_dataset({1, 2, 3, 4, 6, 7, 8, 9}, {0, 0, 0, 0, 1, 1, 1, 1});
  const auto m = train_standard(d, {});
  const auto& tree = std::get<DecisionTree>(m.learner);
  CHECK(tree.height() == 1);
  CHECK(tree.nodes()[0].threshold == 5.0);
  CHECK(m.method == "Standard");
  CHECK_FALSE(m.uses_clauses);
}

TEST_CASE("pure data and a zero height cap give one leaf") {
  const auto pure = line_dataset({1, 2, 3}, {1, 1, 1});
  CHECK(std::get<DecisionTree>(train_standard(pure, {}).learner).height() == 0);
  const auto mixed = line_dataset({1, 2, 3, 4, 5}, {0, 1, 1, 0, 1});
  const auto capped = train_standard(mixed, {0, 1, 0});
  CHECK(capped.predict(std::vector<double>{1.0}) == 1);
}

TEST_CASE("distilling an oracle of the true labels equals the standard tree") {
  const auto d = uniform_square(120, 4);
  const LabelEcho echo(d);
  const auto standard = train_standard(d, {4, 1, 0});
  const auto distilled = train_distilled(d, echo, {4, 1, 0});
  CHECK(distilled.method == "Distillation");
  CHECK(std::get<DecisionTree>(distilled.learner).to_json() == std::get<DecisionTree>(standard.learner).to_json());
}

TEST_CASE("distilling a stump recovers its boundary") {
  const auto d = uniform_square(300, 6);
  const ThresholdModel stump(2, 0, 5.0, 2.0);
  const auto m = train_distilled(d, stump, {});
  const auto& tree = std::get<DecisionTree>(m.learner);
  REQUIRE(tree.height() == 1);
  CHECK(tree.nodes()[0].feature == 0);
  // the threshold falls between the closest training values on either side of 5
  double below = 0.0, above = 10.0;
  for (std::size_t i = 0; i < d.n_samples(); ++i) {
    const double v = d.features(i, 0);
    if (v <= 5.0) below = std::max(below, v);
    else above = std::min(above, v);
  }
  CHECK(tree.nodes()[0].threshold == doctest::Approx(0.5 * (below + above)));

  const ThresholdModel constant(2, 0, 100.0, 2.0);
  CHECK(std::get<DecisionTree>(train_distilled(d, constant, {}).learner).height() == 0);
}

TEST_CASE("augmented set holds originals, every PP and the existing PNs") {
  const auto d = uniform_square(10, 7);
  const ThresholdModel stump(2, 0, 5.0, 2.0);
  std::vector<ExplanationTriplet> ts(10);
  std::size_t with_pn = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    const auto x = d.features.row(i);
    ts[i].sample_index = i;
    ts[i].x.assign(x.begin(), x.end());
    ts[i].pp = {x[0] * 0.5, 0.0};
    if (i % 3 == 0) {
      ts[i].pn = std::vector<double>{x[0] < 5 ? 5.5 : x[0], x[1]};
      ++with_pn;
    }
  }
  const auto aug = augmented_dataset(d, ts, stump);
  REQUIRE(aug.n_samples() == 20 + with_pn);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(aug.labels[i] == d.labels[i]);
    CHECK(aug.features(10 + i, 0) == ts[i].pp[0]);
    CHECK(aug.labels[10 + i] == stump.predict(ts[i].pp));
  }
  std::size_t row = 20;
  for (const auto& t : ts) {
    if (!t.pn) continue;
    CHECK(aug.labels[row] == stump.predict(*t.pn));
    ++row;
  }
  const auto m = train_augmented(d, ts, stump, {});
  CHECK(m.method == "Augmentation");
}
