#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "gbfl/dataset.hpp"
#include "gbfl/error.hpp"
#include "gbfl/hash.hpp"
#include "gbfl/random.hpp"

using namespace gbfl;

namespace {

Dataset two_class(std::size_t n_per_class) {
  Dataset d;
  d.feature_names = {"a", "b"};
  d.class_names = {"x", "y"};
  d.n_classes = 2;
  for (std::size_t i = 0; i < 2 * n_per_class; ++i) {
    const double row[] = {static_cast<double>(i), static_cast<double>(i % 7)};
    d.features.append_row(row);
    d.labels.push_back(i < n_per_class ? 0 : 1);
  }
  return d;
}

}  // namespace

TEST_CASE("csv labels are remapped by first appearance") {
  const auto d = parse_csv("f1,label,f2\n1,M,2\n3,B,4\n5,M,6\n", "label");
  CHECK(d.n_samples() == 3);
  CHECK(d.n_features() == 2);
  CHECK(d.feature_names == std::vector<std::string>{"f1", "f2"});
  CHECK(d.class_names == std::vector<std::string>{"M", "B"});
  CHECK(d.labels == std::vector<int>{0, 1, 0});
  CHECK(d.features(2, 1) == 6.0);
}

TEST_CASE("known classes keep their ids") {
  const auto d = parse_csv("f,label\n1,B\n2,M\n3,Q\n", "label", {"M", "B"});
  CHECK(d.labels == std::vector<int>{1, 0, 2});
  CHECK(d.n_classes == 3);
}

TEST_CASE("csv quoting, CRLF and byte-order mark") {
  const auto d = parse_csv("\xEF\xBB\xBF\"first, col\",label\r\n\"1.5\",\"a \"\"q\"\"\"\r\n2,b\r\n", "label");
  CHECK(d.feature_names[0] == "first, col");
  CHECK(d.class_names[0] == "a \"q\"");
  CHECK(d.features(0, 0) == 1.5);
}

TEST_CASE("csv errors name the row and column") {
  try {
    parse_csv("a,label\n1,x\noops,y\n", "label");
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string m = e.what();
    CHECK(m.find("row 2") != std::string::npos);
    CHECK(m.find("'a'") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_csv("a,b\n1,2\n", "label"), Error);
  CHECK_THROWS_AS(parse_csv("", "label"), Error);
  CHECK_THROWS_AS(parse_csv("a,label\n", "label"), Error);
  CHECK_THROWS_AS(parse_csv("a,label\n1,x,3\n", "label"), Error);
  CHECK_THROWS_AS(parse_csv("a,label\nnan,x\n", "label"), Error);
}

TEST_CASE("empty label column reads every column as a feature") {
  const auto d = parse_csv("a,b\n1,2\n3,4\n", "");
  CHECK(d.n_features() == 2);
  CHECK(d.n_classes == 1);
  CHECK(d.labels == std::vector<int>{0, 0});
}

TEST_CASE("csv round trip is exact") {
  Rng rng(4);
  Dataset d = two_class(5);
  for (auto& v : d.features.data()) v = rng.normal() * 1e3;
  const auto path = std::filesystem::temp_directory_path() / "gbfl_roundtrip.csv";
  save_csv(d, path, "cls");
  const auto back = load_csv(path, "cls", d.class_names);
  CHECK(back.features == d.features);
  CHECK(back.labels == d.labels);
  std::filesystem::remove(path);
}

TEST_CASE("bounds, degenerate features and base values") {
  Dataset d;
  d.n_classes = 1;
  d.feature_names = {"a", "b", "c"};
  for (double v : {4.0, 1.0, 3.0, 2.0}) {
    const double row[] = {v, 7.0, v - 10.0};
    d.features.append_row(row);
    d.labels.push_back(0);
  }
  const auto bounds = derive_bounds(d);
  CHECK(bounds.lower[0] == 1.0);
  CHECK(bounds.upper[0] == 4.0);
  CHECK(bounds.degenerate[1]);
  CHECK(bounds.scale(1) == 1.0);
  CHECK(bounds.scale(0) == 3.0);

  const auto med = derive_base_values(d, bounds, BaseStrategy::median);
  CHECK(med.values[0] == 2.0);  // lower middle of {1,2,3,4}
  CHECK(med.values[1] == 7.0);

  const auto zeros = derive_base_values(d, bounds, BaseStrategy::zeros);
  CHECK(zeros.values[0] == 1.0);   // 0 clamped up to L
  CHECK(zeros.values[2] == -6.0);  // 0 clamped down to U

  CHECK_THROWS_AS(derive_base_values(d, bounds, BaseStrategy::explicit_values, {1.0}), Error);
  CHECK_THROWS_AS(derive_base_values(d, bounds, BaseStrategy::explicit_values, {9.0, 7.0, -8.0}), Error);
  CHECK(derive_base_values(d, bounds, BaseStrategy::explicit_values, {3.0, 7.0, -8.0}).values[0] == 3.0);
  CHECK_THROWS_AS(parse_base_strategy("mean"), UsageError);
}

TEST_CASE("lower median") {
  CHECK(lower_median({5.0}) == 5.0);
  CHECK(lower_median({3.0, 1.0}) == 1.0);
  CHECK(lower_median({3.0, 1.0, 2.0}) == 2.0);
  CHECK_THROWS_AS(lower_median({}), Error);
}

TEST_CASE("stratified split of a balanced set") {
  const Dataset d = two_class(50);
  const auto s = split(d, 0.25, 11);
  for (int c = 0; c < 2; ++c) {
    const auto n = std::count(s.test.labels.begin(), s.test.labels.end(), c);
    CHECK((n == 12 || n == 13));
  }
  std::set<std::size_t> all(s.train_indices.begin(), s.train_indices.end());
  for (auto i : s.test_indices) CHECK(all.insert(i).second);
  CHECK(all.size() == d.n_samples());
  CHECK(std::is_sorted(s.train_indices.begin(), s.train_indices.end()));

  const auto again = split(d, 0.25, 11);
  CHECK(again.test_indices == s.test_indices);
  const auto other = split(d, 0.25, 12);
  CHECK(other.test_indices != s.test_indices);
}

TEST_CASE("split rejects a class with a single sample") {
  Dataset d = two_class(5);
  d.labels.back() = 2;
  d.n_classes = 3;
  CHECK_THROWS_AS(split(d, 0.25, 0), Error);
  CHECK_THROWS_AS(split(two_class(5), 1.5, 0), Error);
}

TEST_CASE("stratified folds partition the rows") {
  const Dataset d = two_class(23);
  const auto folds = stratified_folds(d.labels, 2, 10, 3);
  REQUIRE(folds.size() == 10);
  std::vector<int> seen(d.n_samples(), 0);
  std::size_t smallest = d.n_samples(), largest = 0;
  for (const auto& f : folds) {
    for (auto i : f) ++seen[i];
    smallest = std::min(smallest, f.size());
    largest = std::max(largest, f.size());
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  CHECK(largest - smallest <= 2);
  CHECK(stratified_folds(d.labels, 2, 10, 3) == folds);
}

TEST_CASE("standardization") {
  Dataset d = two_class(4);
  const auto st = Standardization::fit(d);
  const auto z = st.apply(d);
  for (std::size_t c = 0; c < z.n_features(); ++c) {
    const auto col = z.features.column(c);
    const double mean = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(col.size());
    double var = 0.0;
    for (double v : col) var += (v - mean) * (v - mean);
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(var / static_cast<double>(col.size()) == doctest::Approx(1.0));
  }
}

TEST_CASE("random streams are reproducible") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  Rng r(1);
  for (int i = 0; i < 1000; ++i) {
    const auto k = r.index(7);
    CHECK(k < 7);
    const double u = r.uniform();
    CHECK((u >= 0.0 && u < 1.0));
  }
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
}

TEST_CASE("fnv-1a reference vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
  CHECK(to_hex(0xabcULL) == "0000000000000abc");
}
