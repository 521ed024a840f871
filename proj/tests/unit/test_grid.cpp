#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "gbfl/error.hpp"
#include "gbfl/grid.hpp"
#include "gbfl/random.hpp"

using namespace gbfl;

namespace {

// Composite Simpson integration of the Gaussian KDE density.
double integrated_cdf(const std::vector<double>& pts, double h, double x) {
  const double lo = *std::min_element(pts.begin(), pts.end()) - 12.0 * h;
  if (x <= lo) return 0.0;
  auto density = [&](double t) {
    double s = 0.0;
    for (double p : pts) s += std::exp(-0.5 * (t - p) * (t - p) / (h * h));
    return s / (static_cast<double>(pts.size()) * h * std::sqrt(2.0 * M_PI));
  };
  const int m = 20000;
  const double w = (x - lo) / m;
  double acc = density(lo) + density(x);
  for (int i = 1; i < m; ++i) acc += density(lo + i * w) * (i % 2 ? 4.0 : 2.0);
  return acc * w / 3.0;
}

Dataset column_dataset(const std::vector<std::vector<double>>& rows) {
  Dataset d;
  d.features = Matrix::from_rows(rows);
  d.labels.assign(rows.size(), 0);
  d.n_classes = 1;
  d.class_names = {"0"};
  for (std::size_t j = 0; j < d.features.cols(); ++j) d.feature_names.push_back("f" + std::to_string(j));
  return d;
}

Dataset mixed_dataset(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < n; ++i) {
    const double skewed = std::exp(rng.normal());
    const double bimodal = (rng.uniform() < 0.3 ? -4.0 : 3.0) + rng.normal() * 0.5;
    rows.push_back({rng.uniform(0.0, 10.0), skewed, bimodal});
  }
  return column_dataset(rows);
}

GridMatrix handmade(std::vector<double> column) {
  GridMatrix g;
  g.values = Matrix(column.size(), 1);
  for (std::size_t s = 0; s < column.size(); ++s) g.values(s, 0) = column[s];
  g.intervals = static_cast<int>(column.size()) - 1;
  g.bandwidths = {1.0};
  g.degenerate = {false};
  return g;
}

}  // namespace

TEST_CASE("kde cdf agrees with numeric integration") {
  const std::vector<double> pts{0.0, 0.3, 1.7, 2.0, 5.5};
  for (double h : {0.2, 1.0}) {
    for (double x : {-1.0, 0.1, 1.0, 2.5, 6.0}) {
      CHECK(kde_cdf(pts, h, x) == doctest::Approx(integrated_cdf(pts, h, x)).epsilon(1e-7));
    }
  }
}

TEST_CASE("silverman bandwidth formula") {
  const std::vector<double> pts{1.0, 2.0, 3.0, 4.0};
  const double sd = std::sqrt(5.0 / 3.0);
  CHECK(silverman_bandwidth(pts) == doctest::Approx(1.06 * sd * std::pow(4.0, -0.2)));
  const std::vector<double> flat{2.0, 2.0};
  CHECK(silverman_bandwidth(flat) == 1e-9);
}

TEST_CASE("grid endpoints pin to bounds and interior points hit their quantiles") {
  const auto data = mixed_dataset(400, 3);
  const auto bounds = derive_bounds(data);
  const int n = 10;
  const auto grid = generate_grid(data, bounds, n);
  REQUIRE(grid.values.rows() == static_cast<std::size_t>(n + 1));
  for (std::size_t j = 0; j < 3; ++j) {
    const auto col = data.features.column(j);
    CHECK(grid.at(0, j) == bounds.lower[j]);
    CHECK(grid.at(n, j) == bounds.upper[j]);
    CHECK(grid.bandwidths[j] == doctest::Approx(silverman_bandwidth(col)));
    for (int s = 1; s < n; ++s) {
      CHECK(grid.at(s, j) >= grid.at(s - 1, j));
      const double g = grid.at(s, j);
      const double target = static_cast<double>(s) / n;
      if (g == bounds.lower[j] || g == bounds.upper[j]) continue;  // clamped quantile
      CHECK(std::abs(kde_cdf(col, grid.bandwidths[j], g) - target) < 1e-6);

      // independent dense scan for the first point whose cdf reaches the target
      const double range = bounds.upper[j] - bounds.lower[j];
      const int steps = 40000;
      double scanned = bounds.upper[j];
      for (int k = 0; k <= steps; ++k) {
        const double z = bounds.lower[j] + range * k / steps;
        if (kde_cdf(col, grid.bandwidths[j], z) >= target) {
          scanned = z;
          break;
        }
      }
      CHECK(std::abs(g - scanned) <= 1e-4 * range);
    }
  }
}

TEST_CASE("interior intervals hold about equal mass") {
  const auto data = mixed_dataset(5000, 11);
  const auto bounds = derive_bounds(data);
  const int n = 8;
  const auto grid = generate_grid(data, bounds, n);
  for (std::size_t j = 0; j < 3; ++j) {
    const auto col = data.features.column(j);
    for (int s = 0; s < n; ++s) {
      const double lo = grid.at(s, j), hi = grid.at(s + 1, j);
      const auto count = std::count_if(col.begin(), col.end(), [&](double v) {
        return v >= lo && (s == n - 1 ? v <= hi : v < hi);
      });
      CHECK(static_cast<double>(count) / col.size() == doctest::Approx(1.0 / n).epsilon(0.4));
    }
  }
}

TEST_CASE("constant feature and explicit bandwidths") {
  const auto data = column_dataset({{1.0, 4.0}, {2.0, 4.0}, {3.0, 4.0}});
  const auto bounds = derive_bounds(data);
  const auto grid = generate_grid(data, bounds, 4, {{0.5, 0.25}});
  CHECK(grid.degenerate == std::vector<bool>{false, true});
  for (int s = 0; s <= 4; ++s) CHECK(grid.at(s, 1) == 4.0);
  CHECK(grid.bandwidths == std::vector<double>{0.5, 0.25});
  CHECK(generate_grid(data, bounds, 2, {{0.3}}).bandwidths == std::vector<double>{0.3, 0.3});
  CHECK_THROWS_AS(generate_grid(data, bounds, 0), Error);
  CHECK_THROWS_AS(generate_grid(data, bounds, 3, {{0.1, 0.2, 0.3}}), Error);
  CHECK_THROWS_AS(generate_grid(data, bounds, 3, {{-1.0}}), Error);
}

TEST_CASE("nearest grid point on either side") {
  const auto g = handmade({0.0, 2.5, 5.0, 7.5, 10.0});
  CHECK(nearest_grid_index(g, 0, 5.0, Side::below, true) == 1u);
  CHECK(nearest_grid_index(g, 0, 5.0, Side::below, false) == 2u);
  CHECK(nearest_grid_index(g, 0, 5.0, Side::above, true) == 3u);
  CHECK(nearest_grid_index(g, 0, 6.0, Side::above, false) == 3u);
  CHECK_FALSE(nearest_grid_index(g, 0, 0.0, Side::below, true).has_value());
  CHECK_FALSE(nearest_grid_index(g, 0, 10.0, Side::above, true).has_value());

  const auto dup = handmade({0.0, 5.0, 5.0, 10.0});
  CHECK(nearest_grid_index(dup, 0, 6.0, Side::below, false) == 1u);
  CHECK(nearest_grid_index(dup, 0, 4.0, Side::above, false) == 2u);
}

TEST_CASE("closest grid point inside an open interval") {
  const auto g = handmade({0.0, 2.5, 5.0, 7.5, 10.0});
  CHECK(closest_grid_index_between(g, 0, 2.0, 8.0, 5.2) == 2u);
  CHECK(closest_grid_index_between(g, 0, 2.0, 8.0, 3.75) == 1u);
  CHECK_FALSE(closest_grid_index_between(g, 0, 2.5, 5.0, 3.0).has_value());
}

TEST_CASE("grid csv round trip") {
  const auto data = mixed_dataset(100, 2);
  const auto grid = generate_grid(data, derive_bounds(data), 5);
  const auto path = (std::filesystem::temp_directory_path() / "gbfl_grid.csv").string();
  save_grid_csv(grid, data.feature_names, path);
  const auto back = load_grid_csv(path);
  CHECK(back.values == grid.values);
  CHECK(back.intervals == 5);
  CHECK(back.bandwidths == grid.bandwidths);
  CHECK(back.degenerate == grid.degenerate);
  std::filesystem::remove(path);
}
