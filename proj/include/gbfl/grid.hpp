#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gbfl/dataset.hpp"
#include "gbfl/matrix.hpp"

namespace gbfl {

/// Gaussian-kernel KDE CDF: mean over points p of Phi((x - p) / bandwidth).
double kde_cdf(std::span<const double> points, double bandwidth, double x);

/// 1.06 * sample std * n^(-1/5), floored at 1e-9.
double silverman_bandwidth(std::span<const double> points);

/// Per-feature equal-probability grid points.
struct GridMatrix {
  Matrix values;                   // (N + 1) x d, column j ascending from L_j to U_j
  int intervals = 0;               // N
  std::vector<double> bandwidths;  // per feature
  std::vector<bool> degenerate;    // constant feature: every point equals the constant

  std::size_t n_features() const { return values.cols(); }
  double at(std::size_t s, std::size_t j) const { return values(s, j); }
  std::vector<double> column(std::size_t j) const { return values.column(j); }
};

struct BandwidthRule {
  /// Empty: Silverman per feature. One entry: shared. Otherwise one per feature.
  std::vector<double> explicit_values;
};

constexpr double kGridCdfTolerance = 1e-6;

/// Endpoints pin to the bounds; interior point n solves kde_cdf = n / N by
/// bisection on [L_j, U_j], clamping to an endpoint when the quantile lies outside.
GridMatrix generate_grid(const Dataset& data, const FeatureBounds& bounds, int intervals,
                         const BandwidthRule& bandwidth = {});

enum class Side { below, above };

/// Index of the grid point of column j nearest to v on the given side of it
/// (strictly, or allowing equality). Equal values resolve to the lowest index
/// for `below` and the highest for `above`.
std::optional<std::size_t> nearest_grid_index(const GridMatrix& grid, std::size_t j, double v,
                                              Side side, bool strict);

/// Grid point of column j inside the open interval (lo, hi) closest to `target`.
/// Equidistant points resolve to the lowest index.
std::optional<std::size_t> closest_grid_index_between(const GridMatrix& grid, std::size_t j,
                                                      double lo, double hi, double target);

/// CSV: first line "# " + JSON {"N", "bandwidths", "degenerate"}, then a header
/// of feature names and N + 1 rows.
void save_grid_csv(const GridMatrix& grid, const std::vector<std::string>& feature_names,
                   const std::string& path);
GridMatrix load_grid_csv(const std::string& path);

}  // namespace gbfl
