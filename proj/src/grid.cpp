#include "gbfl/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "json.hpp"

#include "gbfl/error.hpp"

namespace gbfl {

double kde_cdf(std::span<const double> points, double bandwidth, double x) {
  if (!(bandwidth > 0.0)) throw Error("KDE bandwidth must be positive");
  if (points.empty()) throw Error("KDE needs at least one point");
  double total = 0.0;
  for (double p : points) total += 0.5 * std::erfc(-(x - p) / (bandwidth * std::numbers::sqrt2));
  return total / static_cast<double>(points.size());
}

double silverman_bandwidth(std::span<const double> points) {
  const auto n = static_cast<double>(points.size());
  double sd = 0.0;
  if (points.size() > 1) {
    double mean = 0.0;
    for (double p : points) mean += p;
    mean /= n;
    double ss = 0.0;
    for (double p : points) ss += (p - mean) * (p - mean);
    sd = std::sqrt(ss / (n - 1.0));
  }
  return std::max(1.06 * sd * std::pow(n, -0.2), 1e-9);
}

namespace {

double solve_quantile(std::span<const double> points, double bandwidth, double target, double lo, double hi) {
  if (kde_cdf(points, bandwidth, lo) >= target) return lo;
  if (kde_cdf(points, bandwidth, hi) <= target) return hi;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) return mid;
    const double c = kde_cdf(points, bandwidth, mid);
    if (std::abs(c - target) <= 0.01 * kGridCdfTolerance) return mid;
    (c < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

GridMatrix generate_grid(const Dataset& data, const FeatureBounds& bounds, int intervals,
                         const BandwidthRule& bandwidth) {
  if (intervals < 1) throw Error("grid needs N >= 1 intervals");
  const std::size_t d = data.n_features();
  if (bounds.size() != d) throw Error("bounds and dataset disagree on d");
  const auto& bw = bandwidth.explicit_values;
  if (bw.size() > 1 && bw.size() != d) throw Error("need one bandwidth or one per feature");

  GridMatrix g;
  g.intervals = intervals;
  g.values = Matrix(static_cast<std::size_t>(intervals) + 1, d);
  g.bandwidths.resize(d);
  g.degenerate.resize(d);
  const auto N = static_cast<std::size_t>(intervals);
  for (std::size_t j = 0; j < d; ++j) {
    const auto points = data.features.column(j);
    const double L = bounds.lower[j], U = bounds.upper[j];
    g.bandwidths[j] = bw.empty() ? silverman_bandwidth(points) : bw.size() == 1 ? bw[0] : bw[j];
    if (!(g.bandwidths[j] > 0.0)) throw Error("KDE bandwidth must be positive");
    g.degenerate[j] = !(L < U);
    g.values(0, j) = L;
    g.values(N, j) = U;
    for (std::size_t n = 1; n < N; ++n) {
      g.values(n, j) = g.degenerate[j]
                           ? L
                           : solve_quantile(points, g.bandwidths[j],
                                            static_cast<double>(n) / static_cast<double>(N), L, U);
    }
    // bisection results are already monotone; sorting guards ties from clamping
    auto col = g.values.column(j);
    std::sort(col.begin(), col.end());
    for (std::size_t s = 0; s <= N; ++s) g.values(s, j) = col[s];
  }
  return g;
}

std::optional<std::size_t> nearest_grid_index(const GridMatrix& grid, std::size_t j, double v,
                                              Side side, bool strict) {
  const std::size_t rows = grid.values.rows();
  std::optional<std::size_t> best;
  for (std::size_t s = 0; s < rows; ++s) {
    const double g = grid.at(s, j);
    const bool ok = side == Side::below ? (strict ? g < v : g <= v) : (strict ? g > v : g >= v);
    if (!ok) continue;
    if (!best) {
      best = s;
      continue;
    }
    const double cur = std::abs(grid.at(*best, j) - v);
    const double dist = std::abs(g - v);
    if (dist < cur || (dist == cur && side == Side::above)) best = s;
  }
  return best;
}

std::optional<std::size_t> closest_grid_index_between(const GridMatrix& grid, std::size_t j,
                                                      double lo, double hi, double target) {
  std::optional<std::size_t> best;
  for (std::size_t s = 0; s < grid.values.rows(); ++s) {
    const double g = grid.at(s, j);
    if (!(g > lo && g < hi)) continue;
    if (!best || std::abs(g - target) < std::abs(grid.at(*best, j) - target)) best = s;
  }
  return best;
}

void save_grid_csv(const GridMatrix& grid, const std::vector<std::string>& feature_names,
                   const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  nlohmann::json header = {{"N", grid.intervals}, {"bandwidths", grid.bandwidths}};
  std::vector<bool> deg = grid.degenerate;
  header["degenerate"] = deg;
  out << "# " << header.dump() << '\n';
  for (std::size_t j = 0; j < feature_names.size(); ++j) out << (j ? "," : "") << feature_names[j];
  out << '\n';
  char buf[32];
  for (std::size_t s = 0; s < grid.values.rows(); ++s) {
    for (std::size_t j = 0; j < grid.values.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", grid.at(s, j));
      out << (j ? "," : "") << buf;
    }
    out << '\n';
  }
}

GridMatrix load_grid_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line.rfind("# ", 0) != 0) throw Error(path + ": missing grid JSON header line");
  GridMatrix g;
  try {
    const auto header = nlohmann::json::parse(line.substr(2));
    g.intervals = header.at("N").get<int>();
    g.bandwidths = header.at("bandwidths").get<std::vector<double>>();
    g.degenerate = header.at("degenerate").get<std::vector<bool>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": bad grid header: " + e.what());
  }
  std::getline(in, line);  // feature names
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    for (const auto& f : split_csv_record(line)) row.push_back(std::stod(f));
    g.values.append_row(row);
  }
  if (g.values.rows() != static_cast<std::size_t>(g.intervals) + 1) {
    throw Error(path + ": expected " + std::to_string(g.intervals + 1) + " grid rows");
  }
  return g;
}

}  // namespace gbfl
