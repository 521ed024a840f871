#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gbfl/dataset.hpp"
#include "gbfl/explainer.hpp"
#include "gbfl/grid.hpp"

namespace gbfl {

struct Bound {
  double value = 0.0;
  bool inclusive = false;

  bool operator==(const Bound&) const = default;
};

/// Interval condition on one feature: lower (<=|<) z_j (<=|<) upper.
struct Literal {
  std::size_t feature = 0;
  std::optional<Bound> lower;
  std::optional<Bound> upper;

  bool contains(double v) const;
  /// Tightens this literal with another on the same feature; false if empty.
  bool intersect(const Literal& other);

  bool operator==(const Literal&) const = default;
};

/// Conjunction of literals, one per feature, sorted by feature.
struct Clause {
  std::vector<Literal> literals;
  std::vector<std::size_t> provenance;  // generating sample indices
  bool has_pn_literal = false;          // a PN rounding bound survived intersection
  std::string id;                       // hash of the canonical literal form

  bool evaluate(std::span<const double> x) const;
  /// Canonical text: exact bound values, used for hashing and dedup.
  std::string canonical() const;
  void assign_id();
};

enum class TargetKind { blackbox, true_labels };

TargetKind parse_target_kind(const std::string& name);

/// Turns one explanation triplet into a grid-rounded conjunction.
/// Returns nothing when no literal is produced or a feature's interval is empty.
std::optional<Clause> clause_from_triplet(const ExplanationTriplet& triplet, const GridMatrix& grid,
                                          const BaseValues& base, int delta);

/// 1 iff x satisfies every literal.
int evaluate_clause(const Clause& clause, std::span<const double> x);

/// Binary design matrix: rows are samples, columns are clauses.
struct BooleanDataset {
  std::size_t rows = 0;
  std::vector<Clause> clauses;
  std::vector<std::uint8_t> values;  // row-major rows x clauses.size()
  std::vector<int> targets;
  int n_classes = 0;

  std::size_t cols() const { return clauses.size(); }
  std::uint8_t at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
  Matrix as_matrix() const;
};

/// Clause activations of one raw sample.
std::vector<double> clause_features(std::span<const Clause> clauses, std::span<const double> x);

/// Clause activations of every row of a raw feature matrix.
Matrix clause_feature_matrix(std::span<const Clause> clauses, const Matrix& raw);

struct BooleanBuildOptions {
  int delta = 0;
  TargetKind targets = TargetKind::blackbox;
  std::size_t min_support = 0;  // drop clauses satisfied by fewer training rows
};

/// Generates, deduplicates (first occurrence keeps the column), and evaluates clauses.
/// Throws when no clause survives.
BooleanDataset build_boolean_dataset(std::span<const ExplanationTriplet> triplets, const GridMatrix& grid,
                                     const BaseValues& base, const Dataset& data,
                                     const BooleanBuildOptions& options);

/// Listing-style rendering, e.g. "7.50>z>=2.50 & ..." with two decimals.
std::string pretty_clause(const Clause& clause, const std::vector<std::string>& feature_names);

std::string clauses_to_json(std::span<const Clause> clauses, const std::vector<std::string>& feature_names);
std::vector<Clause> clauses_from_json(const std::string& text);

}  // namespace gbfl
