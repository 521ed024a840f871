#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gbfl/matrix.hpp"

namespace gbfl {

/// Numeric tabular data with dense class ids.
struct Dataset {
  Matrix features;                       // n_samples x d
  std::vector<int> labels;               // in [0, n_classes)
  std::vector<std::string> feature_names;
  std::vector<std::string> class_names;  // class_names[k] is the raw label mapped to k
  int n_classes = 0;

  std::size_t n_samples() const { return features.rows(); }
  std::size_t n_features() const { return features.cols(); }

  /// Throws if any invariant (finite values, label range, non-empty) is broken.
  void validate() const;

  /// Rows in the given order, with the same label mapping.
  Dataset subset(std::span<const std::size_t> indices) const;
};

/// Reads an RFC-4180 style CSV with a header row.
///
/// Labels are remapped to 0..K-1 by first appearance. When `known_classes` is
/// given, those names keep their ids and unseen names are appended. An empty
/// `label_column` treats every column as a feature (all labels 0, K = 1).
Dataset load_csv(const std::filesystem::path& path, const std::string& label_column,
                 const std::vector<std::string>& known_classes = {});

/// Parses CSV text; `source` is only used in error messages.
Dataset parse_csv(const std::string& text, const std::string& label_column,
                  const std::vector<std::string>& known_classes = {},
                  const std::string& source = "<memory>");

/// Writes features with 17 significant digits and the raw label names.
void save_csv(const Dataset& data, const std::filesystem::path& path,
              const std::string& label_column = "label");

/// Splits one CSV record into fields, honoring double-quote escaping.
std::vector<std::string> split_csv_record(const std::string& line);

/// Label mapping as JSON text: {"label_column": ..., "classes": [...]}.
std::string label_mapping_json(const Dataset& data, const std::string& label_column);

struct FeatureBounds {
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<bool> degenerate;  // lower == upper

  std::size_t size() const { return lower.size(); }
  /// U_j - L_j, or 1 for a degenerate feature so it can be used as a scale.
  double scale(std::size_t j) const;
};

FeatureBounds derive_bounds(const Dataset& data);

struct BaseValues {
  std::vector<double> values;
};

enum class BaseStrategy { median, zeros, explicit_values };

BaseStrategy parse_base_strategy(const std::string& name);

/// Base values per strategy; `explicit_values` must have length d and lie in bounds.
BaseValues derive_base_values(const Dataset& data, const FeatureBounds& bounds,
                              BaseStrategy strategy,
                              const std::vector<double>& explicit_values = {});

/// Lower-middle median; the input is copied.
double lower_median(std::vector<double> values);

struct SplitResult {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

/// Stratified, seed-deterministic train/test split.
SplitResult split(const Dataset& data, double test_fraction, std::uint64_t seed);

/// Stratified k-fold assignment; returns the validation indices of each fold.
std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> labels,
                                                       int n_classes, int folds,
                                                       std::uint64_t seed);

/// Per-feature affine map to zero mean and unit variance (constant columns keep scale 1).
struct Standardization {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardization fit(const Dataset& data);
  Dataset apply(const Dataset& data) const;
};

}  // namespace gbfl
