#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gbfl/baselines.hpp"
#include "gbfl/blackbox.hpp"
#include "gbfl/clauses.hpp"
#include "gbfl/dataset.hpp"
#include "gbfl/explainer.hpp"
#include "gbfl/grid.hpp"
#include "gbfl/learners.hpp"
#include "gbfl/metrics.hpp"

namespace gbfl {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kVersion = "gbfl 0.1.0";

struct BlackBoxSpec {
  std::string kind = "mlp";  // mlp | logistic | threshold | external | file
  MlpConfig mlp{{20, 10}, {}, 200, 32, 0.05, 0.9, 0.0, true};
  std::size_t feature = 0;   // threshold
  double threshold = 0.0;
  double sharpness = 2.0;
  std::string command;       // external
  std::optional<int> n_classes;
  std::string path;          // file

  nlohmann::json to_json() const;
};

enum class LearnerKind { tree, logistic };

struct PipelineConfig {
  std::string data_path;
  std::string label_column = "label";
  std::vector<std::string> classes;  // pinned class ids; unseen names are appended
  double test_fraction = 0.25;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  BaseStrategy base = BaseStrategy::median;
  std::vector<double> base_values;
  BlackBoxSpec blackbox;
  ExplainerConfig explainer;
  std::vector<int> grid_points{10, 20, 30};  // N + 1
  std::vector<int> deltas{1, 2, 3, 4};
  int max_height = 5;
  std::vector<int> heights;  // empty: 1..max_height
  int min_leaf = 1;
  int cv_folds = 10;
  LearnerKind learner = LearnerKind::tree;
  LogisticConfig logistic;
  TargetKind targets = TargetKind::blackbox;
  std::size_t min_support = 0;
  std::vector<double> bandwidths;  // empty: Silverman
  bool evaluate_on_train = false;
  std::size_t top_k = 5;
  std::string out_dir = "out";

  /// Unknown keys are errors; relative paths resolve against `base_dir`.
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static PipelineConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;
  std::vector<int> height_set() const;
};

/// Black-box for one seed: trained on `train` for mlp/logistic, otherwise built or loaded.
std::unique_ptr<BlackBoxModel> make_blackbox(const BlackBoxSpec& spec, const Dataset& train, std::uint64_t seed);

struct CvSearch {
  std::vector<int> grid_points;  // N + 1
  std::vector<int> deltas;
  std::vector<int> heights;
  int folds = 10;
  int min_leaf = 1;
  LearnerKind learner = LearnerKind::tree;
  LogisticConfig logistic;
  TargetKind targets = TargetKind::blackbox;
  std::size_t min_support = 0;
  std::vector<double> bandwidths;
};

struct CvChoice {
  int grid_points = 0;
  int delta = 0;
  int height = 0;
  double c_tb = 0.0;      // mean validation score, NaN when not cross-validated
  double accuracy = 0.0;
  bool searched = false;
};

/// Exhaustive search over (N + 1, delta, height) by mean validation consistency.
/// `triplets` are aligned with the rows of `train`; folds are stratified by true label.
CvChoice cross_validate(const Dataset& train, std::span<const ExplanationTriplet> triplets,
                        const FeatureBounds& bounds, const BaseValues& base, const CvSearch& search,
                        std::uint64_t seed);

enum class Baseline { standard, distillation, augmentation };

/// Height search for a raw-feature baseline with the same objective and folds.
CvChoice cross_validate_baseline(Baseline which, const Dataset& train, std::span<const ExplanationTriplet> triplets,
                                 const BlackBoxModel& blackbox, const std::vector<int>& heights, int folds,
                                 int min_leaf, std::uint64_t seed);

/// Final GBFL model on the full training split.
TransparentModel fit_gbfl(const Dataset& train, std::span<const ExplanationTriplet> triplets, const GridMatrix& grid,
                          const BaseValues& base, int delta, int height, const PipelineConfig& config);

struct MethodResult {
  std::string method;
  ConsistencyReport metrics;
  nlohmann::json hyperparameters;
  std::vector<std::string> top_rules;  // GBFL only

  bool operator==(const MethodResult&) const = default;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::optional<std::string> error;  // "stage: message" when the seed failed
  double blackbox_accuracy = 0.0;
  double pn_coverage_train = 0.0;
  double pn_coverage_test = 0.0;
  std::size_t n_clauses = 0;
  std::vector<MethodResult> methods;

  bool operator==(const SeedResult&) const = default;
};

struct MetricSummary {
  std::optional<double> c_tb, c_tb_pp, c_tb_pn, accuracy;
  bool operator==(const MetricSummary&) const = default;
};

struct RunReport {
  int schema_version = kSchemaVersion;
  std::string version = kVersion;
  nlohmann::json config;
  std::string config_hash;
  std::string started_at;
  std::string finished_at;
  std::vector<SeedResult> seeds;
  std::map<std::string, MetricSummary> means;
  std::optional<double> blackbox_accuracy_mean;

  nlohmann::json to_json() const;
  static RunReport from_json(const nlohmann::json& j);
  bool operator==(const RunReport&) const = default;
};

inline const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names{"Standard", "GBFL", "Distillation", "Augmentation"};
  return names;
}

/// Artifacts of one seed kept for file emission.
struct SeedArtifacts {
  std::uint64_t seed = 0;
  Dataset train, test;
  std::unique_ptr<BlackBoxModel> blackbox;
  ExplanationSet train_explanations, test_explanations;
  std::optional<GridMatrix> grid;
  std::vector<TransparentModel> models;
};

using ProgressFn = std::function<void(const std::string&)>;

struct PipelineOutput {
  RunReport report;
  std::vector<SeedArtifacts> artifacts;
};

PipelineOutput run_pipeline(const PipelineConfig& config, const ProgressFn& progress = {});

std::string render_markdown(const RunReport& report);
std::string render_rules(const RunReport& report);

/// report.json, report.md, rules.txt, explanations.csv and per-seed model files.
void emit_report(const PipelineOutput& output, const PipelineConfig& config, const std::filesystem::path& dir);

}  // namespace gbfl
