#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gbfl/blackbox.hpp"
#include "gbfl/dataset.hpp"

namespace gbfl {

/// Settings of the contrastive search.
///
/// The l1/l2 penalties, the finite-difference step and the snap threshold are
/// all measured in range-normalized units, (v_j - anchor_j) / (U_j - L_j), so one
/// configuration works across features of very different magnitude.
struct ExplainerConfig {
  double kappa = 0.1;          // confidence margin
  double l1_strength = 0.1;
  double l2_strength = 1.0;
  int max_iters = 500;
  double step_size = 0.05;     // decays as step_size / sqrt(t)
  double fd_step = 1e-4;
  double snap_epsilon = 1e-3;
  /// Hinge on log C(y) - log max C(other) instead of the raw confidence gap.
  /// On a softmax model this is the logit gap, which keeps gradients alive
  /// where the confidences saturate.
  bool log_margin = true;
  std::uint64_t seed = 0;      // reserved; central differences are deterministic

  void validate() const;
};

struct SearchDiagnostics {
  int iterations = 0;
  double margin = 0.0;     // C(y) - max other C at the returned point
  double objective = 0.0;  // at the returned point (before snapping)
  /// Best objective among valid iterates after each iteration (+inf while none).
  std::vector<double> best_objective_history;
};

struct PpResult {
  std::vector<double> point;
  bool fell_back = false;  // no valid iterate improved on x
  SearchDiagnostics diagnostics;
};

struct PnResult {
  std::optional<std::vector<double>> point;
  SearchDiagnostics diagnostics;
};

/// Pertinent positive: sparse move from x toward b that keeps the predicted class.
PpResult search_pp(const BlackBoxModel& model, std::span<const double> x, const BaseValues& base,
                   const FeatureBounds& bounds, const ExplainerConfig& config);

/// Pertinent negative: sparse move from x away from b that changes the predicted class.
PnResult search_pn(const BlackBoxModel& model, std::span<const double> x, const BaseValues& base,
                   const FeatureBounds& bounds, const ExplainerConfig& config);

std::vector<double> find_pp(const BlackBoxModel& model, std::span<const double> x,
                            const BaseValues& base, const FeatureBounds& bounds,
                            const ExplainerConfig& config);

std::optional<std::vector<double>> find_pn(const BlackBoxModel& model, std::span<const double> x,
                                           const BaseValues& base, const FeatureBounds& bounds,
                                           const ExplainerConfig& config);

/// Objective minimized by search_pp, exposed for oracles and diagnostics.
double pp_objective(std::span<const double> confidences, int label, std::span<const double> point,
                    const BaseValues& base, const FeatureBounds& bounds, const ExplainerConfig& config);

/// Objective minimized by search_pn.
double pn_objective(std::span<const double> confidences, int label, std::span<const double> point,
                    std::span<const double> x, const FeatureBounds& bounds,
                    const ExplainerConfig& config);

struct ExplanationTriplet {
  std::size_t sample_index = 0;
  std::vector<double> x;
  int y_blackbox = 0;
  std::vector<double> pp;
  std::optional<std::vector<double>> pn;
  std::size_t pp_sparsity = 0;  // entries with pp_j != b_j
  std::size_t pn_sparsity = 0;  // entries with pn_j != x_j
  bool pp_fallback = false;
  int pp_iterations = 0;
  int pn_iterations = 0;
  double pp_margin = 0.0;
  double pn_margin = 0.0;
  std::optional<std::string> error;
};

struct ExplanationSet {
  std::vector<ExplanationTriplet> triplets;
  double pn_coverage = 0.0;
  double mean_pp_sparsity = 0.0;
  double mean_pn_sparsity = 0.0;  // over samples with a PN
  std::size_t n_fallback = 0;
  std::size_t n_errors = 0;

  void summarize();
};

/// One triplet per row of `data`, in order. Per-sample failures are recorded
/// on the triplet (PP falls back to x, PN absent) instead of aborting.
/// `index_offset` maps row i to sample_index = sample_indices[i] when given.
ExplanationSet explain_dataset(const BlackBoxModel& model, const Dataset& data,
                               const BaseValues& base, const FeatureBounds& bounds,
                               const ExplainerConfig& config,
                               std::span<const std::size_t> sample_indices = {});

/// CSV with columns sample_index, kind (PP|PN), then one column per feature.
void save_explanations_csv(const ExplanationSet& set, const std::vector<std::string>& feature_names,
                           const std::string& path);

/// JSON sidecar: black-box predictions and per-sample diagnostics.
void save_explanations_sidecar(const ExplanationSet& set, const std::string& path);

/// Rebuilds triplets from the CSV + sidecar pair, taking x from `data` by row order.
ExplanationSet load_explanations(const std::string& csv_path, const std::string& sidecar_path,
                                 const Dataset& data, const BaseValues& base);

}  // namespace gbfl
