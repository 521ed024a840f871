#pragma once

#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

#include "gbfl/explainer.hpp"
#include "gbfl/learners.hpp"

namespace gbfl {

struct ConsistencyReport {
  std::optional<double> c_tb;
  std::optional<double> c_tb_pp;
  std::optional<double> c_tb_pn;  // absent iff n_with_pn == 0
  std::size_t n_samples = 0;
  std::size_t n_with_pn = 0;
  std::optional<double> accuracy;  // against true labels, when supplied
  std::vector<int> per_sample_loss;

  nlohmann::json to_json() const;
  static ConsistencyReport from_json(const nlohmann::json& j);
  bool operator==(const ConsistencyReport&) const = default;
};

/// 0 iff T agrees with B on x and p(x) and, when a PN exists, disagrees on n(x).
int lambda_tb(int pred_b_x, int pred_t_x, int pred_t_pp, std::optional<int> pred_t_pn);

/// Predictions of both models on each sample and its contrast points.
struct ConsistencyInputs {
  std::vector<int> blackbox_x;
  std::vector<int> transparent_x;
  std::vector<int> transparent_pp;
  std::vector<std::optional<int>> transparent_pn;
};

ConsistencyReport consistency(const ConsistencyInputs& inputs, std::span<const int> true_labels = {});

/// Runs the transparent model on every triplet's x, p(x), n(x) and scores it.
ConsistencyReport consistency(const TransparentModel& model, std::span<const ExplanationTriplet> triplets,
                              std::span<const int> true_labels = {});

double accuracy(std::span<const int> predictions, std::span<const int> true_labels);

}  // namespace gbfl
