#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gbfl/dataset.hpp"
#include "gbfl/matrix.hpp"

namespace gbfl {

/// Index of the largest entry; the lowest index wins ties.
int argmax(std::span<const double> values);

/// Classifier seen only through its confidence scores.
///
/// Every row returned by confidence_batch lies on the probability simplex and
/// the same input always yields the same row.
class BlackBoxModel {
 public:
  virtual ~BlackBoxModel() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t n_features() const = 0;
  virtual int n_classes() const = 0;

  /// One row of class probabilities per input row.
  virtual Matrix confidence_batch(const Matrix& inputs) const = 0;

  std::vector<double> confidence(std::span<const double> x) const;
  int predict(std::span<const double> x) const;
  std::vector<int> predict_batch(const Matrix& inputs) const;

 protected:
  void check_width(const Matrix& inputs) const;
};

struct MlpConfig {
  std::vector<int> hidden_widths;     // empty: multinomial logistic regression
  std::vector<double> dropout_rates;  // one per hidden layer, train-time only
  int epochs = 200;
  int batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double l2 = 0.0;
  bool standardize_inputs = true;  // affine input layer fitted on the training data

  void validate() const;
  std::string hash() const;
};

/// Feed-forward ReLU network with a softmax head.
class MlpModel final : public BlackBoxModel {
 public:
  struct Layer {
    Matrix weights;  // out x in
    std::vector<double> bias;
  };

  MlpModel(std::vector<double> input_shift, std::vector<double> input_scale,
           std::vector<Layer> layers, std::string config_hash = {});

  std::string kind() const override { return layers_.size() == 1 ? "logistic" : "mlp"; }
  std::size_t n_features() const override { return input_shift_.size(); }
  int n_classes() const override { return static_cast<int>(layers_.back().bias.size()); }
  Matrix confidence_batch(const Matrix& inputs) const override;

  const std::vector<Layer>& layers() const { return layers_; }
  const std::vector<double>& input_shift() const { return input_shift_; }
  const std::vector<double>& input_scale() const { return input_scale_; }
  const std::string& config_hash() const { return config_hash_; }
  std::vector<int> widths() const;

  /// All trainable parameters, layer by layer (weights row-major, then bias).
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> flat);

  /// Mean cross-entropy over the rows and its gradient w.r.t. parameters(), no dropout.
  double loss_and_gradient(const Matrix& inputs, std::span<const int> labels,
                           std::vector<double>& gradient) const;

 private:
  std::vector<double> input_shift_;
  std::vector<double> input_scale_;
  std::vector<Layer> layers_;
  std::string config_hash_;
};

/// Glorot-normal initialized network; input normalization fitted on `train` when enabled.
MlpModel initialize_mlp(const MlpConfig& config, const Dataset& train, std::uint64_t seed);

/// Mini-batch SGD with momentum on softmax cross-entropy. Throws on divergence.
MlpModel train_reference_model(const MlpConfig& config, const Dataset& train, std::uint64_t seed);

/// Two-class rule "class 1 iff x[feature] > threshold" with a logistic confidence ramp.
///
/// P(class 1) = sigmoid(sharpness * (x[feature] - threshold)); at the threshold the
/// scores tie and class 0 wins, so the decision is exactly the strict rule.
class ThresholdModel final : public BlackBoxModel {
 public:
  ThresholdModel(std::size_t n_features, std::size_t feature, double threshold, double sharpness);

  std::string kind() const override { return "threshold"; }
  std::size_t n_features() const override { return n_features_; }
  int n_classes() const override { return 2; }
  Matrix confidence_batch(const Matrix& inputs) const override;

  std::size_t feature() const { return feature_; }
  double threshold() const { return threshold_; }
  double sharpness() const { return sharpness_; }

 private:
  std::size_t n_features_;
  std::size_t feature_;
  double threshold_;
  double sharpness_;
};

/// Adapter for a model living in another process.
///
/// The child reads CSV feature rows on stdin and answers each with one CSV row
/// of K probabilities on stdout. The process stays alive between batches and
/// concurrent callers are serialized.
class ExternalModel final : public BlackBoxModel {
 public:
  /// `n_classes` may be omitted; it is then learned from the first answer.
  ExternalModel(std::string command, std::size_t n_features, std::optional<int> n_classes = std::nullopt);
  ~ExternalModel() override;
  ExternalModel(const ExternalModel&) = delete;
  ExternalModel& operator=(const ExternalModel&) = delete;

  std::string kind() const override { return "external"; }
  std::size_t n_features() const override { return n_features_; }
  int n_classes() const override;
  Matrix confidence_batch(const Matrix& inputs) const override;

  const std::string& command() const { return command_; }

 private:
  void start() const;
  void stop() const;
  [[noreturn]] void fail(const std::string& what) const;

  std::string command_;
  std::size_t n_features_;
  mutable std::optional<int> n_classes_;
  mutable std::mutex mutex_;
  mutable int pid_ = -1;
  mutable int to_child_ = -1;
  mutable int from_child_ = -1;
  mutable std::string pending_;  // bytes read past the last complete line
};

/// Binary model file: "GBFLBB1", u32 LE header length, JSON header, LE float64 blob.
void save_model(const BlackBoxModel& model, const std::filesystem::path& path);

/// Loads a model file; `expected_features`, when given, must match the stored d.
std::unique_ptr<BlackBoxModel> load_model(const std::filesystem::path& path,
                                          std::optional<std::size_t> expected_features = std::nullopt);

}  // namespace gbfl
