#include "gbfl/baselines.hpp"

#include "gbfl/error.hpp"

namespace gbfl {

namespace {

TransparentModel raw_tree(std::string method, const Matrix& x, std::span<const int> y, int k,
                          const TreeConfig& config) {
  TransparentModel m;
  m.method = std::move(method);
  m.learner = DecisionTree::fit(x, y, k, config);
  return m;
}

}  // namespace

TransparentModel train_standard(const Dataset& train, const TreeConfig& config) {
  return raw_tree("Standard", train.features, train.labels, train.n_classes, config);
}

TransparentModel train_distilled(const Dataset& train, const BlackBoxModel& blackbox, const TreeConfig& config) {
  if (train.n_samples() == 0) throw Error("cannot distill on an empty dataset");
  const auto y = blackbox.predict_batch(train.features);
  const int k = std::max(train.n_classes, blackbox.n_classes());
  return raw_tree("Distillation", train.features, y, k, config);
}

Dataset augmented_dataset(const Dataset& train, std::span<const ExplanationTriplet> triplets,
                          const BlackBoxModel& blackbox) {
  Dataset out = train;
  out.n_classes = std::max(train.n_classes, blackbox.n_classes());
  Matrix extra;
  for (const auto& t : triplets) extra.append_row(t.pp);
  for (const auto& t : triplets) {
    if (t.pn) extra.append_row(*t.pn);
  }
  if (extra.rows() == 0) return out;
  const auto labels = blackbox.predict_batch(extra);
  for (std::size_t i = 0; i < extra.rows(); ++i) {
    out.features.append_row(extra.row(i));
    out.labels.push_back(labels[i]);
  }
  return out;
}

TransparentModel train_augmented(const Dataset& train, std::span<const ExplanationTriplet> triplets,
                                 const BlackBoxModel& blackbox, const TreeConfig& config) {
  const Dataset aug = augmented_dataset(train, triplets, blackbox);
  return raw_tree("Augmentation", aug.features, aug.labels, aug.n_classes, config);
}

}  // namespace gbfl
