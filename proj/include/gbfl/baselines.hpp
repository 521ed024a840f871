#pragma once

#include <span>

#include "gbfl/blackbox.hpp"
#include "gbfl/dataset.hpp"
#include "gbfl/explainer.hpp"
#include "gbfl/learners.hpp"

namespace gbfl {

// The comparison schemes all fit a raw-feature CART; only the training set differs.

/// Tree on the original features and true labels.
TransparentModel train_standard(const Dataset& train, const TreeConfig& config);

/// Tree on the original features, labeled by the black-box's hard predictions.
TransparentModel train_distilled(const Dataset& train, const BlackBoxModel& blackbox, const TreeConfig& config);

/// Training rows for the augmentation scheme: originals with true labels, then
/// each PP and each PN labeled by the black-box at that point.
Dataset augmented_dataset(const Dataset& train, std::span<const ExplanationTriplet> triplets,
                          const BlackBoxModel& blackbox);

TransparentModel train_augmented(const Dataset& train, std::span<const ExplanationTriplet> triplets,
                                 const BlackBoxModel& blackbox, const TreeConfig& config);

}  // namespace gbfl
