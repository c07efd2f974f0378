#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "noisebench/data.hpp"
#include "noisebench/losses.hpp"
#include "noisebench/noise.hpp"

namespace noisebench {

enum class EstimationMethod { Anchor, Gold };

struct EstimatedTransition {
    TransitionMatrix matrix;
    EstimationMethod method;
    // Anchor: p(i | anchor_i) per row. Gold: number of validation samples per row.
    std::vector<double> diagnostics;
    // Anchor: dataset index of the anchor chosen for each class.
    std::vector<std::size_t> anchors;
    // Gold with fallback: classes whose row was replaced by an identity row.
    std::vector<std::size_t> fallback_rows;
};

inline constexpr double kDefaultAnchorPercentile = 97.0;

// Unsupervised estimate from a model trained on noisy labels. For each class i the
// anchor is the sample whose p(i | x) sits at the given percentile of that column
// (100 = the literal argmax); row i is the prediction at that anchor, renormalised.
EstimatedTransition estimate_transition_anchor(const DenseMatrix& probs,
                                               double percentile = kDefaultAnchorPercentile);

// Supervised estimate on a clean validation set: row i is the mean prediction over
// validation samples whose true label is i. Throws EstimationError listing any
// class absent from the validation labels.
EstimatedTransition estimate_transition_gold(const DenseMatrix& probs_val,
                                             std::span<const ClassId> val_labels);
// Same, but missing classes get identity rows (and a warning) instead of failing.
EstimatedTransition estimate_transition_gold_or_identity(const DenseMatrix& probs_val,
                                                         std::span<const ClassId> val_labels);

inline constexpr double kCorrectedProbFloor = 1e-12;

// -log((T^T softmax(logits))_y) per sample; clamps the corrected probability at
// 1e-12 and counts each clamp.
PerSampleLoss per_sample_forward_corrected(const DenseMatrix& logits,
                                           std::span<const ClassId> labels,
                                           const TransitionMatrix& transition);
LossOutput forward_corrected_loss(const DenseMatrix& logits, std::span<const ClassId> labels,
                                  const TransitionMatrix& transition);

}  // namespace noisebench
