#include "noisebench/correction.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "noisebench/errors.hpp"

namespace noisebench {

namespace {

constexpr double kEstimateTolerance = 1e-9;

void check_probs(const DenseMatrix& probs, const char* who) {
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        double s = 0.0;
        for (double v : probs.row(i)) {
            if (!(v >= 0.0)) throw ContractError(std::string(who) + ": negative or NaN probability");
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-6) {
            throw ContractError(std::string(who) + ": row " + std::to_string(i) +
                                " is not on the simplex");
        }
    }
}

EstimatedTransition gold_estimate(const DenseMatrix& probs_val, std::span<const ClassId> val_labels,
                                  bool identity_fallback) {
    check_probs(probs_val, "estimate_transition_gold");
    if (probs_val.rows() != val_labels.size()) {
        throw DimensionError("estimate_transition_gold: probability rows and labels differ");
    }
    const std::size_t classes = probs_val.cols();
    DenseMatrix t(classes, classes);
    std::vector<double> counts(classes, 0.0);
    for (std::size_t i = 0; i < val_labels.size(); ++i) {
        const ClassId y = val_labels[i];
        if (y >= classes) throw DimensionError("estimate_transition_gold: label out of range");
        counts[y] += 1.0;
        for (std::size_t j = 0; j < classes; ++j) t(y, j) += probs_val(i, j);
    }
    std::vector<std::size_t> missing;
    for (std::size_t c = 0; c < classes; ++c) {
        if (counts[c] == 0.0) missing.push_back(c);
    }
    if (!missing.empty() && !identity_fallback) {
        std::string list;
        for (std::size_t c : missing) list += (list.empty() ? "" : ",") + std::to_string(c);
        throw EstimationError("estimate_transition_gold: classes missing from validation: " + list,
                              missing);
    }
    for (std::size_t c = 0; c < classes; ++c) {
        auto row = t.row(c);
        if (counts[c] == 0.0) {
            row[c] = 1.0;
            continue;
        }
        for (double& v : row) v /= counts[c];
        // Renormalise away the accumulated rounding so rows sum to 1.
        const double s = std::accumulate(row.begin(), row.end(), 0.0);
        for (double& v : row) v /= s;
    }
    if (!missing.empty()) {
        warn("gold transition estimate: " + std::to_string(missing.size()) + " of " +
             std::to_string(classes) + " classes absent from clean validation, using identity rows");
    }
    check_row_stochastic(t, kEstimateTolerance);
    return EstimatedTransition{TransitionMatrix(std::move(t)), EstimationMethod::Gold,
                               std::move(counts), {}, std::move(missing)};
}

}  // namespace

EstimatedTransition estimate_transition_anchor(const DenseMatrix& probs, double percentile) {
    if (!(percentile >= 0.0 && percentile <= 100.0)) {
        throw ConfigError("anchor percentile must be in [0, 100]");
    }
    check_probs(probs, "estimate_transition_anchor");
    const std::size_t n = probs.rows();
    const std::size_t classes = probs.cols();
    if (n < classes) {
        throw ContractError("estimate_transition_anchor: need at least as many samples as classes");
    }
    const auto rank = static_cast<std::size_t>(
        std::llround(percentile / 100.0 * static_cast<double>(n - 1)));

    DenseMatrix t(classes, classes);
    std::vector<double> confidence(classes);
    std::vector<std::size_t> anchors(classes);
    std::vector<std::size_t> order(n);
    for (std::size_t c = 0; c < classes; ++c) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return probs(a, c) < probs(b, c); });
        if (probs(order.back(), c) <= 0.0) {
            throw EstimationError("estimate_transition_anchor: class " + std::to_string(c) +
                                      " has zero predicted mass on every sample (degenerate row)",
                                  {c});
        }
        const std::size_t anchor = order[rank];
        anchors[c] = anchor;
        confidence[c] = probs(anchor, c);
        auto row = t.row(c);
        const auto p = probs.row(anchor);
        const double s = std::accumulate(p.begin(), p.end(), 0.0);
        for (std::size_t j = 0; j < classes; ++j) row[j] = p[j] / s;
    }
    check_row_stochastic(t, kEstimateTolerance);
    return EstimatedTransition{TransitionMatrix(std::move(t)), EstimationMethod::Anchor,
                               std::move(confidence), std::move(anchors), {}};
}

EstimatedTransition estimate_transition_gold(const DenseMatrix& probs_val,
                                             std::span<const ClassId> val_labels) {
    return gold_estimate(probs_val, val_labels, false);
}

EstimatedTransition estimate_transition_gold_or_identity(const DenseMatrix& probs_val,
                                                         std::span<const ClassId> val_labels) {
    return gold_estimate(probs_val, val_labels, true);
}

PerSampleLoss per_sample_forward_corrected(const DenseMatrix& logits,
                                           std::span<const ClassId> labels,
                                           const TransitionMatrix& transition) {
    const std::size_t classes = logits.cols();
    if (transition.classes() != classes) {
        throw DimensionError("forward correction: transition has " +
                             std::to_string(transition.classes()) + " classes, logits have " +
                             std::to_string(classes));
    }
    if (logits.rows() != labels.size()) {
        throw DimensionError("forward correction: logit rows and labels differ");
    }
    PerSampleLoss out;
    out.values.resize(labels.size());
    out.grads = softmax(logits);
    std::vector<double> g(classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const ClassId y = labels[i];
        if (y >= classes) throw DimensionError("forward correction: label out of range");
        auto p = out.grads.row(i);
        double corrected = 0.0;
        for (std::size_t k = 0; k < classes; ++k) corrected += transition(k, y) * p[k];
        if (corrected < kCorrectedProbFloor) {
            corrected = kCorrectedProbFloor;
            ++out.clamp_incidents;
        }
        out.values[i] = -std::log(corrected);
        // dL/dp_k = -T[k][y] / q_y, chained through the softmax Jacobian.
        double mixed = 0.0;
        for (std::size_t k = 0; k < classes; ++k) {
            g[k] = -transition(k, y) / corrected;
            mixed += g[k] * p[k];
        }
        for (std::size_t k = 0; k < classes; ++k) p[k] = p[k] * (g[k] - mixed);
    }
    return out;
}

LossOutput forward_corrected_loss(const DenseMatrix& logits, std::span<const ClassId> labels,
                                  const TransitionMatrix& transition) {
    return reduce_mean(per_sample_forward_corrected(logits, labels, transition));
}

}  // namespace noisebench
