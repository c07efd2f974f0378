#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "noisebench/data.hpp"
#include "noisebench/matrix.hpp"

namespace noisebench {

// Mean loss over the batch and its gradient with respect to the logits.
struct LossOutput {
    double value = 0.0;
    DenseMatrix dlogits;
    std::size_t clamp_incidents = 0;  // forward correction: (T^T p)_y clamped at 1e-12
};

// Unreduced form: values[i] = L_i and grads row i = dL_i / dlogits_i.
struct PerSampleLoss {
    std::vector<double> values;
    DenseMatrix grads;
    std::size_t clamp_incidents = 0;
};

// L_q = (1 - p_y^q) / q.
struct GceConfig {
    double q = 0.7;
    void validate() const;
};

// alpha * CCE + beta * RCE, where RCE = -sum_c p_c log(onehot_c) with log 0 -> clamp.
struct SceConfig {
    double alpha = 0.1;
    double beta = 1.0;
    double clamp = -4.0;
    void validate() const;
};

enum class LossKind { Cce, Mae, Gce, Sce };

struct LossSpec {
    LossKind kind = LossKind::Cce;
    GceConfig gce;
    SceConfig sce;

    // "cce" | "mae" | "gce" | "sce"
    static LossSpec parse(std::string_view name);
    std::string name() const;
};

PerSampleLoss per_sample_loss(const LossSpec& spec, const DenseMatrix& logits,
                              std::span<const ClassId> labels);

// value = sum_i w_i L_i / n, dlogits row i = w_i * grad_i / n. Without weights every
// w_i is taken as 1 and the arithmetic is identical to weights of exactly 1.0.
LossOutput reduce_mean(const PerSampleLoss& per_sample,
                       std::optional<std::span<const double>> weights = std::nullopt);

LossOutput cce(const DenseMatrix& logits, std::span<const ClassId> labels);
LossOutput mae(const DenseMatrix& logits, std::span<const ClassId> labels);
LossOutput gce(const DenseMatrix& logits, std::span<const ClassId> labels,
               const GceConfig& cfg = {});
LossOutput sce(const DenseMatrix& logits, std::span<const ClassId> labels,
               const SceConfig& cfg = {});
LossOutput evaluate_loss(const LossSpec& spec, const DenseMatrix& logits,
                         std::span<const ClassId> labels);

// The per-sample loss as a function of a probability vector rather than logits.
double loss_on_probs(const LossSpec& spec, std::span<const double> probs, ClassId label);

using ProbLoss = std::function<double(std::span<const double>, ClassId)>;

// S(p) = sum_y L(p, y) at every grid point; returns max_p |S(p) - mean_p S(p)|.
// Zero exactly when the loss satisfies the symmetric-loss condition on the grid.
double symmetry_defect(const ProbLoss& loss, const std::vector<std::vector<double>>& grid);
double symmetry_defect(const LossSpec& spec, const std::vector<std::vector<double>>& grid);

// NT-Xent over 2N rows ordered as positive pairs (2k, 2k+1), cosine similarity,
// temperature tau. The value is the mean of l(i, j) over all 2N anchors, i.e. both
// orders of every pair. With exclude_self the denominator skips k = i (standard
// form); exclude_self = false keeps the k = i term.
LossOutput nt_xent(const DenseMatrix& z, double tau, bool exclude_self = true);

}  // namespace noisebench
