#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "noisebench/data.hpp"
#include "noisebench/model.hpp"
#include "noisebench/training.hpp"

namespace noisebench {

// ---------------------------------------------------------------------------
// Kernel mean matching
//
// Weights w for n training points so that the weighted training mean embedding
// matches the reference mean embedding in an RBF RKHS:
//
//   J(w) = || (1/n) sum_i w_i phi(x_i) - (1/m) sum_j phi(x'_j) ||^2
//        = w^T K w / n^2 - 2 w^T kappa / n + c
//
// with K_ik = k(x_i, x_k), kappa_i = (1/m) sum_j k(x_i, x'_j) and c the
// reference self-term, subject to 0 <= w_i <= B and |mean(w) - 1| <= eps.
// ---------------------------------------------------------------------------

struct KmmConfig {
    std::optional<double> bandwidth;  // RBF width sigma; median heuristic when empty
    double bound = 5.0;               // B
    double eps = 0.05;
    std::size_t max_iter = 5000;
    double tol = 1e-6;

    void validate() const;
};

struct KmmProblem {
    DenseMatrix gram;           // n x n
    std::vector<double> kappa;  // n
    double constant = 0.0;      // (1/m^2) sum k(x'_j, x'_l)
    double bandwidth = 1.0;

    double objective(std::span<const double> w) const;
};

// Median pairwise distance over the pooled points (strided subsample above 512
// points). Returns 1 when every point coincides.
double median_bandwidth(const DenseMatrix& train, const DenseMatrix& ref);
KmmProblem build_kmm_problem(const DenseMatrix& train, const DenseMatrix& ref, double bandwidth);

// Euclidean projection onto {0 <= w <= bound, n(1-eps) <= sum w <= n(1+eps)}.
std::vector<double> project_kmm_feasible(std::span<const double> v, double bound, double eps);

struct KmmResult {
    std::vector<double> weights;
    double objective = 0.0;
    bool converged = false;
    std::size_t iterations = 0;
    double bandwidth = 0.0;
    std::vector<double> objective_trace;  // objective of the kept iterate, one entry per iteration
};

// Monotone accelerated projected gradient on the QP, started from w = 1. Every
// iterate is projected, so the result is feasible even without convergence.
KmmResult kmm_weights(const DenseMatrix& train, const DenseMatrix& ref, const KmmConfig& cfg);

// ---------------------------------------------------------------------------
// Dynamic importance weighting: per epoch, KMM on per-sample loss values (train vs
// clean validation) yields weights for one pass of weighted CCE training.
// ---------------------------------------------------------------------------

enum class DiwFeatureSpace { LossValue, Raw };

struct DiwConfig {
    KmmConfig kmm;
    DiwFeatureSpace features = DiwFeatureSpace::LossValue;
    bool force_unit_weights = false;
};

struct KmmBatchLog {
    std::size_t batch = 0;
    double objective = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    double mean_weight = 0.0;
};

struct DiwEpochReport {
    double mean_loss = 0.0;
    std::vector<KmmBatchLog> kmm;
    // Weight given to each training sample this epoch (index-aligned with train).
    std::vector<double> weights;
};

// KMM is solved per mini-batch of the epoch against the whole clean validation
// set, then the same batches are used for the weighted SGD pass.
DiwEpochReport diw_epoch(Classifier& model, ClassifierOptim& optim, const LabeledSet& train,
                         const LabeledSet& clean_val, const DiwConfig& cfg,
                         const TrainConfig& tcfg, std::size_t epoch, double lr);

// ---------------------------------------------------------------------------
// Meta-weight network: a scalar loss value -> weight in (0, 1) through a
// one-hidden-layer ReLU MLP with sigmoid output.
// ---------------------------------------------------------------------------

struct MetaNet {
    Network net;
    // When set the net is bypassed and every sample gets this weight; meta updates
    // are skipped. Used for reductions to plain SGD.
    std::optional<double> constant;

    static MetaNet create(std::size_t hidden, std::uint64_t seed);
    static MetaNet constant_output(double value);
};

double metanet_weight(const MetaNet& meta, double loss_value);
std::vector<double> metanet_weights(const MetaNet& meta, std::span<const double> loss_values);
// w_i * n / sum_j w_j, so the batch mean weight is 1 and the weights only set
// relative emphasis. Returned unchanged when the sum is not positive.
std::vector<double> normalize_batch_weights(std::span<const double> w);
// Gradient of sum_i dweights[i] * w_i with respect to the meta parameters.
ParamSet metanet_backward(const MetaNet& meta, std::span<const double> loss_values,
                          std::span<const double> dweights);

// Gradient of the clean validation CCE after one virtual SGD step
//   theta_hat = theta - lr * grad_theta mean_i v_i(meta) L_i(theta)
// where v = normalize_batch_weights(metanet_weights(meta, L)),
// with respect to the meta parameters, differentiated through the step. The
// weights are treated as constants inside the virtual gradient.
ParamSet mwnet_meta_gradient(const Classifier& model, const MetaNet& meta,
                             const DenseMatrix& train_x, std::span<const ClassId> train_y,
                             const DenseMatrix& val_x, std::span<const ClassId> val_y, double lr);

struct MwnetStepReport {
    double train_loss = 0.0;  // weighted, with the updated meta net
    bool meta_skipped = false;
};

// Virtual step, meta update (plain SGD on the meta parameters), then the real
// SGD+momentum step on the weighted loss using the updated meta net.
MwnetStepReport mwnet_step(Classifier& model, ClassifierOptim& optim, MetaNet& meta,
                           const DenseMatrix& train_x, std::span<const ClassId> train_y,
                           const DenseMatrix& val_x, std::span<const ClassId> val_y,
                           const TrainConfig& cfg, double lr, double meta_lr);

struct MwnetConfig {
    std::size_t hidden = 100;
    std::optional<double> meta_lr;  // defaults to the current model learning rate
};

struct MwnetTrainReport {
    std::size_t skipped_meta_steps = 0;
    std::vector<double> epoch_loss;
};

MwnetTrainReport train_mwnet(Classifier& model, MetaNet& meta, const LabeledSet& train,
                             const LabeledSet& clean_val, const MwnetConfig& cfg,
                             const TrainConfig& tcfg);

}  // namespace noisebench
