#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "noisebench/contrastive.hpp"
#include "noisebench/data.hpp"
#include "noisebench/model.hpp"

namespace noisebench {

struct CoLearnConfig {
    double noise_ratio = 0.0;                 // r, must be supplied by the caller
    double agreement_threshold = 0.9;         // tau_a
    std::optional<double> keep_fraction;      // defaults to 1 - r
    double pseudo_injection_weight = 0.5;
    double contrastive_weight = 1.0;
    double tau = 0.5;                         // NT-Xent temperature and prototype softmax temperature
    double prototype_momentum = 0.9;
    AugmentSpec augment;
    // false disables trusted-set filtering and pseudo-labels (every sample trusted).
    bool filter = true;

    void validate() const;
    double keep() const { return keep_fraction ? *keep_fraction : 1.0 - noise_ratio; }
};

// Shared encoder (inside `cls`), classification head (cls.head) and projection
// head on the encoder output. Prototypes are unit-norm per-class means of the
// projection embeddings.
struct CoLearnModel {
    Classifier cls;
    Network proj;
    DenseMatrix prototypes;  // C x proj_dim

    static CoLearnModel create(const Classifier& cls, std::size_t proj_dim, std::uint64_t seed);
};

struct CoLearnBatchSelection {
    std::vector<bool> trusted;
    std::vector<std::optional<ClassId>> pseudo;  // set only for untrusted rows
    std::size_t agreed = 0;                      // trusted before padding
};

// Steps (1), (2) and (4) for one batch: agreement of the two heads with the given
// label, small-loss padding up to ceil(keep * B), and pseudo-labels from head
// agreement among the rest. Deterministic; ties broken by row index.
CoLearnBatchSelection select_trusted(const DenseMatrix& cls_probs, const DenseMatrix& proto_probs,
                                     std::span<const ClassId> labels, std::span<const double> cce_values,
                                     const CoLearnConfig& cfg);

// Softmax over cosine similarity between each normalised embedding and each prototype.
DenseMatrix prototype_probs(const DenseMatrix& embeddings, const DenseMatrix& prototypes, double tau);

struct CoLearnEpochStats {
    double mean_loss = 0.0;
    std::size_t trusted = 0;
    std::size_t trusted_clean = 0;  // only counted when ground truth is available
    std::size_t pseudo = 0;
    std::size_t pseudo_correct = 0;
    std::size_t skipped_batches = 0;

    double trusted_precision() const {
        return trusted ? static_cast<double>(trusted_clean) / static_cast<double>(trusted) : 0.0;
    }
};

struct CoLearnOptim {
    ClassifierOptim cls;
    OptimState proj;

    static CoLearnOptim for_model(const CoLearnModel& model);
};

// Initialises the prototypes from the given labels under the current model.
void init_prototypes(CoLearnModel& model, const LabeledSet& train);

CoLearnEpochStats colearn_epoch(CoLearnModel& model, CoLearnOptim& optim, const LabeledSet& train,
                                const CoLearnConfig& cfg, const TrainConfig& tcfg, std::size_t epoch,
                                double lr);

struct CoLearnReport {
    std::vector<CoLearnEpochStats> epochs;
    std::size_t skipped_batches = 0;
};

CoLearnReport train_colearn(CoLearnModel& model, const LabeledSet& train, const CoLearnConfig& cfg,
                            const TrainConfig& tcfg);

}  // namespace noisebench
