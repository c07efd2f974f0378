#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "noisebench/losses.hpp"
#include "noisebench/model.hpp"

namespace noisebench {

// Seeded shuffle of 0..n-1 for one epoch, cut into batches (last one may be short).
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed, std::size_t epoch);

// Loss for one batch given its logits and the dataset indices of its rows.
using BatchLossFn =
    std::function<LossOutput(const DenseMatrix& logits, std::span<const std::size_t> indices)>;

struct EpochStats {
    double mean_loss = 0.0;
    std::size_t batches = 0;
};

// One pass over `features` with SGD + momentum at learning rate `lr`.
EpochStats run_epoch(Classifier& model, ClassifierOptim& optim, const DenseMatrix& features,
                     const TrainConfig& cfg, std::size_t epoch, double lr,
                     const BatchLossFn& loss_fn);

using EpochHook = std::function<void(std::size_t epoch, const Classifier& model)>;

struct FitReport {
    std::vector<double> epoch_loss;
};

// cfg.epochs epochs with cosine annealing stepped per epoch (T = cfg.epochs).
// `before_epoch` runs ahead of every epoch with the current model.
FitReport fit(Classifier& model, const DenseMatrix& features, const TrainConfig& cfg,
              const BatchLossFn& loss_fn, const EpochHook& before_epoch = {});

// Labels of `labels` at `indices`.
std::vector<ClassId> gather(std::span<const ClassId> labels, std::span<const std::size_t> indices);

}  // namespace noisebench
