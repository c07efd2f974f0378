#include "noisebench/training.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "noisebench/errors.hpp"
#include "noisebench/rng.hpp"

namespace noisebench {

namespace {
constexpr std::uint64_t kShuffleStream = 0x5a0ff1eULL;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed, std::size_t epoch) {
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    const auto order = shuffled_indices(n, derive_seed(seed, kShuffleStream, epoch));
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

EpochStats run_epoch(Classifier& model, ClassifierOptim& optim, const DenseMatrix& features,
                     const TrainConfig& cfg, std::size_t epoch, double lr,
                     const BatchLossFn& loss_fn) {
    EpochStats stats;
    double total = 0.0;
    for (const auto& batch : epoch_batches(features.rows(), cfg.batch_size, cfg.seed, epoch)) {
        const DenseMatrix x = take_rows(features, batch);
        ClassifierCache cache;
        const DenseMatrix logits = classifier_forward(model, x, cache);
        const LossOutput loss = loss_fn(logits, batch);
        if (!std::isfinite(loss.value)) {
            throw NumericError("non-finite loss in epoch " + std::to_string(epoch));
        }
        const ClassifierGrads grads = classifier_backward(model, cache, loss.dlogits);
        classifier_step(model, grads, optim, cfg, lr);
        total += loss.value;
        ++stats.batches;
    }
    stats.mean_loss = stats.batches ? total / static_cast<double>(stats.batches) : 0.0;
    return stats;
}

FitReport fit(Classifier& model, const DenseMatrix& features, const TrainConfig& cfg,
              const BatchLossFn& loss_fn, const EpochHook& before_epoch) {
    cfg.validate();
    model.validate();
    FitReport report;
    ClassifierOptim optim = ClassifierOptim::for_model(model);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (before_epoch) before_epoch(epoch, model);
        const double lr = cosine_lr(cfg.lr0, epoch, cfg.epochs);
        report.epoch_loss.push_back(
            run_epoch(model, optim, features, cfg, epoch, lr, loss_fn).mean_loss);
    }
    return report;
}

std::vector<ClassId> gather(std::span<const ClassId> labels, std::span<const std::size_t> indices) {
    std::vector<ClassId> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(labels[i]);
    return out;
}

}  // namespace noisebench
