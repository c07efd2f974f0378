#include "noisebench/contrastive.hpp"

#include <cmath>
#include <string>

#include "noisebench/errors.hpp"
#include "noisebench/losses.hpp"
#include "noisebench/rng.hpp"
#include "noisebench/training.hpp"

namespace noisebench {

namespace {
constexpr std::uint64_t kAugmentStream = 0xa06e47;
constexpr std::uint64_t kProbeRound = 0xffffffffULL;
}  // namespace

void AugmentSpec::validate() const {
    if (!(jitter_sigma >= 0.0) || !std::isfinite(jitter_sigma)) throw ConfigError("jitter_sigma must be >= 0");
    if (!(mask_prob >= 0.0 && mask_prob < 1.0)) throw ConfigError("mask_prob must lie in [0, 1)");
    if (!(scale_lo > 0.0 && scale_lo <= scale_hi) || !std::isfinite(scale_hi)) {
        throw ConfigError("scale range must satisfy 0 < lo <= hi");
    }
}

std::vector<double> augment(std::span<const double> x, const AugmentSpec& spec, std::uint64_t seed,
                            std::uint64_t sample_index, std::uint64_t draw_id) {
    spec.validate();
    Rng rng(derive_seed(seed ^ kAugmentStream, sample_index, draw_id));
    const double scale = spec.scale_lo == spec.scale_hi ? spec.scale_lo : rng.uniform(spec.scale_lo, spec.scale_hi);
    std::vector<double> out(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double noise = spec.jitter_sigma > 0.0 ? spec.jitter_sigma * rng.normal() : 0.0;
        const bool masked = spec.mask_prob > 0.0 && rng.uniform() < spec.mask_prob;
        out[k] = masked ? 0.0 : scale * (x[k] + noise);
    }
    return out;
}

DenseMatrix augment_pairs(const DenseMatrix& x, std::span<const std::size_t> rows,
                          const AugmentSpec& spec, std::uint64_t seed, std::uint64_t round) {
    DenseMatrix out(2 * rows.size(), x.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        for (std::uint64_t v = 0; v < 2; ++v) {
            const auto view = augment(x.row(rows[k]), spec, seed, rows[k], 2 * round + v);
            std::copy(view.begin(), view.end(), out.row(2 * k + v).begin());
        }
    }
    return out;
}

void SimclrConfig::validate() const {
    encoder.validate();
    projection.validate();
    if (projection.input_dim() != encoder.output_dim()) {
        throw ConfigError("projection input dim " + std::to_string(projection.input_dim()) +
                          " != encoder output dim " + std::to_string(encoder.output_dim()));
    }
    if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
    if (probe_size < 2) throw ConfigError("probe_size must be >= 2");
}

namespace {

double contrastive_loss(const Network& f, const Network& g, const DenseMatrix& views, double tau) {
    const DenseMatrix h = predict(f.arch, f.params, views);
    return nt_xent(predict(g.arch, g.params, h), tau).value;
}

}  // namespace

SimclrResult pretrain_simclr(const DenseMatrix& unlabeled, const SimclrConfig& cfg,
                             const AugmentSpec& aug, const TrainConfig& tcfg) {
    cfg.validate();
    aug.validate();
    {
        TrainConfig check = tcfg;
        if (check.lr0 == 0.0) check.lr0 = 1.0;
        check.validate();
    }
    if (unlabeled.cols() != cfg.encoder.input_dim()) {
        throw DimensionError("pretrain: data dim " + std::to_string(unlabeled.cols()) + " != encoder input dim " +
                             std::to_string(cfg.encoder.input_dim()));
    }
    if (unlabeled.rows() < 2) throw ContractError("pretrain: need at least two samples");

    SimclrResult res;
    Network f = Network::random(cfg.encoder, derive_seed(tcfg.seed, 0xe4c));
    Network g = Network::random(cfg.projection, derive_seed(tcfg.seed, 0x960));
    res.encoder_init = f;

    // Fixed probe batch with fixed views, evaluated before and after training.
    auto order = shuffled_indices(unlabeled.rows(), derive_seed(tcfg.seed, 0x960be));
    order.resize(std::min(cfg.probe_size, unlabeled.rows()));
    const DenseMatrix probe = augment_pairs(unlabeled, order, aug, tcfg.seed, kProbeRound);
    res.probe_loss_initial = contrastive_loss(f, g, probe, cfg.tau);

    OptimState fo = OptimState::for_params(f.params);
    OptimState go = OptimState::for_params(g.params);
    for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
        const double lr = cosine_lr(tcfg.lr0, epoch, tcfg.epochs);
        double total = 0.0;
        std::size_t count = 0;
        for (const auto& batch : epoch_batches(unlabeled.rows(), tcfg.batch_size, tcfg.seed, epoch)) {
            if (batch.size() < 2) continue;  // NT-Xent needs a negative
            const DenseMatrix views = augment_pairs(unlabeled, batch, aug, tcfg.seed, epoch);
            auto hf = forward(f.arch, f.params, views);
            auto zf = forward(g.arch, g.params, hf.logits);
            const LossOutput loss = nt_xent(zf.logits, cfg.tau);
            if (!std::isfinite(loss.value)) throw NumericError("pretrain: non-finite loss in epoch " + std::to_string(epoch));
            const BackwardResult gb = backward_full(g.arch, g.params, zf.cache, loss.dlogits);
            const ParamSet fgrad = backward(f.arch, f.params, hf.cache, gb.dinput);
            sgd_step(g.params, gb.grads, go, tcfg, lr);
            sgd_step(f.params, fgrad, fo, tcfg, lr);
            total += loss.value;
            ++count;
        }
        res.epoch_loss.push_back(count ? total / static_cast<double>(count) : 0.0);
    }
    res.probe_loss_final = contrastive_loss(f, g, probe, cfg.tau);
    res.encoder = std::move(f);
    return res;
}

LabeledSet export_embeddings(const Network& encoder, const LabeledSet& set) {
    if (set.dim() != encoder.arch.input_dim()) {
        throw DimensionError("export: feature dim " + std::to_string(set.dim()) + " != encoder input dim " +
                             std::to_string(encoder.arch.input_dim()));
    }
    LabeledSet out = set;
    out.features = predict(encoder.arch, encoder.params, set.features);
    return out;
}

}  // namespace noisebench
