#include "noisebench/colearn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "noisebench/errors.hpp"
#include "noisebench/losses.hpp"
#include "noisebench/rng.hpp"
#include "noisebench/training.hpp"

namespace noisebench {

void CoLearnConfig::validate() const {
    if (!(noise_ratio >= 0.0 && noise_ratio < 1.0)) throw ConfigError("colearning noise ratio must lie in [0, 1)");
    const double k = keep();
    if (!(k > 0.0 && k <= 1.0)) throw ConfigError("colearning keep_fraction must lie in (0, 1]");
    if (!(agreement_threshold > 0.0 && agreement_threshold < 1.0)) {
        throw ConfigError("colearning agreement threshold must lie in (0, 1)");
    }
    if (!(pseudo_injection_weight >= 0.0)) throw ConfigError("pseudo_injection_weight must be >= 0");
    if (!(contrastive_weight >= 0.0)) throw ConfigError("contrastive_weight must be >= 0");
    if (!(tau > 0.0)) throw ConfigError("colearning tau must be > 0");
    if (!(prototype_momentum >= 0.0 && prototype_momentum < 1.0)) {
        throw ConfigError("prototype_momentum must lie in [0, 1)");
    }
    augment.validate();
}

CoLearnModel CoLearnModel::create(const Classifier& cls, std::size_t proj_dim, std::uint64_t seed) {
    cls.validate();
    const std::size_t enc_out = cls.head.arch.input_dim();
    CoLearnModel m;
    m.cls = cls;
    m.proj = Network::random(ArchSpec{{enc_out, proj_dim}}, seed);
    m.prototypes = DenseMatrix(cls.num_classes(), proj_dim);
    return m;
}

CoLearnOptim CoLearnOptim::for_model(const CoLearnModel& model) {
    return {ClassifierOptim::for_model(model.cls), OptimState::for_params(model.proj.params)};
}

namespace {

void normalize_rows(DenseMatrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        double s = 0.0;
        for (double v : row) s += v * v;
        const double norm = std::max(std::sqrt(s), 1e-12);
        for (double& v : row) v /= norm;
    }
}

DenseMatrix encode(const Classifier& cls, const DenseMatrix& x, std::optional<ForwardCache>* cache) {
    if (!cls.encoder) return x;
    if (cache) {
        auto fr = forward(cls.encoder->arch, cls.encoder->params, x);
        *cache = std::move(fr.cache);
        return std::move(fr.logits);
    }
    return predict(cls.encoder->arch, cls.encoder->params, x);
}

std::size_t argmax(std::span<const double> row) {
    return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

DenseMatrix prototype_probs(const DenseMatrix& embeddings, const DenseMatrix& prototypes, double tau) {
    DenseMatrix z = embeddings;
    normalize_rows(z);
    DenseMatrix sim = matmul_nt(z, prototypes);
    for (double& v : sim.values()) v /= tau;
    return softmax(sim);
}

void init_prototypes(CoLearnModel& model, const LabeledSet& train) {
    const DenseMatrix h = encode(model.cls, train.features, nullptr);
    DenseMatrix z = predict(model.proj.arch, model.proj.params, h);
    normalize_rows(z);
    DenseMatrix protos(model.cls.num_classes(), z.cols());
    for (std::size_t i = 0; i < z.rows(); ++i) {
        auto p = protos.row(train.labels[i]);
        const auto zi = z.row(i);
        for (std::size_t k = 0; k < p.size(); ++k) p[k] += zi[k];
    }
    normalize_rows(protos);
    model.prototypes = std::move(protos);
}

CoLearnBatchSelection select_trusted(const DenseMatrix& cls_probs, const DenseMatrix& proto_probs,
                                     std::span<const ClassId> labels, std::span<const double> cce_values,
                                     const CoLearnConfig& cfg) {
    const std::size_t b = labels.size();
    if (cls_probs.rows() != b || proto_probs.rows() != b || cce_values.size() != b) {
        throw DimensionError("select_trusted: batch size mismatch");
    }
    CoLearnBatchSelection sel;
    sel.trusted.assign(b, false);
    sel.pseudo.assign(b, std::nullopt);
    if (!cfg.filter) {
        sel.trusted.assign(b, true);
        sel.agreed = b;
        return sel;
    }
    for (std::size_t i = 0; i < b; ++i) {
        const std::size_t a = argmax(cls_probs.row(i));
        const std::size_t p = argmax(proto_probs.row(i));
        if (a == p && a == labels[i]) {
            sel.trusted[i] = true;
            ++sel.agreed;
        }
    }
    const auto target = static_cast<std::size_t>(std::ceil(cfg.keep() * static_cast<double>(b) - 1e-9));
    if (sel.agreed < target) {
        std::vector<std::size_t> rest;
        for (std::size_t i = 0; i < b; ++i)
            if (!sel.trusted[i]) rest.push_back(i);
        std::stable_sort(rest.begin(), rest.end(),
                         [&](std::size_t x, std::size_t y) { return cce_values[x] < cce_values[y]; });
        for (std::size_t k = 0; k < target - sel.agreed && k < rest.size(); ++k) sel.trusted[rest[k]] = true;
    }
    for (std::size_t i = 0; i < b; ++i) {
        if (sel.trusted[i]) continue;
        const std::size_t a = argmax(cls_probs.row(i));
        const std::size_t p = argmax(proto_probs.row(i));
        const double conf = std::min(cls_probs(i, a), proto_probs(i, p));
        if (a == p && conf >= cfg.agreement_threshold) sel.pseudo[i] = static_cast<ClassId>(a);
    }
    return sel;
}

CoLearnEpochStats colearn_epoch(CoLearnModel& model, CoLearnOptim& optim, const LabeledSet& train,
                                const CoLearnConfig& cfg, const TrainConfig& tcfg, std::size_t epoch,
                                double lr) {
    cfg.validate();
    const LossSpec cce_spec{};
    const bool has_truth = train.true_labels.has_value();
    const auto& truth = train.clean_labels();
    CoLearnEpochStats stats;
    double total = 0.0;
    std::size_t steps = 0;

    for (const auto& idx : epoch_batches(train.size(), tcfg.batch_size, tcfg.seed, epoch)) {
        const DenseMatrix x = take_rows(train.features, idx);
        const auto y = gather(train.labels, idx);
        const std::size_t b = idx.size();

        ClassifierCache cache;
        const DenseMatrix h = encode(model.cls, x, &cache.encoder);
        auto head_fr = forward(model.cls.head.arch, model.cls.head.params, h);
        cache.head = std::move(head_fr.cache);
        const DenseMatrix& logits = head_fr.logits;
        const DenseMatrix z = predict(model.proj.arch, model.proj.params, h);

        const PerSampleLoss per = per_sample_loss(cce_spec, logits, y);
        const CoLearnBatchSelection sel =
            select_trusted(softmax(logits), prototype_probs(z, model.prototypes, cfg.tau), y, per.values, cfg);

        // Supervised part: trusted rows on their label, pseudo rows on the agreed label.
        std::vector<ClassId> targets(y.begin(), y.end());
        std::vector<double> weights(b, 0.0);
        std::size_t n_trusted = 0;
        for (std::size_t i = 0; i < b; ++i) {
            if (sel.trusted[i]) {
                weights[i] = 1.0;
                ++n_trusted;
                if (has_truth && truth[idx[i]] == y[i]) ++stats.trusted_clean;
            } else if (sel.pseudo[i]) {
                targets[i] = *sel.pseudo[i];
                weights[i] = cfg.pseudo_injection_weight;
                ++stats.pseudo;
                if (has_truth && truth[idx[i]] == targets[i]) ++stats.pseudo_correct;
            }
        }
        if (n_trusted == 0) {
            ++stats.skipped_batches;
            continue;
        }
        stats.trusted += n_trusted;
        const PerSampleLoss sup_per = sel.pseudo.end() == std::find_if(sel.pseudo.begin(), sel.pseudo.end(),
                                                                       [](const auto& p) { return p.has_value(); })
                                          ? per
                                          : per_sample_loss(cce_spec, logits, targets);
        const LossOutput sup = reduce_mean(sup_per, std::span<const double>(weights));

        const BackwardResult head_b = backward_full(model.cls.head.arch, model.cls.head.params, cache.head, sup.dlogits);
        ClassifierGrads grads;
        grads.head = head_b.grads;
        DenseMatrix dh = head_b.dinput;

        // Contrastive tie on the projection branch over two views of the batch.
        double con_value = 0.0;
        ParamSet proj_grads = zeros_like(model.proj.params);
        if (cfg.contrastive_weight > 0.0 && b >= 2) {
            const DenseMatrix views = augment_pairs(train.features, idx, cfg.augment, tcfg.seed, epoch);
            std::optional<ForwardCache> vcache;
            const DenseMatrix hv = encode(model.cls, views, model.cls.train_encoder ? &vcache : nullptr);
            auto pr = forward(model.proj.arch, model.proj.params, hv);
            LossOutput con = nt_xent(pr.logits, cfg.tau);
            for (double& v : con.dlogits.values()) v *= cfg.contrastive_weight;
            con_value = con.value;
            const BackwardResult pb = backward_full(model.proj.arch, model.proj.params, pr.cache, con.dlogits);
            proj_grads = pb.grads;
            if (model.cls.encoder && model.cls.train_encoder) {
                ParamSet enc_con = backward(model.cls.encoder->arch, model.cls.encoder->params, *vcache, pb.dinput);
                ParamSet enc_sup = backward(model.cls.encoder->arch, model.cls.encoder->params, *cache.encoder, dh);
                axpy(enc_sup, 1.0, enc_con);
                grads.encoder = std::move(enc_sup);
            }
        } else if (model.cls.encoder && model.cls.train_encoder) {
            grads.encoder = backward(model.cls.encoder->arch, model.cls.encoder->params, *cache.encoder, dh);
        }

        const double value = sup.value + cfg.contrastive_weight * con_value;
        if (!std::isfinite(value)) throw NumericError("colearning: non-finite loss in epoch " + std::to_string(epoch));
        if (!proj_grads.all_finite()) throw NumericError("colearning: non-finite projection gradient");
        classifier_step(model.cls, grads, optim.cls, tcfg, lr);
        sgd_step(model.proj.params, proj_grads, optim.proj, tcfg, lr);

        // Prototype update from the trusted rows' embeddings (pre-step).
        DenseMatrix zn = z;
        normalize_rows(zn);
        DenseMatrix sums(model.prototypes.rows(), model.prototypes.cols());
        std::vector<std::size_t> counts(model.prototypes.rows(), 0);
        for (std::size_t i = 0; i < b; ++i) {
            if (!sel.trusted[i]) continue;
            auto s = sums.row(y[i]);
            const auto zi = zn.row(i);
            for (std::size_t k = 0; k < s.size(); ++k) s[k] += zi[k];
            ++counts[y[i]];
        }
        const double m = cfg.prototype_momentum;
        for (std::size_t c = 0; c < counts.size(); ++c) {
            if (counts[c] == 0) continue;
            auto p = model.prototypes.row(c);
            const auto s = sums.row(c);
            for (std::size_t k = 0; k < p.size(); ++k) p[k] = m * p[k] + (1.0 - m) * s[k] / static_cast<double>(counts[c]);
        }
        normalize_rows(model.prototypes);

        total += value;
        ++steps;
    }
    stats.mean_loss = steps ? total / static_cast<double>(steps) : 0.0;
    return stats;
}

CoLearnReport train_colearn(CoLearnModel& model, const LabeledSet& train, const CoLearnConfig& cfg,
                            const TrainConfig& tcfg) {
    cfg.validate();
    tcfg.validate();
    model.cls.validate();
    init_prototypes(model, train);
    CoLearnOptim optim = CoLearnOptim::for_model(model);
    CoLearnReport report;
    for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
        const double lr = cosine_lr(tcfg.lr0, epoch, tcfg.epochs);
        report.epochs.push_back(colearn_epoch(model, optim, train, cfg, tcfg, epoch, lr));
        report.skipped_batches += report.epochs.back().skipped_batches;
    }
    if (report.skipped_batches > 0) {
        warn("colearning: skipped " + std::to_string(report.skipped_batches) + " batches with an empty trusted set");
    }
    return report;
}

}  // namespace noisebench
