#include "noisebench/model.hpp"

#include <string>

#include "noisebench/errors.hpp"

namespace noisebench {

Network Network::random(const ArchSpec& arch, std::uint64_t seed) {
    return Network{arch, init_params(arch, seed)};
}

std::size_t Classifier::input_dim() const {
    return encoder ? encoder->arch.input_dim() : head.arch.input_dim();
}

void Classifier::validate() const {
    check_params(head.arch, head.params);
    if (encoder) {
        check_params(encoder->arch, encoder->params);
        if (encoder->arch.output_dim() != head.arch.input_dim()) {
            throw DimensionError("encoder output dim " +
                                 std::to_string(encoder->arch.output_dim()) +
                                 " does not match head input dim " +
                                 std::to_string(head.arch.input_dim()));
        }
    } else if (train_encoder) {
        throw ConfigError("train_encoder set on a model without encoder");
    }
}

ClassifierOptim ClassifierOptim::for_model(const Classifier& model) {
    ClassifierOptim optim{std::nullopt, OptimState::for_params(model.head.params)};
    if (model.encoder && model.train_encoder) {
        optim.encoder = OptimState::for_params(model.encoder->params);
    }
    return optim;
}

DenseMatrix classifier_logits(const Classifier& model, const DenseMatrix& x) {
    if (!model.encoder) return predict(model.head.arch, model.head.params, x);
    const DenseMatrix h = predict(model.encoder->arch, model.encoder->params, x);
    return predict(model.head.arch, model.head.params, h);
}

DenseMatrix classifier_forward(const Classifier& model, const DenseMatrix& x, ClassifierCache& cache) {
    if (!model.encoder) {
        auto r = forward(model.head.arch, model.head.params, x);
        cache.encoder.reset();
        cache.head = std::move(r.cache);
        return std::move(r.logits);
    }
    if (model.train_encoder) {
        auto enc = forward(model.encoder->arch, model.encoder->params, x);
        auto head = forward(model.head.arch, model.head.params, enc.logits);
        cache.encoder = std::move(enc.cache);
        cache.head = std::move(head.cache);
        return std::move(head.logits);
    }
    const DenseMatrix h = predict(model.encoder->arch, model.encoder->params, x);
    auto head = forward(model.head.arch, model.head.params, h);
    cache.encoder.reset();
    cache.head = std::move(head.cache);
    return std::move(head.logits);
}

ClassifierGrads classifier_backward(const Classifier& model, const ClassifierCache& cache,
                                    const DenseMatrix& dlogits) {
    ClassifierGrads grads;
    if (model.encoder && model.train_encoder) {
        if (!cache.encoder) throw ContractError("classifier_backward: cache lacks encoder activations");
        auto head = backward_full(model.head.arch, model.head.params, cache.head, dlogits);
        grads.head = std::move(head.grads);
        grads.encoder =
            backward(model.encoder->arch, model.encoder->params, *cache.encoder, head.dinput);
    } else {
        grads.head = backward(model.head.arch, model.head.params, cache.head, dlogits);
    }
    return grads;
}

void classifier_step(Classifier& model, const ClassifierGrads& grads, ClassifierOptim& optim,
                     const TrainConfig& cfg, double lr) {
    // Validate both halves before touching either so a failure leaves the model intact.
    if (!grads.head.all_finite() || (grads.encoder && !grads.encoder->all_finite())) {
        throw NumericError("non-finite gradient at step " + std::to_string(optim.head.step) +
                           "; training aborted");
    }
    if (model.encoder && model.train_encoder) {
        if (!grads.encoder || !optim.encoder) {
            throw ContractError("classifier_step: trainable encoder without gradient or state");
        }
        sgd_step(model.encoder->params, *grads.encoder, *optim.encoder, cfg, lr);
    }
    sgd_step(model.head.params, grads.head, optim.head, cfg, lr);
}

void classifier_axpy(Classifier& model, double scale, const ClassifierGrads& grads) {
    axpy(model.head.params, scale, grads.head);
    if (model.encoder && model.train_encoder) {
        if (!grads.encoder) throw ContractError("classifier_axpy: missing encoder gradient");
        axpy(model.encoder->params, scale, *grads.encoder);
    }
}

std::vector<double> classifier_per_sample_dot(const Classifier& model, const ClassifierCache& cache,
                                              const DenseMatrix& dlogits,
                                              const ClassifierGrads& direction) {
    if (!(model.encoder && model.train_encoder)) {
        return per_sample_dot(model.head.arch, model.head.params, cache.head, dlogits,
                              direction.head);
    }
    if (!cache.encoder || !direction.encoder) {
        throw ContractError("classifier_per_sample_dot: encoder cache or direction missing");
    }
    DenseMatrix dh;
    auto out = per_sample_dot(model.head.arch, model.head.params, cache.head, dlogits,
                              direction.head, &dh);
    const auto enc = per_sample_dot(model.encoder->arch, model.encoder->params, *cache.encoder, dh,
                                    *direction.encoder);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += enc[i];
    return out;
}

std::vector<ClassId> argmax_rows(const DenseMatrix& scores) {
    std::vector<ClassId> out(scores.rows());
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        auto r = scores.row(i);
        std::size_t best = 0;
        for (std::size_t c = 1; c < r.size(); ++c)
            if (r[c] > r[best]) best = c;
        out[i] = static_cast<ClassId>(best);
    }
    return out;
}

double accuracy(const DenseMatrix& logits, std::span<const ClassId> labels) {
    if (logits.rows() != labels.size()) throw DimensionError("accuracy: row/label count mismatch");
    if (labels.empty()) return 0.0;
    const auto pred = argmax_rows(logits);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double evaluate_accuracy(const Classifier& model, const LabeledSet& set) {
    return accuracy(classifier_logits(model, set.features), set.clean_labels());
}

}  // namespace noisebench
