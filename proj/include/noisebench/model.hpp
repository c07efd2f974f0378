#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "noisebench/data.hpp"
#include "noisebench/network.hpp"
#include "noisebench/optim.hpp"

namespace noisebench {

struct Network {
    ArchSpec arch;
    ParamSet params;

    static Network random(const ArchSpec& arch, std::uint64_t seed);
    friend bool operator==(const Network&, const Network&) = default;
};

// Optional encoder f followed by a classification head. With train_encoder false
// the encoder is a constant feature map and receives no gradient.
struct Classifier {
    std::optional<Network> encoder;
    Network head;
    bool train_encoder = false;

    std::size_t input_dim() const;
    std::size_t num_classes() const { return head.arch.output_dim(); }
    void validate() const;
    friend bool operator==(const Classifier&, const Classifier&) = default;
};

struct ClassifierCache {
    std::optional<ForwardCache> encoder;
    ForwardCache head;
};

// Gradients for the trainable parts only; `encoder` is empty when it is frozen.
struct ClassifierGrads {
    std::optional<ParamSet> encoder;
    ParamSet head;
};

struct ClassifierOptim {
    std::optional<OptimState> encoder;
    OptimState head;

    static ClassifierOptim for_model(const Classifier& model);
};

DenseMatrix classifier_logits(const Classifier& model, const DenseMatrix& x);
DenseMatrix classifier_forward(const Classifier& model, const DenseMatrix& x, ClassifierCache& cache);
ClassifierGrads classifier_backward(const Classifier& model, const ClassifierCache& cache,
                                    const DenseMatrix& dlogits);
void classifier_step(Classifier& model, const ClassifierGrads& grads, ClassifierOptim& optim,
                     const TrainConfig& cfg, double lr);
// model.params += scale * grads over the trainable parts (plain step, no momentum).
void classifier_axpy(Classifier& model, double scale, const ClassifierGrads& grads);
// Per-row <direction, dL_i/dtheta> over the trainable parameters.
std::vector<double> classifier_per_sample_dot(const Classifier& model, const ClassifierCache& cache,
                                              const DenseMatrix& dlogits,
                                              const ClassifierGrads& direction);

std::vector<ClassId> argmax_rows(const DenseMatrix& scores);
double accuracy(const DenseMatrix& logits, std::span<const ClassId> labels);
// Accuracy against the ground truth labels of `set`.
double evaluate_accuracy(const Classifier& model, const LabeledSet& set);

}  // namespace noisebench
