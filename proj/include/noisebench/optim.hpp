#pragma once

#include <cstddef>
#include <cstdint>

#include "noisebench/network.hpp"

namespace noisebench {

struct TrainConfig {
    double lr0 = 0.01;
    double momentum = 0.9;  // heavy-ball, not Nesterov
    double weight_decay = 1e-4;
    std::size_t batch_size = 128;
    std::size_t epochs = 100;
    std::uint64_t seed = 0;

    void validate() const;
};

struct OptimState {
    ParamSet velocity;
    std::uint64_t step = 0;

    static OptimState for_params(const ParamSet& params);
};

// v <- momentum * v + (grad + weight_decay * w); w <- w - lr * v.
// Weight decay touches weights only, never biases. Throws NumericError on
// non-finite gradients before modifying anything.
void sgd_step(ParamSet& params, const ParamSet& grads, OptimState& state, const TrainConfig& cfg,
              double lr);

// lr0 * 0.5 * (1 + cos(pi * t / T)), 0 <= t <= T.
double cosine_lr(double lr0, std::size_t t, std::size_t total);

}  // namespace noisebench
