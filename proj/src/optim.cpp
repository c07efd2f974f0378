#include "noisebench/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "noisebench/errors.hpp"

namespace noisebench {

void TrainConfig::validate() const {
    if (!(lr0 > 0.0)) throw ConfigError("lr0 must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

OptimState OptimState::for_params(const ParamSet& params) {
    return OptimState{zeros_like(params), 0};
}

void sgd_step(ParamSet& params, const ParamSet& grads, OptimState& state, const TrainConfig& cfg,
              double lr) {
    if (grads.layers.size() != params.layers.size() ||
        state.velocity.layers.size() != params.layers.size()) {
        throw DimensionError("sgd_step: params, grads and momentum buffers disagree");
    }
    if (!grads.all_finite()) {
        throw NumericError("sgd_step: non-finite gradient at step " + std::to_string(state.step) +
                           "; training aborted");
    }
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        Layer& p = params.layers[l];
        const Layer& g = grads.layers[l];
        Layer& v = state.velocity.layers[l];
        auto pw = p.weights.values();
        auto gw = g.weights.values();
        auto vw = v.weights.values();
        if (pw.size() != gw.size() || pw.size() != vw.size() || p.bias.size() != g.bias.size() ||
            p.bias.size() != v.bias.size()) {
            throw DimensionError("sgd_step: layer " + std::to_string(l) + " shape mismatch");
        }
        for (std::size_t i = 0; i < pw.size(); ++i) {
            vw[i] = cfg.momentum * vw[i] + (gw[i] + cfg.weight_decay * pw[i]);
            pw[i] -= lr * vw[i];
        }
        for (std::size_t i = 0; i < p.bias.size(); ++i) {
            v.bias[i] = cfg.momentum * v.bias[i] + g.bias[i];
            p.bias[i] -= lr * v.bias[i];
        }
    }
    ++state.step;
}

double cosine_lr(double lr0, std::size_t t, std::size_t total) {
    if (total < 1) throw ContractError("cosine_lr: total steps must be >= 1");
    if (t > total) {
        throw ContractError("cosine_lr: step " + std::to_string(t) + " beyond total " +
                            std::to_string(total));
    }
    const double ratio = static_cast<double>(t) / static_cast<double>(total);
    return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * ratio));
}

}  // namespace noisebench
