#include "noisebench/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "noisebench/errors.hpp"
#include "noisebench/rng.hpp"

namespace noisebench {

namespace {

void check_cache(const ArchSpec& arch, const ParamSet& params, const ForwardCache& cache,
                 const DenseMatrix& dlogits) {
    const std::size_t layers = arch.num_layers();
    if (cache.inputs.size() != layers || cache.pre.size() != layers) {
        throw ContractError("backward: cache has " + std::to_string(cache.inputs.size()) +
                            " layers, arch has " + std::to_string(layers));
    }
    if (cache.params_tag != fingerprint(params)) {
        throw ContractError("backward: cache was produced by different parameters (stale cache)");
    }
    const std::size_t batch = cache.inputs.front().rows();
    if (dlogits.rows() != batch || dlogits.cols() != arch.output_dim()) {
        throw ContractError("backward: dlogits is " + std::to_string(dlogits.rows()) + "x" +
                            std::to_string(dlogits.cols()) + ", expected " +
                            std::to_string(batch) + "x" + std::to_string(arch.output_dim()));
    }
}

void relu_mask(DenseMatrix& grad, const DenseMatrix& pre) {
    auto g = grad.values();
    auto p = pre.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (p[i] <= 0.0) g[i] = 0.0;
    }
}

}  // namespace

void ArchSpec::validate() const {
    if (layer_dims.size() < 2) {
        throw ConfigError("ArchSpec needs at least input and output dims");
    }
    for (std::size_t d : layer_dims) {
        if (d == 0) throw ConfigError("ArchSpec dims must be >= 1");
    }
}

std::size_t ParamSet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
}

bool ParamSet::all_finite() const {
    for (const auto& l : layers) {
        if (!l.weights.all_finite()) return false;
        for (double b : l.bias)
            if (!std::isfinite(b)) return false;
    }
    return true;
}

ParamSet init_params(const ArchSpec& arch, std::uint64_t seed) {
    arch.validate();
    ParamSet params;
    Rng rng(seed);
    for (std::size_t l = 0; l < arch.num_layers(); ++l) {
        const std::size_t fan_in = arch.layer_dims[l];
        const std::size_t fan_out = arch.layer_dims[l + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        Layer layer{DenseMatrix(fan_in, fan_out), std::vector<double>(fan_out, 0.0)};
        for (double& w : layer.weights.values()) w = rng.uniform(-bound, bound);
        params.layers.push_back(std::move(layer));
    }
    return params;
}

ParamSet zeros_like(const ParamSet& params) {
    ParamSet out;
    out.layers.reserve(params.layers.size());
    for (const auto& l : params.layers) {
        out.layers.push_back(
            {DenseMatrix(l.weights.rows(), l.weights.cols()), std::vector<double>(l.bias.size())});
    }
    return out;
}

ArchSpec arch_of(const ParamSet& params) {
    if (params.layers.empty()) throw DimensionError("arch_of: empty ParamSet");
    ArchSpec arch;
    arch.layer_dims.push_back(params.layers.front().weights.rows());
    for (const auto& l : params.layers) arch.layer_dims.push_back(l.weights.cols());
    check_params(arch, params);
    return arch;
}

void check_params(const ArchSpec& arch, const ParamSet& params) {
    arch.validate();
    if (params.layers.size() != arch.num_layers()) {
        throw DimensionError("ParamSet has " + std::to_string(params.layers.size()) +
                             " layers, arch expects " + std::to_string(arch.num_layers()));
    }
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto& layer = params.layers[l];
        if (layer.weights.rows() != arch.layer_dims[l] ||
            layer.weights.cols() != arch.layer_dims[l + 1] ||
            layer.bias.size() != arch.layer_dims[l + 1]) {
            throw DimensionError("layer " + std::to_string(l) + " shape does not match arch");
        }
    }
}

void axpy(ParamSet& y, double a, const ParamSet& x) {
    if (y.layers.size() != x.layers.size()) throw DimensionError("axpy: layer count mismatch");
    for (std::size_t l = 0; l < y.layers.size(); ++l) {
        auto yw = y.layers[l].weights.values();
        auto xw = x.layers[l].weights.values();
        if (yw.size() != xw.size() || y.layers[l].bias.size() != x.layers[l].bias.size()) {
            throw DimensionError("axpy: layer " + std::to_string(l) + " shape mismatch");
        }
        for (std::size_t i = 0; i < yw.size(); ++i) yw[i] += a * xw[i];
        for (std::size_t i = 0; i < y.layers[l].bias.size(); ++i)
            y.layers[l].bias[i] += a * x.layers[l].bias[i];
    }
}

double dot(const ParamSet& a, const ParamSet& b) {
    if (a.layers.size() != b.layers.size()) throw DimensionError("dot: layer count mismatch");
    double s = 0.0;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        auto aw = a.layers[l].weights.values();
        auto bw = b.layers[l].weights.values();
        if (aw.size() != bw.size()) throw DimensionError("dot: layer shape mismatch");
        for (std::size_t i = 0; i < aw.size(); ++i) s += aw[i] * bw[i];
        for (std::size_t i = 0; i < a.layers[l].bias.size(); ++i)
            s += a.layers[l].bias[i] * b.layers[l].bias[i];
    }
    return s;
}

std::uint64_t fingerprint(const ParamSet& params) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](double v) {
        h ^= std::bit_cast<std::uint64_t>(v);
        h *= 1099511628211ULL;
    };
    for (const auto& l : params.layers) {
        h ^= l.weights.rows() * 31 + l.weights.cols();
        for (double w : l.weights.values()) mix(w);
        for (double b : l.bias) mix(b);
    }
    return h;
}

ForwardResult forward(const ArchSpec& arch, const ParamSet& params, const DenseMatrix& x) {
    check_params(arch, params);
    if (x.cols() != arch.input_dim()) {
        throw DimensionError("forward: input has " + std::to_string(x.cols()) +
                             " columns, arch expects " + std::to_string(arch.input_dim()));
    }
    ForwardResult result;
    ForwardCache& cache = result.cache;
    cache.params_tag = fingerprint(params);
    DenseMatrix current = x;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const Layer& layer = params.layers[l];
        DenseMatrix z = matmul(current, layer.weights);
        for (std::size_t i = 0; i < z.rows(); ++i) {
            auto r = z.row(i);
            for (std::size_t j = 0; j < r.size(); ++j) r[j] += layer.bias[j];
        }
        cache.inputs.push_back(std::move(current));
        cache.pre.push_back(z);
        if (l + 1 < params.layers.size()) {
            for (double& v : z.values()) v = v > 0.0 ? v : 0.0;
        }
        current = std::move(z);
    }
    result.logits = std::move(current);
    return result;
}

DenseMatrix predict(const ArchSpec& arch, const ParamSet& params, const DenseMatrix& x) {
    check_params(arch, params);
    if (x.cols() != arch.input_dim()) {
        throw DimensionError("predict: input has " + std::to_string(x.cols()) +
                             " columns, arch expects " + std::to_string(arch.input_dim()));
    }
    DenseMatrix current = x;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const Layer& layer = params.layers[l];
        DenseMatrix z = matmul(current, layer.weights);
        const bool hidden = l + 1 < params.layers.size();
        for (std::size_t i = 0; i < z.rows(); ++i) {
            auto r = z.row(i);
            for (std::size_t j = 0; j < r.size(); ++j) {
                r[j] += layer.bias[j];
                if (hidden && r[j] < 0.0) r[j] = 0.0;
            }
        }
        current = std::move(z);
    }
    return current;
}

BackwardResult backward_full(const ArchSpec& arch, const ParamSet& params,
                             const ForwardCache& cache, const DenseMatrix& dlogits) {
    check_params(arch, params);
    check_cache(arch, params, cache, dlogits);
    BackwardResult result;
    result.grads = zeros_like(params);
    DenseMatrix delta = dlogits;
    for (std::size_t l = params.layers.size(); l-- > 0;) {
        Layer& g = result.grads.layers[l];
        g.weights = matmul_tn(cache.inputs[l], delta);
        for (std::size_t i = 0; i < delta.rows(); ++i) {
            auto r = delta.row(i);
            for (std::size_t j = 0; j < r.size(); ++j) g.bias[j] += r[j];
        }
        DenseMatrix prev = matmul_nt(delta, params.layers[l].weights);
        if (l > 0) relu_mask(prev, cache.pre[l - 1]);
        delta = std::move(prev);
    }
    result.dinput = std::move(delta);
    return result;
}

ParamSet backward(const ArchSpec& arch, const ParamSet& params, const ForwardCache& cache,
                  const DenseMatrix& dlogits) {
    return backward_full(arch, params, cache, dlogits).grads;
}

std::vector<double> per_sample_dot(const ArchSpec& arch, const ParamSet& params,
                                   const ForwardCache& cache, const DenseMatrix& dlogits,
                                   const ParamSet& direction, DenseMatrix* dinput) {
    check_params(arch, params);
    check_params(arch, direction);
    check_cache(arch, params, cache, dlogits);
    const std::size_t batch = dlogits.rows();
    std::vector<double> out(batch, 0.0);
    DenseMatrix delta = dlogits;
    for (std::size_t l = params.layers.size(); l-- > 0;) {
        const Layer& dir = direction.layers[l];
        // (delta · Dᵀ)_i dotted with a_i gives a_iᵀ D delta_i.
        const DenseMatrix projected = matmul_nt(delta, dir.weights);
        const DenseMatrix& a = cache.inputs[l];
        for (std::size_t i = 0; i < batch; ++i) {
            auto pr = projected.row(i);
            auto ar = a.row(i);
            auto dr = delta.row(i);
            double s = 0.0;
            for (std::size_t k = 0; k < ar.size(); ++k) s += ar[k] * pr[k];
            for (std::size_t j = 0; j < dr.size(); ++j) s += dir.bias[j] * dr[j];
            out[i] += s;
        }
        if (l == 0 && dinput == nullptr) break;
        DenseMatrix prev = matmul_nt(delta, params.layers[l].weights);
        if (l > 0) relu_mask(prev, cache.pre[l - 1]);
        delta = std::move(prev);
    }
    if (dinput != nullptr) *dinput = std::move(delta);
    return out;
}

}  // namespace noisebench
