#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "noisebench/matrix.hpp"

namespace noisebench {

// Layer widths of an affine network: input, hidden..., output.
// Hidden layers use ReLU, the output layer is identity (logits or embeddings).
struct ArchSpec {
    std::vector<std::size_t> layer_dims;

    void validate() const;
    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t output_dim() const { return layer_dims.back(); }
    std::size_t num_layers() const { return layer_dims.size() - 1; }

    friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

// weights is fan_in x fan_out, so a layer computes X · W + b.
struct Layer {
    DenseMatrix weights;
    std::vector<double> bias;

    friend bool operator==(const Layer&, const Layer&) = default;
};

struct ParamSet {
    std::vector<Layer> layers;

    std::size_t parameter_count() const;
    bool all_finite() const;

    friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases.
ParamSet init_params(const ArchSpec& arch, std::uint64_t seed);
ParamSet zeros_like(const ParamSet& params);
ArchSpec arch_of(const ParamSet& params);
// Throws DimensionError if the parameter shapes disagree with the arch.
void check_params(const ArchSpec& arch, const ParamSet& params);

// y += a * x
void axpy(ParamSet& y, double a, const ParamSet& x);
double dot(const ParamSet& a, const ParamSet& b);
// Content fingerprint used to detect stale forward caches.
std::uint64_t fingerprint(const ParamSet& params);

struct ForwardCache {
    std::vector<DenseMatrix> inputs;  // input to each layer; inputs[0] is X
    std::vector<DenseMatrix> pre;     // pre-activation of each layer
    std::uint64_t params_tag = 0;
};

struct ForwardResult {
    DenseMatrix logits;
    ForwardCache cache;
};

ForwardResult forward(const ArchSpec& arch, const ParamSet& params, const DenseMatrix& x);
// Forward pass without keeping activations.
DenseMatrix predict(const ArchSpec& arch, const ParamSet& params, const DenseMatrix& x);

struct BackwardResult {
    ParamSet grads;
    DenseMatrix dinput;  // gradient with respect to X
};

ParamSet backward(const ArchSpec& arch, const ParamSet& params, const ForwardCache& cache,
                  const DenseMatrix& dlogits);
BackwardResult backward_full(const ArchSpec& arch, const ParamSet& params,
                             const ForwardCache& cache, const DenseMatrix& dlogits);

// For each row i, <direction, dL_i/dparams> where row i of `dlogits` is dL_i/dlogits_i.
// Rows are independent, so this never materialises per-sample gradients:
// a layer contributes a_i^T D delta_i + <d_bias, delta_i>. When `dinput` is
// given it receives the per-row input gradients (for chaining into an encoder).
std::vector<double> per_sample_dot(const ArchSpec& arch, const ParamSet& params,
                                   const ForwardCache& cache, const DenseMatrix& dlogits,
                                   const ParamSet& direction, DenseMatrix* dinput = nullptr);

}  // namespace noisebench
