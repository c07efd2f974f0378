#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "noisebench/data.hpp"
#include "noisebench/model.hpp"
#include "noisebench/optim.hpp"

namespace noisebench {

// Vector-space augmentation family: x~ = scale * (x + sigma * N(0, I)), then each
// coordinate zeroed with probability mask_prob. scale ~ U[scale_lo, scale_hi].
struct AugmentSpec {
    double jitter_sigma = 0.5;
    double mask_prob = 0.1;
    double scale_lo = 0.8;
    double scale_hi = 1.2;

    void validate() const;
    static AugmentSpec identity() { return {0.0, 0.0, 1.0, 1.0}; }
};

// One view of sample `sample_index`. The draw is keyed on (seed, sample_index,
// draw_id) only, so views can be produced in any order or in parallel.
std::vector<double> augment(std::span<const double> x, const AugmentSpec& spec, std::uint64_t seed,
                            std::uint64_t sample_index, std::uint64_t draw_id);

// Two views of every listed row, interleaved as rows (2k, 2k+1) for nt_xent. The
// views use draw ids 2 * round and 2 * round + 1.
DenseMatrix augment_pairs(const DenseMatrix& x, std::span<const std::size_t> rows,
                          const AugmentSpec& spec, std::uint64_t seed, std::uint64_t round);

struct SimclrConfig {
    ArchSpec encoder{{20, 64, 32}};
    ArchSpec projection{{32, 16}};
    double tau = 0.5;
    std::size_t probe_size = 256;

    void validate() const;
};

struct SimclrResult {
    Network encoder;  // f only; the projection head is discarded
    Network encoder_init;
    double probe_loss_initial = 0.0;
    double probe_loss_final = 0.0;
    std::vector<double> epoch_loss;
};

// Trains f and g on NT-Xent over paired views of `unlabeled`, SGD + momentum with
// the cosine schedule from `tcfg`. lr0 = 0 is accepted here and leaves f unchanged.
SimclrResult pretrain_simclr(const DenseMatrix& unlabeled, const SimclrConfig& cfg,
                             const AugmentSpec& aug, const TrainConfig& tcfg);

// Features replaced by h = f(x); labels and ground truth carried through.
LabeledSet export_embeddings(const Network& encoder, const LabeledSet& set);

}  // namespace noisebench
