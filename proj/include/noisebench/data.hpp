#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "noisebench/matrix.hpp"

namespace noisebench {

using ClassId = std::uint32_t;

// Features plus observed labels. `true_labels` keeps the ground truth once noise
// has been injected; a set without it is taken to be clean.
struct LabeledSet {
    DenseMatrix features;
    std::vector<ClassId> labels;
    std::optional<std::vector<ClassId>> true_labels;
    std::size_t num_classes = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.cols(); }

    void validate() const;
    LabeledSet subset(std::span<const std::size_t> indices) const;
    // Ground truth: true_labels if present, labels otherwise.
    const std::vector<ClassId>& clean_labels() const;
    // true where the observed label differs from the ground truth.
    std::vector<bool> flip_mask() const;

    friend bool operator==(const LabeledSet&, const LabeledSet&) = default;
};

inline constexpr std::uint32_t kEmbeddingFormatVersion = 1;

// "NBEM" | version u32 | n u64 | d u32 | C u32 | has_true_labels u8 |
// n*d f32 features | n u16 labels | [n u16 true labels]. Little-endian.
// Features are stored as f32, so saving rounds each value to float.
std::vector<std::uint8_t> encode_embeddings(const LabeledSet& set);
LabeledSet decode_embeddings(const std::vector<std::uint8_t>& bytes);
void save_embeddings(const LabeledSet& set, const std::filesystem::path& path);
LabeledSet load_embeddings(const std::filesystem::path& path);

// Header `f0,...,f{d-1},label[,true_label]`. When num_classes is not given it is
// one more than the largest label seen.
LabeledSet load_csv(const std::filesystem::path& path,
                    std::optional<std::size_t> num_classes = std::nullopt);

struct SplitSpec {
    double clean_val_fraction = 0.02;
    std::uint64_t seed = 0;

    void validate() const;
};

struct CleanSplit {
    LabeledSet train;
    LabeledSet clean_val;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> val_indices;
    bool stratified = true;
};

// Carves round(fraction * n) samples out as a clean validation set (labels reset
// to the ground truth), stratified by true class with largest-remainder
// allocation. Falls back to an unstratified draw with a warning if some class
// would receive no sample.
CleanSplit split_clean_validation(const LabeledSet& set, const SplitSpec& spec);

struct TrainTestSplit {
    LabeledSet train;
    LabeledSet test;
};

// Stratified hold-out split used to create the clean test partition.
TrainTestSplit train_test_split(const LabeledSet& set, double test_fraction, std::uint64_t seed);

// Isotropic unit-variance Gaussian blobs centred at separation * u_c. u_c are the
// first C standard basis vectors when C <= d, fixed pseudo-random unit vectors
// otherwise. Rows are class-major.
LabeledSet make_synthetic_blobs(std::size_t num_classes, std::size_t n_per_class, std::size_t dim,
                                double separation, std::uint64_t seed);
// The centre directions u_c used by make_synthetic_blobs (C x d).
DenseMatrix blob_directions(std::size_t num_classes, std::size_t dim);

}  // namespace noisebench
