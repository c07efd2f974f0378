#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "noisebench/data.hpp"
#include "noisebench/matrix.hpp"

namespace noisebench {

// Row-stochastic C x C matrix; entry (i, j) = P(observed = j | true = i).
class TransitionMatrix {
public:
    explicit TransitionMatrix(DenseMatrix entries);
    static TransitionMatrix identity(std::size_t classes);

    std::size_t classes() const { return entries_.rows(); }
    double operator()(std::size_t i, std::size_t j) const { return entries_(i, j); }
    const DenseMatrix& entries() const { return entries_; }

    // Largest |row sum - 1| over all rows.
    double row_sum_error() const;
    bool is_identity() const;

    friend bool operator==(const TransitionMatrix&, const TransitionMatrix&) = default;

private:
    DenseMatrix entries_;
};

// Throws ConfigError unless entries are in [0, 1] and rows sum to 1 within tol.
void check_row_stochastic(const DenseMatrix& m, double tol);

enum class NoiseKind { Symmetric, Asymmetric };

struct ClassPair {
    ClassId source;
    ClassId target;

    friend bool operator==(const ClassPair&, const ClassPair&) = default;
};

using ClassMapping = std::vector<ClassPair>;

// source != target, at most one target per source, all ids < classes.
void validate_mapping(const ClassMapping& mapping, std::size_t classes);

struct NoiseSpec {
    NoiseKind kind = NoiseKind::Symmetric;
    double rate = 0.0;
    std::optional<ClassMapping> mapping;  // asymmetric only
    std::uint64_t seed = 0;

    void validate() const;
};

// Symmetric: 1 - r on the diagonal, r / (C - 1) elsewhere (flips only go to other
// classes). Asymmetric: mapped source i -> j gets T[i][i] = 1 - r, T[i][j] = r;
// unmapped rows stay identity.
TransitionMatrix build_transition(const NoiseSpec& spec, std::size_t classes);

struct Injection {
    std::vector<ClassId> noisy;
    std::vector<bool> flipped;
};

// Draws every observed label independently from row T[label]. Sample i uses a
// uniform keyed only on (seed, i), so the result does not depend on label order.
Injection inject(std::span<const ClassId> labels, const TransitionMatrix& transition,
                 std::uint64_t seed);

// Corrupts set.labels in place of a copy; ground truth is kept in true_labels.
LabeledSet inject_labels(const LabeledSet& set, const TransitionMatrix& transition,
                         std::uint64_t seed);

// TRUCK->AUTOMOBILE, BIRD->AIRPLANE, DEER->HORSE, CAT<->DOG with the standard
// CIFAR-10 index order (airplane 0, automobile 1, bird 2, cat 3, deer 4, dog 5,
// frog 6, horse 7, ship 8, truck 9).
ClassMapping cifar10_asym_mapping();
// 20 groups of 5 consecutive indices; each class maps to the next one in its
// group, the last wrapping to the first.
ClassMapping cifar100_asym_mapping();
// i -> (i + 1) mod C, for synthetic data with no natural similarity structure.
ClassMapping cyclic_mapping(std::size_t classes);

std::string transition_to_csv(const DenseMatrix& matrix);

}  // namespace noisebench
