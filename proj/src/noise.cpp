#include "noisebench/noise.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "noisebench/errors.hpp"
#include "noisebench/rng.hpp"

namespace noisebench {

TransitionMatrix::TransitionMatrix(DenseMatrix entries) : entries_(std::move(entries)) {
    if (entries_.rows() != entries_.cols() || entries_.rows() == 0) {
        throw DimensionError("TransitionMatrix must be square and non-empty");
    }
}

TransitionMatrix TransitionMatrix::identity(std::size_t classes) {
    return TransitionMatrix(DenseMatrix::identity(classes));
}

double TransitionMatrix::row_sum_error() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < classes(); ++i) {
        double s = 0.0;
        for (double v : entries_.row(i)) s += v;
        worst = std::max(worst, std::abs(s - 1.0));
    }
    return worst;
}

bool TransitionMatrix::is_identity() const { return entries_ == DenseMatrix::identity(classes()); }

void check_row_stochastic(const DenseMatrix& m, double tol) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double s = 0.0;
        for (double v : m.row(i)) {
            if (!(v >= 0.0 && v <= 1.0)) {
                throw ConfigError("transition row " + std::to_string(i) +
                                  " has an entry outside [0, 1]");
            }
            s += v;
        }
        if (std::abs(s - 1.0) > tol) {
            throw ConfigError("transition row " + std::to_string(i) + " sums to " +
                              std::to_string(s));
        }
    }
}

void validate_mapping(const ClassMapping& mapping, std::size_t classes) {
    std::vector<bool> seen(classes, false);
    for (const auto& [source, target] : mapping) {
        if (source >= classes || target >= classes) {
            throw ConfigError("class mapping " + std::to_string(source) + "->" +
                              std::to_string(target) + " is out of range for " +
                              std::to_string(classes) + " classes");
        }
        if (source == target) {
            throw ConfigError("class mapping maps class " + std::to_string(source) + " to itself");
        }
        if (seen[source]) {
            throw ConfigError("class " + std::to_string(source) + " has more than one target");
        }
        seen[source] = true;
    }
}

void NoiseSpec::validate() const {
    if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("noise rate must be in [0, 1]");
    if (kind == NoiseKind::Asymmetric && !mapping) {
        throw ConfigError("asymmetric noise requires a class mapping");
    }
}

TransitionMatrix build_transition(const NoiseSpec& spec, std::size_t classes) {
    spec.validate();
    if (classes < 2) throw ConfigError("build_transition: need at least 2 classes");
    DenseMatrix t = DenseMatrix::identity(classes);
    const double r = spec.rate;
    if (spec.kind == NoiseKind::Symmetric) {
        const double off = r / static_cast<double>(classes - 1);
        for (std::size_t i = 0; i < classes; ++i)
            for (std::size_t j = 0; j < classes; ++j) t(i, j) = i == j ? 1.0 - r : off;
    } else {
        validate_mapping(*spec.mapping, classes);
        for (const auto& [source, target] : *spec.mapping) {
            t(source, source) = 1.0 - r;
            t(source, target) = r;
        }
    }
    return TransitionMatrix(std::move(t));
}

Injection inject(std::span<const ClassId> labels, const TransitionMatrix& transition,
                 std::uint64_t seed) {
    const std::size_t classes = transition.classes();
    Injection out;
    out.noisy.resize(labels.size());
    out.flipped.resize(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const ClassId y = labels[i];
        if (y >= classes) {
            throw DimensionError("inject: label " + std::to_string(y) + " at index " +
                                 std::to_string(i) + " out of range");
        }
        const double u = unit_from_bits(derive_seed(seed, i, 0x1abe1));
        // Inverse CDF over row y; the last positive entry absorbs rounding.
        ClassId drawn = y;
        double cumulative = 0.0;
        for (std::size_t j = 0; j < classes; ++j) {
            const double p = transition(y, j);
            if (p <= 0.0) continue;
            drawn = static_cast<ClassId>(j);
            cumulative += p;
            if (u < cumulative) break;
        }
        out.noisy[i] = drawn;
        out.flipped[i] = drawn != y;
    }
    return out;
}

LabeledSet inject_labels(const LabeledSet& set, const TransitionMatrix& transition,
                         std::uint64_t seed) {
    if (transition.classes() != set.num_classes) {
        throw DimensionError("inject_labels: transition has " +
                             std::to_string(transition.classes()) + " classes, set has " +
                             std::to_string(set.num_classes));
    }
    LabeledSet out = set;
    const auto& truth = set.clean_labels();
    out.true_labels = truth;
    out.labels = inject(truth, transition, seed).noisy;
    return out;
}

ClassMapping cifar10_asym_mapping() {
    return {{9, 1}, {2, 0}, {4, 7}, {3, 5}, {5, 3}};
}

ClassMapping cifar100_asym_mapping() {
    constexpr ClassId kGroups = 20;
    constexpr ClassId kPerGroup = 5;
    ClassMapping mapping;
    for (ClassId g = 0; g < kGroups; ++g) {
        for (ClassId k = 0; k < kPerGroup; ++k) {
            mapping.push_back({g * kPerGroup + k, g * kPerGroup + (k + 1) % kPerGroup});
        }
    }
    return mapping;
}

ClassMapping cyclic_mapping(std::size_t classes) {
    ClassMapping mapping;
    for (std::size_t i = 0; i < classes; ++i) {
        mapping.push_back({static_cast<ClassId>(i), static_cast<ClassId>((i + 1) % classes)});
    }
    return mapping;
}

std::string transition_to_csv(const DenseMatrix& matrix) {
    std::ostringstream out;
    out << std::setprecision(17);
    for (std::size_t i = 0; i < matrix.rows(); ++i) {
        for (std::size_t j = 0; j < matrix.cols(); ++j) {
            if (j) out << ',';
            out << matrix(i, j);
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace noisebench
