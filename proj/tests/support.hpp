#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "noisebench/matrix.hpp"
#include "noisebench/network.hpp"
#include "noisebench/rng.hpp"

namespace nbtest {

using namespace noisebench;

inline DenseMatrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    DenseMatrix m(r, c);
    for (double& v : m.values()) v = scale * rng.normal();
    return m;
}

// |a - b| relative to the larger magnitude, with a floor so that two tiny
// numbers are not compared in relative terms.
inline double rel_err(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central difference of f at every entry of x.
inline std::vector<double> numeric_grad(const std::function<double(const DenseMatrix&)>& f, DenseMatrix x,
                                        double h = 1e-6) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x.values()[i];
        x.values()[i] = keep + h;
        const double up = f(x);
        x.values()[i] = keep - h;
        const double down = f(x);
        x.values()[i] = keep;
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

inline double max_rel_err(std::span<const double> a, std::span<const double> b, double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_err(a[i], b[i], floor));
    return worst;
}

// Flat view of every parameter (weights then bias per layer).
inline std::vector<double*> param_refs(ParamSet& p) {
    std::vector<double*> out;
    for (auto& l : p.layers) {
        for (double& v : l.weights.values()) out.push_back(&v);
        for (double& v : l.bias) out.push_back(&v);
    }
    return out;
}

inline std::vector<double> flatten(const ParamSet& p) {
    std::vector<double> out;
    for (const auto& l : p.layers) {
        out.insert(out.end(), l.weights.values().begin(), l.weights.values().end());
        out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
    return out;
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("noisebench-" + tag + "-" + std::to_string(std::hash<std::string>{}(tag) ^ reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

}  // namespace nbtest
