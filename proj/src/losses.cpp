#include "noisebench/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "noisebench/errors.hpp"

namespace noisebench {

namespace {

void check_batch(const DenseMatrix& logits, std::span<const ClassId> labels) {
    if (logits.rows() != labels.size()) {
        throw DimensionError("loss: " + std::to_string(logits.rows()) + " logit rows but " +
                             std::to_string(labels.size()) + " labels");
    }
    for (ClassId y : labels) {
        if (y >= logits.cols()) {
            throw DimensionError("loss: label " + std::to_string(y) + " out of range for " +
                                 std::to_string(logits.cols()) + " classes");
        }
    }
}

}  // namespace

void GceConfig::validate() const {
    if (!(q > 0.0 && q <= 1.0)) throw ConfigError("GCE q must be in (0, 1]");
}

void SceConfig::validate() const {
    if (!(alpha >= 0.0 && beta >= 0.0) || !(alpha + beta > 0.0)) {
        throw ConfigError("SCE needs alpha, beta >= 0 with alpha + beta > 0");
    }
}

LossSpec LossSpec::parse(std::string_view name) {
    LossSpec spec;
    if (name == "cce") spec.kind = LossKind::Cce;
    else if (name == "mae") spec.kind = LossKind::Mae;
    else if (name == "gce") spec.kind = LossKind::Gce;
    else if (name == "sce") spec.kind = LossKind::Sce;
    else throw ConfigError("unknown loss '" + std::string(name) + "' (cce|mae|gce|sce)");
    return spec;
}

std::string LossSpec::name() const {
    switch (kind) {
        case LossKind::Cce: return "cce";
        case LossKind::Mae: return "mae";
        case LossKind::Gce: return "gce";
        case LossKind::Sce: return "sce";
    }
    return "?";
}

PerSampleLoss per_sample_loss(const LossSpec& spec, const DenseMatrix& logits,
                              std::span<const ClassId> labels) {
    check_batch(logits, labels);
    if (spec.kind == LossKind::Gce) spec.gce.validate();
    if (spec.kind == LossKind::Sce) spec.sce.validate();

    const std::size_t n = logits.rows();
    const std::size_t classes = logits.cols();
    PerSampleLoss out;
    out.values.resize(n);
    out.grads = softmax(logits);
    for (std::size_t i = 0; i < n; ++i) {
        auto z = logits.row(i);
        auto g = out.grads.row(i);  // holds p on entry
        const ClassId y = labels[i];
        const double py = g[y];
        switch (spec.kind) {
            case LossKind::Cce: {
                const double peak = *std::max_element(z.begin(), z.end());
                double total = 0.0;
                for (double v : z) total += std::exp(v - peak);
                out.values[i] = std::log(total) - (z[y] - peak);
                g[y] -= 1.0;
                break;
            }
            case LossKind::Mae: {
                // sum_c |p_c - onehot_c| = 2 (1 - p_y); d/dz_k = -2 p_y (delta_yk - p_k)
                out.values[i] = 2.0 * (1.0 - py);
                for (std::size_t k = 0; k < classes; ++k) {
                    const double pk = g[k];
                    g[k] = -2.0 * py * ((k == y ? 1.0 : 0.0) - pk);
                }
                break;
            }
            case LossKind::Gce: {
                const double q = spec.gce.q;
                const double pyq = std::pow(py, q);
                out.values[i] = (1.0 - pyq) / q;
                for (std::size_t k = 0; k < classes; ++k) {
                    const double pk = g[k];
                    g[k] = -pyq * ((k == y ? 1.0 : 0.0) - pk);
                }
                break;
            }
            case LossKind::Sce: {
                const auto& c = spec.sce;
                const double peak = *std::max_element(z.begin(), z.end());
                double total = 0.0;
                for (double v : z) total += std::exp(v - peak);
                const double ce = std::log(total) - (z[y] - peak);
                const double rce = -c.clamp * (1.0 - py);
                out.values[i] = c.alpha * ce + c.beta * rce;
                for (std::size_t k = 0; k < classes; ++k) {
                    const double pk = g[k];
                    const double onehot = k == y ? 1.0 : 0.0;
                    const double dce = pk - onehot;
                    const double drce = c.clamp * py * (onehot - pk);
                    g[k] = c.alpha * dce + c.beta * drce;
                }
                break;
            }
        }
    }
    return out;
}

LossOutput reduce_mean(const PerSampleLoss& per_sample,
                       std::optional<std::span<const double>> weights) {
    const std::size_t n = per_sample.values.size();
    if (n == 0) throw ContractError("reduce_mean: empty batch");
    if (weights && weights->size() != n) {
        throw DimensionError("reduce_mean: " + std::to_string(weights->size()) +
                             " weights for " + std::to_string(n) + " samples");
    }
    const double count = static_cast<double>(n);
    LossOutput out;
    out.clamp_incidents = per_sample.clamp_incidents;
    out.dlogits = per_sample.grads;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = weights ? (*weights)[i] : 1.0;
        total += w * per_sample.values[i];
        for (double& g : out.dlogits.row(i)) g = (g * w) / count;
    }
    out.value = total / count;
    return out;
}

LossOutput cce(const DenseMatrix& logits, std::span<const ClassId> labels) {
    return reduce_mean(per_sample_loss(LossSpec{LossKind::Cce, {}, {}}, logits, labels));
}

LossOutput mae(const DenseMatrix& logits, std::span<const ClassId> labels) {
    return reduce_mean(per_sample_loss(LossSpec{LossKind::Mae, {}, {}}, logits, labels));
}

LossOutput gce(const DenseMatrix& logits, std::span<const ClassId> labels, const GceConfig& cfg) {
    return reduce_mean(per_sample_loss(LossSpec{LossKind::Gce, cfg, {}}, logits, labels));
}

LossOutput sce(const DenseMatrix& logits, std::span<const ClassId> labels, const SceConfig& cfg) {
    return reduce_mean(per_sample_loss(LossSpec{LossKind::Sce, {}, cfg}, logits, labels));
}

LossOutput evaluate_loss(const LossSpec& spec, const DenseMatrix& logits,
                         std::span<const ClassId> labels) {
    return reduce_mean(per_sample_loss(spec, logits, labels));
}

double loss_on_probs(const LossSpec& spec, std::span<const double> probs, ClassId label) {
    if (label >= probs.size()) throw DimensionError("loss_on_probs: label out of range");
    const double py = probs[label];
    switch (spec.kind) {
        case LossKind::Cce: return -std::log(py);
        case LossKind::Mae: {
            double s = 0.0;
            for (std::size_t c = 0; c < probs.size(); ++c)
                s += std::abs(probs[c] - (c == label ? 1.0 : 0.0));
            return s;
        }
        case LossKind::Gce: return (1.0 - std::pow(py, spec.gce.q)) / spec.gce.q;
        case LossKind::Sce:
            return spec.sce.alpha * -std::log(py) + spec.sce.beta * -spec.sce.clamp * (1.0 - py);
    }
    return 0.0;
}

double symmetry_defect(const ProbLoss& loss, const std::vector<std::vector<double>>& grid) {
    if (grid.empty()) throw ContractError("symmetry_defect: empty grid");
    std::vector<double> sums;
    sums.reserve(grid.size());
    for (const auto& p : grid) {
        double s = 0.0;
        for (std::size_t y = 0; y < p.size(); ++y) s += loss(p, static_cast<ClassId>(y));
        sums.push_back(s);
    }
    double mean = 0.0;
    for (double s : sums) mean += s;
    mean /= static_cast<double>(sums.size());
    double worst = 0.0;
    for (double s : sums) worst = std::max(worst, std::abs(s - mean));
    return worst;
}

double symmetry_defect(const LossSpec& spec, const std::vector<std::vector<double>>& grid) {
    return symmetry_defect(
        [&spec](std::span<const double> p, ClassId y) { return loss_on_probs(spec, p, y); }, grid);
}

LossOutput nt_xent(const DenseMatrix& z, double tau, bool exclude_self) {
    if (!(tau > 0.0)) throw ConfigError("nt_xent: tau must be > 0");
    const std::size_t rows = z.rows();
    if (rows < 2 || rows % 2 != 0) {
        throw ContractError("nt_xent: need an even number (>= 2) of rows ordered as pairs");
    }
    const std::size_t dim = z.cols();

    std::vector<double> norms(rows);
    DenseMatrix u(rows, dim);
    for (std::size_t i = 0; i < rows; ++i) {
        double s = 0.0;
        for (double v : z.row(i)) s += v * v;
        norms[i] = std::sqrt(s);
        if (!(norms[i] > 0.0)) {
            throw ContractError("nt_xent: row " + std::to_string(i) +
                                " has zero norm; cosine similarity undefined");
        }
        for (std::size_t j = 0; j < dim; ++j) u(i, j) = z(i, j) / norms[i];
    }

    DenseMatrix sim = matmul_nt(u, u);
    for (double& v : sim.values()) v /= tau;

    const double count = static_cast<double>(rows);
    DenseMatrix dsim(rows, rows);
    double total = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
        const std::size_t pos = i ^ 1U;
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < rows; ++k) {
            if (exclude_self && k == i) continue;
            peak = std::max(peak, sim(i, k));
        }
        double denom = 0.0;
        for (std::size_t k = 0; k < rows; ++k) {
            if (exclude_self && k == i) continue;
            denom += std::exp(sim(i, k) - peak);
        }
        const double lse = peak + std::log(denom);
        total += lse - sim(i, pos);
        for (std::size_t k = 0; k < rows; ++k) {
            if (exclude_self && k == i) continue;
            const double prob = std::exp(sim(i, k) - lse);
            dsim(i, k) = (prob - (k == pos ? 1.0 : 0.0)) / count;
        }
    }

    // sim_ik = u_i . u_k / tau, so dU = (dS + dS^T) U / tau.
    DenseMatrix sym(rows, rows);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t k = 0; k < rows; ++k) sym(i, k) = (dsim(i, k) + dsim(k, i)) / tau;
    const DenseMatrix du = matmul(sym, u);

    LossOutput out;
    out.value = total / count;
    out.dlogits = DenseMatrix(rows, dim);
    for (std::size_t i = 0; i < rows; ++i) {
        double radial = 0.0;
        for (std::size_t j = 0; j < dim; ++j) radial += u(i, j) * du(i, j);
        for (std::size_t j = 0; j < dim; ++j) {
            out.dlogits(i, j) = (du(i, j) - u(i, j) * radial) / norms[i];
        }
    }
    return out;
}

}  // namespace noisebench
