#include "noisebench/checks.hpp"

#include <cmath>
#include <cstdio>
#include <functional>

#include "noisebench/correction.hpp"
#include "noisebench/losses.hpp"
#include "noisebench/noise.hpp"
#include "noisebench/reweight.hpp"
#include "noisebench/rng.hpp"
#include "noisebench/training.hpp"

namespace noisebench {

namespace {

std::string fmt(const char* f, double v) {
    char buf[96];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

DenseMatrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale) {
    DenseMatrix m(r, c);
    for (double& v : m.values()) v = scale * rng.normal();
    return m;
}

// Max relative error of the analytic logit gradient against central differences.
double fd_error(const std::function<LossOutput(const DenseMatrix&)>& f, DenseMatrix x) {
    const LossOutput base = f(x);
    double worst = 0.0;
    const double h = 1e-6;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x.values()[i];
        x.values()[i] = keep + h;
        const double up = f(x).value;
        x.values()[i] = keep - h;
        const double down = f(x).value;
        x.values()[i] = keep;
        const double num = (up - down) / (2 * h);
        const double ana = base.dlogits.values()[i];
        worst = std::max(worst, std::abs(num - ana) / std::max(1e-6, std::abs(num) + std::abs(ana)));
    }
    return worst;
}

CheckResult gradient_check() {
    Rng rng(7);
    double worst = 0.0;
    const TransitionMatrix t = build_transition(NoiseSpec{NoiseKind::Symmetric, 0.3, std::nullopt, 0}, 4);
    for (int trial = 0; trial < 10; ++trial) {
        const DenseMatrix logits = random_matrix(rng, 5, 4, 1.5);
        std::vector<ClassId> y(5);
        for (auto& v : y) v = static_cast<ClassId>(rng.below(4));
        for (const char* name : {"cce", "mae", "gce", "sce"}) {
            const LossSpec spec = LossSpec::parse(name);
            worst = std::max(worst, fd_error([&](const DenseMatrix& l) { return evaluate_loss(spec, l, y); }, logits));
        }
        worst = std::max(worst, fd_error([&](const DenseMatrix& l) { return forward_corrected_loss(l, y, t); }, logits));
        worst = std::max(worst, fd_error([](const DenseMatrix& z) { return nt_xent(z, 0.5); }, random_matrix(rng, 6, 3, 1.0)));
    }
    return {"loss gradients match finite differences", worst < 1e-4, fmt("max rel err %.2e", worst)};
}

CheckResult symmetry_check() {
    std::vector<std::vector<double>> grid;
    Rng rng(3);
    for (int k = 0; k < 50; ++k) {
        std::vector<double> p(10);
        double s = 0.0;
        for (double& v : p) s += (v = rng.uniform() + 1e-3);
        for (double& v : p) v /= s;
        grid.push_back(p);
    }
    const double mae_defect = symmetry_defect(LossSpec::parse("mae"), grid);
    const double cce_defect = symmetry_defect(LossSpec::parse("cce"), grid);
    return {"MAE is symmetric, CCE is not", mae_defect < 1e-10 && cce_defect > 0.1,
            fmt("MAE defect %.2e", mae_defect) + fmt(", CCE defect %.3f", cce_defect)};
}

CheckResult transition_check() {
    double worst = 0.0;
    for (double r : {0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 0.95}) {
        worst = std::max(worst, build_transition(NoiseSpec{NoiseKind::Symmetric, r, std::nullopt, 0}, 10).row_sum_error());
        worst = std::max(worst, build_transition(NoiseSpec{NoiseKind::Asymmetric, r, cifar10_asym_mapping(), 0}, 10).row_sum_error());
        worst = std::max(worst, build_transition(NoiseSpec{NoiseKind::Asymmetric, r, cifar100_asym_mapping(), 0}, 100).row_sum_error());
    }
    return {"transition matrices are row-stochastic", worst <= 1e-12, fmt("max row-sum error %.2e", worst)};
}

CheckResult kmm_check() {
    Rng rng(11);
    const DenseMatrix a = random_matrix(rng, 40, 2, 1.0);
    DenseMatrix b = random_matrix(rng, 30, 2, 1.0);
    for (double& v : b.values()) v += 0.7;
    KmmConfig cfg;
    const KmmResult r = kmm_weights(a, b, cfg);
    double mean = 0.0;
    bool in_box = true;
    for (double w : r.weights) {
        mean += w;
        in_box = in_box && w >= 0.0 && w <= cfg.bound;
    }
    mean /= static_cast<double>(r.weights.size());
    bool monotone = true;
    for (std::size_t i = 1; i < r.objective_trace.size(); ++i) monotone = monotone && r.objective_trace[i] <= r.objective_trace[i - 1];
    const bool ok = in_box && std::abs(mean - 1.0) <= cfg.eps + 1e-12 && monotone;
    return {"KMM solution feasible, objective non-increasing", ok, fmt("mean weight %.4f", mean)};
}

CheckResult reduction_check() {
    Rng rng(5);
    Classifier model;
    model.head = Network::random(ArchSpec{{3, 4, 3}}, 9);
    Classifier plain = model;
    const DenseMatrix x = random_matrix(rng, 8, 3, 1.0);
    const DenseMatrix xv = random_matrix(rng, 4, 3, 1.0);
    const std::vector<ClassId> y{0, 1, 2, 0, 1, 2, 0, 1}, yv{0, 1, 2, 0};
    TrainConfig cfg;
    ClassifierOptim o1 = ClassifierOptim::for_model(model), o2 = ClassifierOptim::for_model(plain);
    MetaNet meta = MetaNet::constant_output(1.0);
    for (int step = 0; step < 3; ++step) {
        mwnet_step(model, o1, meta, x, y, xv, yv, cfg, 0.05, 0.05);
        ClassifierCache cache;
        const DenseMatrix logits = classifier_forward(plain, x, cache);
        classifier_step(plain, classifier_backward(plain, cache, cce(logits, y).dlogits), o2, cfg, 0.05);
    }
    const bool mw_ok = model.head.params == plain.head.params;

    const DenseMatrix logits = random_matrix(rng, 6, 3, 2.0);
    const std::vector<ClassId> yl{0, 1, 2, 2, 1, 0};
    const LossOutput a = forward_corrected_loss(logits, yl, TransitionMatrix::identity(3));
    const LossOutput b = cce(logits, yl);
    const double diff = std::max(std::abs(a.value - b.value), max_abs_diff(a.dlogits, b.dlogits));
    return {"reductions: constant-1 meta net = SGD, identity correction = CCE", mw_ok && diff < 1e-12,
            fmt("correction diff %.2e", diff)};
}

}  // namespace

std::vector<CheckResult> run_invariant_checks() {
    std::vector<CheckResult> out;
    for (const auto& fn : {gradient_check, symmetry_check, transition_check, kmm_check, reduction_check}) {
        try {
            out.push_back(fn());
        } catch (const std::exception& e) {
            out.push_back({"check raised", false, e.what()});
        }
    }
    return out;
}

}  // namespace noisebench
