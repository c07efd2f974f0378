#include "noisebench/reweight.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "noisebench/errors.hpp"
#include "noisebench/losses.hpp"
#include "noisebench/rng.hpp"

namespace noisebench {

void KmmConfig::validate() const {
    if (bandwidth && !(*bandwidth > 0.0)) throw ConfigError("kmm bandwidth must be > 0");
    if (!(bound >= 1.0)) throw ConfigError("kmm bound B must be >= 1");
    if (!(eps >= 0.0 && eps < 1.0)) throw ConfigError("kmm eps must lie in [0, 1)");
    if (max_iter == 0) throw ConfigError("kmm max_iter must be >= 1");
    if (!(tol > 0.0)) throw ConfigError("kmm tol must be > 0");
}

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

void matvec(const DenseMatrix& k, std::span<const double> x, std::vector<double>& out) {
    const std::size_t n = k.rows();
    out.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = k.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += row[j] * x[j];
        out[i] = s;
    }
}

double quad_objective(const KmmProblem& p, std::span<const double> w, std::span<const double> kw) {
    const double n = static_cast<double>(w.size());
    double quad = 0.0, lin = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        quad += w[i] * kw[i];
        lin += w[i] * p.kappa[i];
    }
    return quad / (n * n) - 2.0 * lin / n + p.constant;
}

}  // namespace

double KmmProblem::objective(std::span<const double> w) const {
    if (w.size() != gram.rows()) throw DimensionError("kmm objective: weight length mismatch");
    std::vector<double> kw;
    matvec(gram, w, kw);
    return quad_objective(*this, w, kw);
}

double median_bandwidth(const DenseMatrix& train, const DenseMatrix& ref) {
    if (train.cols() != ref.cols()) throw DimensionError("median_bandwidth: dimension mismatch");
    const std::size_t total = train.rows() + ref.rows();
    constexpr std::size_t kMaxPoints = 512;
    const std::size_t stride = std::max<std::size_t>(1, (total + kMaxPoints - 1) / kMaxPoints);
    std::vector<std::span<const double>> pts;
    for (std::size_t i = 0; i < total; i += stride) {
        pts.push_back(i < train.rows() ? train.row(i) : ref.row(i - train.rows()));
    }
    std::vector<double> d;
    d.reserve(pts.size() * (pts.size() - 1) / 2);
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j) d.push_back(std::sqrt(sq_dist(pts[i], pts[j])));
    if (d.empty()) return 1.0;
    auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    const double med = *mid;
    return med > 0.0 && std::isfinite(med) ? med : 1.0;
}

KmmProblem build_kmm_problem(const DenseMatrix& train, const DenseMatrix& ref, double bandwidth) {
    if (train.cols() != ref.cols()) throw DimensionError("kmm: train and reference dimensions differ");
    if (train.rows() == 0 || ref.rows() == 0) throw ContractError("kmm: empty sample");
    if (!(bandwidth > 0.0)) throw ConfigError("kmm bandwidth must be > 0");
    const std::size_t n = train.rows(), m = ref.rows();
    const double g = 1.0 / (2.0 * bandwidth * bandwidth);
    KmmProblem p;
    p.bandwidth = bandwidth;
    p.gram = DenseMatrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        p.gram(i, i) = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = std::exp(-g * sq_dist(train.row(i), train.row(j)));
            p.gram(i, j) = v;
            p.gram(j, i) = v;
        }
    }
    p.kappa.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += std::exp(-g * sq_dist(train.row(i), ref.row(j)));
        p.kappa[i] = s / static_cast<double>(m);
    }
    double c = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        c += 1.0;
        for (std::size_t l = j + 1; l < m; ++l) c += 2.0 * std::exp(-g * sq_dist(ref.row(j), ref.row(l)));
    }
    p.constant = c / (static_cast<double>(m) * static_cast<double>(m));
    return p;
}

std::vector<double> project_kmm_feasible(std::span<const double> v, double bound, double eps) {
    const std::size_t n = v.size();
    if (n == 0) return {};
    const double lo = static_cast<double>(n) * (1.0 - eps);
    const double hi = static_cast<double>(n) * (1.0 + eps);
    auto shifted = [&](double lambda) {
        std::vector<double> w(n);
        for (std::size_t i = 0; i < n; ++i) w[i] = std::clamp(v[i] - lambda, 0.0, bound);
        return w;
    };
    auto total = [](const std::vector<double>& w) { return std::accumulate(w.begin(), w.end(), 0.0); };

    std::vector<double> w0 = shifted(0.0);
    const double s0 = total(w0);
    if (s0 >= lo && s0 <= hi) return w0;

    // sum(clip(v - lambda)) is non-increasing in lambda; bisect for the active bound.
    const double target = s0 > hi ? hi : lo;
    const auto [vmin, vmax] = std::minmax_element(v.begin(), v.end());
    double a = *vmin - bound;  // sum = n * bound >= target
    double b = *vmax;          // sum = 0 <= target
    for (int it = 0; it < 200 && b - a > 0.0; ++it) {
        const double mid = 0.5 * (a + b);
        if (mid <= a || mid >= b) break;
        if (total(shifted(mid)) > target) a = mid;
        else b = mid;
    }
    // Keep the endpoint on the feasible side of the violated constraint.
    if (s0 > hi) return shifted(b);
    std::vector<double> w = shifted(a);
    return w;
}

KmmResult kmm_weights(const DenseMatrix& train, const DenseMatrix& ref, const KmmConfig& cfg) {
    cfg.validate();
    const double sigma = cfg.bandwidth ? *cfg.bandwidth : median_bandwidth(train, ref);
    const KmmProblem p = build_kmm_problem(train, ref, sigma);
    const std::size_t n = train.rows();
    const double nd = static_cast<double>(n);

    // Lipschitz constant of the gradient: 2 lambda_max(K) / n^2, lambda_max bounded by
    // the largest absolute row sum.
    double rowmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (double v : p.gram.row(i)) s += std::abs(v);
        rowmax = std::max(rowmax, s);
    }
    const double lip = std::max(2.0 * rowmax / (nd * nd), 1e-300);

    auto gradient = [&](const std::vector<double>& kw, std::vector<double>& g) {
        g.resize(n);
        for (std::size_t i = 0; i < n; ++i) g[i] = 2.0 * kw[i] / (nd * nd) - 2.0 * p.kappa[i] / nd;
    };

    KmmResult res;
    res.bandwidth = sigma;
    std::vector<double> x = project_kmm_feasible(std::vector<double>(n, 1.0), cfg.bound, cfg.eps);
    std::vector<double> kx, ky, kz, g, step(n);
    matvec(p.gram, x, kx);
    double fx = quad_objective(p, x, kx);
    std::vector<double> y = x;
    double t = 1.0;

    auto stationarity = [&](const std::vector<double>& w, const std::vector<double>& kw) {
        gradient(kw, g);
        for (std::size_t i = 0; i < n; ++i) step[i] = w[i] - g[i] / lip;
        const auto proj = project_kmm_feasible(step, cfg.bound, cfg.eps);
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::abs(proj[i] - w[i]));
        return m;
    };

    if (stationarity(x, kx) <= cfg.tol) {
        res.converged = true;
    } else {
        for (std::size_t it = 0; it < cfg.max_iter; ++it) {
            matvec(p.gram, y, ky);
            gradient(ky, g);
            for (std::size_t i = 0; i < n; ++i) step[i] = y[i] - g[i] / lip;
            std::vector<double> z = project_kmm_feasible(step, cfg.bound, cfg.eps);
            matvec(p.gram, z, kz);
            const double fz = quad_objective(p, z, kz);
            const std::vector<double> x_prev = x;
            if (fz <= fx) {
                x = z;
                kx = kz;
                fx = fz;
            }
            const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            for (std::size_t i = 0; i < n; ++i) {
                y[i] = x[i] + (t / t_next) * (z[i] - x[i]) + ((t - 1.0) / t_next) * (x[i] - x_prev[i]);
            }
            t = t_next;
            res.objective_trace.push_back(fx);
            res.iterations = it + 1;
            if (stationarity(x, kx) <= cfg.tol) {
                res.converged = true;
                break;
            }
        }
    }
    res.weights = std::move(x);
    res.objective = fx;
    return res;
}

// ---------------------------------------------------------------------------
// DIW
// ---------------------------------------------------------------------------

namespace {

DenseMatrix column(std::span<const double> values, std::span<const std::size_t> idx) {
    DenseMatrix out(idx.size(), 1);
    for (std::size_t r = 0; r < idx.size(); ++r) out(r, 0) = values[idx[r]];
    return out;
}

DenseMatrix column(std::span<const double> values) {
    DenseMatrix out(values.size(), 1);
    for (std::size_t r = 0; r < values.size(); ++r) out(r, 0) = values[r];
    return out;
}

}  // namespace

DiwEpochReport diw_epoch(Classifier& model, ClassifierOptim& optim, const LabeledSet& train,
                         const LabeledSet& clean_val, const DiwConfig& cfg,
                         const TrainConfig& tcfg, std::size_t epoch, double lr) {
    cfg.kmm.validate();
    if (clean_val.size() == 0) throw ConfigError("diw: empty clean validation set");
    const LossSpec cce_spec{};
    const auto batches = epoch_batches(train.size(), tcfg.batch_size, tcfg.seed, epoch);

    DiwEpochReport report;
    report.weights.assign(train.size(), 1.0);
    if (!cfg.force_unit_weights) {
        std::vector<double> train_loss, val_loss;
        DenseMatrix val_ref;
        if (cfg.features == DiwFeatureSpace::LossValue) {
            train_loss = per_sample_loss(cce_spec, classifier_logits(model, train.features), train.labels).values;
            val_loss = per_sample_loss(cce_spec, classifier_logits(model, clean_val.features),
                                       clean_val.clean_labels())
                           .values;
            val_ref = column(val_loss);
        } else {
            val_ref = clean_val.features;
        }
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto& idx = batches[b];
            const DenseMatrix feats = cfg.features == DiwFeatureSpace::LossValue
                                          ? column(train_loss, idx)
                                          : take_rows(train.features, idx);
            const KmmResult k = kmm_weights(feats, val_ref, cfg.kmm);
            if (std::all_of(k.weights.begin(), k.weights.end(), [](double w) { return w == 0.0; })) {
                throw NumericError("diw: all importance weights are zero in epoch " + std::to_string(epoch) +
                                   " batch " + std::to_string(b));
            }
            for (std::size_t r = 0; r < idx.size(); ++r) report.weights[idx[r]] = k.weights[r];
            KmmBatchLog log;
            log.batch = b;
            log.objective = k.objective;
            log.iterations = k.iterations;
            log.converged = k.converged;
            log.mean_weight = std::accumulate(k.weights.begin(), k.weights.end(), 0.0) /
                              static_cast<double>(k.weights.size());
            report.kmm.push_back(log);
        }
    }

    double total = 0.0;
    for (const auto& idx : batches) {
        const DenseMatrix x = take_rows(train.features, idx);
        const auto y = gather(train.labels, idx);
        std::vector<double> w(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) w[r] = report.weights[idx[r]];
        ClassifierCache cache;
        const DenseMatrix logits = classifier_forward(model, x, cache);
        const LossOutput loss = reduce_mean(per_sample_loss(cce_spec, logits, y), std::span<const double>(w));
        if (!std::isfinite(loss.value)) throw NumericError("diw: non-finite loss in epoch " + std::to_string(epoch));
        classifier_step(model, classifier_backward(model, cache, loss.dlogits), optim, tcfg, lr);
        total += loss.value;
    }
    report.mean_loss = batches.empty() ? 0.0 : total / static_cast<double>(batches.size());
    return report;
}

// ---------------------------------------------------------------------------
// Meta-weight net
// ---------------------------------------------------------------------------

namespace {

double sigmoid(double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

DenseMatrix loss_column(std::span<const double> values) { return column(values); }

}  // namespace

MetaNet MetaNet::create(std::size_t hidden, std::uint64_t seed) {
    if (hidden == 0) throw ConfigError("meta net hidden width must be >= 1");
    MetaNet m;
    m.net.arch = ArchSpec{{1, hidden, 1}};
    // U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases: the output layer
    // starts small, so the initial weight curve is close to flat around 0.5.
    Rng rng(seed);
    for (std::size_t l = 0; l < m.net.arch.num_layers(); ++l) {
        const std::size_t fan_in = m.net.arch.layer_dims[l], fan_out = m.net.arch.layer_dims[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Layer layer{DenseMatrix(fan_in, fan_out), std::vector<double>(fan_out)};
        for (double& v : layer.weights.values()) v = rng.uniform(-bound, bound);
        for (double& v : layer.bias) v = rng.uniform(-bound, bound);
        m.net.params.layers.push_back(std::move(layer));
    }
    return m;
}

std::vector<double> normalize_batch_weights(std::span<const double> w) {
    const double sum = std::accumulate(w.begin(), w.end(), 0.0);
    std::vector<double> v(w.begin(), w.end());
    if (!(sum > 0.0)) return v;
    const double scale = static_cast<double>(w.size()) / sum;
    for (double& x : v) x *= scale;
    return v;
}

MetaNet MetaNet::constant_output(double value) {
    if (!(value >= 0.0) || !std::isfinite(value)) throw ConfigError("meta net constant must be finite and >= 0");
    MetaNet m;
    m.net = Network::random(ArchSpec{{1, 1, 1}}, 0);
    m.constant = value;
    return m;
}

std::vector<double> metanet_weights(const MetaNet& meta, std::span<const double> loss_values) {
    if (meta.constant) return std::vector<double>(loss_values.size(), *meta.constant);
    const DenseMatrix out = predict(meta.net.arch, meta.net.params, loss_column(loss_values));
    std::vector<double> w(loss_values.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = sigmoid(out(i, 0));
    return w;
}

double metanet_weight(const MetaNet& meta, double loss_value) {
    return metanet_weights(meta, std::span<const double>(&loss_value, 1))[0];
}

ParamSet metanet_backward(const MetaNet& meta, std::span<const double> loss_values,
                          std::span<const double> dweights) {
    if (loss_values.size() != dweights.size()) throw DimensionError("metanet_backward: length mismatch");
    if (meta.constant) return zeros_like(meta.net.params);
    const auto fr = forward(meta.net.arch, meta.net.params, loss_column(loss_values));
    DenseMatrix dout(loss_values.size(), 1);
    for (std::size_t i = 0; i < loss_values.size(); ++i) {
        const double s = sigmoid(fr.logits(i, 0));
        dout(i, 0) = dweights[i] * s * (1.0 - s);
    }
    return backward(meta.net.arch, meta.net.params, fr.cache, dout);
}

namespace {

struct MetaPass {
    PerSampleLoss per;
    ClassifierCache cache;
    ParamSet meta_grad;
};

MetaPass meta_pass(const Classifier& model, const MetaNet& meta, const DenseMatrix& train_x,
                   std::span<const ClassId> train_y, const DenseMatrix& val_x,
                   std::span<const ClassId> val_y, double lr) {
    if (val_x.rows() == 0) throw ContractError("mwnet: empty validation batch");
    const LossSpec cce_spec{};
    MetaPass mp;
    const DenseMatrix logits = classifier_forward(model, train_x, mp.cache);
    mp.per = per_sample_loss(cce_spec, logits, train_y);
    if (meta.constant) {
        mp.meta_grad = zeros_like(meta.net.params);
        return mp;
    }
    const auto raw = metanet_weights(meta, mp.per.values);
    const auto w = normalize_batch_weights(raw);
    const LossOutput weighted = reduce_mean(mp.per, std::span<const double>(w));
    const ClassifierGrads g = classifier_backward(model, mp.cache, weighted.dlogits);

    Classifier lookahead = model;
    classifier_axpy(lookahead, -lr, g);
    ClassifierCache vcache;
    const DenseMatrix vlogits = classifier_forward(lookahead, val_x, vcache);
    const LossOutput vloss = cce(vlogits, val_y);
    const ClassifierGrads gval = classifier_backward(lookahead, vcache, vloss.dlogits);

    // With v the normalised weights, dJ/dv_i = -(lr / n) <g_val(theta_hat), grad L_i(theta)>.
    // v_i = n w_i / S, so dJ/dw_i = (n / S) (dJ/dv_i - mean_j v_j dJ/dv_j).
    const auto s = classifier_per_sample_dot(model, mp.cache, mp.per.grads, gval);
    const double n = static_cast<double>(train_x.rows());
    std::vector<double> dv(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) dv[i] = -(lr / n) * s[i];
    const double sum = std::accumulate(raw.begin(), raw.end(), 0.0);
    std::vector<double> dw = dv;
    if (sum > 0.0) {
        double centre = 0.0;
        for (std::size_t i = 0; i < dv.size(); ++i) centre += w[i] * dv[i] / n;
        for (std::size_t i = 0; i < dv.size(); ++i) dw[i] = n / sum * (dv[i] - centre);
    }
    mp.meta_grad = metanet_backward(meta, mp.per.values, dw);
    return mp;
}

}  // namespace

ParamSet mwnet_meta_gradient(const Classifier& model, const MetaNet& meta,
                             const DenseMatrix& train_x, std::span<const ClassId> train_y,
                             const DenseMatrix& val_x, std::span<const ClassId> val_y, double lr) {
    return meta_pass(model, meta, train_x, train_y, val_x, val_y, lr).meta_grad;
}

MwnetStepReport mwnet_step(Classifier& model, ClassifierOptim& optim, MetaNet& meta,
                           const DenseMatrix& train_x, std::span<const ClassId> train_y,
                           const DenseMatrix& val_x, std::span<const ClassId> val_y,
                           const TrainConfig& cfg, double lr, double meta_lr) {
    MwnetStepReport rep;
    MetaPass mp = meta_pass(model, meta, train_x, train_y, val_x, val_y, lr);
    if (!meta.constant) {
        if (mp.meta_grad.all_finite()) {
            axpy(meta.net.params, -meta_lr, mp.meta_grad);
        } else {
            rep.meta_skipped = true;
        }
    }
    const auto w = normalize_batch_weights(metanet_weights(meta, mp.per.values));
    const LossOutput loss = reduce_mean(mp.per, std::span<const double>(w));
    if (!std::isfinite(loss.value)) throw NumericError("mwnet: non-finite weighted loss");
    classifier_step(model, classifier_backward(model, mp.cache, loss.dlogits), optim, cfg, lr);
    rep.train_loss = loss.value;
    return rep;
}

MwnetTrainReport train_mwnet(Classifier& model, MetaNet& meta, const LabeledSet& train,
                             const LabeledSet& clean_val, const MwnetConfig& cfg,
                             const TrainConfig& tcfg) {
    tcfg.validate();
    model.validate();
    if (clean_val.size() == 0) throw ConfigError("mwnet: empty clean validation set");
    MwnetTrainReport report;
    ClassifierOptim optim = ClassifierOptim::for_model(model);
    const auto& val_labels = clean_val.clean_labels();
    const std::size_t vb = std::min(tcfg.batch_size, clean_val.size());
    std::vector<std::size_t> val_order;
    std::size_t val_pos = 0, val_round = 0;
    constexpr std::uint64_t kValStream = 0x3e7a;

    for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
        const double lr = cosine_lr(tcfg.lr0, epoch, tcfg.epochs);
        const double meta_lr = cfg.meta_lr ? *cfg.meta_lr : lr;
        double total = 0.0;
        const auto batches = epoch_batches(train.size(), tcfg.batch_size, tcfg.seed, epoch);
        for (const auto& idx : batches) {
            std::vector<std::size_t> vidx;
            while (vidx.size() < vb) {
                if (val_pos == val_order.size()) {
                    val_order = shuffled_indices(clean_val.size(), derive_seed(tcfg.seed, kValStream, val_round++));
                    val_pos = 0;
                }
                vidx.push_back(val_order[val_pos++]);
            }
            const auto rep = mwnet_step(model, optim, meta, take_rows(train.features, idx),
                                        gather(train.labels, idx), take_rows(clean_val.features, vidx),
                                        gather(val_labels, vidx), tcfg, lr, meta_lr);
            if (rep.meta_skipped) ++report.skipped_meta_steps;
            total += rep.train_loss;
        }
        report.epoch_loss.push_back(batches.empty() ? 0.0 : total / static_cast<double>(batches.size()));
    }
    if (report.skipped_meta_steps > 0) {
        warn("mwnet: skipped " + std::to_string(report.skipped_meta_steps) +
             " meta updates with non-finite gradients");
    }
    return report;
}

}  // namespace noisebench
