#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "noisebench/errors.hpp"
#include "noisebench/harness.hpp"
#include "noisebench/paramio.hpp"
#include "noisebench/rng.hpp"
#include "noisebench/training.hpp"

namespace noisebench {

using nlohmann::json;

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    std::replace(out.begin(), out.end(), '-', '_');
    return out;
}

// Stream ids for per-seed derivations.
enum : std::uint64_t {
    kSplitStream = 1,
    kNoiseStream,
    kValStream,
    kEncoderInit,
    kHeadInit,
    kTrainStream,
    kMetaInit,
    kProjInit,
};

}  // namespace

Protocol parse_protocol(std::string_view name) {
    const std::string s = lower(name);
    if (s == "end_to_end" || s == "e2e" || s == "endtoend") return Protocol::EndToEnd;
    if (s == "freeze" || s == "frozen") return Protocol::Freeze;
    if (s == "fine_tune" || s == "finetune" || s == "fine_tuning") return Protocol::FineTune;
    throw ConfigError("unknown protocol '" + std::string(name) + "' (expected end_to_end, freeze or fine_tune)");
}

std::string protocol_name(Protocol p) {
    switch (p) {
        case Protocol::EndToEnd: return "end_to_end";
        case Protocol::Freeze: return "freeze";
        case Protocol::FineTune: return "fine_tune";
    }
    return "?";
}

Algorithm parse_algorithm(std::string_view name) {
    const std::string s = lower(name);
    if (s == "cce" || s == "ce") return Algorithm::Cce;
    if (s == "mae") return Algorithm::Mae;
    if (s == "gce") return Algorithm::Gce;
    if (s == "sce") return Algorithm::Sce;
    if (s == "fcorrection" || s == "f_correction" || s == "forward") return Algorithm::FCorrection;
    if (s == "glc") return Algorithm::Glc;
    if (s == "diw") return Algorithm::Diw;
    if (s == "mwnet") return Algorithm::Mwnet;
    if (s == "colearning" || s == "colearn") return Algorithm::CoLearning;
    throw ConfigError("unknown algorithm '" + std::string(name) + "'");
}

std::string algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::Cce: return "cce";
        case Algorithm::Mae: return "mae";
        case Algorithm::Gce: return "gce";
        case Algorithm::Sce: return "sce";
        case Algorithm::FCorrection: return "fcorrection";
        case Algorithm::Glc: return "glc";
        case Algorithm::Diw: return "diw";
        case Algorithm::Mwnet: return "mwnet";
        case Algorithm::CoLearning: return "colearning";
    }
    return "?";
}

KnowledgeRequirements requirements(Algorithm a) {
    switch (a) {
        case Algorithm::CoLearning: return {true, false};
        case Algorithm::Diw:
        case Algorithm::Mwnet:
        case Algorithm::Glc: return {false, true};
        default: return {};
    }
}

void validate_knowledge(Algorithm a, const Knowledge& k) {
    const auto req = requirements(a);
    if (req.noise_ratio && !k.noise_ratio) {
        throw ConfigError("algorithm '" + algorithm_name(a) +
                          "' requires the noise ratio to be known (pass --noise-ratio)");
    }
    if (req.clean_validation && !k.clean_val_fraction) {
        throw ConfigError("algorithm '" + algorithm_name(a) +
                          "' requires a clean validation set (pass --clean-val-fraction)");
    }
    if (k.noise_ratio && !(*k.noise_ratio >= 0.0 && *k.noise_ratio < 1.0)) {
        throw ConfigError("noise ratio must lie in [0, 1)");
    }
    if (k.clean_val_fraction && !(*k.clean_val_fraction > 0.0 && *k.clean_val_fraction < 1.0)) {
        throw ConfigError("clean validation fraction must lie in (0, 1)");
    }
}

// ---------------------------------------------------------------------------

std::string DatasetSpec::label() const {
    if (kind == "blobs") {
        char buf[160];
        std::snprintf(buf, sizeof buf, "blobs-c%zu-n%zu-d%zu-s%g-seed%llu", num_classes, samples, dim, separation,
                      static_cast<unsigned long long>(seed));
        return buf;
    }
    return std::filesystem::path(path).stem().string();
}

LabeledSet DatasetSpec::load() const {
    LabeledSet set;
    if (kind == "blobs") {
        if (num_classes < 2 || samples < num_classes) throw ConfigError("blobs: need C >= 2 and samples >= C");
        set = make_synthetic_blobs(num_classes, samples / num_classes, dim, separation, seed);
    } else if (kind == "embeddings") {
        set = load_embeddings(path);
    } else if (kind == "csv") {
        set = load_csv(path);
    } else {
        throw ConfigError("unknown dataset kind '" + kind + "' (expected blobs, embeddings or csv)");
    }
    // The harness injects its own noise: start from the ground truth.
    set.labels = set.clean_labels();
    set.true_labels.reset();
    return set;
}

NoiseSpec parse_noise(std::string_view text) {
    const std::string s = lower(text);
    NoiseSpec n;
    if (s == "clean" || s == "none") return n;
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw ConfigError("noise must be clean, sym:<r> or asym:<r>, got '" + s + "'");
    const std::string kind = s.substr(0, colon);
    if (kind == "sym" || kind == "symmetric") n.kind = NoiseKind::Symmetric;
    else if (kind == "asym" || kind == "asymmetric") n.kind = NoiseKind::Asymmetric;
    else throw ConfigError("unknown noise kind '" + kind + "'");
    double r = 0.0;
    try {
        std::size_t used = 0;
        r = std::stod(s.substr(colon + 1), &used);
        if (used != s.size() - colon - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw ConfigError("bad noise rate in '" + s + "'");
    }
    if (r > 1.0) r /= 100.0;
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("noise rate out of range in '" + s + "'");
    n.rate = r;
    return n;
}

std::string noise_label(const NoiseSpec& noise) {
    if (noise.rate == 0.0) return "clean";
    const long pct = std::lround(noise.rate * 100.0);
    return (noise.kind == NoiseKind::Symmetric ? "sym" : "asym") + std::to_string(pct);
}

namespace {

ClassMapping default_mapping(std::size_t classes) {
    if (classes == 10) return cifar10_asym_mapping();
    if (classes == 100) return cifar100_asym_mapping();
    return cyclic_mapping(classes);
}

NoiseSpec resolved_noise(const NoiseSpec& n, std::size_t classes) {
    NoiseSpec out = n;
    if (out.kind == NoiseKind::Asymmetric && !out.mapping) out.mapping = default_mapping(classes);
    return out;
}

}  // namespace

void ExperimentSpec::validate() const {
    validate_knowledge(algorithm, knowledge);
    train.validate();
    if (seeds.empty()) throw ConfigError("experiment needs at least one seed");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
    if (protocol != Protocol::EndToEnd && encoder_path.empty()) {
        if (!(protocol == Protocol::Freeze && dataset.kind == "embeddings")) {
            throw ConfigError("protocol " + protocol_name(protocol) + " requires an encoder parameter file");
        }
    }
    if (!(noise.rate >= 0.0 && noise.rate <= 1.0)) throw ConfigError("noise rate must lie in [0, 1]");
    if (algorithm == Algorithm::FCorrection && options.fc_transition == TransitionSource::Gold &&
        !knowledge.clean_val_fraction) {
        throw ConfigError("fcorrection with a gold transition estimate requires a clean validation set "
                          "(pass --clean-val-fraction)");
    }
    if (algorithm == Algorithm::Diw) options.kmm.validate();
    if (algorithm == Algorithm::CoLearning) {
        CoLearnConfig c = options.colearn;
        c.noise_ratio = *knowledge.noise_ratio;
        c.validate();
    }
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace {

json train_json(const TrainConfig& t) {
    return {{"lr0", t.lr0},
            {"momentum", t.momentum},
            {"weight_decay", t.weight_decay},
            {"batch_size", t.batch_size},
            {"epochs", t.epochs}};
}

TrainConfig train_from(const json& j, TrainConfig t = {}) {
    t.lr0 = j.value("lr0", t.lr0);
    t.momentum = j.value("momentum", t.momentum);
    t.weight_decay = j.value("weight_decay", t.weight_decay);
    t.batch_size = j.value("batch_size", t.batch_size);
    t.epochs = j.value("epochs", t.epochs);
    return t;
}

json dataset_json(const DatasetSpec& d) {
    if (d.kind == "blobs") {
        return {{"kind", d.kind},
                {"num_classes", d.num_classes},
                {"samples", d.samples},
                {"dim", d.dim},
                {"separation", d.separation},
                {"seed", d.seed}};
    }
    return {{"kind", d.kind}, {"path", d.path}};
}

DatasetSpec dataset_from(const json& j) {
    DatasetSpec d;
    d.kind = j.value("kind", d.kind);
    d.num_classes = j.value("num_classes", d.num_classes);
    d.samples = j.value("samples", d.samples);
    d.dim = j.value("dim", d.dim);
    d.separation = j.value("separation", d.separation);
    d.seed = j.value("seed", d.seed);
    d.path = j.value("path", d.path);
    return d;
}

std::string transition_name(TransitionSource s) {
    switch (s) {
        case TransitionSource::Anchor: return "anchor";
        case TransitionSource::Gold: return "gold";
        case TransitionSource::Known: return "known";
        case TransitionSource::Identity: return "identity";
    }
    return "?";
}

TransitionSource parse_transition(const std::string& s) {
    if (s == "anchor") return TransitionSource::Anchor;
    if (s == "gold") return TransitionSource::Gold;
    if (s == "known" || s == "true") return TransitionSource::Known;
    if (s == "identity") return TransitionSource::Identity;
    throw ConfigError("unknown transition source '" + s + "' (expected anchor, gold, known or identity)");
}

}  // namespace

json options_json(Algorithm a, const AlgorithmOptions& o) {
    json j = json::object();
    switch (a) {
        case Algorithm::Gce: j["q"] = o.loss.gce.q; break;
        case Algorithm::Sce:
            j["alpha"] = o.loss.sce.alpha;
            j["beta"] = o.loss.sce.beta;
            j["clamp"] = o.loss.sce.clamp;
            break;
        case Algorithm::FCorrection:
            j["transition"] = transition_name(o.fc_transition);
            j["anchor_percentile"] = o.anchor_percentile;
            [[fallthrough]];
        case Algorithm::Glc:
            if (o.warmup_epochs) j["warmup_epochs"] = *o.warmup_epochs;
            break;
        case Algorithm::Diw:
            if (o.kmm.bandwidth) j["bandwidth"] = *o.kmm.bandwidth;
            j["bound"] = o.kmm.bound;
            j["eps"] = o.kmm.eps;
            j["max_iter"] = o.kmm.max_iter;
            j["tol"] = o.kmm.tol;
            break;
        case Algorithm::Mwnet:
            j["hidden"] = o.mwnet.hidden;
            if (o.mwnet.meta_lr) j["meta_lr"] = *o.mwnet.meta_lr;
            break;
        case Algorithm::CoLearning: {
            const auto& c = o.colearn;
            j["agreement_threshold"] = c.agreement_threshold;
            if (c.keep_fraction) j["keep_fraction"] = *c.keep_fraction;
            j["pseudo_injection_weight"] = c.pseudo_injection_weight;
            j["contrastive_weight"] = c.contrastive_weight;
            j["tau"] = c.tau;
            j["proj_dim"] = o.colearn_proj_dim;
            j["augment"] = {{"jitter_sigma", c.augment.jitter_sigma},
                            {"mask_prob", c.augment.mask_prob},
                            {"scale_lo", c.augment.scale_lo},
                            {"scale_hi", c.augment.scale_hi}};
            break;
        }
        default: break;
    }
    return j;
}

void apply_options(AlgorithmOptions& o, const json& j) {
    if (!j.is_object()) throw ConfigError("algorithm options must be a JSON object");
    o.loss.gce.q = j.value("q", o.loss.gce.q);
    o.loss.sce.alpha = j.value("alpha", o.loss.sce.alpha);
    o.loss.sce.beta = j.value("beta", o.loss.sce.beta);
    o.loss.sce.clamp = j.value("clamp", o.loss.sce.clamp);
    if (j.contains("transition")) o.fc_transition = parse_transition(j.at("transition").get<std::string>());
    o.anchor_percentile = j.value("anchor_percentile", o.anchor_percentile);
    if (j.contains("warmup_epochs")) o.warmup_epochs = j.at("warmup_epochs").get<std::size_t>();
    if (j.contains("bandwidth")) o.kmm.bandwidth = j.at("bandwidth").get<double>();
    o.kmm.bound = j.value("bound", o.kmm.bound);
    o.kmm.eps = j.value("eps", o.kmm.eps);
    o.kmm.max_iter = j.value("max_iter", o.kmm.max_iter);
    o.kmm.tol = j.value("tol", o.kmm.tol);
    o.mwnet.hidden = j.value("hidden", o.mwnet.hidden);
    if (j.contains("meta_lr")) o.mwnet.meta_lr = j.at("meta_lr").get<double>();
    auto& c = o.colearn;
    c.agreement_threshold = j.value("agreement_threshold", c.agreement_threshold);
    if (j.contains("keep_fraction")) c.keep_fraction = j.at("keep_fraction").get<double>();
    c.pseudo_injection_weight = j.value("pseudo_injection_weight", c.pseudo_injection_weight);
    c.contrastive_weight = j.value("contrastive_weight", c.contrastive_weight);
    c.tau = j.value("tau", c.tau);
    o.colearn_proj_dim = j.value("proj_dim", o.colearn_proj_dim);
    if (j.contains("augment")) {
        const auto& a = j.at("augment");
        c.augment.jitter_sigma = a.value("jitter_sigma", c.augment.jitter_sigma);
        c.augment.mask_prob = a.value("mask_prob", c.augment.mask_prob);
        c.augment.scale_lo = a.value("scale_lo", c.augment.scale_lo);
        c.augment.scale_hi = a.value("scale_hi", c.augment.scale_hi);
    }
}

json to_json(const ExperimentSpec& s) {
    json noise = {{"kind", s.noise.kind == NoiseKind::Symmetric ? "sym" : "asym"}, {"rate", s.noise.rate}};
    if (s.noise.rate == 0.0) noise = {{"kind", "clean"}, {"rate", 0.0}};
    if (s.noise.mapping) {
        json m = json::array();
        for (const auto& p : *s.noise.mapping) m.push_back({p.source, p.target});
        noise["mapping"] = m;
    }
    json knowledge = json::object();
    if (s.knowledge.noise_ratio) knowledge["noise_ratio"] = *s.knowledge.noise_ratio;
    if (s.knowledge.clean_val_fraction) knowledge["clean_val_fraction"] = *s.knowledge.clean_val_fraction;
    json j = {{"dataset", dataset_json(s.dataset)},
              {"noise", noise},
              {"algorithm", algorithm_name(s.algorithm)},
              {"options", options_json(s.algorithm, s.options)},
              {"protocol", protocol_name(s.protocol)},
              {"train", train_json(s.train)},
              {"seeds", s.seeds},
              {"knowledge", knowledge},
              {"test_fraction", s.test_fraction}};
    if (!s.encoder_path.empty()) {
        j["encoder"] = s.encoder_path;
    } else {
        j["encoder_arch"] = s.encoder_arch.layer_dims;
    }
    return j;
}

ExperimentSpec spec_from_json(const json& j) {
    try {
        ExperimentSpec s;
        if (j.contains("dataset")) s.dataset = dataset_from(j.at("dataset"));
        if (j.contains("noise")) {
            const auto& n = j.at("noise");
            if (n.is_string()) {
                s.noise = parse_noise(n.get<std::string>());
            } else {
                const std::string kind = n.value("kind", std::string("clean"));
                s.noise = kind == "clean" ? NoiseSpec{} : parse_noise(kind + ":" + std::to_string(n.value("rate", 0.0)));
                if (n.contains("mapping")) {
                    ClassMapping m;
                    for (const auto& p : n.at("mapping")) m.push_back({p.at(0).get<ClassId>(), p.at(1).get<ClassId>()});
                    s.noise.mapping = std::move(m);
                }
            }
        }
        s.algorithm = parse_algorithm(j.value("algorithm", std::string("cce")));
        if (j.contains("options")) apply_options(s.options, j.at("options"));
        s.protocol = parse_protocol(j.value("protocol", std::string("freeze")));
        if (j.contains("train")) s.train = train_from(j.at("train"));
        if (j.contains("seeds")) s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (j.contains("knowledge")) {
            const auto& k = j.at("knowledge");
            if (k.contains("noise_ratio")) s.knowledge.noise_ratio = k.at("noise_ratio").get<double>();
            if (k.contains("clean_val_fraction")) s.knowledge.clean_val_fraction = k.at("clean_val_fraction").get<double>();
        }
        s.test_fraction = j.value("test_fraction", s.test_fraction);
        s.encoder_path = j.value("encoder", std::string());
        if (j.contains("encoder_arch")) s.encoder_arch.layer_dims = j.at("encoder_arch").get<std::vector<std::size_t>>();
        return s;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad experiment spec: ") + e.what());
    }
}

std::string spec_fingerprint(const ExperimentSpec& spec) {
    const std::string canonical = to_json(spec).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

json ResultRecord::to_json() const {
    json seeds_j = json::array();
    for (const auto& s : seeds) {
        json e = {{"seed", s.seed}, {"diagnostics", s.diagnostics}};
        e["accuracy"] = s.accuracy ? json(*s.accuracy) : json(nullptr);
        if (!s.error.empty()) e["error"] = s.error;
        seeds_j.push_back(std::move(e));
    }
    return {{"fingerprint", fingerprint}, {"spec", spec},   {"seeds", seeds_j},
            {"mean", mean},               {"std", stddev},  {"wall_seconds", wall_seconds},
            {"converged", converged}};
}

ResultRecord ResultRecord::from_json(const json& j) {
    ResultRecord r;
    r.fingerprint = j.at("fingerprint").get<std::string>();
    r.spec = j.at("spec");
    for (const auto& e : j.at("seeds")) {
        SeedResult s;
        s.seed = e.at("seed").get<std::uint64_t>();
        if (!e.at("accuracy").is_null()) s.accuracy = e.at("accuracy").get<double>();
        s.error = e.value("error", std::string());
        s.diagnostics = e.value("diagnostics", json::object());
        r.seeds.push_back(std::move(s));
    }
    r.mean = j.at("mean").get<double>();
    r.stddev = j.at("std").get<double>();
    r.wall_seconds = j.value("wall_seconds", 0.0);
    r.converged = j.value("converged", true);
    return r;
}

bool ResultRecord::same_result(const ResultRecord& o) const {
    json a = to_json(), b = o.to_json();
    a.erase("wall_seconds");
    b.erase("wall_seconds");
    return a == b;
}

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

namespace {

void log_line(const RunOptions& opts, const json& j) {
    if (!opts.log) return;
    if (opts.log_mutex) {
        std::lock_guard lock(*opts.log_mutex);
        *opts.log << j.dump() << '\n';
    } else {
        *opts.log << j.dump() << '\n';
    }
}

LossSpec loss_for(Algorithm a, const AlgorithmOptions& o) {
    LossSpec s = o.loss;
    switch (a) {
        case Algorithm::Mae: s.kind = LossKind::Mae; break;
        case Algorithm::Gce: s.kind = LossKind::Gce; break;
        case Algorithm::Sce: s.kind = LossKind::Sce; break;
        default: s.kind = LossKind::Cce; break;
    }
    return s;
}

void fit_loss(Classifier& model, const LabeledSet& train, const TrainConfig& tcfg, const LossSpec& loss) {
    fit(model, train.features, tcfg, [&](const DenseMatrix& logits, std::span<const std::size_t> idx) {
        return evaluate_loss(loss, logits, gather(train.labels, idx));
    });
}

void fit_corrected(Classifier& model, const LabeledSet& train, const TrainConfig& tcfg, const TransitionMatrix& t,
                   std::size_t& clamps) {
    fit(model, train.features, tcfg, [&](const DenseMatrix& logits, std::span<const std::size_t> idx) {
        LossOutput out = forward_corrected_loss(logits, gather(train.labels, idx), t);
        clamps += out.clamp_incidents;
        return out;
    });
}

double max_entry_error(const TransitionMatrix& a, const TransitionMatrix& b) {
    return max_abs_diff(a.entries(), b.entries());
}

}  // namespace

bool needs_clean_validation(const ExperimentSpec& spec) {
    return requirements(spec.algorithm).clean_validation ||
           (spec.algorithm == Algorithm::FCorrection && spec.options.fc_transition == TransitionSource::Gold);
}

Partitions prepare_partitions(const ExperimentSpec& spec, const LabeledSet& data, std::uint64_t seed) {
    const std::size_t classes = data.num_classes;
    const TrainTestSplit tts = train_test_split(data, spec.test_fraction, derive_seed(seed, kSplitStream));
    Partitions p{LabeledSet{}, std::nullopt, tts.test,
                 build_transition(resolved_noise(spec.noise, classes), classes)};
    p.train = inject_labels(tts.train, p.transition, derive_seed(seed, kNoiseStream));
    if (needs_clean_validation(spec)) {
        CleanSplit cs = split_clean_validation(
            p.train, SplitSpec{*spec.knowledge.clean_val_fraction, derive_seed(seed, kValStream)});
        p.train = std::move(cs.train);
        p.clean_val = std::move(cs.clean_val);
    }
    return p;
}

SeedOutcome run_seed(const ExperimentSpec& spec, const LabeledSet& data, std::uint64_t seed, const RunOptions& opts) {
    spec.validate();
    const std::size_t classes = data.num_classes;
    SeedOutcome out;
    json& diag = out.diagnostics;

    Partitions parts = prepare_partitions(spec, data, seed);
    LabeledSet& train = parts.train;
    LabeledSet& test = parts.test;
    std::optional<LabeledSet>& val = parts.clean_val;
    const TransitionMatrix& t_true = parts.transition;

    // Representation.
    std::optional<Network> loaded;
    if (!spec.encoder_path.empty()) {
        ParamSet p = load_params(spec.encoder_path);
        loaded = Network{arch_of(p), std::move(p)};
    }
    Classifier model;
    std::size_t emb_dim = data.dim();
    switch (spec.protocol) {
        case Protocol::EndToEnd: {
            ArchSpec arch = loaded ? loaded->arch : spec.encoder_arch;
            model.encoder = Network::random(arch, derive_seed(seed, kEncoderInit));
            model.train_encoder = true;
            break;
        }
        case Protocol::Freeze:
            if (loaded) {
                // A frozen encoder is a fixed feature map: embed once, train the head only.
                const std::uint64_t before = fingerprint(loaded->params);
                train = export_embeddings(*loaded, train);
                test = export_embeddings(*loaded, test);
                if (val) val = export_embeddings(*loaded, *val);
                if (fingerprint(loaded->params) != before) throw ContractError("frozen encoder was modified");
            }
            break;
        case Protocol::FineTune:
            model.encoder = *loaded;
            model.train_encoder = true;
            break;
    }
    if (model.encoder) {
        if (model.encoder->arch.input_dim() != data.dim()) {
            throw DimensionError("encoder input dim " + std::to_string(model.encoder->arch.input_dim()) +
                                 " != data dim " + std::to_string(data.dim()));
        }
        emb_dim = model.encoder->arch.output_dim();
    } else {
        emb_dim = train.dim();
    }
    model.head = Network::random(ArchSpec{{emb_dim, classes}}, derive_seed(seed, kHeadInit));
    const Classifier init = model;

    TrainConfig tcfg = spec.train;
    tcfg.seed = derive_seed(seed, kTrainStream);

    switch (spec.algorithm) {
        case Algorithm::Cce:
        case Algorithm::Mae:
        case Algorithm::Gce:
        case Algorithm::Sce:
            fit_loss(model, train, tcfg, loss_for(spec.algorithm, spec.options));
            break;
        case Algorithm::FCorrection:
        case Algorithm::Glc: {
            TrainConfig warm = tcfg;
            if (spec.options.warmup_epochs) warm.epochs = *spec.options.warmup_epochs;
            std::optional<TransitionMatrix> t_hat;
            if (spec.algorithm == Algorithm::FCorrection && spec.options.fc_transition == TransitionSource::Known) {
                t_hat = t_true;
            } else if (spec.algorithm == Algorithm::FCorrection &&
                       spec.options.fc_transition == TransitionSource::Identity) {
                t_hat = TransitionMatrix::identity(classes);
            } else {
                Classifier stage1 = init;
                fit_loss(stage1, train, warm, LossSpec{});
                if (spec.algorithm == Algorithm::FCorrection && spec.options.fc_transition == TransitionSource::Anchor) {
                    const auto est = estimate_transition_anchor(softmax(classifier_logits(stage1, train.features)),
                                                                spec.options.anchor_percentile);
                    t_hat = est.matrix;
                } else {
                    const auto est = estimate_transition_gold_or_identity(
                        softmax(classifier_logits(stage1, val->features)), val->clean_labels());
                    t_hat = est.matrix;
                    diag["fallback_rows"] = est.fallback_rows.size();
                }
            }
            diag["transition_error"] = max_entry_error(*t_hat, t_true);
            std::size_t clamps = 0;
            if (spec.algorithm == Algorithm::FCorrection) {
                fit_corrected(model, train, tcfg, *t_hat, clamps);
            } else {
                // Corrected loss on the noisy rows, plain CCE on the trusted rows.
                const std::size_t n_noisy = train.size();
                LabeledSet all = train;
                all.features = vstack(train.features, val->features);
                all.labels.insert(all.labels.end(), val->labels.begin(), val->labels.end());
                all.true_labels.reset();
                const TransitionMatrix& th = *t_hat;
                fit(model, all.features, tcfg, [&](const DenseMatrix& logits, std::span<const std::size_t> idx) {
                    const auto y = gather(all.labels, idx);
                    PerSampleLoss fc = per_sample_forward_corrected(logits, y, th);
                    const PerSampleLoss ce = per_sample_loss(LossSpec{}, logits, y);
                    for (std::size_t r = 0; r < idx.size(); ++r) {
                        if (idx[r] < n_noisy) continue;
                        fc.values[r] = ce.values[r];
                        auto dst = fc.grads.row(r);
                        const auto src = ce.grads.row(r);
                        std::copy(src.begin(), src.end(), dst.begin());
                    }
                    clamps += fc.clamp_incidents;
                    return reduce_mean(fc);
                });
            }
            diag["clamp_incidents"] = clamps;
            break;
        }
        case Algorithm::Diw: {
            DiwConfig dcfg;
            dcfg.kmm = spec.options.kmm;
            ClassifierOptim optim = ClassifierOptim::for_model(model);
            std::size_t unconverged = 0, solves = 0;
            for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
                const double lr = cosine_lr(tcfg.lr0, epoch, tcfg.epochs);
                const DiwEpochReport rep = diw_epoch(model, optim, train, *val, dcfg, tcfg, epoch, lr);
                for (const auto& k : rep.kmm) {
                    ++solves;
                    if (!k.converged) ++unconverged;
                    log_line(opts, {{"event", "kmm"},
                                    {"seed", seed},
                                    {"epoch", epoch},
                                    {"batch", k.batch},
                                    {"objective", k.objective},
                                    {"iterations", k.iterations},
                                    {"converged", k.converged},
                                    {"mean_weight", k.mean_weight},
                                    {"feasible", true}});
                }
            }
            diag["kmm_solves"] = solves;
            diag["kmm_unconverged"] = unconverged;
            break;
        }
        case Algorithm::Mwnet: {
            MetaNet meta = MetaNet::create(spec.options.mwnet.hidden, derive_seed(seed, kMetaInit));
            const auto rep = train_mwnet(model, meta, train, *val, spec.options.mwnet, tcfg);
            diag["skipped_meta_steps"] = rep.skipped_meta_steps;
            break;
        }
        case Algorithm::CoLearning: {
            CoLearnConfig ccfg = spec.options.colearn;
            ccfg.noise_ratio = *spec.knowledge.noise_ratio;
            CoLearnModel cm = CoLearnModel::create(model, spec.options.colearn_proj_dim, derive_seed(seed, kProjInit));
            const auto rep = train_colearn(cm, train, ccfg, tcfg);
            model = cm.cls;
            diag["skipped_batches"] = rep.skipped_batches;
            if (!rep.epochs.empty()) diag["trusted_precision"] = rep.epochs.back().trusted_precision();
            break;
        }
    }

    out.accuracy = accuracy(classifier_logits(model, test.features), test.labels);
    return out;
}

ResultRecord run_experiment(const ExperimentSpec& spec, const RunOptions& opts) {
    spec.validate();
    const auto start = std::chrono::steady_clock::now();
    ResultRecord rec;
    rec.spec = to_json(spec);
    rec.fingerprint = spec_fingerprint(spec);
    const LabeledSet data = spec.dataset.load();
    std::vector<double> accs;
    for (std::uint64_t seed : spec.seeds) {
        SeedResult sr;
        sr.seed = seed;
        try {
            SeedOutcome o = run_seed(spec, data, seed, opts);
            sr.accuracy = o.accuracy;
            sr.diagnostics = std::move(o.diagnostics);
            accs.push_back(o.accuracy);
            if (sr.diagnostics.value("kmm_unconverged", std::size_t{0}) > 0) rec.converged = false;
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            sr.error = e.what();
            rec.converged = false;
        }
        rec.seeds.push_back(std::move(sr));
    }
    if (!accs.empty()) {
        rec.mean = std::accumulate(accs.begin(), accs.end(), 0.0) / static_cast<double>(accs.size());
        if (accs.size() > 1) {
            double ss = 0.0;
            for (double a : accs) ss += (a - rec.mean) * (a - rec.mean);
            rec.stddev = std::sqrt(ss / static_cast<double>(accs.size() - 1));
        }
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

}  // namespace noisebench
