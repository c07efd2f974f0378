#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "noisebench/checks.hpp"
#include "noisebench/contrastive.hpp"
#include "noisebench/errors.hpp"
#include "noisebench/harness.hpp"
#include "noisebench/paramio.hpp"

namespace noisebench {

using nlohmann::json;

namespace {

struct BlobArgs {
    std::size_t classes = 4;
    std::size_t samples = 4000;
    std::size_t dim = 20;
    double sep = 6.0;
    std::uint64_t seed = 0;
};

void add_blob_flags(CLI::App* cmd, BlobArgs& b) {
    cmd->add_option("--classes", b.classes, "synthetic blobs: number of classes")->capture_default_str();
    cmd->add_option("--samples", b.samples, "synthetic blobs: total samples")->capture_default_str();
    cmd->add_option("--dim", b.dim, "synthetic blobs: feature dimension")->capture_default_str();
    cmd->add_option("--sep", b.sep, "synthetic blobs: class separation")->capture_default_str();
    cmd->add_option("--data-seed", b.seed, "synthetic blobs: generator seed")->capture_default_str();
}

DatasetSpec dataset_from_args(const std::string& data, const BlobArgs& b) {
    DatasetSpec d;
    if (data.empty()) {
        d.kind = "blobs";
        d.num_classes = b.classes;
        d.samples = b.samples;
        d.dim = b.dim;
        d.separation = b.sep;
        d.seed = b.seed;
    } else {
        d.kind = std::filesystem::path(data).extension() == ".csv" ? "csv" : "embeddings";
        d.path = data;
    }
    return d;
}

std::vector<std::size_t> parse_dims(const std::string& s) {
    std::vector<std::size_t> dims;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            dims.push_back(std::stoul(tok));
        } catch (const std::exception&) {
            throw ConfigError("bad layer list '" + s + "'");
        }
    }
    return dims;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << text;
}

}  // namespace

int cli(int argc, char** argv) {
    CLI::App app{"noisebench: label-noise robustness toolkit and benchmark harness", "noisebench"};
    app.require_subcommand(1);

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "contrastive pretraining of a toy encoder");
    std::string pre_data, pre_out, pre_emb, pre_arch = "20,64,32";
    BlobArgs pre_blobs;
    TrainConfig pre_train;
    pre_train.epochs = 30;
    std::size_t proj_dim = 16;
    double tau = 0.5;
    AugmentSpec aug;
    pre->add_option("--data", pre_data, "embeddings (.nbem) or .csv input; synthetic blobs when omitted");
    add_blob_flags(pre, pre_blobs);
    pre->add_option("--out", pre_out, "encoder parameter file (.nbps)")->required();
    pre->add_option("--embeddings-out", pre_emb, "also export h = f(x) of the input set");
    pre->add_option("--encoder-arch", pre_arch, "encoder layer dims")->capture_default_str();
    pre->add_option("--proj-dim", proj_dim)->capture_default_str();
    pre->add_option("--tau", tau)->capture_default_str();
    pre->add_option("--epochs", pre_train.epochs)->capture_default_str();
    pre->add_option("--lr", pre_train.lr0)->capture_default_str();
    pre->add_option("--batch-size", pre_train.batch_size)->capture_default_str();
    pre->add_option("--seed", pre_train.seed)->capture_default_str();
    pre->add_option("--jitter", aug.jitter_sigma)->capture_default_str();
    pre->add_option("--mask", aug.mask_prob)->capture_default_str();
    pre->add_option("--scale-lo", aug.scale_lo)->capture_default_str();
    pre->add_option("--scale-hi", aug.scale_hi)->capture_default_str();

    // inject
    auto* inj = app.add_subcommand("inject", "corrupt the labels of a data file");
    std::string inj_data, inj_out, inj_noise = "sym:0.4", inj_t;
    std::uint64_t inj_seed = 0;
    inj->add_option("--data", inj_data, "input embeddings (.nbem) or .csv")->required();
    inj->add_option("--noise", inj_noise, "clean | sym:<r> | asym:<r>")->capture_default_str();
    inj->add_option("--seed", inj_seed)->capture_default_str();
    inj->add_option("--out", inj_out, "output embeddings file")->required();
    inj->add_option("--transition-out", inj_t, "write the transition matrix as CSV");

    // train
    auto* trn = app.add_subcommand("train", "run one experiment spec and print its record as JSON");
    std::string trn_config, trn_algo = "cce", trn_protocol, trn_encoder, trn_data, trn_noise = "clean", trn_log;
    std::vector<std::uint64_t> trn_seeds;
    std::uint64_t trn_seed = 0;
    std::optional<double> noise_ratio, clean_val;
    BlobArgs trn_blobs;
    TrainConfig trn_train;
    trn_train.epochs = 30;
    trn->add_option("--config", trn_config, "experiment spec JSON (flags below are ignored)");
    trn->add_option("--algo", trn_algo, "cce|mae|gce|sce|fcorrection|glc|diw|mwnet|colearning")->capture_default_str();
    trn->add_option("--protocol", trn_protocol, "end_to_end | freeze | fine_tune");
    trn->add_option("--encoder", trn_encoder, "encoder parameter file (.nbps)");
    trn->add_option("--data", trn_data, "embeddings (.nbem) or .csv; synthetic blobs when omitted");
    add_blob_flags(trn, trn_blobs);
    trn->add_option("--noise", trn_noise, "clean | sym:<r> | asym:<r>")->capture_default_str();
    trn->add_option("--seed", trn_seed)->capture_default_str();
    trn->add_option("--seeds", trn_seeds, "several seeds (overrides --seed)");
    trn->add_option("--noise-ratio", noise_ratio, "known noise ratio");
    trn->add_option("--clean-val-fraction", clean_val, "size of the clean validation split");
    trn->add_option("--epochs", trn_train.epochs)->capture_default_str();
    trn->add_option("--lr", trn_train.lr0)->capture_default_str();
    trn->add_option("--batch-size", trn_train.batch_size)->capture_default_str();
    trn->add_option("--log", trn_log, "append JSON-lines diagnostics here");
    std::string trn_transition;
    trn->add_option("--transition", trn_transition, "fcorrection transition source")
        ->check(CLI::IsMember({"anchor", "gold", "known", "identity"}));

    // grid
    auto* grd = app.add_subcommand("grid", "run a configured experiment grid");
    std::string grd_config, grd_out;
    std::size_t grd_threads = 0;
    std::optional<std::size_t> grd_max;
    grd->add_option("--config", grd_config, "grid config JSON")->required();
    grd->add_option("--out", grd_out, "results store (overrides the config)");
    grd->add_option("--threads", grd_threads, "cell parallelism (default NOISEBENCH_THREADS or all cores)");
    grd->add_option("--max-cells", grd_max, "stop after this many new cells");

    // report
    auto* rep = app.add_subcommand("report", "render a results store as markdown and CSV");
    std::string rep_results, rep_config, rep_layout = "10class", rep_out;
    rep->add_option("--results", rep_results, "results store (.jsonl)");
    rep->add_option("--config", rep_config, "grid config; its results store is used");
    rep->add_option("--layout", rep_layout, "10class | 100class")->capture_default_str();
    rep->add_option("--out", rep_out, "write <out>.md and <out>.csv instead of printing");

    // check
    auto* chk = app.add_subcommand("check", "run the built-in invariant checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*pre) {
            LabeledSet set = dataset_from_args(pre_data, pre_blobs).load();
            SimclrConfig cfg;
            cfg.encoder.layer_dims = parse_dims(pre_arch);
            cfg.projection.layer_dims = {cfg.encoder.output_dim(), proj_dim};
            cfg.tau = tau;
            const SimclrResult r = pretrain_simclr(set.features, cfg, aug, pre_train);
            save_params(r.encoder.params, pre_out);
            if (!pre_emb.empty()) save_embeddings(export_embeddings(r.encoder, set), pre_emb);
            std::cout << json{{"encoder", pre_out},
                              {"probe_loss_initial", r.probe_loss_initial},
                              {"probe_loss_final", r.probe_loss_final}}
                             .dump()
                      << '\n';
        } else if (*inj) {
            DatasetSpec d = dataset_from_args(inj_data, {});
            LabeledSet set = d.load();
            NoiseSpec n = parse_noise(inj_noise);
            if (n.kind == NoiseKind::Asymmetric) {
                n.mapping = set.num_classes == 10    ? cifar10_asym_mapping()
                            : set.num_classes == 100 ? cifar100_asym_mapping()
                                                     : cyclic_mapping(set.num_classes);
            }
            const TransitionMatrix t = build_transition(n, set.num_classes);
            const LabeledSet noisy = inject_labels(set, t, inj_seed);
            save_embeddings(noisy, inj_out);
            if (!inj_t.empty()) write_text(inj_t, transition_to_csv(t.entries()));
            std::size_t flips = 0;
            for (bool f : noisy.flip_mask()) flips += f;
            std::cout << json{{"out", inj_out},
                              {"samples", noisy.size()},
                              {"flip_rate", noisy.size() ? static_cast<double>(flips) / static_cast<double>(noisy.size()) : 0.0}}
                             .dump()
                      << '\n';
        } else if (*trn) {
            ExperimentSpec spec;
            if (!trn_config.empty()) {
                std::ifstream in(trn_config);
                if (!in) throw IoError("cannot open " + trn_config);
                spec = spec_from_json(json::parse(in));
            } else {
                spec.dataset = dataset_from_args(trn_data, trn_blobs);
                spec.noise = parse_noise(trn_noise);
                spec.algorithm = parse_algorithm(trn_algo);
                spec.protocol = trn_protocol.empty()
                                    ? (trn_encoder.empty() && spec.dataset.kind != "embeddings" ? Protocol::EndToEnd
                                                                                                 : Protocol::Freeze)
                                    : parse_protocol(trn_protocol);
                spec.encoder_path = trn_encoder;
                spec.train = trn_train;
                spec.seeds = trn_seeds.empty() ? std::vector<std::uint64_t>{trn_seed} : trn_seeds;
                spec.knowledge.noise_ratio = noise_ratio;
                spec.knowledge.clean_val_fraction = clean_val;
                if (!trn_transition.empty()) apply_options(spec.options, json{{"transition", trn_transition}});
            }
            spec.validate();
            std::ofstream log;
            RunOptions opts;
            if (!trn_log.empty()) {
                log.open(trn_log, std::ios::app);
                opts.log = &log;
            }
            std::cout << run_experiment(spec, opts).to_json().dump() << '\n';
        } else if (*grd) {
            GridConfig g = load_grid_config(grd_config);
            if (!grd_out.empty()) g.results_path = grd_out;
            GridOptions o;
            o.threads = grd_threads;
            o.max_cells = grd_max;
            const GridSummary s = run_grid(g, o);
            std::cout << json{{"results", g.results_path},
                              {"cells", s.total},
                              {"skipped", s.skipped},
                              {"ran", s.ran},
                              {"failed_seeds", s.failed_seeds}}
                             .dump()
                      << '\n';
        } else if (*rep) {
            std::string path = rep_results;
            if (path.empty() && !rep_config.empty()) path = load_grid_config(rep_config).results_path;
            if (path.empty()) throw ConfigError("report needs --results or --config");
            const auto records = read_store(path);
            if (records.empty()) throw ConfigError("results store " + path + " is empty");
            const Report r = emit_report(records, parse_layout(rep_layout));
            if (rep_out.empty()) {
                std::cout << r.markdown;
            } else {
                write_text(rep_out + ".md", r.markdown);
                write_text(rep_out + ".csv", r.csv);
            }
        } else if (*chk) {
            bool ok = true;
            for (const auto& c : run_invariant_checks()) {
                std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << " (" << c.detail << ")\n";
                ok = ok && c.passed;
            }
            return ok ? 0 : 2;
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

}  // namespace noisebench
