#include <atomic>
#include <cstdlib>
#include <fstream>
#include <set>
#include <thread>

#include "noisebench/errors.hpp"
#include "noisebench/harness.hpp"

namespace noisebench {

using nlohmann::json;

std::vector<ExperimentSpec> GridConfig::cells() const {
    auto need = [](bool empty, const char* axis) {
        if (empty) throw ConfigError(std::string("grid axis '") + axis + "' is empty");
    };
    need(datasets.empty(), "datasets");
    need(noises.empty(), "noises");
    need(algorithms.empty(), "algorithms");
    need(protocols.empty(), "protocols");
    need(seeds.empty(), "seeds");

    std::vector<ExperimentSpec> out;
    for (const auto& d : datasets)
        for (const auto& n : noises)
            for (const auto& [algo, opts] : algorithms)
                for (Protocol p : protocols) {
                    ExperimentSpec s;
                    s.dataset = d;
                    s.noise = n;
                    s.algorithm = algo;
                    s.options = opts;
                    s.protocol = p;
                    s.encoder_path = p == Protocol::EndToEnd ? std::string() : encoder_path;
                    s.encoder_arch = encoder_arch;
                    s.train = train;
                    s.seeds = seeds;
                    s.test_fraction = test_fraction;
                    const auto req = requirements(algo);
                    if (req.noise_ratio && provide_noise_ratio) s.knowledge.noise_ratio = n.rate;
                    if (req.clean_validation) s.knowledge.clean_val_fraction = clean_val_fraction;
                    out.push_back(std::move(s));
                }
    return out;
}

GridConfig parse_grid_config(const json& j, const std::filesystem::path& base_dir) {
    auto resolve = [&](const std::string& p) {
        if (p.empty()) return p;
        const std::filesystem::path path(p);
        return path.is_absolute() || base_dir.empty() ? p : (base_dir / path).string();
    };
    auto axis = [&](const char* name) -> const json& {
        if (!j.contains(name) || !j.at(name).is_array()) {
            throw ConfigError(std::string("grid config is missing the '") + name + "' axis");
        }
        return j.at(name);
    };
    try {
        GridConfig g;
        for (const auto& d : axis("datasets")) {
            DatasetSpec ds;
            ds.kind = d.value("kind", ds.kind);
            ds.num_classes = d.value("num_classes", ds.num_classes);
            ds.samples = d.value("samples", ds.samples);
            ds.dim = d.value("dim", ds.dim);
            ds.separation = d.value("separation", ds.separation);
            ds.seed = d.value("seed", ds.seed);
            ds.path = resolve(d.value("path", std::string()));
            g.datasets.push_back(ds);
        }
        for (const auto& n : axis("noises")) g.noises.push_back(parse_noise(n.get<std::string>()));
        const json options = j.value("options", json::object());
        for (const auto& a : axis("algorithms")) {
            const std::string name = a.is_string() ? a.get<std::string>() : a.at("name").get<std::string>();
            const Algorithm algo = parse_algorithm(name);
            AlgorithmOptions o;
            if (options.contains(algorithm_name(algo))) apply_options(o, options.at(algorithm_name(algo)));
            if (a.is_object()) {
                json inline_opts = a;
                inline_opts.erase("name");
                apply_options(o, inline_opts);
            }
            g.algorithms.emplace_back(algo, o);
        }
        for (const auto& p : axis("protocols")) g.protocols.push_back(parse_protocol(p.get<std::string>()));
        g.seeds = axis("seeds").get<std::vector<std::uint64_t>>();
        g.encoder_path = resolve(j.value("encoder", std::string()));
        if (j.contains("encoder_arch")) g.encoder_arch.layer_dims = j.at("encoder_arch").get<std::vector<std::size_t>>();
        if (j.contains("train")) {
            const auto& t = j.at("train");
            g.train.lr0 = t.value("lr0", g.train.lr0);
            g.train.momentum = t.value("momentum", g.train.momentum);
            g.train.weight_decay = t.value("weight_decay", g.train.weight_decay);
            g.train.batch_size = t.value("batch_size", g.train.batch_size);
            g.train.epochs = t.value("epochs", g.train.epochs);
        }
        if (j.contains("knowledge")) {
            const auto& k = j.at("knowledge");
            g.provide_noise_ratio = k.value("noise_ratio", g.provide_noise_ratio);
            if (k.contains("clean_val_fraction")) {
                if (k.at("clean_val_fraction").is_null()) g.clean_val_fraction.reset();
                else g.clean_val_fraction = k.at("clean_val_fraction").get<double>();
            }
        }
        g.test_fraction = j.value("test_fraction", g.test_fraction);
        g.results_path = resolve(j.value("results", g.results_path));
        g.log_path = resolve(j.value("log", std::string()));
        return g;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad grid config: ") + e.what());
    }
}

GridConfig load_grid_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open grid config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("grid config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_grid_config(j, path.parent_path());
}

std::vector<ResultRecord> read_store(const std::filesystem::path& path) {
    std::vector<ResultRecord> out;
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    std::size_t bad = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(ResultRecord::from_json(json::parse(line)));
        } catch (const std::exception&) {
            ++bad;  // typically a line cut short by an interrupted run
        }
    }
    if (bad) warn("results store " + path.string() + ": ignored " + std::to_string(bad) + " malformed line(s)");
    return out;
}

namespace {

std::size_t default_threads() {
    if (const char* env = std::getenv("NOISEBENCH_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v >= 1) return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
        }
        warn("ignoring invalid NOISEBENCH_THREADS='" + std::string(env) + "'");
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace

GridSummary run_grid(const GridConfig& cfg, const GridOptions& opts) {
    const auto cells = cfg.cells();
    GridSummary summary;
    summary.total = cells.size();

    std::set<std::string> done;
    for (const auto& r : read_store(cfg.results_path)) done.insert(r.fingerprint);
    std::vector<const ExperimentSpec*> todo;
    for (const auto& c : cells) {
        if (done.count(spec_fingerprint(c))) {
            ++summary.skipped;
        } else {
            todo.push_back(&c);
        }
    }
    if (opts.max_cells && todo.size() > *opts.max_cells) todo.resize(*opts.max_cells);

    // A killed run can leave a partial last line; start appends on a fresh line.
    {
        std::ifstream probe(cfg.results_path, std::ios::binary | std::ios::ate);
        if (probe && probe.tellg() > 0) {
            probe.seekg(-1, std::ios::end);
            char last = 0;
            probe.get(last);
            if (last != '\n') std::ofstream(cfg.results_path, std::ios::app) << '\n';
        }
    }
    std::ofstream store(cfg.results_path, std::ios::app);
    if (!store) throw IoError("cannot open results store " + cfg.results_path);
    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path, std::ios::app);
        if (!log) throw IoError("cannot open log " + cfg.log_path);
    }
    std::mutex store_mutex, log_mutex;
    RunOptions run_opts;
    if (log.is_open()) {
        run_opts.log = &log;
        run_opts.log_mutex = &log_mutex;
    }

    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> failed{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < todo.size(); i = next++) {
            const ExperimentSpec& spec = *todo[i];
            ResultRecord rec;
            try {
                rec = run_experiment(spec, run_opts);
            } catch (const std::exception& e) {
                rec = ResultRecord{};
                rec.spec = to_json(spec);
                rec.fingerprint = spec_fingerprint(spec);
                rec.converged = false;
                for (std::uint64_t s : spec.seeds) rec.seeds.push_back({s, std::nullopt, e.what(), json::object()});
            }
            std::size_t bad = 0;
            for (const auto& s : rec.seeds) bad += s.accuracy ? 0 : 1;
            failed += bad;
            const std::string line = rec.to_json().dump() + "\n";
            std::lock_guard lock(store_mutex);
            store << line;
            store.flush();
        }
    };
    const std::size_t threads = std::min(opts.threads ? opts.threads : default_threads(), std::max<std::size_t>(1, todo.size()));
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
        worker();
    }
    summary.ran = todo.size();
    summary.failed_seeds = failed;
    return summary;
}

}  // namespace noisebench
