#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "noisebench/contrastive.hpp"
#include "noisebench/errors.hpp"
#include "noisebench/harness.hpp"
#include "noisebench/paramio.hpp"
#include "support.hpp"

using namespace noisebench;
using namespace nbtest;
using nlohmann::json;

namespace {

struct Quiet {
    Quiet() { setenv("NOISEBENCH_QUIET", "1", 1); }
} quiet_all;

std::string file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

DatasetSpec tiny_blobs() {
    DatasetSpec d;
    d.num_classes = 4;
    d.samples = 400;
    d.dim = 4;
    d.seed = 1;
    return d;
}

TrainConfig tiny_train(std::size_t epochs = 2) {
    TrainConfig t;
    t.lr0 = 0.05;
    t.batch_size = 64;
    t.epochs = epochs;
    return t;
}

std::string write_encoder(const TempDir& dir, std::size_t in_dim) {
    const auto path = dir / "enc.nbps";
    save_params(init_params(ArchSpec{{in_dim, 6, 3}}, 7), path);
    return path.string();
}

struct CliResult {
    int code;
    std::string out;
};

CliResult run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "noisebench");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream capture;
    auto* old = std::cout.rdbuf(capture.rdbuf());
    const int code = cli(static_cast<int>(argv.size()), argv.data());
    std::cout.rdbuf(old);
    return {code, capture.str()};
}

std::vector<ResultRecord> sorted(std::vector<ResultRecord> v) {
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.fingerprint < b.fingerprint; });
    return v;
}

GridConfig small_grid(const TempDir& dir, const std::string& store) {
    GridConfig g;
    g.datasets = {tiny_blobs()};
    g.noises = {parse_noise("clean"), parse_noise("sym:0.4"), parse_noise("asym:0.2")};
    g.algorithms = {{Algorithm::Cce, {}}, {Algorithm::Glc, {}}};
    g.protocols = {Protocol::EndToEnd};
    g.encoder_arch = ArchSpec{{4, 6, 3}};
    g.seeds = {0, 1};
    g.train = tiny_train();
    g.results_path = (dir / store).string();
    return g;
}

}  // namespace

TEST_CASE("knowledge requirements") {
    CHECK(requirements(Algorithm::CoLearning).noise_ratio);
    CHECK_FALSE(requirements(Algorithm::CoLearning).clean_validation);
    for (Algorithm a : {Algorithm::Diw, Algorithm::Mwnet, Algorithm::Glc}) {
        CHECK(requirements(a).clean_validation);
        CHECK_FALSE(requirements(a).noise_ratio);
    }
    for (Algorithm a : {Algorithm::FCorrection, Algorithm::Gce, Algorithm::Cce, Algorithm::Mae, Algorithm::Sce}) {
        CHECK_FALSE(requirements(a).clean_validation);
        CHECK_FALSE(requirements(a).noise_ratio);
    }
    CHECK_THROWS_WITH_AS(validate_knowledge(Algorithm::CoLearning, Knowledge{}), doctest::Contains("noise ratio"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(validate_knowledge(Algorithm::Glc, Knowledge{}), doctest::Contains("clean validation"),
                         ConfigError);
    CHECK_NOTHROW(validate_knowledge(Algorithm::CoLearning, Knowledge{0.4, std::nullopt}));
    CHECK_NOTHROW(validate_knowledge(Algorithm::Diw, Knowledge{std::nullopt, 0.02}));
    CHECK_NOTHROW(validate_knowledge(Algorithm::FCorrection, Knowledge{}));
}

TEST_CASE("noise parsing") {
    CHECK(parse_noise("clean").rate == 0.0);
    CHECK(parse_noise("sym:0.4").rate == doctest::Approx(0.4));
    CHECK(parse_noise("sym:80").rate == doctest::Approx(0.8));
    CHECK(parse_noise("asym:40").kind == NoiseKind::Asymmetric);
    CHECK(noise_label(parse_noise("sym:0.8")) == "sym80");
    CHECK(noise_label(parse_noise("clean")) == "clean");
    CHECK_THROWS_AS(parse_noise("gauss:0.4"), ConfigError);
    CHECK_THROWS_AS(parse_noise("sym:150"), ConfigError);
}

TEST_CASE("spec json round trip and fingerprint") {
    ExperimentSpec s;
    s.dataset = tiny_blobs();
    s.noise = parse_noise("sym:0.6");
    s.algorithm = Algorithm::Gce;
    s.options.loss = LossSpec::parse("gce");
    s.protocol = Protocol::EndToEnd;
    s.train = tiny_train();
    s.seeds = {3, 4};
    const ExperimentSpec back = spec_from_json(to_json(s));
    CHECK(to_json(back) == to_json(s));
    CHECK(spec_fingerprint(back) == spec_fingerprint(s));
    CHECK(spec_fingerprint(s).size() == 16);
    s.seeds = {3, 5};
    CHECK(spec_fingerprint(back) != spec_fingerprint(s));
}

TEST_CASE("test labels never pass through the noise model") {
    ExperimentSpec s;
    s.dataset = tiny_blobs();
    s.noise = parse_noise("sym:0.8");
    s.algorithm = Algorithm::Glc;
    s.knowledge.clean_val_fraction = 0.05;
    const LabeledSet data = s.dataset.load();
    const Partitions p = prepare_partitions(s, data, 3);
    // Test rows keep the labels they had in the source set.
    CHECK_FALSE(p.test.true_labels.has_value());
    std::map<std::vector<double>, std::size_t> source;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto row = data.features.row(i);
        source[std::vector<double>(row.begin(), row.end())] = data.labels[i];
    }
    for (std::size_t i = 0; i < p.test.size(); ++i) {
        const auto row = p.test.features.row(i);
        CHECK(source.at(std::vector<double>(row.begin(), row.end())) == p.test.labels[i]);
    }
    REQUIRE(p.train.true_labels.has_value());
    std::size_t flipped = 0;
    for (std::size_t i = 0; i < p.train.size(); ++i) flipped += p.train.labels[i] != (*p.train.true_labels)[i];
    CHECK(flipped > p.train.size() / 2);
    REQUIRE(p.clean_val.has_value());
    CHECK(p.clean_val->labels == p.clean_val->clean_labels());
    CHECK(p.train.size() + p.clean_val->size() + p.test.size() == data.size());
}

TEST_CASE("FREEZE leaves the encoder file untouched") {
    TempDir dir("freeze");
    const std::string enc = write_encoder(dir, 4);
    const std::string before = file_bytes(enc);
    ExperimentSpec s;
    s.dataset = tiny_blobs();
    s.noise = parse_noise("sym:0.4");
    s.protocol = Protocol::Freeze;
    s.encoder_path = enc;
    s.train = tiny_train();
    const ResultRecord r = run_experiment(s);
    CHECK(r.seeds.front().accuracy.has_value());
    CHECK(file_bytes(enc) == before);

    s.protocol = Protocol::FineTune;
    run_experiment(s);
    CHECK(file_bytes(enc) == before);
}

TEST_CASE("FREEZE on oracle embeddings") {
    TempDir dir("oracle");
    LabeledSet blobs = make_synthetic_blobs(4, 1000, 20, 6.0, 5);
    for (double& v : blobs.features.values()) v = static_cast<float>(v);
    save_embeddings(blobs, dir / "oracle.nbem");
    ExperimentSpec s;
    s.dataset.kind = "embeddings";
    s.dataset.path = (dir / "oracle.nbem").string();
    s.protocol = Protocol::Freeze;
    s.train = tiny_train(30);
    s.seeds = {0, 1};
    const ResultRecord r = run_experiment(s);
    MESSAGE("oracle accuracy " << r.mean);
    CHECK(r.mean >= 0.98);

    // Without embeddings FREEZE needs an encoder file.
    ExperimentSpec bad = s;
    bad.dataset = tiny_blobs();
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("runs are deterministic") {
    ExperimentSpec s;
    s.dataset = tiny_blobs();
    s.noise = parse_noise("sym:0.4");
    s.algorithm = Algorithm::Mwnet;
    s.knowledge.clean_val_fraction = 0.05;
    s.protocol = Protocol::EndToEnd;
    s.encoder_arch = ArchSpec{{4, 6, 3}};
    s.train = tiny_train();
    s.seeds = {0, 1, 2};
    const ResultRecord a = run_experiment(s), b = run_experiment(s);
    CHECK(a.same_result(b));
    CHECK(a.fingerprint == b.fingerprint);
    json ja = a.to_json(), jb = b.to_json();
    ja.erase("wall_seconds");
    jb.erase("wall_seconds");
    CHECK(ja == jb);
    CHECK(ResultRecord::from_json(ja).same_result(a));
    CHECK(a.stddev >= 0.0);
}

TEST_CASE("grid: 6 algorithms x 9 noises x 3 protocols") {
    TempDir dir("grid162");
    GridConfig g;
    g.datasets = {tiny_blobs()};
    for (const char* n : {"clean", "sym:20", "sym:40", "sym:60", "sym:80", "sym:90", "sym:95", "asym:20", "asym:40"})
        g.noises.push_back(parse_noise(n));
    AlgorithmOptions gce;
    gce.loss = LossSpec::parse("gce");
    g.algorithms = {{Algorithm::Gce, gce}, {Algorithm::FCorrection, {}}, {Algorithm::Glc, {}},
                    {Algorithm::Diw, {}}, {Algorithm::Mwnet, {}}, {Algorithm::CoLearning, {}}};
    g.protocols = {Protocol::EndToEnd, Protocol::Freeze, Protocol::FineTune};
    g.encoder_path = write_encoder(dir, 4);
    g.encoder_arch = ArchSpec{{4, 6, 3}};
    g.seeds = {0};
    g.train = tiny_train(1);
    g.clean_val_fraction = 0.05;
    g.results_path = (dir / "results.jsonl").string();
    CHECK(g.cells().size() == 162);
    const GridSummary sum = run_grid(g);
    CHECK(sum.total == 162);
    CHECK(sum.ran == 162);
    const auto store = read_store(g.results_path);
    CHECK(store.size() == 162);
    std::set<std::string> fps;
    for (const auto& r : store) fps.insert(r.fingerprint);
    CHECK(fps.size() == 162);

    const Report rep = emit_report(store, ReportLayout::TenClass);
    // header + 6 algorithms x 3 protocol blocks
    CHECK(std::count(rep.csv.begin(), rep.csv.end(), '\n') == 1 + 18);
}

TEST_CASE("grid: empty axis is a config error naming the axis") {
    TempDir dir("empty");
    for (const char* axis : {"datasets", "noises", "algorithms", "protocols", "seeds"}) {
        GridConfig g = small_grid(dir, "r.jsonl");
        if (std::string(axis) == "datasets") g.datasets.clear();
        if (std::string(axis) == "noises") g.noises.clear();
        if (std::string(axis) == "algorithms") g.algorithms.clear();
        if (std::string(axis) == "protocols") g.protocols.clear();
        if (std::string(axis) == "seeds") g.seeds.clear();
        CHECK_THROWS_WITH_AS(g.cells(), doctest::Contains(axis), ConfigError);
    }
    const json j = json::parse(R"({"datasets": [{"kind": "blobs"}], "noises": [], "algorithms": ["cce"],
                                   "protocols": ["end_to_end"], "seeds": [0]})");
    CHECK_THROWS_WITH_AS(parse_grid_config(j).cells(), doctest::Contains("noises"), ConfigError);
}

TEST_CASE("grid config parsing") {
    const json j = json::parse(R"({
        "datasets": [{"kind": "blobs", "num_classes": 4, "samples": 400, "dim": 4}],
        "noises": ["clean", "sym:40"],
        "algorithms": ["cce", {"name": "gce", "q": 0.5}, "colearning"],
        "protocols": ["end_to_end"],
        "seeds": [0, 1],
        "encoder_arch": [4, 6, 3],
        "train": {"epochs": 2, "lr0": 0.05},
        "knowledge": {"noise_ratio": true, "clean_val_fraction": 0.05},
        "results": "out/r.jsonl"
    })");
    const GridConfig g = parse_grid_config(j, "/base");
    CHECK(g.results_path == "/base/out/r.jsonl");
    const auto cells = g.cells();
    CHECK(cells.size() == 6);
    const auto gce_cell = std::find_if(cells.begin(), cells.end(), [](const auto& c) { return c.algorithm == Algorithm::Gce; });
    REQUIRE(gce_cell != cells.end());
    CHECK(gce_cell->options.loss.gce.q == 0.5);
    for (const auto& c : cells) {
        CHECK(c.train.epochs == 2);
        CHECK(c.seeds == std::vector<std::uint64_t>{0, 1});
        if (c.algorithm == Algorithm::CoLearning) CHECK(c.knowledge.noise_ratio == doctest::Approx(c.noise.rate));
    }
}

TEST_CASE("grid: resume after k cells runs exactly the rest") {
    TempDir dir("resume");
    const GridConfig g = small_grid(dir, "r.jsonl");
    const std::size_t total = g.cells().size();
    REQUIRE(total == 6);
    const std::size_t k = 2;
    GridOptions first;
    first.max_cells = k;
    first.threads = 1;
    CHECK(run_grid(g, first).ran == k);
    CHECK(read_store(g.results_path).size() == k);
    const GridSummary rest = run_grid(g);
    CHECK(rest.ran == total - k);
    CHECK(rest.skipped == k);
    CHECK(read_store(g.results_path).size() == total);
    CHECK(run_grid(g).ran == 0);
}

TEST_CASE("grid: a torn last line is ignored and the run continues") {
    TempDir dir("torn");
    const GridConfig g = small_grid(dir, "r.jsonl");
    GridOptions first;
    first.max_cells = 3;
    run_grid(g, first);
    {
        std::ofstream out(g.results_path, std::ios::app);
        out << R"({"fingerprint": "00ab", "spec": {)";
    }
    CHECK(read_store(g.results_path).size() == 3);
    const GridSummary rest = run_grid(g);
    CHECK(rest.ran == 3);
    CHECK(read_store(g.results_path).size() == 6);
}

TEST_CASE("grid: parallel and sequential runs give the same store") {
    TempDir dir("parallel");
    GridConfig seq = small_grid(dir, "seq.jsonl");
    GridConfig par = small_grid(dir, "par.jsonl");
    GridOptions one, four;
    one.threads = 1;
    four.threads = 4;
    run_grid(seq, one);
    run_grid(par, four);
    const auto a = sorted(read_store(seq.results_path)), b = sorted(read_store(par.results_path));
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].same_result(b[i]));
}

TEST_CASE("report formatting") {
    ExperimentSpec s;
    s.dataset = tiny_blobs();
    s.noise = parse_noise("sym:80");
    s.algorithm = Algorithm::Gce;
    s.options.loss = LossSpec::parse("gce");
    s.protocol = Protocol::Freeze;
    ResultRecord r;
    r.spec = to_json(s);
    r.fingerprint = spec_fingerprint(s);
    r.seeds = {SeedResult{0, 0.904, "", json::object()}};
    r.mean = 0.904;
    const Report rep = emit_report({r}, ReportLayout::TenClass);
    CHECK(rep.markdown.find("90.4") != std::string::npos);
    CHECK(rep.markdown.find("(B) Freeze") != std::string::npos);

    std::istringstream lines(rep.csv);
    std::string header, row;
    std::getline(lines, header);
    std::getline(lines, row);
    CHECK(header == "algorithm,protocol,clean,sym20,sym40,sym60,sym80,sym90,sym95,asym20,asym40");
    CHECK(std::count(header.begin(), header.end(), ',') + 1 == 11);
    CHECK(row == "gce,freeze,,,,,90.4,,,,");
    CHECK(report_columns().size() == 9);
    CHECK(emit_report({r}, ReportLayout::HundredClass).markdown.find("100-class") != std::string::npos);
    CHECK_THROWS_AS(parse_layout("table9"), ConfigError);
}

TEST_CASE("cli") {
    TempDir dir("cli");
    SUBCASE("train prints one record") {
        const auto r = run_cli({"train", "--algo", "gce", "--protocol", "end_to_end", "--classes", "4", "--samples", "400",
                                "--dim", "4", "--noise", "sym:0.4", "--seed", "1", "--epochs", "2"});
        CHECK(r.code == 0);
        const json j = json::parse(r.out);
        CHECK(j.at("spec").at("algorithm") == "gce");
        CHECK(j.at("seeds").size() == 1);
    }
    SUBCASE("train on an encoder and an embeddings file") {
        LabeledSet blobs = make_synthetic_blobs(4, 100, 4, 6.0, 1);
        for (double& v : blobs.features.values()) v = static_cast<float>(v);
        save_embeddings(blobs, dir / "d.nbem");
        const std::string enc = write_encoder(dir, 4);
        const auto r = run_cli({"train", "--algo", "gce", "--protocol", "freeze", "--encoder", enc, "--data",
                                (dir / "d.nbem").string(), "--noise", "sym:0.4", "--seed", "1", "--epochs", "2"});
        CHECK(r.code == 0);
    }
    SUBCASE("colearning without a noise ratio is refused") {
        const auto r = run_cli({"train", "--algo", "colearning", "--samples", "400", "--dim", "4", "--noise", "sym:0.4"});
        CHECK(r.code == 1);
    }
    SUBCASE("unknown flag") {
        CHECK(run_cli({"train", "--bogus"}).code == 1);
        CHECK(run_cli({"nosuchcommand"}).code == 1);
    }
    SUBCASE("inject writes noisy labels and the transition") {
        LabeledSet blobs = make_synthetic_blobs(4, 100, 4, 6.0, 1);
        for (double& v : blobs.features.values()) v = static_cast<float>(v);
        save_embeddings(blobs, dir / "clean.nbem");
        const auto r = run_cli({"inject", "--data", (dir / "clean.nbem").string(), "--noise", "sym:0.4", "--out",
                                (dir / "noisy.nbem").string(), "--transition-out", (dir / "t.csv").string()});
        CHECK(r.code == 0);
        const LabeledSet noisy = load_embeddings(dir / "noisy.nbem");
        REQUIRE(noisy.true_labels.has_value());
        CHECK(*noisy.true_labels == blobs.labels);
        CHECK(noisy.labels != blobs.labels);
        CHECK(std::filesystem::exists(dir / "t.csv"));
    }
    SUBCASE("pretrain writes an encoder") {
        const auto r = run_cli({"pretrain", "--classes", "4", "--samples", "200", "--dim", "20", "--epochs", "1",
                                "--out", (dir / "e.nbps").string(), "--embeddings-out", (dir / "h.nbem").string()});
        CHECK(r.code == 0);
        CHECK(arch_of(load_params(dir / "e.nbps")) == ArchSpec{{20, 64, 32}});
        CHECK(load_embeddings(dir / "h.nbem").dim() == 32);
    }
    SUBCASE("grid then report") {
        const json cfg = {{"datasets", {{{"kind", "blobs"}, {"samples", 400}, {"dim", 4}}}},
                          {"noises", {"clean", "sym:40"}},
                          {"algorithms", {"cce", "gce"}},
                          {"protocols", {"end_to_end"}},
                          {"seeds", {0}},
                          {"encoder_arch", {4, 6, 3}},
                          {"train", {{"epochs", 1}}},
                          {"results", "results.jsonl"}};
        std::ofstream(dir / "grid.json") << cfg.dump(2);
        CHECK(run_cli({"grid", "--config", (dir / "grid.json").string()}).code == 0);
        CHECK(read_store(dir / "results.jsonl").size() == 4);
        const auto r = run_cli({"report", "--config", (dir / "grid.json").string(), "--out", (dir / "table").string()});
        CHECK(r.code == 0);
        const std::string csv = file_bytes(dir / "table.csv");
        CHECK(csv.rfind("algorithm,protocol,clean", 0) == 0);
        CHECK(std::filesystem::exists(dir / "table.md"));
    }
    SUBCASE("check") { CHECK(run_cli({"check"}).code == 0); }
}
