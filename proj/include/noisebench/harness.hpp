#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "noisebench/colearn.hpp"
#include "noisebench/correction.hpp"
#include "noisebench/losses.hpp"
#include "noisebench/noise.hpp"
#include "noisebench/optim.hpp"
#include "noisebench/reweight.hpp"

namespace noisebench {

enum class Protocol { EndToEnd, Freeze, FineTune };

// "end_to_end" | "freeze" | "fine_tune" (also accepts "e2e", "fine-tune", ...)
Protocol parse_protocol(std::string_view name);
std::string protocol_name(Protocol p);

enum class Algorithm { Cce, Mae, Gce, Sce, FCorrection, Glc, Diw, Mwnet, CoLearning };

Algorithm parse_algorithm(std::string_view name);
std::string algorithm_name(Algorithm a);

struct KnowledgeRequirements {
    bool noise_ratio = false;
    bool clean_validation = false;
};

KnowledgeRequirements requirements(Algorithm a);

struct Knowledge {
    std::optional<double> noise_ratio;
    std::optional<double> clean_val_fraction;
};

// Throws ConfigError naming the missing piece of knowledge.
void validate_knowledge(Algorithm a, const Knowledge& k);

// Either synthetic blobs generated from `seed`, or an embeddings/CSV file.
struct DatasetSpec {
    std::string kind = "blobs";  // "blobs" | "embeddings" | "csv"
    std::size_t num_classes = 4;
    std::size_t samples = 4000;  // blobs: total, split evenly over classes
    std::size_t dim = 20;
    double separation = 6.0;
    std::uint64_t seed = 0;
    std::string path;

    std::string label() const;
    LabeledSet load() const;
};

// "clean" | "sym:<r>" | "asym:<r>" (r as a fraction, or a percentage when > 1).
NoiseSpec parse_noise(std::string_view text);
std::string noise_label(const NoiseSpec& noise);

enum class TransitionSource { Anchor, Gold, Known, Identity };

struct AlgorithmOptions {
    LossSpec loss;  // cce/mae/gce/sce
    TransitionSource fc_transition = TransitionSource::Anchor;
    double anchor_percentile = kDefaultAnchorPercentile;
    std::optional<std::size_t> warmup_epochs;  // f-correction / GLC first stage; defaults to epochs
    KmmConfig kmm;
    MwnetConfig mwnet;
    CoLearnConfig colearn;  // noise_ratio comes from the knowledge block
    std::size_t colearn_proj_dim = 16;
};

// Keys relevant to the algorithm only, so unrelated defaults do not enter the
// fingerprint.
nlohmann::json options_json(Algorithm a, const AlgorithmOptions& options);
void apply_options(AlgorithmOptions& options, const nlohmann::json& j);

struct ExperimentSpec {
    DatasetSpec dataset;
    NoiseSpec noise;
    Algorithm algorithm = Algorithm::Cce;
    AlgorithmOptions options;
    Protocol protocol = Protocol::Freeze;
    std::string encoder_path;  // NBPS file; required by FREEZE / FINE_TUNE unless dataset is embeddings
    ArchSpec encoder_arch{{20, 64, 32}};  // END_TO_END without an encoder file
    TrainConfig train;
    std::vector<std::uint64_t> seeds{0};
    Knowledge knowledge;
    double test_fraction = 0.2;

    void validate() const;
};

nlohmann::json to_json(const ExperimentSpec& spec);
ExperimentSpec spec_from_json(const nlohmann::json& j);

struct SeedResult {
    std::uint64_t seed = 0;
    std::optional<double> accuracy;
    std::string error;  // set when the seed aborted
    nlohmann::json diagnostics = nlohmann::json::object();
};

struct ResultRecord {
    std::string fingerprint;  // 16 hex digits, FNV-1a of the canonical spec JSON
    nlohmann::json spec;
    std::vector<SeedResult> seeds;
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation over successful seeds
    double wall_seconds = 0.0;
    bool converged = true;

    nlohmann::json to_json() const;
    static ResultRecord from_json(const nlohmann::json& j);
    // Equality of everything except wall time.
    bool same_result(const ResultRecord& other) const;
};

std::string spec_fingerprint(const ExperimentSpec& spec);

struct RunOptions {
    std::ostream* log = nullptr;  // JSON-lines diagnostics (KMM traces, ...)
    std::mutex* log_mutex = nullptr;
};

// Data seen by one seed: noisy train, optional clean validation carved from it,
// and the clean test split. Only the train partition goes through inject.
struct Partitions {
    LabeledSet train;
    std::optional<LabeledSet> clean_val;
    LabeledSet test;
    TransitionMatrix transition = TransitionMatrix::identity(2);
};

bool needs_clean_validation(const ExperimentSpec& spec);
Partitions prepare_partitions(const ExperimentSpec& spec, const LabeledSet& data, std::uint64_t seed);

struct SeedOutcome {
    double accuracy = 0.0;
    nlohmann::json diagnostics = nlohmann::json::object();
};

// One seed of an experiment. Throws on failure.
SeedOutcome run_seed(const ExperimentSpec& spec, const LabeledSet& data, std::uint64_t seed,
                     const RunOptions& opts = {});

ResultRecord run_experiment(const ExperimentSpec& spec, const RunOptions& opts = {});

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

struct GridConfig {
    std::vector<DatasetSpec> datasets;
    std::vector<NoiseSpec> noises;
    std::vector<std::pair<Algorithm, AlgorithmOptions>> algorithms;
    std::vector<Protocol> protocols;
    std::vector<std::uint64_t> seeds;
    std::string encoder_path;
    ArchSpec encoder_arch{{20, 64, 32}};
    TrainConfig train;
    bool provide_noise_ratio = true;
    std::optional<double> clean_val_fraction = 0.02;
    double test_fraction = 0.2;
    std::string results_path = "results.jsonl";
    std::string log_path;

    std::vector<ExperimentSpec> cells() const;
};

GridConfig load_grid_config(const std::filesystem::path& path);
GridConfig parse_grid_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

std::vector<ResultRecord> read_store(const std::filesystem::path& path);

struct GridOptions {
    std::size_t threads = 0;                // 0: NOISEBENCH_THREADS or hardware concurrency
    std::optional<std::size_t> max_cells;   // stop after this many new cells (for resumability tests)
};

struct GridSummary {
    std::size_t total = 0;
    std::size_t skipped = 0;
    std::size_t ran = 0;
    std::size_t failed_seeds = 0;
};

GridSummary run_grid(const GridConfig& cfg, const GridOptions& opts = {});

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

enum class ReportLayout { TenClass, HundredClass };

ReportLayout parse_layout(std::string_view name);

struct Report {
    std::string markdown;
    std::string csv;
};

// Noise columns of the table layout.
const std::vector<std::string>& report_columns();

// Rows = algorithm x protocol block, cells = 100 * mean accuracy with one decimal.
Report emit_report(const std::vector<ResultRecord>& records, ReportLayout layout);

// ---------------------------------------------------------------------------

int cli(int argc, char** argv);

}  // namespace noisebench
