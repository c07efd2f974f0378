#include "noisebench/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "bytes.hpp"
#include "noisebench/errors.hpp"
#include "noisebench/rng.hpp"

namespace noisebench {

namespace {

constexpr std::uint64_t kBlobDirectionSeed = 0x5eedb10bULL;

void check_labels(const std::vector<ClassId>& labels, std::size_t classes, const char* which) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= classes) {
            throw DimensionError(std::string(which) + "[" + std::to_string(i) + "] = " +
                                 std::to_string(labels[i]) + " is out of range for " +
                                 std::to_string(classes) + " classes");
        }
    }
}

// Largest-remainder allocation of `total` across groups proportional to `sizes`.
std::vector<std::size_t> allocate(const std::vector<std::size_t>& sizes, std::size_t total) {
    const double n = static_cast<double>(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}));
    std::vector<std::size_t> out(sizes.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < sizes.size(); ++c) {
        const double exact = static_cast<double>(total) * static_cast<double>(sizes[c]) / n;
        out[c] = std::min(sizes[c], static_cast<std::size_t>(std::floor(exact)));
        assigned += out[c];
        remainders.emplace_back(exact - static_cast<double>(out[c]), c);
    }
    // Ties go to the lower class index.
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < total && k < remainders.size(); ++k) {
        const std::size_t c = remainders[k].second;
        if (out[c] < sizes[c]) {
            ++out[c];
            ++assigned;
        }
    }
    return out;
}

// Picks `counts[c]` indices of each class, seeded; returns (picked, rest), both sorted.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> pick_stratified(
    const std::vector<ClassId>& labels, std::size_t classes, const std::vector<std::size_t>& counts,
    std::uint64_t seed) {
    std::vector<std::vector<std::size_t>> by_class(classes);
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    std::vector<std::size_t> picked;
    std::vector<std::size_t> rest;
    for (std::size_t c = 0; c < classes; ++c) {
        Rng rng(derive_seed(seed, c, 0x57a7));
        rng.shuffle(by_class[c]);
        for (std::size_t k = 0; k < by_class[c].size(); ++k) {
            (k < counts[c] ? picked : rest).push_back(by_class[c][k]);
        }
    }
    std::sort(picked.begin(), picked.end());
    std::sort(rest.begin(), rest.end());
    return {std::move(picked), std::move(rest)};
}

std::vector<std::size_t> class_sizes(const std::vector<ClassId>& labels, std::size_t classes) {
    std::vector<std::size_t> sizes(classes, 0);
    for (ClassId y : labels) ++sizes[y];
    return sizes;
}

}  // namespace

void LabeledSet::validate() const {
    if (num_classes < 1) throw DimensionError("LabeledSet: num_classes must be >= 1");
    if (features.rows() != labels.size()) {
        throw DimensionError("LabeledSet: " + std::to_string(features.rows()) +
                             " feature rows but " + std::to_string(labels.size()) + " labels");
    }
    check_labels(labels, num_classes, "labels");
    if (true_labels) {
        if (true_labels->size() != labels.size()) {
            throw DimensionError("LabeledSet: true_labels length differs from labels");
        }
        check_labels(*true_labels, num_classes, "true_labels");
    }
    if (!features.all_finite()) throw DimensionError("LabeledSet: non-finite feature");
}

LabeledSet LabeledSet::subset(std::span<const std::size_t> indices) const {
    LabeledSet out;
    out.features = take_rows(features, indices);
    out.num_classes = num_classes;
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) out.labels.push_back(labels[i]);
    if (true_labels) {
        std::vector<ClassId> t;
        t.reserve(indices.size());
        for (std::size_t i : indices) t.push_back((*true_labels)[i]);
        out.true_labels = std::move(t);
    }
    return out;
}

const std::vector<ClassId>& LabeledSet::clean_labels() const {
    return true_labels ? *true_labels : labels;
}

std::vector<bool> LabeledSet::flip_mask() const {
    std::vector<bool> mask(labels.size(), false);
    if (!true_labels) return mask;
    for (std::size_t i = 0; i < labels.size(); ++i) mask[i] = labels[i] != (*true_labels)[i];
    return mask;
}

std::vector<std::uint8_t> encode_embeddings(const LabeledSet& set) {
    if (set.size() == 0) throw ContractError("save_embeddings: empty sets are not serialisable");
    set.validate();
    if (set.num_classes > 65536) {
        throw ContractError("save_embeddings: more than 65536 classes cannot be stored as u16");
    }
    detail::ByteWriter w;
    w.magic("NBEM");
    w.u32(kEmbeddingFormatVersion);
    w.u64(set.size());
    w.u32(static_cast<std::uint32_t>(set.dim()));
    w.u32(static_cast<std::uint32_t>(set.num_classes));
    w.u8(set.true_labels ? 1 : 0);
    for (double v : set.features.values()) w.f32(static_cast<float>(v));
    for (ClassId y : set.labels) w.u16(static_cast<std::uint16_t>(y));
    if (set.true_labels) {
        for (ClassId y : *set.true_labels) w.u16(static_cast<std::uint16_t>(y));
    }
    return w.take();
}

LabeledSet decode_embeddings(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader r(bytes);
    r.expect_magic("NBEM", "embedding file");
    const std::size_t version_at = r.offset();
    const std::uint32_t version = r.u32("version");
    if (version != kEmbeddingFormatVersion) {
        throw ParseError("embedding file: unsupported version " + std::to_string(version),
                         version_at);
    }
    const std::uint64_t n = r.u64("row count");
    const std::uint32_t d = r.u32("feature dim");
    const std::uint32_t classes = r.u32("class count");
    const std::size_t flag_at = r.offset();
    const std::uint8_t has_true = r.u8("true-label flag");
    if (has_true > 1) throw ParseError("embedding file: true-label flag must be 0 or 1", flag_at);
    if (classes == 0) throw ParseError("embedding file: class count is zero", flag_at - 4);
    const std::uint64_t need = n * d * 4 + n * 2 * (has_true ? 2 : 1);
    if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / 16 / d) {
        throw ParseError("embedding file: header sizes overflow", r.offset());
    }
    r.require(static_cast<std::size_t>(need), "embedding payload");

    LabeledSet set;
    set.num_classes = classes;
    set.features = DenseMatrix(n, d);
    for (double& v : set.features.values()) {
        const std::size_t at = r.offset();
        v = static_cast<double>(r.f32("feature"));
        if (!std::isfinite(v)) throw ParseError("embedding file: non-finite feature value", at);
    }
    auto read_labels = [&](const char* what) {
        std::vector<ClassId> out(n);
        for (auto& y : out) {
            const std::size_t at = r.offset();
            y = r.u16(what);
            if (y >= classes) {
                throw ParseError(std::string("embedding file: ") + what + " " + std::to_string(y) +
                                     " is out of range for " + std::to_string(classes) +
                                     " classes (label out of range)",
                                 at);
            }
        }
        return out;
    };
    set.labels = read_labels("label");
    if (has_true) set.true_labels = read_labels("true label");
    if (r.remaining() != 0) throw ParseError("embedding file: trailing bytes", r.offset());
    return set;
}

void save_embeddings(const LabeledSet& set, const std::filesystem::path& path) {
    detail::write_file(path, encode_embeddings(set));
}

LabeledSet load_embeddings(const std::filesystem::path& path) {
    return decode_embeddings(detail::read_file(path));
}

LabeledSet load_csv(const std::filesystem::path& path, std::optional<std::size_t> num_classes) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::string line;
    if (!std::getline(in, line)) throw IoError("'" + path.string() + "' is empty");

    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    const bool has_true = !header.empty() && header.back() == "true_label";
    const std::size_t label_cols = has_true ? 2 : 1;
    if (header.size() <= label_cols || header[header.size() - label_cols] != "label") {
        throw ConfigError("CSV header must be f0,...,f{d-1},label[,true_label]");
    }
    const std::size_t d = header.size() - label_cols;
    for (std::size_t j = 0; j < d; ++j) {
        if (header[j] != "f" + std::to_string(j)) {
            throw ConfigError("CSV header column " + std::to_string(j) + " should be f" +
                              std::to_string(j));
        }
    }

    std::vector<double> values;
    std::vector<ClassId> labels;
    std::vector<ClassId> truth;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != header.size()) {
            throw ConfigError("CSV line " + std::to_string(line_no) + ": expected " +
                              std::to_string(header.size()) + " fields");
        }
        try {
            for (std::size_t j = 0; j < d; ++j) values.push_back(std::stod(cells[j]));
            labels.push_back(static_cast<ClassId>(std::stoul(cells[d])));
            if (has_true) truth.push_back(static_cast<ClassId>(std::stoul(cells[d + 1])));
        } catch (const std::logic_error&) {
            throw ConfigError("CSV line " + std::to_string(line_no) + ": malformed number");
        }
    }
    LabeledSet set;
    const std::size_t n = labels.size();
    set.features = DenseMatrix(n, d, std::move(values));
    ClassId peak = 0;
    for (ClassId y : labels) peak = std::max(peak, y);
    for (ClassId y : truth) peak = std::max(peak, y);
    set.num_classes = num_classes.value_or(static_cast<std::size_t>(peak) + 1);
    set.labels = std::move(labels);
    if (has_true) set.true_labels = std::move(truth);
    set.validate();
    return set;
}

void SplitSpec::validate() const {
    if (!(clean_val_fraction > 0.0 && clean_val_fraction < 1.0)) {
        throw ConfigError("clean_val_fraction must be in (0, 1)");
    }
}

CleanSplit split_clean_validation(const LabeledSet& set, const SplitSpec& spec) {
    spec.validate();
    set.validate();
    const std::size_t n = set.size();
    const auto m = static_cast<std::size_t>(std::llround(spec.clean_val_fraction * static_cast<double>(n)));
    if (m == 0) {
        throw ConfigError("split_clean_validation: empty validation (fraction " +
                          std::to_string(spec.clean_val_fraction) + " of " + std::to_string(n) +
                          " samples rounds to 0)");
    }
    if (m >= n) throw ConfigError("split_clean_validation: validation would consume every sample");

    const auto& truth = set.clean_labels();
    const auto sizes = class_sizes(truth, set.num_classes);
    auto counts = allocate(sizes, m);
    bool stratified = true;
    for (std::size_t c = 0; c < set.num_classes; ++c) {
        if (sizes[c] > 0 && counts[c] == 0) stratified = false;
    }

    CleanSplit out;
    if (stratified) {
        auto [val, train] = pick_stratified(truth, set.num_classes, counts, spec.seed);
        out.val_indices = std::move(val);
        out.train_indices = std::move(train);
    } else {
        warn("clean validation of " + std::to_string(m) + " samples cannot cover all " +
             std::to_string(set.num_classes) + " classes; falling back to an unstratified split");
        auto order = shuffled_indices(n, derive_seed(spec.seed, 0x0757a7));
        out.val_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
        out.train_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(m), order.end());
        std::sort(out.val_indices.begin(), out.val_indices.end());
        std::sort(out.train_indices.begin(), out.train_indices.end());
    }
    out.stratified = stratified;
    out.train = set.subset(out.train_indices);
    out.clean_val = set.subset(out.val_indices);
    out.clean_val.labels = out.clean_val.clean_labels();
    out.clean_val.true_labels = out.clean_val.labels;
    return out;
}

TrainTestSplit train_test_split(const LabeledSet& set, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw ConfigError("test_fraction must be in (0, 1)");
    }
    set.validate();
    const auto m = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(set.size())));
    const auto& truth = set.clean_labels();
    auto counts = allocate(class_sizes(truth, set.num_classes), m);
    auto [test, train] = pick_stratified(truth, set.num_classes, counts, seed);
    return {set.subset(train), set.subset(test)};
}

DenseMatrix blob_directions(std::size_t num_classes, std::size_t dim) {
    DenseMatrix dirs(num_classes, dim);
    if (num_classes <= dim) {
        for (std::size_t c = 0; c < num_classes; ++c) dirs(c, c) = 1.0;
        return dirs;
    }
    Rng rng(kBlobDirectionSeed);
    for (std::size_t c = 0; c < num_classes; ++c) {
        auto r = dirs.row(c);
        double norm = 0.0;
        while (norm < 1e-12) {
            norm = 0.0;
            for (double& v : r) {
                v = rng.normal();
                norm += v * v;
            }
        }
        norm = std::sqrt(norm);
        for (double& v : r) v /= norm;
    }
    return dirs;
}

LabeledSet make_synthetic_blobs(std::size_t num_classes, std::size_t n_per_class, std::size_t dim,
                                double separation, std::uint64_t seed) {
    if (num_classes < 2) throw ConfigError("make_synthetic_blobs: need at least 2 classes");
    if (dim < 2) throw ConfigError("make_synthetic_blobs: need dim >= 2");
    const DenseMatrix dirs = blob_directions(num_classes, dim);
    LabeledSet set;
    set.num_classes = num_classes;
    set.features = DenseMatrix(num_classes * n_per_class, dim);
    set.labels.resize(num_classes * n_per_class);
    Rng rng(seed);
    for (std::size_t c = 0; c < num_classes; ++c) {
        for (std::size_t k = 0; k < n_per_class; ++k) {
            const std::size_t i = c * n_per_class + k;
            auto r = set.features.row(i);
            for (std::size_t j = 0; j < dim; ++j) r[j] = separation * dirs(c, j) + rng.normal();
            set.labels[i] = static_cast<ClassId>(c);
        }
    }
    set.true_labels = set.labels;
    return set;
}

}  // namespace noisebench
