#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "noisebench/errors.hpp"
#include "noisebench/harness.hpp"

namespace noisebench {

ReportLayout parse_layout(std::string_view name) {
    if (name == "10class") return ReportLayout::TenClass;
    if (name == "100class") return ReportLayout::HundredClass;
    throw ConfigError("unknown report layout '" + std::string(name) + "' (expected 10class or 100class)");
}

const std::vector<std::string>& report_columns() {
    static const std::vector<std::string> cols{"clean", "sym20", "sym40", "sym60", "sym80",
                                               "sym90", "sym95", "asym20", "asym40"};
    return cols;
}

namespace {

const std::vector<std::string> kAlgorithmOrder{"cce", "mae", "gce", "sce", "fcorrection",
                                               "glc", "diw", "mwnet", "colearning"};
const std::vector<std::pair<std::string, std::string>> kBlocks{
    {"end_to_end", "(A) End-to-End"}, {"freeze", "(B) Freeze"}, {"fine_tune", "(C) Fine Tuning"}};

std::string display_name(const std::string& algo) {
    static const std::map<std::string, std::string> names{
        {"cce", "CCE"}, {"mae", "MAE"}, {"gce", "GCE"},   {"sce", "SCE"},       {"fcorrection", "F-Correction"},
        {"glc", "GLC"}, {"diw", "DIW"}, {"mwnet", "MWNet"}, {"colearning", "CoLearning"}};
    const auto it = names.find(algo);
    return it == names.end() ? algo : it->second;
}

std::string cell_text(double mean) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", 100.0 * mean);
    return buf;
}

std::string column_of(const nlohmann::json& noise) {
    const std::string kind = noise.value("kind", std::string("clean"));
    const double rate = noise.value("rate", 0.0);
    if (kind == "clean" || rate == 0.0) return "clean";
    return kind + std::to_string(std::lround(rate * 100.0));
}

std::string dataset_of(const nlohmann::json& d) {
    DatasetSpec ds;
    ds.kind = d.value("kind", ds.kind);
    ds.num_classes = d.value("num_classes", ds.num_classes);
    ds.samples = d.value("samples", ds.samples);
    ds.dim = d.value("dim", ds.dim);
    ds.separation = d.value("separation", ds.separation);
    ds.seed = d.value("seed", ds.seed);
    ds.path = d.value("path", ds.path);
    return ds.label();
}

}  // namespace

Report emit_report(const std::vector<ResultRecord>& records, ReportLayout layout) {
    // dataset -> protocol -> algorithm -> column -> text. Later records of the same
    // cell replace earlier ones.
    std::map<std::string, std::map<std::string, std::map<std::string, std::map<std::string, std::string>>>> cells;
    for (const auto& r : records) {
        const bool any = std::any_of(r.seeds.begin(), r.seeds.end(), [](const SeedResult& s) { return s.accuracy.has_value(); });
        if (!any) continue;
        const std::string ds = dataset_of(r.spec.at("dataset"));
        const std::string proto = r.spec.at("protocol").get<std::string>();
        const std::string algo = r.spec.at("algorithm").get<std::string>();
        cells[ds][proto][algo][column_of(r.spec.at("noise"))] = cell_text(r.mean);
    }

    const auto& cols = report_columns();
    std::ostringstream md, csv;
    md << "## Test accuracy (%), " << (layout == ReportLayout::TenClass ? "10-class" : "100-class")
       << " table layout\n";
    csv << "algorithm,protocol";
    for (const auto& c : cols) csv << ',' << c;
    csv << '\n';
    const bool multi = cells.size() > 1;

    for (const auto& [ds, by_proto] : cells) {
        md << "\n### " << ds << "\n\n| Method | Clean | Sym 20 | Sym 40 | Sym 60 | Sym 80 | Sym 90 | Sym 95 | Asym 20 | Asym 40 |\n";
        md << "|---|---|---|---|---|---|---|---|---|---|\n";
        for (const auto& [proto, title] : kBlocks) {
            const auto pit = by_proto.find(proto);
            if (pit == by_proto.end()) continue;
            md << "| **" << title << "** |" << std::string(cols.size(), '|') << '\n';
            std::vector<std::string> algos;
            for (const auto& a : kAlgorithmOrder)
                if (pit->second.count(a)) algos.push_back(a);
            for (const auto& [a, _] : pit->second)
                if (std::find(kAlgorithmOrder.begin(), kAlgorithmOrder.end(), a) == kAlgorithmOrder.end()) algos.push_back(a);
            for (const auto& a : algos) {
                const auto& row = pit->second.at(a);
                md << "| " << display_name(a) << " |";
                csv << (multi ? ds + "/" : "") << a << ',' << proto;
                for (const auto& c : cols) {
                    const auto it = row.find(c);
                    const std::string v = it == row.end() ? "" : it->second;
                    md << ' ' << v << " |";
                    csv << ',' << v;
                }
                md << '\n';
                csv << '\n';
            }
        }
    }
    return {md.str(), csv.str()};
}

}  // namespace noisebench
