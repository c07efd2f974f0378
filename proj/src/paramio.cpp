#include "noisebench/paramio.hpp"

#include <fstream>
#include <iterator>

#include "bytes.hpp"

namespace noisebench {

namespace detail {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace detail

std::vector<std::uint8_t> encode_params(const ParamSet& params) {
    detail::ByteWriter w;
    w.magic("NBPS");
    w.u32(kParamFormatVersion);
    w.u32(static_cast<std::uint32_t>(params.layers.size()));
    for (const auto& layer : params.layers) {
        w.u32(static_cast<std::uint32_t>(layer.weights.rows()));
        w.u32(static_cast<std::uint32_t>(layer.weights.cols()));
        for (double v : layer.weights.values()) w.f64(v);
        for (double v : layer.bias) w.f64(v);
    }
    return w.take();
}

ParamSet decode_params(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader r(bytes);
    r.expect_magic("NBPS", "ParamSet");
    const std::size_t version_at = r.offset();
    const std::uint32_t version = r.u32("version");
    if (version != kParamFormatVersion) {
        throw ParseError("ParamSet: unsupported format version " + std::to_string(version),
                         version_at);
    }
    const std::uint32_t count = r.u32("layer count");
    ParamSet params;
    for (std::uint32_t l = 0; l < count; ++l) {
        const std::uint32_t rows = r.u32("layer rows");
        const std::uint32_t cols = r.u32("layer cols");
        const std::uint64_t n = std::uint64_t{rows} * cols;
        r.require((n + cols) * 8, "layer payload");
        Layer layer{DenseMatrix(rows, cols), std::vector<double>(cols)};
        for (double& v : layer.weights.values()) v = r.f64("weight");
        for (double& v : layer.bias) v = r.f64("bias");
        if (!params.layers.empty() && params.layers.back().weights.cols() != rows) {
            throw ParseError("ParamSet: layer " + std::to_string(l) + " input width " +
                                 std::to_string(rows) + " does not chain",
                             r.offset());
        }
        params.layers.push_back(std::move(layer));
    }
    if (r.remaining() != 0) {
        throw ParseError("ParamSet: trailing bytes after last layer", r.offset());
    }
    return params;
}

void save_params(const ParamSet& params, const std::filesystem::path& path) {
    detail::write_file(path, encode_params(params));
}

ParamSet load_params(const std::filesystem::path& path) {
    return decode_params(detail::read_file(path));
}

}  // namespace noisebench
