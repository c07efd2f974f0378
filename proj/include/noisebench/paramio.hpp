#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "noisebench/network.hpp"

namespace noisebench {

inline constexpr std::uint32_t kParamFormatVersion = 1;

// "NBPS" | version u32 | layer count u32 | per layer: rows u32, cols u32,
// rows*cols f64 weights, cols f64 biases. All little-endian.
std::vector<std::uint8_t> encode_params(const ParamSet& params);
ParamSet decode_params(const std::vector<std::uint8_t>& bytes);

void save_params(const ParamSet& params, const std::filesystem::path& path);
ParamSet load_params(const std::filesystem::path& path);

}  // namespace noisebench
