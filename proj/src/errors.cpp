#include "noisebench/errors.hpp"

#include <cstdlib>
#include <iostream>

namespace noisebench {

void warn(const std::string& message) {
    if (std::getenv("NOISEBENCH_QUIET") != nullptr) return;
    std::cerr << "[noisebench] warning: " << message << '\n';
}

}  // namespace noisebench
