#pragma once

#include <string>
#include <vector>

namespace noisebench {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

// Fast self-checks of the core invariants (gradients, noise models, KMM
// feasibility, reduction identities). Used by `noisebench check`.
std::vector<CheckResult> run_invariant_checks();

}  // namespace noisebench
