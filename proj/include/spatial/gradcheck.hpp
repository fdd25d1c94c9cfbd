#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace spatial {

struct GradCheckReport {
    std::string op;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// Central finite-difference checks (h = 1e-5) for every differentiable
// tensor-core op plus a composed multi-layer network check. Each op is
// checked on `instances` seeded random instances.
std::vector<GradCheckReport> run_gradient_checks(std::uint64_t seed, int instances = 20);

}  // namespace spatial
