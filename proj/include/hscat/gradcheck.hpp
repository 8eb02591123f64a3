#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hscat::gradcheck {

// Outcome of one finite-difference comparison. The error of an entry is
// |analytic - numeric| / max(|analytic|, |numeric|, floor), where the floor is
// 1e-3 of the largest numeric entry in the case (guards near-zero entries).
struct CheckResult {
    std::string name;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    int entries = 0;
    bool pass = false;
};

inline constexpr double kAutodiffTolerance = 1e-4;
inline constexpr double kAdjointTolerance = 1e-3;

// Every tape op on randomized small instances, central differences.
std::vector<CheckResult> autodiff_suite(std::uint64_t seed);

// raymarch_adjoint against central differences of raymarch_render for point
// (colocated and side) and SH environment lighting, w.r.t. sigma, alpha and s.
std::vector<CheckResult> adjoint_suite(std::uint64_t seed);

// max relative error under the convention above.
double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric);

}  // namespace hscat::gradcheck
