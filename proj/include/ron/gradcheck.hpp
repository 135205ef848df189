#pragma once

#include <string>
#include <vector>

namespace ron {

struct GradCheckReport {
    std::string op;
    double max_rel_err = 0;
    int coords_checked = 0;
    bool passed = false;
};

inline constexpr double kGradCheckTol = 1e-4;

// 64-bit central finite-difference verification (h = 1e-5) of every
// differentiable operation plus the full multi-task loss, >= 100 sampled
// coordinates each.
std::vector<GradCheckReport> run_gradcheck(uint64_t seed = 1234);

// Single named check; empty result if the name is unknown.
std::vector<GradCheckReport> run_gradcheck(const std::string& op_name, uint64_t seed);

std::vector<std::string> gradcheck_op_names();

}  // namespace ron
