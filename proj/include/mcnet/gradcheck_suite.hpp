#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mcnet {

inline constexpr double kOpGradTolerance = 1e-4;
inline constexpr double kNetworkGradTolerance = 1e-3;

struct GradcheckCase {
    std::string module;
    std::string name;
    std::size_t seeds = 0;
    std::size_t entries = 0;
    double max_rel_error = 0.0;
    double tolerance = kOpGradTolerance;
    std::string worst;

    bool passed() const { return max_rel_error < tolerance; }
};

// tensor-core, mcae-encoder, pcsp-decoder, voting, harness
std::vector<std::string> gradcheck_modules();

// Finite-difference checks of every differentiable stage of one module (or
// all of them for an empty name), each over `seeds` random draws. The
// composed network is checked once per seed at the test profile.
std::vector<GradcheckCase> run_gradcheck_suite(const std::string& module = "", std::size_t seeds = 10);

}  // namespace mcnet
