#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfdr/core.hpp"

namespace cfdr {

/// Closed form against its Monte-Carlo counterpart; passes within 4 standard errors.
struct VerifyLine {
    std::string name;
    double closed = 0;
    double empirical = 0;
    double se = 0;
    bool passed = false;
};

/// Oracle agreement suite on the two-context bandit.
std::vector<VerifyLine> verify_theorems(std::uint64_t seed, Index trials = 20000, unsigned workers = 1);

std::string format_verify_line(const VerifyLine& line);

}  // namespace cfdr
