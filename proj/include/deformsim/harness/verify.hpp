#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace deformsim::harness {

struct SuiteResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct VerifySizes {
    int attention_instances = 25;
    int quant_seeds = 20;
    int cache_traces = 100;
    int schedule_instances = 10;  ///< exhaustive n = 8 searches
};

struct VerifySummary {
    std::vector<SuiteResult> suites;

    bool passed() const;
};

/// Runs every kernel against its independent oracle at desk scale:
/// fused vs reference vs loop-nest attention, fixed-point vs floating,
/// saturation on extreme inputs, direct-mapped cache vs map simulator,
/// stall formula vs set arithmetic, DOOQ vs exhaustive search, sorter depth.
VerifySummary verify_kernels(std::uint64_t seed, const VerifySizes& sizes = {});

}  // namespace deformsim::harness
