#pragma once

#include "dfrelay/constellation.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dfr {

struct SerPoint {
    double snr_db = 0.0;
    int64_t errors = 0;
    int64_t trials = 0;
    double ser = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double std_err = 0.0;   // cluster-robust standard error of ser
    int64_t fallbacks = 0;  // PL decisions without a unanimous pairwise winner
    bool failed = false;
    std::string note;
};

struct SerCurve {
    std::string source = "mc";  // mc | closed_form | quadrature | asymptotic
    ConstellationKind kind = ConstellationKind::PSK;
    int M = 4;
    int relays = 1;
    std::string decoder = "PL";
    uint64_t seed = 0;
    std::string plan_hash;
    double wall_time_s = 0.0;
    std::vector<SerPoint> points;
};

}  // namespace dfr
