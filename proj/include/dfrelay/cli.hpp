#pragma once

#include "dfrelay/curve.hpp"
#include "dfrelay/simkit.hpp"

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace dfr::cli {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kCsvHeader = "source,kind,M,N_relays,decoder,snr_db,ser,ci_low,ci_high,errors,trials,seed";
inline constexpr const char* kOutDirEnv = "DFRELAY_OUT_DIR";

enum ExitCode : int { ok = 0, failed_points = 1, usage_error = 2, io_error = 3 };

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NamedPlan {
    std::string name;
    ExperimentPlan plan;
    bool monte_carlo = true;
    std::vector<std::string> analysis;  // closed_form | quadrature | asymptotic
};

struct SlopeRequest {
    std::string curve;  // "<experiment>" for mc, "<experiment>/<source>" otherwise
    double lo_db = 0.0, hi_db = 0.0;
};

struct CompareRequest {
    std::string a, b;
    CompareMode mode = CompareMode::ratio;
};

struct CalibrateRequest {
    std::vector<int> Ms;
    ConstellationKind kind = ConstellationKind::PSK;
    std::vector<double> snr_db;
    EpsilonMethod method = EpsilonMethod::monte_carlo;
    int64_t trials = 1000000;
    uint64_t seed = 1;
    int coherence_len = 65;
};

struct RunConfig {
    int schema_version = kSchemaVersion;
    std::string preset;
    std::string out_dir;
    std::string calibration_table;  // CSV path; read by sweeps, written by calibrate
    std::vector<NamedPlan> experiments;
    std::vector<SlopeRequest> slopes;
    std::vector<CompareRequest> compares;
    CalibrateRequest calibrate;
    bool has_calibrate = false;
};

// Parses a JSON document; unknown keys and schema mismatches throw ConfigError.
RunConfig parse_run_config(const std::string& json_text);

// Names accepted by expand_preset.
std::vector<std::string> preset_names();
RunConfig expand_preset(const std::string& name);

void write_curves_csv(std::ostream& os, const std::vector<SerCurve>& curves);
std::vector<SerCurve> read_curves_csv(std::istream& is);

struct ComplexityRow {
    int M;
    int64_t ml_measured, ml_formula, pl_measured, pl_formula;
    bool equal() const { return ml_measured == ml_formula && pl_measured == pl_formula; }
};
std::vector<ComplexityRow> complexity_table(const std::vector<int>& Ms);

// Entry point of the command-line tool; returns the process exit code.
int main(int argc, char** argv);

}  // namespace dfr::cli
