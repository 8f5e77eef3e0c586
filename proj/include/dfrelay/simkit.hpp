#pragma once

#include "dfrelay/analysis.hpp"
#include "dfrelay/channel.hpp"
#include "dfrelay/constellation.hpp"
#include "dfrelay/curve.hpp"
#include "dfrelay/decoders.hpp"
#include "dfrelay/relay.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dfr {

enum class SnrTying { all_equal, sr_infinite, custom };
std::string to_string(SnrTying t);
SnrTying snr_tying_from_string(const std::string& s);

// Decoder epsilon while the source-relay link is error free.
enum class SrInfiniteEps { configured, zero };
std::string to_string(SrInfiniteEps e);
SrInfiniteEps sr_infinite_eps_from_string(const std::string& s);

enum class EpsilonSource { monte_carlo, analytic, table };
std::string to_string(EpsilonSource e);
EpsilonSource epsilon_source_from_string(const std::string& s);

// Thrown when a decoder needs epsilon and the plan has no way to get it.
struct EpsilonMissing : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrialsPolicy {
    int64_t min_errors = 200;
    int64_t max_trials = 100000000;
};

struct LinkOffsets {
    double sd = 0.0;               // dB added to the grid value
    std::vector<double> sr, rd;    // per relay; missing entries are 0
};

struct ExperimentPlan {
    ConstellationSpec spec = make_psk(4);
    int relays = 1;
    DecoderKind decoder = DecoderKind::PL;
    RelayMode relay_mode = RelayMode::erroneous;
    Feedback feedback = Feedback::decision_directed;
    std::vector<double> snr_db;
    SnrTying tying = SnrTying::all_equal;
    LinkOffsets offsets;
    SrInfiniteEps sr_infinite_eps = SrInfiniteEps::configured;

    EpsilonSource eps_source = EpsilonSource::monte_carlo;
    CalibrationBudget eps_budget;                    // used by monte_carlo
    std::shared_ptr<const CalibrationTable> eps_table;  // used by table

    TrialsPolicy trials;
    uint64_t seed = 1;
    int coherence_len = 65;  // frame = coherence block, first symbol is the reference
    int batch_frames = 32;
    int workers = 1;
    bool zero_noise = false;

    void validate() const;
    std::string describe() const;
    std::string hash() const;
};

TopologyParams topology_at(const ExperimentPlan& plan, size_t grid_index);

// Per-relay epsilon the decoder uses at one grid point (empty for naive).
std::vector<double> resolve_epsilons(const ExperimentPlan& plan, size_t grid_index);

// Cluster-robust counts for one point: each frame is a cluster.
struct PointTally {
    int64_t errors = 0;
    int64_t trials = 0;
    int64_t frames = 0;
    double sum_e2 = 0.0;  // sum over frames of errors^2
    int64_t pl_decisions = 0;
    int64_t pl_fallbacks = 0;

    void merge(const PointTally& o);
};

// Wilson 95% interval with the sample size deflated by the design effect.
SerPoint summarize(double snr_db, const PointTally& t, int frame_len);

// Simulates batch number `batch` (frames batch*B .. batch*B+B-1) of a point.
PointTally simulate_batch(const ExperimentPlan& plan, size_t grid_index, int64_t batch,
                          const std::vector<double>& eps);

SerPoint run_point(const ExperimentPlan& plan, size_t grid_index);
SerCurve run_sweep(const ExperimentPlan& plan);

enum class CompareMode { ratio, horizontal_db };
std::string to_string(CompareMode m);
CompareMode compare_mode_from_string(const std::string& s);

struct CompareRow {
    double snr_db = 0.0;  // SNR of curve a
    double ser = 0.0;     // SER of curve a
    double value = 0.0;   // ratio a/b, or dB by which b lags a at a's SER
    double low = 0.0;
    double high = 0.0;
};

struct CompareReport {
    CompareMode mode = CompareMode::ratio;
    std::vector<CompareRow> rows;
    double max_abs = 0.0;  // max |value| (horizontal) or max |ln ratio| mapped back
};

CompareReport compare_curves(const SerCurve& a, const SerCurve& b, CompareMode mode);

// SNR (dB) at which the curve crosses `ser`, interpolating log10 SER linearly
// in dB between adjacent points; nullopt outside the curve.
std::optional<double> snr_at_ser(const SerCurve& c, double ser);

// Horizontal gap snr_b - snr_a at one SER level.
std::optional<double> horizontal_gap_db(const SerCurve& a, const SerCurve& b, double ser);

// Analytical single-relay (closed_form, quadrature) or N-relay (asymptotic)
// SER over the plan's grid, epsilon resolved the same way as for simulation.
SerCurve analytic_curve(const ExperimentPlan& plan, const std::string& source);

}  // namespace dfr
