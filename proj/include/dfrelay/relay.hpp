#pragma once

#include "dfrelay/channel.hpp"
#include "dfrelay/constellation.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dfr {

struct RelayObservation {
    cplx y_prev;
    cplx y_curr;
    double noise_var = 1.0;
};

// argmax_x Re{y*[n] y[n-1] x}, lowest index on ties.
int demod_psk(const RelayObservation& obs, const ConstellationSpec& spec);

// argmin_x ln(1 + |x|^2/m^2) + |y[n] - y[n-1] x/m|^2 / ((1 + |x|^2/m^2) N)
int demod_qam(const RelayObservation& obs, const ConstellationSpec& spec, double prev_mag_est);

enum class RelayMode { erroneous, genie };

// Where previous-symbol magnitudes for QAM come from.
enum class Feedback { decision_directed, genie };

struct RelayFrame {
    std::vector<int> decisions;  // x_r[1..L]
    std::vector<cplx> v;         // v_r[0..L], v_r[0] = 1
};

// y_sr holds y_sr[0..L]; symbols holds the true x[1..L] indices.
RelayFrame relay_process_frame(const std::vector<cplx>& y_sr, const std::vector<int>& symbols, double noise_var,
                               const ConstellationSpec& spec, RelayMode mode,
                               Feedback feedback = Feedback::decision_directed);

enum class EpsilonMethod { monte_carlo, analytic_approx };

std::string to_string(EpsilonMethod m);
EpsilonMethod epsilon_method_from_string(const std::string& s);

struct EpsilonEstimate {
    double value = 0.0;
    EpsilonMethod method = EpsilonMethod::monte_carlo;
    int64_t trials = 0;
    double std_err = 0.0;
    std::string note;
};

struct CalibrationBudget {
    EpsilonMethod method = EpsilonMethod::monte_carlo;
    int64_t trials = 1000000;
    uint64_t seed = 1;
    double target_std_err = 0.0;  // 0 disables the check
};

// Average differential M-PSK symbol error probability over Rayleigh fading.
double epsilon_dpsk_analytic(int M, double avg_snr);

EpsilonEstimate calibrate_epsilon(const LinkParams& link, const ConstellationSpec& spec, const CalibrationBudget& budget);

struct CalibrationRow {
    int M = 0;
    ConstellationKind kind = ConstellationKind::PSK;
    double snr_db = 0.0;
    double epsilon = 0.0;
    double std_err = 0.0;
    int64_t trials = 0;
};

class CalibrationTable {
public:
    void upsert(const CalibrationRow& row);
    std::optional<CalibrationRow> find(int M, ConstellationKind kind, double snr_db, double tol_db = 1e-6) const;
    const std::vector<CalibrationRow>& rows() const { return rows_; }

    void save(std::ostream& os) const;
    void save(const std::string& path) const;
    static CalibrationTable load(std::istream& is);
    static CalibrationTable load(const std::string& path);

private:
    std::vector<CalibrationRow> rows_;
};

}  // namespace dfr
