#include "dfrelay/relay.hpp"

#include "dfrelay/diffmod.hpp"
#include "dfrelay/rng.hpp"
#include "dfrelay/specfun.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace dfr {

int demod_psk(const RelayObservation& obs, const ConstellationSpec& spec) {
    const cplx z = std::conj(obs.y_curr) * obs.y_prev;
    int best = 0;
    double bv = -INFINITY;
    for (int i = 0; i < spec.M; ++i) {
        const double v = (z * spec.points[i]).real();
        if (v > bv) {
            bv = v;
            best = i;
        }
    }
    return best;
}

int demod_qam(const RelayObservation& obs, const ConstellationSpec& spec, double prev_mag_est) {
    const double m2 = prev_mag_est * prev_mag_est;
    int best = 0;
    double bv = INFINITY;
    for (int i = 0; i < spec.M; ++i) {
        const cplx x = spec.points[i];
        const double w = 1.0 + std::norm(x) / m2;
        const double v = std::log(w) + std::norm(obs.y_curr - obs.y_prev * x / prev_mag_est) / (w * obs.noise_var);
        if (v < bv) {
            bv = v;
            best = i;
        }
    }
    return best;
}

RelayFrame relay_process_frame(const std::vector<cplx>& y_sr, const std::vector<int>& symbols, double noise_var,
                               const ConstellationSpec& spec, RelayMode mode, Feedback feedback) {
    if (y_sr.size() < 2 || symbols.size() + 1 != y_sr.size())
        throw std::invalid_argument("relay_process_frame: need y[0..L] and x[1..L], L >= 1");
    const size_t L = symbols.size();
    RelayFrame out;
    out.decisions.resize(L);
    out.v.resize(L + 1);
    DiffState st;
    out.v[0] = st.prev_v;
    double mag_est = 1.0;
    for (size_t n = 1; n <= L; ++n) {
        int d;
        if (mode == RelayMode::genie) {
            d = symbols[n - 1];
        } else if (spec.is_psk()) {
            d = demod_psk({y_sr[n - 1], y_sr[n], noise_var}, spec);
        } else {
            const double m = (feedback == Feedback::genie && n > 1) ? std::abs(spec.points[symbols[n - 2]]) : mag_est;
            d = demod_qam({y_sr[n - 1], y_sr[n], noise_var}, spec, m);
        }
        out.decisions[n - 1] = d;
        mag_est = std::abs(spec.points[d]);
        out.v[n] = encode(st, spec.points[d], spec.kind);
    }
    return out;
}

std::string to_string(EpsilonMethod m) { return m == EpsilonMethod::monte_carlo ? "monte_carlo" : "analytic_approx"; }

EpsilonMethod epsilon_method_from_string(const std::string& s) {
    if (s == "monte_carlo") return EpsilonMethod::monte_carlo;
    if (s == "analytic_approx") return EpsilonMethod::analytic_approx;
    throw std::invalid_argument("unknown epsilon method: " + s);
}

double epsilon_dpsk_analytic(int M, double avg_snr) {
    if (M < 2) throw std::domain_error("epsilon_dpsk_analytic: M must be >= 2");
    if (!(avg_snr > 0.0)) throw std::domain_error("epsilon_dpsk_analytic: SNR must be > 0");
    const double g = std::pow(std::sin(std::numbers::pi / M), 2);
    const double r = std::sqrt(1.0 - g);
    auto f = [&](double th) {
        const double a = 1.0 - r * std::cos(th);
        return 1.0 / (a * (1.0 + avg_snr * a));
    };
    const auto q = integrate(f, -std::numbers::pi / 2, std::numbers::pi / 2, {1e-16, 1e-12, 20});
    return std::sqrt(g) / (2.0 * std::numbers::pi) * q.value;
}

EpsilonEstimate calibrate_epsilon(const LinkParams& link, const ConstellationSpec& spec,
                                  const CalibrationBudget& budget) {
    link.validate();
    EpsilonEstimate est;
    est.method = budget.method;
    if (budget.method == EpsilonMethod::analytic_approx) {
        if (!spec.is_psk()) throw std::invalid_argument("calibrate_epsilon: analytic_approx is PSK only");
        est.value = epsilon_dpsk_analytic(spec.M, link.avg_snr());
        return est;
    }
    if (budget.trials <= 0) throw std::invalid_argument("calibrate_epsilon: trials must be > 0");

    // PSK decisions are identically distributed, so one decision per fading
    // draw keeps the binomial error exact. QAM runs whole coherence blocks so
    // the magnitude feedback sees its steady state.
    const int L = spec.is_psk() ? 1 : link.coherence_len - 1;
    const uint64_t key = derive_key(budget.seed, 0xCA1B00ull + spec.M * 131 + int(spec.kind));
    int64_t errors = 0, trials = 0;
    double s1 = 0.0, s2 = 0.0;
    int64_t frames = 0;
    std::vector<int> sym(L);
    std::vector<cplx> y(L + 1);
    while (trials < budget.trials) {
        RandomStream rng(key, 0, uint64_t(frames));
        const cplx h = draw_block_gain(link, rng);
        DiffState st;
        y[0] = transmit(h, st.prev_v, link.noise_var, rng);
        for (int n = 0; n < L; ++n) {
            sym[n] = int(rng.below(uint32_t(spec.M)));
            y[n + 1] = transmit(h, encode(st, spec.points[sym[n]], spec.kind), link.noise_var, rng);
        }
        const auto fr = relay_process_frame(y, sym, link.noise_var, spec, RelayMode::erroneous);
        int e = 0;
        for (int n = 0; n < L; ++n) e += fr.decisions[n] != sym[n];
        errors += e;
        trials += L;
        s1 += e;
        s2 += double(e) * e;
        ++frames;
    }
    const double p = double(errors) / double(trials);
    est.value = p;
    est.trials = trials;
    double var = p * (1.0 - p) / double(trials);
    if (L > 1 && frames > 1) {
        const double mean = s1 / frames;
        const double vf = (s2 - frames * mean * mean) / (frames - 1);
        var = std::max(var, vf / (double(frames) * L * L));
    }
    est.std_err = std::sqrt(var);
    if (budget.target_std_err > 0.0 && est.std_err > budget.target_std_err) {
        std::ostringstream os;
        os << "std_err " << est.std_err << " exceeds requested " << budget.target_std_err;
        est.note = os.str();
    }
    return est;
}

void CalibrationTable::upsert(const CalibrationRow& row) {
    for (auto& r : rows_) {
        if (r.M == row.M && r.kind == row.kind && std::fabs(r.snr_db - row.snr_db) < 1e-9) {
            r = row;
            return;
        }
    }
    rows_.push_back(row);
}

std::optional<CalibrationRow> CalibrationTable::find(int M, ConstellationKind kind, double snr_db, double tol_db) const {
    for (const auto& r : rows_)
        if (r.M == M && r.kind == kind && std::fabs(r.snr_db - snr_db) <= tol_db) return r;
    return std::nullopt;
}

void CalibrationTable::save(std::ostream& os) const {
    os << "M,kind,snr_db,epsilon,std_err,trials\n";
    os << std::setprecision(17);
    for (const auto& r : rows_)
        os << r.M << ',' << to_string(r.kind) << ',' << r.snr_db << ',' << r.epsilon << ',' << r.std_err << ','
           << r.trials << '\n';
}

void CalibrationTable::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write calibration table: " + path);
    save(f);
    if (!f) throw std::runtime_error("write failed: " + path);
}

CalibrationTable CalibrationTable::load(std::istream& is) {
    CalibrationTable t;
    std::string line;
    if (!std::getline(is, line) || line.rfind("M,kind,snr_db,epsilon,std_err,trials", 0) != 0)
        throw std::runtime_error("calibration table: bad header");
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string f[6];
        for (int i = 0; i < 6; ++i)
            if (!std::getline(ls, f[i], ',')) throw std::runtime_error("calibration table: short row at line " + std::to_string(lineno));
        CalibrationRow r;
        r.M = std::stoi(f[0]);
        r.kind = constellation_kind_from_string(f[1]);
        r.snr_db = std::stod(f[2]);
        r.epsilon = std::stod(f[3]);
        r.std_err = std::stod(f[4]);
        r.trials = std::stoll(f[5]);
        t.rows_.push_back(r);
    }
    return t;
}

CalibrationTable CalibrationTable::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read calibration table: " + path);
    return load(f);
}

}  // namespace dfr
