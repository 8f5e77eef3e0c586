#include "dfrelay/decoders.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dfr {

std::string to_string(DecoderKind k) {
    switch (k) {
        case DecoderKind::ML: return "ML";
        case DecoderKind::PL: return "PL";
        case DecoderKind::naive_eps0: return "naive_eps0";
        case DecoderKind::genie_reference: return "genie_reference";
    }
    return "?";
}

DecoderKind decoder_kind_from_string(const std::string& s) {
    if (s == "ML" || s == "ml") return DecoderKind::ML;
    if (s == "PL" || s == "pl") return DecoderKind::PL;
    if (s == "naive_eps0") return DecoderKind::naive_eps0;
    if (s == "genie_reference") return DecoderKind::genie_reference;
    throw std::invalid_argument("unknown decoder kind: " + s);
}

double clip_threshold(int M, double eps) {
    if (M < 2) throw std::domain_error("clip_threshold: M must be >= 2");
    if (!(eps > 0.0 && eps < 1.0)) throw std::domain_error("clip_threshold: eps must lie in (0, 1)");
    return std::log((M - 1) * (1.0 - eps) / eps);
}

double f_pl(double t, double T) { return std::clamp(t, -T, T); }

double llr_exact(double t, int M, double eps) {
    const double a = eps / (M - 1);
    // ln((1-e)e^t + a) - ln((1-e) + a e^t), evaluated in log space
    auto lse = [](double u, double v) {
        const double m = std::max(u, v);
        return m + std::log(std::exp(u - m) + std::exp(v - m));
    };
    return lse(std::log1p(-eps) + t, std::log(a)) - lse(std::log1p(-eps), std::log(a) + t);
}

DecoderConfig make_decoder_config(DecoderKind kind, int M, const std::vector<double>& epsilons) {
    DecoderConfig c;
    c.kind = kind;
    c.epsilons = epsilons;
    c.thresholds.resize(epsilons.size());
    for (size_t m = 0; m < epsilons.size(); ++m) {
        if (kind == DecoderKind::naive_eps0) c.epsilons[m] = 0.0;
        c.thresholds[m] = c.epsilons[m] > 0.0 ? clip_threshold(M, c.epsilons[m])
                                               : std::numeric_limits<double>::infinity();
    }
    c.qam_feedback.rd_prev_mag.assign(epsilons.size(), 1.0);
    return c;
}

namespace {

constexpr double kExpClamp = 700.0;

void psk_scores(const LinkPair& p, const ConstellationSpec& spec, double* out) {
    const cplx q = std::conj(p.curr) * p.prev;
    const double inv = 1.0 / p.noise_var;
    for (int i = 0; i < spec.M; ++i) {
        const cplx x = spec.points[i];
        out[i] = (q.real() * x.real() - q.imag() * x.imag()) * inv;
    }
}

void qam_scores(const LinkPair& p, const ConstellationSpec& spec, double m, double* out) {
    const double m2 = m * m;
    for (int i = 0; i < spec.M; ++i) {
        const cplx x = spec.points[i];
        const double w = 1.0 + std::norm(x) / m2;
        out[i] = -(std::log(w) + std::norm(p.curr - p.prev * x / m) / (w * p.noise_var));
    }
}

struct Scores {
    int M = 0;
    int links = 0;
    std::vector<double> s;  // links x M, row 0 is the direct link
    double* row(int l) { return s.data() + size_t(l) * M; }
    const double* row(int l) const { return s.data() + size_t(l) * M; }
};

Scores& scratch() {
    thread_local Scores sc;
    return sc;
}

const Scores& compute_scores(const DestObservation& obs, const ConstellationSpec& spec, const DecoderConfig& cfg) {
    if (cfg.relays() != obs.relays()) throw std::invalid_argument("decoder: relay count mismatch between config and observation");
    Scores& sc = scratch();
    sc.M = spec.M;
    sc.links = obs.relays() + 1;
    sc.s.resize(size_t(sc.links) * sc.M);
    if (spec.is_psk()) {
        psk_scores(obs.sd, spec, sc.row(0));
        for (int m = 0; m < obs.relays(); ++m) psk_scores(obs.rd[m], spec, sc.row(m + 1));
    } else {
        qam_scores(obs.sd, spec, cfg.qam_feedback.sd_prev_mag, sc.row(0));
        for (int m = 0; m < obs.relays(); ++m) {
            const double mag = m < int(cfg.qam_feedback.rd_prev_mag.size()) ? cfg.qam_feedback.rd_prev_mag[m] : 1.0;
            qam_scores(obs.rd[m], spec, mag, sc.row(m + 1));
        }
    }
    return sc;
}

// ln[(1-e) e^{s_x} + e/(M-1) sum_{i != x} e^{s_i}] for every x, into acc.
void add_mixture(const double* s, int M, double eps, double* acc) {
    if (eps <= 0.0) {
        for (int x = 0; x < M; ++x) acc[x] += s[x];
        return;
    }
    const double smax = *std::max_element(s, s + M);
    thread_local std::vector<double> e;
    e.resize(M);
    double total = 0.0;
    for (int i = 0; i < M; ++i) {
        e[i] = std::exp(std::max(s[i] - smax, -kExpClamp));
        total += e[i];
    }
    const double a = eps / (M - 1);
    for (int x = 0; x < M; ++x) {
        const double rest = std::max(total - e[x], 0.0);
        acc[x] += smax + std::log((1.0 - eps) * e[x] + a * rest);
    }
}

int ml_from_scores(const Scores& sc, const DecoderConfig& cfg) {
    const int M = sc.M;
    thread_local std::vector<double> obj;
    obj.assign(sc.row(0), sc.row(0) + M);
    for (int m = 1; m < sc.links; ++m) add_mixture(sc.row(m), M, cfg.epsilons[m - 1], obj.data());
    int best = 0;
    for (int x = 1; x < M; ++x)
        if (obj[x] > obj[best]) best = x;
    return best;
}

double lambda_from_scores(const Scores& sc, const DecoderConfig& cfg, int p, int q) {
    const double* s0 = sc.row(0);
    double v = s0[p] - s0[q];
    for (int m = 1; m < sc.links; ++m) {
        const double* s = sc.row(m);
        v += f_pl(s[p] - s[q], cfg.thresholds[m - 1]);
    }
    return v;
}

int pl_from_scores(const Scores& sc, const DecoderConfig& cfg, PlStats* stats) {
    const int M = sc.M;
    int champ = 0;
    for (int l = 1; l < M; ++l)
        if (lambda_from_scores(sc, cfg, champ, l) < 0.0) champ = l;
    bool unanimous = true;
    for (int l = 0; l < M && unanimous; ++l)
        if (l != champ && !(lambda_from_scores(sc, cfg, champ, l) > 0.0)) unanimous = false;
    if (stats) ++stats->decisions;
    if (unanimous) return champ;
    if (stats) ++stats->fallbacks;
    int best = 0;
    double bv = -INFINITY;
    for (int k = 0; k < M; ++k) {
        double s = 0.0;
        for (int l = 0; l < M; ++l)
            if (l != k) s += lambda_from_scores(sc, cfg, k, l);
        if (s > bv) {
            bv = s;
            best = k;
        }
    }
    return best;
}

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

int ml_decode_psk(const DestObservation& obs, const ConstellationSpec& spec, const DecoderConfig& cfg) {
    require(spec.is_psk(), "ml_decode_psk: PSK constellation required");
    return ml_from_scores(compute_scores(obs, spec, cfg), cfg);
}

int pl_decode_psk(const DestObservation& obs, const ConstellationSpec& spec, const DecoderConfig& cfg, PlStats* stats) {
    require(spec.is_psk(), "pl_decode_psk: PSK constellation required");
    return pl_from_scores(compute_scores(obs, spec, cfg), cfg, stats);
}

int ml_decode_qam(const DestObservation& obs, const ConstellationSpec& spec, const DecoderConfig& cfg) {
    require(!spec.is_psk(), "ml_decode_qam: QAM constellation required");
    return ml_from_scores(compute_scores(obs, spec, cfg), cfg);
}

int pl_decode_qam(const DestObservation& obs, const ConstellationSpec& spec, const DecoderConfig& cfg, PlStats* stats) {
    require(!spec.is_psk(), "pl_decode_qam: QAM constellation required");
    return pl_from_scores(compute_scores(obs, spec, cfg), cfg, stats);
}

int decode(const DestObservation& obs, const ConstellationSpec& spec, const DecoderConfig& cfg, PlStats* stats) {
    const auto& sc = compute_scores(obs, spec, cfg);
    if (cfg.kind == DecoderKind::PL) return pl_from_scores(sc, cfg, stats);
    return ml_from_scores(sc, cfg);
}

double pl_lambda(const DestObservation& obs, const ConstellationSpec& spec, const DecoderConfig& cfg, int p, int q) {
    return lambda_from_scores(compute_scores(obs, spec, cfg), cfg, p, q);
}

int dest_estimate_relay_prev(const LinkPair& pair, const ConstellationSpec& spec, double prev_mag_est) {
    const RelayObservation o{pair.prev, pair.curr, pair.noise_var};
    return spec.is_psk() ? demod_psk(o, spec) : demod_qam(o, spec, prev_mag_est);
}

std::optional<int> dest_estimate_relay_prev(const std::vector<cplx>& history, double noise_var,
                                            const ConstellationSpec& spec, double prev_mag_est) {
    if (history.size() < 2) return std::nullopt;
    const size_t n = history.size();
    return dest_estimate_relay_prev(LinkPair{history[n - 2], history[n - 1], noise_var}, spec, prev_mag_est);
}

}  // namespace dfr
