#pragma once

#include "dfrelay/constellation.hpp"
#include "dfrelay/relay.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dfr {

struct LinkPair {
    cplx prev;  // y[n-1]
    cplx curr;  // y[n]
    double noise_var = 1.0;
};

struct DestObservation {
    LinkPair sd;
    std::vector<LinkPair> rd;

    int relays() const { return static_cast<int>(rd.size()); }
};

enum class DecoderKind { ML, PL, naive_eps0, genie_reference };

std::string to_string(DecoderKind k);
DecoderKind decoder_kind_from_string(const std::string& s);

struct QamFeedback {
    double sd_prev_mag = 1.0;          // |x^[n-1]|
    std::vector<double> rd_prev_mag;   // |x^_m[n-1]| per relay
};

struct DecoderConfig {
    DecoderKind kind = DecoderKind::PL;
    std::vector<double> epsilons;
    std::vector<double> thresholds;  // +inf when the relay is treated as error free
    QamFeedback qam_feedback;

    int relays() const { return static_cast<int>(epsilons.size()); }
};

// Fills thresholds from epsilons; naive_eps0 forces eps = 0 and T = inf.
DecoderConfig make_decoder_config(DecoderKind kind, int M, const std::vector<double>& epsilons);

double clip_threshold(int M, double eps);
double f_pl(double t, double T);

// Exact clipped-LLR function ln(((1-e)e^t + e/(M-1)) / ((1-e) + e/(M-1) e^t)).
double llr_exact(double t, int M, double eps);

struct PlStats {
    int64_t decisions = 0;
    int64_t fallbacks = 0;
};

int ml_decode_psk(const DestObservation& obs, const ConstellationSpec& spec, const DecoderConfig& cfg);
int pl_decode_psk(const DestObservation& obs, const ConstellationSpec& spec, const DecoderConfig& cfg,
                  PlStats* stats = nullptr);
int ml_decode_qam(const DestObservation& obs, const ConstellationSpec& spec, const DecoderConfig& cfg);
int pl_decode_qam(const DestObservation& obs, const ConstellationSpec& spec, const DecoderConfig& cfg,
                  PlStats* stats = nullptr);

// Dispatch on constellation kind and decoder kind.
int decode(const DestObservation& obs, const ConstellationSpec& spec, const DecoderConfig& cfg,
           PlStats* stats = nullptr);

// Pairwise statistic Lambda_{p,q} as used by the PL rule.
double pl_lambda(const DestObservation& obs, const ConstellationSpec& spec, const DecoderConfig& cfg, int p, int q);

// Destination estimate of x_r[n-1] from (y_rd[n-2], y_rd[n-1]) given |x_r[n-2]|.
int dest_estimate_relay_prev(const LinkPair& pair, const ConstellationSpec& spec, double prev_mag_est);

// History form: history holds y_rd[0..n-1]; nullopt while fewer than two
// samples exist (warm-up, where |x_r| = 1 is assumed).
std::optional<int> dest_estimate_relay_prev(const std::vector<cplx>& history, double noise_var,
                                            const ConstellationSpec& spec, double prev_mag_est);

// Literal single-relay PSK decoders with every real addition, subtraction,
// multiplication, division and comparison counted. ML evaluates the joint
// log-density once per candidate; PL runs a knockout over M-1 pairwise tests.
int literal_decode_psk(DecoderKind kind, const DestObservation& obs, const ConstellationSpec& spec, double eps,
                       int64_t* ops);

// Real additions plus real multiplications of one literal decode call.
int64_t count_ops(DecoderKind kind, int M);

}  // namespace dfr
