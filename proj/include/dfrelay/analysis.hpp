#pragma once

#include "dfrelay/constellation.hpp"
#include "dfrelay/curve.hpp"
#include "dfrelay/specfun.hpp"

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace dfr {

struct PepTermsConfig {
    SeriesTruncation truncation{4000, 1e-10};
    QuadratureTolerance quadrature{1e-13, 1e-8, 15};
    double gamma_sd = 1.0;  // average SNRs, linear
    double gamma_rd = 1.0;
    double gamma_sr = 1.0;
    double eps = 0.0;
    double T = 0.0;
    int M = 4;

    void validate() const;
};

// Builds a config with T = clip_threshold(M, eps).
PepTermsConfig make_pep_config(int M, double gamma_sd, double gamma_rd, double gamma_sr, double eps);

struct PepResult {
    double value = 0.0;
    bool converged = true;
    int max_terms_used = 0;
    std::vector<double> terms;  // P_e1..P_e10, I_1..I_4 or empty
    std::vector<std::string> warnings;
};

// Average probability of deciding x_q when x_p was sent, PL decoder, single
// erroneous relay, closed-form series.
PepResult pep_closed_form(const ConstellationSpec& spec, int p, int q, const PepTermsConfig& cfg);

// Same event with higher-order noise dropped, integrals done numerically.
PepResult pep_quadrature_approx(const ConstellationSpec& spec, int p, int q, const PepTermsConfig& cfg);

using PepFn = std::function<PepResult(const ConstellationSpec&, int, int, const PepTermsConfig&)>;

// Union over the nearest neighbours of x_1.
PepResult ser_nearest_neighbor(const ConstellationSpec& spec, const PepFn& pep, const PepTermsConfig& cfg);

// Average PEP with N error-free relays and equal link SNRs.
PepResult pep_asymptotic_multirelay(const ConstellationSpec& spec, int p, int q, int N, double gamma_bar,
                                    const SeriesTruncation& trunc = {4000, 1e-12});

// Conditional PEP given the total instantaneous SNR gamma_t.
PepResult pep_asymptotic_conditional(const ConstellationSpec& spec, int p, int q, int N, double gamma_t,
                                     const SeriesTruncation& trunc = {4000, 1e-12});

// Building blocks of the closed form, exposed for testing. All assume the
// pair difference has been scaled to unit modulus, so a + b = 8.
namespace series {
// Pr{statistic beyond threshold} family: sum_d Q(d+1, 2T) u_d(a, b)
double g1(double a, double b, double gbar, double T, const SeriesTruncation& tr, bool* converged = nullptr);
// The same series evaluated term by term with no closed-form split.
double g1_direct(double a, double b, double gbar, double T, int K);
// Closed-form value of sum_d u_d(a, b), the T = 0 case.
double g0(double a, double b, double gbar);
// u_d(a, b) for d = 0..count-1
std::vector<double> u_terms(double a, double b, double gbar, int count, const SeriesTruncation& tr,
                            bool* converged = nullptr);
}  // namespace series

struct SlopeFit {
    bool ok = false;
    double slope = 0.0;      // magnitude of d log10(SER) / d (SNR_dB / 10)
    double intercept = 0.0;
    int points = 0;
    std::string diagnostic;
};

SlopeFit fit_diversity_slope(const SerCurve& curve, double lo_db, double hi_db, double max_rel_halfwidth = 0.30);

}  // namespace dfr
