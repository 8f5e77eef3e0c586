#include "dfrelay/analysis.hpp"
#include "dfrelay/decoders.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dfr {

void PepTermsConfig::validate() const {
    truncation.validate();
    if (M < 2) throw std::domain_error("PepTermsConfig: M must be >= 2");
    for (double g : {gamma_sd, gamma_rd, gamma_sr})
        if (!(g > 0.0) || !std::isfinite(g)) throw std::domain_error("PepTermsConfig: average SNRs must be positive and finite");
    if (!(eps > 0.0 && eps < 1.0)) throw std::domain_error("PepTermsConfig: eps must lie in (0, 1)");
    if (!(T >= 0.0) || !std::isfinite(T)) throw std::domain_error("PepTermsConfig: T must be finite and non-negative");
}

PepTermsConfig make_pep_config(int M, double gamma_sd, double gamma_rd, double gamma_sr, double eps) {
    PepTermsConfig c;
    c.M = M;
    c.gamma_sd = gamma_sd;
    c.gamma_rd = gamma_rd;
    c.gamma_sr = gamma_sr;
    c.eps = eps;
    c.T = clip_threshold(M, eps);
    return c;
}

namespace series {

namespace {

// Two exponential scales of the averaged pairwise statistic, unit |xbar|.
struct Lambdas {
    double l1, l2;
};

Lambdas lambdas(double a, double b, double gbar) {
    const double rho = (a - b) / 8.0;
    const double q = std::sqrt(gbar * gbar * rho * rho + 2.0 * gbar + 1.0);
    return {(gbar * rho + q) / 2.0, (gbar * rho - q) / 2.0};
}

// sum_{i=0}^{n} C(n,i) C(k+i,i) s^i, scaled by exp(log_scale)
double poly_p(int n, int k, double s, double log_scale) {
    // the prefactor alone can underflow while the polynomial is huge, so
    // carry the running sum with its own exponent
    double t = 1.0, sum = 1.0, shift = log_scale;
    for (int i = 0; i < n; ++i) {
        t *= double(n - i) * double(k + i + 1) / (double(i + 1) * double(i + 1)) * s;
        sum += t;
        if (sum > 1e200) {
            t *= 1e-200;
            sum *= 1e-200;
            shift += 200.0 * std::numbers::ln10;
        }
    }
    return sum * std::exp(shift);
}

}  // namespace

double g0(double a, double b, double gbar) {
    const double rho = (a - b) / 8.0;
    return 0.5 * (1.0 + gbar * rho / std::sqrt(gbar * gbar * rho * rho + 2.0 * gbar + 1.0));
}

std::vector<double> u_terms(double a, double b, double gbar, int count, const SeriesTruncation& tr, bool* converged) {
    tr.validate();
    const double D = 2.0 - b / 8.0 + 1.0 / gbar;
    const double r = a / (4.0 * D), s = b / (8.0 * D);
    std::vector<double> u(std::max(count, 0), 0.0);
    bool ok = true;
    for (int d = 0; d < count; ++d) {
        if (r <= 0.0) {
            u[d] = d == 0 ? 1.0 / (2.0 * gbar * D) : 0.0;
            continue;
        }
        double h = 0.0, prev = INFINITY, prev_q = 0.0;
        bool done = false;
        for (int n = 0; n < tr.max_terms; ++n) {
            const double term = poly_p(n, n + d, s, (n + d) * std::log(r) - n * std::numbers::ln2);
            h += term;
            // geometric tail bound; the term ratio creeps up towards its limit
            // roughly like q (1 - c/n), so extrapolate it before bounding
            if (n > 2 && term < prev) {
                const double q = term / prev;
                const double qh = q + std::max(q - prev_q, 0.0) * n;
                if (qh < 1.0 && term * qh / (1.0 - qh) <= tr.rel_tol * h) {
                    done = true;
                    break;
                }
                prev_q = q;
            }
            if (term == 0.0 && n > 0) {
                done = true;
                break;
            }
            prev = term;
        }
        if (!done) ok = false;
        u[d] = h / (2.0 * gbar * D);
    }
    if (converged) *converged = ok;
    return u;
}

double g1(double a, double b, double gbar, double T, const SeriesTruncation& tr, bool* converged) {
    // sum_d Q(d+1, 2T) u_d with u_d = alpha (1 - theta) theta^d
    const auto [l1, l2] = lambdas(a, b, gbar);
    const double alpha = l1 / (l1 - l2), theta = 1.0 - 1.0 / (2.0 * l1);
    double rem = 0.0;
    bool ok = false;
    double w = alpha * (1.0 - theta);
    for (int d = 0; d < tr.max_terms; ++d, w *= theta) {
        const double term = w * gamma_p_int(d + 1, 2.0 * T);
        rem += term;
        if (d > 2.0 * T && term <= tr.rel_tol * std::max(rem, 1e-300)) {
            ok = true;
            break;
        }
    }
    if (converged) *converged = ok;
    return std::max(alpha - rem, 0.0);
}

double g1_direct(double a, double b, double gbar, double T, int K) {
    const SeriesTruncation tr{std::max(K, 20000), 1e-15};
    const auto u = u_terms(a, b, gbar, K, tr);
    double s = 0.0;
    for (int d = 0; d < K; ++d) s += gamma_q_int(d + 1, 2.0 * T) * u[d];
    return s;
}

}  // namespace series

namespace {

using series::g0;

// Collapsed weights u_d(a, b) of one link with the tail sums available in
// closed form. The literal double series is used only by the tests.
struct Link {
    double alpha = 0.0, theta = 0.0, total = 0.0;

    Link(double a, double b, double gbar) {
        const double rho = (a - b) / 8.0;
        const double q = std::sqrt(gbar * gbar * rho * rho + 2.0 * gbar + 1.0);
        const double l1 = (gbar * rho + q) / 2.0, l2 = (gbar * rho - q) / 2.0;
        alpha = l1 / (l1 - l2);
        theta = 1.0 - 1.0 / (2.0 * l1);
        total = g0(a, b, gbar);
    }
    double u(int d) const { return alpha * (1.0 - theta) * std::pow(theta, d); }
    double tail(int d) const { return alpha * std::pow(theta, d); }  // sum_{j >= d} u_j
};

struct Acc {
    bool ok = true;
    int terms = 0;
    void note(bool c, int n) {
        ok = ok && c;
        terms = std::max(terms, n);
    }
};

// g1: probability mass beyond the threshold 2T in the collapsed index
double g1(const Link& L, double T, const SeriesTruncation& tr, Acc& acc) {
    double rem = 0.0;
    int d = 0;
    bool ok = false;
    for (; d < tr.max_terms; ++d) {
        const double term = L.u(d) * gamma_p_int(d + 1, 2.0 * T);
        rem += term;
        if (d > 2.0 * T && term <= tr.rel_tol * std::max(rem, 1e-300)) {
            ok = true;
            break;
        }
    }
    acc.note(ok, d + 1);
    return std::max(L.total - rem, 0.0);
}

// sum_d u_d P(d+1, 2T)
double single(const Link& L, double T, const SeriesTruncation& tr, Acc& acc) {
    return L.total - g1(L, T, tr, acc);
}

// sum_{d1} u_rd(d1) sum_{i1} C(d1+i1, i1) 2^{-d1-i1-1} P(d1+i1+1, 4T) tail_sd(i1)
double joint(const Link& rd, const Link& sd, double T, const SeriesTruncation& tr, Acc& acc) {
    const double y = 4.0 * T;
    double total = 0.0;
    bool ok = false;
    int used = 0;
    for (int d1 = 0; d1 < tr.max_terms; ++d1) {
        const double ud = rd.u(d1);
        double inner = 0.0;
        bool inner_ok = false;
        double lw = -(d1 + 1) * std::numbers::ln2;  // log of C(d1+i1, i1) 2^{-d1-i1-1}
        int i1 = 0;
        for (; i1 < tr.max_terms; ++i1) {
            if (i1 > 0) lw += std::log(double(d1 + i1) / i1) - std::numbers::ln2;
            const double p = gamma_p_int(d1 + i1 + 1, y);
            const double term = std::exp(lw) * p * sd.tail(i1);
            inner += term;
            if (i1 > d1 + 1 && (d1 + i1) > y && term <= tr.rel_tol * std::max(inner, 1e-300)) {
                inner_ok = true;
                break;
            }
            if (p == 0.0 && i1 > d1 + 1) {
                inner_ok = true;
                break;
            }
        }
        used = std::max(used, i1 + 1);
        if (!inner_ok) acc.note(false, i1);
        const double term = ud * inner;
        total += term;
        if (d1 > y && term <= tr.rel_tol * std::max(total, 1e-300)) {
            ok = true;
            used = std::max(used, d1 + 1);
            break;
        }
    }
    acc.note(ok, used);
    return total;
}

}  // namespace

PepResult pep_closed_form(const ConstellationSpec& spec, int p, int q, const PepTermsConfig& cfg) {
    cfg.validate();
    if (!spec.is_psk()) throw std::invalid_argument("pep_closed_form: M-PSK only");
    if (cfg.M != spec.M) throw std::invalid_argument("pep_closed_form: config M does not match constellation");
    if (p == q || p < 0 || q < 0 || p >= spec.M || q >= spec.M) throw std::out_of_range("pep_closed_form: bad symbol pair");

    const int M = spec.M;
    const cplx diff = spec.points[p] - spec.points[q];
    const cplx xb = diff / std::abs(diff);
    const double T = cfg.T / std::abs(diff);
    const double e = cfg.eps, w = cfg.eps / (M - 1);
    const auto& tr = cfg.truncation;

    auto bc = [&](int i) {
        const double r = std::real(std::conj(spec.points[i]) * xb);
        return std::pair{4.0 + 4.0 * r, 4.0 - 4.0 * r};
    };
    const auto [bp, cp] = bc(p);

    Acc acc;
    const Link sd_bc(bp, cp, cfg.gamma_sd), sd_cb(cp, bp, cfg.gamma_sd);
    const Link rd_bc(bp, cp, cfg.gamma_rd), rd_cb(cp, bp, cfg.gamma_rd);

    const double pe1 = 1.0 - g1(sd_bc, T, tr, acc);
    const double pe2 = (1.0 - e) * g1(rd_cb, T, tr, acc);
    const double pe4 = g1(sd_cb, T, tr, acc);
    const double pe5 = (1.0 - e) * g1(rd_bc, T, tr, acc);
    const double pe7 = (1.0 - e) * joint(rd_bc, sd_cb, T, tr, acc);
    const double pe8 = (1.0 - e) * (single(rd_cb, T, tr, acc) - joint(rd_cb, sd_bc, T, tr, acc));

    double pe3 = 0.0, pe6 = 0.0, pe9 = 0.0, pe10 = 0.0;
    for (int i = 0; i < M; ++i) {
        if (i == p) continue;
        const auto [bi, ci] = bc(i);
        const Link ri_bc(bi, ci, cfg.gamma_rd), ri_cb(ci, bi, cfg.gamma_rd);
        pe3 += g1(ri_cb, T, tr, acc);
        pe6 += g1(ri_bc, T, tr, acc);
        pe9 += joint(ri_bc, sd_cb, T, tr, acc);
        pe10 += single(ri_cb, T, tr, acc) - joint(ri_cb, sd_bc, T, tr, acc);
    }
    pe3 *= w;
    pe6 *= w;
    pe9 *= w;
    pe10 *= w;

    PepResult r;
    r.terms = {pe1, pe2, pe3, pe4, pe5, pe6, pe7, pe8, pe9, pe10};
    r.value = pe1 * (pe2 + pe3) + pe4 * (pe5 + pe6) + pe7 + pe8 + pe9 + pe10;
    r.converged = acc.ok;
    r.max_terms_used = acc.terms;
    if (!acc.ok) r.warnings.push_back("series truncated at max_terms before reaching rel_tol");
    return r;
}

namespace {

// (1/gbar) int_0^inf f(g) e^{-g/gbar} dg written with g = gbar v^2, as
// int_0^inf h(v) dv. Both integrands below change fastest near v = |c|/(m sqrt gbar)
// and where the mean crosses c, so those are used as breakpoints.
double v_average(const std::function<double(double)>& h, double c, double z, double m, double gbar,
                 const QuadratureTolerance& tol, bool& ok) {
    std::vector<double> cuts;
    if (c != 0.0) cuts.push_back(std::fabs(c) / (m * std::sqrt(gbar)));
    if (z != 0.0 && c / z > 0.0) cuts.push_back(std::sqrt(c / (z * gbar)));
    std::sort(cuts.begin(), cuts.end());
    double v = 0.0, lo = 0.0;
    for (double cut : cuts) {
        if (cut <= lo) continue;
        const auto r = integrate(h, lo, cut, tol);
        ok = ok && r.ok;
        v += r.value;
        lo = cut;
    }
    const auto r = integrate_half_line([&](double x) { return h(lo + x); }, tol);
    ok = ok && r.ok;
    return v + r.value;
}

// Average of Q((c - z g)/(m sqrt g)) over g ~ Exp(mean gbar)
double avg_q(double c, double z, double m, double gbar, const QuadratureTolerance& tol, bool& ok) {
    const double sg = std::sqrt(gbar);
    auto h = [&](double v) {
        if (v <= 0.0) return 0.0;
        return 2.0 * v * std::exp(-v * v) * q_function((c - z * gbar * v * v) / (m * sg * v));
    };
    return v_average(h, c, z, m, gbar, tol, ok);
}

// Average of the N(z g, m^2 g) density at w; the 1/sqrt(g) factor cancels
// against dg so the integrand stays bounded.
double avg_pdf(double w, double z, double m, double gbar, const QuadratureTolerance& tol, bool& ok) {
    const double sg = std::sqrt(gbar);
    const double k = 2.0 / (m * sg * std::sqrt(2.0 * std::numbers::pi));
    auto h = [&](double v) {
        if (v <= 0.0) return 0.0;
        const double u = (w - z * gbar * v * v) / (m * sg * v);
        return k * std::exp(-0.5 * u * u - v * v);
    };
    return v_average(h, w, z, m, gbar, tol, ok);
}

}  // namespace

PepResult pep_quadrature_approx(const ConstellationSpec& spec, int p, int q, const PepTermsConfig& cfg) {
    cfg.validate();
    if (!spec.is_psk()) throw std::invalid_argument("pep_quadrature_approx: M-PSK only");
    if (cfg.M != spec.M) throw std::invalid_argument("pep_quadrature_approx: config M does not match constellation");
    if (p == q || p < 0 || q < 0 || p >= spec.M || q >= spec.M) throw std::out_of_range("pep_quadrature_approx: bad symbol pair");

    // Statistics written for the transmitted symbol s against the competitor
    // c with xbar = x_c - x_s, so an error is a positive sum.
    const int M = spec.M;
    const int s = p;
    const cplx xb = spec.points[q] - spec.points[s];
    const double m = std::abs(xb);
    const double T = cfg.T;
    const auto& tol = cfg.quadrature;
    auto z = [&](int i) { return std::real(spec.points[i] * std::conj(xb)); };
    const double zs = z(s);
    std::vector<double> wts(M, cfg.eps / (M - 1));
    wts[s] = 1.0 - cfg.eps;

    bool ok = true;
    const double A = avg_q(T, zs, m, cfg.gamma_sd, tol, ok);
    const double B = avg_q(-T, zs, m, cfg.gamma_sd, tol, ok);
    double r1 = 0.0, r2 = 0.0;
    for (int i = 0; i < M; ++i) {
        r1 += wts[i] * avg_q(T, -z(i), m, cfg.gamma_rd, tol, ok);
        r2 += wts[i] * avg_q(T, z(i), m, cfg.gamma_rd, tol, ok);
    }
    const double I1 = r1 * A;
    const double I2 = r2 * B;

    // Middle region: relay statistic inside (-T, T), direct statistic beyond -w.
    QuadratureTolerance inner = tol;
    auto integrand = [&](double wv) {
        double pd = 0.0;
        for (int i = 0; i < M; ++i) pd += wts[i] * avg_pdf(wv, z(i), m, cfg.gamma_rd, inner, ok);
        return pd * avg_q(-wv, zs, m, cfg.gamma_sd, inner, ok);
    };
    QuadratureTolerance outer = tol;
    outer.rel_tol = std::max(tol.rel_tol, 1e-7);
    const auto lo = integrate(integrand, -T, 0.0, outer);
    const auto hi = integrate(integrand, 0.0, T, outer);
    ok = ok && lo.ok && hi.ok;
    const double I3 = lo.value, I4 = hi.value;

    PepResult r;
    r.terms = {I1, I2, I3, I4};
    r.value = I1 + I2 + I3 + I4;
    r.converged = ok;
    if (!ok) r.warnings.push_back("quadrature did not reach the requested tolerance");
    return r;
}

PepResult ser_nearest_neighbor(const ConstellationSpec& spec, const PepFn& pep, const PepTermsConfig& cfg) {
    PepResult out;
    out.value = 0.0;
    for (int j : nearest_neighbors(spec, 0)) {
        const auto r = pep(spec, 0, j, cfg);
        out.value += r.value;
        out.converged = out.converged && r.converged;
        out.max_terms_used = std::max(out.max_terms_used, r.max_terms_used);
        out.warnings.insert(out.warnings.end(), r.warnings.begin(), r.warnings.end());
    }
    return out;
}

namespace {

struct AsymGeometry {
    double A, B, beta;
};

AsymGeometry asym_geometry(const ConstellationSpec& spec, int p, int q) {
    if (p == q || p < 0 || q < 0 || p >= spec.M || q >= spec.M) throw std::out_of_range("asymptotic PEP: bad symbol pair");
    const cplx diff = spec.points[p] - spec.points[q];
    const cplx xb = diff / std::abs(diff);
    const double beta = 2.0 * std::real(std::conj(spec.points[p]) * xb);
    return {2.0 - beta, 2.0 + beta, beta};
}

double safe_log(double x) { return x > 0.0 ? std::log(x) : -INFINITY; }

}  // namespace

PepResult pep_asymptotic_multirelay(const ConstellationSpec& spec, int p, int q, int N, double gamma_bar,
                                    const SeriesTruncation& tr) {
    tr.validate();
    if (!spec.is_psk()) throw std::invalid_argument("pep_asymptotic_multirelay: M-PSK only");
    if (N < 0) throw std::domain_error("pep_asymptotic_multirelay: N must be >= 0");
    if (!(gamma_bar > 0.0) || !std::isfinite(gamma_bar)) throw std::domain_error("pep_asymptotic_multirelay: gamma_bar must be positive");
    const auto g = asym_geometry(spec, p, q);
    const double c = 1.5 - g.beta / 4.0;
    const double lA = safe_log(g.A), lB = safe_log(g.B), lden = std::log(1.0 / gamma_bar + c);
    const double ln2 = std::numbers::ln2;

    double total = 0.0, prev_slice = INFINITY;
    bool ok = false;
    int k = 0;
    for (; k < tr.max_terms; ++k) {
        if (k > 0 && lA == -INFINITY) {
            ok = true;
            break;
        }
        double slice = 0.0;
        for (int n = 0; n <= k + N; ++n) {
            for (int i = 0; i <= n; ++i) {
                if (i > 0 && lB == -INFINITY) break;
                const double lt = (k ? k * lA : 0.0) + (i ? i * lB : 0.0) + log_binomial(N + n, n - i) -
                                  (N + n + k + 2 * i + 1) * ln2 - log_factorial(k) - log_factorial(i) +
                                  log_factorial(N + k + i) - (N + k + i + 1) * lden;
                slice += std::exp(lt);
            }
        }
        total += slice;
        if (k > N + 2 && slice < prev_slice && slice <= tr.rel_tol * total) {
            ok = true;
            break;
        }
        prev_slice = slice;
    }
    PepResult r;
    r.value = total * std::exp(-log_factorial(N) - (N + 1) * std::log(gamma_bar));
    r.converged = ok;
    r.max_terms_used = k + 1;
    if (!ok) r.warnings.push_back("asymptotic series truncated at max_terms before reaching rel_tol");
    return r;
}

PepResult pep_asymptotic_conditional(const ConstellationSpec& spec, int p, int q, int N, double gamma_t,
                                     const SeriesTruncation& tr) {
    tr.validate();
    if (!spec.is_psk()) throw std::invalid_argument("pep_asymptotic_conditional: M-PSK only");
    if (N < 0) throw std::domain_error("pep_asymptotic_conditional: N must be >= 0");
    if (!(gamma_t >= 0.0) || !std::isfinite(gamma_t)) throw std::domain_error("pep_asymptotic_conditional: gamma_t must be >= 0");
    const auto g = asym_geometry(spec, p, q);
    double total = 0.0, prev_slice = INFINITY;
    bool ok = false;
    int k = 0;
    double ak = 1.0;  // (A gamma_t)^k / k!
    for (; k < tr.max_terms; ++k) {
        if (k > 0) ak *= g.A * gamma_t / k;
        double slice = 0.0;
        for (int n = 0; n <= k + N; ++n)
            slice += ak * std::ldexp(laguerre_generalized(N, n, -g.B * gamma_t / 4.0), -(N + n + k + 1));
        total += slice;
        if ((k > N + 2 || gamma_t == 0.0) && slice <= prev_slice && slice <= tr.rel_tol * total) {
            ok = true;
            break;
        }
        if (gamma_t == 0.0 || g.A == 0.0) {
            ok = true;
            break;
        }
        prev_slice = slice;
    }
    PepResult r;
    r.value = std::exp((g.beta / 4.0 - 1.5) * gamma_t) * total;
    r.converged = ok;
    r.max_terms_used = k + 1;
    if (!ok) r.warnings.push_back("conditional series truncated at max_terms before reaching rel_tol");
    return r;
}

SlopeFit fit_diversity_slope(const SerCurve& curve, double lo_db, double hi_db, double max_rel_halfwidth) {
    SlopeFit fit;
    std::vector<double> xs, ys;
    int rejected = 0;
    for (const auto& pt : curve.points) {
        if (pt.snr_db < lo_db - 1e-9 || pt.snr_db > hi_db + 1e-9) continue;
        if (pt.failed || !(pt.ser > 0.0)) {
            ++rejected;
            continue;
        }
        if (curve.source == "mc" && (pt.ci_high - pt.ci_low) / 2.0 >= max_rel_halfwidth * pt.ser) {
            ++rejected;
            continue;
        }
        xs.push_back(pt.snr_db / 10.0);
        ys.push_back(std::log10(pt.ser));
    }
    fit.points = int(xs.size());
    if (xs.size() < 3) {
        std::ostringstream os;
        os << "fewer than 3 usable points in [" << lo_db << ", " << hi_db << "] dB (" << rejected
           << " rejected for zero SER or a confidence half-width at or above " << max_rel_halfwidth * 100 << "%)";
        fit.diagnostic = os.str();
        return fit;
    }
    const double n = double(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx <= 0.0) {
        fit.diagnostic = "all usable points share one SNR";
        return fit;
    }
    const double b = sxy / sxx;
    fit.ok = true;
    fit.slope = -b;
    fit.intercept = my - b * mx;
    return fit;
}

}  // namespace dfr
