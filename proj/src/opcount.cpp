#include "dfrelay/decoders.hpp"
#include "dfrelay/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dfr {

namespace {

thread_local int64_t g_ops = 0;

struct R {
    double v;
};
R operator+(R a, R b) { ++g_ops; return {a.v + b.v}; }
R operator-(R a, R b) { ++g_ops; return {a.v - b.v}; }
R operator*(R a, R b) { ++g_ops; return {a.v * b.v}; }
R operator/(R a, R b) { ++g_ops; return {a.v / b.v}; }
bool less(R a, R b) { ++g_ops; return a.v < b.v; }
R rmax(R a, R b) { return less(a, b) ? b : a; }
R rmin(R a, R b) { return less(b, a) ? b : a; }
R rlog(R a) { return {std::log(a.v)}; }

struct C {
    R re, im;
};
C cmul(C a, C b) { return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re}; }
C csub(C a, C b) { return {a.re - b.re, a.im - b.im}; }
C cconj(C a) { return {a.re, {-a.im.v}}; }
R cnorm(C a) { return a.re * a.re + a.im * a.im; }
R re_mul(C a, C b) { return a.re * b.re - a.im * b.im; }
C lift(cplx z) { return {{z.real()}, {z.imag()}}; }

int literal_ml(const DestObservation& obs, const ConstellationSpec& spec, double eps) {
    const int M = spec.M;
    const C sp = lift(obs.sd.prev), sc = lift(obs.sd.curr);
    const C rp = lift(obs.rd[0].prev), rc = lift(obs.rd[0].curr);
    const R nsd{obs.sd.noise_var}, nrd{obs.rd[0].noise_var};
    const R one{1.0}, two{2.0}, two_pi{2.0 * std::numbers::pi}, e{eps}, m{double(M)};
    R best{-INFINITY};
    int arg = 0;
    for (int k = 0; k < M; ++k) {
        const C x = lift(spec.points[k]);
        // direct link: |y[n] - y[n-1] x|^2 / (2 N) and ln(2 pi N)
        const R esd = cnorm(csub(sc, cmul(sp, x))) / (two * nsd);
        const R lsd = rlog(two_pi * nsd);
        // relay link mixture weights
        const R w_own = one - e;
        const R w_other = e / (m - one);
        R s{0.0};
        for (int i = 0; i < M; ++i) {
            const R ei = cnorm(csub(rc, cmul(rp, lift(spec.points[i])))) / (two * nrd);
            const R g{std::exp(-ei.v)};
            s = s + (i == k ? w_own : w_other) * g;
        }
        const R obj = rlog(s) - esd - lsd;
        if (less(best, obj)) {
            best = obj;
            arg = k;
        }
    }
    return arg;
}

int literal_pl(const DestObservation& obs, const ConstellationSpec& spec, double eps) {
    const int M = spec.M;
    const C sp = lift(obs.sd.prev), sc = lift(obs.sd.curr);
    const C rp = lift(obs.rd[0].prev), rc = lift(obs.rd[0].curr);
    const R nsd{obs.sd.noise_var}, nrd{obs.rd[0].noise_var};
    const R one{1.0}, e{eps}, m{double(M)}, zero{0.0}, minus_one{-1.0};
    int champ = 0;
    for (int l = 1; l < M; ++l) {
        const C xp = lift(spec.points[champ]), xq = lift(spec.points[l]);
        const R t0 = re_mul(cmul(cconj(sc), sp), csub(xp, xq)) / nsd;
        const R t = re_mul(cmul(cconj(rc), rp), csub(xp, xq)) / nrd;
        const R T = rlog((m - one) * (one - e) / e);
        const R clipped = rmin(rmax(t, minus_one * T), T);
        const R lam = t0 + clipped;
        if (less(lam, zero)) champ = l;
    }
    return champ;
}

}  // namespace

int literal_decode_psk(DecoderKind kind, const DestObservation& obs, const ConstellationSpec& spec, double eps,
                       int64_t* ops) {
    if (!spec.is_psk()) throw std::invalid_argument("literal_decode_psk: PSK constellation required");
    if (obs.relays() != 1) throw std::invalid_argument("literal_decode_psk: single relay only");
    if (!(eps > 0.0 && eps < 1.0)) throw std::domain_error("literal_decode_psk: eps must lie in (0, 1)");
    g_ops = 0;
    const int d = kind == DecoderKind::PL ? literal_pl(obs, spec, eps) : literal_ml(obs, spec, eps);
    if (ops) *ops = g_ops;
    return d;
}

int64_t count_ops(DecoderKind kind, int M) {
    if (M < 2) throw std::domain_error("count_ops: M must be >= 2");
    if (kind != DecoderKind::ML && kind != DecoderKind::PL) throw std::invalid_argument("count_ops: ML or PL only");
    const auto spec = make_psk(M);
    RandomStream rng(derive_key(7, uint64_t(M)), 0, 0);
    DestObservation obs;
    obs.sd = {rng.cnormal(1.0), rng.cnormal(1.0), 0.1};
    obs.rd = {{rng.cnormal(1.0), rng.cnormal(1.0), 0.1}};
    int64_t ops = 0;
    literal_decode_psk(kind, obs, spec, 0.01, &ops);
    return ops;
}

}  // namespace dfr
