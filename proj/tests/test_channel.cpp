#include "dfrelay/channel.hpp"
#include "dfrelay/diffmod.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

using namespace dfr;

TEST_CASE("link parameters") {
    auto l = LinkParams::from_snr_db(20.0);
    CHECK(l.avg_snr() == doctest::Approx(100.0));
    CHECK(l.avg_snr_db() == doctest::Approx(20.0));
    CHECK(l.coherence_len == 65);
    CHECK_NOTHROW(l.validate());
    l.coherence_len = 1;
    CHECK_THROWS_AS(l.validate(), std::domain_error);
    CHECK_THROWS_AS((LinkParams{0.0, 1.0, 4}.validate()), std::domain_error);
    CHECK_THROWS_AS((LinkParams{1.0, -1.0, 4}.validate()), std::domain_error);

    TopologyParams t;
    t.source_dest = LinkParams::from_snr_db(10);
    t.source_relay = {LinkParams::from_snr_db(10)};
    CHECK_THROWS_AS(t.validate(), std::domain_error);
    t.relay_dest = {LinkParams::from_snr_db(10)};
    CHECK_NOTHROW(t.validate());
    CHECK(t.relays() == 1);
}

TEST_CASE("gain statistics") {
    RandomStream rng(derive_key(7, 1), 1, 0);
    LinkParams unit{1.0, 1.0, 65};
    double acc = 0.0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) acc += std::norm(draw_block_gain(unit, rng));
    CHECK(std::fabs(acc / n - 1.0) < 0.01);

    LinkParams tiny{1e-30, 1.0, 65};
    CHECK(std::norm(draw_block_gain(tiny, rng)) < 1e-25);

    // |h|^2/N against the exponential law with mean gbar
    auto link = LinkParams::from_snr_db(12.0);
    const double gbar = link.avg_snr();
    std::vector<double> g(100000);
    for (auto& x : g) x = std::norm(draw_block_gain(link, rng)) / link.noise_var;
    std::sort(g.begin(), g.end());
    double ks = 0.0;
    for (size_t i = 0; i < g.size(); ++i) {
        const double F = 1.0 - std::exp(-g[i] / gbar);
        ks = std::max({ks, std::fabs(F - double(i) / g.size()), std::fabs(F - double(i + 1) / g.size())});
    }
    CHECK(ks < 0.01);
}

TEST_CASE("transmit") {
    RandomStream rng(derive_key(8, 2), 2, 0);
    const cplx h(0.3, -1.1), v(0.6, 0.8);
    CHECK(transmit(h, v, 0.5, rng, true) == h * v);

    const double nv = 0.25;
    const int n = 100000;
    cplx mean = 0.0;
    double pow = 0.0;
    for (int i = 0; i < n; ++i) {
        const cplx y = transmit(h, cplx(0, 0), nv, rng);
        mean += y;
        pow += std::norm(y);
    }
    CHECK(pow / n == doctest::Approx(nv).epsilon(0.02));
    CHECK(std::abs(mean / double(n)) < 3.0 * std::sqrt(nv / n) * 1.5);

    cplx m2 = 0.0;
    for (int i = 0; i < n; ++i) m2 += transmit(h, v, nv, rng);
    m2 /= double(n);
    const double se = std::sqrt(nv / 2 / n);
    CHECK(std::fabs(m2.real() - (h * v).real()) < 3 * se);
    CHECK(std::fabs(m2.imag() - (h * v).imag()) < 3 * se);
}

TEST_CASE("differential noise has twice the variance") {
    auto spec = make_psk(4);
    RandomStream rng(derive_key(9, 3), 3, 0);
    const double nv = 0.1;
    const int n = 1000000;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const cplx x = spec.points[rng.below(4)];
        const cplx e0 = transmit(0.0, 1.0, nv, rng), e1 = transmit(0.0, 1.0, nv, rng);
        acc += std::norm(e1 - e0 * x);
    }
    CHECK(acc / n == doctest::Approx(2 * nv).epsilon(0.02));
}

TEST_CASE("streams are reproducible") {
    LinkParams l{1.0, 1.0, 8};
    RandomStream a(derive_key(42, 5), 1, 17), b(derive_key(42, 5), 1, 17);
    for (int i = 0; i < 20; ++i) CHECK(draw_block_gain(l, a) == draw_block_gain(l, b));
}
