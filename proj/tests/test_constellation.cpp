#include "dfrelay/constellation.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

using namespace dfr;

namespace {

double mean_energy(const ConstellationSpec& c) {
    double e = 0.0;
    for (auto p : c.points) e += std::norm(p);
    return e / c.points.size();
}

// exhaustive scan, kept separate from the library's neighbor table
std::vector<int> scan_neighbors(const ConstellationSpec& c, int p) {
    double best = INFINITY;
    for (int i = 0; i < c.M; ++i)
        if (i != p) best = std::min(best, std::abs(c.points[i] - c.points[p]));
    std::vector<int> out;
    for (int i = 0; i < c.M; ++i)
        if (i != p && std::abs(c.points[i] - c.points[p]) <= best * (1 + 1e-9)) out.push_back(i);
    return out;
}

}  // namespace

TEST_CASE("psk alphabets") {
    auto b = make_psk(2);
    REQUIRE(b.M == 2);
    CHECK(std::abs(b.points[0] - cplx(1, 0)) < 1e-15);
    CHECK(std::abs(b.points[1] - cplx(-1, 0)) < 1e-15);

    auto q = make_psk(4);
    const cplx want[] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    for (int i = 0; i < 4; ++i) CHECK(std::abs(q.points[i] - want[i]) < 1e-15);

    for (int M : {2, 3, 4, 8, 16, 32, 64}) {
        auto c = make_psk(M);
        CHECK(c.is_psk());
        CHECK(c.points[0] == cplx(1, 0));
        for (auto p : c.points) CHECK(std::abs(p) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(mean_energy(c) == doctest::Approx(1.0).epsilon(1e-14));
        // group property: products stay in the alphabet
        for (auto a : c.points)
            for (auto d : c.points) {
                const cplx prod = a * d;
                CHECK(std::any_of(c.points.begin(), c.points.end(), [&](cplx p) { return std::abs(p - prod) < 1e-12; }));
            }
    }
    CHECK_THROWS_AS(make_psk(1), std::domain_error);
    CHECK_THROWS_AS(make_psk(0), std::domain_error);
}

TEST_CASE("qam alphabets") {
    auto c = make_qam(16);
    REQUIRE(c.M == 16);
    CHECK_FALSE(c.is_psk());
    const double s = 1.0 / std::sqrt(10.0);
    for (int re : {-3, -1, 1, 3})
        for (int im : {-3, -1, 1, 3}) {
            const cplx want(re * s, im * s);
            CHECK(std::any_of(c.points.begin(), c.points.end(), [&](cplx p) { return std::abs(p - want) < 1e-14; }));
        }
    for (int M : {8, 16, 32, 64}) {
        auto q = make_qam(M);
        CHECK(int(q.points.size()) == M);
        CHECK(std::fabs(mean_energy(q) - 1.0) < 1e-12);
        for (int i = 0; i < M; ++i)
            for (int j = i + 1; j < M; ++j) CHECK(std::abs(q.points[i] - q.points[j]) > 1e-6);
    }
    // 32-point cross: 6x6 grid without its corners, so 4 energy rings beyond the inner ones
    auto x = make_qam(32);
    double emax = 0.0;
    for (auto p : x.points) emax = std::max(emax, std::norm(p));
    CHECK(emax / mean_energy(x) == doctest::Approx(34.0 / 20.0).epsilon(1e-12));
    for (int M : {2, 4, 12, 128}) CHECK_THROWS_AS(make_qam(M), std::domain_error);
}

TEST_CASE("nearest neighbors") {
    auto q = make_psk(4);
    CHECK(nearest_neighbors(q, 0) == std::vector<int>{1, 3});
    CHECK(nearest_neighbors(make_psk(2), 0) == std::vector<int>{1});
    for (int M : {8, 32}) CHECK(nearest_neighbors(make_psk(M), 0) == std::vector<int>{1, M - 1});

    auto c = make_qam(16);
    for (int p = 0; p < 16; ++p) CHECK(nearest_neighbors(c, p) == scan_neighbors(c, p));
    int corner = 0;
    for (int p = 0; p < 16; ++p)
        if (std::norm(c.points[p]) > std::norm(c.points[corner])) corner = p;
    CHECK(nearest_neighbors(c, corner).size() == 2);

    for (auto spec : {make_psk(8), make_qam(8), make_qam(32), make_qam(64)})
        for (int i = 0; i < spec.M; ++i) {
            CHECK(nearest_neighbors(spec, i) == scan_neighbors(spec, i));
            for (int j : nearest_neighbors(spec, i)) {
                auto back = nearest_neighbors(spec, j);
                CHECK(std::find(back.begin(), back.end(), i) != back.end());
            }
        }
    CHECK_THROWS(nearest_neighbors(q, 4));
    CHECK_THROWS(nearest_neighbors(q, -1));
}

TEST_CASE("points export") {
    std::ostringstream os;
    write_points_csv(make_psk(4), os);
    std::istringstream is(os.str());
    std::string line;
    int rows = 0;
    while (std::getline(is, line))
        if (!line.empty()) ++rows;
    CHECK(rows >= 4);
    CHECK(os.str().find("index") != std::string::npos);
}

TEST_CASE("kind strings") {
    CHECK(constellation_kind_from_string(to_string(ConstellationKind::PSK)) == ConstellationKind::PSK);
    CHECK(constellation_kind_from_string(to_string(ConstellationKind::QAM)) == ConstellationKind::QAM);
    CHECK_THROWS_AS(constellation_kind_from_string("ask"), std::invalid_argument);
}
