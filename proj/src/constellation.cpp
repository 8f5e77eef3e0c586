#include "dfrelay/constellation.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace dfr {

std::string to_string(ConstellationKind k) { return k == ConstellationKind::PSK ? "psk" : "qam"; }

ConstellationKind constellation_kind_from_string(const std::string& s) {
    if (s == "psk" || s == "PSK") return ConstellationKind::PSK;
    if (s == "qam" || s == "QAM") return ConstellationKind::QAM;
    throw std::invalid_argument("unknown constellation kind: " + s);
}

namespace {

void fill_neighbors(ConstellationSpec& c) {
    c.neighbor_pairs.assign(c.M, {});
    for (int p = 0; p < c.M; ++p) {
        double best = INFINITY;
        for (int i = 0; i < c.M; ++i)
            if (i != p) best = std::min(best, std::abs(c.points[i] - c.points[p]));
        // ties within a relative 1e-9 all count as nearest
        for (int i = 0; i < c.M; ++i)
            if (i != p && std::abs(c.points[i] - c.points[p]) <= best * (1.0 + 1e-9))
                c.neighbor_pairs[p].push_back(i);
    }
}

}  // namespace

ConstellationSpec make_psk(int M) {
    if (M < 2) throw std::domain_error("make_psk: M must be >= 2");
    ConstellationSpec c;
    c.kind = ConstellationKind::PSK;
    c.M = M;
    c.points.reserve(M);
    c.points.emplace_back(1.0, 0.0);
    for (int k = 1; k < M; ++k) c.points.push_back(std::polar(1.0, 2.0 * std::numbers::pi * k / M));
    fill_neighbors(c);
    return c;
}

ConstellationSpec make_qam(int M) {
    std::vector<cplx> pts;
    auto grid = [&pts](int nx, int ny) {
        for (int iy = 0; iy < ny; ++iy)
            for (int ix = 0; ix < nx; ++ix) pts.emplace_back(2.0 * ix - (nx - 1), 2.0 * iy - (ny - 1));
    };
    switch (M) {
        case 8: grid(4, 2); break;
        case 16: grid(4, 4); break;
        case 64: grid(8, 8); break;
        case 32:
            grid(6, 6);
            std::erase_if(pts, [](cplx p) { return std::fabs(p.real()) == 5.0 && std::fabs(p.imag()) == 5.0; });
            break;
        default: throw std::domain_error("make_qam: supported sizes are 8, 16, 32, 64");
    }
    double e = 0.0;
    for (auto p : pts) e += std::norm(p);
    const double s = std::sqrt(pts.size() / e);
    for (auto& p : pts) p *= s;

    ConstellationSpec c;
    c.kind = ConstellationKind::QAM;
    c.M = M;
    c.points = std::move(pts);
    fill_neighbors(c);
    return c;
}

ConstellationSpec make_constellation(ConstellationKind kind, int M) {
    return kind == ConstellationKind::PSK ? make_psk(M) : make_qam(M);
}

std::vector<int> nearest_neighbors(const ConstellationSpec& spec, int index) {
    if (index < 0 || index >= spec.M) throw std::out_of_range("nearest_neighbors: bad index");
    return spec.neighbor_pairs[index];
}

void write_points_csv(const ConstellationSpec& spec, std::ostream& os) {
    os << "index,re,im\n";
    os.precision(17);
    for (int i = 0; i < spec.M; ++i) os << i << ',' << spec.points[i].real() << ',' << spec.points[i].imag() << '\n';
}

}  // namespace dfr
