#pragma once

#include <complex>
#include <iosfwd>
#include <string>
#include <vector>

namespace dfr {

using cplx = std::complex<double>;

enum class ConstellationKind { PSK, QAM };

std::string to_string(ConstellationKind k);
ConstellationKind constellation_kind_from_string(const std::string& s);

// Symbol alphabet. Indices are zero-based: points[0] is x_1 in the usual
// one-based notation.
struct ConstellationSpec {
    ConstellationKind kind = ConstellationKind::PSK;
    int M = 0;
    std::vector<cplx> points;
    std::vector<std::vector<int>> neighbor_pairs;

    bool is_psk() const { return kind == ConstellationKind::PSK; }
};

ConstellationSpec make_psk(int M);

// 16/64 square grids, 8 as a 4x2 rectangle, 32 as the 6x6 cross.
ConstellationSpec make_qam(int M);

ConstellationSpec make_constellation(ConstellationKind kind, int M);

std::vector<int> nearest_neighbors(const ConstellationSpec& spec, int index);

void write_points_csv(const ConstellationSpec& spec, std::ostream& os);

}  // namespace dfr
