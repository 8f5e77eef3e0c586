#pragma once

#include "dfrelay/constellation.hpp"

namespace dfr {

struct DiffState {
    cplx prev_v{1.0, 0.0};
    double prev_x_mag = 1.0;
};

// v[n] = v[n-1] x[n]; x must be unit modulus.
cplx encode_psk(DiffState& state, cplx x);

// v[n] = v[n-1] x[n] / |x[n-1]|, with |x[0]| taken as 1.
cplx encode_qam(DiffState& state, cplx x);

cplx encode(DiffState& state, cplx x, ConstellationKind kind);

}  // namespace dfr
