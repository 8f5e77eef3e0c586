#include "dfrelay/diffmod.hpp"

#include <cmath>
#include <stdexcept>

namespace dfr {

cplx encode_psk(DiffState& state, cplx x) {
    if (std::fabs(std::abs(x) - 1.0) > 1e-9) throw std::domain_error("encode_psk: symbol is not unit modulus");
    state.prev_v *= x;
    return state.prev_v;
}

cplx encode_qam(DiffState& state, cplx x) {
    const double mag = std::abs(x);
    if (!(mag > 0.0)) throw std::domain_error("encode_qam: zero-magnitude symbol");
    state.prev_v *= x / state.prev_x_mag;
    state.prev_x_mag = mag;
    return state.prev_v;
}

cplx encode(DiffState& state, cplx x, ConstellationKind kind) {
    return kind == ConstellationKind::PSK ? encode_psk(state, x) : encode_qam(state, x);
}

}  // namespace dfr
