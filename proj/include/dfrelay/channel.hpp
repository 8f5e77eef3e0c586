#pragma once

#include "dfrelay/constellation.hpp"
#include "dfrelay/rng.hpp"

#include <vector>

namespace dfr {

struct LinkParams {
    double sigma2 = 1.0;
    double noise_var = 1.0;
    int coherence_len = 65;

    double avg_snr() const { return sigma2 / noise_var; }
    double avg_snr_db() const;
    void validate() const;

    static LinkParams from_snr_db(double snr_db, int coherence_len = 65);
};

struct TopologyParams {
    LinkParams source_dest;
    std::vector<LinkParams> source_relay;
    std::vector<LinkParams> relay_dest;

    int relays() const { return static_cast<int>(relay_dest.size()); }
    void validate() const;
};

// h ~ CN(0, sigma2)
cplx draw_block_gain(const LinkParams& link, RandomStream& rng);

// y = h v + e, e ~ CN(0, noise_var); zero_noise drops e.
cplx transmit(cplx h, cplx v, double noise_var, RandomStream& rng, bool zero_noise = false);

}  // namespace dfr
