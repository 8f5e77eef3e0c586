#include "dfrelay/channel.hpp"

#include <cmath>
#include <stdexcept>

namespace dfr {

double LinkParams::avg_snr_db() const { return 10.0 * std::log10(avg_snr()); }

void LinkParams::validate() const {
    if (!(sigma2 > 0.0)) throw std::domain_error("link: sigma2 must be > 0");
    if (!(noise_var > 0.0)) throw std::domain_error("link: noise_var must be > 0");
    if (coherence_len < 2) throw std::domain_error("link: coherence_len must be >= 2");
}

LinkParams LinkParams::from_snr_db(double snr_db, int coherence_len) {
    LinkParams l;
    l.sigma2 = 1.0;
    l.noise_var = std::pow(10.0, -snr_db / 10.0);
    l.coherence_len = coherence_len;
    return l;
}

void TopologyParams::validate() const {
    if (source_relay.size() != relay_dest.size()) throw std::domain_error("topology: relay link lists differ in length");
    source_dest.validate();
    for (const auto& l : source_relay) l.validate();
    for (const auto& l : relay_dest) l.validate();
}

cplx draw_block_gain(const LinkParams& link, RandomStream& rng) { return rng.cnormal(link.sigma2); }

cplx transmit(cplx h, cplx v, double noise_var, RandomStream& rng, bool zero_noise) {
    if (zero_noise) return h * v;
    return h * v + rng.cnormal(noise_var);
}

}  // namespace dfr
