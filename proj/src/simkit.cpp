#include "dfrelay/simkit.hpp"
#include "dfrelay/diffmod.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

namespace dfr {

std::string to_string(SnrTying t) {
    switch (t) {
        case SnrTying::all_equal: return "all_equal";
        case SnrTying::sr_infinite: return "sr_infinite";
        case SnrTying::custom: return "custom";
    }
    return "?";
}

SnrTying snr_tying_from_string(const std::string& s) {
    if (s == "all_equal") return SnrTying::all_equal;
    if (s == "sr_infinite") return SnrTying::sr_infinite;
    if (s == "custom") return SnrTying::custom;
    throw std::invalid_argument("unknown SNR tying rule: " + s);
}

std::string to_string(SrInfiniteEps e) { return e == SrInfiniteEps::configured ? "configured" : "zero"; }

SrInfiniteEps sr_infinite_eps_from_string(const std::string& s) {
    if (s == "configured") return SrInfiniteEps::configured;
    if (s == "zero") return SrInfiniteEps::zero;
    throw std::invalid_argument("unknown sr_infinite epsilon handling: " + s);
}

std::string to_string(EpsilonSource e) {
    switch (e) {
        case EpsilonSource::monte_carlo: return "monte_carlo";
        case EpsilonSource::analytic: return "analytic";
        case EpsilonSource::table: return "table";
    }
    return "?";
}

EpsilonSource epsilon_source_from_string(const std::string& s) {
    if (s == "monte_carlo") return EpsilonSource::monte_carlo;
    if (s == "analytic") return EpsilonSource::analytic;
    if (s == "table") return EpsilonSource::table;
    throw std::invalid_argument("unknown epsilon source: " + s);
}

std::string to_string(CompareMode m) { return m == CompareMode::ratio ? "ratio" : "horizontal_db"; }

CompareMode compare_mode_from_string(const std::string& s) {
    if (s == "ratio") return CompareMode::ratio;
    if (s == "horizontal_db") return CompareMode::horizontal_db;
    throw std::invalid_argument("unknown compare mode: " + s);
}

void ExperimentPlan::validate() const {
    if (spec.M < 2 || int(spec.points.size()) != spec.M) throw std::invalid_argument("plan: malformed constellation");
    if (relays < 0) throw std::invalid_argument("plan: relays must be >= 0");
    if (snr_db.empty()) throw std::invalid_argument("plan: SNR grid is empty");
    for (double s : snr_db)
        if (!std::isfinite(s)) throw std::invalid_argument("plan: SNR grid values must be finite");
    if (trials.min_errors < 1) throw std::invalid_argument("plan: min_errors must be >= 1");
    // at SER 0.5, about 2*min_errors symbols are needed to see min_errors errors
    if (trials.max_trials < 2 * trials.min_errors)
        throw std::invalid_argument("plan: max_trials must be at least 2*min_errors");
    if (coherence_len < 2) throw std::invalid_argument("plan: coherence_len must be >= 2");
    if (batch_frames < 1) throw std::invalid_argument("plan: batch_frames must be >= 1");
    if (workers < 1) throw std::invalid_argument("plan: workers must be >= 1");
    if (tying == SnrTying::custom) {
        if (offsets.sr.size() > size_t(relays) || offsets.rd.size() > size_t(relays))
            throw std::invalid_argument("plan: more link offsets than relays");
    }
    if (eps_source == EpsilonSource::table && !eps_table)
        throw std::invalid_argument("plan: epsilon source 'table' needs a calibration table");
}

std::string ExperimentPlan::describe() const {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "kind=" << to_string(spec.kind) << ";M=" << spec.M << ";relays=" << relays << ";decoder=" << to_string(decoder)
       << ";relay_mode=" << (relay_mode == RelayMode::genie ? "genie" : "erroneous")
       << ";feedback=" << (feedback == Feedback::genie ? "genie" : "decision_directed") << ";tying=" << to_string(tying)
       << ";sr_inf_eps=" << to_string(sr_infinite_eps) << ";eps_source=" << to_string(eps_source)
       << ";eps_trials=" << eps_budget.trials << ";eps_seed=" << eps_budget.seed << ";min_errors=" << trials.min_errors
       << ";max_trials=" << trials.max_trials << ";seed=" << seed << ";coherence=" << coherence_len
       << ";batch=" << batch_frames << ";zero_noise=" << zero_noise << ";snr=";
    for (double s : snr_db) os << s << ",";
    os << ";off_sd=" << offsets.sd << ";off_sr=";
    for (double s : offsets.sr) os << s << ",";
    os << ";off_rd=";
    for (double s : offsets.rd) os << s << ",";
    return os.str();
}

std::string ExperimentPlan::hash() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : describe()) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

TopologyParams topology_at(const ExperimentPlan& plan, size_t i) {
    const double s = plan.snr_db.at(i);
    const int L = plan.coherence_len;
    TopologyParams t;
    auto off = [](const std::vector<double>& v, int m) { return m < int(v.size()) ? v[m] : 0.0; };
    const bool custom = plan.tying == SnrTying::custom;
    t.source_dest = LinkParams::from_snr_db(s + (custom ? plan.offsets.sd : 0.0), L);
    for (int m = 0; m < plan.relays; ++m) {
        t.source_relay.push_back(LinkParams::from_snr_db(s + (custom ? off(plan.offsets.sr, m) : 0.0), L));
        t.relay_dest.push_back(LinkParams::from_snr_db(s + (custom ? off(plan.offsets.rd, m) : 0.0), L));
    }
    return t;
}

namespace {

struct EpsCacheKey {
    int M;
    int kind;
    double snr_db;
    int coherence;
    int64_t trials;
    uint64_t seed;
    auto tie() const { return std::tie(M, kind, snr_db, coherence, trials, seed); }
    bool operator<(const EpsCacheKey& o) const { return tie() < o.tie(); }
};

std::mutex g_eps_mu;
std::map<EpsCacheKey, double> g_eps_cache;

double epsilon_for_link(const ExperimentPlan& plan, const LinkParams& link) {
    const double db = link.avg_snr_db();
    switch (plan.eps_source) {
        case EpsilonSource::analytic:
            if (!plan.spec.is_psk())
                throw EpsilonMissing("analytic epsilon exists for PSK only; calibrate a table or use monte_carlo");
            return epsilon_dpsk_analytic(plan.spec.M, link.avg_snr());
        case EpsilonSource::table: {
            const auto row = plan.eps_table->find(plan.spec.M, plan.spec.kind, db, 1e-6);
            if (!row) {
                std::ostringstream os;
                os << "no calibrated epsilon for " << plan.spec.M << "-" << to_string(plan.spec.kind) << " at " << db
                   << " dB; run `dfrelay calibrate` for this point first";
                throw EpsilonMissing(os.str());
            }
            return row->epsilon;
        }
        case EpsilonSource::monte_carlo: {
            const EpsCacheKey key{plan.spec.M, int(plan.spec.kind), db, link.coherence_len, plan.eps_budget.trials,
                                  plan.eps_budget.seed};
            {
                std::lock_guard lk(g_eps_mu);
                if (auto it = g_eps_cache.find(key); it != g_eps_cache.end()) return it->second;
            }
            CalibrationBudget b = plan.eps_budget;
            b.method = EpsilonMethod::monte_carlo;
            const auto est = calibrate_epsilon(link, plan.spec, b);
            // no relay errors seen: fall back to half an error over the budget
            const double e = est.value > 0.0 ? est.value : 0.5 / double(est.trials);
            std::lock_guard lk(g_eps_mu);
            g_eps_cache[key] = e;
            return e;
        }
    }
    return 0.0;
}

}  // namespace

std::vector<double> resolve_epsilons(const ExperimentPlan& plan, size_t i) {
    std::vector<double> eps(plan.relays, 0.0);
    if (plan.decoder == DecoderKind::naive_eps0) return eps;
    if (plan.tying == SnrTying::sr_infinite && plan.sr_infinite_eps == SrInfiniteEps::zero) return eps;
    const auto topo = topology_at(plan, i);
    for (int m = 0; m < plan.relays; ++m) eps[m] = epsilon_for_link(plan, topo.source_relay[m]);
    return eps;
}

void PointTally::merge(const PointTally& o) {
    errors += o.errors;
    trials += o.trials;
    frames += o.frames;
    sum_e2 += o.sum_e2;
    pl_decisions += o.pl_decisions;
    pl_fallbacks += o.pl_fallbacks;
}

SerPoint summarize(double snr_db, const PointTally& t, int frame_len) {
    SerPoint p;
    p.snr_db = snr_db;
    p.errors = t.errors;
    p.trials = t.trials;
    p.fallbacks = t.pl_fallbacks;
    if (t.trials <= 0) {
        p.ci_high = 1.0;
        return p;
    }
    const double n = double(t.trials);
    const double ser = double(t.errors) / n;
    p.ser = ser;
    const double var_bin = ser * (1.0 - ser) / n;
    double var = var_bin;
    if (t.frames > 1) {
        const double F = double(t.frames);
        const double mean = double(t.errors) / F;
        const double s2 = std::max(0.0, (t.sum_e2 - F * mean * mean) / (F - 1.0));
        var = s2 / (F * double(frame_len) * double(frame_len));
    }
    const double deff = var_bin > 0.0 ? var / var_bin : 1.0;
    const double n_eff = n / std::max(1.0, deff);
    const double z = 1.959963984540054, z2 = z * z;
    const double den = 1.0 + z2 / n_eff;
    const double centre = (ser + z2 / (2.0 * n_eff)) / den;
    const double half = z * std::sqrt(ser * (1.0 - ser) / n_eff + z2 / (4.0 * n_eff * n_eff)) / den;
    p.ci_low = std::clamp(centre - half, 0.0, ser);
    p.ci_high = std::clamp(centre + half, ser, 1.0);
    p.std_err = std::sqrt(std::max(var, var_bin));
    return p;
}

PointTally simulate_batch(const ExperimentPlan& plan, size_t gi, int64_t batch, const std::vector<double>& eps) {
    const auto& spec = plan.spec;
    auto topo = topology_at(plan, gi);
    if (plan.zero_noise) {
        // noiseless samples are only self-consistent with a vanishing noise
        // level in the metrics; the qam log terms would otherwise dominate
        topo.source_dest.noise_var *= 1e-12;
        for (auto& l : topo.source_relay) l.noise_var *= 1e-12;
        for (auto& l : topo.relay_dest) l.noise_var *= 1e-12;
    }
    const int R = plan.relays;
    const int L = plan.coherence_len - 1;
    const bool genie_fb = plan.feedback == Feedback::genie || plan.decoder == DecoderKind::genie_reference;
    const Feedback fb = genie_fb ? Feedback::genie : Feedback::decision_directed;
    const RelayMode mode = plan.tying == SnrTying::sr_infinite ? RelayMode::genie : plan.relay_mode;
    const bool qam = !spec.is_psk();

    auto cfg = make_decoder_config(plan.decoder, spec.M, eps);
    const uint64_t key = derive_key(plan.seed, 0x5EED0000ull + gi);

    std::vector<int> sym(L);
    std::vector<cplx> y_sd(L + 1);
    std::vector<std::vector<cplx>> y_rd(R, std::vector<cplx>(L + 1));
    std::vector<RelayFrame> rf(R);
    std::vector<cplx> v(L + 1), ysr(L + 1);
    std::vector<double> rd_mag_est(R);
    DestObservation obs;
    obs.rd.resize(R);
    PlStats pl;

    PointTally t;
    for (int64_t f = batch * plan.batch_frames; f < (batch + 1) * plan.batch_frames; ++f) {
        RandomStream src(key, 0, uint64_t(f));
        for (int n = 0; n < L; ++n) sym[n] = int(src.below(uint32_t(spec.M)));

        // source broadcast
        RandomStream sd_rng(key, 1, uint64_t(f));
        const auto& sd = topo.source_dest;
        const cplx h_sd = draw_block_gain(sd, sd_rng);
        DiffState st;
        v[0] = st.prev_v;
        for (int n = 0; n < L; ++n) v[n + 1] = encode(st, spec.points[sym[n]], spec.kind);
        for (int n = 0; n <= L; ++n) y_sd[n] = transmit(h_sd, v[n], sd.noise_var, sd_rng, plan.zero_noise);

        for (int m = 0; m < R; ++m) {
            const auto& sr = topo.source_relay[m];
            RandomStream sr_rng(key, uint32_t(2 + 2 * m), uint64_t(f));
            const cplx h_sr = draw_block_gain(sr, sr_rng);
            for (int n = 0; n <= L; ++n) ysr[n] = transmit(h_sr, v[n], sr.noise_var, sr_rng, plan.zero_noise);
            rf[m] = relay_process_frame(ysr, sym, sr.noise_var, spec, mode, fb);

            const auto& rd = topo.relay_dest[m];
            RandomStream rd_rng(key, uint32_t(3 + 2 * m), uint64_t(f));
            const cplx h_rd = draw_block_gain(rd, rd_rng);
            for (int n = 0; n <= L; ++n) y_rd[m][n] = transmit(h_rd, rf[m].v[n], rd.noise_var, rd_rng, plan.zero_noise);
            rd_mag_est[m] = 1.0;
        }

        int e = 0;
        int prev_dec = -1;
        for (int n = 1; n <= L; ++n) {
            obs.sd = {y_sd[n - 1], y_sd[n], sd.noise_var};
            for (int m = 0; m < R; ++m) obs.rd[m] = {y_rd[m][n - 1], y_rd[m][n], topo.relay_dest[m].noise_var};
            if (qam) {
                // |x^[n-1]| and |x^_r[n-1]|, both 1 at the reference symbol
                if (n == 1) {
                    cfg.qam_feedback.sd_prev_mag = 1.0;
                    for (int m = 0; m < R; ++m) cfg.qam_feedback.rd_prev_mag[m] = 1.0;
                } else {
                    cfg.qam_feedback.sd_prev_mag = std::abs(spec.points[genie_fb ? sym[n - 2] : prev_dec]);
                    for (int m = 0; m < R; ++m) {
                        if (genie_fb) {
                            cfg.qam_feedback.rd_prev_mag[m] = std::abs(spec.points[rf[m].decisions[n - 2]]);
                        } else {
                            const LinkPair lp{y_rd[m][n - 2], y_rd[m][n - 1], topo.relay_dest[m].noise_var};
                            const int est = dest_estimate_relay_prev(lp, spec, rd_mag_est[m]);
                            rd_mag_est[m] = std::abs(spec.points[est]);
                            cfg.qam_feedback.rd_prev_mag[m] = rd_mag_est[m];
                        }
                    }
                }
            }
            const int d = decode(obs, spec, cfg, &pl);
            e += d != sym[n - 1];
            prev_dec = d;
        }
        t.errors += e;
        t.trials += L;
        t.frames += 1;
        t.sum_e2 += double(e) * e;
    }
    t.pl_decisions = pl.decisions;
    t.pl_fallbacks = pl.fallbacks;
    return t;
}

SerPoint run_point(const ExperimentPlan& plan, size_t gi) {
    plan.validate();
    if (gi >= plan.snr_db.size()) throw std::out_of_range("run_point: grid index out of range");
    const auto eps = resolve_epsilons(plan, gi);
    const int W = plan.workers;
    PointTally total;
    int64_t next = 0;
    bool done = false;
    std::vector<PointTally> round(W);
    while (!done) {
        if (W == 1) {
            round[0] = simulate_batch(plan, gi, next, eps);
        } else {
            std::vector<std::thread> pool;
            std::vector<std::exception_ptr> errs(W);
            for (int w = 0; w < W; ++w)
                pool.emplace_back([&, w] {
                    try {
                        round[w] = simulate_batch(plan, gi, next + w, eps);
                    } catch (...) {
                        errs[w] = std::current_exception();
                    }
                });
            for (auto& th : pool) th.join();
            for (auto& ep : errs)
                if (ep) std::rethrow_exception(ep);
        }
        // fold batches in index order; stop at the first batch that satisfies
        // the rule so the result does not depend on W
        for (int w = 0; w < W && !done; ++w) {
            total.merge(round[w]);
            if (total.errors >= plan.trials.min_errors || total.trials >= plan.trials.max_trials) done = true;
        }
        next += W;
    }
    auto p = summarize(plan.snr_db[gi], total, plan.coherence_len - 1);
    if (total.errors < plan.trials.min_errors) {
        std::ostringstream os;
        os << "trial budget reached with " << total.errors << " errors";
        p.note = os.str();
    }
    return p;
}

SerCurve run_sweep(const ExperimentPlan& plan) {
    plan.validate();
    const auto t0 = std::chrono::steady_clock::now();
    SerCurve c;
    c.source = "mc";
    c.kind = plan.spec.kind;
    c.M = plan.spec.M;
    c.relays = plan.relays;
    c.decoder = to_string(plan.decoder);
    c.seed = plan.seed;
    c.plan_hash = plan.hash();
    std::vector<size_t> order(plan.snr_db.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return plan.snr_db[a] < plan.snr_db[b]; });
    for (size_t i : order) {
        try {
            c.points.push_back(run_point(plan, i));
        } catch (const std::exception& ex) {
            SerPoint p;
            p.snr_db = plan.snr_db[i];
            p.failed = true;
            p.ci_high = 1.0;
            p.note = ex.what();
            c.points.push_back(p);
        }
    }
    c.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return c;
}

std::optional<double> snr_at_ser(const SerCurve& c, double ser) {
    if (!(ser > 0.0)) return std::nullopt;
    const double ly = std::log10(ser);
    for (size_t i = 0; i + 1 < c.points.size(); ++i) {
        const auto& a = c.points[i];
        const auto& b = c.points[i + 1];
        if (a.failed || b.failed || !(a.ser > 0.0) || !(b.ser > 0.0)) continue;
        const double la = std::log10(a.ser), lb = std::log10(b.ser);
        if ((la - ly) * (lb - ly) > 0.0) continue;
        if (la == lb) return a.snr_db;
        return a.snr_db + (ly - la) / (lb - la) * (b.snr_db - a.snr_db);
    }
    return std::nullopt;
}

std::optional<double> horizontal_gap_db(const SerCurve& a, const SerCurve& b, double ser) {
    const auto sa = snr_at_ser(a, ser), sb = snr_at_ser(b, ser);
    if (!sa || !sb) return std::nullopt;
    return *sb - *sa;
}

CompareReport compare_curves(const SerCurve& a, const SerCurve& b, CompareMode mode) {
    CompareReport r;
    r.mode = mode;
    auto range = [](const SerCurve& c) {
        double lo = INFINITY, hi = -INFINITY;
        for (const auto& p : c.points) {
            lo = std::min(lo, p.snr_db);
            hi = std::max(hi, p.snr_db);
        }
        return std::pair{lo, hi};
    };
    const auto [alo, ahi] = range(a);
    const auto [blo, bhi] = range(b);
    if (a.points.empty() || b.points.empty() || std::max(alo, blo) > std::min(ahi, bhi) + 1e-9)
        throw std::invalid_argument("compare_curves: SNR ranges do not overlap");

    const double z = 1.959963984540054;
    for (const auto& pa : a.points) {
        if (pa.failed || !(pa.ser > 0.0)) continue;
        if (mode == CompareMode::ratio) {
            const auto it = std::find_if(b.points.begin(), b.points.end(),
                                         [&](const SerPoint& pb) { return std::fabs(pb.snr_db - pa.snr_db) < 1e-6; });
            if (it == b.points.end() || it->failed || !(it->ser > 0.0)) continue;
            const double ratio = pa.ser / it->ser;
            const double s = std::hypot(pa.std_err / pa.ser, it->std_err / it->ser);
            r.rows.push_back({pa.snr_db, pa.ser, ratio, ratio * std::exp(-z * s), ratio * std::exp(z * s)});
            r.max_abs = std::max(r.max_abs, std::max(ratio, 1.0 / ratio));
        } else {
            const auto sb = snr_at_ser(b, pa.ser);
            if (!sb) continue;
            const double gap = *sb - pa.snr_db;
            // interval from a's confidence limits read off curve b
            const auto lo = snr_at_ser(b, pa.ci_high), hi = snr_at_ser(b, pa.ci_low);
            r.rows.push_back({pa.snr_db, pa.ser, gap, lo ? *lo - pa.snr_db : gap, hi ? *hi - pa.snr_db : gap});
            r.max_abs = std::max(r.max_abs, std::fabs(gap));
        }
    }
    return r;
}

SerCurve analytic_curve(const ExperimentPlan& plan, const std::string& source) {
    plan.validate();
    if (!plan.spec.is_psk()) throw std::invalid_argument("analytic_curve: PSK only");
    const auto t0 = std::chrono::steady_clock::now();
    SerCurve c;
    c.source = source;
    c.kind = plan.spec.kind;
    c.M = plan.spec.M;
    c.relays = plan.relays;
    c.decoder = to_string(plan.decoder);
    c.seed = plan.seed;
    c.plan_hash = plan.hash();
    std::vector<size_t> order(plan.snr_db.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return plan.snr_db[a] < plan.snr_db[b]; });
    for (size_t i : order) {
        SerPoint p;
        p.snr_db = plan.snr_db[i];
        try {
            PepResult r;
            if (source == "asymptotic") {
                if (plan.relays < 1) throw std::invalid_argument("asymptotic curve needs at least one relay");
                const double g = std::pow(10.0, p.snr_db / 10.0);
                r.value = 0.0;
                for (int j : nearest_neighbors(plan.spec, 0)) {
                    const auto q = pep_asymptotic_multirelay(plan.spec, 0, j, plan.relays, g);
                    r.value += q.value;
                    r.converged = r.converged && q.converged;
                    r.warnings.insert(r.warnings.end(), q.warnings.begin(), q.warnings.end());
                }
            } else {
                if (plan.relays != 1) throw std::invalid_argument(source + " curve is single-relay only");
                const auto topo = topology_at(plan, i);
                const auto eps = resolve_epsilons(plan, i);
                if (!(eps[0] > 0.0)) throw std::invalid_argument(source + " curve needs a positive epsilon");
                const auto cfg = make_pep_config(plan.spec.M, topo.source_dest.avg_snr(), topo.relay_dest[0].avg_snr(),
                                                 topo.source_relay[0].avg_snr(), eps[0]);
                if (source == "closed_form") r = ser_nearest_neighbor(plan.spec, pep_closed_form, cfg);
                else if (source == "quadrature") r = ser_nearest_neighbor(plan.spec, pep_quadrature_approx, cfg);
                else throw std::invalid_argument("unknown analytic source: " + source);
            }
            p.ser = std::clamp(r.value, 0.0, 1.0);
            p.ci_low = p.ci_high = p.ser;
            if (!r.converged) {
                p.failed = true;
                p.note = r.warnings.empty() ? "not converged" : r.warnings.front();
            }
        } catch (const std::exception& ex) {
            p.failed = true;
            p.ci_high = 1.0;
            p.note = ex.what();
        }
        c.points.push_back(p);
    }
    c.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return c;
}

}  // namespace dfr
