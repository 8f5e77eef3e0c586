#include "dfrelay/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace dfr::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

template <class T>
T get(const json& j, const std::string& key, const std::string& where) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& ex) {
        throw ConfigError(where + "." + key + ": " + ex.what());
    }
}

template <class T>
T get_or(const json& j, const std::string& key, T dflt, const std::string& where) {
    return j.contains(key) ? get<T>(j, key, where) : dflt;
}

// A plain array, or {"start", "stop", "step"} inclusive of stop.
std::vector<double> parse_grid(const json& j, const std::string& where) {
    if (j.is_array()) {
        std::vector<double> v;
        for (const auto& x : j) {
            if (!x.is_number()) throw ConfigError(where + ": grid entries must be numbers");
            v.push_back(x.get<double>());
        }
        return v;
    }
    check_keys(j, {"start", "stop", "step"}, where);
    const double a = get<double>(j, "start", where), b = get<double>(j, "stop", where), s = get<double>(j, "step", where);
    if (!(s > 0.0)) throw ConfigError(where + ": step must be positive");
    std::vector<double> v;
    for (int k = 0; a + k * s <= b + 1e-9; ++k) v.push_back(a + k * s);
    return v;
}

std::vector<double> grid(double a, double b, double s) {
    std::vector<double> v;
    for (int k = 0; a + k * s <= b + 1e-9; ++k) v.push_back(a + k * s);
    return v;
}

NamedPlan parse_experiment(const json& j, const std::string& where) {
    check_keys(j, {"name", "kind", "M", "relays", "decoder", "relay_mode", "feedback", "snr_db", "tying", "offsets",
                   "sr_infinite_eps", "epsilon", "min_errors", "max_trials", "seed", "coherence_len", "batch_frames",
                   "zero_noise", "monte_carlo", "analysis"},
               where);
    NamedPlan np;
    auto& p = np.plan;
    try {
        np.name = get<std::string>(j, "name", where);
        const auto kind = constellation_kind_from_string(get_or<std::string>(j, "kind", "PSK", where));
        p.spec = make_constellation(kind, get_or<int>(j, "M", 4, where));
        p.relays = get_or<int>(j, "relays", 1, where);
        p.decoder = decoder_kind_from_string(get_or<std::string>(j, "decoder", "PL", where));
        const auto rm = get_or<std::string>(j, "relay_mode", "erroneous", where);
        if (rm != "erroneous" && rm != "genie") throw ConfigError(where + ".relay_mode: erroneous or genie");
        p.relay_mode = rm == "genie" ? RelayMode::genie : RelayMode::erroneous;
        const auto fb = get_or<std::string>(j, "feedback", "decision_directed", where);
        if (fb != "decision_directed" && fb != "genie") throw ConfigError(where + ".feedback: decision_directed or genie");
        p.feedback = fb == "genie" ? Feedback::genie : Feedback::decision_directed;
        if (!j.contains("snr_db")) throw ConfigError(where + ": snr_db is required");
        p.snr_db = parse_grid(j.at("snr_db"), where + ".snr_db");
        p.tying = snr_tying_from_string(get_or<std::string>(j, "tying", "all_equal", where));
        if (j.contains("offsets")) {
            const auto& o = j.at("offsets");
            check_keys(o, {"sd", "sr", "rd"}, where + ".offsets");
            p.offsets.sd = get_or<double>(o, "sd", 0.0, where + ".offsets");
            p.offsets.sr = get_or<std::vector<double>>(o, "sr", {}, where + ".offsets");
            p.offsets.rd = get_or<std::vector<double>>(o, "rd", {}, where + ".offsets");
        }
        p.sr_infinite_eps = sr_infinite_eps_from_string(get_or<std::string>(j, "sr_infinite_eps", "configured", where));
        if (j.contains("epsilon")) {
            const auto& e = j.at("epsilon");
            check_keys(e, {"source", "trials", "seed"}, where + ".epsilon");
            p.eps_source = epsilon_source_from_string(get_or<std::string>(e, "source", "monte_carlo", where));
            p.eps_budget.trials = int64_t(get_or<double>(e, "trials", 1e6, where));
            p.eps_budget.seed = get_or<uint64_t>(e, "seed", 1, where);
        }
        p.trials.min_errors = int64_t(get_or<double>(j, "min_errors", 200, where));
        p.trials.max_trials = int64_t(get_or<double>(j, "max_trials", 1e8, where));
        p.seed = get_or<uint64_t>(j, "seed", 1, where);
        p.coherence_len = get_or<int>(j, "coherence_len", 65, where);
        p.batch_frames = get_or<int>(j, "batch_frames", 32, where);
        p.zero_noise = get_or<bool>(j, "zero_noise", false, where);
        np.monte_carlo = get_or<bool>(j, "monte_carlo", true, where);
        np.analysis = get_or<std::vector<std::string>>(j, "analysis", {}, where);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& ex) {
        throw ConfigError(where + ": " + ex.what());
    }
    for (const auto& a : np.analysis)
        if (a != "closed_form" && a != "quadrature" && a != "asymptotic")
            throw ConfigError(where + ".analysis: unknown source '" + a + "'");
    return np;
}

void validate_config(const RunConfig& c) {
    std::set<std::string> names;
    for (const auto& e : c.experiments) {
        if (e.name.empty() || e.name.find('/') != std::string::npos)
            throw ConfigError("experiment names must be non-empty and free of '/'");
        if (!names.insert(e.name).second) throw ConfigError("duplicate experiment name '" + e.name + "'");
        try {
            if (e.plan.eps_source == EpsilonSource::table && c.calibration_table.empty())
                throw std::invalid_argument("epsilon source 'table' needs calibration_table");
            // a table plan is validated once the table is loaded
            ExperimentPlan p = e.plan;
            if (p.eps_source == EpsilonSource::table) p.eps_table = std::make_shared<CalibrationTable>();
            p.validate();
        } catch (const std::exception& ex) {
            throw ConfigError("experiment '" + e.name + "': " + ex.what());
        }
        if (!e.monte_carlo && e.analysis.empty()) throw ConfigError("experiment '" + e.name + "' produces no curve");
    }
    auto known = [&](const std::string& curve) {
        const auto slash = curve.find('/');
        return names.count(curve.substr(0, slash)) > 0;
    };
    for (const auto& s : c.slopes)
        if (!known(s.curve)) throw ConfigError("slope request names unknown curve '" + s.curve + "'");
    for (const auto& r : c.compares)
        if (!known(r.a) || !known(r.b)) throw ConfigError("compare request names an unknown curve");
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("config is not valid JSON: ") + ex.what());
    }
    check_keys(j, {"schema_version", "preset", "out_dir", "calibration_table", "experiments", "slopes", "compares",
                   "calibrate"},
               "config");
    if (!j.contains("schema_version")) throw ConfigError("config: schema_version is required");
    RunConfig c;
    c.schema_version = get<int>(j, "schema_version", "config");
    if (c.schema_version != kSchemaVersion)
        throw ConfigError("config: unsupported schema_version " + std::to_string(c.schema_version));
    if (j.contains("preset")) {
        const auto name = get<std::string>(j, "preset", "config");
        try {
            c = expand_preset(name);
        } catch (const std::exception& ex) {
            throw ConfigError(ex.what());
        }
    }
    c.out_dir = get_or<std::string>(j, "out_dir", c.out_dir, "config");
    c.calibration_table = get_or<std::string>(j, "calibration_table", c.calibration_table, "config");
    if (j.contains("experiments")) {
        const auto& ex = j.at("experiments");
        if (!ex.is_array()) throw ConfigError("config.experiments: expected an array");
        for (size_t i = 0; i < ex.size(); ++i)
            c.experiments.push_back(parse_experiment(ex[i], "experiments[" + std::to_string(i) + "]"));
    }
    if (j.contains("slopes")) {
        for (const auto& s : j.at("slopes")) {
            check_keys(s, {"curve", "lo_db", "hi_db"}, "slopes[]");
            c.slopes.push_back({get<std::string>(s, "curve", "slopes[]"), get<double>(s, "lo_db", "slopes[]"),
                                get<double>(s, "hi_db", "slopes[]")});
        }
    }
    if (j.contains("compares")) {
        for (const auto& s : j.at("compares")) {
            check_keys(s, {"a", "b", "mode"}, "compares[]");
            CompareRequest r{get<std::string>(s, "a", "compares[]"), get<std::string>(s, "b", "compares[]")};
            try {
                r.mode = compare_mode_from_string(get_or<std::string>(s, "mode", "ratio", "compares[]"));
            } catch (const std::invalid_argument& ex) {
                throw ConfigError(ex.what());
            }
            c.compares.push_back(r);
        }
    }
    if (j.contains("calibrate")) {
        const auto& k = j.at("calibrate");
        const std::string w = "calibrate";
        check_keys(k, {"M", "kind", "snr_db", "method", "trials", "seed", "coherence_len"}, w);
        auto& r = c.calibrate;
        c.has_calibrate = true;
        try {
            r.Ms = k.at("M").is_array() ? get<std::vector<int>>(k, "M", w) : std::vector<int>{get<int>(k, "M", w)};
            r.kind = constellation_kind_from_string(get_or<std::string>(k, "kind", "PSK", w));
            if (!k.contains("snr_db")) throw ConfigError("calibrate: snr_db is required");
            r.snr_db = parse_grid(k.at("snr_db"), w + ".snr_db");
            r.method = epsilon_method_from_string(get_or<std::string>(k, "method", "monte_carlo", w));
            r.trials = int64_t(get_or<double>(k, "trials", 1e6, w));
            r.seed = get_or<uint64_t>(k, "seed", 1, w);
            r.coherence_len = get_or<int>(k, "coherence_len", 65, w);
            for (int M : r.Ms) make_constellation(r.kind, M);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& ex) {
            throw ConfigError(w + ": " + ex.what());
        }
        if (r.snr_db.empty()) throw ConfigError("calibrate: SNR grid is empty");
        if (r.trials <= 0) throw ConfigError("calibrate: trials must be positive");
    }
    validate_config(c);
    return c;
}

std::vector<std::string> preset_names() { return {"fig4_psk", "fig4_qam", "fig5", "fig6", "fig7"}; }

RunConfig expand_preset(const std::string& name) {
    RunConfig c;
    c.preset = name;
    const auto g = grid(0.0, 36.0, 3.0);
    auto plan = [&](const std::string& nm, ConstellationKind kind, int M, DecoderKind d) {
        NamedPlan np;
        np.name = nm;
        np.plan.spec = make_constellation(kind, M);
        np.plan.decoder = d;
        np.plan.snr_db = g;
        return np;
    };
    if (name == "fig4_psk") {
        for (int M : {4, 16, 32}) {
            const auto tag = "psk" + std::to_string(M);
            c.experiments.push_back(plan(tag + "_ml", ConstellationKind::PSK, M, DecoderKind::ML));
            c.experiments.push_back(plan(tag + "_pl", ConstellationKind::PSK, M, DecoderKind::PL));
            c.compares.push_back({tag + "_ml", tag + "_pl", CompareMode::horizontal_db});
        }
    } else if (name == "fig4_qam") {
        for (int M : {8, 16, 32, 64}) {
            const auto tag = "qam" + std::to_string(M);
            c.experiments.push_back(plan(tag + "_ml", ConstellationKind::QAM, M, DecoderKind::ML));
            c.experiments.push_back(plan(tag + "_pl", ConstellationKind::QAM, M, DecoderKind::PL));
            c.experiments.push_back(plan(tag + "_genie", ConstellationKind::QAM, M, DecoderKind::genie_reference));
            c.compares.push_back({tag + "_ml", tag + "_pl", CompareMode::horizontal_db});
            c.compares.push_back({tag + "_genie", tag + "_ml", CompareMode::horizontal_db});
        }
    } else if (name == "fig5") {
        c.experiments.push_back(plan("psk4_pl", ConstellationKind::PSK, 4, DecoderKind::PL));
        c.experiments.push_back(plan("psk4_naive", ConstellationKind::PSK, 4, DecoderKind::naive_eps0));
        c.experiments.push_back(plan("psk4_ml", ConstellationKind::PSK, 4, DecoderKind::ML));
        auto genie = plan("psk4_genie_relay", ConstellationKind::PSK, 4, DecoderKind::PL);
        genie.plan.tying = SnrTying::sr_infinite;
        c.experiments.push_back(genie);
        c.slopes.push_back({"psk4_pl", 25.0, 35.0});
        c.slopes.push_back({"psk4_naive", 25.0, 35.0});
        c.compares.push_back({"psk4_naive", "psk4_pl", CompareMode::ratio});
        c.compares.push_back({"psk4_pl", "psk4_genie_relay", CompareMode::ratio});
    } else if (name == "fig6") {
        for (int M : {4, 16, 32}) {
            auto np = plan("psk" + std::to_string(M) + "_pl", ConstellationKind::PSK, M, DecoderKind::PL);
            np.analysis = {"closed_form", "quadrature"};
            c.compares.push_back({np.name, np.name + "/closed_form", CompareMode::ratio});
            c.compares.push_back({np.name, np.name + "/quadrature", CompareMode::ratio});
            c.experiments.push_back(np);
        }
        c.slopes.push_back({"psk4_pl", 25.0, 35.0});
        c.slopes.push_back({"psk4_pl/closed_form", 25.0, 35.0});
    } else if (name == "fig7") {
        for (int N : {2, 3}) {
            auto np = plan("psk4_pl_N" + std::to_string(N), ConstellationKind::PSK, 4, DecoderKind::PL);
            np.plan.relays = N;
            np.plan.snr_db = grid(0.0, 24.0, 3.0);
            np.analysis = {"asymptotic"};
            c.slopes.push_back({np.name, 15.0, 21.0});
            c.slopes.push_back({np.name + "/asymptotic", 15.0, 21.0});
            c.compares.push_back({np.name + "/asymptotic", np.name, CompareMode::ratio});
            c.experiments.push_back(np);
        }
    } else {
        throw std::invalid_argument("unknown preset '" + name + "'");
    }
    return c;
}

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

}  // namespace

void write_curves_csv(std::ostream& os, const std::vector<SerCurve>& curves) {
    os << kCsvHeader << "\n";
    for (const auto& c : curves)
        for (const auto& p : c.points)
            os << c.source << "," << to_string(c.kind) << "," << c.M << "," << c.relays << "," << c.decoder << ","
               << fmt_double(p.snr_db) << "," << fmt_double(p.ser) << "," << fmt_double(p.ci_low) << ","
               << fmt_double(p.ci_high) << "," << p.errors << "," << p.trials << "," << c.seed << "\n";
}

std::vector<SerCurve> read_curves_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("curve CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kCsvHeader) throw std::runtime_error("curve CSV header mismatch: " + line);
    std::vector<SerCurve> out;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 12) throw std::runtime_error("curve CSV line " + std::to_string(lineno) + ": expected 12 fields");
        try {
            SerCurve key;
            key.source = f[0];
            key.kind = constellation_kind_from_string(f[1]);
            key.M = std::stoi(f[2]);
            key.relays = std::stoi(f[3]);
            key.decoder = f[4];
            key.seed = std::stoull(f[11]);
            SerPoint p;
            p.snr_db = std::stod(f[5]);
            p.ser = std::stod(f[6]);
            p.ci_low = std::stod(f[7]);
            p.ci_high = std::stod(f[8]);
            p.errors = std::stoll(f[9]);
            p.trials = std::stoll(f[10]);
            const bool same = !out.empty() && out.back().source == key.source && out.back().kind == key.kind &&
                              out.back().M == key.M && out.back().relays == key.relays &&
                              out.back().decoder == key.decoder && out.back().seed == key.seed;
            if (!same) out.push_back(key);
            out.back().points.push_back(p);
        } catch (const std::invalid_argument& ex) {
            throw std::runtime_error("curve CSV line " + std::to_string(lineno) + ": " + ex.what());
        } catch (const std::out_of_range& ex) {
            throw std::runtime_error("curve CSV line " + std::to_string(lineno) + ": " + ex.what());
        }
    }
    return out;
}

std::vector<ComplexityRow> complexity_table(const std::vector<int>& Ms) {
    std::vector<ComplexityRow> rows;
    for (int M : Ms) {
        ComplexityRow r{M, count_ops(DecoderKind::ML, M), 15ll * M * M + 20ll * M, count_ops(DecoderKind::PL, M),
                        33ll * (M - 1)};
        rows.push_back(r);
    }
    return rows;
}

namespace {

struct Overrides {
    std::optional<uint64_t> seed;
    std::optional<int> workers;
    std::optional<int64_t> min_errors, max_trials;
    std::string out;
};

std::string resolve_out_dir(const Overrides& o, const std::string& from_config) {
    if (!o.out.empty()) return o.out;
    if (!from_config.empty()) return from_config;
    if (const char* e = std::getenv(kOutDirEnv); e && *e) return e;
    return "dfrelay_out";
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Decoder column; variants that share a decoder get a suffix so curves stay
// distinguishable after a CSV round trip.
std::string decoder_label(const ExperimentPlan& p) {
    std::string s = to_string(p.decoder);
    if (p.tying == SnrTying::sr_infinite) s += "/sr_infinite";
    else if (p.relay_mode == RelayMode::genie) s += "/genie_relay";
    if (p.feedback == Feedback::genie && p.decoder != DecoderKind::genie_reference) s += "/genie_feedback";
    return s;
}

json point_json(const SerPoint& p) {
    json j = {{"snr_db", p.snr_db}, {"ser", p.ser},       {"ci_low", p.ci_low},       {"ci_high", p.ci_high},
              {"errors", p.errors}, {"trials", p.trials}, {"std_err", p.std_err},     {"pl_fallbacks", p.fallbacks},
              {"failed", p.failed}};
    if (!p.note.empty()) j["note"] = p.note;
    return j;
}

int run_calibrate(const RunConfig& cfg, const Overrides& ov, const std::string& table_flag) {
    const auto& r = cfg.calibrate;
    const std::string out_dir = resolve_out_dir(ov, cfg.out_dir);
    std::string path = !table_flag.empty() ? table_flag : cfg.calibration_table;
    if (path.empty()) path = (fs::path(out_dir) / "epsilon.csv").string();
    CalibrationTable table;
    if (fs::exists(path)) table = CalibrationTable::load(path);
    bool budget_ok = true;
    for (int M : r.Ms) {
        const auto spec = make_constellation(r.kind, M);
        for (double db : r.snr_db) {
            CalibrationBudget b;
            b.method = r.method;
            b.trials = r.trials;
            b.seed = ov.seed.value_or(r.seed);
            const auto est = calibrate_epsilon(LinkParams::from_snr_db(db, r.coherence_len), spec, b);
            table.upsert({M, r.kind, db, est.value, est.std_err, est.trials});
            std::fprintf(stdout, "%d-%s %6.2f dB  eps=%.6e  std_err=%.2e  trials=%lld\n", M, to_string(r.kind).c_str(),
                         db, est.value, est.std_err, static_cast<long long>(est.trials));
            if (r.method == EpsilonMethod::monte_carlo && (est.value <= 0.0 || est.std_err > 0.1 * est.value)) {
                budget_ok = false;
                std::fprintf(stderr, "  budget: relative std_err above 10%% at %d-%s %.2f dB; raise trials\n", M,
                             to_string(r.kind).c_str(), db);
            }
        }
    }
    if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    table.save(path);
    std::fprintf(stdout, "wrote %s (%zu rows)\n", path.c_str(), table.rows().size());
    return budget_ok ? ExitCode::ok : ExitCode::failed_points;
}

int run_sweep_cmd(RunConfig cfg, const Overrides& ov, const std::string& tag) {
    std::shared_ptr<CalibrationTable> table;
    if (!cfg.calibration_table.empty() && fs::exists(cfg.calibration_table))
        table = std::make_shared<CalibrationTable>(CalibrationTable::load(cfg.calibration_table));
    for (auto& e : cfg.experiments) {
        if (ov.seed) e.plan.seed = *ov.seed;
        if (ov.workers) e.plan.workers = *ov.workers;
        if (ov.min_errors) e.plan.trials.min_errors = *ov.min_errors;
        if (ov.max_trials) e.plan.trials.max_trials = *ov.max_trials;
        if (e.plan.eps_source == EpsilonSource::table) {
            if (!table) {
                std::fprintf(stderr, "error: experiment '%s' needs calibration table %s; run `dfrelay calibrate` first\n",
                             e.name.c_str(), cfg.calibration_table.c_str());
                return ExitCode::usage_error;
            }
            e.plan.eps_table = table;
        }
        try {
            e.plan.validate();
        } catch (const std::exception& ex) {
            std::fprintf(stderr, "error: experiment '%s': %s\n", e.name.c_str(), ex.what());
            return ExitCode::usage_error;
        }
    }

    const std::string out_dir = resolve_out_dir(ov, cfg.out_dir);
    std::vector<std::pair<std::string, SerCurve>> curves;
    for (const auto& e : cfg.experiments) {
        if (e.monte_carlo) {
            std::fprintf(stderr, "[%s] monte carlo, %zu points\n", e.name.c_str(), e.plan.snr_db.size());
            auto c = run_sweep(e.plan);
            c.decoder = decoder_label(e.plan);
            curves.emplace_back(e.name, std::move(c));
        }
        for (const auto& a : e.analysis) {
            std::fprintf(stderr, "[%s] %s\n", e.name.c_str(), a.c_str());
            auto c = analytic_curve(e.plan, a);
            c.decoder = decoder_label(e.plan);
            curves.emplace_back(e.name + "/" + a, std::move(c));
        }
    }
    auto find = [&](const std::string& n) -> const SerCurve* {
        for (const auto& [name, c] : curves)
            if (name == n) return &c;
        return nullptr;
    };

    json summary;
    summary["schema_version"] = kSchemaVersion;
    summary["tag"] = tag;
    summary["curves"] = json::array();
    bool any_failed = false;
    json failures = json::array();
    for (const auto& [name, c] : curves) {
        json jc = {{"name", name},          {"source", c.source},         {"kind", to_string(c.kind)},
                   {"M", c.M},              {"N_relays", c.relays},       {"decoder", c.decoder},
                   {"seed", c.seed},        {"plan_hash", c.plan_hash},   {"wall_time_s", c.wall_time_s}};
        jc["points"] = json::array();
        for (const auto& p : c.points) {
            jc["points"].push_back(point_json(p));
            if (p.failed) {
                any_failed = true;
                failures.push_back({{"curve", name}, {"snr_db", p.snr_db}, {"note", p.note}});
            }
        }
        summary["curves"].push_back(jc);
    }
    summary["failures"] = failures;
    summary["slope_fits"] = json::array();
    for (const auto& s : cfg.slopes) {
        const SerCurve* c = find(s.curve);
        json j = {{"curve", s.curve}, {"lo_db", s.lo_db}, {"hi_db", s.hi_db}};
        if (!c) {
            j["ok"] = false;
            j["diagnostic"] = "curve not produced";
        } else {
            const auto f = fit_diversity_slope(*c, s.lo_db, s.hi_db);
            j["ok"] = f.ok;
            j["slope"] = f.slope;
            j["points"] = f.points;
            if (!f.ok) j["diagnostic"] = f.diagnostic;
        }
        summary["slope_fits"].push_back(j);
    }
    summary["comparisons"] = json::array();
    for (const auto& r : cfg.compares) {
        const SerCurve *a = find(r.a), *b = find(r.b);
        json j = {{"a", r.a}, {"b", r.b}, {"mode", to_string(r.mode)}};
        if (!a || !b) {
            j["error"] = "curve not produced";
        } else {
            try {
                const auto rep = compare_curves(*a, *b, r.mode);
                j["max_abs"] = rep.max_abs;
                j["rows"] = json::array();
                for (const auto& row : rep.rows)
                    j["rows"].push_back({{"snr_db", row.snr_db}, {"ser", row.ser}, {"value", row.value},
                                         {"low", row.low}, {"high", row.high}});
            } catch (const std::exception& ex) {
                j["error"] = ex.what();
            }
        }
        summary["comparisons"].push_back(j);
    }

    try {
        fs::create_directories(out_dir);
        const auto csv_path = fs::path(out_dir) / (tag + ".csv");
        // suffixed so a config sitting in the output directory is never overwritten
        const auto json_path = fs::path(out_dir) / (tag + "_summary.json");
        std::ofstream csv(csv_path);
        std::vector<SerCurve> plain;
        for (const auto& [n, c] : curves) plain.push_back(c);
        write_curves_csv(csv, plain);
        std::ofstream js(json_path);
        js << summary.dump(2) << "\n";
        if (!csv || !js) throw std::runtime_error("write failed");
        std::fprintf(stdout, "wrote %s and %s\n", csv_path.c_str(), json_path.c_str());
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return ExitCode::io_error;
    }
    return any_failed ? ExitCode::failed_points : ExitCode::ok;
}

// "source=mc,decoder=PL" style filter over curves read from a CSV file
const SerCurve& pick_curve(const std::vector<SerCurve>& cs, const std::string& filter, const std::string& what) {
    std::vector<const SerCurve*> hits;
    for (const auto& c : cs) {
        bool ok = true;
        for (const auto& kv : split(filter, ',')) {
            if (kv.empty()) continue;
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw std::invalid_argument(what + ": filter terms look like key=value");
            const auto k = kv.substr(0, eq), v = kv.substr(eq + 1);
            if (k == "source") ok = ok && c.source == v;
            else if (k == "kind") ok = ok && to_string(c.kind) == v;
            else if (k == "M") ok = ok && std::to_string(c.M) == v;
            else if (k == "N_relays") ok = ok && std::to_string(c.relays) == v;
            else if (k == "decoder") ok = ok && c.decoder == v;
            else throw std::invalid_argument(what + ": unknown filter key '" + k + "'");
        }
        if (ok) hits.push_back(&c);
    }
    if (hits.size() != 1)
        throw std::invalid_argument(what + ": filter selects " + std::to_string(hits.size()) + " curves, need exactly 1");
    return *hits.front();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Differential decode-and-forward relaying: simulation and SER analysis"};
    app.require_subcommand(1);
    Overrides ov;
    uint64_t seed = 0;
    int workers = 0;
    int64_t min_errors = 0, max_trials = 0;
    app.add_option("--out", ov.out, std::string("output directory (default: $") + kOutDirEnv + " or ./dfrelay_out)");

    auto* cal = app.add_subcommand("calibrate", "estimate relay epsilon and write the calibration table");
    std::string cal_config, cal_table, cal_kind = "PSK", cal_method = "monte_carlo";
    std::vector<int> cal_M;
    std::vector<double> cal_snr;
    double cal_trials = 1e6;
    int cal_coh = 65;
    cal->add_option("--config", cal_config, "JSON config with a calibrate block");
    cal->add_option("--table", cal_table, "calibration CSV to create or update");
    cal->add_option("--M", cal_M, "constellation sizes")->delimiter(',');
    cal->add_option("--kind", cal_kind, "PSK or QAM");
    cal->add_option("--snr", cal_snr, "SNR points in dB")->delimiter(',');
    cal->add_option("--method", cal_method, "monte_carlo or analytic_approx");
    cal->add_option("--trials", cal_trials, "trials per point");
    cal->add_option("--coherence", cal_coh, "coherence block length for QAM");
    cal->add_option("--seed", seed, "random seed");

    auto* sw = app.add_subcommand("sweep", "run Monte Carlo and analytical SER curves");
    std::string sw_config, sw_preset;
    sw->add_option("--config", sw_config, "JSON run config");
    sw->add_option("--preset", sw_preset, "figure preset: fig4_psk, fig4_qam, fig5, fig6, fig7");
    sw->add_option("--seed", seed, "random seed for every experiment");
    sw->add_option("--workers", workers, "worker threads per point");
    sw->add_option("--min-errors", min_errors, "override min_errors");
    sw->add_option("--max-trials", max_trials, "override max_trials");

    auto* cx = app.add_subcommand("complexity", "count ML and PL decoder operations");
    std::vector<int> cx_M{2, 4, 8, 16, 32, 64};
    cx->add_option("--M", cx_M, "PSK sizes")->delimiter(',');

    auto* cmp = app.add_subcommand("compare", "compare two curves from CSV files");
    std::string cmp_a, cmp_b, cmp_fa, cmp_fb, cmp_mode = "ratio";
    cmp->add_option("a", cmp_a, "first curve CSV")->required();
    cmp->add_option("b", cmp_b, "second curve CSV")->required();
    cmp->add_option("--a-filter", cmp_fa, "select one curve of a, e.g. source=mc,decoder=PL");
    cmp->add_option("--b-filter", cmp_fb, "select one curve of b");
    cmp->add_option("--mode", cmp_mode, "ratio or horizontal_db");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? ExitCode::ok : ExitCode::usage_error;
    }
    if (seed) ov.seed = seed;
    if (workers) ov.workers = workers;
    if (min_errors) ov.min_errors = min_errors;
    if (max_trials) ov.max_trials = max_trials;

    try {
        if (*cal) {
            RunConfig cfg;
            if (!cal_config.empty()) {
                cfg = parse_run_config(read_file(cal_config));
                if (!cfg.has_calibrate) throw ConfigError("config has no calibrate block");
            } else {
                if (cal_M.empty() || cal_snr.empty()) throw ConfigError("calibrate needs --config or both --M and --snr");
                cfg.has_calibrate = true;
                cfg.calibrate.Ms = cal_M;
                cfg.calibrate.kind = constellation_kind_from_string(cal_kind);
                cfg.calibrate.snr_db = cal_snr;
                cfg.calibrate.method = epsilon_method_from_string(cal_method);
                cfg.calibrate.trials = int64_t(cal_trials);
                cfg.calibrate.coherence_len = cal_coh;
                for (int M : cal_M) make_constellation(cfg.calibrate.kind, M);
            }
            return run_calibrate(cfg, ov, cal_table);
        }
        if (*sw) {
            if (sw_config.empty() == sw_preset.empty()) throw ConfigError("sweep needs exactly one of --config or --preset");
            RunConfig cfg;
            std::string tag;
            if (!sw_preset.empty()) {
                try {
                    cfg = expand_preset(sw_preset);
                } catch (const std::invalid_argument& ex) {
                    throw ConfigError(ex.what());
                }
                tag = sw_preset;
            } else {
                cfg = parse_run_config(read_file(sw_config));
                tag = fs::path(sw_config).stem().string();
            }
            if (cfg.experiments.empty()) throw ConfigError("config defines no experiments");
            return run_sweep_cmd(cfg, ov, tag);
        }
        if (*cx) {
            const auto rows = complexity_table(cx_M);
            bool all = true;
            std::ostringstream csv;
            csv << "M,ml_measured,ml_formula,pl_measured,pl_formula,equal\n";
            std::printf("%4s %12s %12s %10s %10s  %s\n", "M", "ML counted", "15M^2+20M", "PL counted", "33(M-1)", "equal");
            for (const auto& r : rows) {
                std::printf("%4d %12lld %12lld %10lld %10lld  %s\n", r.M, (long long)r.ml_measured,
                            (long long)r.ml_formula, (long long)r.pl_measured, (long long)r.pl_formula,
                            r.equal() ? "yes" : "NO");
                csv << r.M << "," << r.ml_measured << "," << r.ml_formula << "," << r.pl_measured << ","
                    << r.pl_formula << "," << (r.equal() ? "true" : "false") << "\n";
                all = all && r.equal();
            }
            if (!ov.out.empty() || std::getenv(kOutDirEnv)) {
                const auto dir = resolve_out_dir(ov, "");
                fs::create_directories(dir);
                std::ofstream f(fs::path(dir) / "complexity.csv");
                f << csv.str();
                if (!f) {
                    std::fprintf(stderr, "error: cannot write complexity.csv\n");
                    return ExitCode::io_error;
                }
            }
            return all ? ExitCode::ok : ExitCode::failed_points;
        }
        if (*cmp) {
            std::ifstream fa(cmp_a), fb(cmp_b);
            if (!fa || !fb) {
                std::fprintf(stderr, "error: cannot open input CSV\n");
                return ExitCode::io_error;
            }
            const auto ca = read_curves_csv(fa), cb = read_curves_csv(fb);
            const auto& a = pick_curve(ca, cmp_fa, "a");
            const auto& b = pick_curve(cb, cmp_fb, "b");
            const auto mode = compare_mode_from_string(cmp_mode);
            const auto rep = compare_curves(a, b, mode);
            std::printf("snr_db,ser_a,%s,low,high\n", mode == CompareMode::ratio ? "ratio" : "gap_db");
            for (const auto& r : rep.rows)
                std::printf("%g,%.6g,%.6g,%.6g,%.6g\n", r.snr_db, r.ser, r.value, r.low, r.high);
            std::printf("# max_abs=%.6g\n", rep.max_abs);
            return ExitCode::ok;
        }
    } catch (const ConfigError& ex) {
        std::fprintf(stderr, "config error: %s\n", ex.what());
        return ExitCode::usage_error;
    } catch (const std::invalid_argument& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return ExitCode::usage_error;
    } catch (const std::domain_error& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return ExitCode::usage_error;
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return ExitCode::io_error;
    }
    return ExitCode::usage_error;
}

}  // namespace dfr::cli
