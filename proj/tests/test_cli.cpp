#include "dfrelay/cli.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace dfr;
using namespace dfr::cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        std::random_device rd;
        path = fs::temp_directory_path() / ("dfrelay_cli_" + std::to_string(rd()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

int run(std::vector<std::string> args) {
    args.insert(args.begin(), "dfrelay");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return dfr::cli::main(int(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

const char* kSmall = R"({
  "schema_version": 1,
  "experiments": [
    {"name": "q", "M": 4, "snr_db": {"start": 6, "stop": 12, "step": 3}, "epsilon": {"source": "analytic"},
     "min_errors": 50, "coherence_len": 9, "analysis": ["closed_form"]}
  ],
  "slopes": [{"curve": "q/closed_form", "lo_db": 6, "hi_db": 12}],
  "compares": [{"a": "q", "b": "q/closed_form", "mode": "ratio"}]
})";

}  // namespace

TEST_CASE("config parsing") {
    auto c = parse_run_config(kSmall);
    REQUIRE(c.experiments.size() == 1);
    CHECK(c.experiments[0].plan.snr_db == std::vector<double>{6, 9, 12});
    CHECK(c.experiments[0].plan.eps_source == EpsilonSource::analytic);
    CHECK(c.experiments[0].analysis == std::vector<std::string>{"closed_form"});
    CHECK(c.slopes.size() == 1);
    CHECK(c.compares[0].mode == CompareMode::ratio);

    CHECK_THROWS_AS(parse_run_config(R"({"experiments": []})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"schema_version": 7})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"schema_version": 1, "colour": 3})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"schema_version": 1, "experiments": [{"name": "a", "snr_db": [1], "M": 4, "typo": 1}]})"),
                    ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"schema_version": 1, "experiments": [{"name": "a", "snr_db": [], "M": 4}]})"),
                    ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"schema_version": 1, "experiments": [{"name": "a", "snr_db": [3], "M": 4, "analysis": ["exact"]}]})"),
                    ConfigError);
    CHECK_THROWS_AS(parse_run_config("{not json"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"schema_version": 1, "preset": "fig99"})"), ConfigError);
}

TEST_CASE("presets expand to valid plans") {
    for (const auto& name : preset_names()) {
        auto c = expand_preset(name);
        CAPTURE(name);
        CHECK_FALSE(c.experiments.empty());
        for (const auto& e : c.experiments) CHECK_NOTHROW(e.plan.validate());
    }
    auto f6 = expand_preset("fig6");
    std::vector<int> Ms;
    for (const auto& e : f6.experiments) {
        Ms.push_back(e.plan.spec.M);
        CHECK(e.monte_carlo);
        CHECK(e.analysis == std::vector<std::string>{"closed_form", "quadrature"});
    }
    CHECK(Ms == std::vector<int>{4, 16, 32});
    auto f7 = expand_preset("fig7");
    REQUIRE(f7.experiments.size() == 2);
    CHECK(f7.experiments[0].plan.relays == 2);
    CHECK(f7.experiments[1].plan.relays == 3);
    CHECK(f7.experiments[1].analysis == std::vector<std::string>{"asymptotic"});
    auto f4 = expand_preset("fig4_psk");
    CHECK(f4.experiments.front().plan.snr_db.size() == 13);
    CHECK_THROWS(expand_preset("nope"));
}

TEST_CASE("curve csv round trip") {
    SerCurve a;
    a.source = "mc";
    a.kind = ConstellationKind::QAM;
    a.M = 16;
    a.relays = 2;
    a.decoder = "PL/genie_feedback";
    a.seed = 77;
    for (int i = 0; i < 4; ++i) {
        SerPoint p;
        p.snr_db = 3.0 * i + 0.1;
        p.ser = 1.0 / 3.0 * std::pow(0.1, i);
        p.ci_low = p.ser * 0.9;
        p.ci_high = p.ser * 1.1;
        p.errors = 200 + i;
        p.trials = 123456789012ll + i;
        a.points.push_back(p);
    }
    SerCurve b = a;
    b.source = "closed_form";
    std::stringstream ss;
    write_curves_csv(ss, {a, b});
    CHECK(ss.str().rfind(std::string(kCsvHeader) + "\n", 0) == 0);
    auto back = read_curves_csv(ss);
    REQUIRE(back.size() == 2);
    for (size_t k = 0; k < 2; ++k) {
        const auto& o = k == 0 ? a : b;
        CHECK(back[k].source == o.source);
        CHECK(back[k].decoder == o.decoder);
        CHECK(back[k].seed == o.seed);
        REQUIRE(back[k].points.size() == o.points.size());
        for (size_t i = 0; i < o.points.size(); ++i) {
            CHECK(back[k].points[i].ser == o.points[i].ser);
            CHECK(back[k].points[i].snr_db == o.points[i].snr_db);
            CHECK(back[k].points[i].ci_low == o.points[i].ci_low);
            CHECK(back[k].points[i].trials == o.points[i].trials);
        }
    }
    std::istringstream bad("source,kind\nmc,PSK\n");
    CHECK_THROWS(read_curves_csv(bad));
}

TEST_CASE("complexity table") {
    auto rows = complexity_table({2, 4, 8, 16, 32, 64});
    CHECK(rows[0].ml_measured == 100);
    CHECK(rows[0].pl_measured == 33);
    CHECK(rows[4].ml_measured == 16000);
    CHECK(rows[4].pl_measured == 1023);
    double prev = 0.0;
    for (const auto& r : rows) {
        CHECK(r.equal());
        const double ratio = double(r.ml_measured) / r.pl_measured;
        CHECK(ratio > prev);
        prev = ratio;
    }
    TempDir t;
    CHECK(run({"--out", t.path.string(), "complexity", "--M", "2,32"}) == ExitCode::ok);
    const auto csv = slurp(t.path / "complexity.csv");
    CHECK(csv.find("2,100,100,33,33,true") != std::string::npos);
    CHECK(csv.find("32,16000,16000,1023,1023,true") != std::string::npos);
}

TEST_CASE("calibrate verb") {
    TempDir t;
    const auto tab = (t.path / "eps.csv").string();
    CHECK(run({"calibrate", "--table", tab, "--M", "4", "--snr", "0,3,6,9,12,15,18,21,24,27,30,33,36", "--trials", "20000"}) != ExitCode::usage_error);
    auto table = CalibrationTable::load(tab);
    CHECK(table.rows().size() == 13);
    for (const auto& r : table.rows()) CHECK(r.std_err >= 0.0);
    const auto first = slurp(tab);
    fs::remove(tab);
    run({"calibrate", "--table", tab, "--M", "4", "--snr", "0,3,6,9,12,15,18,21,24,27,30,33,36", "--trials", "20000"});
    CHECK(slurp(tab) == first);

    const auto tab2 = (t.path / "hi.csv").string();
    CHECK(run({"calibrate", "--table", tab2, "--M", "4", "--snr", "30,33", "--trials", "2000000"}) == ExitCode::ok);
    auto hi = CalibrationTable::load(tab2);
    const double ratio = hi.find(4, ConstellationKind::PSK, 30)->epsilon / hi.find(4, ConstellationKind::PSK, 33)->epsilon;
    CHECK(ratio == doctest::Approx(2.0).epsilon(0.3));

    CHECK(run({"calibrate", "--table", tab, "--M", "4"}) == ExitCode::usage_error);
    CHECK(run({"calibrate", "--table", tab, "--M", "5", "--kind", "QAM", "--snr", "3"}) == ExitCode::usage_error);
}

TEST_CASE("sweep verb") {
    TempDir t;
    const auto cfg = t.path / "small.json";
    spit(cfg, kSmall);
    CHECK(run({"--out", t.path.string(), "sweep", "--config", cfg.string()}) == ExitCode::ok);
    REQUIRE(fs::exists(t.path / "small.csv"));
    std::ifstream csv(t.path / "small.csv");
    auto curves = read_curves_csv(csv);
    REQUIRE(curves.size() == 2);
    CHECK(curves[0].source == "mc");
    CHECK(curves[1].source == "closed_form");
    const auto j = nlohmann::json::parse(slurp(t.path / "small_summary.json"));
    CHECK(j["schema_version"] == kSchemaVersion);
    CHECK(j["slope_fits"].size() == 1);
    CHECK(j["comparisons"].size() == 1);
    CHECK(j["failures"].empty());

    // the same seed reproduces the file byte for byte
    const auto first = slurp(t.path / "small.csv");
    CHECK(run({"--out", t.path.string(), "sweep", "--config", cfg.string(), "--workers", "3"}) == ExitCode::ok);
    CHECK(slurp(t.path / "small.csv") == first);

    // compare verb on the emitted file
    const auto f = (t.path / "small.csv").string();
    CHECK(run({"compare", f, f, "--a-filter", "source=mc", "--b-filter", "source=closed_form"}) == ExitCode::ok);
    CHECK(run({"compare", f, f}) == ExitCode::usage_error);
    CHECK(run({"compare", f, (t.path / "missing.csv").string()}) == ExitCode::io_error);

    // an empty grid is a validation error and nothing is written
    const auto bad = t.path / "bad.json";
    spit(bad, R"({"schema_version": 1, "experiments": [{"name": "a", "M": 4, "snr_db": []}]})");
    CHECK(run({"--out", t.path.string(), "sweep", "--config", bad.string()}) == ExitCode::usage_error);
    CHECK_FALSE(fs::exists(t.path / "bad.csv"));
    CHECK_FALSE(fs::exists(t.path / "bad_summary.json"));

    // a point without a calibrated epsilon fails, the rest are still written
    const auto tab = t.path / "eps.csv";
    spit(tab, "M,kind,snr_db,epsilon,std_err,trials\n4,PSK,6,0.05,0.001,100000\n");
    const auto part = t.path / "part.json";
    spit(part, R"({"schema_version": 1, "calibration_table": ")" + tab.string() +
                   R"(", "experiments": [{"name": "a", "M": 4, "snr_db": [6, 9], "min_errors": 30,
                   "coherence_len": 9, "epsilon": {"source": "table"}}]})");
    CHECK(run({"--out", t.path.string(), "sweep", "--config", part.string()}) == ExitCode::failed_points);
    const auto pj = nlohmann::json::parse(slurp(t.path / "part_summary.json"));
    CHECK(pj["failures"].size() == 1);
    CHECK(pj["failures"][0]["snr_db"] == 9.0);

    CHECK(run({"sweep"}) == ExitCode::usage_error);
    CHECK(run({"sweep", "--preset", "fig99"}) == ExitCode::usage_error);
    CHECK(run({"frobnicate"}) == ExitCode::usage_error);
}

TEST_CASE("output directory from the environment") {
    TempDir t;
    const auto cfg = t.path / "env.json";
    spit(cfg, R"({"schema_version": 1, "experiments": [{"name": "e", "M": 2, "snr_db": [3], "min_errors": 20,
                  "coherence_len": 5, "epsilon": {"source": "analytic"}}]})");
    const auto dir = t.path / "from_env";
    ::setenv(kOutDirEnv, dir.string().c_str(), 1);
    CHECK(run({"sweep", "--config", cfg.string()}) == ExitCode::ok);
    ::unsetenv(kOutDirEnv);
    CHECK(fs::exists(dir / "env.csv"));
}
