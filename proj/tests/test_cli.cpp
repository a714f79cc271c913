#include <catch2/catch_amalgamated.hpp>

#include <kpz/cli.hpp>

#include <chrono>
#include <fstream>
#include <sstream>

using namespace kpz;

namespace {

Error error_of(const std::string& text)
{
    try {
        parse_config(text);
    } catch (const Error& e) {
        return e;
    }
    FAIL("expected an error");
    return Error(Errc::InvalidArgument, "");
}

std::filesystem::path scratch_dir(const std::string& name)
{
    auto d = std::filesystem::temp_directory_path() / ("kpz_test_cli_" + name);
    std::filesystem::remove_all(d);
    return d;
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("minimal config gets defaults")
{
    auto cfg = parse_config("kind: simulate\n");
    CHECK(cfg.kind == ExperimentKind::Simulate);
    CHECK(cfg.seed == 0);
    CHECK(cfg.samples == 1000);
    REQUIRE(cfg.models.size() == 1);
    CHECK(cfg.models[0].name == "tasep");
    CHECK(cfg.initial.type == "step");
    CHECK(cfg.scaling.eps == 0.01);
    CHECK(cfg.scaling.t == 1);
    CHECK(cfg.stem() == "simulate");
    CHECK(parse_config("kind: simulate\nmodel: tasep\n") == cfg);
}

TEST_CASE("validation errors carry the module cause")
{
    auto unknown = error_of("kind: simulate\nmodel: kpz\n");
    CHECK(unknown.code() == Errc::ValidationError);

    auto zero = error_of("kind: simulate\nwindow: {boundary: ring}\ninitial: {type: equilibrium}\n"
                         "model: {name: aep, rates: {2: 1, -1: 2}}\n");
    CHECK(zero.code() == Errc::ValidationError);
    CHECK(zero.cause() == Errc::ZeroDrift);

    CHECK(error_of("kind: fly\n").code() == Errc::ValidationError);
    CHECK(error_of("kind: simulate\nsamples: 0\n").cause() == Errc::NoSamples);
    CHECK(error_of("kind: simulate\nobservable: {x: 5}\n").cause() == Errc::SiteOutsideWindow);
    CHECK(error_of("kind: compare\nmodels: [tasep, asep]\n").code() == Errc::ValidationError);
    CHECK(error_of("kind: decompose\ndecompose: {law: {-1: 1}}\n").code() == Errc::ValidationError);
    CHECK(error_of("kind: maxima-tail\ninitial: {profile: 0}\n").cause() == Errc::NonDecayingProfile);
}

TEST_CASE("parse errors report line and field")
{
    auto bad = error_of("kind: simulate\nseed: 3\nsamples: many\n");
    CHECK(bad.code() == Errc::ParseError);
    std::string msg = bad.what();
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("samples") != std::string::npos);

    auto unknown = error_of("kind: simulate\nscaling: {eps: 0.01, tt: 1}\n");
    CHECK(unknown.code() == Errc::ParseError);
    CHECK(std::string(unknown.what()).find("scaling.tt") != std::string::npos);

    CHECK(error_of("kind: [simulate\n").code() == Errc::ParseError);
    CHECK(error_of("").code() == Errc::ParseError);
    CHECK(error_of("seed: 1\n").code() == Errc::ParseError);
    CHECK(error_of("kind: decompose\ndecompose: {law: {1: x/2, -1: 1}}\n").code() == Errc::ParseError);
}

TEST_CASE("echoed configs re-parse to equal configs")
{
    const char* docs[] = {
        "kind: simulate\nseed: 9\nsamples: 10\nwindow: {x_min: -3, x_max: 12}\nobservable: {x: 0, tw_reference: true}\n",
        "kind: compare\nmodels: [tasep, {name: asep, p: 0.75, q: 0.25, unit_drift: true}]\n"
        "initial: {type: equilibrium, anchor: 0.5}\nwindow: {boundary: ring}\nscaling: {eps: 0.02, t: 0.1, a: 0.5}\n"
        "eps_values: [0.02, 0.005]\ntarget: {mode: hyp, g: {knots: [[0, 1]], left_slope: -1, right_slope: 1}}\n",
        "kind: simulate\ninitial: {type: wedge, wedge: {ys: [0, 0.5], bs: [0, 0.1], gamma: 0.2, s: .inf}}\n",
        "kind: exact-check\nmodels: [tasep, {name: aep, rates: {1: 0.3333333333333333, 2: 0.3333333333333333}}]\n"
        "oracle: {sites: 6, initial: '101010', micro_time: 1, checks: [skew, comparability], g: {slope: 0.5, "
        "intercept: 1}, comparability_sites: [5, 6]}\n",
        "kind: decompose\ndecompose: {law: {2: 1/3, -1: 2/3}, particles: 2, pairs: 50}\n",
        "kind: tw-table\ntw: {s_min: -4, s_max: 2, step: 0.5, m: 32}\noutput: {name: tw}\n",
        "kind: wedge-energy\nenergy: {a: 2, d: 0.5}\nsamples: 100\n",
        "kind: simulate\nmodel: {name: wasep, delta: 0.5}\nscaling: {eps: 0.04}\ninitial: {type: profile, profile: "
        "{slope: 1}}\nobservable: {x: 0.2, center: 1, scale: 2}\n",
    };
    for (const char* d : docs) {
        INFO(d);
        auto cfg = parse_config(d);
        auto echo = config_to_json(cfg).dump();
        CHECK(parse_config(echo) == cfg);
        CHECK(config_to_json(parse_config(echo)).dump() == echo);
    }
}

TEST_CASE("runs are deterministic")
{
    auto cfg = parse_config("kind: simulate\nseed: 4\nsamples: 40\nscaling: {eps: 0.04, t: 0.5}\n"
                            "window: {x_min: -2, x_max: 4}\nobservable: {tw_reference: true, tw_m: 32}\n");
    auto a = run_experiment(cfg), b = run_experiment(cfg);
    CHECK(a.csv() == b.csv());
    CHECK(a.json() == b.json());
    CHECK(a.columns == std::vector<std::string>{"trajectory", "value", "hit"});
    CHECK(a.rows.size() == 40);
    auto j = nlohmann::json::parse(a.json());
    CHECK(j["version"] == kVersion);
    CHECK(j["seed"] == 4);
    CHECK(j["kind"] == "simulate");
    CHECK(parse_config(j["config"].dump()) == cfg);

    cfg.seed = 5;
    CHECK(run_experiment(cfg).csv() != a.csv());
}

TEST_CASE("compare emits one row per eps")
{
    auto cfg = parse_config("kind: compare\nsamples: 30\nmodels: [{name: asep, p: 0.75, q: 0.25, unit_drift: true}, tasep]\n"
                            "initial: {type: equilibrium}\nwindow: {x_min: -1, x_max: 1, boundary: ring}\n"
                            "scaling: {t: 0.05, a: 0.5}\neps_values: [0.02, 0.01]\n"
                            "target: {g: {knots: [[0, 1]], left_slope: -1, right_slope: 1}}\n");
    auto b = run_experiment(cfg);
    CHECK(b.columns == std::vector<std::string>{"eps", "p_a", "p_b", "difference", "stderr"});
    REQUIRE(b.rows.size() == 2);
    CHECK(b.rows[0][0] == "0.02");
    CHECK(b.rows[1][0] == "0.01");
}

TEST_CASE("exact-check on six sites is fast")
{
    auto cfg = parse_config("kind: exact-check\nsamples: 2000\nmodels: [tasep, {name: asep, p: 0.7, q: 0.3}]\n"
                            "oracle: {sites: 6, initial: '110100', micro_time: 1, checks: [distribution, skew], "
                            "g: {constant: 2}}\n");
    auto t0 = std::chrono::steady_clock::now();
    auto b = run_experiment(cfg);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(secs < 60);
    CHECK(b.rows.size() == 2 * (64 + 1));
    CHECK(b.summary["models"].size() == 2);
}

TEST_CASE("other experiment kinds")
{
    auto dec = run_experiment(parse_config("kind: decompose\ndecompose: {law: {2: 1/3, -1: 2/3}, particles: 2}\n"));
    CHECK(dec.summary["verified"] == true);
    REQUIRE(dec.rows.size() == 1);
    CHECK(dec.rows[0][2] == "0 2 1 0");
    CHECK(dec.rows[0][5] == "pass");

    auto tw = run_experiment(parse_config("kind: tw-table\ntw: {s_min: -2, s_max: 0, step: 1, m: 32}\n"));
    CHECK(tw.rows.size() == 3);
    CHECK_FALSE(tw.svg().empty());

    auto mt = run_experiment(parse_config("kind: maxima-tail\nsamples: 500\nwindow: {x_min: -2, x_max: 2}\n"
                                          "initial: {profile: {knots: [[0, 0]], left_slope: 20, right_slope: -20}}\n"));
    CHECK(mt.columns == std::vector<std::string>{"k", "pmf", "tail"});
    CHECK(mt.rows.at(0)[2] == "1");

    auto we = run_experiment(parse_config("kind: wedge-energy\nsamples: 1000\n"));
    REQUIRE(we.rows.size() == 1);
    CHECK(we.rows[0][3] == "200");
}

TEST_CASE("report files")
{
    ReportBundle empty;
    empty.columns = {"a", "b"};
    CHECK(empty.csv() == "a,b\n");
    CHECK(empty.svg().empty());

    ReportBundle tricky;
    tricky.columns = {"name", "value"};
    tricky.rows = {{"x,y", "say \"hi\""}, {"line\nbreak", "1"}};
    CHECK(tricky.csv() == "name,value\n\"x,y\",\"say \"\"hi\"\"\"\n\"line\nbreak\",1\n");

    auto dir = scratch_dir("write");
    write_report(empty, dir, "empty");
    CHECK(slurp(dir / "empty.csv") == "a,b\n");
    CHECK(std::filesystem::exists(dir / "empty.json"));
    CHECK_FALSE(std::filesystem::exists(dir / "empty.svg"));

    std::ofstream(dir / "blocker") << "x";
    try {
        write_report(empty, dir / "blocker", "x");
        FAIL("expected IoError");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::IoError);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("load_config reads files")
{
    auto dir = scratch_dir("load");
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "c.yaml") << "kind: tw-table\nseed: 3\n";
    auto cfg = load_config(dir / "c.yaml");
    CHECK(cfg.kind == ExperimentKind::TwTable);
    CHECK(cfg.seed == 3);
    CHECK_THROWS_AS(load_config(dir / "missing.yaml"), Error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("exact-check on a ring")
{
    auto b = run_experiment(parse_config("kind: exact-check\nsamples: 1000\nmodels: [tasep]\n"
                                         "oracle: {sites: 4, boundary: ring, initial: '1010', checks: [distribution, "
                                         "comparability], comparability_sites: [6]}\n"));
    CHECK(b.rows.size() == 6 + 1); // C(4, 2) sector states plus one comparability row
    auto& c = b.summary["models"][0]["comparability"][0];
    CHECK(c["particles"] == 3);
    CHECK(c["upper"].get<double>() == Catch::Approx(1.0));
}
