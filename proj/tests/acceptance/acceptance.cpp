#include <kpz/cli.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace kpz;

namespace {

namespace fs = std::filesystem;

const fs::path kConfigDir = fs::path(KPZ_SOURCE_DIR) / "configs" / "acceptance";

struct Run {
    ReportBundle bundle;
    double seconds = 0;
};

struct Suite {
    fs::path out;
    std::vector<std::string> stems;
    std::ostringstream record; // every printed number except timings
    int failures = 0;
    bool quiet = false;

    Run run(const std::string& name)
    {
        auto cfg = load_config(kConfigDir / (name + ".yaml"));
        auto t0 = std::chrono::steady_clock::now();
        Run r{run_experiment(cfg), 0};
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        write_report(r.bundle, out, cfg.stem());
        stems.push_back(cfg.stem());
        return r;
    }

    void verdict(int id, const std::string& title, bool ok, const std::string& detail, double seconds)
    {
        failures += !ok;
        std::string line = std::string(ok ? "PASS" : "FAIL") + " [" + std::to_string(id) + "] " + title + ": " + detail;
        record << line << "\n";
        char t[32];
        std::snprintf(t, sizeof t, " (%.1f s)", seconds);
        if (!quiet)
            std::cout << line << t << std::endl;
    }
};

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double as_number(const nlohmann::json& j)
{
    return j.is_number() ? j.get<double>() : std::numeric_limits<double>::infinity();
}

double since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void crit_oracle(Suite& s)
{
    auto r = s.run("c01_oracle");
    bool ok = r.seconds < 60;
    std::string detail = "max |z| per model";
    for (auto& m : r.bundle.summary["models"]) {
        double z = as_number(m["max_abs_z"]);
        ok = ok && z <= 4;
        detail += " " + m["model"]["name"].get<std::string>() + "=" + fmt("%.3f", z);
    }
    s.verdict(1, "KMC vs exact uniformization on 3 sites", ok, detail + " (limit 4)", r.seconds);
}

void crit_skew(Suite& s)
{
    double seconds = 0;
    std::vector<std::vector<double>> gaps(2);
    for (int n : {6, 8, 10}) {
        auto r = s.run("c02_skew_n" + std::to_string(n));
        seconds += r.seconds;
        for (std::size_t i = 0; i < 2; ++i)
            gaps[i].push_back(as_number(r.bundle.summary["models"][i]["skew_gap"]));
    }
    const char* names[] = {"SEP", "ASEP(0.7,0.3)"};
    bool ok = seconds < 300;
    std::string detail;
    for (std::size_t i = 0; i < 2; ++i) {
        auto& g = gaps[i];
        bool small = g[0] <= 1e-9;
        bool decreasing = g[1] < g[0] && g[2] < g[1];
        ok = ok && (small || decreasing);
        detail += std::string(i ? "; " : "") + names[i] + " gap n=6,8,10: " + fmt("%.3e", g[0]) + ", " +
                  fmt("%.3e", g[1]) + ", " + fmt("%.3e", g[2]) + (small ? " (<= 1e-9)" : decreasing ? " (decreasing)" : " (not decreasing)");
    }
    s.verdict(2, "skew-time reversibility", ok, detail, seconds);
}

void crit_argmax(Suite& s)
{
    auto r = s.run("c03_argmax");
    double d = as_number(r.bundle.summary["models"][0]["argmax_discrepancy"]);
    s.verdict(3, "gradient/argmax identity, TASEP 6 sites", d <= 1e-9 && r.seconds < 300,
              "max discrepancy " + fmt("%.3e", d) + " (limit 1e-9)", r.seconds);
}

void crit_energy(Suite& s)
{
    auto r = s.run("c04_energy");
    auto& j = r.bundle.summary;
    double exact = j["exact"], mc = j["mc_mean"], se = j["mc_stderr"];
    double q = 2 * (0.5 * std::erfc(-std::sqrt(0.005) / std::sqrt(2.0))) - 1;
    double oracle = std::pow(1 + q * q, 200);
    double cap = std::exp(4 / (2 * M_PI)) * 1.05;
    bool ok = std::abs(exact - oracle) <= 1e-12 * oracle && exact <= cap && std::abs(mc - exact) <= 4 * se &&
              r.seconds < 60;
    s.verdict(4, "likelihood-ratio energy", ok,
              "exact " + fmt("%.6f", exact) + " vs oracle " + fmt("%.6f", oracle) + ", cap " + fmt("%.6f", cap) +
                  ", MC " + fmt("%.6f", mc) + " +- " + fmt("%.6f", se),
              r.seconds);
}

void crit_maxima(Suite& s)
{
    auto r = s.run("c05_maxima");
    bool monotone = true;
    double prev = 1, at20 = 0;
    for (auto& row : r.bundle.rows) {
        double t = std::stod(row[2]);
        monotone = monotone && t <= prev;
        prev = t;
        if (row[0] == "20")
            at20 = t;
    }
    double c = r.bundle.summary["c"];
    s.verdict(5, "maxima tail", monotone && c > 0 && at20 < 1e-3 && r.seconds < 300,
              std::string("tail nonincreasing ") + (monotone ? "yes" : "no") + ", c " + fmt("%.4f", c) +
                  ", P(X >= 20) " + fmt("%.3e", at20) + " (limit 1e-3)",
              r.seconds);
}

void crit_comparability(Suite& s)
{
    auto seg = s.run("c06_comparability");
    auto ring = s.run("c06_comparability_ring");
    auto& c = seg.bundle.summary["models"][0]["comparability"];
    auto& cr = ring.bundle.summary["models"][0]["comparability"];
    bool ok = seg.seconds + ring.seconds < 120;
    std::string detail = "segment";
    for (const char* key : {"upper", "lower"}) {
        double a = as_number(c[0][key]), b = as_number(c[1][key]);
        double change = std::abs(b - a) / std::abs(a);
        ok = ok && std::isfinite(a) && std::isfinite(b) && change <= 0.2;
        detail += std::string(" ") + key + " " + fmt("%.4f", a) + " -> " + fmt("%.4f", b) + " (" +
                  fmt("%.1f", 100 * change) + "%)";
    }
    detail += "; ring half filling upper " + fmt("%.4f", as_number(cr[0]["upper"])) + " -> " +
              fmt("%.4f", as_number(cr[1]["upper"])) + ", lower " + fmt("%.4f", as_number(cr[0]["lower"])) +
              " -> " + fmt("%.4f", as_number(cr[1]["lower"]));
    s.verdict(6, "Dirichlet comparability, n = 5 vs 6", ok, detail, seg.seconds + ring.seconds);
}

void crit_cycles(Suite& s)
{
    double seconds = 0;
    bool ok = true;
    std::string detail;
    for (int i = 1; i <= 3; ++i) {
        auto r = s.run("c07_decompose_" + std::to_string(i));
        seconds += r.seconds;
        bool verified = r.bundle.summary["verified"] == true;
        ok = ok && verified;
        detail += std::string(i > 1 ? ", " : "") + "law " + std::to_string(i) + (verified ? " verified" : " NOT verified");
        for (auto& row : r.bundle.rows) {
            double B = std::stod(row[3]);
            bool pass = row[5] == "pass" && std::isfinite(B);
            if (row[2] == "0 1 0" || row[2] == "0 2 0")
                pass = pass && std::abs(B - 1) <= 1e-9;
            if (row[2] == "0 2 1 0")
                detail += ", (0,2,1,0) B " + fmt("%.6f", B) + " check " + row[5];
            ok = ok && pass;
        }
    }
    auto t0 = std::chrono::steady_clock::now();
    for (auto law : {RateMap{{1, 0.5}, {-1, 0.5}}, RateMap{{1, 0.25}, {-1, 0.25}, {2, 0.25}, {-2, 0.25}}}) {
        auto rep = sector_constant(law, 2, 5, Boundary::ClosedSegment, 7);
        ok = ok && std::abs(rep.B - 1) <= 1e-9 && rep.check_passed;
        detail += ", symmetric law B " + fmt("%.12f", rep.B);
    }
    seconds += since(t0);
    s.verdict(7, "cycle decomposition and sector constant", ok && seconds < 60, detail, seconds);
}

void crit_tw(Suite& s)
{
    auto r = s.run("c08_tw");
    auto t0 = std::chrono::steady_clock::now();
    double worst = 0;
    for (double x : {-4.0, -2.0, 0.0, 2.0})
        worst = std::max(worst, std::abs(tracy_widom_gue_cdf(x, 64) - tracy_widom_gue_cdf(x, 128)));
    double seconds = r.seconds + since(t0);
    double mean = r.bundle.summary["mean"];
    s.verdict(8, "Tracy-Widom reference", worst <= 1e-8 && std::abs(mean + 1.7711) <= 5e-3 && seconds < 60,
              "max |F(64) - F(128)| " + fmt("%.3e", worst) + " (limit 1e-8), mean " + fmt("%.6f", mean) +
                  " (target -1.7711 +- 5e-3)",
              seconds);
}

void crit_onepoint(Suite& s)
{
    auto r = s.run("c09_onepoint");
    auto& j = r.bundle.summary;
    double ks = j["ks_distance"];
    s.verdict(9, "one-point law vs F2, TASEP step", ks <= 0.05 && r.seconds < 600,
              "KS " + fmt("%.4f", ks) + " (limit 0.05), mean " + fmt("%.4f", j["mean"].get<double>()) +
                  ", variance " + fmt("%.4f", j["variance"].get<double>()),
              r.seconds);
}

void crit_compare(Suite& s)
{
    auto r = s.run("c10_compare");
    auto& rows = r.bundle.summary["rows"];
    double d1 = std::abs(rows[0]["difference"].get<double>()), d2 = std::abs(rows[1]["difference"].get<double>());
    double s1 = rows[0]["stderr"], s2 = rows[1]["stderr"];
    double se = std::sqrt(s1 * s1 + s2 * s2);
    s.verdict(10, "ASEP vs TASEP hit difference", d2 <= d1 + 2 * se && r.seconds < 900,
              "|diff| eps 0.02: " + fmt("%.4f", d1) + ", eps 0.005: " + fmt("%.4f", d2) + ", 2 se " +
                  fmt("%.4f", 2 * se) + " (p " + fmt("%.3f", rows[0]["p_a"].get<double>()) + "/" +
                  fmt("%.3f", rows[0]["p_b"].get<double>()) + ", " + fmt("%.3f", rows[1]["p_a"].get<double>()) +
                  "/" + fmt("%.3f", rows[1]["p_b"].get<double>()) + ")",
              r.seconds);
}

void crit_local_shape(Suite& s)
{
    auto t0 = std::chrono::steady_clock::now();
    double worst = 0;
    for (double eps : {1.0, 0.25, 0.01})
        for (const char* bits : {"00", "01", "10", "11"}) {
            auto sh = local_shape(make_field(bits_from_string(bits)), 1, eps);
            worst = std::max(worst, std::abs(sh.max_expression() - 4.0 * sh.is_local_max));
            worst = std::max(worst, std::abs(sh.min_expression() - 4.0 * sh.is_local_min));
        }
    double seconds = since(t0);
    s.verdict(11, "local max/min identities", worst <= 1e-12 && seconds < 1,
              "max deviation " + fmt("%.3e", worst) + " over 4 patterns x 3 eps", seconds);
}

Suite run_suite(const fs::path& out, bool quiet)
{
    fs::remove_all(out);
    fs::create_directories(out);
    Suite s{out, {}, {}, 0, quiet};
    crit_oracle(s);
    crit_skew(s);
    crit_argmax(s);
    crit_energy(s);
    crit_maxima(s);
    crit_comparability(s);
    crit_cycles(s);
    crit_tw(s);
    crit_onepoint(s);
    crit_compare(s);
    crit_local_shape(s);
    std::ofstream(out / "verdicts.txt") << s.record.str();
    return s;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

int main(int argc, char** argv)
{
    fs::path out = argc > 1 ? fs::path(argv[1]) : fs::current_path() / "acceptance_out";
    try {
        auto t0 = std::chrono::steady_clock::now();
        Suite first = run_suite(out / "run1", false);
        std::cout << "rerunning the suite for the determinism check" << std::endl;
        Suite second = run_suite(out / "run2", true);
        std::size_t files = 0, differing = 0;
        for (auto& e : fs::directory_iterator(out / "run1")) {
            ++files;
            auto other = out / "run2" / e.path().filename();
            differing += !fs::exists(other) || slurp(e.path()) != slurp(other);
        }
        for (auto& e : fs::directory_iterator(out / "run2"))
            differing += !fs::exists(out / "run1" / e.path().filename());
        first.verdict(12, "determinism", differing == 0 && files > 0,
                      std::to_string(files) + " artifacts compared, " + std::to_string(differing) + " differ",
                      since(t0));
        return first.failures ? 1 : 0;
    } catch (const std::exception& e) {
        std::cout << "FAIL acceptance aborted: " << e.what() << std::endl;
        return 2;
    }
}
