#pragma once

#include <kpz/core_model.hpp>
#include <kpz/error.hpp>
#include <kpz/exact_oracle.hpp>
#include <kpz/initial_data.hpp>
#include <kpz/kmc_engine.hpp>
#include <kpz/observables.hpp>
#include <kpz/sector_cycles.hpp>
#include <kpz/tw_reference.hpp>

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#ifndef KPZ_VERSION
#define KPZ_VERSION "0.1.0"
#endif

namespace kpz {

inline constexpr const char* kVersion = KPZ_VERSION;

enum class ExperimentKind { Simulate, Compare, ExactCheck, Decompose, TwTable, MaximaTail, WedgeEnergy };

inline std::string to_string(ExperimentKind k)
{
    switch (k) {
    case ExperimentKind::Simulate: return "simulate";
    case ExperimentKind::Compare: return "compare";
    case ExperimentKind::ExactCheck: return "exact-check";
    case ExperimentKind::Decompose: return "decompose";
    case ExperimentKind::TwTable: return "tw-table";
    case ExperimentKind::MaximaTail: return "maxima-tail";
    case ExperimentKind::WedgeEnergy: return "wedge-energy";
    }
    return "";
}

struct ModelConfig {
    std::string name = "tasep"; // tasep | asep | aep | wasep
    double p = 1, q = 0;        // asep
    bool unit_drift = false;    // asep: rescale so that p - q = 1
    RateMap rates;              // aep
    double delta = 0;           // wasep, at the experiment's eps

    ModelSpec build(double eps) const
    {
        if (name == "tasep")
            return ModelSpec::tasep();
        if (name == "asep")
            return unit_drift ? ModelSpec::asep_unit_drift(p, q) : ModelSpec::asep(p, q);
        if (name == "aep")
            return ModelSpec::aep(rates);
        if (name == "wasep")
            return ModelSpec::wasep(eps, delta);
        fail(Errc::InvalidArgument, "unknown model '" + name + "'");
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct WindowConfig {
    double x_min = -1, x_max = 1;
    Boundary boundary = Boundary::ClosedSegment;

    Window build(double eps) const { return macro_window(x_min, x_max, eps, boundary); }
    friend bool operator==(const WindowConfig&, const WindowConfig&) = default;
};

struct InitialConfig {
    std::string type = "step"; // step | profile | equilibrium | wedge
    double anchor = 0;         // equilibrium: rescaled height at the origin
    ProfileSpec profile = ProfileSpec::constant(0);
    RandomWedgeSpec wedge;

    friend bool operator==(const InitialConfig&, const InitialConfig&) = default;
};

struct ObservableConfig {
    double x = 0;
    double center = 0;
    std::optional<double> scale; // defaults to t^(1/3)
    bool tw_reference = false;
    int tw_m = 64;

    friend bool operator==(const ObservableConfig&, const ObservableConfig&) = default;
};

struct OracleConfig {
    std::size_t sites = 3;
    Boundary boundary = Boundary::ClosedSegment;
    std::string initial = "110";
    double micro_time = 2;
    std::vector<std::string> checks{"distribution"}; // distribution | skew | argmax | comparability
    ProfileSpec g = ProfileSpec::constant(0);         // microscopic units
    std::vector<std::size_t> comparability_sites;

    friend bool operator==(const OracleConfig&, const OracleConfig&) = default;
};

struct DecomposeConfig {
    std::map<int, Rational> law;
    std::size_t particles = 1;
    std::size_t pairs = 1000;

    friend bool operator==(const DecomposeConfig&, const DecomposeConfig&) = default;
};

struct TwConfig {
    double s_min = -10, s_max = 8, step = 0.01;
    int m = 64;

    friend bool operator==(const TwConfig&, const TwConfig&) = default;
};

struct EnergyConfig {
    double a = 1, d = 1;

    friend bool operator==(const EnergyConfig&, const EnergyConfig&) = default;
};

struct OutputConfig {
    std::string dir = ".";
    std::string name; // file stem, defaults to the experiment kind

    friend bool operator==(const OutputConfig&, const OutputConfig&) = default;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::Simulate;
    std::vector<ModelConfig> models{ModelConfig{}};
    InitialConfig initial;
    ScalingParams scaling{0.01, 1, 0};
    WindowConfig window;
    std::optional<TargetSet> target;
    std::vector<double> eps_values; // compare
    std::size_t samples = 1000;
    std::uint64_t seed = 0;
    ObservableConfig observable;
    OracleConfig oracle;
    DecomposeConfig decompose;
    TwConfig tw;
    EnergyConfig energy;
    OutputConfig output;

    std::string stem() const { return output.name.empty() ? to_string(kind) : output.name; }
    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

inline int line_of(const YAML::Node& n)
{
    int l = n.Mark().line;
    return l < 0 ? 0 : l + 1;
}

[[noreturn]] inline void parse_fail(const YAML::Node& n, const std::string& field, const std::string& msg)
{
    std::string where = line_of(n) > 0 ? "line " + std::to_string(line_of(n)) + ", " : "";
    fail(Errc::ParseError, where + "field '" + field + "': " + msg);
}

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

inline void check_keys(const YAML::Node& n, const std::string& path, std::initializer_list<const char*> allowed)
{
    if (!n.IsMap())
        parse_fail(n, path.empty() ? "<root>" : path, "expected a mapping");
    for (auto it = n.begin(); it != n.end(); ++it) {
        auto key = it->first.as<std::string>();
        bool ok = false;
        for (const char* a : allowed)
            ok = ok || key == a;
        if (!ok)
            parse_fail(it->first, join(path, key), "unknown field");
    }
}

template <class T>
T as(const YAML::Node& n, const std::string& field)
{
    try {
        return n.as<T>();
    } catch (const YAML::Exception&) {
        parse_fail(n, field, "cannot convert '" + (n.IsScalar() ? n.Scalar() : std::string("<node>")) + "'");
    }
}

template <class T>
void read(const YAML::Node& parent, const std::string& path, const char* key, T& out)
{
    if (auto n = parent[key])
        out = as<T>(n, join(path, key));
}

inline Boundary parse_boundary(const YAML::Node& n, const std::string& field)
{
    auto s = as<std::string>(n, field);
    if (s == "segment")
        return Boundary::ClosedSegment;
    if (s == "ring")
        return Boundary::PeriodicRing;
    parse_fail(n, field, "boundary must be 'segment' or 'ring'");
}

inline ProfileSpec parse_profile(const YAML::Node& n, const std::string& path)
{
    if (n.IsScalar())
        return ProfileSpec::constant(as<double>(n, path));
    check_keys(n, path, {"knots", "left_slope", "right_slope", "slope", "intercept", "constant"});
    ProfileSpec p;
    if (auto c = n["constant"])
        p = ProfileSpec::constant(as<double>(c, join(path, "constant")));
    if (auto s = n["slope"]) {
        double slope = as<double>(s, join(path, "slope")), b = 0;
        read(n, path, "intercept", b);
        p = ProfileSpec::linear(slope, b);
    }
    if (auto k = n["knots"]) {
        if (!k.IsSequence())
            parse_fail(k, join(path, "knots"), "expected a list of [x, h] pairs");
        p.knots.clear();
        for (std::size_t i = 0; i < k.size(); ++i) {
            auto f = join(path, "knots[" + std::to_string(i) + "]");
            if (!k[i].IsSequence() || k[i].size() != 2)
                parse_fail(k[i], f, "expected [x, h]");
            p.knots.emplace_back(as<double>(k[i][0], f), as<double>(k[i][1], f));
        }
    }
    read(n, path, "left_slope", p.left_slope);
    read(n, path, "right_slope", p.right_slope);
    if (p.knots.empty())
        parse_fail(n, path, "profile needs knots, a constant or a slope");
    return p;
}

inline ModelConfig parse_model(const YAML::Node& n, const std::string& path)
{
    if (n.IsScalar())
        return ModelConfig{as<std::string>(n, path)};
    check_keys(n, path, {"name", "p", "q", "unit_drift", "rates", "delta"});
    ModelConfig m;
    read(n, path, "name", m.name);
    read(n, path, "p", m.p);
    read(n, path, "q", m.q);
    read(n, path, "unit_drift", m.unit_drift);
    read(n, path, "delta", m.delta);
    if (auto r = n["rates"]) {
        if (!r.IsMap())
            parse_fail(r, join(path, "rates"), "expected a displacement -> rate mapping");
        for (auto it = r.begin(); it != r.end(); ++it) {
            auto f = join(path, "rates." + it->first.as<std::string>());
            m.rates[as<int>(it->first, f)] = as<double>(it->second, f);
        }
    }
    return m;
}

inline ExperimentKind parse_kind(const YAML::Node& n)
{
    auto s = as<std::string>(n, "kind");
    for (auto k : {ExperimentKind::Simulate, ExperimentKind::Compare, ExperimentKind::ExactCheck,
                   ExperimentKind::Decompose, ExperimentKind::TwTable, ExperimentKind::MaximaTail,
                   ExperimentKind::WedgeEnergy})
        if (to_string(k) == s)
            return k;
    throw Error(Errc::ValidationError, "unknown experiment kind '" + s + "'", Errc::InvalidArgument);
}

inline Rational parse_weight(const YAML::Node& n, const std::string& field)
{
    try {
        return parse_rational(as<std::string>(n, field));
    } catch (const Error&) {
        parse_fail(n, field, "expected an integer or a fraction p/q");
    }
}

} // namespace detail

InitSampler make_sampler(const InitialConfig& ic, const Window& w, double eps);
void validate_config(const ExperimentConfig& cfg);

// Parses and validates a YAML experiment description. JSON documents are accepted as well.
inline ExperimentConfig parse_config(const std::string& text)
{
    using namespace detail;
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        fail(Errc::ParseError, "line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
    }
    if (!root || root.IsNull())
        fail(Errc::ParseError, "empty configuration");
    check_keys(root, "",
               {"kind", "model", "models", "initial", "scaling", "window", "target", "eps_values", "samples", "seed",
                "observable", "oracle", "decompose", "tw", "energy", "output"});
    ExperimentConfig cfg;
    if (!root["kind"])
        fail(Errc::ParseError, "field 'kind': required");
    cfg.kind = parse_kind(root["kind"]);

    if (root["model"] && root["models"])
        parse_fail(root["models"], "models", "give either 'model' or 'models'");
    if (auto m = root["model"])
        cfg.models = {parse_model(m, "model")};
    if (auto m = root["models"]) {
        if (!m.IsSequence())
            parse_fail(m, "models", "expected a list");
        cfg.models.clear();
        for (std::size_t i = 0; i < m.size(); ++i)
            cfg.models.push_back(parse_model(m[i], "models[" + std::to_string(i) + "]"));
    }
    if (auto n = root["initial"]) {
        check_keys(n, "initial", {"type", "anchor", "profile", "wedge"});
        read(n, "initial", "type", cfg.initial.type);
        read(n, "initial", "anchor", cfg.initial.anchor);
        if (auto p = n["profile"])
            cfg.initial.profile = parse_profile(p, "initial.profile");
        if (auto w = n["wedge"]) {
            check_keys(w, "initial.wedge", {"ys", "bs", "gamma", "s", "L"});
            auto& ws = cfg.initial.wedge;
            read(w, "initial.wedge", "ys", ws.ys);
            read(w, "initial.wedge", "bs", ws.bs);
            read(w, "initial.wedge", "gamma", ws.gamma);
            read(w, "initial.wedge", "s", ws.s);
            read(w, "initial.wedge", "L", ws.L);
        }
    }
    if (auto n = root["scaling"]) {
        check_keys(n, "scaling", {"eps", "t", "a"});
        read(n, "scaling", "eps", cfg.scaling.eps);
        read(n, "scaling", "t", cfg.scaling.t);
        read(n, "scaling", "a", cfg.scaling.a);
    }
    if (auto n = root["window"]) {
        check_keys(n, "window", {"x_min", "x_max", "boundary"});
        read(n, "window", "x_min", cfg.window.x_min);
        read(n, "window", "x_max", cfg.window.x_max);
        if (auto b = n["boundary"])
            cfg.window.boundary = parse_boundary(b, "window.boundary");
    }
    if (auto n = root["target"]) {
        check_keys(n, "target", {"mode", "g"});
        TargetSet t;
        std::string mode = "hyp";
        read(n, "target", "mode", mode);
        if (mode == "hyp")
            t.mode = TargetMode::Hyp;
        else if (mode == "epi")
            t.mode = TargetMode::Epi;
        else
            parse_fail(n["mode"], "target.mode", "expected 'hyp' or 'epi'");
        if (!n["g"])
            parse_fail(n, "target.g", "required");
        t.g = parse_profile(n["g"], "target.g");
        cfg.target = t;
    }
    read(root, "", "eps_values", cfg.eps_values);
    read(root, "", "samples", cfg.samples);
    read(root, "", "seed", cfg.seed);
    if (auto n = root["observable"]) {
        check_keys(n, "observable", {"x", "center", "scale", "tw_reference", "tw_m"});
        read(n, "observable", "x", cfg.observable.x);
        read(n, "observable", "center", cfg.observable.center);
        if (auto s = n["scale"])
            cfg.observable.scale = as<double>(s, "observable.scale");
        read(n, "observable", "tw_reference", cfg.observable.tw_reference);
        read(n, "observable", "tw_m", cfg.observable.tw_m);
    }
    if (auto n = root["oracle"]) {
        check_keys(n, "oracle", {"sites", "boundary", "initial", "micro_time", "checks", "g", "comparability_sites"});
        auto& o = cfg.oracle;
        read(n, "oracle", "sites", o.sites);
        if (auto b = n["boundary"])
            o.boundary = parse_boundary(b, "oracle.boundary");
        read(n, "oracle", "initial", o.initial);
        read(n, "oracle", "micro_time", o.micro_time);
        read(n, "oracle", "checks", o.checks);
        if (auto g = n["g"])
            o.g = parse_profile(g, "oracle.g");
        read(n, "oracle", "comparability_sites", o.comparability_sites);
    }
    if (auto n = root["decompose"]) {
        check_keys(n, "decompose", {"law", "particles", "pairs"});
        auto& d = cfg.decompose;
        if (auto law = n["law"]) {
            if (!law.IsMap())
                parse_fail(law, "decompose.law", "expected a displacement -> weight mapping");
            for (auto it = law.begin(); it != law.end(); ++it) {
                auto f = "decompose.law." + it->first.as<std::string>();
                d.law[as<int>(it->first, f)] = parse_weight(it->second, f);
            }
        }
        read(n, "decompose", "particles", d.particles);
        read(n, "decompose", "pairs", d.pairs);
    }
    if (auto n = root["tw"]) {
        check_keys(n, "tw", {"s_min", "s_max", "step", "m"});
        read(n, "tw", "s_min", cfg.tw.s_min);
        read(n, "tw", "s_max", cfg.tw.s_max);
        read(n, "tw", "step", cfg.tw.step);
        read(n, "tw", "m", cfg.tw.m);
    }
    if (auto n = root["energy"]) {
        check_keys(n, "energy", {"a", "d"});
        read(n, "energy", "a", cfg.energy.a);
        read(n, "energy", "d", cfg.energy.d);
    }
    if (auto n = root["output"]) {
        check_keys(n, "output", {"dir", "name"});
        read(n, "output", "dir", cfg.output.dir);
        read(n, "output", "name", cfg.output.name);
    }
    validate_config(cfg);
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        fail(Errc::IoError, "cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

namespace detail {

// Non-finite values are written the way YAML spells them so the echo parses back.
inline nlohmann::json num(double v)
{
    if (std::isnan(v))
        return ".nan";
    if (std::isinf(v))
        return v > 0 ? ".inf" : "-.inf";
    return v;
}

inline nlohmann::json profile_json(const ProfileSpec& p)
{
    nlohmann::json k = nlohmann::json::array();
    for (auto [x, h] : p.knots)
        k.push_back({num(x), num(h)});
    return {{"knots", k}, {"left_slope", num(p.left_slope)}, {"right_slope", num(p.right_slope)}};
}

inline nlohmann::json model_json(const ModelConfig& m)
{
    nlohmann::json j{{"name", m.name}};
    if (m.name == "asep") {
        j["p"] = num(m.p);
        j["q"] = num(m.q);
        j["unit_drift"] = m.unit_drift;
    } else if (m.name == "aep") {
        nlohmann::json r = nlohmann::json::object();
        for (auto [v, p] : m.rates)
            r[std::to_string(v)] = num(p);
        j["rates"] = r;
    } else if (m.name == "wasep") {
        j["delta"] = num(m.delta);
    }
    return j;
}

} // namespace detail

// Full echo of the configuration, defaults included.
inline nlohmann::json config_to_json(const ExperimentConfig& c)
{
    using detail::num;
    nlohmann::json j;
    j["kind"] = to_string(c.kind);
    j["models"] = nlohmann::json::array();
    for (auto& m : c.models)
        j["models"].push_back(detail::model_json(m));
    nlohmann::json wedge{{"ys", c.initial.wedge.ys}, {"bs", c.initial.wedge.bs},
                         {"gamma", num(c.initial.wedge.gamma)}, {"s", num(c.initial.wedge.s)},
                         {"L", num(c.initial.wedge.L)}};
    j["initial"] = {{"type", c.initial.type},
                    {"anchor", num(c.initial.anchor)},
                    {"profile", detail::profile_json(c.initial.profile)},
                    {"wedge", wedge}};
    j["scaling"] = {{"eps", num(c.scaling.eps)}, {"t", num(c.scaling.t)}, {"a", num(c.scaling.a)}};
    j["window"] = {
        {"x_min", num(c.window.x_min)}, {"x_max", num(c.window.x_max)}, {"boundary", to_string(c.window.boundary)}};
    if (c.target)
        j["target"] = {{"mode", c.target->mode == TargetMode::Hyp ? "hyp" : "epi"},
                       {"g", detail::profile_json(c.target->g)}};
    j["eps_values"] = c.eps_values;
    j["samples"] = c.samples;
    j["seed"] = c.seed;
    j["observable"] = {{"x", num(c.observable.x)},
                       {"center", num(c.observable.center)},
                       {"tw_reference", c.observable.tw_reference},
                       {"tw_m", c.observable.tw_m}};
    if (c.observable.scale)
        j["observable"]["scale"] = num(*c.observable.scale);
    j["oracle"] = {{"sites", c.oracle.sites},
                   {"boundary", to_string(c.oracle.boundary)},
                   {"initial", c.oracle.initial},
                   {"micro_time", num(c.oracle.micro_time)},
                   {"checks", c.oracle.checks},
                   {"g", detail::profile_json(c.oracle.g)},
                   {"comparability_sites", c.oracle.comparability_sites}};
    nlohmann::json law = nlohmann::json::object();
    for (auto& [v, w] : c.decompose.law)
        law[std::to_string(v)] = to_string(w);
    j["decompose"] = {{"law", law}, {"particles", c.decompose.particles}, {"pairs", c.decompose.pairs}};
    j["tw"] = {{"s_min", num(c.tw.s_min)}, {"s_max", num(c.tw.s_max)}, {"step", num(c.tw.step)}, {"m", c.tw.m}};
    j["energy"] = {{"a", num(c.energy.a)}, {"d", num(c.energy.d)}};
    j["output"] = {{"dir", c.output.dir}, {"name", c.output.name}};
    return j;
}

inline InitSampler make_sampler(const InitialConfig& ic, const Window& w, double eps)
{
    if (ic.type == "step") {
        HeightField f = step_initial_data(w);
        return [f](std::uint64_t) { return f; };
    }
    if (ic.type == "profile") {
        HeightField f = discretize_profile(ic.profile, w, eps);
        return [f](std::uint64_t) { return f; };
    }
    if (ic.type == "equilibrium")
        return [=](std::uint64_t s) { return sample_equilibrium_walk(w, eps, ic.anchor, s); };
    if (ic.type == "wedge")
        return [=](std::uint64_t s) { return sample_randomized_wedge(ic.wedge, w, eps, s); };
    fail(Errc::InvalidArgument, "unknown initial data type '" + ic.type + "'");
}

inline void validate_config(const ExperimentConfig& cfg)
{
    try {
        const auto k = cfg.kind;
        const double eps = cfg.scaling.eps;
        if (!(eps > 0) || !(eps <= 1))
            fail(Errc::InvalidArgument, "scaling.eps must lie in (0, 1]");
        if (!(cfg.scaling.t >= 0) || !(cfg.scaling.a >= 0))
            fail(Errc::InvalidArgument, "scaling.t and scaling.a must be nonnegative");
        for (auto& m : cfg.models)
            (void)m.build(eps);
        if (cfg.samples == 0 && k != ExperimentKind::Decompose && k != ExperimentKind::TwTable)
            fail(Errc::NoSamples, "samples must be positive");
        if (cfg.target)
            cfg.target->g.validate();
        cfg.initial.profile.validate();
        if (k == ExperimentKind::Simulate || k == ExperimentKind::Compare || k == ExperimentKind::MaximaTail) {
            std::vector<double> all = cfg.eps_values.empty() ? std::vector<double>{eps} : cfg.eps_values;
            for (double e : all) {
                if (!(e > 0) || !(e <= 1))
                    fail(Errc::InvalidArgument, "eps values must lie in (0, 1]");
                Window w = cfg.window.build(e);
                if (k != ExperimentKind::MaximaTail)
                    for (auto& m : cfg.models)
                        (void)build_state(m.build(e), make_sampler(cfg.initial, w, e)(0), 0);
            }
        }
        if (k == ExperimentKind::Simulate) {
            if (cfg.models.size() != 1)
                fail(Errc::InvalidArgument, "simulate takes exactly one model");
            Window w = cfg.window.build(eps);
            auto y = cfg.scaling.micro_site(cfg.observable.x);
            if (y < w.left || y > w.right())
                fail(Errc::SiteOutsideWindow, "observable.x outside the window");
            if (cfg.observable.scale && !(*cfg.observable.scale > 0))
                fail(Errc::InvalidArgument, "observable.scale must be positive");
            if (!cfg.observable.scale && !(cfg.scaling.t > 0))
                fail(Errc::InvalidArgument, "default scale t^(1/3) needs t > 0");
            if (cfg.observable.tw_reference && cfg.observable.tw_m < 16)
                fail(Errc::OutOfRange, "tw_m must be at least 16");
        }
        if (k == ExperimentKind::Compare) {
            if (cfg.models.size() != 2)
                fail(Errc::InvalidArgument, "compare takes exactly two models");
            if (!cfg.target)
                fail(Errc::InvalidArgument, "compare needs a target set");
        }
        if (k == ExperimentKind::ExactCheck) {
            const auto& o = cfg.oracle;
            if (o.sites == 0 || o.sites > kMaxOracleSites)
                fail(Errc::TooLarge, "oracle.sites must be in [1, " + std::to_string(kMaxOracleSites) + "]");
            if (bits_from_string(o.initial).size() != o.sites)
                fail(Errc::InvalidArgument, "oracle.initial must have one bit per site");
            if (!(o.micro_time >= 0))
                fail(Errc::InvalidArgument, "oracle.micro_time must be nonnegative");
            o.g.validate();
            for (auto& c : o.checks)
                if (c != "distribution" && c != "skew" && c != "argmax" && c != "comparability")
                    fail(Errc::InvalidArgument, "unknown oracle check '" + c + "'");
            for (auto n : o.comparability_sites)
                if (n < 2 || n > kMaxOracleSites)
                    fail(Errc::TooLarge, "comparability sites must be in [2, " + std::to_string(kMaxOracleSites) + "]");
        }
        if (k == ExperimentKind::Decompose) {
            std::map<int, Rational> law = cfg.decompose.law;
            if (law.empty())
                fail(Errc::Empty, "decompose.law is empty");
            (void)detail::normalized_mean_zero(law);
        }
        if (k == ExperimentKind::TwTable) {
            if (!(cfg.tw.step > 0))
                fail(Errc::InvalidArgument, "tw.step must be positive");
            if (!(cfg.tw.s_min >= -10 && cfg.tw.s_max <= 10 && cfg.tw.s_min <= cfg.tw.s_max))
                fail(Errc::OutOfRange, "tw range must lie in [-10, 10]");
            if (cfg.tw.m < 16)
                fail(Errc::OutOfRange, "tw.m must be at least 16");
        }
        if (k == ExperimentKind::MaximaTail) {
            const auto& f = cfg.initial.profile;
            if (!(f.right_slope <= -0.1) || !(f.left_slope >= 0.1))
                fail(Errc::NonDecayingProfile, "maxima-tail profile must decay on both sides");
        }
        if (k == ExperimentKind::WedgeEnergy)
            (void)rn_l2_energy(cfg.energy.a, cfg.energy.d, eps);
    } catch (const Error& e) {
        if (e.code() == Errc::ValidationError || e.code() == Errc::ParseError)
            throw;
        throw Error(Errc::ValidationError, e.what(), e.code());
    }
}

struct Series {
    std::string name;
    std::vector<double> x, y;
};

struct ReportBundle {
    std::string kind;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
    nlohmann::json summary = nlohmann::json::object();
    nlohmann::json config = nlohmann::json::object();
    std::string x_label, y_label;
    std::vector<Series> series; // empty: no SVG

    std::string csv() const;
    std::string json() const;
    std::string svg() const;
};

inline std::string fmt_num(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n\r") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string ReportBundle::csv() const
{
    std::string out;
    auto line = [&](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i)
                out += ',';
            out += csv_field(fields[i]);
        }
        out += '\n';
    };
    line(columns);
    for (auto& r : rows)
        line(r);
    return out;
}

inline std::string ReportBundle::json() const
{
    nlohmann::json j{{"kind", kind}, {"version", kVersion}, {"config", config}, {"summary", summary}};
    if (config.contains("seed"))
        j["seed"] = config["seed"];
    return j.dump(2) + "\n";
}

inline std::string ReportBundle::svg() const
{
    if (series.empty())
        return {};
    const double W = 640, H = 400, m = 50;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i)
            if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) {
                x0 = std::min(x0, s.x[i]);
                x1 = std::max(x1, s.x[i]);
                y0 = std::min(y0, s.y[i]);
                y1 = std::max(y1, s.y[i]);
            }
    if (!(x1 > x0)) {
        x0 -= 1;
        x1 += 1;
    }
    if (!(y1 > y0)) {
        y0 -= 1;
        y1 += 1;
    }
    auto px = [&](double x) { return m + (x - x0) / (x1 - x0) * (W - 2 * m); };
    auto py = [&](double y) { return H - m - (y - y0) / (y1 - y0) * (H - 2 * m); };
    char buf[160];
    std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\">\n";
    std::snprintf(buf, sizeof buf, "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" stroke=\"black\"/>\n",
                  m, m, W - 2 * m, H - 2 * m);
    out += buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" font-size=\"12\">%s [%.4g, %.4g]</text>\n", m, H - 15,
                  x_label.c_str(), x0, x1);
    out += buf;
    std::snprintf(buf, sizeof buf, "<text x=\"5\" y=\"%g\" font-size=\"12\">%s [%.4g, %.4g]</text>\n", m - 20,
                  y_label.c_str(), y0, y1);
    out += buf;
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
    for (std::size_t k = 0; k < series.size(); ++k) {
        out += "<polyline fill=\"none\" stroke=\"";
        out += colors[k % 4];
        out += "\" points=\"";
        for (std::size_t i = 0; i < series[k].x.size(); ++i) {
            if (!std::isfinite(series[k].x[i]) || !std::isfinite(series[k].y[i]))
                continue;
            std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(series[k].x[i]), py(series[k].y[i]));
            out += buf;
        }
        out += "\"><title>" + series[k].name + "</title></polyline>\n";
    }
    return out + "</svg>\n";
}

inline void write_report(const ReportBundle& b, const std::filesystem::path& dir, const std::string& stem)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        fail(Errc::IoError, "cannot create " + dir.string() + ": " + ec.message());
    auto put = [&](const std::string& ext, const std::string& content) {
        auto p = dir / (stem + ext);
        std::ofstream out(p, std::ios::binary);
        out << content;
        if (!out)
            fail(Errc::IoError, "cannot write " + p.string());
    };
    put(".csv", b.csv());
    put(".json", b.json());
    if (!b.series.empty())
        put(".svg", b.svg());
}

namespace detail {

inline ReportBundle run_simulate(const ExperimentConfig& cfg)
{
    const auto& p = cfg.scaling;
    ModelSpec spec = cfg.models[0].build(p.eps);
    Window w = cfg.window.build(p.eps);
    InitSampler init = make_sampler(cfg.initial, w, p.eps);
    double scale = cfg.observable.scale ? *cfg.observable.scale : std::cbrt(p.t);
    std::size_t n = cfg.samples;
    std::vector<double> values(n);
    std::vector<std::uint8_t> hits(n);
    parallel_for(n, worker_count(), [&](std::size_t i) {
        std::uint64_t s = trajectory_seed(cfg.seed, i);
        SimState st = build_state(spec, init(s), s);
        run_to_time(st, p.micro_time());
        values[i] = (rescaled_height(st, p, cfg.observable.x) - cfg.observable.center) / scale;
        if (cfg.target)
            hits[i] = contains(*cfg.target, averaging_shift(st.field, p, cfg.seed, i), p);
    });
    ReportBundle b;
    b.columns = {"trajectory", "value", "hit"};
    for (std::size_t i = 0; i < n; ++i)
        b.rows.push_back({std::to_string(i), fmt_num(values[i]), cfg.target ? std::to_string(hits[i]) : ""});
    EmpiricalDistribution emp(values);
    b.summary["mean"] = emp.mean();
    b.summary["variance"] = n > 1 ? emp.variance() : 0.0;
    b.summary["samples"] = n;
    if (cfg.target) {
        std::size_t h = 0;
        for (auto v : hits)
            h += v;
        auto e = make_hit_estimate(h, n);
        b.summary["p_hat"] = e.p_hat;
        b.summary["stderr"] = e.std_error;
    }
    b.x_label = "value";
    b.y_label = "cdf";
    Series es{"empirical", {}, {}};
    for (std::size_t i = 0; i < n; ++i) {
        es.x.push_back(emp.sorted[i]);
        es.y.push_back(static_cast<double>(i + 1) / static_cast<double>(n));
    }
    b.series.push_back(es);
    if (cfg.observable.tw_reference) {
        double lo = std::max(-10.0, std::floor(emp.sorted.front()) - 1);
        double hi = std::min(10.0, std::ceil(emp.sorted.back()) + 1);
        TwTable tw = tw_table(std::min(lo, -8.0), std::max(hi, 6.0), 0.01, cfg.observable.tw_m);
        double ks = ks_distance(emp, [&](double x) { return tw.cdf(x); });
        b.summary["ks_distance"] = ks;
        b.summary["tw_mean"] = tw.mean;
        b.series.push_back({"tracy-widom", tw.s, tw.F});
    }
    return b;
}

inline ReportBundle run_compare(const ExperimentConfig& cfg)
{
    ReportBundle b;
    b.columns = {"eps", "p_a", "p_b", "difference", "stderr"};
    std::vector<double> eps_list = cfg.eps_values.empty() ? std::vector<double>{cfg.scaling.eps} : cfg.eps_values;
    Series sa{cfg.models[0].name, {}, {}}, sb{cfg.models[1].name, {}, {}};
    nlohmann::json rows = nlohmann::json::array();
    for (double eps : eps_list) {
        ScalingParams p{eps, cfg.scaling.t, cfg.scaling.a};
        Window w = cfg.window.build(eps);
        InitSampler init = make_sampler(cfg.initial, w, eps);
        auto ea = estimate_hit_probability(cfg.models[0].build(eps), init, p, *cfg.target, cfg.samples, cfg.seed);
        auto eb = estimate_hit_probability(cfg.models[1].build(eps), init, p, *cfg.target, cfg.samples, cfg.seed);
        double diff = ea.p_hat - eb.p_hat;
        double se = std::sqrt(ea.std_error * ea.std_error + eb.std_error * eb.std_error);
        b.rows.push_back({fmt_num(eps), fmt_num(ea.p_hat), fmt_num(eb.p_hat), fmt_num(diff), fmt_num(se)});
        rows.push_back({{"eps", eps}, {"p_a", ea.p_hat}, {"p_b", eb.p_hat}, {"difference", diff}, {"stderr", se}});
        sa.x.push_back(eps);
        sa.y.push_back(ea.p_hat);
        sb.x.push_back(eps);
        sb.y.push_back(eb.p_hat);
    }
    b.summary["rows"] = rows;
    b.x_label = "eps";
    b.y_label = "p_hat";
    b.series = {sa, sb};
    return b;
}

inline ReportBundle run_exact_check(const ExperimentConfig& cfg)
{
    const auto& o = cfg.oracle;
    ReportBundle b;
    b.columns = {"check", "model", "item", "value", "reference", "deviation"};
    HeightField init = make_field(bits_from_string(o.initial), 0, o.boundary);
    std::optional<std::size_t> particles;
    if (o.boundary == Boundary::PeriodicRing)
        particles = static_cast<std::size_t>(std::count(init.bits.begin(), init.bits.end(), 1));
    StateSpace sp = make_state_space(o.sites, o.boundary, particles);
    nlohmann::json summary = nlohmann::json::array();
    for (auto& mc : cfg.models) {
        ModelSpec spec = mc.build(cfg.scaling.eps);
        nlohmann::json ms{{"model", model_json(mc)}};
        for (auto& check : o.checks) {
            if (check == "distribution") {
                Eigen::MatrixXd Q = generator_matrix(sp, spec);
                Eigen::RowVectorXd mu = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(sp.size()));
                mu(static_cast<Eigen::Index>(sp.index_of(StateSpace::mask_of(init.bits)))) = 1;
                Eigen::RowVectorXd exact = evolve_distribution(Q, o.micro_time, mu);
                std::vector<std::uint32_t> state(cfg.samples);
                parallel_for(cfg.samples, worker_count(), [&](std::size_t i) {
                    std::uint64_t s = trajectory_seed(cfg.seed, i);
                    SimState st = build_state(spec, init, s);
                    run_to_time(st, o.micro_time);
                    state[i] = StateSpace::mask_of(st.field.bits);
                });
                std::vector<double> count(sp.size(), 0.0);
                for (auto m : state)
                    count[sp.index_of(m)] += 1;
                double n = static_cast<double>(cfg.samples), worst = 0;
                for (std::size_t i = 0; i < sp.size(); ++i) {
                    double pe = count[i] / n, px = exact(static_cast<Eigen::Index>(i));
                    double se = std::sqrt(std::max(px * (1 - px), 0.0) / n);
                    double z = se > 0 ? (pe - px) / se : (pe == 0 ? 0 : std::numeric_limits<double>::infinity());
                    worst = std::max(worst, std::abs(z));
                    b.rows.push_back({check, spec.name(), bits_to_string(sp.bits(i)), fmt_num(pe), fmt_num(px),
                                      fmt_num(z)});
                }
                ms["max_abs_z"] = num(worst);
            } else if (check == "skew") {
                auto r = skew_reversibility_gap(sp, spec, o.micro_time, init, o.g);
                b.rows.push_back({check, spec.name(), "gap", fmt_num(r.forward), fmt_num(r.backward), fmt_num(r.gap)});
                ms["skew_gap"] = r.gap;
            } else if (check == "argmax") {
                auto r = gradient_argmax_check(sp, spec, o.micro_time, o.g);
                b.rows.push_back({check, spec.name(), std::to_string(r.comparisons), fmt_num(r.max_gradient), "0",
                                  fmt_num(r.max_discrepancy)});
                ms["argmax_discrepancy"] = r.max_discrepancy;
            } else if (check == "comparability") {
                nlohmann::json cc = nlohmann::json::array();
                for (auto n : o.comparability_sites) {
                    // the ring is evaluated in its half-filled sector
                    auto sector = o.boundary == Boundary::PeriodicRing ? std::optional<std::size_t>(n / 2)
                                                                       : std::nullopt;
                    auto c = comparability_constants(make_state_space(n, o.boundary, sector), spec.micro_rates());
                    b.rows.push_back({check, spec.name(), "n=" + std::to_string(n), fmt_num(c.upper),
                                      fmt_num(c.lower), ""});
                    cc.push_back({{"sites", n}, {"upper", num(c.upper)}, {"lower", num(c.lower)}});
                    if (sector)
                        cc.back()["particles"] = *sector;
                }
                ms["comparability"] = cc;
            }
        }
        summary.push_back(ms);
    }
    b.summary["models"] = summary;
    return b;
}

inline ReportBundle run_decompose(const ExperimentConfig& cfg)
{
    const auto& d = cfg.decompose;
    auto dec = cycle_decompose(d.law);
    ReportBundle b;
    b.columns = {"index", "weight", "vertices", "B", "B_antisym", "check"};
    for (std::size_t i = 0; i < dec.size(); ++i) {
        const auto& c = dec[i].cycle;
        std::string verts;
        for (std::size_t j = 0; j < c.vertices.size(); ++j)
            verts += (j ? " " : "") + std::to_string(c.vertices[j]);
        std::size_t ell = std::min(d.particles, c.length() - 1);
        auto r = sector_constant(c, ell, trajectory_seed(cfg.seed, i), d.pairs);
        b.rows.push_back({std::to_string(i), to_string(dec[i].weight), verts, fmt_num(r.B), fmt_num(r.B_antisym),
                          r.check_passed ? "pass" : "fail"});
    }
    b.summary["verified"] = verify_decomposition(d.law, dec);
    b.summary["cycles"] = decomposition_json(dec);
    return b;
}

inline ReportBundle run_tw_table(const ExperimentConfig& cfg)
{
    TwTable t = tw_table(cfg.tw.s_min, cfg.tw.s_max, cfg.tw.step, cfg.tw.m);
    ReportBundle b;
    b.columns = {"s", "F2"};
    for (std::size_t i = 0; i < t.s.size(); ++i)
        b.rows.push_back({fmt_num(t.s[i]), fmt_num(t.F[i])});
    b.summary = {{"mean", t.mean}, {"variance", t.variance}, {"mass", t.mass}, {"monotone", t.monotone}, {"m", t.m}};
    b.x_label = "s";
    b.y_label = "F2";
    b.series = {{"F2", t.s, t.F}};
    return b;
}

inline ReportBundle run_maxima_tail(const ExperimentConfig& cfg)
{
    double eps = cfg.scaling.eps;
    auto m = maxima_tail(cfg.initial.profile, eps, cfg.window.build(eps), cfg.samples, cfg.seed);
    auto tail = m.tail();
    ReportBundle b;
    b.columns = {"k", "pmf", "tail"};
    Series s{"log tail", {}, {}};
    for (std::size_t k = 1; k < m.pmf.size(); ++k) {
        b.rows.push_back({std::to_string(k), fmt_num(m.pmf[k]), fmt_num(tail[k])});
        if (tail[k] > 0) {
            s.x.push_back(std::pow(static_cast<double>(k), 0.25));
            s.y.push_back(std::log(tail[k]));
        }
    }
    b.summary = {{"C", m.C}, {"c", m.c}, {"samples", m.n}};
    b.x_label = "k^(1/4)";
    b.y_label = "log P(X >= k)";
    b.series = {s};
    return b;
}

inline ReportBundle run_wedge_energy(const ExperimentConfig& cfg)
{
    const auto& e = cfg.energy;
    double eps = cfg.scaling.eps;
    RnEnergy ex = rn_l2_energy(e.a, e.d, eps);
    MonteCarloEstimate mc = rn_l2_energy_mc(e.a, e.d, eps, cfg.samples, cfg.seed);
    ReportBundle b;
    b.columns = {"a", "d", "eps", "steps", "p", "exact", "bound", "mc_mean", "mc_stderr"};
    b.rows.push_back({fmt_num(e.a), fmt_num(e.d), fmt_num(eps), std::to_string(ex.steps), fmt_num(ex.p),
                      fmt_num(ex.exact), fmt_num(ex.bound), fmt_num(mc.mean), fmt_num(mc.std_error)});
    b.summary = {{"exact", ex.exact}, {"bound", ex.bound}, {"mc_mean", mc.mean}, {"mc_stderr", mc.std_error}};
    return b;
}

} // namespace detail

inline ReportBundle run_experiment(const ExperimentConfig& cfg)
{
    ReportBundle b;
    try {
        switch (cfg.kind) {
        case ExperimentKind::Simulate: b = detail::run_simulate(cfg); break;
        case ExperimentKind::Compare: b = detail::run_compare(cfg); break;
        case ExperimentKind::ExactCheck: b = detail::run_exact_check(cfg); break;
        case ExperimentKind::Decompose: b = detail::run_decompose(cfg); break;
        case ExperimentKind::TwTable: b = detail::run_tw_table(cfg); break;
        case ExperimentKind::MaximaTail: b = detail::run_maxima_tail(cfg); break;
        case ExperimentKind::WedgeEnergy: b = detail::run_wedge_energy(cfg); break;
        }
    } catch (const Error& e) {
        throw Error(e.code(), to_string(cfg.kind) + " experiment: " + e.what(), e.cause());
    }
    b.kind = to_string(cfg.kind);
    b.config = config_to_json(cfg);
    return b;
}

} // namespace kpz
