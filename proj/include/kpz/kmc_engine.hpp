#pragma once

#include <kpz/core_model.hpp>

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace kpz {

struct ModelSpec {
    enum class Kind { TASEP, ASEP, AEP, WASEP };

    Kind kind = Kind::TASEP;
    double p_right = 1, p_left = 0; // ASEP
    JumpLaw law;                    // AEP
    double eps = 0, delta = 0;      // WASEP

    static ModelSpec tasep() { return {}; }
    static ModelSpec asep(double p, double q)
    {
        if (!(p >= 0 && q >= 0 && std::isfinite(p) && std::isfinite(q) && p + q > 0))
            fail(Errc::InvalidRate, "ASEP rates must be nonnegative and not both zero");
        ModelSpec m;
        m.kind = Kind::ASEP;
        m.p_right = p;
        m.p_left = q;
        return m;
    }
    // ASEP rescaled so that p - q = 1.
    static ModelSpec asep_unit_drift(double p, double q)
    {
        if (!(p > q))
            fail(p == q ? Errc::ZeroDrift : Errc::NegativeDrift, "unit-drift ASEP needs p > q");
        return asep(p / (p - q), q / (p - q));
    }
    static ModelSpec aep(const RateMap& raw)
    {
        ModelSpec m;
        m.kind = Kind::AEP;
        m.law = validate_jump_law(raw);
        return m;
    }
    static ModelSpec wasep(double eps, double delta)
    {
        if (!(eps > 0 && delta >= 0))
            fail(Errc::InvalidArgument, "WASEP needs eps > 0 and delta >= 0");
        ModelSpec m;
        m.kind = Kind::WASEP;
        m.eps = eps;
        m.delta = delta;
        return m;
    }

    // Microscopic per-particle attempt rates (unit-time clock).
    RateMap micro_rates() const
    {
        RateMap r;
        switch (kind) {
        case Kind::TASEP:
            r[1] = 1;
            break;
        case Kind::ASEP:
            if (p_right > 0)
                r[1] = p_right;
            if (p_left > 0)
                r[-1] = p_left;
            break;
        case Kind::AEP:
            r = law.rates;
            break;
        case Kind::WASEP: {
            double w = delta / std::sqrt(eps);
            r[1] = 1 + w;
            if (w > 0)
                r[-1] = w;
            break;
        }
        }
        return r;
    }

    bool nearest_neighbor() const { return kind != Kind::AEP || law.nearest_neighbor(); }

    std::string name() const
    {
        switch (kind) {
        case Kind::TASEP: return "tasep";
        case Kind::ASEP: return "asep";
        case Kind::AEP: return "aep";
        case Kind::WASEP: return "wasep";
        }
        return "";
    }

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// 1:2:3 scaling parameters: macroscopic time t, averaging scale a.
struct ScalingParams {
    double eps = 0.01;
    double t = 0;
    double a = 0;

    double micro_time() const { return 2.0 * std::pow(eps, -1.5) * t; }
    // Microscopic vertex of the rescaled coordinate x.
    std::int64_t micro_site(double x) const { return round_half_up(2.0 * x / eps); }
    double macro_x(std::int64_t y) const { return static_cast<double>(y) * eps / 2; }

    friend bool operator==(const ScalingParams&, const ScalingParams&) = default;
};

inline std::uint64_t trajectory_seed(std::uint64_t seed, std::uint64_t index) { return seed ^ index; }

// Independent engine for a named sub-stream of one trajectory seed.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint32_t stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
    return std::mt19937_64(seq);
}

struct SimState {
    HeightField field;
    double micro_time = 0;
    std::mt19937_64 rng;
    std::uint64_t event_count = 0; // attempted jumps, null events included
    std::uint64_t accepted = 0;

    std::vector<std::int64_t> particle_site; // local index of each particle
    std::vector<std::int64_t> site_particle; // particle index per local site, -1 when empty
    std::vector<int> jump_v;
    std::vector<double> jump_cdf;
    double rate_per_particle = 0;

    double total_rate() const { return rate_per_particle * static_cast<double>(particle_site.size()); }
};

inline SimState build_state(const ModelSpec& spec, HeightField field, std::uint64_t seed)
{
    RateMap rates = spec.micro_rates();
    int range = 0;
    for (auto [v, p] : rates)
        range = std::max(range, std::abs(v));
    if (field.boundary == Boundary::ClosedSegment && range > 1 && field.sites() <= static_cast<std::size_t>(range))
        fail(Errc::IncompatibleBoundary, "segment of " + std::to_string(field.sites()) +
                                             " sites cannot host jumps of range " + std::to_string(range));
    SimState s;
    s.field = std::move(field);
    s.rng = make_stream(seed, 0);
    double acc = 0;
    for (auto [v, p] : rates) {
        acc += p;
        s.jump_v.push_back(v);
        s.jump_cdf.push_back(acc);
    }
    s.rate_per_particle = acc;
    for (auto& c : s.jump_cdf)
        c /= acc;
    s.site_particle.assign(s.field.sites(), -1);
    for (std::size_t i = 0; i < s.field.sites(); ++i)
        if (s.field.bits[i]) {
            s.site_particle[i] = static_cast<std::int64_t>(s.particle_site.size());
            s.particle_site.push_back(static_cast<std::int64_t>(i));
        }
    return s;
}

namespace detail {

inline void attempt(SimState& s)
{
    auto n_particles = s.particle_site.size();
    auto n = static_cast<std::int64_t>(s.field.sites());
    std::size_t idx = std::uniform_int_distribution<std::size_t>(0, n_particles - 1)(s.rng);
    int v = s.jump_v[0];
    if (s.jump_v.size() > 1) {
        double u = std::uniform_real_distribution<double>(0.0, 1.0)(s.rng);
        std::size_t j = 0;
        while (j + 1 < s.jump_cdf.size() && u >= s.jump_cdf[j])
            ++j;
        v = s.jump_v[j];
    }
    ++s.event_count;
    std::int64_t x = s.particle_site[idx];
    std::int64_t y = x + v;
    std::int64_t wraps = 0;
    if (s.field.boundary == Boundary::ClosedSegment) {
        if (y < 0 || y >= n)
            return;
    } else {
        wraps = floor_div(y, n);
        y -= wraps * n;
        if (y == x)
            return;
    }
    if (s.field.bits[static_cast<std::size_t>(y)])
        return;
    s.field.bits[static_cast<std::size_t>(x)] = 0;
    s.field.bits[static_cast<std::size_t>(y)] = 1;
    s.site_particle[static_cast<std::size_t>(x)] = -1;
    s.site_particle[static_cast<std::size_t>(y)] = static_cast<std::int64_t>(idx);
    s.particle_site[idx] = y;
    s.field.anchor -= 2.0 * static_cast<double>(wraps);
    ++s.accepted;
}

} // namespace detail

// One clock ring: the time advances by Exp(R) and a uniformly chosen particle attempts a jump.
inline void step(SimState& s)
{
    double rate = s.total_rate();
    if (!(rate > 0))
        fail(Errc::Frozen, "total attempt rate is zero");
    s.micro_time += std::exponential_distribution<double>(rate)(s.rng);
    detail::attempt(s);
}

// Runs the clock up to micro_t exactly. The number of rings on [now, micro_t] is Poisson(R * dt),
// which is the same law as accumulating exponential gaps.
inline void run_to_time(SimState& s, double micro_t)
{
    if (micro_t < s.micro_time)
        fail(Errc::InvalidArgument, "target time precedes the current time");
    double rate = s.total_rate();
    if (rate > 0) {
        std::uint64_t rings = std::poisson_distribution<std::uint64_t>(rate * (micro_t - s.micro_time))(s.rng);
        for (std::uint64_t i = 0; i < rings; ++i)
            detail::attempt(s);
    }
    s.micro_time = micro_t;
}

inline double rescaled_height(const SimState& s, const ScalingParams& params, double x)
{
    double target = params.micro_time();
    if (std::abs(s.micro_time - target) > 1e-9 * std::max(1.0, target))
        fail(Errc::TimeMismatch, "state time " + std::to_string(s.micro_time) + " differs from 2 eps^(-3/2) t = " +
                                     std::to_string(target));
    std::int64_t y = params.micro_site(x);
    if (!s.field.has_vertex(y))
        fail(Errc::SiteOutsideWindow, "vertex " + std::to_string(y) + " outside window");
    return std::sqrt(params.eps) * s.field.height(y) + params.t / params.eps;
}

inline std::string snapshot_json_line(const SimState& s, std::uint64_t trajectory)
{
    nlohmann::json j{{"trajectory", trajectory},
                     {"micro_time", s.micro_time},
                     {"anchor", s.field.anchor},
                     {"bits", bits_to_string(s.field.bits)}};
    return j.dump();
}

inline void to_json(nlohmann::json& j, const ModelSpec& m)
{
    j = nlohmann::json{{"kind", m.name()}};
    switch (m.kind) {
    case ModelSpec::Kind::TASEP: break;
    case ModelSpec::Kind::ASEP:
        j["p_right"] = m.p_right;
        j["p_left"] = m.p_left;
        break;
    case ModelSpec::Kind::AEP: j["rates"] = m.law; break;
    case ModelSpec::Kind::WASEP:
        j["eps"] = m.eps;
        j["delta"] = m.delta;
        break;
    }
}

} // namespace kpz
