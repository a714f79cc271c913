#pragma once

#include <kpz/core_model.hpp>
#include <kpz/kmc_engine.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

namespace kpz {

struct Window {
    std::int64_t left = 0;
    std::size_t sites = 0;
    Boundary boundary = Boundary::ClosedSegment;

    std::int64_t right() const { return left + static_cast<std::int64_t>(sites); }
    friend bool operator==(const Window&, const Window&) = default;
};

// Microscopic window covering the rescaled interval [x_min, x_max].
inline Window macro_window(double x_min, double x_max, double eps, Boundary boundary = Boundary::ClosedSegment)
{
    std::int64_t lo = round_half_up(2.0 * x_min / eps);
    std::int64_t hi = round_half_up(2.0 * x_max / eps);
    if (hi <= lo)
        fail(Errc::InvalidArgument, "empty window");
    return Window{lo, static_cast<std::size_t>(hi - lo), boundary};
}

// Piecewise-linear profile through sorted knots with linear extension outside.
struct ProfileSpec {
    std::vector<std::pair<double, double>> knots;
    double left_slope = 0;
    double right_slope = 0;

    double operator()(double x) const
    {
        if (knots.empty())
            fail(Errc::InvalidArgument, "profile has no knots");
        if (x <= knots.front().first)
            return x == knots.front().first ? knots.front().second
                                            : knots.front().second + left_slope * (x - knots.front().first);
        if (x >= knots.back().first)
            return x == knots.back().first ? knots.back().second
                                           : knots.back().second + right_slope * (x - knots.back().first);
        auto it = std::lower_bound(knots.begin(), knots.end(), x,
                                   [](const auto& k, double v) { return k.first < v; });
        if (it->first == x)
            return it->second;
        auto prev = it - 1;
        double w = (x - prev->first) / (it->first - prev->first);
        return prev->second + w * (it->second - prev->second);
    }

    void validate() const
    {
        if (knots.empty())
            fail(Errc::InvalidArgument, "profile has no knots");
        for (std::size_t i = 1; i < knots.size(); ++i)
            if (!(knots[i].first > knots[i - 1].first))
                fail(Errc::InvalidArgument, "profile knots must be strictly increasing");
    }

    static ProfileSpec constant(double c) { return ProfileSpec{{{0.0, c}}, 0, 0}; }
    static ProfileSpec linear(double slope, double intercept) { return ProfileSpec{{{0.0, intercept}}, slope, slope}; }

    friend bool operator==(const ProfileSpec&, const ProfileSpec&) = default;
};

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2 * std::numbers::pi); }

namespace detail {

inline HeightField field_from_heights(const std::vector<std::int64_t>& h, const Window& w)
{
    HeightField f;
    f.left = w.left;
    f.boundary = w.boundary;
    f.anchor = static_cast<double>(h.front());
    f.bits.resize(h.size() - 1);
    for (std::size_t i = 0; i + 1 < h.size(); ++i)
        f.bits[i] = h[i + 1] > h[i];
    return f;
}

// Greedy lattice path following a microscopic target T(vertex); ties step up.
template <class Target>
std::vector<std::int64_t> greedy_path(const Window& w, Target&& target)
{
    std::vector<std::int64_t> h(w.sites + 1);
    h[0] = round_half_up(target(w.left));
    for (std::size_t i = 0; i < w.sites; ++i) {
        double t = target(w.left + static_cast<std::int64_t>(i) + 1);
        h[i + 1] = static_cast<double>(h[i]) <= t ? h[i] + 1 : h[i] - 1;
    }
    return h;
}

inline std::uint8_t fair_bit(std::mt19937_64& rng, std::uint64_t& word, int& left)
{
    if (left == 0) {
        word = rng();
        left = 64;
    }
    std::uint8_t b = word & 1u;
    word >>= 1;
    --left;
    return b;
}

} // namespace detail

// Greedy nearest-path discretization of a rescaled profile f onto the window.
inline HeightField discretize_profile(const ProfileSpec& f, const Window& w, double eps)
{
    f.validate();
    if (!(eps > 0))
        fail(Errc::InvalidArgument, "eps must be positive");
    double se = std::sqrt(eps);
    auto h = detail::greedy_path(w, [&](std::int64_t y) { return f(static_cast<double>(y) * eps / 2) / se; });
    return detail::field_from_heights(h, w);
}

// Same rule with the profile read in microscopic units (vertex -> micro height).
inline HeightField discretize_micro(const ProfileSpec& f, const Window& w)
{
    f.validate();
    auto h = detail::greedy_path(w, [&](std::int64_t y) { return f(static_cast<double>(y)); });
    return detail::field_from_heights(h, w);
}

// Particles on every site left of the origin.
inline HeightField step_initial_data(const Window& w)
{
    HeightField f;
    f.left = w.left;
    f.boundary = w.boundary;
    f.bits.resize(w.sites);
    for (std::size_t i = 0; i < w.sites; ++i)
        f.bits[i] = w.left + static_cast<std::int64_t>(i) < 0;
    // h(0) = 0
    f.anchor = 0;
    f.anchor = -f.height(0);
    return f;
}

// Fair +-1 steps with rescaled height `anchor` at the origin. On a ring the configuration is
// uniform among those with half the sites occupied, so the height is periodic.
inline HeightField sample_equilibrium_walk(const Window& w, double eps, double anchor, std::uint64_t seed)
{
    if (w.sites == 0)
        fail(Errc::InvalidArgument, "empty window");
    auto rng = make_stream(seed, 1);
    HeightField f;
    f.left = w.left;
    f.boundary = w.boundary;
    f.bits.resize(w.sites);
    std::uint64_t word = 0;
    int avail = 0;
    if (w.boundary == Boundary::PeriodicRing) {
        if (w.sites % 2 != 0)
            fail(Errc::InvalidArgument, "equilibrium ring needs an even number of sites");
        std::fill(f.bits.begin(), f.bits.begin() + static_cast<std::ptrdiff_t>(w.sites / 2), 1);
        std::shuffle(f.bits.begin(), f.bits.end(), rng);
    } else {
        for (auto& b : f.bits)
            b = detail::fair_bit(rng, word, avail);
    }
    double a = anchor / std::sqrt(eps);
    if (f.has_vertex(0)) {
        f.anchor = 0;
        f.anchor = a - f.height(0);
    } else if (w.left > 0) {
        std::int64_t acc = 0;
        for (std::int64_t s = 0; s < w.left; ++s)
            acc += 2 * detail::fair_bit(rng, word, avail) - 1;
        f.anchor = a + static_cast<double>(acc);
    } else {
        std::int64_t acc = 0;
        for (std::int64_t s = w.right(); s < 0; ++s)
            acc += 2 * detail::fair_bit(rng, word, avail) - 1;
        f.anchor = 0;
        f.anchor = a - static_cast<double>(acc) - f.height(w.right());
    }
    return f;
}

struct RandomWedgeSpec {
    std::vector<double> ys; // anchor positions, increasing
    std::vector<double> bs; // anchor base heights
    double gamma = 1;       // anchor heights uniform on the lattice points of [b, b + gamma]
    double s = 1;           // outward slope magnitude, may be infinite
    double L = std::numeric_limits<double>::infinity(); // floor depth

    // Deterministic narrowish wedge max_i(b_i - s|x - y_i|) floored at -L.
    double wedge(double x) const
    {
        double d = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < ys.size(); ++i) {
            double dist = std::abs(x - ys[i]);
            double v = dist == 0 ? bs[i] : bs[i] - s * dist;
            d = std::max(d, v);
        }
        return std::max(d, -L);
    }

    friend bool operator==(const RandomWedgeSpec&, const RandomWedgeSpec&) = default;
};

// Uniform anchor heights, random-walk bridges between anchors and drifted walks outside them,
// with up-probability Phi(a sqrt(eps/2)) for the outward slope a of the deterministic wedge.
inline HeightField sample_randomized_wedge(const RandomWedgeSpec& spec, const Window& w, double eps,
                                           std::uint64_t seed)
{
    if (spec.ys.empty() || spec.ys.size() != spec.bs.size())
        fail(Errc::InvalidArgument, "wedge needs matching anchor positions and heights");
    if (!(spec.gamma >= 0) || !(spec.s >= 0) || !(spec.L > 0))
        fail(Errc::InvalidArgument, "wedge needs gamma >= 0, s >= 0, L > 0");
    double se = std::sqrt(eps);
    std::vector<std::int64_t> Y(spec.ys.size());
    for (std::size_t i = 0; i < Y.size(); ++i) {
        Y[i] = round_half_up(2.0 * spec.ys[i] / eps);
        if (Y[i] < w.left || Y[i] > w.right())
            fail(Errc::WindowTooSmall, "anchor " + std::to_string(spec.ys[i]) + " outside the window");
        if (i > 0 && Y[i] <= Y[i - 1])
            fail(Errc::InvalidArgument, "anchor positions must be increasing on the lattice");
    }
    auto rng = make_stream(seed, 2);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    std::size_t nv = w.sites + 1;
    std::vector<std::int64_t> h(nv);
    auto at = [&](std::int64_t y) -> std::int64_t& { return h[static_cast<std::size_t>(y - w.left)]; };

    std::int64_t width = round_half_up(spec.gamma / se);
    std::vector<std::int64_t> H(Y.size());
    for (std::size_t i = 0; i < Y.size(); ++i) {
        std::int64_t lo = round_half_up(spec.bs[i] / se);
        std::vector<std::int64_t> cand;
        for (std::int64_t ext = 0; cand.empty() && ext <= 1; ++ext)
            for (std::int64_t v = lo; v <= lo + width + ext; ++v) {
                if (i == 0) {
                    cand.push_back(v);
                    continue;
                }
                std::int64_t steps = Y[i] - Y[i - 1], dh = v - H[i - 1];
                if (std::abs(dh) <= steps && floor_mod(dh - steps, 2) == 0)
                    cand.push_back(v);
            }
        if (cand.empty())
            fail(Errc::InvalidArgument, "anchor " + std::to_string(i) + " unreachable from its predecessor");
        H[i] = cand[std::uniform_int_distribution<std::size_t>(0, cand.size() - 1)(rng)];
        at(Y[i]) = H[i];
    }
    for (std::size_t i = 0; i + 1 < Y.size(); ++i) {
        std::int64_t steps = Y[i + 1] - Y[i];
        std::int64_t ups = (steps + H[i + 1] - H[i]) / 2;
        for (std::int64_t y = Y[i]; y < Y[i + 1]; ++y) {
            std::int64_t remaining = Y[i + 1] - y;
            bool up = unif(rng) * static_cast<double>(remaining) < static_cast<double>(ups);
            ups -= up;
            at(y + 1) = at(y) + (up ? 1 : -1);
        }
    }
    // outward slope of the deterministic wedge over the half-step starting at macro x
    auto outward_p = [&](double x, double dir) {
        double here = spec.wedge(x);
        double next = spec.wedge(x + dir * eps / 2);
        if (here <= -spec.L && next <= -spec.L)
            return 0.5;
        double a = (next - here) / (eps / 2);
        if (std::isinf(spec.s) || std::isnan(a))
            a = -std::numeric_limits<double>::infinity();
        return normal_cdf(a * std::sqrt(eps / 2));
    };
    for (std::int64_t y = Y.back(); y < w.right(); ++y) {
        bool up = unif(rng) < outward_p(static_cast<double>(y) * eps / 2, 1);
        at(y + 1) = at(y) + (up ? 1 : -1);
    }
    for (std::int64_t y = Y.front(); y > w.left; --y) {
        bool up = unif(rng) < outward_p(static_cast<double>(y) * eps / 2, -1);
        at(y - 1) = at(y) + (up ? 1 : -1);
    }
    if (std::isfinite(spec.L)) {
        auto floor = detail::greedy_path(w, [&](std::int64_t) { return -spec.L / se; });
        if (floor_mod(floor[0] - h[0], 2) != 0)
            for (auto& v : floor)
                v += 1;
        for (std::size_t i = 0; i < nv; ++i)
            h[i] = std::max(h[i], floor[i]);
    }
    return detail::field_from_heights(h, w);
}

struct RnEnergy {
    double exact = 0; // (1 + (2p - 1)^2)^n
    double bound = 0; // exp(4 a^2 d phi(0)^2)
    double p = 0.5;
    std::int64_t steps = 0;
};

// L2 norm of the likelihood ratio of a drifted walk against the fair walk over [0, d].
inline RnEnergy rn_l2_energy(double a, double d, double eps)
{
    if (!(eps > 0) || !(d >= 0) || !std::isfinite(a))
        fail(Errc::InvalidArgument, "rn_l2_energy needs eps > 0, d >= 0, finite a");
    RnEnergy e;
    e.steps = 2 * static_cast<std::int64_t>(std::floor(d / eps + 1e-9));
    e.p = normal_cdf(a * std::sqrt(eps / 2));
    double q = 2 * e.p - 1;
    e.exact = std::exp(static_cast<double>(e.steps) * std::log1p(q * q));
    double phi0 = normal_pdf(0);
    e.bound = std::exp(4 * a * a * d * phi0 * phi0);
    return e;
}

struct MonteCarloEstimate {
    double mean = 0;
    double std_error = 0;
    std::size_t n = 0;
};

// Importance estimate of E_fair[f^2] as E_drifted[f], with f = 2^n p^S (1 - p)^(n - S).
inline MonteCarloEstimate rn_l2_energy_mc(double a, double d, double eps, std::size_t samples, std::uint64_t seed)
{
    if (samples < 2)
        fail(Errc::NoSamples, "need at least two samples");
    RnEnergy e = rn_l2_energy(a, d, eps);
    auto rng = make_stream(seed, 3);
    std::bernoulli_distribution up(e.p);
    double lp = std::log(e.p), lq = std::log1p(-e.p), l2 = std::log(2.0);
    double sum = 0, sum2 = 0;
    for (std::size_t i = 0; i < samples; ++i) {
        std::int64_t S = 0;
        for (std::int64_t k = 0; k < e.steps; ++k)
            S += up(rng);
        double f = std::exp(static_cast<double>(e.steps) * l2 + static_cast<double>(S) * lp +
                            static_cast<double>(e.steps - S) * lq);
        sum += f;
        sum2 += f * f;
    }
    double n = static_cast<double>(samples);
    MonteCarloEstimate m;
    m.n = samples;
    m.mean = sum / n;
    m.std_error = std::sqrt(std::max(0.0, (sum2 / n - m.mean * m.mean) / (n - 1)));
    return m;
}

} // namespace kpz
