#pragma once

#include <kpz/error.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace kpz {

using RateMap = std::map<int, double>; // displacement -> rate

inline std::int64_t floor_div(std::int64_t a, std::int64_t b)
{
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0)))
        --q;
    return q;
}

inline std::int64_t floor_mod(std::int64_t a, std::int64_t b) { return a - floor_div(a, b) * b; }

// Nearest integer, ties toward +infinity.
inline std::int64_t round_half_up(double v) { return static_cast<std::int64_t>(std::floor(v + 0.5)); }

struct JumpLaw {
    RateMap rates; // strictly positive, sum of v * p(v) equal to 1

    int max_range() const
    {
        int r = 0;
        for (auto [v, p] : rates)
            r = std::max(r, std::abs(v));
        return r;
    }
    double total_rate() const
    {
        double s = 0;
        for (auto [v, p] : rates)
            s += p;
        return s;
    }
    double drift() const
    {
        double s = 0;
        for (auto [v, p] : rates)
            s += v * p;
        return s;
    }
    bool nearest_neighbor() const { return max_range() <= 1; }

    friend bool operator==(const JumpLaw&, const JumpLaw&) = default;
};

inline double drift_of(const RateMap& rates)
{
    double s = 0;
    for (auto [v, p] : rates)
        s += v * p;
    return s;
}

// gcd of the symmetrized support; 0 for an empty support.
inline int support_gcd(const RateMap& rates)
{
    int g = 0;
    for (auto [v, p] : rates)
        if (p > 0)
            g = std::gcd(g, std::abs(v));
    return g;
}

// Drops zero rates and zero displacements, checks irreducibility and rescales to unit drift.
inline JumpLaw validate_jump_law(const RateMap& raw)
{
    RateMap kept;
    for (auto [v, p] : raw) {
        if (!std::isfinite(p) || p < 0)
            fail(Errc::InvalidRate, "rate for displacement " + std::to_string(v) + " is not a finite nonnegative number");
        if (v != 0 && p > 0)
            kept[v] = p;
    }
    if (kept.empty())
        fail(Errc::Empty, "jump law has no positive rate");
    if (support_gcd(kept) != 1)
        fail(Errc::Reducible, "gcd of the support is " + std::to_string(support_gcd(kept)));
    double m = drift_of(kept);
    double scale = 0;
    for (auto [v, p] : kept)
        scale += std::abs(v) * p;
    if (std::abs(m) <= 1e-12 * scale)
        fail(Errc::ZeroDrift, "jump law has mean zero");
    if (m < 0)
        fail(Errc::NegativeDrift, "jump law has negative mean; reflect it first");
    JumpLaw law;
    for (auto [v, p] : kept)
        law.rates[v] = p / m;
    return law;
}

enum class Boundary { ClosedSegment, PeriodicRing };

inline std::string to_string(Boundary b) { return b == Boundary::ClosedSegment ? "segment" : "ring"; }

// Occupations on the sites left, ..., left+N-1 in microscopic coordinates.
// Heights live on the vertices left, ..., left+N with h(y+1) = h(y) + 2*eta(y) - 1
// and h(left) = anchor. On a ring the height extends to the universal cover.
struct HeightField {
    std::vector<std::uint8_t> bits;
    double anchor = 0;
    std::int64_t left = 0;
    Boundary boundary = Boundary::ClosedSegment;

    std::size_t sites() const { return bits.size(); }
    std::int64_t right() const { return left + static_cast<std::int64_t>(bits.size()); }
    bool in_window(std::int64_t x) const { return x >= left && x < right(); }
    bool has_vertex(std::int64_t y) const { return boundary == Boundary::PeriodicRing || (y >= left && y <= right()); }

    std::size_t local(std::int64_t x) const
    {
        return static_cast<std::size_t>(floor_mod(x - left, static_cast<std::int64_t>(bits.size())));
    }
    bool occupied(std::int64_t x) const { return bits[local(x)] != 0; }

    std::int64_t particles() const { return std::count(bits.begin(), bits.end(), std::uint8_t{1}); }
    // Height change across the full window.
    std::int64_t winding() const { return 2 * particles() - static_cast<std::int64_t>(bits.size()); }

    double height(std::int64_t y) const
    {
        auto n = static_cast<std::int64_t>(bits.size());
        if (boundary == Boundary::ClosedSegment && (y < left || y > right()))
            fail(Errc::OutOfWindow, "vertex " + std::to_string(y) + " outside window");
        std::int64_t wraps = n == 0 ? 0 : floor_div(y - left, n);
        std::int64_t base = y - wraps * n;
        std::int64_t acc = 0;
        for (std::int64_t s = left; s < base; ++s)
            acc += 2 * bits[static_cast<std::size_t>(s - left)] - 1;
        return anchor + static_cast<double>(acc + wraps * winding());
    }

    // Heights at the N+1 window vertices.
    std::vector<double> heights() const
    {
        std::vector<double> h(bits.size() + 1);
        std::int64_t acc = 0;
        h[0] = anchor;
        for (std::size_t i = 0; i < bits.size(); ++i) {
            acc += 2 * bits[i] - 1;
            h[i + 1] = anchor + static_cast<double>(acc);
        }
        return h;
    }

    friend bool operator==(const HeightField&, const HeightField&) = default;
};

inline HeightField make_field(std::vector<std::uint8_t> bits, double anchor = 0,
                              Boundary boundary = Boundary::ClosedSegment, std::int64_t left = 0)
{
    for (auto b : bits)
        if (b > 1)
            fail(Errc::InvalidArgument, "occupations must be 0 or 1");
    return HeightField{std::move(bits), anchor, left, boundary};
}

// Moves a particle from x to x+v when x is occupied and x+v is empty. Returns whether it fired.
inline bool apply_jump(HeightField& h, std::int64_t x, int v)
{
    if (v == 0)
        fail(Errc::ZeroDisplacement, "jump with zero displacement");
    auto n = static_cast<std::int64_t>(h.sites());
    if (h.boundary == Boundary::ClosedSegment) {
        if (!h.in_window(x) || !h.in_window(x + v))
            fail(Errc::OutOfWindow, "jump (" + std::to_string(x) + "," + std::to_string(v) + ") leaves the window");
    } else if (n == 0) {
        fail(Errc::OutOfWindow, "empty ring");
    }
    std::size_t from = h.local(x);
    std::size_t to = h.local(x + v);
    if (from == to || h.bits[from] == 0 || h.bits[to] == 1)
        return false;
    h.bits[from] = 0;
    h.bits[to] = 1;
    if (h.boundary == Boundary::PeriodicRing) {
        // every periodic copy of the left vertex passed over drops (v > 0) or rises (v < 0) by 2
        std::int64_t k = floor_div(static_cast<std::int64_t>(from) + v, n);
        h.anchor -= 2.0 * static_cast<double>(k);
    }
    return true;
}

// Swaps the occupations at x and x+v, expressed as the jump between them.
inline void symmetric_exchange(HeightField& h, std::int64_t x, int v)
{
    if (v == 0)
        fail(Errc::ZeroDisplacement, "exchange with zero displacement");
    if (h.boundary == Boundary::ClosedSegment && (!h.in_window(x) || !h.in_window(x + v)))
        fail(Errc::OutOfWindow, "exchange leaves the window");
    bool a = h.occupied(x);
    bool b = h.occupied(x + v);
    if (a == b)
        return;
    if (a)
        apply_jump(h, x, v);
    else
        apply_jump(h, x + v, -v);
}

using Bond = std::pair<std::int64_t, std::int64_t>;

// Nearest-neighbor swaps realizing the exchange of x and x+v: out along the bonds, then back.
inline std::vector<Bond> exchange_path(std::int64_t x, int v)
{
    if (v == 0)
        fail(Errc::ZeroDisplacement, "exchange path with zero displacement");
    int n = std::abs(v);
    int dir = v > 0 ? 1 : -1;
    auto bond = [](std::int64_t a, std::int64_t b) { return Bond{std::min(a, b), std::max(a, b)}; };
    std::vector<Bond> path;
    path.reserve(static_cast<std::size_t>(2 * n - 1));
    for (int i = 0; i < n; ++i)
        path.push_back(bond(x + dir * i, x + dir * (i + 1)));
    for (int i = n - 2; i >= 0; --i)
        path.push_back(bond(x + dir * i, x + dir * (i + 1)));
    return path;
}

// tau_y then sigma_r: h'(z) = h(z - [y]) + [r], with [y] on the spacing eps/2 and [r] on sqrt(eps).
// A ring rotates; a segment carries its window along, so nothing is truncated.
inline HeightField shift(const HeightField& h, double y, double r, double eps)
{
    if (!(eps > 0))
        fail(Errc::InvalidArgument, "eps must be positive");
    std::int64_t k = round_half_up(2.0 * y / eps);
    std::int64_t m = round_half_up(r / std::sqrt(eps));
    HeightField out = h;
    if (h.boundary == Boundary::ClosedSegment) {
        out.left = h.left + k;
    } else if (h.sites() > 0) {
        auto n = static_cast<std::int64_t>(h.sites());
        for (std::int64_t i = 0; i < n; ++i)
            out.bits[static_cast<std::size_t>(floor_mod(i + k, n))] = h.bits[static_cast<std::size_t>(i)];
        out.anchor = h.height(h.left - k);
    }
    out.anchor += static_cast<double>(m);
    return out;
}

struct LocalShape {
    double grad_minus = 0; // rescaled left difference quotient
    double grad_plus = 0;  // rescaled right difference quotient
    double eps = 1;
    bool is_local_max = false;
    bool is_local_min = false;

    double laplacian() const { return (grad_plus - grad_minus) / (eps / 2); }
    // The two displays expressing 4 times the indicator of a local max / min.
    double max_expression() const
    {
        return -(eps / 4) * grad_minus * grad_plus - (std::pow(eps, 1.5) / 4) * laplacian() + 1;
    }
    double min_expression() const
    {
        return -(eps / 4) * grad_minus * grad_plus + (std::pow(eps, 1.5) / 4) * laplacian() + 1;
    }
};

inline LocalShape local_shape(const HeightField& h, std::int64_t y, double eps)
{
    if (h.boundary == Boundary::ClosedSegment && (y <= h.left || y >= h.right()))
        fail(Errc::BoundarySite, "vertex " + std::to_string(y) + " lacks a neighbor in the window");
    double se = std::sqrt(eps);
    double hm = se * h.height(y - 1), h0 = se * h.height(y), hp = se * h.height(y + 1);
    LocalShape s;
    s.eps = eps;
    s.grad_minus = (h0 - hm) / (eps / 2);
    s.grad_plus = (hp - h0) / (eps / 2);
    s.is_local_max = h0 > hm && h0 > hp;
    s.is_local_min = h0 < hm && h0 < hp;
    return s;
}

inline std::string bits_to_string(const std::vector<std::uint8_t>& bits)
{
    std::string s(bits.size(), '0');
    for (std::size_t i = 0; i < bits.size(); ++i)
        s[i] = bits[i] ? '1' : '0';
    return s;
}

inline std::vector<std::uint8_t> bits_from_string(const std::string& s)
{
    std::vector<std::uint8_t> bits(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '0' && s[i] != '1')
            fail(Errc::InvalidArgument, "occupation string must contain only 0 and 1");
        bits[i] = s[i] == '1';
    }
    return bits;
}

inline void to_json(nlohmann::json& j, const JumpLaw& law)
{
    j = nlohmann::json::object();
    for (auto [v, p] : law.rates)
        j[std::to_string(v)] = p;
}

inline void from_json(const nlohmann::json& j, JumpLaw& law)
{
    RateMap raw;
    for (auto it = j.begin(); it != j.end(); ++it)
        raw[std::stoi(it.key())] = it.value().get<double>();
    law = validate_jump_law(raw);
}

inline void to_json(nlohmann::json& j, const HeightField& h)
{
    j = nlohmann::json{{"anchor", h.anchor},
                       {"bits", bits_to_string(h.bits)},
                       {"boundary", to_string(h.boundary)},
                       {"left", h.left}};
}

inline void from_json(const nlohmann::json& j, HeightField& h)
{
    h.bits = bits_from_string(j.at("bits").get<std::string>());
    h.anchor = j.value("anchor", 0.0);
    h.left = j.value("left", std::int64_t{0});
    auto b = j.value("boundary", std::string("segment"));
    if (b == "segment")
        h.boundary = Boundary::ClosedSegment;
    else if (b == "ring")
        h.boundary = Boundary::PeriodicRing;
    else
        fail(Errc::InvalidArgument, "unknown boundary '" + b + "'");
}

} // namespace kpz
