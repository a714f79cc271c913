#pragma once

#include <kpz/core_model.hpp>
#include <kpz/exact_oracle.hpp>

#include <boost/rational.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace kpz {

using Rational = boost::rational<long long>;

namespace detail {

template <class S>
bool is_zero(const S& v)
{
    if constexpr (std::is_floating_point_v<S>)
        return std::abs(v) <= 1e-12;
    else
        return v == S(0);
}

template <class S>
double to_double(const S& v)
{
    if constexpr (std::is_floating_point_v<S>)
        return v;
    else
        return boost::rational_cast<double>(v);
}

} // namespace detail

// Closed walk 0 = y_0, y_1, ..., y_k = 0 with distinct nonzero interior vertices.
struct Cycle {
    std::vector<int> vertices;

    std::size_t length() const { return vertices.size() - 1; }
    std::vector<int> steps() const
    {
        std::vector<int> s;
        for (std::size_t i = 1; i < vertices.size(); ++i)
            s.push_back(vertices[i] - vertices[i - 1]);
        return s;
    }
    bool irreducible() const
    {
        if (vertices.size() < 3 || vertices.front() != 0 || vertices.back() != 0)
            return false;
        std::set<int> seen;
        for (std::size_t i = 1; i + 1 < vertices.size(); ++i)
            if (vertices[i] == 0 || !seen.insert(vertices[i]).second)
                return false;
        return true;
    }
    // pi_C(a): each step carries mass 1/k.
    template <class S>
    std::map<int, S> step_distribution() const
    {
        std::map<int, S> pi;
        S unit = S(1) / S(static_cast<long long>(length()));
        for (int a : steps())
            pi[a] += unit;
        return pi;
    }

    friend bool operator==(const Cycle&, const Cycle&) = default;
};

template <class S>
struct WeightedCycle {
    S weight;
    Cycle cycle;
};

template <class S>
using CycleDecomposition = std::vector<WeightedCycle<S>>;

namespace detail {

template <class S>
std::map<int, S> normalized_mean_zero(const std::map<int, S>& law)
{
    std::map<int, S> p;
    S mass(0), mean(0);
    for (auto& [a, w] : law) {
        if (w < S(0))
            fail(Errc::InvalidRate, "negative weight");
        if (a == 0 || is_zero(w))
            continue;
        p[a] = w;
        mass += w;
        mean += S(a) * w;
    }
    if (p.empty())
        fail(Errc::Empty, "law has no mass away from 0");
    if (!is_zero(mean / mass))
        fail(Errc::NotMeanZero, "law has nonzero mean");
    for (auto& [a, w] : p)
        w /= mass;
    return p;
}

// Steps tried in order: positive ascending, then negative by increasing size.
inline std::vector<int> search_order(const std::vector<int>& support)
{
    std::vector<int> pos, neg;
    for (int a : support)
        (a > 0 ? pos : neg).push_back(a);
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end(), [](int x, int y) { return x > y; });
    pos.insert(pos.end(), neg.begin(), neg.end());
    return pos;
}

inline bool extend_cycle(const std::vector<int>& steps, int max_step, std::size_t target, std::vector<int>& path,
                         std::set<int>& visited)
{
    int here = path.back();
    std::size_t used = path.size() - 1;
    for (int a : steps) {
        int next = here + a;
        if (used + 1 == target) {
            if (next == 0) {
                path.push_back(0);
                return true;
            }
            continue;
        }
        if (next == 0 || visited.count(next))
            continue;
        std::size_t left = target - used - 1;
        if (static_cast<long long>(std::abs(next)) > static_cast<long long>(left) * max_step)
            continue;
        path.push_back(next);
        visited.insert(next);
        if (extend_cycle(steps, max_step, target, path, visited))
            return true;
        visited.erase(next);
        path.pop_back();
    }
    return false;
}

// Shortest irreducible cycle using only the given steps, first in search order.
inline std::optional<Cycle> find_cycle(const std::vector<int>& support, std::size_t max_len)
{
    auto steps = search_order(support);
    int max_step = 0;
    for (int a : steps)
        max_step = std::max(max_step, std::abs(a));
    for (std::size_t k = 2; k <= max_len; ++k) {
        std::vector<int> path{0};
        std::set<int> visited;
        if (extend_cycle(steps, max_step, k, path, visited))
            return Cycle{path};
    }
    return std::nullopt;
}

} // namespace detail

// Greedy peeling of irreducible cycles off a mean-zero law (normalized to unit mass).
template <class S>
CycleDecomposition<S> cycle_decompose(const std::map<int, S>& law)
{
    auto r = detail::normalized_mean_zero(law);
    int max_v = 0;
    for (auto& [a, w] : r)
        max_v = std::max(max_v, std::abs(a));
    std::size_t max_len = 2 * r.size() * static_cast<std::size_t>(max_v);
    CycleDecomposition<S> out;
    while (!r.empty()) {
        std::vector<int> support;
        for (auto& [a, w] : r)
            support.push_back(a);
        auto c = detail::find_cycle(support, max_len);
        if (!c)
            fail(Errc::NoCycleFound, "no irreducible cycle within length " + std::to_string(max_len));
        auto pi = c->template step_distribution<S>();
        S w(-1);
        for (auto& [a, m] : pi) {
            S cap = r.at(a) / m;
            if (w < S(0) || cap < w)
                w = cap;
        }
        for (auto& [a, m] : pi) {
            r[a] -= w * m;
            if (detail::is_zero(r[a]))
                r.erase(a);
        }
        out.push_back({w, *c});
    }
    return out;
}

// Checks positivity, unit total weight, irreducibility and sum_i w_i pi_{C_i} = p.
template <class S>
bool verify_decomposition(const std::map<int, S>& law, const CycleDecomposition<S>& dec)
{
    auto p = detail::normalized_mean_zero(law);
    std::map<int, S> acc;
    S total(0);
    for (auto& wc : dec) {
        if (!(S(0) < wc.weight) || !wc.cycle.irreducible())
            return false;
        total += wc.weight;
        for (auto& [a, m] : wc.cycle.template step_distribution<S>())
            acc[a] += wc.weight * m;
    }
    if (!detail::is_zero(total - S(1)))
        return false;
    std::set<int> keys;
    for (auto& [a, w] : p)
        keys.insert(a);
    for (auto& [a, w] : acc)
        keys.insert(a);
    for (int a : keys) {
        S lhs = acc.count(a) ? acc[a] : S(0);
        S rhs = p.count(a) ? p[a] : S(0);
        if (!detail::is_zero(lhs - rhs))
            return false;
    }
    return true;
}

struct SectorReport {
    double B = 0;         // sqrt of the top eigenvalue of (A*(-Abar)^+ A, -Abar) on range(-Abar)
    double B_antisym = 0; // the same with A replaced by its antisymmetric part
    std::size_t states = 0;
    std::size_t pairs_checked = 0;
    double worst_ratio = 0; // max |<f, A g>| / sqrt(D(f) D(g))
    bool check_passed = true;
};

inline constexpr std::size_t kMaxSectorStates = 3000;

namespace detail {

inline SectorReport sector_from_generator(const Eigen::MatrixXd& A, std::uint64_t seed, std::size_t pairs)
{
    SectorReport rep;
    rep.states = static_cast<std::size_t>(A.rows());
    if (A.rows() < 2 || A.norm() == 0)
        return rep;
    Eigen::MatrixXd S = -(A + A.transpose()) / 2;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    const auto& lam = es.eigenvalues();
    double top = lam.maxCoeff();
    std::vector<Eigen::Index> range, kernel;
    for (Eigen::Index i = 0; i < lam.size(); ++i)
        (lam(i) > 1e-10 * std::max(top, 1.0) ? range : kernel).push_back(i);
    if (range.empty())
        fail(Errc::SingularForm, "symmetric part vanishes while the generator does not");
    Eigen::MatrixXd Vr(A.rows(), static_cast<Eigen::Index>(range.size()));
    Eigen::VectorXd inv_sqrt(static_cast<Eigen::Index>(range.size()));
    for (std::size_t j = 0; j < range.size(); ++j) {
        Vr.col(static_cast<Eigen::Index>(j)) = es.eigenvectors().col(range[j]);
        inv_sqrt(static_cast<Eigen::Index>(j)) = 1 / std::sqrt(lam(range[j]));
    }
    for (auto k : kernel) {
        Eigen::VectorXd v = es.eigenvectors().col(k);
        if ((A * v).norm() > 1e-9 * A.norm() || (A.transpose() * v).norm() > 1e-9 * A.norm())
            fail(Errc::SingularForm, "generator acts on the kernel of its symmetric part");
    }
    auto norm_of = [&](const Eigen::MatrixXd& M) {
        Eigen::MatrixXd T = inv_sqrt.asDiagonal() * (Vr.transpose() * M * Vr) * inv_sqrt.asDiagonal();
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(T);
        return svd.singularValues()(0);
    };
    rep.B = norm_of(A);
    rep.B_antisym = norm_of((A - A.transpose()) / 2);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::VectorXd f(A.rows()), g(A.rows());
    for (std::size_t p = 0; p < pairs; ++p) {
        for (Eigen::Index i = 0; i < A.rows(); ++i) {
            f(i) = z(rng);
            g(i) = z(rng);
        }
        double lhs = std::abs(f.dot(A * g));
        double rhs = std::sqrt(f.dot(S * f) * g.dot(S * g));
        if (rhs > 0)
            rep.worst_ratio = std::max(rep.worst_ratio, lhs / rhs);
        if (lhs > rep.B * rhs * (1 + 1e-10) + 1e-10)
            rep.check_passed = false;
        ++rep.pairs_checked;
    }
    return rep;
}

} // namespace detail

// Sector constant of the cycle generator (1/k) sum_i eta(y_i)(1 - eta(y_{i+1})) nabla_{y_i, a_{i+1}}
// on configurations of the k cycle vertices with ell particles, uniform measure.
inline SectorReport sector_constant(const Cycle& c, std::size_t ell, std::uint64_t seed = 0, std::size_t pairs = 1000)
{
    if (!c.irreducible())
        fail(Errc::InvalidArgument, "cycle is not irreducible");
    std::size_t k = c.length();
    if (ell > k)
        fail(Errc::InvalidArgument, "more particles than cycle vertices");
    if (k > 14)
        fail(Errc::TooLarge, "cycle too long");
    if (ell == 0 || ell == k)
        return SectorReport{};
    StateSpace sp = make_state_space(k, Boundary::PeriodicRing, ell);
    if (sp.size() > kMaxSectorStates)
        fail(Errc::TooLarge, std::to_string(sp.size()) + " states");
    // vertex y_i sits at ring position i, so a_{i+1} moves it to position i+1
    Eigen::MatrixXd A = generator_from_rates(sp, RateMap{{1, 1.0 / static_cast<double>(k)}});
    return detail::sector_from_generator(A, seed, pairs);
}

// Sector constant of the mean-zero part of a full law: p itself when mean zero, otherwise
// p plus a backward nearest-neighbor jump carrying the drift.
inline SectorReport sector_constant(const RateMap& law, std::size_t ell, std::size_t span, Boundary boundary,
                                    std::uint64_t seed = 0, std::size_t pairs = 1000)
{
    RateMap q;
    for (auto [v, p] : law) {
        if (!(p >= 0) || !std::isfinite(p))
            fail(Errc::InvalidRate, "rates must be finite and nonnegative");
        if (v != 0 && p > 0)
            q[v] = p;
    }
    if (q.empty())
        fail(Errc::Empty, "empty law");
    double m = drift_of(q), scale = 0;
    for (auto [v, p] : q)
        scale += std::abs(v) * p;
    if (m < -1e-12 * scale)
        fail(Errc::NegativeDrift, "law has negative drift");
    if (m > 1e-12 * scale)
        q[-1] += m;
    if (ell == 0 || ell >= span)
        return SectorReport{};
    StateSpace sp = make_state_space(span, boundary, ell);
    if (sp.size() > kMaxSectorStates)
        fail(Errc::TooLarge, std::to_string(sp.size()) + " states");
    return detail::sector_from_generator(generator_from_rates(sp, q), seed, pairs);
}

inline std::string to_string(const Rational& r)
{
    return r.denominator() == 1 ? std::to_string(r.numerator())
                                : std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
}

inline Rational parse_rational(const std::string& text)
{
    auto slash = text.find('/');
    try {
        if (slash == std::string::npos)
            return Rational(std::stoll(text));
        return Rational(std::stoll(text.substr(0, slash)), std::stoll(text.substr(slash + 1)));
    } catch (const std::exception&) {
        fail(Errc::InvalidArgument, "'" + text + "' is not a rational number");
    }
}

template <class S>
nlohmann::json decomposition_json(const CycleDecomposition<S>& dec)
{
    nlohmann::json j = nlohmann::json::array();
    for (auto& wc : dec) {
        nlohmann::json w;
        if constexpr (std::is_floating_point_v<S>)
            w = wc.weight;
        else
            w = to_string(wc.weight);
        j.push_back({{"weight", w}, {"vertices", wc.cycle.vertices}});
    }
    return j;
}

} // namespace kpz
