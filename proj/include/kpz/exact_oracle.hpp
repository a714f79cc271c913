#pragma once

#include <kpz/core_model.hpp>
#include <kpz/initial_data.hpp>
#include <kpz/kmc_engine.hpp>
#include <kpz/observables.hpp>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

namespace kpz {

inline constexpr std::size_t kMaxOracleSites = 14;

// Configurations on n sites, bit i of a mask being the occupation of site i.
// A segment carries every configuration; a ring a fixed particle count.
struct StateSpace {
    std::size_t n = 0;
    Boundary boundary = Boundary::ClosedSegment;
    std::optional<std::size_t> particles;
    std::vector<std::uint32_t> masks;
    std::unordered_map<std::uint32_t, std::size_t> index;

    std::size_t size() const { return masks.size(); }
    std::size_t index_of(std::uint32_t mask) const { return index.at(mask); }
    bool contains(std::uint32_t mask) const { return index.count(mask) != 0; }

    std::vector<std::uint8_t> bits(std::size_t i) const
    {
        std::vector<std::uint8_t> b(n);
        for (std::size_t s = 0; s < n; ++s)
            b[s] = (masks[i] >> s) & 1u;
        return b;
    }
    HeightField field(std::size_t i, double anchor = 0) const { return make_field(bits(i), anchor, boundary, 0); }

    static std::uint32_t mask_of(const std::vector<std::uint8_t>& bits)
    {
        std::uint32_t m = 0;
        for (std::size_t s = 0; s < bits.size(); ++s)
            m |= static_cast<std::uint32_t>(bits[s] != 0) << s;
        return m;
    }
};

inline StateSpace make_state_space(std::size_t n, Boundary boundary, std::optional<std::size_t> particles = std::nullopt)
{
    if (n == 0)
        fail(Errc::InvalidArgument, "state space needs at least one site");
    if (n > kMaxOracleSites)
        fail(Errc::TooLarge, std::to_string(n) + " sites exceed the oracle limit of 14");
    if (boundary == Boundary::PeriodicRing && !particles)
        fail(Errc::InvalidArgument, "a ring state space needs a particle count");
    if (particles && *particles > n)
        fail(Errc::InvalidArgument, "more particles than sites");
    StateSpace sp;
    sp.n = n;
    sp.boundary = boundary;
    sp.particles = particles;
    for (std::uint32_t m = 0; m < (1u << n); ++m)
        if (!particles || static_cast<std::size_t>(std::popcount(m)) == *particles) {
            sp.index[m] = sp.masks.size();
            sp.masks.push_back(m);
        }
    return sp;
}

namespace detail {

// Visits every allowed jump (from, to, displacement, target mask) out of `mask`.
template <class Fn>
void for_each_jump(const StateSpace& sp, std::uint32_t mask, const RateMap& rates, Fn&& fn)
{
    auto n = static_cast<std::int64_t>(sp.n);
    for (std::int64_t x = 0; x < n; ++x) {
        if (!((mask >> x) & 1u))
            continue;
        for (auto [v, p] : rates) {
            std::int64_t y = x + v;
            if (sp.boundary == Boundary::ClosedSegment) {
                if (y < 0 || y >= n)
                    continue;
            } else {
                y = floor_mod(y, n);
                if (y == x)
                    continue;
            }
            if ((mask >> y) & 1u)
                continue;
            std::uint32_t target = (mask & ~(1u << x)) | (1u << y);
            fn(x, v, p, target);
        }
    }
}

} // namespace detail

inline Eigen::MatrixXd generator_from_rates(const StateSpace& sp, const RateMap& rates)
{
    if (sp.n > kMaxOracleSites)
        fail(Errc::TooLarge, "state space too large");
    auto N = static_cast<Eigen::Index>(sp.size());
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(N, N);
    for (std::size_t i = 0; i < sp.size(); ++i) {
        detail::for_each_jump(sp, sp.masks[i], rates, [&](std::int64_t, int, double p, std::uint32_t target) {
            auto j = static_cast<Eigen::Index>(sp.index_of(target));
            Q(static_cast<Eigen::Index>(i), j) += p;
        });
        Q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = -Q.row(static_cast<Eigen::Index>(i)).sum();
    }
    return Q;
}

inline Eigen::MatrixXd generator_matrix(const StateSpace& sp, const ModelSpec& spec)
{
    return generator_from_rates(sp, spec.micro_rates());
}

namespace detail {

// Poisson(lambda) weights up to the first index whose remaining tail is below tol.
inline std::vector<double> poisson_weights(double lambda, double tol)
{
    std::vector<double> w;
    if (lambda <= 0) {
        w.push_back(1.0);
        return w;
    }
    double mass = 0;
    for (std::size_t m = 0;; ++m) {
        double lw = -lambda + static_cast<double>(m) * std::log(lambda) - std::lgamma(static_cast<double>(m) + 1);
        double wm = std::exp(lw);
        w.push_back(wm);
        mass += wm;
        if (static_cast<double>(m) > lambda) {
            // geometric bound on the tail beyond m
            double ratio = lambda / (static_cast<double>(m) + 2);
            double tail = wm * lambda / (static_cast<double>(m) + 1) / (1 - ratio);
            if (tail < tol && 1 - mass < tol + 1e-15)
                break;
        }
    }
    return w;
}

inline double uniformization_rate(const Eigen::MatrixXd& Q) { return Q.diagonal().cwiseAbs().maxCoeff(); }

} // namespace detail

// P_t = sum_m Poisson(m; Lambda t) K^m with K = I + Q / Lambda.
inline Eigen::MatrixXd transition_matrix(const Eigen::MatrixXd& Q, double t, double tol = 1e-12)
{
    if (Q.rows() != Q.cols())
        fail(Errc::InvalidArgument, "generator must be square");
    if (t < 0)
        fail(Errc::InvalidArgument, "negative time");
    auto N = Q.rows();
    double lam = detail::uniformization_rate(Q);
    if (lam == 0 || t == 0)
        return Eigen::MatrixXd::Identity(N, N);
    Eigen::MatrixXd K = Eigen::MatrixXd::Identity(N, N) + Q / lam;
    auto w = detail::poisson_weights(lam * t, tol);
    Eigen::MatrixXd term = Eigen::MatrixXd::Identity(N, N);
    Eigen::MatrixXd P = w[0] * term;
    for (std::size_t m = 1; m < w.size(); ++m) {
        term = term * K;
        P.noalias() += w[m] * term;
    }
    return P;
}

// P_t f (backward, column vector) by uniformization on vectors.
inline Eigen::VectorXd apply_semigroup(const Eigen::MatrixXd& Q, double t, const Eigen::VectorXd& f, double tol = 1e-13)
{
    double lam = detail::uniformization_rate(Q);
    if (lam == 0 || t == 0)
        return f;
    Eigen::MatrixXd K = Eigen::MatrixXd::Identity(Q.rows(), Q.cols()) + Q / lam;
    auto w = detail::poisson_weights(lam * t, tol);
    Eigen::VectorXd term = f, out = w[0] * f;
    for (std::size_t m = 1; m < w.size(); ++m) {
        term = K * term;
        out += w[m] * term;
    }
    return out;
}

// mu P_t (forward, row distribution) by uniformization on vectors.
inline Eigen::RowVectorXd evolve_distribution(const Eigen::MatrixXd& Q, double t, const Eigen::RowVectorXd& mu,
                                              double tol = 1e-13)
{
    Eigen::VectorXd col = apply_semigroup(Q.transpose(), t, mu.transpose(), tol);
    return col.transpose();
}

namespace detail {

inline Eigen::VectorXd hyp_indicator(const StateSpace& sp, double anchor, const std::vector<double>& ceiling)
{
    Eigen::VectorXd v(static_cast<Eigen::Index>(sp.size()));
    for (std::size_t i = 0; i < sp.size(); ++i) {
        auto h = sp.field(i, anchor).heights();
        bool in = true;
        for (std::size_t y = 0; y < h.size() && in; ++y)
            in = h[y] <= ceiling[y];
        v(static_cast<Eigen::Index>(i)) = in ? 1.0 : 0.0;
    }
    return v;
}

inline HeightField negate(const HeightField& f)
{
    HeightField g = f;
    g.anchor = -f.anchor;
    for (auto& b : g.bits)
        b = 1 - b;
    return g;
}

} // namespace detail

struct SkewReport {
    double forward = 0;  // P(h_t <= G | h_0 = f)
    double backward = 0; // P(h_t <= -f | h_0 = -G)
    double gap = 0;
};

// Skew-time reversibility on a segment. g is read in microscopic units and discretized; the dual
// side starts from the negated discretization. Heights are anchored at the left vertex.
inline SkewReport skew_reversibility_gap(const StateSpace& sp, const ModelSpec& spec, double t, const HeightField& f,
                                         const ProfileSpec& g, bool exploratory = false)
{
    if (!spec.nearest_neighbor() && !exploratory)
        fail(Errc::NotNearestNeighbor, "skew reversibility is only asserted for nearest-neighbor models");
    if (sp.boundary != Boundary::ClosedSegment || sp.particles)
        fail(Errc::InvalidArgument, "skew reversibility uses the full segment state space");
    if (f.sites() != sp.n || f.left != 0)
        fail(Errc::InvalidArgument, "initial field must live on the state-space window");
    HeightField G = discretize_micro(g, Window{0, sp.n, Boundary::ClosedSegment});
    HeightField negG = detail::negate(G), negf = detail::negate(f);
    Eigen::MatrixXd Q = generator_matrix(sp, spec);

    auto start = [&](const HeightField& h) {
        Eigen::RowVectorXd mu = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(sp.size()));
        mu(static_cast<Eigen::Index>(sp.index_of(StateSpace::mask_of(h.bits)))) = 1.0;
        return mu;
    };
    SkewReport r;
    r.forward = evolve_distribution(Q, t, start(f)).dot(detail::hyp_indicator(sp, f.anchor, G.heights()));
    r.backward = evolve_distribution(Q, t, start(negG)).dot(detail::hyp_indicator(sp, negG.anchor, negf.heights()));
    r.gap = std::abs(r.forward - r.backward);
    return r;
}

namespace detail {

// Matrix of f -> sum_i nu_i sum_{x,v} p(v) (f(swap_{x,x+v} i) - f(i))^2, the form below.
inline Eigen::MatrixXd exchange_form(const StateSpace& sp, const RateMap& law)
{
    auto N = static_cast<Eigen::Index>(sp.size());
    auto n = static_cast<std::int64_t>(sp.n);
    double nu = 1.0 / static_cast<double>(sp.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
    for (std::size_t i = 0; i < sp.size(); ++i) {
        std::uint32_t m = sp.masks[i];
        for (std::int64_t x = 0; x < n; ++x)
            for (auto [v, p] : law) {
                std::int64_t y = x + v;
                if (sp.boundary == Boundary::ClosedSegment) {
                    if (y < 0 || y >= n)
                        continue;
                } else {
                    y = floor_mod(y, n);
                    if (y == x)
                        continue;
                }
                bool a = (m >> x) & 1u, b = (m >> y) & 1u;
                if (a == b)
                    continue;
                std::uint32_t sw = m ^ (1u << x) ^ (1u << y);
                auto I = static_cast<Eigen::Index>(i), J = static_cast<Eigen::Index>(sp.index_of(sw));
                double w = p * nu;
                A(I, I) += w;
                A(J, J) += w;
                A(I, J) -= w;
                A(J, I) -= w;
            }
    }
    return A;
}

} // namespace detail

// sum_x sum_v p(v) int (f(eta^{x,x+v}) - f(eta))^2 dnu with nu uniform on the state space.
inline double dirichlet_form(const StateSpace& sp, const Eigen::VectorXd& f, const RateMap& law)
{
    if (static_cast<std::size_t>(f.size()) != sp.size())
        fail(Errc::InvalidArgument, "function size does not match the state space");
    auto n = static_cast<std::int64_t>(sp.n);
    double nu = 1.0 / static_cast<double>(sp.size()), total = 0;
    for (std::size_t i = 0; i < sp.size(); ++i) {
        std::uint32_t m = sp.masks[i];
        for (std::int64_t x = 0; x < n; ++x)
            for (auto [v, p] : law) {
                std::int64_t y = x + v;
                if (sp.boundary == Boundary::ClosedSegment) {
                    if (y < 0 || y >= n)
                        continue;
                } else {
                    y = floor_mod(y, n);
                    if (y == x)
                        continue;
                }
                if (((m >> x) & 1u) == ((m >> y) & 1u))
                    continue;
                double d = f(static_cast<Eigen::Index>(sp.index_of(m ^ (1u << x) ^ (1u << y)))) -
                           f(static_cast<Eigen::Index>(i));
                total += p * d * d * nu;
            }
    }
    return total;
}

// -int f L^sym f dnu with L^sym = (Q + Q^T) / 2, the adjoint taken in L^2 of the uniform measure.
inline double symmetrized_energy(const Eigen::MatrixXd& Q, const Eigen::VectorXd& f)
{
    Eigen::MatrixXd S = (Q + Q.transpose()) / 2;
    return -f.dot(S * f) / static_cast<double>(Q.rows());
}

struct ComparabilityConstants {
    double upper = 0; // max D^p(f) / D(f)
    double lower = 0; // max D(f) / D^p(f)
};

// Extreme generalized eigenvalues of D^p against the nearest-neighbor form D, per particle sector,
// on the complement of the sector constants. Rates are normalized to unit total mass first.
inline ComparabilityConstants comparability_constants(const StateSpace& sp, const RateMap& raw)
{
    RateMap law;
    double mass = 0;
    for (auto [v, p] : raw) {
        if (!(p >= 0) || !std::isfinite(p))
            fail(Errc::InvalidRate, "rates must be finite and nonnegative");
        if (v != 0 && p > 0) {
            law[v] = p;
            mass += p;
        }
    }
    if (law.empty())
        fail(Errc::Empty, "empty law");
    if (support_gcd(law) != 1)
        fail(Errc::Reducible, "law is not irreducible");
    for (auto& [v, p] : law)
        p /= mass;
    Eigen::MatrixXd Ap = detail::exchange_form(sp, law);
    Eigen::MatrixXd A1 = detail::exchange_form(sp, RateMap{{1, 1.0}});

    ComparabilityConstants out;
    bool any = false;
    for (std::size_t k = 0; k <= sp.n; ++k) {
        std::vector<Eigen::Index> idx;
        for (std::size_t i = 0; i < sp.size(); ++i)
            if (static_cast<std::size_t>(std::popcount(sp.masks[i])) == k)
                idx.push_back(static_cast<Eigen::Index>(i));
        auto d = static_cast<Eigen::Index>(idx.size());
        if (d < 2)
            continue;
        // orthonormal basis of the complement of the constant vector in this sector
        Eigen::MatrixXd basis = Eigen::MatrixXd::Identity(d, d);
        basis.col(0).setConstant(1.0);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(basis);
        Eigen::MatrixXd Qfull = qr.householderQ();
        Eigen::MatrixXd V = Qfull.rightCols(d - 1);
        Eigen::MatrixXd Sp(d, d), S1(d, d);
        for (Eigen::Index a = 0; a < d; ++a)
            for (Eigen::Index b = 0; b < d; ++b) {
                Sp(a, b) = Ap(idx[a], idx[b]);
                S1(a, b) = A1(idx[a], idx[b]);
            }
        Eigen::MatrixXd P = V.transpose() * Sp * V, R = V.transpose() * S1 * V;
        P = (P + P.transpose()) / 2;
        R = (R + R.transpose()) / 2;
        double scale = std::max(P.norm(), R.norm());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ep(P), er(R);
        if (ep.eigenvalues().minCoeff() <= 1e-10 * scale || er.eigenvalues().minCoeff() <= 1e-10 * scale)
            fail(Errc::Degenerate, "a form vanishes on a non-constant function in sector " + std::to_string(k));
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> g(P, R);
        out.upper = std::max(out.upper, g.eigenvalues().maxCoeff());
        out.lower = std::max(out.lower, 1.0 / g.eigenvalues().minCoeff());
        any = true;
    }
    if (!any)
        fail(Errc::Degenerate, "no sector carries a non-constant function");
    return out;
}

struct GradientArgmaxReport {
    double max_discrepancy = 0;
    double max_gradient = 0;   // largest |nabla p_t| seen, for scale
    std::size_t comparisons = 0;
};

// Compares |p_t(h^x, hyp G) - p_t(h, hyp G)| with the probability that x maximizes
// h_t(.; -G) + h with value in {1, 2} (local max, unique maximizer) or {-1, 0} (local min).
inline GradientArgmaxReport gradient_argmax_check(const StateSpace& sp, const ModelSpec& spec, double t,
                                                  const ProfileSpec& g)
{
    if (spec.kind != ModelSpec::Kind::TASEP)
        fail(Errc::NotTASEP, "the argmax identity is checked for TASEP only");
    if (sp.boundary != Boundary::ClosedSegment || sp.particles)
        fail(Errc::InvalidArgument, "gradient check uses the full segment state space");
    if (sp.n > 10)
        fail(Errc::TooLarge, "gradient check is limited to 10 sites");
    std::size_t nv = sp.n + 1;
    HeightField G = discretize_micro(g, Window{0, sp.n, Boundary::ClosedSegment});
    HeightField negG = detail::negate(G);
    auto Gh = G.heights();
    Eigen::MatrixXd Q = generator_matrix(sp, spec);

    Eigen::RowVectorXd mu = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(sp.size()));
    mu(static_cast<Eigen::Index>(sp.index_of(StateSpace::mask_of(negG.bits)))) = 1.0;
    Eigen::RowVectorXd pi = evolve_distribution(Q, t, mu);

    // relative heights (anchor 0) of every configuration
    std::vector<std::vector<double>> rel(sp.size());
    for (std::size_t i = 0; i < sp.size(); ++i)
        rel[i] = sp.field(i, 0).heights();
    std::vector<std::vector<double>> term(sp.size());
    for (std::size_t s = 0; s < sp.size(); ++s)
        term[s] = sp.field(s, negG.anchor).heights();

    // anchors a for which either side can be nonzero, with a margin
    double gmax = *std::max_element(Gh.begin(), Gh.end()), gmin = *std::min_element(Gh.begin(), Gh.end());
    auto n = static_cast<std::int64_t>(sp.n);
    std::int64_t a_lo = static_cast<std::int64_t>(gmin) - 2 * n - 4, a_hi = static_cast<std::int64_t>(gmax) + 2 * n + 4;
    auto na = static_cast<std::size_t>(a_hi - a_lo + 1);

    // rhs[(a, c, x)]
    std::vector<double> rhs(na * sp.size() * nv, 0.0);
    auto slot = [&](std::int64_t a, std::size_t c, std::size_t x) {
        return (static_cast<std::size_t>(a - a_lo) * sp.size() + c) * nv + x;
    };
    for (std::size_t s = 0; s < sp.size(); ++s) {
        double ps = pi(static_cast<Eigen::Index>(s));
        if (ps == 0)
            continue;
        for (std::size_t c = 0; c < sp.size(); ++c) {
            double M = -1e300;
            for (std::size_t y = 0; y < nv; ++y)
                M = std::max(M, term[s][y] + rel[c][y]);
            std::size_t count = 0;
            for (std::size_t y = 0; y < nv; ++y)
                count += term[s][y] + rel[c][y] == M;
            for (std::size_t y = 1; y + 1 < nv; ++y) {
                if (term[s][y] + rel[c][y] != M)
                    continue;
                bool up = rel[c][y] > rel[c][y - 1] && rel[c][y] > rel[c][y + 1];
                bool down = rel[c][y] < rel[c][y - 1] && rel[c][y] < rel[c][y + 1];
                auto Mi = static_cast<std::int64_t>(M);
                if (up && count == 1) {
                    for (std::int64_t target : {1, 2})
                        if (target - Mi >= a_lo && target - Mi <= a_hi)
                            rhs[slot(target - Mi, c, y)] += ps;
                } else if (down) {
                    for (std::int64_t target : {-1, 0})
                        if (target - Mi >= a_lo && target - Mi <= a_hi)
                            rhs[slot(target - Mi, c, y)] += ps;
                }
            }
        }
    }

    GradientArgmaxReport rep;
    for (std::int64_t a = a_lo; a <= a_hi; ++a) {
        Eigen::VectorXd ind(static_cast<Eigen::Index>(sp.size()));
        for (std::size_t c = 0; c < sp.size(); ++c) {
            bool in = true;
            for (std::size_t y = 0; y < nv && in; ++y)
                in = rel[c][y] + static_cast<double>(a) <= Gh[y];
            ind(static_cast<Eigen::Index>(c)) = in;
        }
        Eigen::VectorXd p = apply_semigroup(Q, t, ind);
        for (std::size_t c = 0; c < sp.size(); ++c)
            for (std::size_t y = 1; y + 1 < nv; ++y) {
                std::uint32_t m = sp.masks[c];
                bool l = (m >> (y - 1)) & 1u, r = (m >> y) & 1u;
                double lhs = 0;
                if (l != r) {
                    std::uint32_t sw = m ^ (1u << (y - 1)) ^ (1u << y);
                    lhs = std::abs(p(static_cast<Eigen::Index>(sp.index_of(sw))) - p(static_cast<Eigen::Index>(c)));
                }
                double d = std::abs(lhs - rhs[slot(a, c, y)]);
                rep.max_discrepancy = std::max(rep.max_discrepancy, d);
                rep.max_gradient = std::max(rep.max_gradient, lhs);
                ++rep.comparisons;
            }
    }
    return rep;
}

struct SemigroupDifference {
    double lhs = 0;                // |p^A_t(f0 nu, B) - p^B_t(f0 nu, B)|
    double dirichlet_integral = 0; // int_0^t D(p^A_s(., B)) ds
    double f0_norm = 0;            // L^2(nu) norm of f0
    double constant = 0;           // lhs / (|f0| sqrt(integral))
    std::size_t intervals = 0;
};

// Exact two-model comparison from the density f0 (w.r.t. uniform nu) into the set B. B is read
// in microscopic units with heights anchored at 0 on the left; D is the nearest-neighbor form.
inline SemigroupDifference semigroup_difference(const StateSpace& sp, const ModelSpec& A, const ModelSpec& B,
                                                const Eigen::VectorXd& f0, const TargetSet& set, double t)
{
    if (static_cast<std::size_t>(f0.size()) != sp.size())
        fail(Errc::InvalidArgument, "density size does not match the state space");
    if (f0.minCoeff() < 0)
        fail(Errc::InvalidArgument, "density must be nonnegative");
    double nu = 1.0 / static_cast<double>(sp.size());
    if (std::abs(f0.sum() * nu - 1) > 1e-9)
        fail(Errc::InvalidArgument, "density must integrate to 1 against nu");
    Eigen::VectorXd ind(static_cast<Eigen::Index>(sp.size()));
    for (std::size_t i = 0; i < sp.size(); ++i)
        ind(static_cast<Eigen::Index>(i)) = contains_micro(set, sp.field(i, 0));
    Eigen::MatrixXd QA = generator_matrix(sp, A), QB = generator_matrix(sp, B);
    SemigroupDifference out;
    out.lhs = std::abs(nu * f0.dot(apply_semigroup(QA, t, ind) - apply_semigroup(QB, t, ind)));
    out.f0_norm = std::sqrt(nu * f0.squaredNorm());

    RateMap nn{{1, 1.0}};
    auto energy = [&](double s) { return dirichlet_form(sp, apply_semigroup(QA, s, ind), nn); };
    // composite Simpson, doubling the interval count until the relative change drops below 1e-8
    std::vector<double> values{energy(0), energy(t / 2), energy(t)};
    auto simpson = [&](const std::vector<double>& v) {
        std::size_t m = v.size() - 1;
        double h = t / static_cast<double>(m), s = v.front() + v.back();
        for (std::size_t i = 1; i < m; ++i)
            s += (i % 2 ? 4 : 2) * v[i];
        return s * h / 3;
    };
    double prev = simpson(values);
    for (int round = 0; round < 14; ++round) {
        std::size_t m = values.size() - 1;
        std::vector<double> next(2 * m + 1);
        for (std::size_t i = 0; i <= m; ++i)
            next[2 * i] = values[i];
        for (std::size_t i = 0; i < m; ++i)
            next[2 * i + 1] = energy(t * (2.0 * static_cast<double>(i) + 1) / (2.0 * static_cast<double>(m)));
        values = std::move(next);
        double cur = simpson(values);
        bool done = std::abs(cur - prev) <= 1e-8 * std::max(std::abs(cur), 1e-300);
        prev = cur;
        if (done)
            break;
    }
    out.dirichlet_integral = prev;
    out.intervals = values.size() - 1;
    double denom = out.f0_norm * std::sqrt(out.dirichlet_integral);
    out.constant = denom > 0 ? out.lhs / denom : 0;
    return out;
}

} // namespace kpz
