#pragma once

#include <kpz/core_model.hpp>
#include <kpz/initial_data.hpp>
#include <kpz/kmc_engine.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <functional>
#include <numeric>
#include <span>
#include <thread>
#include <vector>

namespace kpz {

// Worker count from KPZ_WORKERS, defaulting to the hardware concurrency.
inline unsigned worker_count()
{
    if (const char* env = std::getenv("KPZ_WORKERS")) {
        int v = std::atoi(env);
        if (v > 0)
            return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// Calls fn(i) for i in [0, n) on `workers` threads. Each index is handled exactly once, so any
// per-index output is independent of the worker count.
template <class Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn)
{
    if (workers == 0)
        workers = worker_count();
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(n, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < n; i += workers)
                        fn(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
    }
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

enum class TargetMode { Hyp, Epi };

struct TargetSet {
    TargetMode mode = TargetMode::Hyp;
    ProfileSpec g;

    friend bool operator==(const TargetSet&, const TargetSet&) = default;
};

namespace detail {

template <class Value>
bool contains_impl(const TargetSet& set, const HeightField& h, Value&& value)
{
    auto heights = h.heights();
    for (std::size_t i = 0; i < heights.size(); ++i) {
        auto [x, v] = value(h.left + static_cast<std::int64_t>(i), heights[i]);
        double g = set.g(x);
        if (set.mode == TargetMode::Hyp ? !(v <= g) : !(v > g))
            return false;
    }
    return true;
}

} // namespace detail

// Membership of the rescaled height in hyp(g) (h <= g) or epi(g) (h > g) at every window vertex.
inline bool contains(const TargetSet& set, const HeightField& h, const ScalingParams& params)
{
    double se = std::sqrt(params.eps), lift = params.t / params.eps;
    return detail::contains_impl(set, h, [&](std::int64_t y, double hy) {
        return std::pair{params.macro_x(y), se * hy + lift};
    });
}

// Same test with g read in microscopic units.
inline bool contains_micro(const TargetSet& set, const HeightField& h)
{
    return detail::contains_impl(set, h, [](std::int64_t y, double hy) { return std::pair{static_cast<double>(y), hy}; });
}

using InitSampler = std::function<HeightField(std::uint64_t seed)>;

struct HitEstimate {
    double p_hat = 0;
    double std_error = 0;
    std::size_t n = 0;
    std::size_t hits = 0;
};

inline HitEstimate make_hit_estimate(std::size_t hits, std::size_t n)
{
    HitEstimate e;
    e.n = n;
    e.hits = hits;
    e.p_hat = static_cast<double>(hits) / static_cast<double>(n);
    e.std_error = std::sqrt(e.p_hat * (1 - e.p_hat) / static_cast<double>(n));
    return e;
}

// Final field of trajectory `index`: initial data, dynamics up to 2 eps^(-3/2) t.
inline HeightField simulate_trajectory(const ModelSpec& spec, const InitSampler& init, const ScalingParams& params,
                                       std::uint64_t seed, std::uint64_t index)
{
    std::uint64_t s = trajectory_seed(seed, index);
    SimState st = build_state(spec, init(s), s);
    run_to_time(st, params.micro_time());
    return std::move(st.field);
}

// Gaussian shift for averaging: r ~ N(0, a^2) vertically, y ~ N(0, 2 a^2) horizontally.
inline HeightField averaging_shift(const HeightField& h, const ScalingParams& params, std::uint64_t seed,
                                   std::uint64_t index)
{
    if (!(params.a > 0))
        return h;
    auto rng = make_stream(trajectory_seed(seed, index), 4);
    std::normal_distribution<double> z(0.0, 1.0);
    double r = params.a * z(rng);
    double y = std::sqrt(2.0) * params.a * z(rng);
    // h lies in sigma_r tau_y B exactly when h(. + [y]) - [r] lies in B
    return shift(h, -y, -r, params.eps);
}

inline HitEstimate estimate_hit_probability(const ModelSpec& spec, const InitSampler& init,
                                            const ScalingParams& params, const TargetSet& set, std::size_t n,
                                            std::uint64_t seed, unsigned workers = 0)
{
    if (n == 0)
        fail(Errc::NoSamples, "no trajectories requested");
    std::vector<std::uint8_t> hit(n);
    parallel_for(n, workers, [&](std::size_t i) {
        HeightField h = simulate_trajectory(spec, init, params, seed, i);
        hit[i] = contains(set, averaging_shift(h, params, seed, i), params);
    });
    return make_hit_estimate(std::accumulate(hit.begin(), hit.end(), std::size_t{0}), n);
}

inline std::size_t count_maxima(std::span<const double> values)
{
    if (values.empty())
        return 0;
    double m = *std::max_element(values.begin(), values.end());
    return static_cast<std::size_t>(std::count(values.begin(), values.end(), m));
}

struct MaximaTail {
    std::vector<double> pmf; // pmf[k] = P(X = k); pmf[0] = 0
    std::size_t n = 0;
    double C = 0; // fitted log P(X >= k) = log C - c k^(1/4)
    double c = 0;

    std::vector<double> tail() const
    {
        std::vector<double> t(pmf.size() + 1, 0.0);
        for (std::size_t k = pmf.size(); k-- > 0;)
            t[k] = t[k + 1] + pmf[k];
        t.pop_back();
        return t;
    }
};

// Least-squares fit of log P(X >= k) against k^(1/4) over the k with positive tail mass.
inline void fit_stretched_exponential(MaximaTail& m)
{
    auto t = m.tail();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t cnt = 0;
    for (std::size_t k = 1; k < t.size(); ++k) {
        if (!(t[k] > 0))
            continue;
        double x = std::pow(static_cast<double>(k), 0.25), y = std::log(t[k]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++cnt;
    }
    if (cnt < 2) {
        m.C = 1;
        m.c = 0;
        return;
    }
    double nn = static_cast<double>(cnt);
    double slope = (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
    m.c = -slope;
    m.C = std::exp((sy - slope * sx) / nn);
}

// Distribution of the number of maximizers of f + h, h a fair walk with h(0) = 0.
inline MaximaTail maxima_tail(const ProfileSpec& f, double eps, const Window& w, std::size_t n, std::uint64_t seed,
                              unsigned workers = 0)
{
    f.validate();
    if (!(f.right_slope <= -0.1) || !(f.left_slope >= 0.1))
        fail(Errc::NonDecayingProfile, "profile must decay with outward slope at least 0.1 on both sides");
    if (n == 0)
        fail(Errc::NoSamples, "no samples requested");
    if (w.left > 0 || w.right() < 0)
        fail(Errc::WindowTooSmall, "window must contain the origin");
    auto base = discretize_profile(f, w, eps).heights();
    std::vector<std::uint32_t> counts(n);
    parallel_for(n, workers, [&](std::size_t i) {
        auto walk = sample_equilibrium_walk(Window{w.left, w.sites, Boundary::ClosedSegment}, eps, 0.0,
                                            trajectory_seed(seed, i))
                        .heights();
        for (std::size_t j = 0; j < walk.size(); ++j)
            walk[j] += base[j];
        counts[i] = static_cast<std::uint32_t>(count_maxima(walk));
    });
    MaximaTail m;
    m.n = n;
    std::uint32_t kmax = *std::max_element(counts.begin(), counts.end());
    m.pmf.assign(kmax + 1, 0.0);
    for (auto k : counts)
        m.pmf[k] += 1.0;
    for (auto& p : m.pmf)
        p /= static_cast<double>(n);
    fit_stretched_exponential(m);
    return m;
}

// Largest rescaled oscillation over lattice pairs at distance <= b inside [-L, L].
inline double modulus_of_continuity(const HeightField& h, const ScalingParams& params, double b, double L)
{
    if (!(b > 0 && b < 1) || !(L > 0))
        fail(Errc::InvalidArgument, "modulus needs 0 < b < 1 and L > 0");
    auto lo = static_cast<std::int64_t>(std::ceil(-2 * L / params.eps - 1e-9));
    auto hi = static_cast<std::int64_t>(std::floor(2 * L / params.eps + 1e-9));
    if (!h.has_vertex(lo) || !h.has_vertex(hi))
        fail(Errc::WindowTooSmall, "[-L, L] is not inside the window");
    auto w = static_cast<std::int64_t>(std::floor(2 * b / params.eps + 1e-9));
    std::vector<double> v;
    for (std::int64_t y = lo; y <= hi; ++y)
        v.push_back(h.height(y));
    std::deque<std::size_t> mx, mn;
    double best = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        while (!mx.empty() && v[mx.back()] <= v[i])
            mx.pop_back();
        while (!mn.empty() && v[mn.back()] >= v[i])
            mn.pop_back();
        mx.push_back(i);
        mn.push_back(i);
        while (static_cast<std::int64_t>(i - mx.front()) > w)
            mx.pop_front();
        while (static_cast<std::int64_t>(i - mn.front()) > w)
            mn.pop_front();
        best = std::max(best, v[mx.front()] - v[mn.front()]);
    }
    return std::sqrt(params.eps) * best;
}

struct EmpiricalDistribution {
    std::vector<double> samples; // trajectory order
    std::vector<double> sorted;

    explicit EmpiricalDistribution(std::vector<double> s = {}) : samples(std::move(s)), sorted(samples)
    {
        std::sort(sorted.begin(), sorted.end());
    }
    std::size_t size() const { return sorted.size(); }
    double cdf(double x) const
    {
        auto it = std::upper_bound(sorted.begin(), sorted.end(), x);
        return static_cast<double>(it - sorted.begin()) / static_cast<double>(sorted.size());
    }
    double mean() const { return std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(size()); }
    double variance() const
    {
        double m = mean(), s = 0;
        for (double x : sorted)
            s += (x - m) * (x - m);
        return s / static_cast<double>(size() - 1);
    }
};

inline EmpiricalDistribution one_point_distribution(const ModelSpec& spec, const InitSampler& init,
                                                    const ScalingParams& params, double x, std::size_t n,
                                                    std::uint64_t seed, unsigned workers = 0)
{
    if (n == 0)
        fail(Errc::NoSamples, "no trajectories requested");
    std::vector<double> values(n);
    parallel_for(n, workers, [&](std::size_t i) {
        std::uint64_t s = trajectory_seed(seed, i);
        SimState st = build_state(spec, init(s), s);
        run_to_time(st, params.micro_time());
        values[i] = rescaled_height(st, params, x);
    });
    return EmpiricalDistribution(std::move(values));
}

// Two-sided Kolmogorov–Smirnov distance to a continuous reference CDF.
inline double ks_distance(const EmpiricalDistribution& emp, const std::function<double(double)>& cdf)
{
    if (emp.size() == 0)
        fail(Errc::NoSamples, "empty sample");
    double n = static_cast<double>(emp.size()), d = 0;
    for (std::size_t i = 0; i < emp.size(); ++i) {
        double f = cdf(emp.sorted[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

} // namespace kpz
