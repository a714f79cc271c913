#pragma once

#include <kpz/error.hpp>
#include <kpz/observables.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

namespace kpz {

struct AiryValue {
    double ai = 0;
    double ai_prime = 0;
};

namespace detail {

inline constexpr long double kAiry0 = 0.355028053887817239260063186004183177L;  // Ai(0)
inline constexpr long double kAiryP0 = 0.258819403792806798405183560189203963L; // -Ai'(0)

inline AiryValue airy_maclaurin(double xd)
{
    long double x = xd, x3 = x * x * x;
    long double f = 1, fp = 0, g = x, gp = 1;
    long double tf = 1, tg = x, tfp = x * x / 2, tgp = 1;
    fp = tfp;
    for (int k = 1; k < 200; ++k) {
        long double kk = k;
        tf *= x3 / ((3 * kk - 1) * (3 * kk));
        tg *= x3 / ((3 * kk) * (3 * kk + 1));
        tgp *= x3 / ((3 * kk) * (3 * kk - 2));
        if (k >= 2)
            tfp *= x3 / ((3 * kk - 1) * (3 * kk - 3));
        f += tf;
        g += tg;
        gp += tgp;
        if (k >= 2)
            fp += tfp;
        long double mx = std::max({std::abs(tf), std::abs(tg), std::abs(tfp), std::abs(tgp)});
        if (mx < 1e-22L * std::max(1.0L, std::abs(f) + std::abs(g)))
            break;
    }
    return {static_cast<double>(kAiry0 * f - kAiryP0 * g), static_cast<double>(kAiry0 * fp - kAiryP0 * gp)};
}

// e^z K_nu(z) as the trapezoid sum of exp(-z (cosh t - 1)) cosh(nu t) over t >= 0.
inline double scaled_bessel_k(double nu, double z)
{
    const double h = 0.02;
    double sum = 0.5;
    for (int i = 1;; ++i) {
        double t = i * h;
        double expo = -z * (std::cosh(t) - 1) + nu * t;
        if (expo < -50)
            break;
        sum += std::exp(-z * (std::cosh(t) - 1)) * std::cosh(nu * t);
    }
    return sum * h;
}

inline AiryValue airy_positive(double x)
{
    double zeta = 2.0 / 3.0 * x * std::sqrt(x);
    double e = std::exp(-zeta);
    double pi = std::numbers::pi;
    double ai = std::sqrt(x / 3) / pi * scaled_bessel_k(1.0 / 3.0, zeta) * e;
    double aip = -x / (pi * std::sqrt(3.0)) * scaled_bessel_k(2.0 / 3.0, zeta) * e;
    return {ai, aip};
}

// Oscillatory expansion for Ai(-z), Ai'(-z), summed up to its smallest term.
inline AiryValue airy_negative(double xd)
{
    long double z = -xd;
    long double zeta = 2.0L / 3.0L * z * std::sqrt(z);
    std::vector<long double> u{1}, v{1};
    long double prev = 1;
    for (int k = 1; k < 200; ++k) {
        long double kk = k;
        long double uk = u.back() * (6 * kk - 5) * (6 * kk - 3) * (6 * kk - 1) / ((2 * kk - 1) * 216 * kk);
        long double term = uk / std::pow(zeta, kk);
        if (term > prev || term < 1e-22L)
            break;
        prev = term;
        u.push_back(uk);
        v.push_back(-(6 * kk + 1) / (6 * kk - 1) * uk);
    }
    long double su0 = 0, su1 = 0, sv0 = 0, sv1 = 0, zp = 1;
    for (std::size_t k = 0; k < u.size(); ++k) {
        long double sign = (k / 2) % 2 == 0 ? 1 : -1;
        if (k % 2 == 0) {
            su0 += sign * u[k] / zp;
            sv0 += sign * v[k] / zp;
        } else {
            su1 += sign * u[k] / zp;
            sv1 += sign * v[k] / zp;
        }
        zp *= zeta;
    }
    long double ph = zeta - std::numbers::pi_v<long double> / 4;
    long double c = std::cos(ph), s = std::sin(ph);
    long double rs = std::sqrt(std::numbers::pi_v<long double>);
    long double q = std::pow(z, 0.25L);
    long double ai = (c * su0 + s * su1) / (rs * q);
    long double aip = q / rs * (s * sv0 - c * sv1);
    return {static_cast<double>(ai), static_cast<double>(aip)};
}

} // namespace detail

inline constexpr double kAiryMaclaurinLow = -8;
inline constexpr double kAiryMaclaurinHigh = 2;

inline AiryValue airy(double x)
{
    if (!(std::abs(x) <= 40))
        fail(Errc::OutOfRange, "Airy argument " + std::to_string(x) + " outside [-40, 40]");
    if (x < kAiryMaclaurinLow)
        return detail::airy_negative(x);
    if (x > kAiryMaclaurinHigh)
        return detail::airy_positive(x);
    return detail::airy_maclaurin(x);
}

inline double airy_ai(double x) { return airy(x).ai; }
inline double airy_ai_prime(double x) { return airy(x).ai_prime; }

namespace detail {

// Beyond 40 both Ai and Ai' are below 1e-70 and are treated as zero.
inline AiryValue airy_or_zero(double x) { return x > 40 ? AiryValue{} : airy(x); }

inline double airy_kernel_from(double x, const AiryValue& ax, double y, const AiryValue& ay)
{
    if (x == y)
        return ax.ai_prime * ax.ai_prime - x * ax.ai * ax.ai;
    return (ax.ai * ay.ai_prime - ax.ai_prime * ay.ai) / (x - y);
}

} // namespace detail

inline double airy_kernel(double x, double y)
{
    return detail::airy_kernel_from(x, detail::airy_or_zero(x), y, detail::airy_or_zero(y));
}

struct QuadratureGrid {
    std::vector<double> nodes;
    std::vector<double> weights;
};

// Gauss-Legendre rule on [-1, 1] by Newton iteration on P_m.
inline QuadratureGrid gauss_legendre(int m)
{
    if (m < 1)
        fail(Errc::InvalidArgument, "quadrature needs at least one node");
    QuadratureGrid q;
    q.nodes.resize(static_cast<std::size_t>(m));
    q.weights.resize(static_cast<std::size_t>(m));
    for (int i = 0; i < (m + 1) / 2; ++i) {
        long double x = std::cos(std::numbers::pi_v<long double> * (i + 0.75L) / (m + 0.5L));
        long double dp = 0;
        for (int it = 0; it < 100; ++it) {
            long double p0 = 1, p1 = x;
            for (int k = 2; k <= m; ++k) {
                long double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if (m == 1) {
                p1 = x;
                p0 = 1;
            }
            dp = m * (x * p1 - p0) / (x * x - 1);
            long double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-19L)
                break;
        }
        long double p0 = 1, p1 = x;
        for (int k = 2; k <= m; ++k) {
            long double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        dp = m == 1 ? 1 : m * (x * p1 - p0) / (x * x - 1);
        long double w = 2 / ((1 - x * x) * dp * dp);
        auto lo = static_cast<std::size_t>(i), hi = static_cast<std::size_t>(m - 1 - i);
        q.nodes[lo] = static_cast<double>(-x);
        q.nodes[hi] = static_cast<double>(x);
        q.weights[lo] = q.weights[hi] = static_cast<double>(w);
    }
    return q;
}

inline constexpr double kTailScale = 6;

// Gauss-Legendre pulled back to (s, inf) by u = s + c tan(pi (xi + 1) / 4).
inline QuadratureGrid half_line_grid(double s, int m, double c = kTailScale)
{
    QuadratureGrid gl = gauss_legendre(m), out;
    const double pi = std::numbers::pi;
    for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
        double th = pi * (gl.nodes[i] + 1) / 4;
        double cs = std::cos(th);
        out.nodes.push_back(s + c * std::tan(th));
        out.weights.push_back(gl.weights[i] * c * pi / 4 / (cs * cs));
    }
    return out;
}

inline Eigen::MatrixXd kernel_matrix(const QuadratureGrid& q)
{
    auto m = static_cast<Eigen::Index>(q.nodes.size());
    std::vector<AiryValue> a;
    a.reserve(q.nodes.size());
    for (double x : q.nodes)
        a.push_back(detail::airy_or_zero(x));
    Eigen::MatrixXd K(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) {
            auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
            double k = detail::airy_kernel_from(q.nodes[ui], a[ui], q.nodes[uj], a[uj]);
            K(i, j) = K(j, i) = std::sqrt(q.weights[ui] * q.weights[uj]) * k;
        }
    return K;
}

// F_2(s) = det(I - K_Ai) on L^2(s, inf) by Nystrom discretization.
inline double tracy_widom_gue_cdf(double s, int m = 64)
{
    if (!(s >= -10 && s <= 10))
        fail(Errc::OutOfRange, "s outside [-10, 10]");
    if (m < 16)
        fail(Errc::OutOfRange, "need at least 16 quadrature nodes");
    Eigen::MatrixXd K = kernel_matrix(half_line_grid(s, m));
    Eigen::MatrixXd I = Eigen::MatrixXd::Identity(K.rows(), K.cols());
    return (I - K).partialPivLu().determinant();
}

struct TwTable {
    std::vector<double> s;
    std::vector<double> F;
    double mean = 0;
    double variance = 0;
    double mass = 0;
    bool monotone = true;
    int m = 0;

    // Linear interpolation, clamped to 0 below and 1 above the table.
    double cdf(double x) const
    {
        if (s.empty())
            return 0;
        if (x <= s.front())
            return x < s.front() ? 0 : F.front();
        if (x >= s.back())
            return 1;
        auto it = std::upper_bound(s.begin(), s.end(), x);
        auto i = static_cast<std::size_t>(it - s.begin());
        double w = (x - s[i - 1]) / (s[i] - s[i - 1]);
        return (1 - w) * F[i - 1] + w * F[i];
    }
};

inline TwTable tw_table(double s_min, double s_max, double step, int m = 64)
{
    if (!(step > 0))
        fail(Errc::InvalidArgument, "step must be positive");
    if (!(s_max >= s_min))
        fail(Errc::InvalidArgument, "s_max must not precede s_min");
    TwTable t;
    t.m = m;
    auto n = static_cast<std::size_t>(std::floor((s_max - s_min) / step + 1e-9)) + 1;
    t.s.resize(n);
    t.F.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        t.s[i] = s_min + static_cast<double>(i) * step;
    parallel_for(n, worker_count(), [&](std::size_t i) { t.F[i] = tracy_widom_gue_cdf(t.s[i], m); });
    for (std::size_t i = 1; i < n; ++i)
        if (t.F[i] < t.F[i - 1])
            t.monotone = false;
    if (n < 3)
        return t;
    // density by central differences, then trapezoid moments
    std::vector<double> f(n);
    f[0] = (t.F[1] - t.F[0]) / step;
    f[n - 1] = (t.F[n - 1] - t.F[n - 2]) / step;
    for (std::size_t i = 1; i + 1 < n; ++i)
        f[i] = (t.F[i + 1] - t.F[i - 1]) / (2 * step);
    double m0 = 0, m1 = 0, m2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double w = (i == 0 || i + 1 == n) ? step / 2 : step;
        m0 += w * f[i];
        m1 += w * f[i] * t.s[i];
        m2 += w * f[i] * t.s[i] * t.s[i];
    }
    t.mass = m0;
    t.mean = m1 / m0;
    t.variance = m2 / m0 - t.mean * t.mean;
    return t;
}

inline std::vector<std::pair<double, double>> read_tw_csv_rows(const std::vector<std::string>& lines)
{
    std::vector<std::pair<double, double>> rows;
    for (const auto& line : lines) {
        if (line.empty() || line[0] == 's')
            continue;
        auto comma = line.find(',');
        if (comma == std::string::npos)
            fail(Errc::ParseError, "malformed table row '" + line + "'");
        rows.emplace_back(std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
    }
    return rows;
}

} // namespace kpz
