#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pamlab/errors.hpp"
#include "pamlab/parallel.hpp"
#include "pamlab/rng.hpp"

namespace pamlab {

struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
inline GaussRule gauss_legendre(int n) {
    if (n < 1) throw InvalidInput("numerics", "Gauss-Legendre order must be >= 1");
    // Returns (P_n(x), P_n'(x)).
    auto legendre = [n](double x) {
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        return std::pair{p1, n * (x * p1 - p0) / (x * x - 1.0)};
    };
    GaussRule rule{std::vector<double>(n), std::vector<double>(n)};
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        for (int iter = 0; iter < 100; ++iter) {
            const auto [p, dp] = legendre(x);
            const double dx = p / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        const double dp = legendre(x).second;
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[i] = -x;
        rule.nodes[n - 1 - i] = x;
        rule.weights[i] = w;
        rule.weights[n - 1 - i] = w;
    }
    return rule;
}

// Integral of f over [a, b] with an n-point Gauss rule.
template <class Fn>
double integrate_gauss(const GaussRule& rule, double a, double b, Fn&& f) {
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    double s = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) s += rule.weights[i] * f(mid + half * rule.nodes[i]);
    return s * half;
}

// Exponent for a time grid clustered at 0 that absorbs an s^{(2α-d)/2}
// endpoint singularity.
inline double grading_exponent(double alpha, int dim) {
    const double gamma = 2.0 / (1.0 + (2.0 * alpha - dim) / 2.0);
    return std::clamp(gamma, 1.0, 4.0);
}

// Nodes t·(j/J)^γ for j = 0..J.
inline std::vector<double> graded_grid(double t, int intervals, double gamma) {
    if (intervals < 1 || !(t > 0.0)) throw InvalidInput("numerics", "graded grid needs t > 0 and >= 1 interval");
    std::vector<double> s(intervals + 1);
    for (int j = 0; j <= intervals; ++j) s[j] = t * std::pow(static_cast<double>(j) / intervals, gamma);
    s.back() = t;
    return s;
}

// One sample of a "there exists C with lhs <= C * envelope" claim.
struct EnvelopeSample {
    double lhs = 0.0;
    double envelope = 1.0;
};

struct EnvelopeReport {
    double fitted_constant = 0.0;
    double validation_ratio = 0.0;  // max lhs / (C * envelope) on the held-out set
    double slack = 0.10;
    std::size_t fit_count = 0;
    std::size_t validate_count = 0;
    bool passed = false;
};

// Fits C as the sup of lhs/envelope on the fit set and validates on the
// held-out set with multiplicative slack.
inline EnvelopeReport fit_validate(std::span<const EnvelopeSample> fit, std::span<const EnvelopeSample> validate,
                                   double slack = 0.10) {
    EnvelopeReport r;
    r.slack = slack;
    r.fit_count = fit.size();
    r.validate_count = validate.size();
    for (const auto& s : fit) r.fitted_constant = std::max(r.fitted_constant, s.lhs / s.envelope);
    double worst = 0.0;
    for (const auto& s : validate) {
        const double ratio = s.lhs / s.envelope;
        worst = std::max(worst, r.fitted_constant > 0.0 ? ratio / r.fitted_constant : (ratio > 0.0 ? INFINITY : 0.0));
    }
    r.validation_ratio = worst;
    r.passed = std::isfinite(r.fitted_constant) && !fit.empty() && !validate.empty() && worst <= 1.0 + slack;
    return r;
}

// Splits an ordered sample list into alternating fit/validate halves.
inline std::pair<std::vector<EnvelopeSample>, std::vector<EnvelopeSample>> split_alternating(
    std::span<const EnvelopeSample> all) {
    std::pair<std::vector<EnvelopeSample>, std::vector<EnvelopeSample>> out;
    for (std::size_t i = 0; i < all.size(); ++i) (i % 2 == 0 ? out.first : out.second).push_back(all[i]);
    return out;
}

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;
};

inline LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) throw InvalidInput("numerics", "linear fit needs >= 2 matched points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    if (n > 2) {
        double rss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = y[i] - f.intercept - f.slope * x[i];
            rss += e * e;
        }
        f.slope_stderr = std::sqrt(rss / (n - 2) / sxx);
    }
    return f;
}

struct ExponentialEnvelope {
    double constant = 0.0;
    double rate = 0.0;
    double validation_ratio = 0.0;
    bool passed = false;
};

// Fits H(t) <= C e^{θt}: θ from least squares of ln H on the even-indexed
// points, C raised to cover them; validated on the odd-indexed points.
inline ExponentialEnvelope fit_exponential_envelope(std::span<const double> t, std::span<const double> h,
                                                    double slack = 0.10) {
    std::vector<double> ft, fy;
    for (std::size_t i = 0; i < t.size(); i += 2) {
        ft.push_back(t[i]);
        fy.push_back(std::log(h[i]));
    }
    ExponentialEnvelope e;
    if (ft.size() < 2 || t.size() < 3) return e;
    e.rate = linear_fit(ft, fy).slope;
    if (std::abs(e.rate) < 1e-13) e.rate = 0.0;
    for (std::size_t i = 0; i < t.size(); i += 2) e.constant = std::max(e.constant, h[i] * std::exp(-e.rate * t[i]));
    for (std::size_t i = 1; i < t.size(); i += 2)
        e.validation_ratio = std::max(e.validation_ratio, h[i] * std::exp(-e.rate * t[i]) / e.constant);
    e.passed = std::isfinite(e.constant) && e.validation_ratio <= 1.0 + slack;
    return e;
}

struct MeanEstimate {
    double mean = 0.0;
    double standard_error = 0.0;
};

// Sample mean with standard error, summed pairwise in index order.
inline MeanEstimate mean_estimate(std::span<const double> values) {
    MeanEstimate m;
    const std::size_t n = values.size();
    if (n == 0) return m;
    m.mean = pairwise_sum(values) / n;
    if (n > 1) {
        std::vector<double> sq(n);
        for (std::size_t i = 0; i < n; ++i) sq[i] = (values[i] - m.mean) * (values[i] - m.mean);
        m.standard_error = std::sqrt(pairwise_sum(sq) / (n - 1) / n);
    }
    return m;
}

inline constexpr double kNormalQuantile975 = 1.959963984540054;

// Asymptotic Kolmogorov–Smirnov p-value with the Stephens small-sample correction.
inline double ks_pvalue(double statistic, std::size_t n) {
    const double sn = std::sqrt(static_cast<double>(n));
    const double lambda = (sn + 0.12 + 0.11 / sn) * statistic;
    if (lambda < 1e-3) return 1.0;
    double q = 0.0;
    for (int k = 1; k <= 200; ++k) {
        const double term = 2.0 * ((k % 2 == 1) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
        q += term;
        if (std::abs(term) < 1e-16) break;
    }
    return std::clamp(q, 0.0, 1.0);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// KS statistic of a sample against the standard normal law.
inline double ks_statistic_normal(std::vector<double> sample) {
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double f = normal_cdf(sample[i]);
        d = std::max({d, (i + 1) / n - f, f - i / n});
    }
    return d;
}

struct ProportionInterval {
    double estimate = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

inline ProportionInterval wilson_interval(std::size_t successes, std::size_t trials, double z = kNormalQuantile975) {
    ProportionInterval p;
    if (trials == 0) return p;
    const double n = static_cast<double>(trials);
    const double phat = successes / n;
    const double denom = 1.0 + z * z / n;
    const double centre = (phat + z * z / (2.0 * n)) / denom;
    const double half = z * std::sqrt(phat * (1.0 - phat) / n + z * z / (4.0 * n * n)) / denom;
    p.estimate = phat;
    p.lower = std::max(0.0, centre - half);
    p.upper = std::min(1.0, centre + half);
    return p;
}

// Quadratic Lagrange interpolation on an increasing grid, using the three
// nodes nearest to x. Constant extrapolation is never needed by callers, so
// x outside the grid is clamped.
inline double interpolate_quadratic(std::span<const double> grid, std::span<const double> values, double x) {
    const std::size_t n = grid.size();
    if (n == 1) return values[0];
    if (x <= grid.front()) return values.front();
    if (x >= grid.back()) return values.back();
    auto it = std::upper_bound(grid.begin(), grid.end(), x);
    std::size_t hi = static_cast<std::size_t>(it - grid.begin());
    if (n == 2) {
        const double w = (x - grid[0]) / (grid[1] - grid[0]);
        return values[0] * (1 - w) + values[1] * w;
    }
    std::size_t i0 = hi >= 2 ? hi - 2 : 0;
    if (hi < n - 1 && x - grid[hi - 1] < grid[hi] - x) i0 = hi - 1;
    if (i0 + 2 >= n) i0 = n - 3;
    const double x0 = grid[i0], x1 = grid[i0 + 1], x2 = grid[i0 + 2];
    const double l0 = (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2));
    const double l1 = (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2));
    const double l2 = (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1));
    return l0 * values[i0] + l1 * values[i0 + 1] + l2 * values[i0 + 2];
}

// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace pamlab
