#pragma once

// Independent reference computations used only by tests. Nothing here calls
// into the library's kernels, so agreement is a genuine cross-check.

#include <cmath>
#include <numbers>
#include <vector>

namespace oracle {

// Heat kernel of ½ d²/dθ² on the unit circle by the method of images,
// summed over a fixed generous window.
inline double circle_heat_images(double t, double theta) {
    const double two_pi = 2.0 * std::numbers::pi;
    long double s = 0.0L;
    for (int j = -40; j <= 40; ++j) {
        const long double r = theta + two_pi * j;
        s += std::exp(-r * r / (2.0L * t));
    }
    return static_cast<double>(s / std::sqrt(two_pi * t));
}

// Σ_{k≥1} cos(kθ)/k² = π²/6 - π|θ|/2 + θ²/4 on [-π, π].
inline double circle_cos_over_k2(double theta) {
    const double pi = std::numbers::pi;
    double c = std::fmod(std::abs(theta), 2.0 * pi);
    if (c > pi) c = 2.0 * pi - c;
    return pi * pi / 6.0 - pi * c / 2.0 + c * c / 4.0;
}

// Circle covariance kernel with α = 1 in closed form.
inline double circle_g1(double theta, double rho) {
    return rho / (2.0 * std::numbers::pi) + circle_cos_over_k2(theta) / std::numbers::pi;
}

// Gauss–Legendre by the Golub–Welsch-free brute approach: bisection on P_n
// sign changes over a fine grid, then weights from the derivative formula.
inline void gauss_legendre_bisect(int n, std::vector<double>& x, std::vector<double>& w) {
    auto pn = [n](double t, double& dp) {
        double p0 = 1.0, p1 = t;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        dp = n * (t * p1 - p0) / (t * t - 1.0);
        return p1;
    };
    x.clear();
    w.clear();
    const int grid = 200 * n;
    double dp = 0.0;
    double prev_t = -1.0 + 1e-15, prev_v = pn(prev_t, dp);
    for (int i = 1; i <= grid; ++i) {
        const double t = -1.0 + 2.0 * i / grid - (i == grid ? 1e-15 : 0.0);
        const double v = pn(t, dp);
        if ((prev_v < 0) != (v < 0)) {
            double lo = prev_t, hi = t;
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                const double vm = pn(mid, dp);
                if ((vm < 0) == (prev_v < 0)) lo = mid; else hi = mid;
            }
            const double root = 0.5 * (lo + hi);
            pn(root, dp);
            x.push_back(root);
            w.push_back(2.0 / ((1.0 - root * root) * dp * dp));
        }
        prev_t = t;
        prev_v = v;
    }
}

}  // namespace oracle
