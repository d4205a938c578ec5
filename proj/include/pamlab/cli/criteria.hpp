#pragma once

#include <array>
#include <string_view>

namespace pamlab::cli {

// Named acceptance criteria and the claim each one exercises. Every verdict a
// suite emits names one of these; the report joins on the name.
struct Criterion {
    std::string_view name;
    std::string_view claim;
};

inline constexpr std::array<Criterion, 29> kCriteria{{
    {"heat-kernel-oracle", "spectral circle heat kernel equals the wrapped-Gaussian image sum"},
    {"gaussian-upper-bound", "heat kernel bounded by C (Gaussian + t^1) with a finite constant"},
    {"small-time-heat-bound", "small-time heat kernel bounded by C times the modified Gaussian"},
    {"geodesic-lower-bound", "F_a(z) >= (d(x,z) - a d(x,y))^2 for every (a, x, y, z)"},
    {"antipodal-equality", "the geodesic lower bound is an equality for antipodal points on the sphere"},
    {"defect-identity", "F_a(z) equals its expansion in the r and l defects"},
    {"torus-zeta-local", "flat torus: F_a(z) = d(gamma_xy(a), z)^2 inside a ball of radius i_M/4"},
    {"sphere-zeta-stable", "sphere: quadratic lower bound constant zeta is positive and sampling-stable"},
    {"noise-diagonal", "circle covariance diagonal G_1(x,x) = pi/6"},
    {"noise-threshold", "circle nonnegativity threshold rho* = pi^2/6"},
    {"noise-row-sums", "the alpha part of the covariance integrates to zero"},
    {"riesz-bound", "covariance bounded by the Riesz envelope of its order"},
    {"integral-estimate", "single and double heat/bridge/Riesz integral estimates hold with finite constants"},
    {"k-function-envelope", "k = k_L + k_S is bounded by C (1 + s^{p/2})"},
    {"l1-structural-bound", "first chaos kernel bounded by Gaussian factors times the integrated k envelope"},
    {"h-lambda-envelope", "the resummed h series grows at most exponentially"},
    {"series-mc-agreement", "Monte Carlo second moment matches the chaos-series partial sum"},
    {"mean-consistency", "ensemble mean equals the heat flow of the initial measure"},
    {"moment-envelope", "root second moment bounded by C J_mu e^{theta t}"},
    {"positivity", "solutions started from a positive measure stay positive"},
    {"weak-time-zero", "u(t) converges weakly to the initial measure as t -> 0"},
    {"growth-rate-lower-bound", "second-moment Lyapunov exponent is at least beta^2 rho / m0"},
    {"growth-rate-ordering", "growth rate increases with the noise strength"},
    {"comparison-ordering", "ordered initial measures give ordered solutions"},
    {"comparison-refinement", "ordering violations shrink as the time step is halved"},
    {"holder-spatial", "spatial increments have the predicted Hoelder moment exponent"},
    {"holder-temporal", "temporal increments have the predicted Hoelder moment exponent"},
    {"reproducibility", "identical config and seed give byte-identical results at any thread count"},
    {"torus-zeta-global", "flat torus quadratic lower bound with z drawn from the whole torus"},
}};

inline std::string_view claim_of(std::string_view criterion) {
    for (const auto& c : kCriteria)
        if (c.name == criterion) return c.claim;
    return {};
}

inline bool is_registered(std::string_view criterion) { return !claim_of(criterion).empty(); }

}  // namespace pamlab::cli
