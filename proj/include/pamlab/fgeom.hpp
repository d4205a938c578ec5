#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <tuple>
#include <utility>
#include <vector>

#include "pamlab/errors.hpp"
#include "pamlab/manifold.hpp"
#include "pamlab/parallel.hpp"
#include "pamlab/rng.hpp"

namespace pamlab {

// The three-distance function of a (x, y, z) configuration at interpolation
// parameter a, with the signed defects of z relative to the geodesic split.
struct FEvaluation {
    double a = 0.0;
    Point x, y, z;
    double f_value = 0.0;
    double r_defect = 0.0;
    double l_defect = 0.0;
};

// F_a(z) = (1-a) d(x,z)² + a d(z,y)² - a(1-a) d(x,y)².
inline double f_value(const ManifoldModel& m, double a, const Point& x, const Point& y, const Point& z) {
    const double dxy = m.distance(x, y), dxz = m.distance(x, z), dzy = m.distance(z, y);
    return (1.0 - a) * dxz * dxz + a * dzy * dzy - a * (1.0 - a) * dxy * dxy;
}

// Time-parametrized exponent -d(x,y)²/(2t) + d(x,z)²/(2s) + d(z,y)²/(2(t-s)),
// equal to F_{s/t}(z)·t/(2s(t-s)).
inline double f_value_st(const ManifoldModel& m, double s, double t, const Point& x, const Point& y, const Point& z) {
    if (!(s > 0.0 && s < t)) throw InvalidInput("fgeom", "time-parametrized F needs 0 < s < t");
    const double dxy = m.distance(x, y), dxz = m.distance(x, z), dzy = m.distance(z, y);
    return -dxy * dxy / (2.0 * t) + dxz * dxz / (2.0 * s) + dzy * dzy / (2.0 * (t - s));
}

// r = d(x,z) - a d(x,y) and ℓ = (1-a) d(x,y) - d(y,z).
inline std::pair<double, double> defects(const ManifoldModel& m, double a, const Point& x, const Point& y,
                                         const Point& z) {
    const double dxy = m.distance(x, y);
    return {m.distance(x, z) - a * dxy, (1.0 - a) * dxy - m.distance(y, z)};
}

inline FEvaluation evaluate_f(const ManifoldModel& m, double a, const Point& x, const Point& y, const Point& z) {
    FEvaluation e{a, x, y, z, f_value(m, a, x, y, z), 0.0, 0.0};
    std::tie(e.r_defect, e.l_defect) = defects(m, a, x, y, z);
    return e;
}

// F minus its defect expansion 2a(1-a)d(r-ℓ) + (1-a)r² + aℓ².
inline double check_decomposition(const ManifoldModel& m, double a, const Point& x, const Point& y, const Point& z) {
    const double d = m.distance(x, y);
    const auto [r, l] = defects(m, a, x, y, z);
    return f_value(m, a, x, y, z) - (2.0 * a * (1.0 - a) * d * (r - l) + (1.0 - a) * r * r + a * l * l);
}

struct GlobalBoundReport {
    std::size_t samples = 0;
    double max_violation = -INFINITY;         // max of (d(x,z) - a d(x,y))² - F
    double max_decomposition_residual = 0.0;  // max |F - defect expansion|
    double min_f = INFINITY;
    double min_r_minus_l = INFINITY;
};

namespace detail {

struct FSample {
    double a;
    Point x, y, z;
};

inline FSample draw_global_sample(const ManifoldModel& m, RandomStream& rng) {
    const double a = rng.uniform(0.01, 0.99);
    const Point x = m.random_point(rng);
    const Point y = m.random_point(rng);
    const Point z = m.random_point(rng);
    return {a, x, y, z};
}

inline void merge(GlobalBoundReport& into, const GlobalBoundReport& part) {
    into.samples += part.samples;
    into.max_violation = std::max(into.max_violation, part.max_violation);
    into.max_decomposition_residual = std::max(into.max_decomposition_residual, part.max_decomposition_residual);
    into.min_f = std::min(into.min_f, part.min_f);
    into.min_r_minus_l = std::min(into.min_r_minus_l, part.min_r_minus_l);
}

}  // namespace detail

// Uniform sweep over (a, x, y, z) of the global lower bound
// F ≥ (d(x,z) - a d(x,y))² and of the defect identity. Sample i uses its own
// counter-based stream, so results do not depend on the thread count.
inline GlobalBoundReport check_global_bound(const ManifoldModel& m, std::size_t samples, std::uint64_t seed,
                                            int threads = 1) {
    if (samples < 1) throw InvalidInput("fgeom", "need at least one sample");
    const std::size_t blocks = std::min<std::size_t>(samples, 64);
    std::vector<GlobalBoundReport> parts(blocks);
    parallel_for(blocks, threads, [&](std::size_t b) {
        GlobalBoundReport& rep = parts[b];
        for (std::size_t i = samples * b / blocks; i < samples * (b + 1) / blocks; ++i) {
            RandomStream rng(seed, i);
            const auto s = detail::draw_global_sample(m, rng);
            const FEvaluation e = evaluate_f(m, s.a, s.x, s.y, s.z);
            const double dxy = m.distance(s.x, s.y);
            const double rhs = std::pow(m.distance(s.x, s.z) - s.a * dxy, 2);
            rep.samples += 1;
            rep.max_violation = std::max(rep.max_violation, rhs - e.f_value);
            rep.max_decomposition_residual =
                std::max(rep.max_decomposition_residual, std::abs(check_decomposition(m, s.a, s.x, s.y, s.z)));
            rep.min_f = std::min(rep.min_f, e.f_value);
            rep.min_r_minus_l = std::min(rep.min_r_minus_l, e.r_defect - e.l_defect);
        }
    });
    GlobalBoundReport total;
    for (const auto& p : parts) detail::merge(total, p);
    return total;
}

// On the sphere with y antipodal to x the global bound is an equality:
// returns max |F - (d(x,z) - aπ)²| and the max defect-identity residual.
struct AntipodalReport {
    std::size_t samples = 0;
    double max_equality_gap = 0.0;
    double max_decomposition_residual = 0.0;
};

inline AntipodalReport check_antipodal_equality(const ManifoldModel& m, std::size_t samples, std::uint64_t seed) {
    if (m.kind() != ManifoldKind::sphere_2d) throw InvalidInput("fgeom", "antipodal equality check is for the sphere");
    AntipodalReport rep;
    for (std::size_t i = 0; i < samples; ++i) {
        RandomStream rng(seed, i);
        const double a = rng.uniform(0.01, 0.99);
        const Point x = m.random_point(rng);
        const Vec3 v = m.embed(x);
        const Point y = m.from_vector({-v[0], -v[1], -v[2]});
        const Point z = m.random_point(rng);
        const double gap = f_value(m, a, x, y, z) - std::pow(m.distance(x, z) - a * m.distance(x, y), 2);
        rep.samples += 1;
        rep.max_equality_gap = std::max(rep.max_equality_gap, std::abs(gap));
        rep.max_decomposition_residual =
            std::max(rep.max_decomposition_residual, std::abs(check_decomposition(m, a, x, y, z)));
    }
    return rep;
}

struct ZetaReport {
    double scale = 0.0;               // D
    double zeta_hat = INFINITY;       // min of F / d(γ(a), z)²
    std::size_t samples_used = 0;
    std::size_t excluded = 0;         // d(γ(a), z) < 1e-8
    std::vector<std::size_t> histogram;  // ratio bins of width 0.1 on [0, 2), last bin collects the rest
    double worst_a = 0.0;
    double worst_dxy = 0.0;
    double worst_dgz = 0.0;
};

// Sampled estimate of the largest ζ with F_a(z) ≥ ζ d(γ_xy(a), z)² for
// d(x,y) < D. With `local_radius` set, z is drawn from the geodesic ball of
// that radius around x instead of from the whole manifold.
inline ZetaReport estimate_zeta(const ManifoldModel& m, double scale, std::size_t samples, std::uint64_t seed,
                                std::optional<double> local_radius = std::nullopt, int threads = 1) {
    if (!(scale > 0.0) || scale > m.unique_geodesic_scale() * (1.0 + 1e-12))
        throw InvalidInput("fgeom", "scale D must lie in (0, unique geodesic scale]");
    const std::size_t blocks = std::min<std::size_t>(std::max<std::size_t>(samples, 1), 64);
    std::vector<ZetaReport> parts(blocks);
    parallel_for(blocks, threads, [&](std::size_t b) {
        ZetaReport& rep = parts[b];
        rep.histogram.assign(21, 0);
        for (std::size_t i = samples * b / blocks; i < samples * (b + 1) / blocks; ++i) {
            RandomStream rng(seed, i);
            const double a = rng.uniform(0.01, 0.99);
            const Point x = m.random_point(rng);
            const double heading = 2.0 * std::numbers::pi * rng.uniform();
            const Point y = m.exponential_map(x, heading, scale * rng.uniform());
            Point z;
            if (local_radius) {
                const double h2 = 2.0 * std::numbers::pi * rng.uniform();
                const double u = rng.uniform();
                const double radius = *local_radius * (m.dim() == 1 ? u : std::sqrt(u));
                z = m.exponential_map(x, h2, radius);
            } else {
                z = m.random_point(rng);
            }
            const Point g = m.geodesic_point(x, y, a);
            const double dg = m.distance(g, z);
            if (dg < 1e-8) {
                rep.excluded += 1;
                continue;
            }
            const double ratio = f_value(m, a, x, y, z) / (dg * dg);
            rep.samples_used += 1;
            rep.histogram[std::min<std::size_t>(20, static_cast<std::size_t>(std::max(0.0, ratio) / 0.1))] += 1;
            if (ratio < rep.zeta_hat) {
                rep.zeta_hat = ratio;
                rep.worst_a = a;
                rep.worst_dxy = m.distance(x, y);
                rep.worst_dgz = dg;
            }
        }
    });
    ZetaReport total;
    total.scale = scale;
    total.histogram.assign(21, 0);
    for (const auto& p : parts) {
        total.samples_used += p.samples_used;
        total.excluded += p.excluded;
        for (std::size_t k = 0; k < total.histogram.size(); ++k) total.histogram[k] += p.histogram[k];
        if (p.zeta_hat < total.zeta_hat) {
            total.zeta_hat = p.zeta_hat;
            total.worst_a = p.worst_a;
            total.worst_dxy = p.worst_dxy;
            total.worst_dgz = p.worst_dgz;
        }
    }
    return total;
}

}  // namespace pamlab
