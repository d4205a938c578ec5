#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "oracles.hpp"
#include "pamlab/spectral.hpp"

using namespace pamlab;

namespace {
constexpr double pi = std::numbers::pi;

std::map<double, int> multiplicities(const SpectralBasis& b) {
    std::map<double, int> m;
    for (std::size_t n = 0; n < b.size(); ++n) m[b.eigenvalue(n)] += 1;
    return m;
}
}  // namespace

TEST(SpectralBasis, CircleSpectrum) {
    const auto b = build_basis(ManifoldModel::circle(), 5);
    EXPECT_EQ(b.size(), 11u);
    EXPECT_EQ(b.eigenvalue(0), 0.0);
    EXPECT_EQ(b.eigenvalue(1), 1.0);
    EXPECT_EQ(multiplicities(b)[1.0], 2);
    EXPECT_EQ(b.eigenvalue(10), 25.0);
}

TEST(SpectralBasis, SphereSpectrum) {
    const auto b = build_basis(ManifoldModel::sphere(), 4);
    EXPECT_EQ(b.size(), 25u);
    EXPECT_EQ(b.eigenvalue(1), 2.0);
    EXPECT_EQ(multiplicities(b)[2.0], 3);
    EXPECT_EQ(multiplicities(b)[20.0], 9);
}

TEST(SpectralBasis, TorusSpectrumMatchesLatticeEnumeration) {
    const int K = 6;
    const auto b = build_basis(ManifoldModel::flat_torus(), K);
    std::map<int, int> lattice;
    for (int j = -K; j <= K; ++j)
        for (int k = -K; k <= K; ++k)
            if (j * j + k * k <= K * K) lattice[j * j + k * k] += 1;
    std::map<int, int> got;
    for (std::size_t n = 0; n < b.size(); ++n) {
        const int r2 = static_cast<int>(std::lround(b.eigenvalue(n) / (4 * pi * pi)));
        EXPECT_NEAR(b.eigenvalue(n), 4 * pi * pi * r2, 1e-9);
        got[r2] += 1;
    }
    EXPECT_EQ(got, lattice);
    EXPECT_NEAR(b.eigenvalue(1), 4 * pi * pi, 1e-12);
    EXPECT_EQ(got[1], 4);
    for (std::size_t n = 1; n < b.size(); ++n) EXPECT_LE(b.eigenvalue(n - 1), b.eigenvalue(n));
}

TEST(SpectralBasis, ConstantModeAndDiscreteOrthonormality) {
    struct Case {
        ManifoldModel model;
        int band;
        int res;
    };
    for (const Case& c : {Case{ManifoldModel::circle(), 12, 64}, Case{ManifoldModel::flat_torus(), 5, 16},
                          Case{ManifoldModel::sphere(), 8, 12}}) {
        const auto b = build_basis(c.model, c.band);
        const auto mesh = make_mesh(c.model, c.res);
        EXPECT_NEAR(b.evaluate(0, mesh.points[3]), 1.0 / std::sqrt(c.model.volume()), 1e-15);
        EXPECT_LT(b.gram_defect(mesh), 1e-8) << c.model.name();
    }
}

TEST(SpectralBasis, ZonalSumMatchesExplicitModeSum) {
    for (const auto& m : {ManifoldModel::circle(), ManifoldModel::flat_torus(), ManifoldModel::sphere()}) {
        const auto b = build_basis(m, 7);
        RandomStream rng(9, 0);
        for (int i = 0; i < 20; ++i) {
            const Point x = m.random_point(rng), y = m.random_point(rng);
            const auto fx = b.evaluate_all(x), fy = b.evaluate_all(y);
            double explicit_sum = 0.0;
            auto w = [](double l) { return std::exp(-0.05 * l) / (1.0 + l); };
            for (std::size_t n = 0; n < b.size(); ++n) explicit_sum += w(b.eigenvalue(n)) * fx[n] * fy[n];
            EXPECT_NEAR(b.zonal_sum(w, x, y), explicit_sum, 1e-12) << m.name();
        }
    }
}

TEST(SpectralBasis, ShellDiagonalsMatchSquaredModeSums) {
    for (const auto& m : {ManifoldModel::circle(), ManifoldModel::flat_torus(), ManifoldModel::sphere()}) {
        const auto b = build_basis(m, 5);
        RandomStream rng(4, 4);
        const Point x = m.random_point(rng);
        const auto f = b.evaluate_all(x);
        std::vector<double> sums(b.shells().size(), 0.0);
        for (std::size_t n = 0; n < b.size(); ++n) sums[b.shell_of_mode(n)] += f[n] * f[n];
        for (std::size_t s = 0; s < sums.size(); ++s) EXPECT_NEAR(sums[s], b.shells()[s].diagonal, 1e-12) << m.name();
    }
}

TEST(HeatKernel, CircleMatchesImageSumOracle) {
    const auto m = ManifoldModel::circle();
    const int band = HeatKernel::required_band(m, 0.05, 1e-12);
    const HeatKernel kernel(build_basis(m, band));
    RandomStream rng(21, 0);
    double worst = 0.0;
    for (double t : {0.05, 0.1, 0.3, 0.7, 1.0, 2.0, 3.5, 5.0})
        for (int i = 0; i < 64; ++i) {
            const Point x = m.random_point(rng), y = m.random_point(rng);
            worst = std::max(worst, std::abs(heat_kernel(kernel, t, x, y) -
                                             oracle::circle_heat_images(t, y.coords[0] - x.coords[0])));
        }
    EXPECT_LE(worst, 1e-10);
}

TEST(HeatKernel, SmallTimeCircleFallbackAgreesWithOracle) {
    const auto m = ManifoldModel::circle();
    const HeatKernel kernel(build_basis(m, 8));
    for (double t : {1e-4, 1e-3, 0.009})
        EXPECT_NEAR(kernel(t, m.point(0.1), m.point(0.13)), oracle::circle_heat_images(t, 0.03), 1e-10);
}

TEST(HeatKernel, SymmetryAndEquilibrium) {
    for (const auto& m : {ManifoldModel::circle(), ManifoldModel::flat_torus(), ManifoldModel::sphere()}) {
        const HeatKernel kernel(build_basis(m, HeatKernel::required_band(m, 0.5, 1e-12)));
        RandomStream rng(8, 8);
        const Point x = m.random_point(rng), y = m.random_point(rng);
        EXPECT_EQ(kernel(0.5, x, y), kernel(0.5, y, x));
        const double lambda1 = kernel.basis().shells()[1].eigenvalue;
        const double t = 30.0 / lambda1;
        EXPECT_NEAR(kernel(t, x, y), 1.0 / m.volume(), 4.0 * std::exp(-lambda1 * t / 2.0));
    }
}

TEST(HeatKernel, ErrorsForBadTimeAndTruncation) {
    const auto m = ManifoldModel::sphere();
    const HeatKernel kernel(build_basis(m, 4));
    EXPECT_THROW(kernel(0.0, m.point(0, 0), m.point(1, 1)), InvalidInput);
    try {
        kernel(0.01, m.point(0, 0), m.point(1, 1));
        FAIL() << "expected truncation error";
    } catch (const TruncationError& e) {
        EXPECT_GT(e.required_band(), 4);
        const HeatKernel bigger(build_basis(m, e.required_band()));
        EXPECT_NO_THROW(bigger(0.01, m.point(0, 0), m.point(1, 1)));
    }
}

TEST(HeatKernel, SemigroupOnMesh) {
    struct Case {
        ManifoldModel model;
        int res;
    };
    for (const Case& c : {Case{ManifoldModel::circle(), 128}, Case{ManifoldModel::flat_torus(), 24},
                          Case{ManifoldModel::sphere(), 24}}) {
        const double tmin = 0.15;
        const HeatKernel kernel(build_basis(c.model, HeatKernel::required_band(c.model, tmin, 1e-12)));
        const auto mesh = make_mesh(c.model, c.res);
        RandomStream rng(31, 1);
        const int trials = c.model.kind() == ManifoldKind::circle ? 100 : 10;
        for (int i = 0; i < trials; ++i) {
            const double s = rng.uniform(tmin, 1.0), t = s + rng.uniform(tmin, 1.0);
            const Point x = c.model.random_point(rng), y = c.model.random_point(rng);
            std::vector<double> f(mesh.size());
            for (std::size_t j = 0; j < mesh.size(); ++j) f[j] = kernel(s, x, mesh.points[j]) * kernel(t - s, mesh.points[j], y);
            EXPECT_NEAR(integrate(mesh, f), kernel(t, x, y), 1e-8) << c.model.name();
        }
    }
}

TEST(HeatKernel, Stationarity) {
    for (const auto& m : {ManifoldModel::circle(), ManifoldModel::sphere()}) {
        const HeatKernel kernel(build_basis(m, HeatKernel::required_band(m, 0.2, 1e-12)));
        const auto mesh = make_mesh(m, 48);
        std::vector<double> f;
        for (const auto& p : mesh.points) f.push_back(kernel(0.2, mesh.points[5], p));
        EXPECT_NEAR(integrate(mesh, f), 1.0, 1e-10);
    }
}

TEST(HeatKernel, MeshMatrixMatchesPointwise) {
    const auto m = ManifoldModel::circle();
    const auto b = build_basis(m, 20);
    const auto mesh = make_mesh(m, 64);
    const auto phi = b.mesh_matrix(mesh);
    const auto h = heat_mesh_matrix(b, phi, 0.3);
    const HeatKernel kernel(b);
    EXPECT_NEAR(h(3, 17), kernel(0.3, mesh.points[3], mesh.points[17]), 1e-12);
}

TEST(GaussianComparison, BasicIdentities) {
    const GaussianComparison g(0.5, 2);
    EXPECT_DOUBLE_EQ(g.c_eps(), 2.5);
    EXPECT_DOUBLE_EQ(gaussian_g(g, 0.3, 0.0), std::pow(0.3, -1.0));
    EXPECT_DOUBLE_EQ(g.g_tilde(1.5, 0.4), g.g(1.5, 0.4));
    const GaussianComparison smaller(0.2, 2);
    EXPECT_LT(smaller.g(0.3, 0.5), g.g(0.3, 0.5));
}

TEST(GaussianComparison, TildeDominatesBelowUnitTime) {
    RandomStream rng(2, 2);
    for (int d : {1, 2}) {
        const GaussianComparison g(0.3, d);
        for (int i = 0; i < 1000; ++i) {
            const double t = rng.uniform(0.01, 1.0), r = rng.uniform(0.0, 1.0);
            if (d == 1) {
                EXPECT_LE(g.g(t, r), g.g_tilde(t, r));
            } else {
                EXPECT_LT(g.g(t, r), g.g_tilde(t, r));
            }
        }
    }
}

TEST(GaussianComparison, TildeOfSmallerEpsilonIsDominatedAwayFromZero) {
    // Fit C in G̃^{ε'}_t(r) ≤ C G^ε_t(r) for r ≥ r', t < 1. Per-t sups over r
    // alternate between fit and validation on a fine log grid in t.
    const GaussianComparison small(0.2, 2), big(0.6, 2);
    std::vector<EnvelopeSample> fit, val;
    for (int i = 0; i < 400; ++i) {
        const double t = 1e-4 * std::pow(0.99e4, i / 399.0);
        EnvelopeSample worst{0.0, 1.0};
        for (int j = 0; j <= 400; ++j) {
            const double r = 0.3 + j * 0.005;
            const EnvelopeSample e{small.g_tilde(t, r), big.g(t, r)};
            if (e.envelope > 0.0 && e.lhs * worst.envelope > worst.lhs * e.envelope) worst = e;
        }
        ((i % 2 == 0) ? fit : val).push_back(worst);
    }
    const auto rep = fit_validate(fit, val);
    EXPECT_TRUE(std::isfinite(rep.fitted_constant));
    EXPECT_TRUE(rep.passed) << rep.validation_ratio;
}

TEST(BridgeDensity, IntegratesToOneAndConcentrates) {
    const auto m = ManifoldModel::circle();
    const HeatKernel kernel(build_basis(m, HeatKernel::required_band(m, 0.02, 1e-12)));
    const auto mesh = make_mesh(m, 512);
    const Point x = m.point(0.3), y = m.point(1.4);
    std::vector<double> f;
    for (const auto& z : mesh.points) f.push_back(bridge_density(kernel, 1.0, x, y, 0.4, z));
    EXPECT_NEAR(integrate(mesh, f), 1.0, 1e-8);
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t j = 0; j < mesh.size(); ++j) {
        const double v = bridge_density(kernel, 1.0, x, y, 1.0 - 1e-4, mesh.points[j]);
        if (v > best) {
            best = v;
            arg = j;
        }
    }
    EXPECT_LE(m.distance(mesh.points[arg], y), 2 * pi / 512 + 1e-12);
    // Reflection symmetry when x = y and s = t/2.
    for (double dz : {0.2, 0.9, 2.0})
        EXPECT_NEAR(bridge_density(kernel, 1.0, x, x, 0.5, m.point(0.3 + dz)),
                    bridge_density(kernel, 1.0, x, x, 0.5, m.point(0.3 - dz)), 1e-12);
    EXPECT_THROW(bridge_density(kernel, 1.0, x, y, 1.0, x), InvalidInput);
}

TEST(KernelBounds, LiYauConstantStableUnderMeshDoubling) {
    const auto m = ManifoldModel::circle();
    const HeatKernel kernel(build_basis(m, HeatKernel::required_band(m, 0.01, 1e-12)));
    std::vector<double> times;
    for (int i = 0; i <= 24; ++i) times.push_back(0.01 * std::pow(400.0, i / 24.0));
    const std::vector<Point> bases{m.point(0.0)};
    const auto coarse = verify_li_yau(kernel, make_mesh(m, 256), bases, 0.5, times);
    const auto fine = verify_li_yau(kernel, make_mesh(m, 512), bases, 0.5, times);
    EXPECT_TRUE(std::isfinite(coarse.envelope.fitted_constant));
    EXPECT_TRUE(coarse.envelope.passed);
    EXPECT_NEAR(fine.envelope.fitted_constant / coarse.envelope.fitted_constant, 1.0, 0.05);
    // Large times: ratio governed by the t∧1 term, P_t → 1/m₀.
    EXPECT_LE(coarse.sup_ratio.back(), 1.0 / (2 * pi) * 1.05);
}

TEST(KernelBounds, SmallTimeTildeBound) {
    const auto m = ManifoldModel::sphere();
    const HeatKernel kernel(build_basis(m, HeatKernel::required_band(m, 0.02, 1e-10)));
    std::vector<double> times;
    for (int i = 0; i <= 12; ++i) times.push_back(0.02 * std::pow(50.0, i / 12.0));
    const auto rep = verify_heat_upper_bound(kernel, make_mesh(m, 24), {m.point(0.4, 0.2)}, times);
    EXPECT_TRUE(rep.envelope.passed) << rep.envelope.validation_ratio;
    EXPECT_THROW(verify_heat_upper_bound(kernel, make_mesh(m, 8), {m.point(0, 0)}, {2.0}), InvalidInput);
}
