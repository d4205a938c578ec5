#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "pamlab/solver.hpp"

using namespace pamlab;

namespace {
constexpr double pi = std::numbers::pi;

Point angle(double theta) { return {ManifoldKind::circle, {theta, 0.0}}; }

SolverConfig small_circle() {
    SolverConfig c;
    c.band = 8;
    c.alpha = 1.0;
    c.rho = 2 * pi;
    c.beta = 0.5;
    c.dt = 2e-3;
    c.smoothing_time = 0.02;
    c.horizon = 0.2;
    c.paths = 200;
    c.seed = 11;
    return c;
}

// Truncated circle heat kernel summed mode by mode.
double band_heat(int band, double t, double a, double b) {
    double s = 1.0 / (2 * pi);
    for (int k = 1; k <= band; ++k) s += std::exp(-0.5 * k * k * t) * std::cos(k * (a - b)) / pi;
    return s;
}
}  // namespace

TEST(SolverConfig, RejectsInvalidSettings) {
    auto c = small_circle();
    EXPECT_NO_THROW(c.validate());
    c.smoothing_time = 1e-3;
    EXPECT_THROW(c.validate(), InvalidInput);
    c = small_circle();
    c.mesh_resolution = 10;
    EXPECT_THROW(c.validate(), InvalidInput);
    c = small_circle();
    c.checkpoints = {0.0101};
    EXPECT_THROW(c.validate(), InvalidInput);
    c = small_circle();
    c.checkpoints = {0.1, 0.05};
    EXPECT_THROW(c.validate(), InvalidInput);
    c = small_circle();
    c.model = ManifoldModel::sphere();
    c.alpha = -0.1;
    EXPECT_THROW(c.validate(), InvalidInput);
}

TEST(InitState, DiracGivesTheHeatKernelRowAndVolumeGivesOne) {
    auto c = small_circle();
    const auto u = init_state(c, InitialMeasure::dirac(angle(0.7)));
    const GalerkinScheme scheme(c);
    for (std::size_t i = 0; i < scheme.mesh().size(); ++i)
        EXPECT_NEAR(u[static_cast<Eigen::Index>(i)], band_heat(8, c.smoothing_time, 0.7, scheme.mesh().points[i].coords[0]), 1e-12);
    const auto one = init_state(c, InitialMeasure::volume(scheme.mesh()));
    EXPECT_NEAR(one.minCoeff(), 1.0, 1e-12);
    EXPECT_NEAR(one.maxCoeff(), 1.0, 1e-12);
}

TEST(InitState, ConservesMass) {
    auto c = small_circle();
    c.model = ManifoldModel::sphere();
    c.band = 6;
    InitialMeasure mu;
    mu.atoms = {{{ManifoldKind::sphere_2d, {0.4, 1.0}}, 0.7}, {{ManifoldKind::sphere_2d, {2.0, 4.0}}, 1.6}};
    const GalerkinScheme scheme(c);
    const auto u = init_state(c, mu);
    EXPECT_NEAR(integrate(scheme.mesh(), std::vector<double>(u.data(), u.data() + u.size())), mu.total_mass(), 1e-8);
}

TEST(Step, BetaZeroIsThePureHeatFlow) {
    auto c = small_circle();
    c.beta = 0.0;
    c.checkpoints = {0.0, 0.02, 0.2};
    c.record_fields = true;
    c.paths = 3;
    const auto e = simulate_ensemble(c, InitialMeasure::dirac(angle(1.0)));
    for (std::size_t k = 0; k < e.checkpoints(); ++k)
        for (std::size_t path = 0; path < e.paths; ++path) {
            const auto f = e.field(path, k);
            for (std::size_t i = 0; i < e.mesh_size; ++i)
                EXPECT_NEAR(f[i], band_heat(8, c.smoothing_time + e.times[k], 1.0, e.mesh.points[i].coords[0]), 1e-8);
        }
    EXPECT_EQ(e.moment(2, 2, 0).standard_error, 0.0);
}

TEST(Step, SingleStepFromOneMatchesSpectralCoefficients) {
    auto c = small_circle();
    const GalerkinScheme scheme(c);
    Eigen::VectorXd xi(static_cast<Eigen::Index>(scheme.modes()));
    for (Eigen::Index n = 0; n < xi.size(); ++n) xi[n] = 0.01 * std::sin(1.0 + n);
    const Eigen::VectorXd dw = scheme.phi() * xi;
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(dw.size());
    const Eigen::VectorXd next = scheme.step_mesh(one, dw);
    // 1 + βΔW = √(2π) φ₀ + β Σ ξ_n φ_n, then each mode decays by e^{-λΔt/2}.
    Eigen::VectorXd want = c.beta * xi;
    want[0] += std::sqrt(2 * pi);
    for (Eigen::Index n = 0; n < want.size(); ++n) want[n] *= std::exp(-0.5 * scheme.basis().eigenvalue(n) * c.dt);
    EXPECT_LT((scheme.to_coefficients(next) - want).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Ensemble, MeanMatchesTheHeatFlowWithinThreeStandardErrors) {
    auto c = small_circle();
    c.paths = 10000;
    c.checkpoints = {0.05, 0.1, 0.2};
    c.probes = {angle(0.0), angle(1.5)};
    const auto mu = InitialMeasure::dirac(angle(0.0));
    const auto e = simulate_ensemble(c, mu);
    EXPECT_LE(mean_consistency_zscore(e, mu), 3.0);
    EXPECT_EQ(e.blowups(), 0u);
    const auto rows = moment_table(e, mu);
    ASSERT_EQ(rows.size(), 6u);
    for (const auto& r : rows) {
        EXPECT_GE(r.m2.mean, r.m1.mean * r.m1.mean * (1 - 1e-12));
        EXPECT_GT(r.m4.mean, 0.0);
    }
}

TEST(Ensemble, ResultsDoNotDependOnTheWorkerCount) {
    auto c = small_circle();
    c.paths = 37;
    c.tilt_power = 2.0;
    c.record_fields = true;
    const auto mu = InitialMeasure::dirac(angle(2.0));
    const auto one = simulate_ensemble(c, mu);
    c.threads = 4;
    const auto four = simulate_ensemble(c, mu);
    EXPECT_EQ(one.values, four.values);
    EXPECT_EQ(one.fields, four.fields);
    EXPECT_EQ(one.log_weight, four.log_weight);
    EXPECT_EQ(one.moment(2, 0, 0).mean, four.moment(2, 0, 0).mean);
}

TEST(Ensemble, TiltedWeightsHaveUnitMean) {
    auto c = small_circle();
    c.paths = 4000;
    c.tilt_power = 2.0;
    c.horizon = 1.0;
    const auto e = simulate_ensemble(c, InitialMeasure::dirac(angle(0.0)));
    std::vector<double> w;
    for (std::size_t i = 0; i < e.paths; ++i) w.push_back(e.weight(i, 0));
    const auto m = mean_estimate(w);
    EXPECT_NEAR(m.mean, 1.0, 4 * m.standard_error);
}

TEST(Ensemble, OverflowIsRecordedPerPath) {
    auto c = small_circle();
    c.beta = 1e200;
    c.paths = 4;
    const auto e = simulate_ensemble(c, InitialMeasure::dirac(angle(0.0)));
    EXPECT_EQ(e.blowups(), 4u);
    EXPECT_GT(e.blowup_step[0], 0);
    EXPECT_DOUBLE_EQ(e.blowup_fraction(), 1.0);
}

TEST(Comparison, EqualMeasuresGiveIdenticalPaths) {
    auto c = small_circle();
    c.checkpoints = {0.1, 0.2};
    const auto mu = InitialMeasure::dirac(angle(0.3));
    const auto r = comparison_experiment(c, mu, mu);
    EXPECT_TRUE(r.identical);
    EXPECT_EQ(r.violations, 0u);
    EXPECT_EQ(r.min_gap, 0.0);
}

TEST(Comparison, DoublingTheMeasureDoublesEveryPathExactly) {
    auto c = small_circle();
    c.checkpoints = {0.1, 0.2};
    const auto mu = InitialMeasure::dirac(angle(0.3));
    const auto r = comparison_experiment(c, mu, mu.scaled(2.0), 1e-6, 2.0);
    EXPECT_EQ(r.max_ratio_defect, 0.0);
}

TEST(Comparison, RejectsUnorderedMeasures) {
    const auto a = InitialMeasure::dirac(angle(0.3)), b = InitialMeasure::dirac(angle(1.3));
    EXPECT_THROW(comparison_experiment(small_circle(), a, b), InvalidInput);
}

TEST(Comparison, AddedAtomKeepsTheOrderUpToTolerance) {
    auto c = small_circle();
    // t₀ large enough that the band-16 heat kernel has no visible Gibbs lobes.
    c.band = 16;
    c.smoothing_time = 0.16;
    c.checkpoints = {0.05, 0.1, 0.15, 0.2};
    const auto mu1 = InitialMeasure::dirac(angle(0.0));
    InitialMeasure mu2 = mu1;
    mu2.atoms.push_back({angle(pi / 2), 1.0});
    const auto r = comparison_experiment(c, mu1, mu2, 1e-3);
    EXPECT_LE(r.violation_fraction, 1e-3);
    EXPECT_EQ(r.blowups, 0u);
}

TEST(Positivity, BetaZeroIndicatorIsExact) {
    auto c = small_circle();
    c.beta = 0.0;
    c.paths = 20;
    const auto mu = InitialMeasure::dirac(angle(0.0));
    const auto r = positivity_probe(c, mu, 0.5, {0.0, 0.0, 1.0});
    const double m = r.deterministic_min;
    const auto r2 = positivity_probe(c, mu, 0.5, {0.5 * m, 2 * m});
    EXPECT_EQ(r2.levels[0].hits, 20u);
    EXPECT_EQ(r2.levels[1].hits, 0u);
    EXPECT_EQ(r.levels[2].hits, 0u);
}

TEST(Positivity, SmallLevelsHavePositiveProbability) {
    auto c = small_circle();
    c.paths = 2000;
    c.rho = rho_nonneg_threshold(CovarianceKernel(build_basis(c.model, c.band), {c.alpha, 0.0}),
                                 c.model.make_mesh(c.resolved_mesh()));
    const auto r = positivity_probe(c, InitialMeasure::dirac(angle(0.0)), 1.0, {0.0, 0.01});
    EXPECT_GT(r.levels[0].interval.estimate, 0.99);
    EXPECT_GT(r.levels[1].interval.lower, 0.0);
    c.rho = 0.0;
    EXPECT_THROW(positivity_probe(c, InitialMeasure::dirac(angle(0.0)), 1.0, {0.01}), PreconditionError);
    InitialMeasure empty;
    EXPECT_THROW(positivity_probe(small_circle(), empty, 1.0, {0.01}), InvalidInput);
}

TEST(WeakTimeZero, MassIsAMartingaleAndCosineDefectShrinks) {
    auto c = small_circle();
    c.paths = 2000;
    c.dt = 1e-3;
    c.smoothing_time = 1e-3;
    c.band = 16;
    const auto mu = InitialMeasure::dirac(angle(0.0));
    const auto r = weak_time_zero_check(c, mu, {[](const Point&) { return 1.0; }, [](const Point& p) { return std::cos(p.coords[0]); }},
                                        {0.008, 0.016, 0.032, 0.064});
    for (const auto& row : r.rows)
        if (row.functional == 0) {
            EXPECT_NEAR(row.mean.mean, 1.0, 3 * row.mean.standard_error + 1e-12);
        }
    EXPECT_GE(r.min_ratio[1], 2.0);
    EXPECT_TRUE(r.decreasing);
    EXPECT_LT(std::abs(r.extrapolated_limit[1]), 1e-3);
}

TEST(WeakTimeZero, BetaZeroFollowsTheHeatFlowRate) {
    auto c = small_circle();
    c.beta = 0.0;
    c.paths = 2;
    c.dt = 1e-3;
    c.smoothing_time = 1e-3;
    const auto r = weak_time_zero_check(c, InitialMeasure::dirac(angle(0.0)), {[](const Point& p) { return std::cos(p.coords[0]); }},
                                        {0.01, 0.02, 0.04});
    // ∫ u cos = e^{-(t₀+t)/2}, so the defect is (1 − e^{-(t₀+t)/2})².
    for (const auto& row : r.rows) EXPECT_NEAR(row.defect.mean, std::pow(1 - std::exp(-0.5 * (1e-3 + row.t)), 2), 1e-12);
}

TEST(Lyapunov, BetaZeroHasZeroSlope) {
    auto c = small_circle();
    c.beta = 0.0;
    c.paths = 20;
    c.dt = 5e-3;
    c.smoothing_time = 5e-3;
    const GalerkinScheme s(c);
    const auto r = estimate_lyapunov(c, InitialMeasure::volume(s.mesh()), 0.5, 1.5);
    EXPECT_NEAR(r.slope, 0.0, 1e-10);
    EXPECT_DOUBLE_EQ(r.target, 0.0);
    EXPECT_TRUE(r.lower_bound_holds);
}

TEST(Lyapunov, SlopesOrderWithBeta) {
    auto c = small_circle();
    c.band = 4;
    c.paths = 1000;
    c.dt = 4e-3;
    c.smoothing_time = 4e-3;
    c.tilt_power = 2.0;
    c.probes = {angle(0.0), angle(pi / 2), angle(pi), angle(1.5 * pi)};
    const GalerkinScheme s(c);
    const auto mu = InitialMeasure::volume(s.mesh());
    const auto lo = estimate_lyapunov(c, mu, 1.0, 3.0);
    c.beta = 1.0;
    const auto hi = estimate_lyapunov(c, mu, 1.0, 3.0);
    EXPECT_DOUBLE_EQ(hi.target, 4 * lo.target);
    EXPECT_NEAR(lo.target, 0.25, 1e-15);
    EXPECT_TRUE(lo.lower_bound_holds) << lo.slope << " ± " << lo.half_width;
    EXPECT_TRUE(hi.lower_bound_holds) << hi.slope << " ± " << hi.half_width;
    EXPECT_GT(hi.slope, lo.slope);
    c.rho = 0.0;
    EXPECT_THROW(estimate_lyapunov(c, mu, 1.0, 3.0), PreconditionError);
}

TEST(Holder, SmoothFieldsExceedTheTarget) {
    auto c = small_circle();
    c.band = 32;
    c.beta = 0.0;
    c.paths = 2;
    c.checkpoints = {0.1, 0.12, 0.14, 0.16, 0.18, 0.2};
    c.record_fields = true;
    const auto e = simulate_ensemble(c, InitialMeasure::dirac(angle(0.0)));
    const auto r = holder_diagnostic(e, 2, 0.1, 0.2, 0.05, 0.5, 0.015, 0.1, 4);
    // Smooth increments scale like d², up to curvature of J over the window.
    EXPECT_GE(r.spatial.exponent, 0.95 * 2.0);
    EXPECT_NEAR(r.spatial.target, 2.0, 1e-15);
}

TEST(Holder, RoughNoiseGivesTheCappedSpatialExponent) {
    SolverConfig c;
    c.band = 64;
    c.alpha = 0.25;
    c.rho = 2 * pi;
    c.beta = 0.5;
    c.dt = 2e-3;
    c.smoothing_time = 2e-3;
    c.horizon = 1.0;
    c.checkpoints = {0.6, 0.8, 1.0};
    c.paths = 100;
    c.seed = 5;
    c.record_fields = true;
    const GalerkinScheme s(c);
    const auto e = simulate_ensemble(c, InitialMeasure::volume(s.mesh()));
    const auto r = holder_diagnostic(e, 2, 0.6, 1.0, 0.05, 0.4, 0.1, 0.5, 6);
    EXPECT_NEAR(r.spatial.target, 1.5, 1e-15);
    EXPECT_TRUE(r.spatial.conclusive);
    EXPECT_GE(r.spatial.exponent, 0.9 * r.spatial.target) << r.spatial.half_width;
    EXPECT_LE(r.spatial.exponent, 1.1 * r.spatial.target) << r.spatial.half_width;
}

TEST(Envelope, RootSecondMomentStaysUnderTheFittedExponential) {
    auto c = small_circle();
    c.paths = 2000;
    c.horizon = 1.0;
    c.checkpoints.clear();
    for (int i = 1; i <= 10; ++i) c.checkpoints.push_back(0.1 * i);
    const auto mu = InitialMeasure::dirac(angle(0.0));
    const auto e = simulate_ensemble(c, mu);
    const auto r = moment_envelope(e, mu);
    EXPECT_TRUE(r.envelope.passed) << r.envelope.validation_ratio;
    for (double q : r.ratio) EXPECT_GE(q, 1.0 - 0.05);
}

TEST(SeriesCrosscheck, AgreesWithTheChaosPartialSum) {
    SolverConfig c;
    c.band = 8;
    c.alpha = 1.0;
    c.rho = rho_nonneg_threshold(CovarianceKernel(build_basis(c.model, 8), {1.0, 0.0}), c.model.make_mesh(dealiased_resolution(c.model, 8)));
    c.beta = 0.25;
    c.dt = 1e-3;
    c.smoothing_time = 0.01;
    c.horizon = 0.2;
    c.paths = 2000;
    c.seed = 3;
    const auto r = series_mc_crosscheck(c, angle(0.0), angle(0.0), 3);
    EXPECT_TRUE(r.agree) << r.difference << " vs " << r.allowance;
}

TEST(Trajectories, RoundTripThroughTheBinaryFormat) {
    auto c = small_circle();
    c.paths = 3;
    c.checkpoints = {0.1, 0.2};
    c.record_fields = true;
    const auto e = simulate_ensemble(c, InitialMeasure::dirac(angle(0.0)));
    const auto t = trajectories_of(e, 0xabcdef0123456789ull);
    const auto bytes = encode_trajectories(t);
    EXPECT_EQ(bytes.substr(0, 8), "PAMTRAJ1");
    EXPECT_EQ(bytes.size(), 40 + 8 * (2 + 3 * 2 * e.mesh_size));
    EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 0x89);  // little-endian hash
    const auto back = decode_trajectories(bytes);
    EXPECT_EQ(back.config_hash, t.config_hash);
    EXPECT_EQ(back.fields, t.fields);
    EXPECT_EQ(back.times, t.times);
    EXPECT_THROW(decode_trajectories(bytes.substr(0, bytes.size() - 1)), InvalidInput);
}
