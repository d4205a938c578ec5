#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "oracles.hpp"
#include "pamlab/numerics.hpp"
#include "pamlab/parallel.hpp"
#include "pamlab/rng.hpp"

using namespace pamlab;

TEST(Philox, KnownAnswerVectors) {
    // Reference outputs of Philox4x32-10 from the Random123 distribution.
    auto zero = Philox4x32::generate({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(zero[0], 0x6627e8d5u);
    EXPECT_EQ(zero[1], 0xe169c58du);
    EXPECT_EQ(zero[2], 0xbc57ac4cu);
    EXPECT_EQ(zero[3], 0x9b00dbd8u);
    auto ones = Philox4x32::generate({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
    EXPECT_EQ(ones[0], 0x408f276du);
    EXPECT_EQ(ones[1], 0x41c83b0eu);
    EXPECT_EQ(ones[2], 0xa20bc7c6u);
    EXPECT_EQ(ones[3], 0x6d5451fdu);
    auto pi = Philox4x32::generate({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
    EXPECT_EQ(pi[0], 0xd16cfe09u);
    EXPECT_EQ(pi[1], 0x94fdccebu);
    EXPECT_EQ(pi[2], 0x5001e420u);
    EXPECT_EQ(pi[3], 0x24126ea1u);
}

TEST(RandomStream, StreamsAreReproducibleAndDistinct) {
    RandomStream a(42, 7), b(42, 7), c(42, 8);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 100; ++i) {
        const auto va = a.next_u64();
        EXPECT_EQ(va, b.next_u64());
        EXPECT_NE(va, c.next_u64());
        seen.insert(va);
    }
    EXPECT_EQ(seen.size(), 100u);
}

TEST(RandomStream, NormalMomentsAndKolmogorovSmirnov) {
    RandomStream rng(1, 0);
    std::vector<double> xs(100000);
    double s1 = 0, s2 = 0;
    for (auto& x : xs) {
        x = rng.normal();
        s1 += x;
        s2 += x * x;
    }
    EXPECT_NEAR(s1 / xs.size(), 0.0, 0.015);
    EXPECT_NEAR(s2 / xs.size(), 1.0, 0.02);
    EXPECT_GT(ks_pvalue(ks_statistic_normal(xs), xs.size()), 1e-3);
}

TEST(GaussLegendre, MatchesBisectionOracle) {
    for (int n : {1, 2, 5, 16, 33}) {
        const GaussRule rule = gauss_legendre(n);
        std::vector<double> x, w;
        oracle::gauss_legendre_bisect(n, x, w);
        ASSERT_EQ(x.size(), static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            EXPECT_NEAR(rule.nodes[i], x[i], 1e-13);
            EXPECT_NEAR(rule.weights[i], w[i], 1e-12);
        }
    }
}

TEST(GaussLegendre, IntegratesPolynomialsExactly) {
    const GaussRule rule = gauss_legendre(8);
    for (int k = 0; k <= 15; ++k) {
        const double exact = (k % 2 == 1) ? 0.0 : 2.0 / (k + 1);
        EXPECT_NEAR(integrate_gauss(rule, -1.0, 1.0, [k](double x) { return std::pow(x, k); }), exact, 1e-14);
    }
}

TEST(GradedGrid, EndpointsAndExponentClipping) {
    const auto g = graded_grid(2.0, 10, 2.0);
    EXPECT_EQ(g.front(), 0.0);
    EXPECT_EQ(g.back(), 2.0);
    EXPECT_NEAR(g[5], 0.5, 1e-15);
    EXPECT_DOUBLE_EQ(grading_exponent(0.75, 1), 2.0 / 1.25);
    EXPECT_DOUBLE_EQ(grading_exponent(10.0, 1), 1.0);
    EXPECT_DOUBLE_EQ(grading_exponent(0.0, 2), 4.0);
}

TEST(FitValidate, DetectsEnvelopeViolationOnHeldOutSet) {
    std::vector<EnvelopeSample> fit{{1.0, 1.0}, {2.0, 2.0}}, good{{1.05, 1.0}}, bad{{1.5, 1.0}};
    EXPECT_TRUE(fit_validate(fit, good).passed);
    EXPECT_FALSE(fit_validate(fit, bad).passed);
    EXPECT_DOUBLE_EQ(fit_validate(fit, bad).fitted_constant, 1.0);
}

TEST(ExponentialEnvelope, RecoversRateOfPureExponential) {
    std::vector<double> t, h;
    for (int i = 0; i <= 20; ++i) {
        t.push_back(0.1 * i);
        h.push_back(3.0 * std::exp(0.7 * t.back()));
    }
    const auto e = fit_exponential_envelope(t, h);
    EXPECT_NEAR(e.rate, 0.7, 1e-10);
    EXPECT_NEAR(e.constant, 3.0, 1e-9);
    EXPECT_TRUE(e.passed);
}

TEST(PairwiseSum, IndependentOfThreadCountForParallelFill) {
    std::vector<double> one(1000), four(1000);
    parallel_for(1000, 1, [&](std::size_t i) { one[i] = std::sin(i * 0.37) / (i + 1.0); });
    parallel_for(1000, 4, [&](std::size_t i) { four[i] = std::sin(i * 0.37) / (i + 1.0); });
    EXPECT_EQ(pairwise_sum(one), pairwise_sum(four));
}

TEST(ParallelFor, PropagatesExceptions) {
    EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) {
                     if (i == 7) throw InvalidInput("test", "boom");
                 }),
                 InvalidInput);
}

TEST(ResolveThreads, EnvironmentFallback) {
    setenv("PAM_LAB_THREADS", "3", 1);
    EXPECT_EQ(resolve_threads(), 3);
    EXPECT_EQ(resolve_threads(5), 5);
    setenv("PAM_LAB_THREADS", "zero", 1);
    EXPECT_THROW(resolve_threads(), InvalidInput);
    unsetenv("PAM_LAB_THREADS");
    EXPECT_GE(resolve_threads(), 1);
}

TEST(WilsonInterval, ExcludesZeroForPositiveCounts) {
    const auto p = wilson_interval(50, 10000);
    EXPECT_GT(p.lower, 0.0);
    EXPECT_LT(p.lower, 0.005);
    EXPECT_GT(p.upper, 0.005);
}

TEST(QuadraticInterpolation, ExactOnQuadratics) {
    std::vector<double> g{0.0, 0.1, 0.4, 0.9, 1.6}, v;
    for (double x : g) v.push_back(2.0 * x * x - x + 1.0);
    for (double x : {0.05, 0.3, 0.77, 1.5}) EXPECT_NEAR(interpolate_quadratic(g, v, x), 2.0 * x * x - x + 1.0, 1e-13);
}
