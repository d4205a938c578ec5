#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "pamlab/cli/config.hpp"
#include "pamlab/cli/criteria.hpp"
#include "pamlab/cli/record.hpp"
#include "pamlab/estimates.hpp"
#include "pamlab/fgeom.hpp"
#include "pamlab/measure.hpp"
#include "pamlab/moments.hpp"
#include "pamlab/noise.hpp"
#include "pamlab/solver.hpp"
#include "pamlab/spectral.hpp"

namespace pamlab::cli {

namespace detail {

inline std::string num(double v) { return format_number(v); }

inline std::string within(const std::string& what, double value, double limit) {
    return what + " " + num(value) + (value <= limit ? " <= " : " > ") + num(limit);
}

inline std::vector<double> log_grid(double lo, double hi, int count) {
    std::vector<double> out;
    for (int i = 0; i < count; ++i) out.push_back(lo * std::pow(hi / lo, count == 1 ? 0.0 : i / (count - 1.0)));
    return out;
}

inline Cell cell(double v) { return v; }
inline Cell cell(std::size_t v) { return static_cast<std::int64_t>(v); }
inline Cell cell(std::int64_t v) { return v; }
inline Cell cell(int v) { return static_cast<std::int64_t>(v); }
inline Cell cell(const std::string& v) { return v; }
inline Cell cell(const char* v) { return std::string(v); }

template <class... T>
void add_row(Table& t, const T&... v) {
    t.rows.push_back({cell(v)...});
}

}  // namespace detail

// ---- shared builders ---------------------------------------------------------

inline double threshold_rho(const ManifoldModel& m, int band, int mesh_resolution, double alpha) {
    return rho_nonneg_threshold(CovarianceKernel(build_basis(m, band), {alpha, 0.0}), m.make_mesh(mesh_resolution));
}

// The SolverConfig a simulation block describes; configuration mistakes surface as ConfigError.
inline SolverConfig build_solver_config(const ExperimentConfig& c, int threads) {
    const SolverBlock& s = *c.solver;
    const NoiseBlock& n = *c.noise;
    SolverConfig cfg;
    cfg.model = c.model();
    cfg.band = s.band;
    cfg.mesh_resolution = s.mesh_resolution;
    cfg.alpha = n.alpha;
    cfg.beta = s.beta;
    cfg.dt = s.dt;
    cfg.horizon = s.horizon;
    cfg.smoothing_time = s.smoothing_time;
    cfg.paths = static_cast<std::size_t>(s.paths);
    cfg.seed = c.seed.value_or(0);
    cfg.checkpoints = s.checkpoints;
    for (const auto& p : s.probes) cfg.probes.push_back(cfg.model.point(p[0], p[1]));
    cfg.tilt_power = s.tilt_power;
    cfg.threads = threads;
    if (!check_dalang(cfg.model, cfg.noise()).holds)
        throw ConfigError("/noise/alpha", "Dalang condition fails on " + cfg.model.name() + ": alpha must exceed (d-2)/2");
    if (s.mesh_resolution != 0 && s.mesh_resolution < dealiased_resolution(cfg.model, s.band))
        throw ConfigError("/solver/mesh_resolution", "does not dealias band " + std::to_string(s.band) + " (need >= " +
                                                         std::to_string(dealiased_resolution(cfg.model, s.band)) + ")");
    cfg.rho = n.rho ? *n.rho : threshold_rho(cfg.model, cfg.band, cfg.resolved_mesh(), cfg.alpha);
    try {
        cfg.validate();
    } catch (const InvalidInput& e) {
        throw ConfigError("/solver", e.what());
    }
    return cfg;
}

inline InitialMeasure build_measure(const MeasureBlock& b, const SolverConfig& cfg) {
    if (b.kind == "volume") return InitialMeasure::volume(cfg.model.make_mesh(cfg.resolved_mesh())).scaled(b.scale);
    InitialMeasure mu;
    for (std::size_t i = 0; i < b.points.size(); ++i) mu.atoms.push_back({cfg.model.point(b.points[i][0], b.points[i][1]), b.masses[i]});
    mu.validate();
    return mu;
}

// "one" or "mode:<n>" (the n-th basis function of the solver's band).
inline std::function<double(const Point&)> build_test_function(const std::string& name, const SolverConfig& cfg, const std::string& where) {
    if (name == "one") return [](const Point&) { return 1.0; };
    if (name.rfind("mode:", 0) == 0) {
        std::size_t n = 0;
        const auto digits = name.substr(5);
        const auto r = std::from_chars(digits.data(), digits.data() + digits.size(), n);
        if (r.ec != std::errc() || r.ptr != digits.data() + digits.size()) throw ConfigError(where, "bad mode index in '" + name + "'");
        auto basis = std::make_shared<SpectralBasis>(build_basis(cfg.model, cfg.band));
        if (n >= basis->size()) throw ConfigError(where, "mode index beyond the band (" + std::to_string(basis->size()) + " modes)");
        return [basis, n](const Point& p) { return basis->evaluate(n, p); };
    }
    throw ConfigError(where, "unknown test function '" + name + "' (expected \"one\" or \"mode:<n>\")");
}

// Checks that need the assembled objects; run before any work starts.
inline void validate_semantics(const ExperimentConfig& c) {
    if (!c.solver) return;
    const SolverConfig cfg = build_solver_config(c, 1);
    if (c.measure) {
        if (c.measure->kind == "dirac" && c.measure->points.size() > 0) {
            for (std::size_t i = 0; i < c.measure->points.size(); ++i) (void)cfg.model.point(c.measure->points[i][0], c.measure->points[i][1]);
        }
    }
    if (c.simulate) {
        for (std::size_t i = 0; i < c.simulate->weak_functionals.size(); ++i)
            (void)build_test_function(c.simulate->weak_functionals[i], cfg, "/simulate/weak/functionals/" + std::to_string(i));
        for (double t : c.simulate->weak_times)
            if (!(t >= cfg.dt) || std::abs(t / cfg.dt - std::round(t / cfg.dt)) > 1e-6)
                throw ConfigError("/simulate/weak/times", "times must be positive multiples of dt");
        if (c.simulate->positivity_t) {
            const double t = *c.simulate->positivity_t;
            if (!(t > 0.0) || std::abs(t / cfg.dt - std::round(t / cfg.dt)) > 1e-6)
                throw ConfigError("/simulate/positivity/t", "must be a positive multiple of dt");
        }
    }
    if (c.compare) {
        const auto lo = build_measure(c.compare->low, cfg), hi = build_measure(c.compare->high, cfg);
        if (!measure_dominated(lo, hi)) throw ConfigError("/compare/high", "the high measure must dominate the low one");
        for (double dt : c.compare->dts) {
            auto k = cfg;
            k.dt = dt;
            k.smoothing_time = std::max(cfg.smoothing_time, dt);
            try {
                k.validate();
            } catch (const InvalidInput& e) {
                throw ConfigError("/compare/dts", std::string("step ") + format_number(dt) + ": " + e.what());
            }
        }
    }
    if (c.intermittency && !(cfg.rho > 0.0)) throw ConfigError("/noise/rho", "the growth-rate experiment needs rho > 0");
}

// ---- verification suites -----------------------------------------------------

inline Outcome suite_geometry(const ExperimentConfig& c, int threads) {
    using detail::add_row, detail::num, detail::within;
    const GeometryBlock& g = *c.geometry;
    const std::uint64_t seed = *c.seed;
    Outcome o;
    Table bound{"global_bound", {"model", "samples", "max_violation", "max_decomposition_residual", "min_f", "min_r_minus_l"}, {}};
    Table zeta{"zeta", {"model", "sampling", "scale", "samples", "samples_used", "excluded", "zeta_hat"}, {}};
    for (const auto& name : c.models) {
        const auto m = ManifoldModel::from_name(name);
        const auto rep = check_global_bound(m, static_cast<std::size_t>(g.samples), seed, threads);
        add_row(bound, name, rep.samples, rep.max_violation, rep.max_decomposition_residual, rep.min_f, rep.min_r_minus_l);
        o.scalars[name + ".max_violation"] = rep.max_violation;
        o.scalars[name + ".max_decomposition_residual"] = rep.max_decomposition_residual;
        o.verdict("geodesic-lower-bound", rep.max_violation <= 1e-12, name + ": " + within("max violation", rep.max_violation, 1e-12));
        o.verdict("defect-identity", rep.max_decomposition_residual <= 1e-10,
                  name + ": " + within("max residual", rep.max_decomposition_residual, 1e-10));

        auto zeta_row = [&](const char* sampling, double scale, std::size_t n, std::optional<double> radius) {
            const auto z = estimate_zeta(m, scale, n, seed, radius, threads);
            add_row(zeta, name, sampling, scale, n, z.samples_used, z.excluded, z.zeta_hat);
            return z;
        };
        if (m.kind() == ManifoldKind::sphere_2d) {
            const auto ap = check_antipodal_equality(m, static_cast<std::size_t>(g.antipodal_samples), seed);
            o.scalars[name + ".antipodal_gap"] = ap.max_equality_gap;
            o.verdict("antipodal-equality", ap.max_equality_gap <= 1e-12, name + ": " + within("max gap", ap.max_equality_gap, 1e-12));
            const auto n = static_cast<std::size_t>(g.zeta_samples);
            const auto z1 = zeta_row("global", g.sphere_scale, n, std::nullopt);
            const auto z2 = zeta_row("global", g.sphere_scale, 2 * n, std::nullopt);
            const double change = std::abs(z2.zeta_hat / z1.zeta_hat - 1.0);
            o.scalars[name + ".zeta_hat"] = z2.zeta_hat;
            o.verdict("sphere-zeta-stable", z1.zeta_hat > 0.0 && change < 0.05,
                      name + ": zeta " + num(z1.zeta_hat) + " -> " + num(z2.zeta_hat) + " under doubling, " + within("relative change", change, 0.05));
        } else {
            const double scale = m.kind() == ManifoldKind::flat_torus_2d ? g.torus_scale : std::min(g.torus_scale, m.unique_geodesic_scale());
            const auto n = static_cast<std::size_t>(g.zeta_samples);
            const auto local = zeta_row("local", scale, n, m.injectivity_radius() / 4.0);
            const auto global = zeta_row("global", scale, n, std::nullopt);
            o.scalars[name + ".zeta_hat_local"] = local.zeta_hat;
            o.scalars[name + ".zeta_hat_global"] = global.zeta_hat;
            if (m.kind() == ManifoldKind::flat_torus_2d) {
                const double dev = std::abs(local.zeta_hat - 1.0);
                o.verdict("torus-zeta-local", dev <= 1e-8, name + ": z within i_M/4 of x, " + within("|zeta - 1|", dev, 1e-8));
            }
        }
    }
    o.tables.push_back(std::move(bound));
    o.tables.push_back(std::move(zeta));
    return o;
}

inline Outcome suite_kernels(const ExperimentConfig& c, int /*threads*/) {
    using detail::add_row, detail::num, detail::within;
    const KernelsBlock& k = *c.kernels;
    Outcome o;
    const bool has_circle = std::find(c.models.begin(), c.models.end(), "circle") != c.models.end();
    if (has_circle) {
        const auto m = ManifoldModel::circle();
        const HeatKernel kernel(build_basis(m, HeatKernel::required_band(m, 0.05, 1e-12)));
        Table t{"heat_oracle", {"t", "pairs", "max_abs_error"}, {}};
        RandomStream rng(*c.seed, 0);
        double worst = 0.0;
        for (double time : {0.05, 0.1, 0.3, 0.7, 1.0, 2.0, 3.5, 5.0}) {
            double w = 0.0;
            for (std::int64_t i = 0; i < k.oracle_pairs; ++i) {
                const Point x = m.random_point(rng), y = m.random_point(rng);
                w = std::max(w, std::abs(kernel(time, x, y) - wrapped_gaussian(time, y.coords[0] - x.coords[0])));
            }
            add_row(t, time, k.oracle_pairs, w);
            worst = std::max(worst, w);
        }
        o.scalars["circle.heat_oracle_max_error"] = worst;
        o.verdict("heat-kernel-oracle", worst <= 1e-10, "circle, t in [0.05, 5]: " + within("max abs error", worst, 1e-10));
        o.tables.push_back(std::move(t));
    }

    Table env{"kernel_envelopes", {"model", "bound", "mesh", "fitted_constant", "validation_ratio", "passed"}, {}};
    for (const auto& name : c.models) {
        const auto m = ManifoldModel::from_name(name);
        const bool circle = m.kind() == ManifoldKind::circle;
        const double tmin = circle ? 0.01 : 0.05;
        const HeatKernel kernel(build_basis(m, HeatKernel::required_band(m, tmin, circle ? 1e-12 : 1e-10)));
        const int res = circle ? 256 : 24;
        const std::vector<Point> bases{m.point(0.4, 0.2)};
        const auto times = detail::log_grid(tmin, 4.0, circle ? 25 : 13);
        const auto coarse = verify_li_yau(kernel, m.make_mesh(res), bases, k.epsilon, times);
        const auto fine = verify_li_yau(kernel, m.make_mesh(2 * res), bases, k.epsilon, times);
        add_row(env, name, "gaussian", res, coarse.envelope.fitted_constant, coarse.envelope.validation_ratio, coarse.envelope.passed ? "yes" : "no");
        add_row(env, name, "gaussian", 2 * res, fine.envelope.fitted_constant, fine.envelope.validation_ratio, fine.envelope.passed ? "yes" : "no");
        const double change = std::abs(fine.envelope.fitted_constant / coarse.envelope.fitted_constant - 1.0);
        o.scalars[name + ".gaussian_bound_constant"] = fine.envelope.fitted_constant;
        o.verdict("gaussian-upper-bound", coarse.envelope.passed && fine.envelope.passed && change <= 0.05,
                  name + ": held-out ratio " + num(fine.envelope.validation_ratio) + " (slack 0.1), " +
                      within("constant change under mesh doubling", change, 0.05));

        const auto small_times = detail::log_grid(tmin, 1.0, 13);
        const auto st = verify_heat_upper_bound(kernel, m.make_mesh(res), bases, small_times);
        add_row(env, name, "small_time", res, st.envelope.fitted_constant, st.envelope.validation_ratio, st.envelope.passed ? "yes" : "no");
        o.scalars[name + ".small_time_constant"] = st.envelope.fitted_constant;
        o.verdict("small-time-heat-bound", st.envelope.passed, name + ": " + within("held-out ratio", st.envelope.validation_ratio, 1.1));
    }
    o.tables.push_back(std::move(env));
    return o;
}

inline Outcome suite_noise(const ExperimentConfig& c, int /*threads*/) {
    using detail::add_row, detail::num, detail::within;
    const NoiseChecksBlock& nb = *c.noise_checks;
    constexpr double pi = std::numbers::pi;
    Outcome o;
    Table dal{"dalang", {"model", "alpha", "margin", "holds"}, {}};
    Table rows{"row_sums", {"model", "band", "mesh", "alpha", "max_row_sum", "min_eigenvalue"}, {}};
    Table riesz{"riesz_bound", {"model", "alpha", "distances", "fitted_constant", "validation_ratio", "passed"}, {}};
    for (const auto& name : c.models) {
        const auto m = ManifoldModel::from_name(name);
        const bool circle = m.kind() == ManifoldKind::circle;
        for (double a : {0.5, 1.0, 1.5}) {
            const auto d = check_dalang(m, {a, 0.0});
            add_row(dal, name, a, d.margin, d.holds ? "yes" : "no");
        }
        if (circle) {
            const CovarianceKernel g1(build_basis(m, static_cast<int>(nb.modes)), {1.0, 0.0});
            const double diag = g1.evaluate(m.point(0.3), m.point(0.3));
            const double err = std::abs(diag - pi / 6);
            o.scalars["circle.g1_diagonal"] = diag;
            o.verdict("noise-diagonal", err <= 1e-6, "G_1(x,x) = " + num(diag) + ", " + within("|G_1(x,x) - pi/6|", err, 1e-6));
            const int res = static_cast<int>(nb.threshold_resolution);
            const double rho = rho_nonneg_threshold(CovarianceKernel(build_basis(m, res / 2), {1.0, 0.0}), m.make_mesh(res));
            const double rerr = std::abs(rho - pi * pi / 6);
            o.scalars["circle.rho_threshold"] = rho;
            o.verdict("noise-threshold", rerr <= 1e-6, "rho* = " + num(rho) + ", " + within("|rho* - pi^2/6|", rerr, 1e-6));
        }
        const int band = circle ? 32 : (m.kind() == ManifoldKind::flat_torus_2d ? 6 : 10);
        const int res = circle ? 128 : (m.kind() == ManifoldKind::flat_torus_2d ? 32 : 16);
        const double alpha = circle ? 1.0 : 1.5;
        const auto cov = inspect_mesh_covariance(CovarianceKernel(build_basis(m, band), {alpha, 1.0}), m.make_mesh(res));
        add_row(rows, name, band, res, alpha, cov.max_row_sum_alpha_part, cov.min_eigenvalue);
        o.scalars[name + ".max_row_sum"] = cov.max_row_sum_alpha_part;
        o.verdict("noise-row-sums", cov.max_row_sum_alpha_part <= 1e-8, name + ": " + within("max |row sum|", cov.max_row_sum_alpha_part, 1e-8));

        const std::vector<double> alphas = circle ? std::vector<double>{0.25, 0.5} : std::vector<double>{1.5};
        for (double a : alphas) {
            const auto base = m.point(0.5, 0.5);
            bool ok = true;
            std::string detail;
            double constants[2] = {0, 0};
            int i = 0;
            for (int count : {24, 48}) {
                const auto dists = detail::log_grid(1e-3, 0.95 * m.diameter(), count);
                const auto rep = verify_riesz_bound(m, a, base, dists);
                add_row(riesz, name, a, count, rep.envelope.fitted_constant, rep.envelope.validation_ratio, rep.envelope.passed ? "yes" : "no");
                ok = ok && rep.envelope.passed;
                constants[i++] = rep.envelope.fitted_constant;
                detail = "held-out ratio " + num(rep.envelope.validation_ratio);
            }
            const double change = std::abs(constants[1] / constants[0] - 1.0);
            o.verdict("riesz-bound", ok && change <= 0.05,
                      name + ", alpha " + num(a) + ": " + detail + " (slack 0.1), " + within("constant change under grid doubling", change, 0.05));
        }
    }
    o.tables.push_back(std::move(dal));
    o.tables.push_back(std::move(rows));
    o.tables.push_back(std::move(riesz));
    return o;
}

inline Outcome suite_integrals(const ExperimentConfig& c, int threads) {
    using detail::add_row, detail::num, detail::within;
    const IntegralsBlock& ib = *c.integrals;
    Outcome o;
    EstimateParams p;
    p.model = ManifoldModel::from_name(ib.model);
    p.alpha = ib.alpha;
    p.resolution = static_cast<int>(ib.resolution);
    p.base_points = static_cast<int>(ib.base_points);
    p.seed = *c.seed;
    p.threads = threads;
    std::vector<EstimateId> ids;
    if (ib.estimates.empty()) {
        ids.assign(kAllEstimates.begin(), kAllEstimates.end());
    } else {
        for (std::size_t i = 0; i < ib.estimates.size(); ++i) {
            try {
                ids.push_back(parse_estimate_id(ib.estimates[i]));
            } catch (const InvalidInput&) {
                throw ConfigError("/integrals/estimates/" + std::to_string(i), "unknown estimate '" + ib.estimates[i] + "'");
            }
        }
    }
    Table t{"integral_estimates", {"estimate", "exponent", "fitted_constant", "validation_ratio", "refinement_change", "passed"}, {}};
    for (auto id : ids) {
        const auto rep = verify_integral_estimate(id, p);
        const std::string name(estimate_name(id));
        add_row(t, name, rep.exponent, rep.fit.fitted_constant, rep.fit.validation_ratio, rep.refinement_change, rep.passed ? "yes" : "no");
        o.scalars[name + ".constant"] = rep.fit.fitted_constant;
        o.verdict("integral-estimate", rep.passed,
                  name + ": held-out ratio " + num(rep.fit.validation_ratio) + " (slack 0.1), refinement change " + num(rep.refinement_change));
    }
    o.tables.push_back(std::move(t));

    if (ib.k_envelope) {
        const KFunctionParams kp;
        const KFunctionSampler sampler(kp);
        const auto rep = fit_k_envelope(sampler, detail::log_grid(0.02, 2.0, 14), 0.10, threads);
        Table kt{"k_functions", {"s", "k_large", "k_small", "total"}, {}};
        for (const auto& v : rep.values) add_row(kt, v.s, v.k_large, v.k_small, v.total());
        o.tables.push_back(std::move(kt));
        o.scalars["k_envelope.constant"] = rep.fit.fitted_constant;
        o.verdict("k-function-envelope", rep.fit.passed, "circle, alpha 0.75: " + within("held-out ratio", rep.fit.validation_ratio, 1.1));

        std::vector<double> grid;
        for (int i = 0; i <= 24; ++i) grid.push_back(0.05 * i);
        const auto h = k_envelope_h_lambda(rep.fit.fitted_constant, rep.exponent, 0.05, grid, 40);
        o.scalars["h_lambda.rate"] = h.envelope.rate;
        o.verdict("h-lambda-envelope", h.envelope.passed,
                  "lambda 0.05: rate " + num(h.envelope.rate) + ", " + within("held-out ratio", h.envelope.validation_ratio, 1.1));
    }
    if (ib.structural_bound) {
        const auto m = ManifoldModel::circle();
        const auto mesh = m.make_mesh(dealiased_resolution(m, 16));
        const auto basis = build_basis(m, 16);
        const double rho = rho_nonneg_threshold(CovarianceKernel(basis, {0.75, 0.0}), mesh);
        const ChaosEngine engine(CovarianceKernel(basis, {0.75, rho}), mesh, threads);
        const auto rep = verify_l1_structural_bound(engine, 0.5, detail::log_grid(0.05, 2.0, 10), 12, 3);
        o.scalars["l1_structural.constant"] = rep.fit.fitted_constant;
        o.verdict("l1-structural-bound", rep.fit.passed, "circle band 16, alpha 0.75: " + within("held-out ratio", rep.fit.validation_ratio, 1.1));
    }
    return o;
}

// ---- simulation suites -------------------------------------------------------

inline Outcome suite_moments(const ExperimentConfig& c, int threads) {
    using detail::add_row, detail::num;
    SolverConfig cfg = build_solver_config(c, threads);
    const MomentsBlock& mb = *c.moments;
    const auto x0 = cfg.model.point(c.measure->points[0][0], c.measure->points[0][1]);
    const auto x = cfg.model.point(mb.x[0], mb.x[1]);
    SeriesOptions opt;
    opt.intervals = static_cast<int>(mb.intervals);
    const auto r = series_mc_crosscheck(cfg, x0, x, static_cast<int>(mb.orders), opt);
    Outcome o;
    o.scalars["rho"] = cfg.rho;
    o.scalars["t"] = cfg.horizon;
    o.scalars["mc_mean"] = r.mc_mean;
    o.scalars["mc_stderr"] = r.mc_stderr;
    o.scalars["series_partial_sum"] = r.series;
    o.scalars["tail_bound"] = r.tail_bound;
    o.scalars["quadrature_error"] = r.quadrature_error;
    Table t{"series_vs_mc", {"t", "paths", "orders", "mc_mean", "mc_stderr", "series", "tail_bound", "quadrature_error", "difference", "allowance"}, {}};
    add_row(t, cfg.horizon, cfg.paths, mb.orders, r.mc_mean, r.mc_stderr, r.series, r.tail_bound, r.quadrature_error, r.difference, r.allowance);
    o.tables.push_back(std::move(t));
    o.verdict("series-mc-agreement", r.agree,
              "|MC - series| " + num(r.difference) + (r.agree ? " <= " : " > ") + num(r.allowance) + " (3 stderr + tail + quadrature error)");
    return o;
}

inline Outcome suite_simulate(const ExperimentConfig& c, int threads) {
    using detail::add_row, detail::num, detail::within;
    SolverConfig cfg = build_solver_config(c, threads);
    const SimulateBlock& sb = *c.simulate;
    const auto mu = build_measure(*c.measure, cfg);
    cfg.record_fields = sb.trajectories;
    const auto e = simulate_ensemble(cfg, mu);
    Outcome o;
    o.scalars["rho"] = cfg.rho;
    o.scalars["blowup_fraction"] = e.blowup_fraction();
    o.scalars["negative_factor_fraction"] = e.negative_factor_fraction();

    Table mt{"moments", {"t", "probe", "mean_field", "m1", "m1_se", "m2", "m2_se", "m4", "m4_se"}, {}};
    for (const auto& r : moment_table(e, mu))
        add_row(mt, r.t, r.probe, r.mean_field, r.m1.mean, r.m1.standard_error, r.m2.mean, r.m2.standard_error, r.m4.mean, r.m4.standard_error);
    o.tables.push_back(std::move(mt));

    const double z = mean_consistency_zscore(e, mu);
    o.scalars["mean_max_zscore"] = z;
    o.verdict("mean-consistency", z <= sb.mean_z_limit, within("max |mean - J_mu| / stderr", z, sb.mean_z_limit));

    if (e.checkpoints() >= 3) {
        const auto env = moment_envelope(e, mu, 0, sb.envelope_slack);
        Table et{"moment_envelope", {"t", "root_second_moment", "mean_field", "ratio"}, {}};
        for (std::size_t k = 0; k < env.times.size(); ++k) add_row(et, env.times[k], env.root_second_moment[k], env.mean_field[k], env.ratio[k]);
        o.tables.push_back(std::move(et));
        o.scalars["envelope.constant"] = env.envelope.constant;
        o.scalars["envelope.rate"] = env.envelope.rate;
        o.verdict("moment-envelope", env.envelope.passed,
                  "C " + num(env.envelope.constant) + ", theta " + num(env.envelope.rate) + ", " +
                      within("held-out ratio", env.envelope.validation_ratio, 1.0 + sb.envelope_slack));
    } else {
        o.inconclusive("moment-envelope", "needs at least 3 checkpoints");
    }

    if (sb.positivity_t) {
        auto pc = cfg;
        pc.tilt_power = 0.0;
        pc.record_fields = false;
        const auto pr = positivity_probe(pc, mu, *sb.positivity_t, sb.positivity_epsilons);
        Table pt{"positivity", {"t", "epsilon", "hits", "trials", "estimate", "lower", "upper"}, {}};
        bool all = true;
        for (const auto& lv : pr.levels) {
            add_row(pt, pr.t, lv.epsilon, lv.hits, lv.trials, lv.interval.estimate, lv.interval.lower, lv.interval.upper);
            all = all && lv.interval.lower > 0.0;
        }
        o.tables.push_back(std::move(pt));
        o.scalars["positivity.deterministic_min"] = pr.deterministic_min;
        if (all)
            o.verdict("positivity", true, "every level has a positive Wilson lower bound for P[min u >= epsilon]");
        else
            o.inconclusive("positivity", "some level has Wilson lower bound 0; more paths or smaller epsilon needed");
    }

    if (!sb.weak_functionals.empty()) {
        std::vector<std::function<double(const Point&)>> phis;
        for (std::size_t i = 0; i < sb.weak_functionals.size(); ++i)
            phis.push_back(build_test_function(sb.weak_functionals[i], cfg, "/simulate/weak/functionals/" + std::to_string(i)));
        auto wc = cfg;
        wc.record_fields = false;
        const auto w = weak_time_zero_check(wc, mu, phis, sb.weak_times);
        Table wt{"weak_time_zero", {"functional", "t", "target", "mean", "mean_se", "defect", "defect_se"}, {}};
        for (const auto& r : w.rows)
            add_row(wt, sb.weak_functionals[r.functional], r.t, r.target, r.mean.mean, r.mean.standard_error, r.defect.mean, r.defect.standard_error);
        o.tables.push_back(std::move(wt));
        std::string limits;
        for (std::size_t f = 0; f < w.extrapolated_limit.size(); ++f)
            limits += (f ? ", " : "") + sb.weak_functionals[f] + " " + num(w.extrapolated_limit[f]);
        o.verdict("weak-time-zero", w.decreasing, std::string(w.decreasing ? "defects shrink" : "defects do not all shrink") + " as t decreases; limits " + limits);
    }

    if (sb.trajectories) o.files.push_back({"trajectories.bin", encode_trajectories(trajectories_of(e, fnv1a64(canonical(c.effective()))))});
    return o;
}

inline Outcome suite_intermittency(const ExperimentConfig& c, int threads) {
    using detail::add_row, detail::num;
    SolverConfig cfg = build_solver_config(c, threads);
    const IntermittencyBlock& ib = *c.intermittency;
    const auto mu = build_measure(*c.measure, cfg);
    if (cfg.probes.empty()) {
        // Eight probes spread over the mesh; under a translation-invariant law they average freely.
        const auto mesh = cfg.model.make_mesh(cfg.resolved_mesh());
        for (std::size_t i = 0; i < 8; ++i) cfg.probes.push_back(mesh.points[i * mesh.size() / 8]);
    }
    Outcome o;
    o.scalars["rho"] = cfg.rho;
    Table t{"growth_rates", {"beta", "target", "slope", "half_width", "margin", "paths_used", "conclusive"}, {}};
    std::vector<std::pair<double, double>> slopes;
    bool all_conclusive = true;
    for (double beta : ib.betas) {
        auto bc = cfg;
        bc.beta = beta;
        const auto est = estimate_lyapunov(bc, mu, ib.window[0], ib.window[1]);
        add_row(t, beta, est.target, est.slope, est.half_width, est.margin, est.paths_used, est.conclusive ? "yes" : "no");
        const std::string tag = "beta " + num(beta);
        o.scalars[tag + ".slope"] = est.slope;
        o.scalars[tag + ".half_width"] = est.half_width;
        const std::string detail = tag + ": slope " + num(est.slope) + " +- " + num(est.half_width) + " vs target " + num(est.target);
        if (!est.conclusive) {
            all_conclusive = false;
            o.inconclusive("growth-rate-lower-bound", detail + "; " + est.diagnostic);
        } else {
            o.verdict("growth-rate-lower-bound", est.lower_bound_holds, detail);
        }
        slopes.push_back({beta, est.slope});
    }
    o.tables.push_back(std::move(t));
    if (slopes.size() >= 2) {
        std::sort(slopes.begin(), slopes.end());
        bool ordered = true;
        for (std::size_t i = 1; i < slopes.size(); ++i) ordered = ordered && slopes[i].second > slopes[i - 1].second;
        if (!all_conclusive && ordered)
            o.inconclusive("growth-rate-ordering", "slopes ordered but some estimates are inconclusive");
        else
            o.verdict("growth-rate-ordering", ordered, ordered ? "slopes increase with beta" : "slopes are not increasing in beta");
    }
    return o;
}

inline Outcome suite_compare(const ExperimentConfig& c, int threads) {
    using detail::add_row, detail::num, detail::within;
    const SolverConfig base = build_solver_config(c, threads);
    const CompareBlock& cb = *c.compare;
    const auto lo = build_measure(cb.low, base), hi = build_measure(cb.high, base);
    Outcome o;
    Table t{"ordering", {"dt", "comparisons", "violations", "violation_fraction", "min_gap", "min_relative_gap", "negative_factors", "factor_evaluations", "blowups"}, {}};
    std::vector<std::pair<double, double>> fractions;
    for (double dt : cb.dts) {
        auto cfg = base;
        cfg.dt = dt;
        cfg.smoothing_time = std::max(base.smoothing_time, dt);
        const auto r = comparison_experiment(cfg, lo, hi, cb.tolerance);
        add_row(t, dt, r.comparisons, r.violations, r.violation_fraction, r.min_gap, r.min_relative_gap, static_cast<std::int64_t>(r.negative_factors),
                static_cast<std::int64_t>(r.factor_evaluations), r.blowups);
        o.scalars["dt " + num(dt) + ".violation_fraction"] = r.violation_fraction;
        fractions.push_back({dt, r.violation_fraction});
    }
    o.tables.push_back(std::move(t));
    o.verdict("comparison-ordering", fractions[0].second <= cb.max_fraction,
              "dt " + num(fractions[0].first) + ", tol " + num(cb.tolerance) + " max|u2|: " + within("violation fraction", fractions[0].second, cb.max_fraction));
    for (std::size_t i = 1; i < fractions.size(); ++i) {
        const auto [dt0, f0] = fractions[i - 1];
        const auto [dt1, f1] = fractions[i];
        const bool trivial = f0 == 0.0 && f1 == 0.0;
        const bool ok = f1 <= 0.5 * f0 || trivial;
        o.verdict("comparison-refinement", ok,
                  "dt " + num(dt0) + " -> " + num(dt1) + ": fraction " + num(f0) + " -> " + num(f1) +
                      (trivial ? " (holds trivially: no violations at either step)" : ""));
    }
    return o;
}

inline Outcome suite_holder(const ExperimentConfig& c, int threads) {
    using detail::add_row, detail::num;
    SolverConfig cfg = build_solver_config(c, threads);
    const HolderBlock& hb = *c.holder;
    const auto mu = build_measure(*c.measure, cfg);
    cfg.record_fields = true;
    if (c.solver->checkpoints.empty()) {
        // Uniform checkpoints across the window at the shortest lag of interest.
        const double spacing = std::max(cfg.dt, std::round(hb.lag[0] / cfg.dt) * cfg.dt);
        cfg.checkpoints.clear();
        for (double t = std::ceil(hb.window[0] / cfg.dt - 1e-9) * cfg.dt; t <= hb.window[1] + 1e-12 && cfg.checkpoints.size() < 64; t += spacing)
            cfg.checkpoints.push_back(std::round(t / cfg.dt) * cfg.dt);
        cfg.horizon = std::max(cfg.horizon, std::ceil(cfg.checkpoints.back() / cfg.dt - 1e-9) * cfg.dt);
    }
    const auto e = simulate_ensemble(cfg, mu);
    const auto rep = holder_diagnostic(e, static_cast<int>(hb.p), hb.window[0], hb.window[1], hb.distance[0], hb.distance[1], hb.lag[0], hb.lag[1],
                                       static_cast<int>(hb.bins));
    Outcome o;
    o.scalars["nu"] = rep.nu;
    Table t{"holder_bins", {"direction", "scale", "moment"}, {}};
    for (std::size_t i = 0; i < rep.spatial.scales.size(); ++i) add_row(t, "spatial", rep.spatial.scales[i], rep.spatial.moments[i]);
    for (std::size_t i = 0; i < rep.temporal.scales.size(); ++i) add_row(t, "temporal", rep.temporal.scales[i], rep.temporal.moments[i]);
    o.tables.push_back(std::move(t));
    auto judge = [&](const char* criterion, const char* label, const HolderFit& f) {
        o.scalars[std::string(label) + ".exponent"] = f.exponent;
        o.scalars[std::string(label) + ".target"] = f.target;
        const std::string detail = std::string(label) + " exponent " + num(f.exponent) + " +- " + num(f.half_width) + " vs target " + num(f.target);
        if (!f.conclusive || !std::isfinite(f.exponent)) {
            o.inconclusive(criterion, detail + "; too few occupied bins or too narrow a scale range");
            return;
        }
        // A lower bound up to log factors: the fitted exponent may exceed the target, not fall short of it.
        const double floor = f.target * (1.0 - hb.relative_band) - f.half_width;
        o.verdict(criterion, f.exponent >= floor, detail + ", floor " + num(floor));
    };
    judge("holder-spatial", "spatial", rep.spatial);
    judge("holder-temporal", "temporal", rep.temporal);
    return o;
}

}  // namespace pamlab::cli
