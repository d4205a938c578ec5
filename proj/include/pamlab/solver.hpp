#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pamlab/errors.hpp"
#include "pamlab/manifold.hpp"
#include "pamlab/measure.hpp"
#include "pamlab/moments.hpp"
#include "pamlab/noise.hpp"
#include "pamlab/numerics.hpp"
#include "pamlab/parallel.hpp"
#include "pamlab/rng.hpp"
#include "pamlab/spectral.hpp"

namespace pamlab {

// Monte Carlo solver for u = J_μ + β ∫∫ P_{t-s}(x,y) u(s,y) W(dy,ds).
//
// The measure is first smoothed by the heat flow for t₀; the clock then
// restarts at zero, so every reported time is t − t₀ ("shifted time").
// Each step is u⁺ = S_Δt[u(1 + βΔW)], carried out on the band-limited
// coefficients: the mesh resolves products of two band-limited fields, so
// projecting back with Ψᵀ = ΦᵀW is exact up to the band truncation.
struct SolverConfig {
    ManifoldModel model = ManifoldModel::circle();
    int band = 16;
    int mesh_resolution = 0;  // 0: smallest dealiasing resolution
    double alpha = 1.0;
    double rho = 0.0;
    double beta = 0.25;
    double dt = 1e-3;
    double horizon = 0.5;          // shifted time at the end of the run
    double smoothing_time = 0.01;  // t₀
    std::size_t paths = 1000;
    std::uint64_t seed = 1;
    std::vector<double> checkpoints;  // shifted times in [0, horizon]; empty means {horizon}
    std::vector<Point> probes;        // empty means the first mesh node
    std::vector<std::function<double(const Point&)>> test_functions;
    bool record_fields = false;
    // Shift of the constant noise mode aimed at E[u^p] for p = tilt_power,
    // compensated by likelihood-ratio weights. Zero disables it.
    double tilt_power = 0.0;
    int threads = 1;

    NoiseSpec noise() const { return {alpha, rho}; }

    int resolved_mesh() const { return mesh_resolution > 0 ? mesh_resolution : dealiased_resolution(model, band); }

    std::vector<double> resolved_checkpoints() const { return checkpoints.empty() ? std::vector<double>{horizon} : checkpoints; }

    long steps() const { return std::lround(horizon / dt); }

    void validate() const {
        if (band < 1) throw InvalidInput("solver", "band must be >= 1");
        if (!check_dalang(model, noise()).holds) throw InvalidInput("solver", "Dalang condition fails: alpha must exceed (d-2)/2");
        if (!(alpha > 0.0)) throw InvalidInput("solver", "alpha must be > 0");
        if (!(rho >= 0.0) || !std::isfinite(rho)) throw InvalidInput("solver", "rho must be finite and >= 0");
        if (!(beta >= 0.0) || !std::isfinite(beta)) throw InvalidInput("solver", "beta must be finite and >= 0");
        if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidInput("solver", "dt must be > 0");
        if (!(smoothing_time >= dt)) throw InvalidInput("solver", "smoothing time t0 must be >= dt");
        if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidInput("solver", "horizon must be > 0");
        if (std::abs(horizon / dt - std::round(horizon / dt)) > 1e-6) throw InvalidInput("solver", "horizon must be a multiple of dt");
        if (paths < 1) throw InvalidInput("solver", "ensemble size must be >= 1");
        if (mesh_resolution != 0 && mesh_resolution < dealiased_resolution(model, band))
            throw InvalidInput("solver", "mesh resolution " + std::to_string(mesh_resolution) + " does not dealias band " +
                                             std::to_string(band) + " (need " + std::to_string(dealiased_resolution(model, band)) + ")");
        if (!(tilt_power >= 0.0)) throw InvalidInput("solver", "tilt power must be >= 0");
        if (threads < 1) throw InvalidInput("solver", "threads must be >= 1");
        const auto cps = resolved_checkpoints();
        for (std::size_t k = 0; k < cps.size(); ++k) {
            const double c = cps[k];
            if (!(c >= 0.0) || c > horizon + 1e-12) throw InvalidInput("solver", "checkpoints must lie in [0, horizon]");
            if (std::abs(c / dt - std::round(c / dt)) > 1e-6) throw InvalidInput("solver", "checkpoints must be multiples of dt");
            if (k > 0 && !(c > cps[k - 1])) throw InvalidInput("solver", "checkpoints must be strictly increasing");
        }
        for (const auto& p : probes) model.check(p);
    }
};

// Precomputed operators of the Galerkin exponential-Euler step.
class GalerkinScheme {
public:
    explicit GalerkinScheme(const SolverConfig& cfg)
        : cfg_(cfg),
          basis_(build_basis(cfg.model, cfg.band)),
          mesh_(cfg.model.make_mesh(cfg.resolved_mesh())),
          sampler_(basis_, cfg.noise(), cfg.dt) {
        cfg.validate();
        phi_ = basis_.mesh_matrix(mesh_);
        const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(mesh_.weights.data(), mesh_.size());
        psit_ = phi_.transpose() * w.asDiagonal();
        lambda_ = basis_.eigenvalues();
        decay_ = (-0.5 * cfg.dt * lambda_).array().exp();
    }

    const SolverConfig& config() const { return cfg_; }
    const SpectralBasis& basis() const { return basis_; }
    const QuadratureMesh& mesh() const { return mesh_; }
    const Eigen::MatrixXd& phi() const { return phi_; }
    const Eigen::MatrixXd& projector() const { return psit_; }
    const NoiseSampler& sampler() const { return sampler_; }
    std::size_t modes() const { return basis_.size(); }

    // Coefficients of the heat flow of c for time t.
    Eigen::VectorXd heat(const Eigen::VectorXd& c, double t) const {
        return ((-0.5 * t * lambda_).array().exp() * c.array()).matrix();
    }

    // Coefficients of J_μ(t₀ + t, ·).
    Eigen::VectorXd mean_coefficients(const InitialMeasure& mu, double t = 0.0) const {
        mu.validate();
        return heat(mu.coefficients(basis_), cfg_.smoothing_time + t);
    }

    Eigen::VectorXd to_mesh(const Eigen::VectorXd& c) const { return phi_ * c; }
    Eigen::VectorXd to_coefficients(const Eigen::VectorXd& u) const { return psit_ * u; }

    // One step on coefficients; `dw` is ΔW on the mesh, `work` scratch space.
    void step(Eigen::VectorXd& c, const Eigen::VectorXd& dw, Eigen::VectorXd& work) const {
        work.noalias() = phi_ * c;
        work.array() *= 1.0 + cfg_.beta * dw.array();
        c.noalias() = psit_ * work;
        c.array() *= decay_.array();
    }

    // The same step on a mesh field: S_Δt[u(1 + βΔW)] with S_Δt = Φ e^{-ΛΔt/2} Ψᵀ.
    Eigen::VectorXd step_mesh(const Eigen::VectorXd& u, const Eigen::VectorXd& dw) const {
        if (u.size() != static_cast<Eigen::Index>(mesh_.size()) || dw.size() != u.size())
            throw InvalidInput("solver", "mesh field size mismatch");
        const Eigen::VectorXd f = (u.array() * (1.0 + cfg_.beta * dw.array())).matrix();
        return phi_ * (decay_.array() * (psit_ * f).array()).matrix();
    }

private:
    SolverConfig cfg_;
    SpectralBasis basis_;
    QuadratureMesh mesh_;
    NoiseSampler sampler_;
    Eigen::MatrixXd phi_, psit_;
    Eigen::VectorXd lambda_, decay_;
};

// J_μ(t₀, ·) on the mesh: the smoothed initial state.
inline Eigen::VectorXd init_state(const SolverConfig& cfg, const InitialMeasure& mu) {
    const GalerkinScheme scheme(cfg);
    return scheme.to_mesh(scheme.mean_coefficients(mu));
}

// ∫ φ dμ.
inline double pair_with_measure(const std::function<double(const Point&)>& phi, const InitialMeasure& mu) {
    double s = 0.0;
    for (const auto& [p, mass] : mu.atoms) s += mass * phi(p);
    if (mu.density_mesh)
        for (std::size_t j = 0; j < mu.density.size(); ++j)
            s += mu.density_mesh->weights[j] * mu.density[j] * phi(mu.density_mesh->points[j]);
    return s;
}

struct MomentValue {
    double mean = 0.0;
    double standard_error = 0.0;
};

// Everything recorded along an ensemble. Arrays are flattened with the path
// index outermost; `measures` counts initial conditions driven by the same noise.
struct PathEnsemble {
    SolverConfig config;
    QuadratureMesh mesh;
    std::vector<double> times;  // shifted checkpoint times
    std::vector<Point> probes;
    std::size_t paths = 0, measures = 1, mesh_size = 0, functionals = 0;
    std::vector<double> values;             // [path][measure][checkpoint][probe]
    std::vector<double> log_weight;         // [path][checkpoint]
    std::vector<double> mesh_min;           // [path][measure][checkpoint]
    std::vector<double> functional_values;  // [path][measure][checkpoint][functional]
    std::vector<double> fields;             // [path][measure][checkpoint][node], when recorded
    std::vector<long> blowup_step;          // per path; -1 if every step stayed finite
    std::uint64_t negative_factors = 0;     // node-steps with 1 + βΔW < 0
    std::uint64_t factor_evaluations = 0;

    std::size_t checkpoints() const { return times.size(); }

    double value(std::size_t path, std::size_t k, std::size_t probe, std::size_t m = 0) const {
        return values[((path * measures + m) * checkpoints() + k) * probes.size() + probe];
    }
    double weight(std::size_t path, std::size_t k) const { return std::exp(log_weight[path * checkpoints() + k]); }
    double minimum(std::size_t path, std::size_t k, std::size_t m = 0) const {
        return mesh_min[(path * measures + m) * checkpoints() + k];
    }
    double functional(std::size_t path, std::size_t k, std::size_t f, std::size_t m = 0) const {
        return functional_values[((path * measures + m) * checkpoints() + k) * functionals + f];
    }
    std::span<const double> field(std::size_t path, std::size_t k, std::size_t m = 0) const {
        if (fields.empty()) throw PreconditionError("solver", "fields were not recorded for this ensemble");
        return {fields.data() + ((path * measures + m) * checkpoints() + k) * mesh_size, mesh_size};
    }

    bool finite(std::size_t path) const { return blowup_step[path] < 0; }

    std::size_t blowups() const {
        return static_cast<std::size_t>(std::count_if(blowup_step.begin(), blowup_step.end(), [](long s) { return s >= 0; }));
    }
    double blowup_fraction() const { return paths ? static_cast<double>(blowups()) / paths : 0.0; }

    double negative_factor_fraction() const {
        return factor_evaluations ? static_cast<double>(negative_factors) / factor_evaluations : 0.0;
    }

    // Weighted sample mean of E[u^p] at (checkpoint, probe) over finite paths.
    MomentValue moment(int p, std::size_t k, std::size_t probe, std::size_t m = 0) const {
        std::vector<double> terms;
        terms.reserve(paths);
        for (std::size_t i = 0; i < paths; ++i)
            if (finite(i)) terms.push_back(weight(i, k) * std::pow(value(i, k, probe, m), p));
        const auto e = mean_estimate(terms);
        return {e.mean, e.standard_error};
    }
};

namespace detail {

inline std::vector<long> checkpoint_steps(const SolverConfig& cfg) {
    std::vector<long> out;
    for (double c : cfg.resolved_checkpoints()) out.push_back(std::lround(c / cfg.dt));
    return out;
}

struct MarchTotals {
    std::vector<long> blowup_step;
    std::vector<std::uint64_t> negatives;
};

// Runs every path with its own Philox stream (seed, path) and calls
// observe(path, k, coefficients per measure, log weight) at each checkpoint.
// Nothing is shared between paths, so the worker count cannot change results.
template <class Observer>
MarchTotals march(const GalerkinScheme& scheme, const std::vector<Eigen::VectorXd>& start, Observer&& observe) {
    const SolverConfig& cfg = scheme.config();
    const auto steps = cfg.steps();
    const auto cps = checkpoint_steps(cfg);
    const Eigen::VectorXd& sigma = scheme.sampler().sigma();
    const Eigen::MatrixXd& phi = scheme.phi();
    const double volume = cfg.model.volume();
    // Mode 0 is the constant mode with eigenvalue 0 on every model.
    const double shift = (cfg.tilt_power > 0.0 && sigma[0] > 0.0) ? cfg.tilt_power * cfg.beta * sigma[0] / std::sqrt(volume) : 0.0;

    MarchTotals totals;
    totals.blowup_step.assign(cfg.paths, -1);
    totals.negatives.assign(cfg.paths, 0);
    parallel_for(cfg.paths, cfg.threads, [&](std::size_t path) {
        RandomStream rng(cfg.seed, path);
        std::vector<Eigen::VectorXd> c = start;
        Eigen::VectorXd xi(sigma.size()), dw(phi.rows()), work(phi.rows());
        double logw = 0.0;
        std::size_t next = 0;
        while (next < cps.size() && cps[next] == 0) observe(path, next++, c, logw);
        std::uint64_t negatives = 0;
        for (long s = 1; s <= steps; ++s) {
            const double z0 = rng.normal();
            xi[0] = sigma[0] * (z0 + shift);
            if (shift != 0.0) logw += -shift * z0 - 0.5 * shift * shift;
            for (Eigen::Index n = 1; n < xi.size(); ++n) xi[n] = sigma[n] * rng.normal();
            dw.noalias() = phi * xi;
            for (Eigen::Index i = 0; i < dw.size(); ++i) negatives += (1.0 + cfg.beta * dw[i] < 0.0);
            bool ok = true;
            for (auto& ci : c) {
                scheme.step(ci, dw, work);
                ok = ok && ci.allFinite();
            }
            if (!ok) {
                totals.blowup_step[path] = s;
                break;
            }
            while (next < cps.size() && cps[next] == s) observe(path, next++, c, logw);
        }
        totals.negatives[path] = negatives;
    });
    return totals;
}

}  // namespace detail

// Runs one ensemble for each measure, all measures driven by the same noise path.
inline PathEnsemble simulate_coupled(const SolverConfig& cfg, const std::vector<InitialMeasure>& measures) {
    cfg.validate();
    if (measures.empty()) throw InvalidInput("solver", "at least one initial measure is required");
    const GalerkinScheme scheme(cfg);
    PathEnsemble e;
    e.config = cfg;
    e.mesh = scheme.mesh();
    e.times = cfg.resolved_checkpoints();
    e.probes = cfg.probes.empty() ? std::vector<Point>{scheme.mesh().points[0]} : cfg.probes;
    e.paths = cfg.paths;
    e.measures = measures.size();
    e.mesh_size = scheme.mesh().size();
    e.functionals = cfg.test_functions.size();
    const std::size_t nk = e.times.size(), np = e.probes.size(), nm = e.measures, nf = e.functionals;

    std::vector<Eigen::VectorXd> start;
    for (const auto& mu : measures) start.push_back(scheme.mean_coefficients(mu));

    Eigen::MatrixXd probe_rows(static_cast<Eigen::Index>(np), static_cast<Eigen::Index>(scheme.modes()));
    for (std::size_t j = 0; j < np; ++j) probe_rows.row(static_cast<Eigen::Index>(j)) = scheme.basis().evaluate_all(e.probes[j]).transpose();
    // ∫ u φ dm = (W φ)ᵀ Φ c, exact for band-limited φ.
    Eigen::MatrixXd functional_rows(static_cast<Eigen::Index>(nf), static_cast<Eigen::Index>(scheme.modes()));
    for (std::size_t f = 0; f < nf; ++f) {
        Eigen::VectorXd wf(static_cast<Eigen::Index>(e.mesh_size));
        for (std::size_t i = 0; i < e.mesh_size; ++i) wf[i] = e.mesh.weights[i] * cfg.test_functions[f](e.mesh.points[i]);
        functional_rows.row(static_cast<Eigen::Index>(f)) = (scheme.phi().transpose() * wf).transpose();
    }

    const double nan = std::numeric_limits<double>::quiet_NaN();
    e.values.assign(cfg.paths * nm * nk * np, nan);
    e.log_weight.assign(cfg.paths * nk, 0.0);
    e.mesh_min.assign(cfg.paths * nm * nk, nan);
    e.functional_values.assign(cfg.paths * nm * nk * nf, nan);
    if (cfg.record_fields) e.fields.assign(cfg.paths * nm * nk * e.mesh_size, nan);

    auto totals = detail::march(scheme, start, [&](std::size_t path, std::size_t k, const std::vector<Eigen::VectorXd>& c, double logw) {
        e.log_weight[path * nk + k] = logw;
        for (std::size_t m = 0; m < nm; ++m) {
            const std::size_t slot = (path * nm + m) * nk + k;
            const Eigen::VectorXd pv = probe_rows * c[m];
            std::copy(pv.data(), pv.data() + np, e.values.begin() + static_cast<std::ptrdiff_t>(slot * np));
            const Eigen::VectorXd u = scheme.phi() * c[m];
            e.mesh_min[slot] = u.minCoeff();
            if (nf) {
                const Eigen::VectorXd fv = functional_rows * c[m];
                std::copy(fv.data(), fv.data() + nf, e.functional_values.begin() + static_cast<std::ptrdiff_t>(slot * nf));
            }
            if (cfg.record_fields) std::copy(u.data(), u.data() + u.size(), e.fields.begin() + static_cast<std::ptrdiff_t>(slot * e.mesh_size));
        }
    });
    e.blowup_step = std::move(totals.blowup_step);
    for (auto n : totals.negatives) e.negative_factors += n;
    e.factor_evaluations = static_cast<std::uint64_t>(cfg.paths) * static_cast<std::uint64_t>(cfg.steps()) * e.mesh_size;
    return e;
}

inline PathEnsemble simulate_ensemble(const SolverConfig& cfg, const InitialMeasure& mu) { return simulate_coupled(cfg, {mu}); }

// E[u^p] with standard errors for p ∈ {1, 2, 4} at every (checkpoint, probe).
struct MomentRow {
    double t = 0.0;
    std::size_t probe = 0;
    double mean_field = 0.0;  // J_μ(t₀ + t, x) of the scheme
    MomentValue m1, m2, m4;
};

inline std::vector<MomentRow> moment_table(const PathEnsemble& e, const InitialMeasure& mu) {
    const GalerkinScheme scheme(e.config);
    std::vector<MomentRow> rows;
    for (std::size_t k = 0; k < e.checkpoints(); ++k) {
        const Eigen::VectorXd c = scheme.mean_coefficients(mu, e.times[k]);
        for (std::size_t j = 0; j < e.probes.size(); ++j) {
            MomentRow r;
            r.t = e.times[k];
            r.probe = j;
            r.mean_field = scheme.basis().evaluate_all(e.probes[j]).dot(c);
            r.m1 = e.moment(1, k, j);
            r.m2 = e.moment(2, k, j);
            r.m4 = e.moment(4, k, j);
            rows.push_back(r);
        }
    }
    return rows;
}

// sup over checkpoints and probes of |Ê[u] − J_μ| measured in standard errors.
inline double mean_consistency_zscore(const PathEnsemble& e, const InitialMeasure& mu) {
    double worst = 0.0;
    for (const auto& r : moment_table(e, mu)) {
        const double diff = std::abs(r.m1.mean - r.mean_field);
        if (diff == 0.0) continue;
        worst = std::max(worst, r.m1.standard_error > 0.0 ? diff / r.m1.standard_error : INFINITY);
    }
    return worst;
}

struct LyapunovEstimate {
    double target = 0.0;  // β²ρ/m₀
    double slope = 0.0;
    double half_width = 0.0;  // bootstrap 95%
    double margin = 0.0;      // slope − target
    std::vector<double> times, log_moment;
    std::size_t paths_used = 0;
    bool conclusive = false;
    bool lower_bound_holds = false;  // slope ≥ target − half_width
    std::string diagnostic;
};

// Slope of ln Ê[u²] over [t_lo, t_hi] with u² averaged over the probes of
// each path, and a percentile bootstrap over paths.
inline LyapunovEstimate estimate_lyapunov(const PathEnsemble& e, double target, double t_lo, double t_hi, int replicates = 400,
                                          std::uint64_t seed = 0x1f2e3d4cull) {
    LyapunovEstimate out;
    out.target = target;
    std::vector<std::size_t> ks;
    for (std::size_t k = 0; k < e.checkpoints(); ++k)
        if (e.times[k] >= t_lo - 1e-12 && e.times[k] <= t_hi + 1e-12) ks.push_back(k);
    if (ks.size() < 3 || e.times[ks.back()] - e.times[ks.front()] < 0.5) {
        out.diagnostic = "window too short: need >= 3 checkpoints spanning >= 0.5";
        return out;
    }
    std::vector<std::size_t> live;
    for (std::size_t i = 0; i < e.paths; ++i)
        if (e.finite(i)) live.push_back(i);
    out.paths_used = live.size();
    if (live.size() < 10) {
        out.diagnostic = "fewer than 10 finite paths";
        return out;
    }
    const std::size_t nk = ks.size(), np = e.probes.size();
    std::vector<double> q(live.size() * nk);  // weighted probe-mean of u², [path][k]
    for (std::size_t a = 0; a < live.size(); ++a)
        for (std::size_t b = 0; b < nk; ++b) {
            double s = 0.0;
            for (std::size_t j = 0; j < np; ++j) s += std::pow(e.value(live[a], ks[b], j), 2);
            q[a * nk + b] = e.weight(live[a], ks[b]) * s / np;
        }
    auto slope_of = [&](const std::vector<std::size_t>& idx, std::vector<double>* logs) {
        std::vector<double> x(nk), y(nk), col(idx.size());
        for (std::size_t b = 0; b < nk; ++b) {
            for (std::size_t a = 0; a < idx.size(); ++a) col[a] = q[idx[a] * nk + b];
            x[b] = e.times[ks[b]];
            y[b] = std::log(pairwise_sum(col) / idx.size());
        }
        if (logs) *logs = y;
        return linear_fit(x, y).slope;
    };
    std::vector<std::size_t> all(live.size());
    std::iota(all.begin(), all.end(), 0);
    out.slope = slope_of(all, &out.log_moment);
    for (auto k : ks) out.times.push_back(e.times[k]);

    std::vector<double> boot(static_cast<std::size_t>(replicates));
    std::vector<std::size_t> idx(live.size());
    for (int r = 0; r < replicates; ++r) {
        RandomStream rng(seed, static_cast<std::uint64_t>(r));
        for (auto& i : idx) i = std::min(live.size() - 1, static_cast<std::size_t>(rng.uniform() * live.size()));
        boot[static_cast<std::size_t>(r)] = slope_of(idx, nullptr);
    }
    std::sort(boot.begin(), boot.end());
    const auto at = [&](double p) { return boot[static_cast<std::size_t>(std::lround(p * (replicates - 1)))]; };
    out.half_width = 0.5 * (at(0.975) - at(0.025));
    out.margin = out.slope - target;
    out.lower_bound_holds = out.slope >= target - out.half_width - 1e-12;
    out.conclusive = std::isfinite(out.slope) && out.half_width <= 0.5 * std::max(std::abs(target), 0.1);
    if (!out.conclusive) out.diagnostic = "bootstrap interval too wide relative to the target";
    return out;
}

// Runs the ensemble itself, with checkpoints every 0.25 across the window
// unless the configuration already lists some.
inline LyapunovEstimate estimate_lyapunov(SolverConfig cfg, const InitialMeasure& mu, double t_lo, double t_hi) {
    if (!(cfg.rho > 0.0)) throw PreconditionError("solver", "the growth-rate experiment needs rho > 0");
    const GalerkinScheme probe_scheme(cfg);
    const double rho_star = rho_nonneg_threshold(CovarianceKernel(probe_scheme.basis(), {cfg.alpha, 0.0}), probe_scheme.mesh());
    if (cfg.rho < rho_star - 1e-12) throw PreconditionError("solver", "rho is below the nonnegativity threshold " + std::to_string(rho_star));
    if (!(t_hi > t_lo) || t_lo < 0.0) throw InvalidInput("solver", "window must satisfy 0 <= t_lo < t_hi");
    cfg.horizon = std::max(cfg.horizon, t_hi);
    cfg.horizon = std::ceil(cfg.horizon / cfg.dt - 1e-9) * cfg.dt;
    if (cfg.checkpoints.empty()) {
        const int n = std::max(2, static_cast<int>(std::lround((t_hi - t_lo) / 0.25)));
        for (int i = 0; i <= n; ++i) cfg.checkpoints.push_back(std::round((t_lo + (t_hi - t_lo) * i / n) / cfg.dt) * cfg.dt);
    }
    const auto e = simulate_ensemble(cfg, mu);
    return estimate_lyapunov(e, cfg.beta * cfg.beta * cfg.rho / cfg.model.volume(), t_lo, t_hi);
}

struct ComparisonReport {
    std::size_t comparisons = 0;  // (path, checkpoint, node) triples
    std::size_t violations = 0;   // u₁ > u₂ + tol
    double violation_fraction = 0.0;
    double relative_tolerance = 0.0;
    double min_gap = INFINITY;           // min(u₂ − u₁) over the grid
    double min_relative_gap = INFINITY;  // the same divided by max|u₂| of its path and checkpoint
    bool identical = true;               // u₁ ≡ u₂ bit for bit
    double max_ratio_defect = 0.0;       // max |u₂ − c u₁| / max|u₂| when μ₂ = c μ₁ is declared
    std::uint64_t negative_factors = 0, factor_evaluations = 0;
    std::size_t blowups = 0;
};

// Couples μ₁ ≤ μ₂ through one noise path and counts ordering violations
// u₁ > u₂ + tol, with tol = relative_tolerance · max|u₂| per path and
// checkpoint. `scale` > 0 declares μ₂ = scale·μ₁ and records the exact-ratio defect.
inline ComparisonReport comparison_experiment(SolverConfig cfg, const InitialMeasure& mu1, const InitialMeasure& mu2,
                                              double relative_tolerance = 1e-6, double scale = 0.0) {
    cfg.validate();
    mu1.validate();
    mu2.validate();
    if (!measure_dominated(mu1, mu2)) throw InvalidInput("solver", "comparison needs mu1 <= mu2");
    if (!(relative_tolerance >= 0.0)) throw InvalidInput("solver", "tolerance must be >= 0");
    const GalerkinScheme scheme(cfg);
    const std::vector<Eigen::VectorXd> start{scheme.mean_coefficients(mu1), scheme.mean_coefficients(mu2)};
    const std::size_t nk = cfg.resolved_checkpoints().size();
    struct Slot {
        std::size_t violations = 0;
        double min_gap = INFINITY, min_rel = INFINITY, ratio = 0.0;
        bool identical = true;
    };
    std::vector<Slot> slots(cfg.paths * nk);
    auto totals = detail::march(scheme, start, [&](std::size_t path, std::size_t k, const std::vector<Eigen::VectorXd>& c, double) {
        const Eigen::VectorXd u1 = scheme.phi() * c[0], u2 = scheme.phi() * c[1];
        const double top = u2.cwiseAbs().maxCoeff();
        Slot& s = slots[path * nk + k];
        for (Eigen::Index i = 0; i < u1.size(); ++i) {
            const double gap = u2[i] - u1[i];
            s.violations += (-gap > relative_tolerance * top);
            s.min_gap = std::min(s.min_gap, gap);
            if (top > 0.0) s.min_rel = std::min(s.min_rel, gap / top);
            s.identical = s.identical && u1[i] == u2[i];
            if (scale > 0.0 && top > 0.0) s.ratio = std::max(s.ratio, std::abs(u2[i] - scale * u1[i]) / top);
        }
    });
    ComparisonReport r;
    r.relative_tolerance = relative_tolerance;
    for (std::size_t path = 0; path < cfg.paths; ++path) {
        if (totals.blowup_step[path] >= 0) {
            ++r.blowups;
            continue;
        }
        for (std::size_t k = 0; k < nk; ++k) {
            const Slot& s = slots[path * nk + k];
            r.violations += s.violations;
            r.comparisons += scheme.mesh().size();
            r.min_gap = std::min(r.min_gap, s.min_gap);
            r.min_relative_gap = std::min(r.min_relative_gap, s.min_rel);
            r.identical = r.identical && s.identical;
            r.max_ratio_defect = std::max(r.max_ratio_defect, s.ratio);
        }
    }
    r.violation_fraction = r.comparisons ? static_cast<double>(r.violations) / r.comparisons : 0.0;
    for (auto n : totals.negatives) r.negative_factors += n;
    r.factor_evaluations = static_cast<std::uint64_t>(cfg.paths) * static_cast<std::uint64_t>(cfg.steps()) * scheme.mesh().size();
    return r;
}

struct PositivityLevel {
    double epsilon = 0.0;
    std::size_t hits = 0, trials = 0;
    ProportionInterval interval;
};

struct PositivityReport {
    double t = 0.0;
    double deterministic_min = 0.0;  // min over the mesh of J_μ(t₀ + t, ·)
    std::vector<PositivityLevel> levels;
    std::size_t blowups = 0;
};

// Empirical P[min over the mesh of u(t, ·) ≥ ε] with Wilson intervals.
inline PositivityReport positivity_probe(SolverConfig cfg, const InitialMeasure& mu, double t, const std::vector<double>& epsilons) {
    mu.validate();
    if (!(mu.total_mass() > 0.0)) throw InvalidInput("solver", "positivity needs an initial measure with positive mass");
    if (cfg.tilt_power != 0.0) throw InvalidInput("solver", "positivity frequencies need an untilted ensemble");
    cfg.checkpoints = {t};
    cfg.horizon = t;
    cfg.validate();
    const GalerkinScheme scheme(cfg);
    const double rho_star = rho_nonneg_threshold(CovarianceKernel(scheme.basis(), {cfg.alpha, 0.0}), scheme.mesh());
    if (cfg.rho < rho_star - 1e-12) throw PreconditionError("solver", "rho is below the nonnegativity threshold " + std::to_string(rho_star));
    const auto e = simulate_ensemble(cfg, mu);
    PositivityReport r;
    r.t = t;
    r.deterministic_min = scheme.to_mesh(scheme.mean_coefficients(mu, t)).minCoeff();
    r.blowups = e.blowups();
    for (double eps : epsilons) {
        PositivityLevel lv;
        lv.epsilon = eps;
        for (std::size_t i = 0; i < e.paths; ++i) {
            ++lv.trials;
            lv.hits += e.finite(i) && e.minimum(i, 0) >= eps;
        }
        lv.interval = wilson_interval(lv.hits, lv.trials);
        r.levels.push_back(lv);
    }
    return r;
}

struct HolderFit {
    double exponent = 0.0;
    double half_width = 0.0;  // bootstrap 95%
    double target = 0.0;
    std::vector<double> scales, moments;  // per bin: mean distance or lag, E|Δu|^p
    bool conclusive = false;
};

struct HolderReport {
    int p = 2;
    double nu = 0.0;  // 2α + 2 − d
    HolderFit spatial, temporal;
};

namespace detail {

// Log-spaced bins on [lo, hi]; returns -1 outside.
inline int log_bin(double v, double lo, double hi, int bins) {
    if (!(v >= lo) || v > hi) return -1;
    return std::min(bins - 1, static_cast<int>(bins * std::log(v / lo) / std::log(hi / lo)));
}

// Per-path binned sums → exponent of the regression of log moment on log
// scale, with a percentile bootstrap over paths.
inline HolderFit holder_regression(const std::vector<double>& sums, const std::vector<double>& counts,
                                   const std::vector<double>& scale_sums, std::size_t paths, int bins, double target) {
    HolderFit f;
    f.target = target;
    auto fit = [&](const std::vector<std::size_t>& idx, bool keep) {
        std::vector<double> x, y;
        for (int b = 0; b < bins; ++b) {
            double s = 0.0, n = 0.0, sc = 0.0;
            for (auto i : idx) {
                s += sums[i * bins + b];
                n += counts[i * bins + b];
                sc += scale_sums[i * bins + b];
            }
            if (n <= 0.0 || s <= 0.0) continue;
            x.push_back(std::log(sc / n));
            y.push_back(std::log(s / n));
            if (keep) {
                f.scales.push_back(sc / n);
                f.moments.push_back(s / n);
            }
        }
        return x.size() >= 3 ? linear_fit(x, y).slope : std::numeric_limits<double>::quiet_NaN();
    };
    std::vector<std::size_t> all(paths);
    std::iota(all.begin(), all.end(), 0);
    f.exponent = fit(all, true);
    if (!std::isfinite(f.exponent)) return f;
    std::vector<double> boot;
    std::vector<std::size_t> idx(paths);
    for (int r = 0; r < 200; ++r) {
        RandomStream rng(0x40d3ull, static_cast<std::uint64_t>(r));
        for (auto& i : idx) i = std::min(paths - 1, static_cast<std::size_t>(rng.uniform() * paths));
        const double v = fit(idx, false);
        if (std::isfinite(v)) boot.push_back(v);
    }
    std::sort(boot.begin(), boot.end());
    if (boot.size() >= 20)
        f.half_width = 0.5 * (boot[static_cast<std::size_t>(0.975 * (boot.size() - 1))] - boot[static_cast<std::size_t>(0.025 * (boot.size() - 1))]);
    f.conclusive = f.scales.size() >= 3 && f.scales.back() / f.scales.front() >= 4.0;
    return f;
}

}  // namespace detail

// Empirical Hölder exponents from recorded fields: E|u(t,x) − u(t,y)|^p
// against d(x,y) on [d_lo, d_hi], and E|u(t,x) − u(s,x)|^p against |t − s| on
// [lag_lo, lag_hi], pooled over checkpoints in [t_lo, t_hi]. Targets are
// p·min(ν/2, 1) and p·min(ν/4, 1/2).
inline HolderReport holder_diagnostic(const PathEnsemble& e, int p, double t_lo, double t_hi, double d_lo, double d_hi,
                                      double lag_lo, double lag_hi, int bins = 8) {
    if (p != 2 && p != 4) throw InvalidInput("solver", "Hölder diagnostic takes p = 2 or 4");
    if (e.fields.empty()) throw PreconditionError("solver", "Hölder diagnostic needs recorded fields");
    if (!(d_hi > d_lo && d_lo > 0.0 && lag_hi > lag_lo && lag_lo > 0.0)) throw InvalidInput("solver", "scale ranges must be increasing and positive");
    const auto& model = e.config.model;
    HolderReport rep;
    rep.p = p;
    rep.nu = 2 * e.config.alpha + 2 - model.dim();
    std::vector<std::size_t> ks;
    for (std::size_t k = 0; k < e.checkpoints(); ++k)
        if (e.times[k] >= t_lo - 1e-12 && e.times[k] <= t_hi + 1e-12) ks.push_back(k);

    // Node pairs per spatial bin, fixed once.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<int> pair_bin;
    std::vector<double> pair_d;
    for (std::size_t i = 0; i < e.mesh_size; ++i)
        for (std::size_t j = i + 1; j < e.mesh_size; ++j) {
            const double d = model.distance(e.mesh.points[i], e.mesh.points[j]);
            const int b = detail::log_bin(d, d_lo, d_hi, bins);
            if (b < 0) continue;
            pairs.push_back({i, j});
            pair_bin.push_back(b);
            pair_d.push_back(d);
        }
    const std::size_t nb = static_cast<std::size_t>(bins);
    std::vector<double> ss(e.paths * nb, 0.0), sc(e.paths * nb, 0.0), sd(e.paths * nb, 0.0);
    std::vector<double> ts(e.paths * nb, 0.0), tc(e.paths * nb, 0.0), tl(e.paths * nb, 0.0);
    parallel_for(e.paths, e.config.threads, [&](std::size_t path) {
        if (!e.finite(path)) return;
        for (auto k : ks) {
            const double w = e.weight(path, k);
            const auto u = e.field(path, k);
            for (std::size_t q = 0; q < pairs.size(); ++q) {
                const std::size_t b = path * nb + static_cast<std::size_t>(pair_bin[q]);
                ss[b] += w * std::pow(std::abs(u[pairs[q].first] - u[pairs[q].second]), p);
                sc[b] += 1.0;
                sd[b] += pair_d[q];
            }
        }
        for (std::size_t a = 0; a < ks.size(); ++a)
            for (std::size_t c = a + 1; c < ks.size(); ++c) {
                const double lag = e.times[ks[c]] - e.times[ks[a]];
                const int bi = detail::log_bin(lag, lag_lo, lag_hi, bins);
                if (bi < 0) continue;
                const std::size_t b = path * nb + static_cast<std::size_t>(bi);
                const double w = e.weight(path, ks[c]);
                const auto u = e.field(path, ks[a]), v = e.field(path, ks[c]);
                for (std::size_t i = 0; i < e.mesh_size; ++i) {
                    ts[b] += w * std::pow(std::abs(v[i] - u[i]), p);
                    tc[b] += 1.0;
                    tl[b] += lag;
                }
            }
    });
    rep.spatial = detail::holder_regression(ss, sc, sd, e.paths, bins, p * std::min(rep.nu / 2.0, 1.0));
    rep.temporal = detail::holder_regression(ts, tc, tl, e.paths, bins, p * std::min(rep.nu / 4.0, 0.5));
    return rep;
}

struct WeakConvergenceRow {
    double t = 0.0;
    std::size_t functional = 0;
    double target = 0.0;  // ∫ φ dμ
    MomentValue mean;     // E[∫uφ dm]
    MomentValue defect;   // E[(∫uφ dm − ∫φ dμ)²]
};

struct WeakConvergenceReport {
    std::vector<WeakConvergenceRow> rows;  // times ascending within each functional
    std::vector<double> extrapolated_limit;  // per functional, intercept of the defect against t
    std::vector<double> min_ratio;           // per functional, min over successive times of defect(t_{i+1})/defect(t_i)
    bool decreasing = false;                 // every defect moment shrinks as t decreases
};

// Defects of ∫u(t)φ dm against ∫φ dμ along shifted times t (any order, all ≥ dt).
inline WeakConvergenceReport weak_time_zero_check(SolverConfig cfg, const InitialMeasure& mu,
                                                  const std::vector<std::function<double(const Point&)>>& phis,
                                                  std::vector<double> times) {
    if (phis.empty() || times.size() < 2) throw InvalidInput("solver", "need test functions and >= 2 times");
    std::sort(times.begin(), times.end());
    cfg.checkpoints = times;
    cfg.horizon = times.back();
    cfg.test_functions = phis;
    cfg.tilt_power = 0.0;
    const auto e = simulate_ensemble(cfg, mu);
    WeakConvergenceReport r;
    r.decreasing = true;
    for (std::size_t f = 0; f < phis.size(); ++f) {
        const double target = pair_with_measure(phis[f], mu);
        std::vector<double> x, y;
        double min_ratio = INFINITY;
        for (std::size_t k = 0; k < times.size(); ++k) {
            std::vector<double> vals, sq;
            for (std::size_t i = 0; i < e.paths; ++i) {
                if (!e.finite(i)) continue;
                const double v = e.functional(i, k, f);
                vals.push_back(v);
                sq.push_back((v - target) * (v - target));
            }
            const auto m = mean_estimate(vals), d = mean_estimate(sq);
            r.rows.push_back({times[k], f, target, {m.mean, m.standard_error}, {d.mean, d.standard_error}});
            x.push_back(times[k]);
            y.push_back(d.mean);
            if (k > 0) {
                // ratio of the later defect to the earlier one: > 1 means it shrinks toward t = 0
                min_ratio = std::min(min_ratio, y[k] / std::max(y[k - 1], 1e-300));
                if (!(y[k] >= y[k - 1])) r.decreasing = false;
            }
        }
        r.extrapolated_limit.push_back(linear_fit(x, y).intercept);
        r.min_ratio.push_back(min_ratio);
    }
    return r;
}

struct MomentEnvelopeReport {
    std::vector<double> times, root_second_moment, mean_field, ratio;
    ExponentialEnvelope envelope;
};

// Ê[u²]^{1/2} / J_μ(t₀ + t, x) fitted to C e^{θt} on alternate checkpoints
// and validated on the others.
inline MomentEnvelopeReport moment_envelope(const PathEnsemble& e, const InitialMeasure& mu, std::size_t probe = 0, double slack = 0.10) {
    const GalerkinScheme scheme(e.config);
    const Eigen::VectorXd at = scheme.basis().evaluate_all(e.probes.at(probe));
    MomentEnvelopeReport r;
    for (std::size_t k = 0; k < e.checkpoints(); ++k) {
        if (e.times[k] <= 0.0) continue;
        const double j = at.dot(scheme.mean_coefficients(mu, e.times[k]));
        if (!(j > 0.0)) throw PreconditionError("solver", "J_mu vanishes at the probe; the envelope ratio is undefined");
        const double m2 = e.moment(2, k, probe).mean;
        r.times.push_back(e.times[k]);
        r.root_second_moment.push_back(std::sqrt(m2));
        r.mean_field.push_back(j);
        r.ratio.push_back(std::sqrt(m2) / j);
    }
    r.envelope = fit_exponential_envelope(r.times, r.ratio, slack);
    return r;
}

struct SeriesCrosscheck {
    double mc_mean = 0.0, mc_stderr = 0.0;
    double series = 0.0, tail_bound = 0.0, quadrature_error = 0.0;
    double difference = 0.0, allowance = 0.0;  // allowance = 3·stderr + tail + quadrature error
    bool agree = false;
};

// Monte Carlo Ê[u(T,x)²] for μ = δ_{x₀} against the chaos partial sum of the
// same band-limited model, both started from the t₀-smoothed source.
inline SeriesCrosscheck series_mc_crosscheck(SolverConfig cfg, const Point& x0, const Point& x, int orders = 3, SeriesOptions opt = {}) {
    cfg.probes = {x};
    cfg.checkpoints = {cfg.horizon};
    cfg.tilt_power = 0.0;
    const auto mu = InitialMeasure::dirac(x0);
    const auto e = simulate_ensemble(cfg, mu);
    const GalerkinScheme scheme(cfg);
    const ChaosEngine engine(CovarianceKernel(scheme.basis(), cfg.noise()), scheme.mesh(), cfg.threads);
    opt.smoothing_time = cfg.smoothing_time;
    const auto s = second_moment(engine, cfg.horizon, x, x, mu, cfg.beta, orders, opt);
    SeriesCrosscheck r;
    const auto m = e.moment(2, 0, 0);
    r.mc_mean = m.mean;
    r.mc_stderr = m.standard_error;
    r.series = s.partial_sum;
    r.tail_bound = s.tail_bound;
    r.quadrature_error = s.quadrature_error;
    r.difference = std::abs(r.mc_mean - r.series);
    r.allowance = 3.0 * r.mc_stderr + r.tail_bound + r.quadrature_error;
    r.agree = r.difference <= r.allowance;
    return r;
}

// Binary trajectory dump, all fields little-endian:
//   8 bytes  magic "PAMTRAJ1"
//   u64      config hash
//   u64      mesh size N
//   u64      checkpoint count K
//   u64      path count P
//   f64 × K  shifted checkpoint times
//   f64 × P·K·N  fields, path-major, then checkpoint, then mesh node
struct TrajectoryFile {
    std::uint64_t config_hash = 0;
    std::uint64_t mesh_size = 0, checkpoints = 0, paths = 0;
    std::vector<double> times, fields;
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

}  // namespace detail

inline std::string encode_trajectories(const TrajectoryFile& t) {
    if (t.times.size() != t.checkpoints || t.fields.size() != t.paths * t.checkpoints * t.mesh_size)
        throw InvalidInput("solver", "trajectory sizes disagree with the header");
    std::string out = "PAMTRAJ1";
    for (auto v : {t.config_hash, t.mesh_size, t.checkpoints, t.paths}) detail::put_u64(out, v);
    for (const auto* vec : {&t.times, &t.fields})
        for (double d : *vec) detail::put_u64(out, std::bit_cast<std::uint64_t>(d));
    return out;
}

inline TrajectoryFile decode_trajectories(std::string_view bytes) {
    if (bytes.size() < 40 || bytes.substr(0, 8) != "PAMTRAJ1") throw InvalidInput("solver", "not a trajectory file");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    TrajectoryFile t;
    t.config_hash = detail::get_u64(p + 8);
    t.mesh_size = detail::get_u64(p + 16);
    t.checkpoints = detail::get_u64(p + 24);
    t.paths = detail::get_u64(p + 32);
    const std::uint64_t count = t.checkpoints + t.paths * t.checkpoints * t.mesh_size;
    if (bytes.size() != 40 + 8 * count) throw InvalidInput("solver", "trajectory file is truncated or oversized");
    std::vector<double> all(count);
    for (std::uint64_t i = 0; i < count; ++i) all[i] = std::bit_cast<double>(detail::get_u64(p + 40 + 8 * i));
    t.times.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(t.checkpoints));
    t.fields.assign(all.begin() + static_cast<std::ptrdiff_t>(t.checkpoints), all.end());
    return t;
}

// First measure's fields of an ensemble recorded with record_fields.
inline TrajectoryFile trajectories_of(const PathEnsemble& e, std::uint64_t config_hash) {
    if (e.fields.empty()) throw PreconditionError("solver", "fields were not recorded for this ensemble");
    TrajectoryFile t;
    t.config_hash = config_hash;
    t.mesh_size = e.mesh_size;
    t.checkpoints = e.checkpoints();
    t.paths = e.paths;
    t.times = e.times;
    for (std::size_t i = 0; i < e.paths; ++i)
        for (std::size_t k = 0; k < e.checkpoints(); ++k) {
            const auto f = e.field(i, k);
            t.fields.insert(t.fields.end(), f.begin(), f.end());
        }
    return t;
}

}  // namespace pamlab
