#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pamlab/errors.hpp"
#include "pamlab/fgeom.hpp"
#include "pamlab/measure.hpp"
#include "pamlab/noise.hpp"
#include "pamlab/numerics.hpp"
#include "pamlab/parallel.hpp"
#include "pamlab/spectral.hpp"

namespace pamlab {

// Smallest mesh resolution whose quadrature integrates triple products of
// band-limited modes exactly, so the chaos step has no aliasing.
inline int dealiased_resolution(const ManifoldModel& m, int band) {
    switch (m.kind()) {
        case ManifoldKind::circle: return std::max(4, 3 * band + 1);
        case ManifoldKind::flat_torus_2d: return std::max(4, 3 * band + 1);
        case ManifoldKind::sphere_2d: return std::max(4, (3 * band + 2) / 2 + 1);
    }
    return 4;
}

// P_t(x₀,x) P_t(x₀',x').
inline double l0(const HeatKernel& kernel, double t, const Point& x0, const Point& x, const Point& x0p, const Point& xp) {
    return kernel(t, x0, x) * kernel(t, x0p, xp);
}

// One chaos order on a time grid, in spectral coordinates: entry (a, b) of
// coefficients[i] multiplies φ_a(x) φ_b(x') at time times[i].
struct ChaosTensor {
    int order = 0;
    std::vector<double> times;
    std::vector<Eigen::MatrixXd> coefficients;

    double value(std::size_t i, const Eigen::VectorXd& phi_x, const Eigen::VectorXd& phi_xp) const {
        return phi_x.dot(coefficients[i] * phi_xp);
    }

    // Values on mesh pairs (y, y') at time index i.
    Eigen::MatrixXd mesh_values(std::size_t i, const Eigen::MatrixXd& phi) const {
        return phi * coefficients[i] * phi.transpose();
    }
};

namespace detail {

// ∫₀¹ e^{-z(1-v)} v dv type weights for linear data under exponential decay:
// ψ(z) = (1 - e^{-z}(1+z))/z² and φ₁(z) = (1 - e^{-z})/z.
inline void product_weights(double z, double& psi, double& phi1) {
    if (z < 0.01) {
        // Taylor series; the first omitted term is below 1e-15 relative.
        psi = 0.5 - z / 3.0 + z * z / 8.0 - z * z * z / 30.0 + z * z * z * z / 144.0 - std::pow(z, 5) / 840.0;
        phi1 = 1.0 - z / 2.0 + z * z / 6.0 - z * z * z / 24.0 + z * z * z * z / 120.0 - std::pow(z, 5) / 720.0;
        return;
    }
    const double e = std::exp(-z);
    psi = (1.0 - e * (1.0 + z)) / (z * z);
    phi1 = (1.0 - e) / z;
}

}  // namespace detail

// Deterministic engine for the chaos recursion
//   v_n(t, x, x') = ∫₀ᵗ ds ∬ P_{t-s}(x,z) P_{t-s}(x',z') G(z,z') v_{n-1}(s,z,z') dz dz',
// in the truncated basis. The space integral is the sandwich Ψᵀ(G ∘ ΦCΦᵀ)Ψ
// (two mesh³ products); the time integral is product integration with the
// exact heat factor and linear interpolation of the sandwich in s.
class ChaosEngine {
public:
    ChaosEngine(const CovarianceKernel& kernel, const QuadratureMesh& mesh, int threads = 1)
        : basis_(kernel.basis()), spec_(kernel.spec()), threads_(threads) {
        if (mesh.kind != basis_.model().kind()) throw InvalidInput("moments", "mesh and basis belong to different models");
        phi_ = basis_.mesh_matrix(mesh);
        const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(mesh.weights.data(), mesh.size());
        psi_ = w.asDiagonal() * phi_;
        gram_ = kernel.mesh_gram(phi_);
        const double top = gram_.cwiseAbs().maxCoeff();
        if (gram_.minCoeff() < -1e-9 * top)
            throw PreconditionError("moments", "covariance is negative on the mesh (min " + std::to_string(gram_.minCoeff()) +
                                                   "); raise rho to at least the nonnegativity threshold");
        gmax_ = gram_.maxCoeff();
        lambda_.resize(static_cast<Eigen::Index>(basis_.size()));
        for (std::size_t n = 0; n < basis_.size(); ++n) lambda_[n] = basis_.eigenvalue(n);
    }

    const SpectralBasis& basis() const { return basis_; }
    const NoiseSpec& spec() const { return spec_; }
    const Eigen::MatrixXd& phi() const { return phi_; }
    double covariance_max() const { return gmax_; }

    Eigen::VectorXd modes_at(const Point& x) const {
        Eigen::VectorXd v(static_cast<Eigen::Index>(basis_.size()));
        basis_.evaluate_all(x, v.data());
        return v;
    }

    // Heat flow e^{-Λs/2} applied to a coefficient vector.
    Eigen::VectorXd heat(const Eigen::VectorXd& c, double s) const {
        return (c.array() * (-0.5 * s * lambda_.array()).exp()).matrix();
    }

    // Order 0: (e^{-Λs/2}p)(e^{-Λs/2}q)ᵀ, the product of two heat flows.
    ChaosTensor initial(const Eigen::VectorXd& p, const Eigen::VectorXd& q, const std::vector<double>& grid) const {
        check_grid(grid);
        ChaosTensor c;
        c.order = 0;
        c.times = grid;
        c.coefficients.reserve(grid.size());
        for (double s : grid) c.coefficients.push_back(heat(p, s) * heat(q, s).transpose());
        return c;
    }

    // Ψᵀ (G ∘ Φ C Φᵀ) Ψ.
    Eigen::MatrixXd sandwich(const Eigen::MatrixXd& c) const {
        const Eigen::MatrixXd field = phi_ * c * phi_.transpose();
        return psi_.transpose() * gram_.cwiseProduct(field) * psi_;
    }

    // One application of the chaos operator on the grid of `w`.
    ChaosTensor step(const ChaosTensor& w) const {
        const std::size_t n = w.times.size();
        std::vector<Eigen::MatrixXd> b(n);
        parallel_for(n, threads_, [&](std::size_t j) { b[j] = sandwich(w.coefficients[j]); });
        const Eigen::Index m = lambda_.size();
        ChaosTensor out;
        out.order = w.order + 1;
        out.times = w.times;
        out.coefficients.assign(n, Eigen::MatrixXd::Zero(m, m));
        for (std::size_t j = 0; j + 1 < n; ++j) {
            const double h = w.times[j + 1] - w.times[j];
            const Eigen::MatrixXd& prev = out.coefficients[j];
            Eigen::MatrixXd& next = out.coefficients[j + 1];
            for (Eigen::Index bcol = 0; bcol < m; ++bcol)
                for (Eigen::Index a = 0; a < m; ++a) {
                    const double kappa = 0.5 * (lambda_[a] + lambda_[bcol]);
                    double psi, phi1;
                    detail::product_weights(kappa * h, psi, phi1);
                    next(a, bcol) = std::exp(-kappa * h) * prev(a, bcol) +
                                    h * (psi * b[j](a, bcol) + (phi1 - psi) * b[j + 1](a, bcol));
                }
        }
        return out;
    }

    // Orders 0..orders on `grid`.
    std::vector<ChaosTensor> run(const Eigen::VectorXd& p, const Eigen::VectorXd& q, const std::vector<double>& grid,
                                 int orders) const {
        if (orders < 0) throw InvalidInput("moments", "number of chaos orders must be >= 0");
        std::vector<ChaosTensor> all;
        all.push_back(initial(p, q, grid));
        for (int n = 1; n <= orders; ++n) all.push_back(step(all.back()));
        return all;
    }

private:
    static void check_grid(const std::vector<double>& grid) {
        if (grid.size() < 2 || grid.front() != 0.0) throw InvalidInput("moments", "time grid must start at 0 with >= 2 nodes");
        for (std::size_t i = 1; i < grid.size(); ++i)
            if (!(grid[i] > grid[i - 1])) throw InvalidInput("moments", "time grid must be increasing");
    }

    SpectralBasis basis_;
    NoiseSpec spec_;
    int threads_;
    Eigen::MatrixXd phi_, psi_, gram_;
    Eigen::VectorXd lambda_;
    double gmax_ = 0.0;
};

// G^ε_{t,x,y}(s,z) from d(x,z), d(z,y), d(x,y): the Gaussian bridge quotient,
// with the sharper G̃ in the denominator once d(x,y) reaches the scale D.
inline double gaussian_bridge_quotient(const GaussianComparison& g, double scale_d, double t, double s, double dxz,
                                       double dzy, double dxy) {
    if (!(s > 0.0 && s < t)) throw InvalidInput("moments", "bridge quotient needs 0 < s < t");
    const double denom = dxy < scale_d ? g.g(t, dxy) : g.g_tilde(t, dxy);
    return g.g(s, dxz) * g.g(t - s, dzy) / denom;
}

// ε_n = (1 - 1/n) ε with c_n = 2 + ε_n, the bridge quotient built from them,
// and D the unique-geodesic scale that switches the quotient's denominator.
class GaussianBoundFamily {
public:
    GaussianBoundFamily(double epsilon, int dim, double scale_d) : epsilon_(epsilon), dim_(dim), scale_d_(scale_d) {
        if (!(epsilon > 0.0)) throw InvalidInput("moments", "base epsilon must be > 0");
    }

    double epsilon() const { return epsilon_; }
    double scale() const { return scale_d_; }
    double epsilon_n(int n) const {
        if (n < 1) throw InvalidInput("moments", "family index starts at 1");
        return (1.0 - 1.0 / n) * epsilon_;
    }
    double c_n(int n) const { return 2.0 + epsilon_n(n); }
    GaussianComparison member(int n) const { return GaussianComparison(epsilon_n(n), dim_); }

    double g(int n, double t, double r) const { return member(n).g(t, r); }
    double g_tilde(int n, double t, double r) const { return member(n).g_tilde(t, r); }

    // G^n_{t,x,y}(s,z) from the three distances d(x,z), d(z,y), d(x,y).
    double quotient(int n, double t, double s, double dxz, double dzy, double dxy) const {
        return gaussian_bridge_quotient(member(n), scale_d_, t, s, dxz, dzy, dxy);
    }

    double quotient(int n, const ManifoldModel& m, double t, const Point& x, const Point& y, double s, const Point& z) const {
        return quotient(n, t, s, m.distance(x, z), m.distance(z, y), m.distance(x, y));
    }

private:
    double epsilon_;
    int dim_;
    double scale_d_;
};

// Per-order contributions β^{2n}·(value of order n), their partial sums and
// a tail estimate for the orders left out.
struct MomentSeriesResult {
    double t = 0.0;
    double beta = 0.0;
    double alpha = 0.0;
    double rho = 0.0;
    int max_order = 0;
    std::vector<double> orders;
    std::vector<double> partial_sums;
    double partial_sum = 0.0;
    double tail_bound = 0.0;          // Σ_{n>N} (β² Gmax t)^n / n! times the order-0 value
    double quadrature_error = 0.0;    // |S_J - S_{J/2}|
    double error_bar = 0.0;           // quadrature_error + tail_bound
    bool converged = false;
    std::string diagnostic;
};

struct SeriesOptions {
    int intervals = 256;        // time-grid intervals (even)
    double grading = 0.0;       // 0: pick from α and d
    double smoothing_time = 0.0;  // t₀: sources are first run through the heat flow for t₀
    double tolerance = 1e-6;    // required tail/partial
};

namespace detail {

inline double exp_tail(double x, int n) {
    // Σ_{k>n} x^k/k!, summed directly (x is small in every intended use).
    double term = 1.0, sum = 0.0;
    for (int k = 1; k <= n; ++k) term *= x / k;
    for (int k = n + 1; k < n + 200; ++k) {
        term *= x / k;
        sum += term;
        if (term < 1e-18 * sum) break;
    }
    return sum;
}

inline std::vector<double> series_at(const ChaosEngine& engine, const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                                     const Eigen::VectorXd& fx, const Eigen::VectorXd& fxp, double t, int orders,
                                     int intervals, double gamma) {
    const auto grid = graded_grid(t, intervals, gamma);
    const auto all = engine.run(p, q, grid, orders);
    std::vector<double> g;
    for (const auto& c : all) g.push_back(c.value(grid.size() - 1, fx, fxp));
    return g;
}

inline MomentSeriesResult assemble_series(const ChaosEngine& engine, const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                                          const Eigen::VectorXd& fx, const Eigen::VectorXd& fxp, double t, double beta,
                                          int orders, const SeriesOptions& opt) {
    if (!(t > 0.0)) throw InvalidInput("moments", "series time must be > 0");
    if (orders < 0) throw InvalidInput("moments", "series order must be >= 0");
    if (opt.intervals < 4 || opt.intervals % 2 != 0) throw InvalidInput("moments", "intervals must be even and >= 4");
    const int dim = engine.basis().model().dim();
    const double gamma = opt.grading > 0.0 ? opt.grading : grading_exponent(engine.spec().alpha, dim);
    const Eigen::VectorXd ps = engine.heat(p, opt.smoothing_time), qs = engine.heat(q, opt.smoothing_time);
    const auto fine = series_at(engine, ps, qs, fx, fxp, t, orders, opt.intervals, gamma);
    const auto coarse = series_at(engine, ps, qs, fx, fxp, t, orders, opt.intervals / 2, gamma);
    MomentSeriesResult r;
    r.t = t;
    r.beta = beta;
    r.alpha = engine.spec().alpha;
    r.rho = engine.spec().rho;
    r.max_order = orders;
    double b2n = 1.0, sum = 0.0, coarse_sum = 0.0;
    for (int n = 0; n <= orders; ++n) {
        r.orders.push_back(b2n * fine[n]);
        sum += b2n * fine[n];
        coarse_sum += b2n * coarse[n];
        r.partial_sums.push_back(sum);
        b2n *= beta * beta;
    }
    r.partial_sum = sum;
    r.quadrature_error = std::abs(sum - coarse_sum);
    r.tail_bound = std::abs(fine[0]) * exp_tail(beta * beta * engine.covariance_max() * t, orders);
    r.error_bar = r.quadrature_error + r.tail_bound;
    r.converged = r.tail_bound <= opt.tolerance * std::abs(sum);
    if (!r.converged)
        r.diagnostic = "tail " + std::to_string(r.tail_bound) + " exceeds tolerance; add orders or reduce beta^2 t";
    return r;
}

}  // namespace detail

// Σ_{n≤N} β^{2n} L_n(t, x₀, x, x₀', x') for point sources x₀, x₀'.
inline MomentSeriesResult k_beta_partial(const ChaosEngine& engine, double t, const Point& x, const Point& x0,
                                         const Point& xp, const Point& x0p, double beta, int orders,
                                         const SeriesOptions& opt = {}) {
    return detail::assemble_series(engine, engine.modes_at(x0), engine.modes_at(x0p), engine.modes_at(x),
                                   engine.modes_at(xp), t, beta, orders, opt);
}

// E[u(t,x) u(t,x')] = Σ_{n≥0} β^{2n} ∬ μ(dz)μ(dz') L_n(t, x, z, x', z'), whose
// n = 0 term is J_μ(t,x) J_μ(t,x'). With a smoothing time t₀ the sources are
// J_μ(t₀, ·) and t counts from t₀, matching the solver's start.
inline MomentSeriesResult second_moment(const ChaosEngine& engine, double t, const Point& x, const Point& xp,
                                        const InitialMeasure& mu, double beta, int orders, const SeriesOptions& opt = {}) {
    mu.validate();
    const Eigen::VectorXd c = mu.coefficients(engine.basis());
    return detail::assemble_series(engine, c, c, engine.modes_at(x), engine.modes_at(xp), t, beta, orders, opt);
}

// h_0 = 1, h_{n+1}(t) = ∫₀ᵗ h_n(t-s) k(s) ds on a grid. `singular_exponent`
// e ∈ (-1, 0] describes k(s) ~ s^e near 0; both halves of the convolution
// are mapped by s = (t/2)·v^{1/(1+e)} to remove the endpoint behaviour, and
// h_n is interpolated quadratically in u^{1+e}.
struct HSeries {
    std::vector<double> grid;
    std::vector<std::vector<double>> h;
};

inline HSeries h_recursion(int orders, std::vector<double> grid, const std::function<double(double)>& k,
                           double singular_exponent = 0.0, int panels = 4, int refine = 16) {
    if (orders < 0) throw InvalidInput("moments", "orders must be >= 0");
    if (panels < 1 || refine < 1) throw InvalidInput("moments", "panels and refine must be >= 1");
    if (!(singular_exponent > -1.0)) throw InvalidInput("moments", "k must be integrable at 0 (exponent > -1)");
    std::sort(grid.begin(), grid.end());
    if (grid.empty() || grid.front() < 0.0) throw InvalidInput("moments", "grid must be nonnegative");
    if (grid.front() > 0.0) grid.insert(grid.begin(), 0.0);
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    const double e = std::min(singular_exponent, 0.0);
    const double q = 1.0 / (1.0 + e);
    // Work on a refined grid, uniform in u^{1+e} inside every requested interval,
    // so the interpolated h_{n-1} is accurate; report only the requested nodes.
    const std::vector<double> requested = grid;
    std::vector<std::size_t> keep{0};
    {
        std::vector<double> fine{0.0};
        for (std::size_t i = 1; i < requested.size(); ++i) {
            const double a = std::pow(requested[i - 1], 1.0 + e), b = std::pow(requested[i], 1.0 + e);
            for (int r = 1; r <= refine; ++r)
                fine.push_back(r == refine ? requested[i] : std::pow(a + (b - a) * r / refine, q));
            keep.push_back(fine.size() - 1);
        }
        grid = std::move(fine);
    }
    std::vector<double> xi(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) xi[i] = std::pow(grid[i], 1.0 + e);
    static const GaussRule rule = gauss_legendre(24);
    HSeries out;
    out.grid = grid;
    out.h.push_back(std::vector<double>(grid.size(), 1.0));
    for (int n = 0; n < orders; ++n) {
        const auto& hn = out.h.back();
        auto h_at = [&](double u) { return interpolate_quadratic(xi, hn, std::pow(std::max(u, 0.0), 1.0 + e)); };
        std::vector<double> next(grid.size(), 0.0);
        for (std::size_t i = 1; i < grid.size(); ++i) {
            const double t = grid[i], half = 0.5 * t;
            double sum = 0.0;
            for (int p = 0; p < panels; ++p) {
                const double v0 = static_cast<double>(p) / panels, v1 = static_cast<double>(p + 1) / panels;
                sum += integrate_gauss(rule, v0, v1, [&](double v) {
                    const double s = half * std::pow(v, q);
                    const double jac = half * q * std::pow(v, q - 1.0);
                    // First half: singular k near s = 0. Second half: u = t - s near 0.
                    return jac * (h_at(t - s) * k(s) + h_at(s) * k(t - s));
                });
            }
            next[i] = sum;
        }
        out.h.push_back(std::move(next));
    }
    for (auto& row : out.h) {
        std::vector<double> picked(keep.size());
        for (std::size_t i = 0; i < keep.size(); ++i) picked[i] = row[keep[i]];
        row = std::move(picked);
    }
    out.grid = requested;
    return out;
}

// H_λ(t) = Σ λ^{2n} h_n(t) and its exponential envelope C e^{θt}.
struct HLambdaEnvelope {
    double lambda = 0.0;
    std::vector<double> grid;
    std::vector<double> values;
    ExponentialEnvelope envelope;
};

inline HLambdaEnvelope h_lambda_envelope(double lambda, const HSeries& series, double slack = 0.10,
                                         double stabilization = 1e-6) {
    HLambdaEnvelope out;
    out.lambda = lambda;
    const std::size_t orders = series.h.size();
    for (std::size_t i = 0; i < series.grid.size(); ++i) {
        if (series.grid[i] <= 0.0) continue;
        double sum = 0.0, last = 0.0, l2n = 1.0;
        for (std::size_t n = 0; n < orders; ++n) {
            last = l2n * series.h[n][i];
            sum += last;
            l2n *= lambda * lambda;
        }
        if (orders > 1 && last > stabilization * sum)
            throw NonConvergenceError("moments", "H_lambda partial sum has not stabilized at t=" +
                                                     std::to_string(series.grid[i]) + "; add orders");
        out.grid.push_back(series.grid[i]);
        out.values.push_back(sum);
    }
    out.envelope = fit_exponential_envelope(out.grid, out.values, slack);
    return out;
}

}  // namespace pamlab
