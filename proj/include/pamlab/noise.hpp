#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pamlab/errors.hpp"
#include "pamlab/manifold.hpp"
#include "pamlab/numerics.hpp"
#include "pamlab/rng.hpp"
#include "pamlab/spectral.hpp"

namespace pamlab {

// Spatial colour α and constant-mode weight ρ of the noise.
struct NoiseSpec {
    double alpha = 1.0;
    double rho = 0.0;

    // α - (d-2)/2; positive exactly when Dalang's condition holds.
    double dalang_margin(int dim) const { return alpha - (dim - 2) / 2.0; }
};

struct DalangCheck {
    bool holds = false;
    double margin = 0.0;
};

inline DalangCheck check_dalang(const ManifoldModel& model, const NoiseSpec& spec) {
    const double margin = spec.dalang_margin(model.dim());
    return {margin > 0.0, margin};
}

// Spectral weight of a mode: ρ on the constant mode, λ^{-α} otherwise.
inline double noise_weight(const NoiseSpec& spec, double lambda) {
    return lambda == 0.0 ? spec.rho : std::pow(lambda, -spec.alpha);
}

// G_{α,ρ}(x,y) = ρ/m₀ + Σ_{n≥1} φ_n(x)φ_n(y) λ_n^{-α}, truncated at the basis band.
class CovarianceKernel {
public:
    CovarianceKernel(SpectralBasis basis, NoiseSpec spec) : basis_(std::move(basis)), spec_(spec) {
        if (!(spec.alpha > 0.0)) throw InvalidInput("noise", "alpha must be > 0");
        if (spec.rho < 0.0) throw InvalidInput("noise", "rho must be >= 0");
    }

    const SpectralBasis& basis() const { return basis_; }
    const NoiseSpec& spec() const { return spec_; }

    double weight(double lambda) const { return noise_weight(spec_, lambda); }

    // Truncated sum off the diagonal; on the diagonal the truncated sum plus
    // the summed spectral tail, which exists only for α > d/2.
    double evaluate(const Point& x, const Point& y) const { return spec_.rho / basis_.model().volume() + evaluate_alpha_part(x, y); }

    double evaluate_alpha_part(const Point& x, const Point& y) const {
        const double in_band = basis_.zonal_sum([this](double l) { return l == 0.0 ? 0.0 : std::pow(l, -spec_.alpha); }, x, y);
        if (basis_.model().distance(x, y) > 1e-12) return in_band;
        return in_band + diagonal_tail();
    }

    // Σ beyond the band of λ^{-α}·(Σ_{eigenspace} φ²). Shells are summed
    // explicitly for a long stretch, then the remainder is integrated.
    double diagonal_tail() const {
        const ManifoldModel& m = basis_.model();
        const double a = spec_.alpha;
        if (a <= m.dim() / 2.0)
            throw InvalidInput("noise", "covariance diagonal diverges for alpha <= d/2 (alpha=" + std::to_string(a) +
                                            ", d=" + std::to_string(m.dim()) + "); refusing on-diagonal evaluation");
        const long K = basis_.band();
        std::vector<double> terms;
        switch (m.kind()) {
            case ManifoldKind::circle: {
                const long stop = K + 200000;
                for (long k = K + 1; k <= stop; ++k) terms.push_back(std::pow(static_cast<double>(k), -2.0 * a));
                const double x = stop + 0.5;
                return (pairwise_sum(terms) + std::pow(x, 1.0 - 2.0 * a) / (2.0 * a - 1.0)) / std::numbers::pi;
            }
            case ManifoldKind::sphere_2d: {
                const long stop = K + 200000;
                for (long l = K + 1; l <= stop; ++l) {
                    const double ll = static_cast<double>(l);
                    terms.push_back((2.0 * ll + 1.0) * std::pow(ll * (ll + 1.0), -a));
                }
                const double x = stop + 0.5;
                return (pairwise_sum(terms) + std::pow(x * (x + 1.0), 1.0 - a) / (a - 1.0)) / (4.0 * std::numbers::pi);
            }
            case ManifoldKind::flat_torus_2d: {
                const double four_pi2 = 4.0 * std::numbers::pi * std::numbers::pi;
                const long R = K + 400;
                for (long j = -R; j <= R; ++j)
                    for (long k = -R; k <= R; ++k) {
                        const long r2 = j * j + k * k;
                        if (r2 > K * K && r2 <= R * R) terms.push_back(std::pow(four_pi2 * r2, -a));
                    }
                const double rr = static_cast<double>(R);
                return pairwise_sum(terms) +
                       2.0 * std::numbers::pi * std::pow(four_pi2, -a) * std::pow(rr, 2.0 - 2.0 * a) / (2.0 * a - 2.0);
            }
        }
        return 0.0;
    }

    // Φ diag(w) Φᵀ on a mesh; the constant-mode weight is ρ or 0.
    Eigen::MatrixXd mesh_gram(const Eigen::MatrixXd& phi, bool include_rho = true) const {
        Eigen::VectorXd w(basis_.size());
        for (std::size_t n = 0; n < basis_.size(); ++n) {
            const double l = basis_.eigenvalue(n);
            w[n] = l == 0.0 ? (include_rho ? spec_.rho : 0.0) : std::pow(l, -spec_.alpha);
        }
        const Eigen::MatrixXd g = phi * w.asDiagonal() * phi.transpose();
        // GEMM rounding is not symmetric; average to make it exact.
        return 0.5 * (g + g.transpose());
    }

    // ⟨f, g⟩_{α,ρ} = ρ a₀b₀ + Σ a_n b_n λ_n^{-α} for spectral coefficient vectors.
    double inner_product(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
        double s = 0.0;
        for (std::size_t n = 0; n < basis_.size(); ++n) s += weight(basis_.eigenvalue(n)) * a[n] * b[n];
        return s;
    }

private:
    SpectralBasis basis_;
    NoiseSpec spec_;
};

inline double covariance(const CovarianceKernel& kernel, const Point& x, const Point& y) { return kernel.evaluate(x, y); }

// Mesh diagnostics of the truncated covariance.
struct MeshCovarianceReport {
    double max_row_sum_alpha_part = 0.0;  // max_i |Σ_j w_j G_α(x_i, x_j)|
    double min_alpha_part = 0.0;          // min over mesh pairs of G_α
    double min_eigenvalue = 0.0;          // of W^{1/2} G_{α,ρ} W^{1/2}, relative to the largest
    double asymmetry = 0.0;
};

inline MeshCovarianceReport inspect_mesh_covariance(const CovarianceKernel& kernel, const QuadratureMesh& mesh,
                                                    bool with_spectrum = true) {
    const Eigen::MatrixXd phi = kernel.basis().mesh_matrix(mesh);
    const Eigen::MatrixXd g_alpha = kernel.mesh_gram(phi, false);
    const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(mesh.weights.data(), mesh.size());
    MeshCovarianceReport rep;
    rep.max_row_sum_alpha_part = (g_alpha * w).cwiseAbs().maxCoeff();
    rep.min_alpha_part = g_alpha.minCoeff();
    const Eigen::MatrixXd full = kernel.mesh_gram(phi, true);
    rep.asymmetry = (full - full.transpose()).cwiseAbs().maxCoeff();
    if (with_spectrum) {
        const Eigen::VectorXd sw = w.cwiseSqrt();
        const Eigen::MatrixXd scaled = sw.asDiagonal() * full * sw.asDiagonal();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scaled, Eigen::EigenvaluesOnly);
        const double top = std::max(eig.eigenvalues().maxCoeff(), 1e-300);
        rep.min_eigenvalue = eig.eigenvalues().minCoeff() / top;
    }
    return rep;
}

// ρ* = m₀·max(0, -min over mesh pairs of the truncated G_α): the smallest
// constant-mode weight making G_{α,ρ} nonnegative on the mesh.
// Uniform circle and torus meshes are invariant under their own translations,
// so one row of pairs covers every displacement; the sphere needs the full Gram.
inline double rho_nonneg_threshold(const CovarianceKernel& kernel, const QuadratureMesh& mesh) {
    const auto& basis = kernel.basis();
    double lowest = INFINITY;
    if (mesh.kind == ManifoldKind::sphere_2d) {
        lowest = kernel.mesh_gram(basis.mesh_matrix(mesh), false).minCoeff();
    } else {
        const double a = kernel.spec().alpha;
        for (std::size_t j = 1; j < mesh.size(); ++j)
            lowest = std::min(lowest, basis.zonal_sum([a](double l) { return l == 0.0 ? 0.0 : std::pow(l, -a); },
                                                      mesh.points[0], mesh.points[j]));
    }
    return basis.model().volume() * std::max(0.0, -lowest);
}

inline double first_nonzero_eigenvalue(const ManifoldModel& m) {
    switch (m.kind()) {
        case ManifoldKind::circle: return 1.0;
        case ManifoldKind::flat_torus_2d: return 4.0 * std::numbers::pi * std::numbers::pi;
        case ManifoldKind::sphere_2d: return 2.0;
    }
    return 1.0;
}

namespace detail {

// Heat kernel of ½ d²/du² on R/Z.
inline double wrapped_gaussian_unit(double t, double u) {
    const double c = u - std::floor(u + 0.5);
    const int reach = static_cast<int>(std::ceil(std::sqrt(2.0 * t * 50.0))) + 1;
    double s = 0.0;
    for (int j = -reach; j <= reach; ++j) s += std::exp(-(c + j) * (c + j) / (2.0 * t));
    return s / std::sqrt(2.0 * std::numbers::pi * t);
}

// Composite Gauss–Legendre in u = ln t over [ln a, ln b].
template <class Fn>
double integrate_log_time(double a, double b, int panels, Fn&& f) {
    static const GaussRule rule = gauss_legendre(12);
    const double la = std::log(a), lb = std::log(b);
    double s = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double u0 = la + (lb - la) * p / panels, u1 = la + (lb - la) * (p + 1) / panels;
        s += integrate_gauss(rule, u0, u1, [&](double u) {
            const double t = std::exp(u);
            return t * f(t);
        });
    }
    return s;
}

}  // namespace detail

// Off-diagonal G_α(x,y) resolved to high accuracy for any α > 0, through
// G_α = 2^{-α}/Γ(α) ∫ t^{α-1}(P_t(x,y) - 1/m₀) dt. Small times use image sums
// (circle, torus) or are negligible (sphere, split chosen from d(x,y));
// large times use rapidly converging spectral sums.
inline double riesz_kernel_value(const ManifoldModel& m, double alpha, const Point& x, const Point& y) {
    const double r = m.distance(x, y);
    if (!(r > 0.0)) throw InvalidInput("noise", "resolved covariance is for distinct points");
    const double inv_m0 = 1.0 / m.volume();
    double split = 0.5, small = 0.0;
    switch (m.kind()) {
        case ManifoldKind::circle: {
            split = 0.5;
            const double lo = std::max(1e-300, r * r / 2000.0);
            if (lo < split)
                small = detail::integrate_log_time(lo, split, 40, [&](double t) {
                    return std::pow(t, alpha - 1.0) * wrapped_gaussian(t, y.coords[0] - x.coords[0]);
                });
            break;
        }
        case ManifoldKind::flat_torus_2d: {
            split = 0.02;
            const double lo = std::max(1e-300, r * r / 2000.0);
            if (lo < split)
                small = detail::integrate_log_time(lo, split, 40, [&](double t) {
                    return std::pow(t, alpha - 1.0) * detail::wrapped_gaussian_unit(t, y.coords[0] - x.coords[0]) *
                           detail::wrapped_gaussian_unit(t, y.coords[1] - x.coords[1]);
                });
            break;
        }
        case ManifoldKind::sphere_2d:
            // P_t(x,y) is below e^{-40} relative to its peak for t < r²/80.
            split = std::min(0.5, r * r / 80.0);
            break;
    }
    small -= std::pow(split, alpha) / alpha * inv_m0;
    // Band large enough that e^{-λ split / 2} is negligible.
    int band = 1;
    while (true) {
        const ShellSeries probe{m, band};
        if (probe.tail_sum([&](double l) { return std::exp(-0.5 * l * split); }) < 1e-13) break;
        band = band < 16 ? band + 1 : band + band / 4;
    }
    const ShellSeries basis{m, band};
    const double upper = 80.0 / first_nonzero_eigenvalue(m);
    double large = 0.0;
    if (upper > split)
        large = detail::integrate_log_time(split, upper, 40, [&](double t) {
            const double pt = basis.zonal_sum([t](double l) { return std::exp(-0.5 * l * t); }, x, y);
            return std::pow(t, alpha - 1.0) * (pt - inv_m0);
        });
    return std::pow(2.0, -alpha) / std::tgamma(alpha) * (small + large);
}

// Heat-integral representation (1/Γ(α)) ∫ t^{α-1}(P_t - 1/m₀) dt evaluated
// with the truncated kernel of `basis`, by quadrature in time. With the ½Δ
// heat semigroup it equals 2^α times the spectral G_α.
inline double heat_integral_covariance(const SpectralBasis& basis, double alpha, const Point& x, const Point& y) {
    const double inv_m0 = 1.0 / basis.model().volume();
    const double lambda1 = basis.shells().size() > 1 ? basis.shells()[1].eigenvalue : 1.0;
    const double lambda_max = basis.shells().back().eigenvalue;
    const double lo = 1e-6 / lambda_max, hi = 90.0 / lambda1;
    auto integrand = [&](double t) {
        const double pt = basis.zonal_sum([t](double l) { return std::exp(-0.5 * l * t); }, x, y);
        return std::pow(t, alpha - 1.0) * (pt - inv_m0);
    };
    // Below `lo` the truncated kernel is constant to 1e-6 relative; integrate it exactly.
    const double head = integrand(lo) * lo / alpha;
    return (head + detail::integrate_log_time(lo, hi, 120, integrand)) / std::tgamma(alpha);
}

// Envelope of |G_α| at distance r: r^{2α-d} (α < d/2), 1 + max(0, -ln r)
// (α = d/2), 1 (α > d/2).
inline double riesz_envelope(double alpha, int dim, double r) {
    const double half = dim / 2.0;
    if (std::abs(alpha - half) < 1e-12) return 1.0 + std::max(0.0, -std::log(r));
    if (alpha < half) return std::pow(r, 2.0 * alpha - dim);
    return 1.0;
}

struct RieszBoundReport {
    std::vector<double> distances;
    std::vector<double> values;  // |G_α| at each distance
    EnvelopeReport envelope;
};

// Fits |G_α(x, y)| ≤ C·envelope(d(x,y)) over pairs at the given distances
// (alternating fit/validate) using the resolved kernel values.
inline RieszBoundReport verify_riesz_bound(const ManifoldModel& m, double alpha, const Point& base,
                                           const std::vector<double>& distances, double slack = 0.10) {
    RieszBoundReport rep;
    std::vector<EnvelopeSample> samples;
    for (double r : distances) {
        if (!(r > 0.0 && r < m.diameter())) throw InvalidInput("noise", "Riesz sweep distances must lie in (0, D_M)");
        const Point y = m.exponential_map(base, 0.3, r);
        const double v = std::abs(riesz_kernel_value(m, alpha, base, y));
        rep.distances.push_back(r);
        rep.values.push_back(v);
        samples.push_back({v, riesz_envelope(alpha, m.dim(), r)});
    }
    const auto [fit, val] = split_alternating(samples);
    rep.envelope = fit_validate(fit, val, slack);
    return rep;
}

// Noise increments over a time step dt in spectral coordinates: coefficient
// n is σ_n ξ_n with σ_0 = √(ρ dt) and σ_n = √(dt λ_n^{-α}).
class NoiseSampler {
public:
    NoiseSampler(const SpectralBasis& basis, const NoiseSpec& spec, double dt) : dt_(dt) {
        if (!(dt > 0.0)) throw InvalidInput("noise", "time step must be > 0");
        sigma_.resize(static_cast<Eigen::Index>(basis.size()));
        for (std::size_t n = 0; n < basis.size(); ++n) sigma_[n] = std::sqrt(dt * noise_weight(spec, basis.eigenvalue(n)));
    }

    const Eigen::VectorXd& sigma() const { return sigma_; }
    double dt() const { return dt_; }

    void draw(RandomStream& rng, Eigen::VectorXd& coeffs) const {
        coeffs.resize(sigma_.size());
        for (Eigen::Index n = 0; n < sigma_.size(); ++n) coeffs[n] = sigma_[n] * rng.normal();
    }

private:
    double dt_;
    Eigen::VectorXd sigma_;
};

// ΔW on the mesh: Φ (σ ∘ ξ).
inline Eigen::VectorXd sample_increment(const SpectralBasis& basis, const NoiseSpec& spec, double dt,
                                        const Eigen::MatrixXd& phi, RandomStream& rng) {
    const NoiseSampler sampler(basis, spec, dt);
    Eigen::VectorXd coeffs;
    sampler.draw(rng, coeffs);
    return phi * coeffs;
}

}  // namespace pamlab
