#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pamlab/errors.hpp"
#include "pamlab/manifold.hpp"
#include "pamlab/numerics.hpp"

namespace pamlab {

// One eigenfunction of -Δ. Labels per model:
//   circle: (k, 0) for cos(kθ), (k, 1) for sin(kθ)
//   torus:  first/second factor as 2·frequency + (0 cos | 1 sin)
//   sphere: (ℓ, m) with m in [-ℓ, ℓ]
struct Mode {
    double eigenvalue = 0.0;
    int shell = 0;  // k, j²+k², or ℓ
    int first = 0;
    int second = 0;
};

// A distinct eigenvalue inside the band together with the value of
// Σ φ_n(x)² over its eigenspace (constant in x on these homogeneous models).
struct Shell {
    double eigenvalue = 0.0;
    int label = 0;
    int multiplicity = 0;
    double diagonal = 0.0;
};

// Zonal (addition-theorem) sums and shell enumeration for a band limit,
// without materializing the individual modes.
struct ShellSeries {
    ManifoldModel model;
    int band;

    // Σ_n w(λ_n) φ_n(x) φ_n(y) through the addition theorem of each model.
    template <class Weight>
    double zonal_sum(Weight&& w, const Point& x, const Point& y) const {
        model.check(x);
        model.check(y);
        switch (model.kind()) {
            case ManifoldKind::circle: {
                const double delta = y.coords[0] - x.coords[0];
                const double c1 = std::cos(delta);
                double prev = 1.0, cur = c1;
                double sum = w(0.0) / (2.0 * std::numbers::pi);
                double inner = 0.0;
                for (int k = 1; k <= band; ++k) {
                    inner += w(static_cast<double>(k) * k) * cur;
                    const double next = 2.0 * c1 * cur - prev;
                    prev = cur;
                    cur = next;
                }
                return sum + inner / std::numbers::pi;
            }
            case ManifoldKind::flat_torus_2d: {
                const double du = y.coords[0] - x.coords[0], dv = y.coords[1] - x.coords[1];
                std::vector<double> cu(band + 1), cv(band + 1);
                for (int j = 0; j <= band; ++j) {
                    cu[j] = std::cos(2.0 * std::numbers::pi * j * du);
                    cv[j] = std::cos(2.0 * std::numbers::pi * j * dv);
                }
                const double four_pi2 = 4.0 * std::numbers::pi * std::numbers::pi;
                double sum = 0.0;
                for (int j = 0; j <= band; ++j) {
                    const double mj = j == 0 ? 1.0 : 2.0;
                    for (int k = 0; j * j + k * k <= band * band; ++k) {
                        const double mk = k == 0 ? 1.0 : 2.0;
                        sum += mj * mk * w(four_pi2 * (j * j + k * k)) * cu[j] * cv[k];
                    }
                }
                return sum;
            }
            case ManifoldKind::sphere_2d: {
                const double c = std::clamp(dot(model.embed(x), model.embed(y)), -1.0, 1.0);
                double p0 = 1.0, p1 = c;
                double sum = w(0.0) / (4.0 * std::numbers::pi);
                if (band >= 1) sum += w(2.0) * 3.0 / (4.0 * std::numbers::pi) * p1;
                for (int l = 2; l <= band; ++l) {
                    const double p2 = ((2.0 * l - 1.0) * c * p1 - (l - 1.0) * p0) / l;
                    p0 = p1;
                    p1 = p2;
                    sum += w(static_cast<double>(l) * (l + 1)) * (2.0 * l + 1.0) / (4.0 * std::numbers::pi) * p1;
                }
                return sum;
            }
        }
        return 0.0;
    }

    // Enumerates the shells beyond the band in increasing eigenvalue order,
    // calling visit(eigenvalue, diagonal) until it returns false.
    template <class Visit>
    void for_each_shell_beyond(Visit&& visit) const {
        switch (model.kind()) {
            case ManifoldKind::circle:
                for (long k = band + 1;; ++k)
                    if (!visit(static_cast<double>(k) * k, 1.0 / std::numbers::pi)) return;
            case ManifoldKind::sphere_2d:
                for (long l = band + 1;; ++l)
                    if (!visit(static_cast<double>(l) * (l + 1), (2.0 * l + 1.0) / (4.0 * std::numbers::pi))) return;
            case ManifoldKind::flat_torus_2d: {
                const double four_pi2 = 4.0 * std::numbers::pi * std::numbers::pi;
                for (long r2 = static_cast<long>(band) * band + 1;; ++r2) {
                    const long count = lattice_count(r2);
                    if (count == 0) continue;
                    if (!visit(four_pi2 * r2, static_cast<double>(count))) return;
                }
            }
        }
    }

    // Σ beyond the band of w(λ)·diagonal for a rapidly decaying weight.
    // Enumeration stops once a shell contributes less than `floor`.
    template <class Weight>
    double tail_sum(Weight&& w, double floor = 1e-20) const {
        double sum = 0.0;
        int small = 0;
        for_each_shell_beyond([&](double lambda, double diag) {
            const double term = w(lambda) * diag;
            sum += term;
            small = term < floor ? small + 1 : 0;
            return small < 4;
        });
        return sum;
    }

    // Number of (j, k) in Z² with j² + k² = r2.
    static long lattice_count(long r2) {
        long count = 0;
        for (long j = 0; j * j <= r2; ++j) {
            const long rest = r2 - j * j;
            const long k = std::lround(std::sqrt(static_cast<double>(rest)));
            if (k * k != rest) continue;
            count += (j == 0 ? 1 : 2) * (k == 0 ? 1 : 2);
        }
        return count;
    }

};

// Eigenbasis of -Δ truncated at a band limit: frequency K on the circle,
// lattice radius K (j²+k² ≤ K²) on the torus, degree L on the sphere.
// Truncations never split an eigenspace.
class SpectralBasis {
public:
    SpectralBasis(ManifoldModel model, int band) : model_(model), band_(band), series_{model, band} {
        if (band < 1) throw InvalidInput("spectral", "band limit must be >= 1");
        build();
    }

    const ManifoldModel& model() const { return model_; }
    int band() const { return band_; }
    std::size_t size() const { return modes_.size(); }
    const Mode& mode(std::size_t n) const { return modes_[n]; }
    double eigenvalue(std::size_t n) const { return modes_[n].eigenvalue; }
    const std::vector<Shell>& shells() const { return shells_; }
    std::size_t shell_of_mode(std::size_t n) const { return shell_of_mode_[n]; }

    Eigen::VectorXd eigenvalues() const {
        Eigen::VectorXd v(size());
        for (std::size_t n = 0; n < size(); ++n) v[n] = modes_[n].eigenvalue;
        return v;
    }

    // Values of every φ_n at p, in mode order.
    void evaluate_all(const Point& p, double* out) const {
        model_.check(p);
        switch (model_.kind()) {
            case ManifoldKind::circle: {
                const double theta = p.coords[0];
                out[0] = 1.0 / std::sqrt(2.0 * std::numbers::pi);
                const double s = 1.0 / std::sqrt(std::numbers::pi);
                for (int k = 1; k <= band_; ++k) {
                    out[2 * k - 1] = s * std::cos(k * theta);
                    out[2 * k] = s * std::sin(k * theta);
                }
                break;
            }
            case ManifoldKind::flat_torus_2d: {
                std::vector<double> fu(2 * band_ + 2), fv(2 * band_ + 2);
                fourier_factors(p.coords[0], fu);
                fourier_factors(p.coords[1], fv);
                for (std::size_t n = 0; n < modes_.size(); ++n) out[n] = fu[modes_[n].first] * fv[modes_[n].second];
                break;
            }
            case ManifoldKind::sphere_2d:
                spherical_harmonics(p.coords[0], p.coords[1], out);
                break;
        }
    }

    Eigen::VectorXd evaluate_all(const Point& p) const {
        Eigen::VectorXd v(size());
        evaluate_all(p, v.data());
        return v;
    }

    double evaluate(std::size_t n, const Point& p) const { return evaluate_all(p)[static_cast<Eigen::Index>(n)]; }

    // Φ with Φ(i, n) = φ_n(x_i).
    Eigen::MatrixXd mesh_matrix(const QuadratureMesh& mesh) const {
        Eigen::MatrixXd phi(mesh.size(), size());
        Eigen::VectorXd row(size());
        for (std::size_t i = 0; i < mesh.size(); ++i) {
            evaluate_all(mesh.points[i], row.data());
            phi.row(static_cast<Eigen::Index>(i)) = row.transpose();
        }
        return phi;
    }

    // Largest |Φᵀ W Φ - I| entry: zero (to roundoff) when the mesh resolves the band.
    double gram_defect(const QuadratureMesh& mesh) const {
        const Eigen::MatrixXd phi = mesh_matrix(mesh);
        const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(mesh.weights.data(), mesh.size());
        const Eigen::MatrixXd gram = phi.transpose() * w.asDiagonal() * phi;
        return (gram - Eigen::MatrixXd::Identity(size(), size())).cwiseAbs().maxCoeff();
    }

    const ShellSeries& series() const { return series_; }

    template <class Weight>
    double zonal_sum(Weight&& w, const Point& x, const Point& y) const {
        return series_.zonal_sum(std::forward<Weight>(w), x, y);
    }

    template <class Weight>
    double tail_sum(Weight&& w, double floor = 1e-20) const {
        return series_.tail_sum(std::forward<Weight>(w), floor);
    }

    // Σ over in-band shells of w(λ)·diagonal: the zonal sum at x = y.
    template <class Weight>
    double diagonal_sum(Weight&& w) const {
        double s = 0.0;
        for (const Shell& sh : shells_) s += w(sh.eigenvalue) * sh.diagonal;
        return s;
    }

private:
    void build() {
        switch (model_.kind()) {
            case ManifoldKind::circle:
                modes_.push_back(Mode{0.0, 0, 0, 0});
                for (int k = 1; k <= band_; ++k) {
                    modes_.push_back(Mode{static_cast<double>(k) * k, k, k, 0});
                    modes_.push_back(Mode{static_cast<double>(k) * k, k, k, 1});
                }
                break;
            case ManifoldKind::flat_torus_2d: {
                const double four_pi2 = 4.0 * std::numbers::pi * std::numbers::pi;
                std::vector<std::pair<int, int>> freqs;
                for (int j = 0; j <= band_; ++j)
                    for (int k = 0; j * j + k * k <= band_ * band_; ++k) freqs.emplace_back(j, k);
                std::stable_sort(freqs.begin(), freqs.end(), [](auto a, auto b) {
                    return a.first * a.first + a.second * a.second < b.first * b.first + b.second * b.second;
                });
                for (auto [j, k] : freqs) {
                    const int r2 = j * j + k * k;
                    for (int cu = 0; cu < (j == 0 ? 1 : 2); ++cu)
                        for (int cv = 0; cv < (k == 0 ? 1 : 2); ++cv)
                            modes_.push_back(Mode{four_pi2 * r2, r2, 2 * j + cu, 2 * k + cv});
                }
                break;
            }
            case ManifoldKind::sphere_2d:
                for (int l = 0; l <= band_; ++l)
                    for (int m = -l; m <= l; ++m) modes_.push_back(Mode{static_cast<double>(l) * (l + 1), l, l, m});
                break;
        }
        for (std::size_t n = 0; n < modes_.size(); ++n) {
            if (shells_.empty() || shells_.back().label != modes_[n].shell) {
                shells_.push_back(Shell{modes_[n].eigenvalue, modes_[n].shell, 0, 0.0});
            }
            shells_.back().multiplicity += 1;
            shell_of_mode_.push_back(shells_.size() - 1);
        }
        for (Shell& sh : shells_) {
            switch (model_.kind()) {
                case ManifoldKind::circle:
                    sh.diagonal = sh.label == 0 ? 1.0 / (2.0 * std::numbers::pi) : 1.0 / std::numbers::pi;
                    break;
                case ManifoldKind::flat_torus_2d:
                    sh.diagonal = static_cast<double>(sh.multiplicity);
                    break;
                case ManifoldKind::sphere_2d:
                    sh.diagonal = (2.0 * sh.label + 1.0) / (4.0 * std::numbers::pi);
                    break;
            }
        }
    }

    // out[2j] = √2 cos(2πju), out[2j+1] = √2 sin(2πju), out[0] = 1.
    void fourier_factors(double u, std::vector<double>& out) const {
        out[0] = 1.0;
        out[1] = 0.0;
        for (int j = 1; j <= band_; ++j) {
            out[2 * j] = std::numbers::sqrt2 * std::cos(2.0 * std::numbers::pi * j * u);
            out[2 * j + 1] = std::numbers::sqrt2 * std::sin(2.0 * std::numbers::pi * j * u);
        }
    }

    // Real orthonormal spherical harmonics from fully normalized associated
    // Legendre functions; mode order is ℓ ascending, m = -ℓ..ℓ.
    void spherical_harmonics(double colat, double lon, double* out) const {
        const int L = band_;
        const double x = std::cos(colat), s = std::sin(colat);
        // p[m][ℓ - m] holds the normalized P_ℓ^m(x).
        std::vector<std::vector<double>> p(L + 1);
        double pmm = std::sqrt(1.0 / (4.0 * std::numbers::pi));
        for (int m = 0; m <= L; ++m) {
            if (m > 0) pmm *= std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * s;
            auto& col = p[m];
            col.assign(L - m + 1, 0.0);
            col[0] = pmm;
            if (m + 1 <= L) col[1] = std::sqrt(2.0 * m + 3.0) * x * pmm;
            for (int l = m + 2; l <= L; ++l) {
                const double a = std::sqrt((4.0 * l * l - 1.0) / (static_cast<double>(l) * l - static_cast<double>(m) * m));
                const double b = std::sqrt(((l - 1.0) * (l - 1.0) - static_cast<double>(m) * m) /
                                           (4.0 * (l - 1.0) * (l - 1.0) - 1.0));
                col[l - m] = a * (x * col[l - m - 1] - b * col[l - m - 2]);
            }
        }
        std::size_t n = 0;
        for (int l = 0; l <= L; ++l) {
            for (int m = -l; m <= l; ++m, ++n) {
                const int am = std::abs(m);
                const double base = p[am][l - am];
                if (m == 0)
                    out[n] = base;
                else if (m > 0)
                    out[n] = std::numbers::sqrt2 * base * std::cos(m * lon);
                else
                    out[n] = std::numbers::sqrt2 * base * std::sin(am * lon);
            }
        }
    }

    ManifoldModel model_;
    int band_;
    std::vector<Mode> modes_;
    std::vector<Shell> shells_;
    std::vector<std::size_t> shell_of_mode_;
    ShellSeries series_;
};

inline SpectralBasis build_basis(const ManifoldModel& model, int band) { return SpectralBasis(model, band); }

// Σ_j (2πt)^{-1/2} exp(-(θ + 2πj)²/(2t)): heat kernel of ½ d²/dθ² on the circle.
inline double wrapped_gaussian(double t, double theta) {
    const double two_pi = 2.0 * std::numbers::pi;
    const double centred = theta - two_pi * std::floor((theta + std::numbers::pi) / two_pi);
    const int reach = static_cast<int>(std::ceil(std::sqrt(2.0 * t * 50.0) / two_pi)) + 1;
    double sum = 0.0;
    for (int j = -reach; j <= reach; ++j) {
        const double r = centred + two_pi * j;
        sum += std::exp(-r * r / (2.0 * t));
    }
    return sum / std::sqrt(two_pi * t);
}

// Transition density of Brownian motion with generator ½Δ:
// P_t(x,y) = Σ e^{-λ_n t/2} φ_n(x) φ_n(y).
class HeatKernel {
public:
    explicit HeatKernel(SpectralBasis basis, double tolerance = 1e-10)
        : basis_(std::move(basis)), tolerance_(tolerance) {}

    const SpectralBasis& basis() const { return basis_; }
    double tolerance() const { return tolerance_; }

    // Truncation tail Σ_{beyond band} e^{-λt/2} sup|φ|² summed over shells.
    double tail_bound(double t) const {
        return basis_.tail_sum([t](double lambda) { return std::exp(-0.5 * lambda * t); });
    }

    // Smallest band whose truncation tail at time t is below `tol`.
    static int required_band(const ManifoldModel& model, double t, double tol) {
        int band = 1;
        while (ShellSeries{model, band}.tail_sum([t](double l) { return std::exp(-0.5 * l * t); }) >= tol) {
            band = band < 16 ? band + 1 : band + band / 8;
            if (band > 100000) break;
        }
        return band;
    }

    bool uses_image_sum(double t) const { return basis_.model().kind() == ManifoldKind::circle && t < 0.01; }

    double evaluate(double t, const Point& x, const Point& y, bool clamp = false) const {
        if (!(t > 0.0)) throw InvalidInput("spectral", "heat kernel needs t > 0");
        double value;
        if (uses_image_sum(t)) {
            basis_.model().check(x);
            basis_.model().check(y);
            value = wrapped_gaussian(t, y.coords[0] - x.coords[0]);
        } else {
            const double tail = tail_bound(t);
            if (tail > tolerance_) {
                const int needed = required_band(basis_.model(), t, tolerance_);
                throw TruncationError("heat kernel truncation tail " + std::to_string(tail) + " at t=" + std::to_string(t) +
                                          " exceeds tolerance; band " + std::to_string(needed) + " required",
                                      needed);
            }
            value = basis_.zonal_sum([t](double lambda) { return std::exp(-0.5 * lambda * t); }, x, y);
        }
        return clamp ? std::max(value, 0.0) : value;
    }

    double operator()(double t, const Point& x, const Point& y) const { return evaluate(t, x, y); }

private:
    SpectralBasis basis_;
    double tolerance_;
};

inline double heat_kernel(const HeatKernel& kernel, double t, const Point& x, const Point& y) {
    return kernel.evaluate(t, x, y);
}

// Φ diag(e^{-λt/2}) Φᵀ: the truncated kernel between mesh nodes.
inline Eigen::MatrixXd heat_mesh_matrix(const SpectralBasis& basis, const Eigen::MatrixXd& phi, double t) {
    Eigen::VectorXd decay(basis.size());
    for (std::size_t n = 0; n < basis.size(); ++n) decay[n] = std::exp(-0.5 * basis.eigenvalue(n) * t);
    return phi * decay.asDiagonal() * phi.transpose();
}

// Comparison Gaussians G^ε_t(r) = t^{-d/2} exp(-r²/(c_ε t)) with c_ε = 2 + ε,
// and G̃^ε_t(r) = max(t^{-(d-1)/2}, 1)·G^ε_t(r).
struct GaussianComparison {
    double epsilon = 0.0;
    int dim = 1;

    GaussianComparison(double eps, int d) : epsilon(eps), dim(d) {
        if (eps < 0.0) throw InvalidInput("spectral", "comparison epsilon must be >= 0");
    }

    double c_eps() const { return 2.0 + epsilon; }

    double g(double t, double r) const { return std::pow(t, -0.5 * dim) * std::exp(-r * r / (c_eps() * t)); }

    double g_tilde(double t, double r) const { return std::max(std::pow(t, -0.5 * (dim - 1)), 1.0) * g(t, r); }

    double operator()(double t, double r, bool tilde = false) const { return tilde ? g_tilde(t, r) : g(t, r); }
};

inline double gaussian_g(const GaussianComparison& cmp, double t, double r, bool tilde = false) {
    return cmp(t, r, tilde);
}

// Brownian-bridge density P_s(x,z) P_{t-s}(z,y) / P_t(x,y).
inline double bridge_density(const HeatKernel& kernel, double t, const Point& x, const Point& y, double s,
                             const Point& z) {
    if (!(s > 0.0 && s < t)) throw InvalidInput("spectral", "bridge density needs 0 < s < t");
    const double denom = kernel.evaluate(t, x, y);
    if (!(denom > 1e-300)) throw DegenerateKernelError("bridge denominator P_t(x,y) is not positive; raise the band");
    return kernel.evaluate(s, x, z) * kernel.evaluate(t - s, z, y) / denom;
}

// Sup ratios of the heat kernel against a comparison envelope, per time value,
// over all (base point, mesh node) pairs whose kernel value is resolved.
struct KernelBoundReport {
    std::vector<double> times;
    std::vector<double> sup_ratio;
    EnvelopeReport envelope;
};

template <class Envelope>
KernelBoundReport kernel_envelope_sweep(const HeatKernel& kernel, const QuadratureMesh& mesh,
                                        const std::vector<Point>& bases, const std::vector<double>& times,
                                        Envelope&& envelope, double slack = 0.10) {
    const ManifoldModel& model = kernel.basis().model();
    KernelBoundReport rep;
    rep.times = times;
    std::vector<EnvelopeSample> fit, val;
    for (std::size_t k = 0; k < times.size(); ++k) {
        const double t = times[k];
        double worst = 0.0;
        EnvelopeSample best{0.0, 1.0};
        for (const Point& x : bases) {
            // Values within ten times truncation plus rounding error carry no information.
            const double floor = 10.0 * (kernel.tail_bound(t) + 64.0 * std::numeric_limits<double>::epsilon() * kernel.evaluate(t, x, x));
            for (const Point& y : mesh.points) {
                const double d = model.distance(x, y);
                const double lhs = kernel.evaluate(t, x, y);
                if (lhs <= floor) continue;
                const double env = envelope(t, d);
                if (lhs / env > worst) {
                    worst = lhs / env;
                    best = EnvelopeSample{lhs, env};
                }
            }
        }
        rep.sup_ratio.push_back(worst);
        (k % 2 == 0 ? fit : val).push_back(best);
    }
    rep.envelope = fit_validate(fit, val, slack);
    return rep;
}

// Gaussian upper bound P_t ≤ C (G^ε_t(d) + t∧1).
inline KernelBoundReport verify_li_yau(const HeatKernel& kernel, const QuadratureMesh& mesh,
                                       const std::vector<Point>& bases, double epsilon,
                                       const std::vector<double>& times) {
    if (!(epsilon > 0.0)) throw InvalidInput("spectral", "Li-Yau verification needs epsilon > 0");
    const GaussianComparison cmp(epsilon, kernel.basis().model().dim());
    return kernel_envelope_sweep(kernel, mesh, bases, times,
                                 [&](double t, double d) { return cmp.g(t, d) + std::min(t, 1.0); });
}

// Small-time bound P_t ≤ C G̃⁰_t(d) for t ≤ 1.
inline KernelBoundReport verify_heat_upper_bound(const HeatKernel& kernel, const QuadratureMesh& mesh,
                                                 const std::vector<Point>& bases, const std::vector<double>& times) {
    for (double t : times)
        if (t > 1.0) throw InvalidInput("spectral", "small-time bound applies to t <= 1");
    const GaussianComparison cmp(0.0, kernel.basis().model().dim());
    return kernel_envelope_sweep(kernel, mesh, bases, times, [&](double t, double d) { return cmp.g_tilde(t, d); });
}

}  // namespace pamlab
