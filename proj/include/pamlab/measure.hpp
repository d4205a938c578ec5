#pragma once

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pamlab/errors.hpp"
#include "pamlab/manifold.hpp"
#include "pamlab/spectral.hpp"

namespace pamlab {

// Finite measure: Dirac atoms plus an optional nonnegative density sampled on a mesh.
struct InitialMeasure {
    std::vector<std::pair<Point, double>> atoms;
    std::optional<QuadratureMesh> density_mesh;
    std::vector<double> density;

    static InitialMeasure dirac(const Point& p, double mass = 1.0) {
        InitialMeasure mu;
        mu.atoms.push_back({p, mass});
        mu.validate();
        return mu;
    }

    // The volume measure m, as the density 1 on a mesh.
    static InitialMeasure volume(const QuadratureMesh& mesh) {
        InitialMeasure mu;
        mu.density_mesh = mesh;
        mu.density.assign(mesh.size(), 1.0);
        return mu;
    }

    void validate() const {
        for (const auto& [p, mass] : atoms)
            if (!(mass > 0.0) || !std::isfinite(mass)) throw InvalidInput("measure", "atom masses must be finite and > 0");
        if (density_mesh) {
            if (density.size() != density_mesh->size()) throw InvalidInput("measure", "density does not match its mesh");
            for (double v : density)
                if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidInput("measure", "density must be finite and >= 0");
        } else if (!density.empty()) {
            throw InvalidInput("measure", "density given without a mesh");
        }
    }

    double total_mass() const {
        double s = 0.0;
        for (const auto& a : atoms) s += a.second;
        if (density_mesh) s += integrate(*density_mesh, density);
        return s;
    }

    InitialMeasure scaled(double c) const {
        InitialMeasure mu = *this;
        for (auto& a : mu.atoms) a.second *= c;
        for (auto& v : mu.density) v *= c;
        return mu;
    }

    // ∫ φ_n dμ for every mode of the basis.
    Eigen::VectorXd coefficients(const SpectralBasis& basis) const {
        Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis.size()));
        std::vector<double> row(basis.size());
        for (const auto& [p, mass] : atoms) {
            basis.evaluate_all(p, row.data());
            for (std::size_t n = 0; n < row.size(); ++n) c[n] += mass * row[n];
        }
        if (density_mesh)
            for (std::size_t j = 0; j < density.size(); ++j) {
                if (density[j] == 0.0) continue;
                basis.evaluate_all(density_mesh->points[j], row.data());
                const double w = density_mesh->weights[j] * density[j];
                for (std::size_t n = 0; n < row.size(); ++n) c[n] += w * row[n];
            }
        return c;
    }
};

// μ1 ≤ μ2 as measures: every atom of μ1 sits under an atom of μ2 of at least
// the same mass, and densities (on a shared mesh) are ordered pointwise.
inline bool measure_dominated(const InitialMeasure& lo, const InitialMeasure& hi) {
    for (const auto& [p, mass] : lo.atoms) {
        double above = 0.0;
        for (const auto& [q, m2] : hi.atoms)
            if (p.kind == q.kind && p.coords == q.coords) above += m2;
        if (above < mass) return false;
    }
    if (lo.density_mesh) {
        if (!hi.density_mesh || hi.density_mesh->size() != lo.density_mesh->size()) return false;
        for (std::size_t j = 0; j < lo.density.size(); ++j)
            if (lo.density[j] > hi.density[j]) return false;
    }
    return true;
}

// J_μ(t, x) = ∫ P_t(x, y) μ(dy): atoms exactly, density by mesh quadrature.
inline double j_mu(const HeatKernel& kernel, double t, const Point& x, const InitialMeasure& mu) {
    double s = 0.0;
    for (const auto& [p, mass] : mu.atoms) s += mass * kernel(t, p, x);
    if (mu.density_mesh) {
        std::vector<double> f(mu.density.size());
        for (std::size_t j = 0; j < f.size(); ++j) f[j] = mu.density[j] == 0.0 ? 0.0 : mu.density[j] * kernel(t, mu.density_mesh->points[j], x);
        s += integrate(*mu.density_mesh, f);
    }
    return s;
}

}  // namespace pamlab
