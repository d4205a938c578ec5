#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "pamlab/errors.hpp"
#include "pamlab/numerics.hpp"
#include "pamlab/rng.hpp"

namespace pamlab {

enum class ManifoldKind { circle, flat_torus_2d, sphere_2d };

// Chart coordinates: angle for the circle, (u, v) in [0,1)^2 for the torus,
// (colatitude, longitude) for the sphere. Unused slots are zero.
struct Point {
    ManifoldKind kind = ManifoldKind::circle;
    std::array<double, 2> coords{};
};

using Vec3 = std::array<double, 3>;

inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

namespace detail {

inline double wrap_unit(double u) {
    double r = u - std::floor(u);
    return r >= 1.0 ? 0.0 : r;
}

inline double wrap_angle(double theta) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double r = theta - two_pi * std::floor(theta / two_pi);
    return r >= two_pi ? 0.0 : r;
}

// Signed representative of u in [-1/2, 1/2).
inline double centred_unit(double u) { return u - std::floor(u + 0.5); }

// Signed representative of an angle in [-π, π).
inline double centred_angle(double theta) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    return theta - two_pi * std::floor((theta + std::numbers::pi) / two_pi);
}

}  // namespace detail

struct QuadratureMesh {
    ManifoldKind kind = ManifoldKind::circle;
    int resolution = 0;
    std::vector<Point> points;
    std::vector<double> weights;

    std::size_t size() const { return points.size(); }
};

class ManifoldModel {
public:
    static ManifoldModel circle() {
        return ManifoldModel(ManifoldKind::circle, 1, 2.0 * std::numbers::pi, std::numbers::pi, std::numbers::pi, 0.0);
    }
    static ManifoldModel flat_torus() {
        return ManifoldModel(ManifoldKind::flat_torus_2d, 2, 1.0, std::numbers::sqrt2 / 2.0, 0.5, 0.0);
    }
    static ManifoldModel sphere() {
        return ManifoldModel(ManifoldKind::sphere_2d, 2, 4.0 * std::numbers::pi, std::numbers::pi, std::numbers::pi, 1.0);
    }

    // Accepts the configuration names "circle", "torus2" and "sphere2".
    static ManifoldModel from_name(std::string_view name) {
        if (name == "circle") return circle();
        if (name == "torus2") return flat_torus();
        if (name == "sphere2") return sphere();
        throw InvalidInput("manifold", "unknown model '" + std::string(name) + "' (expected circle, torus2 or sphere2)");
    }

    ManifoldKind kind() const { return kind_; }
    int dim() const { return dim_; }
    double volume() const { return volume_; }
    double diameter() const { return diameter_; }
    double injectivity_radius() const { return injectivity_radius_; }
    double curvature_upper_bound() const { return curvature_; }

    std::string name() const {
        switch (kind_) {
            case ManifoldKind::circle: return "circle";
            case ManifoldKind::flat_torus_2d: return "torus2";
            case ManifoldKind::sphere_2d: return "sphere2";
        }
        return "unknown";
    }

    // Scale below which the bridge concentration constant is controlled:
    // min(i_M/2, π/(4√K)), with K = 1 used for the flat models as well.
    double unique_geodesic_scale() const {
        const double k = curvature_ > 0.0 ? curvature_ : 1.0;
        return std::min(injectivity_radius_ / 2.0, std::numbers::pi / (4.0 * std::sqrt(k)));
    }

    Point point(double c0, double c1 = 0.0) const { return normalize(Point{kind_, {c0, c1}}); }

    Point normalize(Point p) const {
        check(p);
        switch (kind_) {
            case ManifoldKind::circle:
                p.coords = {detail::wrap_angle(p.coords[0]), 0.0};
                break;
            case ManifoldKind::flat_torus_2d:
                p.coords = {detail::wrap_unit(p.coords[0]), detail::wrap_unit(p.coords[1])};
                break;
            case ManifoldKind::sphere_2d:
                p = from_vector(embed(p));
                break;
        }
        return p;
    }

    // Unit vector of a sphere point.
    Vec3 embed(const Point& p) const {
        const double st = std::sin(p.coords[0]);
        return {st * std::cos(p.coords[1]), st * std::sin(p.coords[1]), std::cos(p.coords[0])};
    }

    Point from_vector(const Vec3& v) const {
        const double colat = std::atan2(std::hypot(v[0], v[1]), v[2]);
        double lon = std::atan2(v[1], v[0]);
        if (colat == 0.0 || colat == std::numbers::pi) lon = 0.0;
        return Point{ManifoldKind::sphere_2d, {colat, detail::wrap_angle(lon)}};
    }

    double distance(const Point& x, const Point& y) const {
        check(x);
        check(y);
        switch (kind_) {
            case ManifoldKind::circle:
                return std::abs(detail::centred_angle(y.coords[0] - x.coords[0]));
            case ManifoldKind::flat_torus_2d:
                return std::hypot(detail::centred_unit(y.coords[0] - x.coords[0]),
                                  detail::centred_unit(y.coords[1] - x.coords[1]));
            case ManifoldKind::sphere_2d: {
                const Vec3 a = embed(x), b = embed(y);
                return std::atan2(norm(cross(a, b)), dot(a, b));
            }
        }
        return 0.0;
    }

    // Constant-speed minimizing geodesic from x (a = 0) to y (a = 1).
    Point geodesic_point(const Point& x, const Point& y, double a) const {
        const double d = distance(x, y);
        if (d >= injectivity_radius_)
            throw CutLocusError("geodesic requested between points at distance " + std::to_string(d) +
                                " >= injectivity radius " + std::to_string(injectivity_radius_));
        if (a == 0.0) return x;
        if (a == 1.0) return y;
        switch (kind_) {
            case ManifoldKind::circle:
                return point(x.coords[0] + a * detail::centred_angle(y.coords[0] - x.coords[0]));
            case ManifoldKind::flat_torus_2d:
                return point(x.coords[0] + a * detail::centred_unit(y.coords[0] - x.coords[0]),
                             x.coords[1] + a * detail::centred_unit(y.coords[1] - x.coords[1]));
            case ManifoldKind::sphere_2d: {
                if (d == 0.0) return x;
                const Vec3 p = embed(x), q = embed(y);
                const double s = std::sin(d);
                const double wa = std::sin((1.0 - a) * d) / s, wb = std::sin(a * d) / s;
                return from_vector({wa * p[0] + wb * q[0], wa * p[1] + wb * q[1], wa * p[2] + wb * q[2]});
            }
        }
        return x;
    }

    // Point at distance r from x along the unit tangent with angle `heading`.
    // On the circle only the sign of cos(heading) matters.
    Point exponential_map(const Point& x, double heading, double r) const {
        switch (kind_) {
            case ManifoldKind::circle:
                return point(x.coords[0] + (std::cos(heading) >= 0.0 ? r : -r));
            case ManifoldKind::flat_torus_2d:
                return point(x.coords[0] + r * std::cos(heading), x.coords[1] + r * std::sin(heading));
            case ManifoldKind::sphere_2d: {
                const double th = x.coords[0], ph = x.coords[1];
                const Vec3 p = embed(x);
                const Vec3 e_th{std::cos(th) * std::cos(ph), std::cos(th) * std::sin(ph), -std::sin(th)};
                const Vec3 e_ph{-std::sin(ph), std::cos(ph), 0.0};
                const double c = std::cos(heading), s = std::sin(heading);
                const double cr = std::cos(r), sr = std::sin(r);
                Vec3 q;
                for (int i = 0; i < 3; ++i) q[i] = cr * p[i] + sr * (c * e_th[i] + s * e_ph[i]);
                return from_vector(q);
            }
        }
        return x;
    }

    // Uniform sample with respect to the volume measure.
    Point random_point(RandomStream& rng) const {
        switch (kind_) {
            case ManifoldKind::circle:
                return point(2.0 * std::numbers::pi * rng.uniform());
            case ManifoldKind::flat_torus_2d: {
                const double u = rng.uniform();
                return point(u, rng.uniform());
            }
            case ManifoldKind::sphere_2d: {
                const double z = rng.uniform(-1.0, 1.0);
                const double lon = 2.0 * std::numbers::pi * rng.uniform();
                return Point{kind_, {std::acos(z), detail::wrap_angle(lon)}};
            }
        }
        return Point{kind_, {}};
    }

    // Uniform grid on the circle (n points) and torus (n x n points); on the
    // sphere n Gauss–Legendre colatitudes times 2n equispaced longitudes.
    QuadratureMesh make_mesh(int resolution) const {
        if (resolution < 4) throw InvalidInput("manifold", "mesh resolution must be >= 4");
        QuadratureMesh mesh;
        mesh.kind = kind_;
        mesh.resolution = resolution;
        const int n = resolution;
        switch (kind_) {
            case ManifoldKind::circle:
                for (int i = 0; i < n; ++i) {
                    mesh.points.push_back(Point{kind_, {2.0 * std::numbers::pi * i / n, 0.0}});
                    mesh.weights.push_back(2.0 * std::numbers::pi / n);
                }
                break;
            case ManifoldKind::flat_torus_2d:
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j) {
                        mesh.points.push_back(Point{kind_, {static_cast<double>(i) / n, static_cast<double>(j) / n}});
                        mesh.weights.push_back(1.0 / (static_cast<double>(n) * n));
                    }
                break;
            case ManifoldKind::sphere_2d: {
                const GaussRule rule = gauss_legendre(n);
                for (int i = 0; i < n; ++i) {
                    const double colat = std::acos(-rule.nodes[i]);
                    for (int j = 0; j < 2 * n; ++j) {
                        mesh.points.push_back(Point{kind_, {colat, std::numbers::pi * j / n}});
                        mesh.weights.push_back(rule.weights[i] * std::numbers::pi / n);
                    }
                }
                break;
            }
        }
        return mesh;
    }

    void check(const Point& p) const {
        if (p.kind != kind_) throw InvalidInput("manifold", "point belongs to a different model than " + name());
    }

private:
    ManifoldModel(ManifoldKind kind, int dim, double volume, double diameter, double inj, double curvature)
        : kind_(kind), dim_(dim), volume_(volume), diameter_(diameter), injectivity_radius_(inj), curvature_(curvature) {}

    ManifoldKind kind_;
    int dim_;
    double volume_;
    double diameter_;
    double injectivity_radius_;
    double curvature_;
};

inline double distance(const ManifoldModel& model, const Point& x, const Point& y) { return model.distance(x, y); }

inline Point geodesic_point(const ManifoldModel& model, const Point& x, const Point& y, double a) {
    return model.geodesic_point(x, y, a);
}

inline QuadratureMesh make_mesh(const ManifoldModel& model, int resolution) { return model.make_mesh(resolution); }

inline double unique_geodesic_scale(const ManifoldModel& model) { return model.unique_geodesic_scale(); }

// Integral of mesh values against the mesh weights.
template <class Values>
double integrate(const QuadratureMesh& mesh, const Values& values) {
    std::vector<double> terms(mesh.size());
    for (std::size_t i = 0; i < mesh.size(); ++i) terms[i] = mesh.weights[i] * values[i];
    return pairwise_sum(terms);
}

}  // namespace pamlab
