#pragma once

#include "kelab/common.hpp"

#include <array>
#include <complex>
#include <functional>
#include <string>
#include <vector>

namespace kelab {

using Vec3 = std::array<double, 3>;

// Point of the Riemann sphere. z = 0 is the south pole (t = 0), z = ∞ the north pole (t = 1).
struct SpherePoint {
    std::complex<double> z{0.0, 0.0};
    bool at_infinity = false;

    static SpherePoint finite(std::complex<double> w) { return {w, false}; }
    static SpherePoint infinity() { return {{0.0, 0.0}, true}; }
    static SpherePoint from_vector(const Vec3& x);

    Vec3 vector() const;
    double t() const;
    double t_complement() const;
    double angle() const;

    bool is_south_pole() const { return !at_infinity && z == std::complex<double>(0.0, 0.0); }
    bool is_north_pole() const { return at_infinity; }
    bool operator==(const SpherePoint& o) const {
        return at_infinity == o.at_infinity && (at_infinity || z == o.z);
    }
};

// Moment coordinate of a unit vector, t = (1 + x₃)/2, with the complement kept accurate near both poles.
double moment_t(const Vec3& x);
double moment_t_complement(const Vec3& x);

// |x − y|² / 4, which equals |z − w|² / ((1 + |z|²)(1 + |w|²)).
double chordal_sq(const Vec3& x, const Vec3& y);
double chordal_sq(const SpherePoint& a, const SpherePoint& b);

struct LogPoint {
    SpherePoint point;
    Rational weight;
};

// P¹ with the divisor Δ = Σ c_i p_i.
class LogSphere {
public:
    LogSphere() = default;
    explicit LogSphere(std::vector<LogPoint> points);

    const std::vector<LogPoint>& log_points() const { return points_; }
    Rational anticanonical_degree() const;
    // |2 − Σ c|, the degree of the line bundle whose sections are sampled at level 1.
    Rational bundle_degree() const;

    // Every log point sits at z = 0 or z = ∞.
    bool is_polar() const;
    double south_weight() const;
    double north_weight() const;

    // k·c_i ∈ ℤ for every weight and k·|2 − Σ c| ∈ ℤ.
    bool level_admissible(long k) const;
    void require_level(long k) const;

    // log of dV relative to the normalized Fubini–Study area measure.
    double log_density(const Vec3& x) const;
    double log_normalization() const { return log_norm_; }

    const std::vector<std::string>& warnings() const { return warnings_; }

private:
    std::vector<LogPoint> points_;
    std::vector<Vec3> vectors_;
    std::vector<double> weights_;
    double log_norm_ = 0.0;
    std::vector<std::string> warnings_;
};

// Integrand receiving the point and its chordal² distances to the singular points, the
// distance to the point being resolved kept exact down to underflow.
using SphereIntegrand = std::function<double(const Vec3&, const std::vector<double>&)>;

// Integral of f against normalized Fubini–Study area, with integrable singularities
// of type chordal²(x, p)^{−c} at the listed points.
double integrate_sphere(const SphereIntegrand& f,
                        const std::vector<Vec3>& singular_points,
                        const std::vector<double>& singular_orders, int radial_nodes = 384,
                        int angular_nodes = 128);

// Full-dimensional lattice polytope containing the origin in its interior.
class ToricFano {
public:
    struct Facet {
        std::vector<long> normal;  // primitive inward normal
        long offset;               // ⟨normal, x⟩ ≥ −offset on the polytope
    };

    ToricFano() = default;
    explicit ToricFano(std::vector<std::vector<long>> vertices);

    int dimension() const { return dim_; }
    const std::vector<std::vector<long>>& vertices() const { return vertices_; }
    const std::vector<Facet>& facets() const { return facets_; }
    bool reflexive() const { return reflexive_; }
    bool contains(const std::vector<long>& x, long k = 1) const;

private:
    int dim_ = 0;
    std::vector<std::vector<long>> vertices_;
    std::vector<Facet> facets_;
    bool reflexive_ = false;
};

// Integer points of kP, in lexicographic order.
std::vector<std::vector<long>> lattice_points(const ToricFano& polytope, long k);

// Gauss–Legendre rule on [−1, 1].
struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};
const GaussRule& gauss_legendre(int n);

// Rotationally symmetric grid in the moment coordinate t. The elements are uniform in a
// grading coordinate s with t = ½(2s)^{q₀} for s ≤ ½ and 1 − t = ½(2(1 − s))^{q₁} otherwise;
// q = 1/(1 − c) cancels the t^{−c} singularity of dV at a log pole.
class RadialGrid {
public:
    struct QuadPoint {
        int element;
        double lambda;    // local coordinate in s, 0 at the left node
        double t, tc;     // t and 1 − t
        double w_dt;      // weight for ∫ · dt
        double w_dv;      // weight for ∫ · dV (normalized)
        double w_stiff;   // weight for ∫ t(1 − t)(d/dt)² ·, without the 1/h² factor
    };

    RadialGrid(int elements, double south_weight, double north_weight);

    int elements() const { return elements_; }
    int nodes() const { return elements_ + 1; }
    const std::vector<double>& s() const { return s_; }
    const std::vector<double>& t() const { return t_; }
    const std::vector<double>& t_complement() const { return tc_; }
    double south_weight() const { return c0_; }
    double north_weight() const { return c1_; }
    double element_width() const { return 1.0 / elements_; }
    const std::vector<QuadPoint>& quad_points() const { return qp_; }
    // Range of quad_points() belonging to an element.
    std::pair<int, int> element_points(int e) const { return {offsets_[e], offsets_[e + 1]}; }

    // Nodal value of dV/dt (infinite at a log pole).
    double dv_over_dt(int node) const;
    // Quadrature total of dV before renormalization; 1 up to quadrature error.
    double raw_dv_mass() const { return raw_dv_mass_; }

private:
    int elements_;
    double c0_, c1_, q0_, q1_, log_beta_;
    std::vector<double> s_, t_, tc_;
    std::vector<QuadPoint> qp_;
    std::vector<int> offsets_;
    double raw_dv_mass_ = 0.0;
};

// Composite rule on arbitrary increasing nodes: each interval integrates the cubic through
// the four nearest nodes exactly, so the rule is exact on cubics.
double quadrature(const std::vector<double>& nodes, const std::vector<double>& values);

struct RadialProfile {
    std::vector<double> t;
    std::vector<double> density;  // dV/dt at the nodes
    double mass;
};

// dV on a rotationally symmetric log sphere; mass is the quadrature total.
RadialProfile reference_density(const LogSphere& space, int elements);

}  // namespace kelab
