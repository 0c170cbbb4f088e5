#pragma once

#include "kelab/geometry.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace kelab {

// Finite-element model of a rotationally symmetric log sphere. Potentials and densities are
// continuous and piecewise linear in the grading coordinate s; every functional is the exact
// continuum functional of that interpolant up to quadrature error.
class RadialModel {
public:
    RadialModel(const LogSphere& space, int elements);

    const RadialGrid& grid() const { return grid_; }
    const LogSphere& space() const { return space_; }
    int size() const { return grid_.nodes(); }
    // Total volume of ω₀, the degree |2 − Σ c|.
    double volume() const { return volume_; }

    // ∫ φ_i ω₀/V and ∫ φ_i dV
    const std::vector<double>& fs_mass() const { return fs_mass_; }
    const std::vector<double>& dv_mass() const { return dv_mass_; }

    // K_ij = (1/V) ∫ t(1 − t) φ_i' φ_j' dt, so that MA(u) = fs_mass − K u.
    std::vector<double> apply_stiffness(const std::vector<double>& u) const;
    // G_ij = ∫ φ_i φ_j dV.
    std::vector<double> apply_mass(const std::vector<double>& rho) const;
    std::vector<double> solve_mass(const std::vector<double>& m) const;
    // K u = f with u_0 = 0; f must have zero sum.
    std::vector<double> solve_stiffness(const std::vector<double>& f) const;
    double stiffness_form(const std::vector<double>& u) const;

    const std::vector<double>& stiff_diag() const { return k_diag_; }
    const std::vector<double>& stiff_off() const { return k_off_; }

    // log ∫ e^{β u_h} dV
    double log_integral_exp(const std::vector<double>& u, double beta) const;
    // p_i = ∫ φ_i e^{β u_h} dV / ∫ e^{β u_h} dV, plus the tridiagonal ∫ φ_i φ_j e^{β u_h} dV / Z.
    struct Gibbs {
        std::vector<double> p, q_diag, q_off;
        double log_z;
    };
    Gibbs gibbs(const std::vector<double>& u, double beta) const;

private:
    LogSphere space_;
    RadialGrid grid_;
    double volume_;
    std::vector<double> fs_mass_, dv_mass_;
    std::vector<double> k_diag_, k_off_, g_diag_, g_off_;
};

using ModelPtr = std::shared_ptr<const RadialModel>;
ModelPtr make_model(const LogSphere& space, int elements);

struct Potential {
    ModelPtr model;
    std::vector<double> values;
    bool sup_normalized = false;
};

// Nodal values of μ/dV. Nonnegative in the hat-function-averaged sense.
struct Density {
    ModelPtr model;
    std::vector<double> values;
    double mass() const;
};

Potential zero_potential(const ModelPtr& model);
Density reference_measure(const ModelPtr& model);

// Admissible potentials have ∫φ_i MA(u) / ∫φ_i dV ≥ −tolerance for every hat function φ_i. The
// returned nodal values are the mass-consistent projection and may overshoot below zero next to a
// cone point where the density vanishes.
Density monge_ampere(const Potential& u, double tolerance = 1e-9);
double script_energy(const Potential& u);
double entropy(const Density& mu, const Density& ref);
Potential solve_calabi_yau(const Density& mu);
double energy_of_measure(const Density& mu);
double free_energy(const Density& mu, double beta);
double ent_star(const Potential& u);
double ding(const Potential& u, double beta);
double mabuchi(const Potential& u, double beta);

struct NewtonStep {
    int iteration;
    double residual;
    double step;
};

struct KeSolution {
    Potential u;
    Density mu;                    // MA(u)
    std::vector<double> density;   // e^{βu}/∫e^{βu}dV at the nodes
    double residual;               // ‖MA(u) − e^{βu}dV/Z‖₁ in masses
    double reconstruction_error;   // sup-variation of (1/β) log(μ/dV) − u
    double log_normalizer;         // log ∫ e^{βu} dV for the returned u
    int iterations;
    std::vector<NewtonStep> log;
};

struct KeOptions {
    int max_iterations = 50;
    int max_halvings = 25;
    double tolerance = 1e-10;
};

class SolverFailure : public ComputationError {
public:
    SolverFailure(const std::string& what, std::vector<NewtonStep> log)
        : ComputationError(what), log_(std::move(log)) {}
    const std::vector<NewtonStep>& log() const { return log_; }

private:
    std::vector<NewtonStep> log_;
};

KeSolution solve_ke(const ModelPtr& model, double beta, const KeOptions& opts = {});

struct MinimizeOptions {
    int max_iterations = 20000;
    double tolerance = 1e-13;  // stationarity: dV-weighted variance of the mirror gradient
    double floor = -kInf;      // stop once the value drops below this
};

struct MinimizeResult {
    Density minimizer;
    double value;
    int iterations;
    bool converged;
};

// Mirror descent over densities μ ∝ e^{−v} dV with backtracking.
MinimizeResult minimize_free_energy(const Density& start, double beta, const MinimizeOptions& opts = {});

struct DualityReport {
    double inf_free_energy;
    double inf_dual;
    double gap;
    bool converged;
};

DualityReport duality_gap(const ModelPtr& model);

struct CoercivityRow {
    double beta;
    double min_coarse;
    double min_fine;
    bool dives;
};

struct CoercivityReport {
    std::vector<CoercivityRow> rows;
    std::optional<double> last_stable;
    std::optional<double> first_dive;
    double estimate;      // estimate of −Γ
    double bracket_width;
    std::string label = "heuristic";
};

struct CoercivityOptions {
    int elements = 100;
    int refinement = 4;
    double floor = -1e3;
    double dive_threshold = 0.02;
    int max_iterations = 4000;
};

CoercivityReport coercivity_scan(const LogSphere& space, const std::vector<double>& beta_grid,
                                 const CoercivityOptions& opts = {});

struct FunctionalReport {
    double energy, entropy, free_energy, mabuchi, ding, ent_star, script_energy;
    std::optional<double> duality_gap;
};

FunctionalReport functional_report(const Potential& u, double beta);

}  // namespace kelab
