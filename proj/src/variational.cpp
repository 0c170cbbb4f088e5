#include "kelab/variational.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace kelab {

namespace {

// Thomas algorithm; off[i] couples i and i + 1. Requires a matrix that needs no pivoting.
std::vector<double> solve_tridiagonal(const std::vector<double>& diag, const std::vector<double>& off,
                                      std::vector<double> rhs) {
    const std::size_t n = diag.size();
    std::vector<double> c(n, 0.0);
    double d = diag[0];
    if (d == 0.0) throw ComputationError("singular tridiagonal system");
    c[0] = n > 1 ? off[0] / d : 0.0;
    rhs[0] /= d;
    for (std::size_t i = 1; i < n; ++i) {
        d = diag[i] - off[i - 1] * c[i - 1];
        if (d == 0.0) throw ComputationError("singular tridiagonal system");
        if (i + 1 < n) c[i] = off[i] / d;
        rhs[i] = (rhs[i] - off[i - 1] * rhs[i - 1]) / d;
    }
    for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= c[i] * rhs[i + 1];
    return rhs;
}

std::vector<double> tridiagonal_apply(const std::vector<double>& diag, const std::vector<double>& off,
                                      const std::vector<double>& x) {
    const std::size_t n = diag.size();
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double v = diag[i] * x[i];
        if (i > 0) v += off[i - 1] * x[i - 1];
        if (i + 1 < n) v += off[i] * x[i + 1];
        y[i] = v;
    }
    return y;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

void require_model(const ModelPtr& m) {
    if (!m) throw ValidationError("potential or density has no model attached");
}

void require_same(const ModelPtr& a, const ModelPtr& b) {
    if (a.get() != b.get()) throw ValidationError("objects live on different models");
}

void check_size(const ModelPtr& m, const std::vector<double>& v) {
    require_model(m);
    if (static_cast<int>(v.size()) != m->size())
        throw ValidationError("nodal vector has " + std::to_string(v.size()) + " entries, model has " +
                              std::to_string(m->size()) + " nodes");
    for (double x : v)
        if (!std::isfinite(x)) throw ValidationError("nodal values must be finite");
}

}  // namespace

RadialModel::RadialModel(const LogSphere& space, int elements)
    : space_(space),
      grid_((space.is_polar() ? RadialGrid(elements, space.south_weight(), space.north_weight())
                              : throw ValidationError(
                                    "rotational symmetry requires log points at the poles"))) {
    volume_ = to_double(space.bundle_degree());
    const int n = grid_.nodes();
    const double h = grid_.element_width();
    fs_mass_.assign(n, 0.0);
    dv_mass_.assign(n, 0.0);
    k_diag_.assign(n, 0.0);
    k_off_.assign(n - 1, 0.0);
    g_diag_.assign(n, 0.0);
    g_off_.assign(n - 1, 0.0);
    for (int e = 0; e < grid_.elements(); ++e) {
        auto [b, end] = grid_.element_points(e);
        double ks = 0.0;
        for (int k = b; k < end; ++k) {
            const auto& q = grid_.quad_points()[k];
            double l = q.lambda, r = 1.0 - q.lambda;
            fs_mass_[e] += r * q.w_dt;
            fs_mass_[e + 1] += l * q.w_dt;
            dv_mass_[e] += r * q.w_dv;
            dv_mass_[e + 1] += l * q.w_dv;
            g_diag_[e] += r * r * q.w_dv;
            g_diag_[e + 1] += l * l * q.w_dv;
            g_off_[e] += l * r * q.w_dv;
            ks += q.w_stiff;
        }
        ks /= h * h * volume_;
        k_diag_[e] += ks;
        k_diag_[e + 1] += ks;
        k_off_[e] -= ks;
    }
    // total masses are 1 exactly so that MA(u) is a probability measure for every u
    double fs = std::accumulate(fs_mass_.begin(), fs_mass_.end(), 0.0);
    for (double& v : fs_mass_) v /= fs;
}

// Edge-difference form, so constants map to exactly zero.
std::vector<double> RadialModel::apply_stiffness(const std::vector<double>& u) const {
    std::vector<double> out(u.size(), 0.0);
    for (std::size_t e = 0; e < k_off_.size(); ++e) {
        double flux = -k_off_[e] * (u[e] - u[e + 1]);
        out[e] += flux;
        out[e + 1] -= flux;
    }
    return out;
}

std::vector<double> RadialModel::apply_mass(const std::vector<double>& rho) const {
    return tridiagonal_apply(g_diag_, g_off_, rho);
}

std::vector<double> RadialModel::solve_mass(const std::vector<double>& m) const {
    return solve_tridiagonal(g_diag_, g_off_, m);
}

std::vector<double> RadialModel::solve_stiffness(const std::vector<double>& f) const {
    const int n = size();
    std::vector<double> d(k_diag_.begin() + 1, k_diag_.end());
    std::vector<double> o(k_off_.begin() + 1, k_off_.end());
    std::vector<double> r(f.begin() + 1, f.end());
    std::vector<double> x = solve_tridiagonal(d, o, r);
    std::vector<double> u(n, 0.0);
    std::copy(x.begin(), x.end(), u.begin() + 1);
    return u;
}

double RadialModel::stiffness_form(const std::vector<double>& u) const {
    double s = 0.0;
    for (std::size_t e = 0; e < k_off_.size(); ++e) {
        double du = u[e + 1] - u[e];
        s += -k_off_[e] * du * du;
    }
    return s;
}

double RadialModel::log_integral_exp(const std::vector<double>& u, double beta) const {
    const auto& qp = grid_.quad_points();
    double amax = -kInf;
    std::vector<double> a(qp.size());
    for (std::size_t k = 0; k < qp.size(); ++k) {
        const auto& q = qp[k];
        a[k] = beta * ((1.0 - q.lambda) * u[q.element] + q.lambda * u[q.element + 1]);
        amax = std::max(amax, a[k]);
    }
    double z = 0.0;
    for (std::size_t k = 0; k < qp.size(); ++k) z += std::exp(a[k] - amax) * qp[k].w_dv;
    return amax + std::log(z);
}

RadialModel::Gibbs RadialModel::gibbs(const std::vector<double>& u, double beta) const {
    const auto& qp = grid_.quad_points();
    const int n = size();
    Gibbs g;
    g.p.assign(n, 0.0);
    g.q_diag.assign(n, 0.0);
    g.q_off.assign(n - 1, 0.0);
    double amax = -kInf;
    for (const auto& q : qp)
        amax = std::max(amax, beta * ((1.0 - q.lambda) * u[q.element] + q.lambda * u[q.element + 1]));
    double z = 0.0;
    for (const auto& q : qp) {
        double l = q.lambda, r = 1.0 - l;
        double w = std::exp(beta * (r * u[q.element] + l * u[q.element + 1]) - amax) * q.w_dv;
        z += w;
        g.p[q.element] += r * w;
        g.p[q.element + 1] += l * w;
        g.q_diag[q.element] += r * r * w;
        g.q_diag[q.element + 1] += l * l * w;
        g.q_off[q.element] += l * r * w;
    }
    for (double& v : g.p) v /= z;
    for (double& v : g.q_diag) v /= z;
    for (double& v : g.q_off) v /= z;
    g.log_z = amax + std::log(z);
    return g;
}

ModelPtr make_model(const LogSphere& space, int elements) {
    return std::make_shared<const RadialModel>(space, elements);
}

double Density::mass() const {
    check_size(model, values);
    return dot(values, model->dv_mass());
}

Potential zero_potential(const ModelPtr& model) {
    require_model(model);
    return {model, std::vector<double>(model->size(), 0.0), true};
}

Density reference_measure(const ModelPtr& model) {
    require_model(model);
    return {model, std::vector<double>(model->size(), 1.0)};
}

Density monge_ampere(const Potential& u, double tolerance) {
    check_size(u.model, u.values);
    const auto& m = *u.model;
    std::vector<double> ku = m.apply_stiffness(u.values);
    std::vector<double> masses(m.size());
    for (int i = 0; i < m.size(); ++i) masses[i] = m.fs_mass()[i] - ku[i];
    std::vector<double> avg(m.size());
    for (int i = 0; i < m.size(); ++i) avg[i] = masses[i] / m.dv_mass()[i];
    double scale = std::max(1.0, *std::max_element(avg.begin(), avg.end()));
    for (int i = 0; i < m.size(); ++i) {
        if (avg[i] < -tolerance * scale) {
            std::ostringstream os;
            os << "inadmissible potential: Monge-Ampere density " << avg[i] << " < 0 at node " << i
               << " (t = " << m.grid().t()[i] << ")";
            throw ValidationError(os.str());
        }
    }
    return {u.model, m.solve_mass(masses)};
}

double script_energy(const Potential& u) {
    check_size(u.model, u.values);
    return dot(u.values, u.model->fs_mass()) - 0.5 * u.model->stiffness_form(u.values);
}

double entropy(const Density& mu, const Density& ref) {
    check_size(mu.model, mu.values);
    check_size(ref.model, ref.values);
    require_same(mu.model, ref.model);
    double s = 0.0;
    for (const auto& q : mu.model->grid().quad_points()) {
        double l = q.lambda, r = 1.0 - l;
        double a = r * mu.values[q.element] + l * mu.values[q.element + 1];
        if (a <= 0.0) continue;
        double b = r * ref.values[q.element] + l * ref.values[q.element + 1];
        if (b <= 0.0) return kInf;
        s += a * std::log(a / b) * q.w_dv;
    }
    return s;
}

namespace {

// Nodal values may dip below zero where the projection overshoots a density vanishing at a cone
// point; the hat-function averages ∫φ_i μ / ∫φ_i dV must not.
void require_nonnegative(const Density& mu) {
    const auto& m = *mu.model;
    std::vector<double> g = m.apply_mass(mu.values);
    double scale = 1.0;
    for (int i = 0; i < m.size(); ++i) scale = std::max(scale, g[i] / m.dv_mass()[i]);
    for (int i = 0; i < m.size(); ++i)
        if (g[i] / m.dv_mass()[i] < -1e-9 * scale) throw ValidationError("density must be nonnegative");
}

// Potential solving K u = f_μ with u₀ = 0, where f_μ = fs_mass − Gρ.
std::vector<double> measure_potential(const Density& mu) {
    check_size(mu.model, mu.values);
    require_nonnegative(mu);
    double mass = mu.mass();
    if (std::fabs(mass - 1.0) > 1e-8) {
        std::ostringstream os;
        os << "measure must have total mass 1, got " << mass;
        throw ValidationError(os.str());
    }
    const auto& m = *mu.model;
    std::vector<double> g = m.apply_mass(mu.values);
    std::vector<double> f(m.size());
    for (int i = 0; i < m.size(); ++i) f[i] = m.fs_mass()[i] - g[i];
    return m.solve_stiffness(f);
}

}  // namespace

Potential solve_calabi_yau(const Density& mu) {
    std::vector<double> u = measure_potential(mu);
    const auto& m = *mu.model;
    std::vector<double> ku = m.apply_stiffness(u);
    std::vector<double> g = m.apply_mass(mu.values);
    double res = 0.0;
    for (int i = 0; i < m.size(); ++i) res += std::fabs(m.fs_mass()[i] - ku[i] - g[i]);
    if (!(res < 1e-10)) {
        std::ostringstream os;
        os << "Calabi-Yau solve did not converge: residual " << res;
        throw ComputationError(os.str());
    }
    double top = *std::max_element(u.begin(), u.end());
    for (double& v : u) v -= top;
    return {mu.model, u, true};
}

double energy_of_measure(const Density& mu) {
    std::vector<double> u = measure_potential(mu);
    return 0.5 * mu.model->stiffness_form(u);
}

double free_energy(const Density& mu, double beta) {
    return beta * energy_of_measure(mu) + entropy(mu, reference_measure(mu.model));
}

double ent_star(const Potential& u) {
    check_size(u.model, u.values);
    return -u.model->log_integral_exp(u.values, -1.0);
}

double ding(const Potential& u, double beta) {
    check_size(u.model, u.values);
    double e = script_energy(u);
    if (beta == 0.0) return -e + dot(u.values, u.model->dv_mass());
    return -e + u.model->log_integral_exp(u.values, beta) / beta;
}

double mabuchi(const Potential& u, double beta) { return free_energy(monge_ampere(u), beta); }

// ---------------------------------------------------------------------------------------------

KeSolution solve_ke(const ModelPtr& model, double beta, const KeOptions& opts) {
    require_model(model);
    if (!std::isfinite(beta)) throw ValidationError("beta must be finite");
    const auto& m = *model;
    const int n = m.size();
    KeSolution out;

    if (beta == 0.0) {
        out.u = solve_calabi_yau(reference_measure(model));
        out.mu = reference_measure(model);
        out.density.assign(n, 1.0);
        out.residual = 0.0;
        out.reconstruction_error = 0.0;
        out.log_normalizer = 0.0;
        out.iterations = 0;
        return out;
    }

    std::vector<double> u(n, 0.0);
    auto residual_of = [&](const std::vector<double>& v, RadialModel::Gibbs& g, std::vector<double>& r) {
        g = m.gibbs(v, beta);
        std::vector<double> kv = m.apply_stiffness(v);
        r.resize(n);
        double s = 0.0;
        for (int i = 0; i < n; ++i) {
            r[i] = m.fs_mass()[i] - kv[i] - g.p[i];
            s += std::fabs(r[i]);
        }
        return std::isfinite(s) ? s : kInf;
    };

    RadialModel::Gibbs g;
    std::vector<double> r;
    double res = residual_of(u, g, r);
    std::vector<NewtonStep> log{{0, res, 0.0}};
    int it = 0;
    for (; it < opts.max_iterations && res > 1e-13; ++it) {
        // Bordered system for J = T + β p pᵀ with T = −K − βQ, unknowns d₁..d_{n−1} and σ = pᵀd.
        const int dim = n;  // n − 1 unknowns plus σ
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(5 * dim);
        auto T = [&](int i, int j) {
            if (i == j) return -m.stiff_diag()[i] - beta * g.q_diag[i];
            int lo = std::min(i, j);
            return -m.stiff_off()[lo] - beta * g.q_off[lo];
        };
        for (int i = 1; i < n; ++i) {
            for (int j = std::max(1, i - 1); j <= std::min(n - 1, i + 1); ++j)
                trip.emplace_back(i - 1, j - 1, T(i, j));
            trip.emplace_back(i - 1, dim - 1, beta * g.p[i]);
            trip.emplace_back(dim - 1, i - 1, g.p[i]);
        }
        trip.emplace_back(dim - 1, dim - 1, -1.0);
        Eigen::SparseMatrix<double> J(dim, dim);
        J.setFromTriplets(trip.begin(), trip.end());
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(J);
        if (lu.info() != Eigen::Success) break;
        Eigen::VectorXd rhs(dim);
        for (int i = 1; i < n; ++i) rhs[i - 1] = -r[i];
        rhs[dim - 1] = 0.0;
        Eigen::VectorXd d = lu.solve(rhs);
        if (lu.info() != Eigen::Success || !d.allFinite()) break;

        double step = 1.0;
        bool accepted = false;
        RadialModel::Gibbs g2;
        std::vector<double> r2, u2(n);
        for (int h = 0; h <= opts.max_halvings; ++h, step *= 0.5) {
            u2[0] = u[0];
            for (int i = 1; i < n; ++i) u2[i] = u[i] + step * d[i - 1];
            double res2 = residual_of(u2, g2, r2);
            if (res2 < res) {
                u.swap(u2);
                g = std::move(g2);
                r.swap(r2);
                res = res2;
                accepted = true;
                break;
            }
        }
        log.push_back({it + 1, res, accepted ? step : 0.0});
        if (!accepted) break;
    }
    if (!(res < opts.tolerance)) {
        std::ostringstream os;
        os << "no solution found (possible non-existence for this β): residual " << res << " after " << it
           << " Newton iterations";
        throw SolverFailure(os.str(), std::move(log));
    }

    double top = *std::max_element(u.begin(), u.end());
    for (double& v : u) v -= top;
    out.u = {model, u, true};
    out.log_normalizer = m.log_integral_exp(u, beta);
    out.density.resize(n);
    for (int i = 0; i < n; ++i) out.density[i] = std::exp(beta * u[i] - out.log_normalizer);
    out.mu = monge_ampere(out.u, 1e-6);
    double lo = kInf, hi = -kInf;
    for (int i = 0; i < n; ++i) {
        if (out.mu.values[i] <= 0.0) continue;
        double v = std::log(out.mu.values[i]) / beta - u[i];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    out.reconstruction_error = hi - lo;
    out.residual = res;
    out.iterations = it;
    out.log = std::move(log);
    return out;
}

// ---------------------------------------------------------------------------------------------

namespace {

// Evaluates F_β on densities ρ = e^{−v}/Z and its gradient in ρ.
struct FreeEnergyEval {
    const RadialModel& m;
    double beta;

    std::vector<double> density(const std::vector<double>& v) const {
        double vmin = *std::min_element(v.begin(), v.end());
        std::vector<double> rho(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) rho[i] = std::exp(-(v[i] - vmin));
        double mass = dot(rho, m.dv_mass());
        for (double& x : rho) x /= mass;
        return rho;
    }

    // Returns F and fills the gradient ∂F/∂ρ_j.
    double operator()(const std::vector<double>& rho, std::vector<double>* grad) const {
        const int n = m.size();
        std::vector<double> g = m.apply_mass(rho);
        std::vector<double> f(n);
        for (int i = 0; i < n; ++i) f[i] = m.fs_mass()[i] - g[i];
        std::vector<double> u = m.solve_stiffness(f);
        double energy = 0.5 * m.stiffness_form(u);
        double ent = 0.0;
        if (grad) grad->assign(n, 0.0);
        for (const auto& q : m.grid().quad_points()) {
            double l = q.lambda, r = 1.0 - l;
            double a = r * rho[q.element] + l * rho[q.element + 1];
            double la = std::log(std::max(a, std::numeric_limits<double>::min()));
            ent += a * la * q.w_dv;
            if (grad) {
                (*grad)[q.element] += r * (la + 1.0) * q.w_dv;
                (*grad)[q.element + 1] += l * (la + 1.0) * q.w_dv;
            }
        }
        if (grad) {
            std::vector<double> gu = m.apply_mass(u);
            for (int i = 0; i < n; ++i) (*grad)[i] -= beta * gu[i];
        }
        return beta * energy + ent;
    }
};

}  // namespace

MinimizeResult minimize_free_energy(const Density& start, double beta, const MinimizeOptions& opts) {
    check_size(start.model, start.values);
    const auto& m = *start.model;
    const int n = m.size();
    const auto& w = m.dv_mass();
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) {
        if (!(start.values[i] > 0.0)) throw ValidationError("starting density must be positive at every node");
        v[i] = -std::log(start.values[i]);
    }
    FreeEnergyEval eval{m, beta};
    std::vector<double> rho = eval.density(v), grad, grad2;
    double value = eval(rho, &grad);
    double eta = 1.0;
    int it = 0;
    bool converged = false;
    for (; it < opts.max_iterations; ++it) {
        std::vector<double> a(n);
        double mean = 0.0;
        for (int i = 0; i < n; ++i) {
            a[i] = grad[i] / w[i];
            mean += rho[i] * w[i] * a[i];
        }
        double var = 0.0;
        for (int i = 0; i < n; ++i) var += rho[i] * w[i] * (a[i] - mean) * (a[i] - mean);
        if (var < opts.tolerance) {
            converged = true;
            break;
        }
        if (value < opts.floor) break;
        bool accepted = false;
        for (int h = 0; h < 60; ++h) {
            std::vector<double> v2(n);
            for (int i = 0; i < n; ++i) v2[i] = v[i] + eta * (a[i] - mean);
            std::vector<double> rho2 = eval.density(v2);
            double value2 = eval(rho2, &grad2);
            if (std::isfinite(value2) && value2 <= value - 1e-4 * eta * var) {
                v.swap(v2);
                rho.swap(rho2);
                grad.swap(grad2);
                value = value2;
                eta = std::min(eta * 1.5, 1e6);
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if (!accepted) {
            // no descent at machine resolution: stationary to working precision
            converged = var < 1e3 * opts.tolerance;
            break;
        }
    }
    return {{start.model, rho}, value, it, converged};
}

DualityReport duality_gap(const ModelPtr& model) {
    require_model(model);
    KeSolution ke = solve_ke(model, -1.0);
    double inf_d = ding(ke.u, -1.0);
    MinimizeResult mf = minimize_free_energy(reference_measure(model), -1.0);
    return {mf.value, inf_d, mf.value - inf_d, mf.converged};
}

CoercivityReport coercivity_scan(const LogSphere& space, const std::vector<double>& beta_grid,
                                 const CoercivityOptions& opts) {
    if (beta_grid.empty()) throw ValidationError("beta grid is empty");
    if (opts.refinement < 2) throw ValidationError("refinement factor must be at least 2");
    for (double b : beta_grid)
        if (!std::isfinite(b) || b >= 0.0) throw ValidationError("coercivity scan needs negative β values");
    std::vector<double> betas = beta_grid;
    std::sort(betas.begin(), betas.end(), std::greater<>());
    ModelPtr coarse = make_model(space, opts.elements);
    ModelPtr fine = make_model(space, opts.elements * opts.refinement);

    auto best = [&](const ModelPtr& model, double beta) {
        MinimizeOptions mo;
        mo.max_iterations = opts.max_iterations;
        mo.floor = opts.floor;
        double v = kInf;
        for (double tilt : {0.0, 4.0, -4.0}) {
            Density d{model, std::vector<double>(model->size())};
            for (int i = 0; i < model->size(); ++i)
                d.values[i] = std::exp(-tilt * (2.0 * model->grid().s()[i] - 1.0));
            double mass = d.mass();
            for (double& x : d.values) x /= mass;
            v = std::min(v, minimize_free_energy(d, beta, mo).value);
        }
        return v;
    };

    CoercivityReport rep;
    for (double beta : betas) {
        CoercivityRow row{beta, best(coarse, beta), best(fine, beta), false};
        row.dives = row.min_fine < row.min_coarse - opts.dive_threshold || row.min_fine < opts.floor ||
                    row.min_coarse < opts.floor;
        rep.rows.push_back(row);
        if (row.dives) {
            if (!rep.first_dive) rep.first_dive = beta;
        } else if (!rep.first_dive) {
            rep.last_stable = beta;
        }
    }
    if (rep.first_dive && rep.last_stable) {
        rep.estimate = 0.5 * (*rep.first_dive + *rep.last_stable);
        rep.bracket_width = *rep.last_stable - *rep.first_dive;
    } else if (rep.first_dive) {
        rep.estimate = *rep.first_dive;
        rep.bracket_width = -*rep.first_dive;
    } else {
        rep.estimate = *rep.last_stable;
        rep.bracket_width = kInf;
    }
    return rep;
}

FunctionalReport functional_report(const Potential& u, double beta) {
    Density mu = monge_ampere(u);
    FunctionalReport r;
    r.energy = energy_of_measure(mu);
    r.entropy = entropy(mu, reference_measure(u.model));
    r.free_energy = beta * r.energy + r.entropy;
    r.mabuchi = r.free_energy;
    r.ding = ding(u, beta);
    r.ent_star = ent_star(u);
    r.script_energy = script_energy(u);
    return r;
}

}  // namespace kelab
