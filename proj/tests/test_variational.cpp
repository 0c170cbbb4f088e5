#include "kelab/variational.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

using namespace kelab;

namespace {

LogSphere football(const char* c0, const char* c1) {
    return LogSphere({{SpherePoint::finite(0.0), parse_rational(c0)}, {SpherePoint::infinity(), parse_rational(c1)}});
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

// Smooth positive density exp(Σ a_q cos(qπs)) normalized to mass 1.
Density random_density(const ModelPtr& m, std::mt19937_64& rng, double amplitude = 0.6) {
    std::uniform_real_distribution<double> coef(-amplitude, amplitude);
    std::vector<double> a(5);
    for (double& x : a) x = coef(rng);
    Density d{m, std::vector<double>(m->size())};
    for (int i = 0; i < m->size(); ++i) {
        double s = m->grid().s()[i], e = 0.0;
        for (int q = 0; q < 5; ++q) e += a[q] * std::cos((q + 1) * std::numbers::pi * s);
        d.values[i] = std::exp(e);
    }
    double mass = d.mass();
    for (double& x : d.values) x /= mass;
    return d;
}

Potential random_potential(const ModelPtr& m, std::mt19937_64& rng) { return solve_calabi_yau(random_density(m, rng)); }

Potential plus(const Potential& u, const Potential& v, double s = 1.0) {
    Potential w = u;
    for (std::size_t i = 0; i < w.values.size(); ++i) w.values[i] += s * v.values[i];
    w.sup_normalized = false;
    return w;
}

Potential constant(const ModelPtr& m, double c) { return {m, std::vector<double>(m->size(), c), false}; }

// ∫ φ dμ for grid functions φ and μ (both piecewise linear).
double pair(const Density& mu, const std::vector<double>& phi) { return dot(phi, mu.model->apply_mass(mu.values)); }

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::fabs(a[i] - b[i]));
    return d;
}

}  // namespace

TEST_CASE("Monge-Ampere measure: reference, constants and affinity") {
    auto round = make_model(LogSphere(), 80);
    auto ma0 = monge_ampere(zero_potential(round));
    for (double v : ma0.values) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

    auto m = make_model(football("3/4", "1/2"), 80);
    std::mt19937_64 rng(1);
    auto u = random_potential(m, rng), w = random_potential(m, rng);
    auto a = monge_ampere(plus(u, w, 0.5)).values;
    auto b = monge_ampere(u).values;
    auto c = monge_ampere(Potential{m, [&] {
                                        auto x = w.values;
                                        for (double& y : x) y *= 0.5;
                                        return x;
                                    }(),
                                    false})
                 .values;
    auto z = monge_ampere(zero_potential(m)).values;
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::fabs(a[i] - b[i] - c[i] + z[i]) < 1e-12 * (1 + std::fabs(a[i])));
    CHECK(max_abs_diff(monge_ampere(constant(m, 3.7)).values, z) < 1e-12);
    CHECK(monge_ampere(u).mass() == doctest::Approx(1.0).epsilon(1e-12));

    // a spike in u makes the density negative
    auto bad = zero_potential(m);
    bad.values[40] = 5.0;
    CHECK_THROWS_WITH_AS(monge_ampere(bad), doctest::Contains("node 40"), ValidationError);
}

TEST_CASE("script energy: constants, first variation and concavity") {
    auto m = make_model(football("1/2", "1/3"), 100);
    CHECK(script_energy(zero_potential(m)) == 0.0);
    CHECK(script_energy(constant(m, -2.5)) == doctest::Approx(-2.5).epsilon(1e-13));

    std::mt19937_64 rng(2);
    const double h = 1e-4;
    for (int trial = 0; trial < 20; ++trial) {
        auto u = random_potential(m, rng);
        auto v = random_potential(m, rng);
        double fd = (script_energy(plus(u, v, h)) - script_energy(plus(u, v, -h))) / (2 * h);
        double exact = pair(monge_ampere(u), v.values);
        CHECK(std::fabs(fd - exact) <= 1e-6 * std::max(1.0, std::fabs(exact)));
        double second = script_energy(plus(u, v, 0.5)) - 2 * script_energy(u) + script_energy(plus(u, v, -0.5));
        CHECK(second <= 1e-10);
    }
}

TEST_CASE("entropy") {
    auto m = make_model(LogSphere(), 1000);
    auto ref = reference_measure(m);
    CHECK(entropy(ref, ref) == doctest::Approx(0.0));
    // ρ = 2 on t < 1/2, 0 beyond, linear across the two elements at t = 1/2: entropy log 2 − h
    Density two{m, std::vector<double>(m->size(), 0.0)};
    for (int i = 0; i < m->size(); ++i) {
        double t = m->grid().t()[i];
        two.values[i] = t < 0.5 - 1e-12 ? 2.0 : (std::fabs(t - 0.5) < 1e-12 ? 1.0 : 0.0);
    }
    CHECK(two.mass() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::fabs(entropy(two, ref) - (std::log(2.0) - 1e-3)) < 1e-6);

    std::mt19937_64 rng(4);
    auto fm = make_model(football("3/4", "3/4"), 100);
    for (int i = 0; i < 20; ++i) CHECK(entropy(random_density(fm, rng), reference_measure(fm)) > 0.0);
}

TEST_CASE("Calabi-Yau solve") {
    auto round = make_model(LogSphere(), 100);
    auto u0 = solve_calabi_yau(reference_measure(round));
    for (double v : u0.values) CHECK(std::fabs(v) < 1e-12);

    auto m = make_model(football("2/3", "1/5"), 150);
    std::mt19937_64 rng(5);
    for (int i = 0; i < 10; ++i) {
        auto mu = random_density(m, rng);
        auto u = solve_calabi_yau(mu);
        CHECK(*std::max_element(u.values.begin(), u.values.end()) == 0.0);
        auto back = m->apply_mass(monge_ampere(u).values);
        auto target = m->apply_mass(mu.values);
        double l1 = 0.0;
        for (std::size_t j = 0; j < back.size(); ++j) l1 += std::fabs(back[j] - target[j]);
        CHECK(l1 < 1e-10);
        auto shifted = plus(u, constant(m, 1.3));
        auto again = solve_calabi_yau(monge_ampere(shifted));
        CHECK(max_abs_diff(again.values, u.values) < 1e-9);
    }
    Density heavy = reference_measure(m);
    for (double& v : heavy.values) v *= 2;
    CHECK_THROWS_AS(solve_calabi_yau(heavy), ValidationError);
}

TEST_CASE("pluricomplex energy") {
    auto round = make_model(LogSphere(), 100);
    CHECK(std::fabs(energy_of_measure(reference_measure(round))) < 1e-14);
    // E vanishes exactly at MA(0)
    auto m = make_model(football("3/4", "1/2"), 120);
    CHECK(std::fabs(energy_of_measure(monge_ampere(zero_potential(m)))) < 1e-14);

    std::mt19937_64 rng(6);
    for (int i = 0; i < 50; ++i) CHECK(energy_of_measure(random_density(m, rng)) >= 0.0);

    // dE = −u_μ along mass-preserving directions
    for (int i = 0; i < 20; ++i) {
        auto mu = random_density(m, rng, 0.3);
        auto nu = random_density(m, rng, 0.3);
        Density dir{m, std::vector<double>(m->size())};
        for (int j = 0; j < m->size(); ++j) dir.values[j] = nu.values[j] - mu.values[j];
        const double eps = 1e-3;
        auto at = [&](double s) {
            Density d = mu;
            for (int j = 0; j < m->size(); ++j) d.values[j] += s * dir.values[j];
            return energy_of_measure(d);
        };
        double fd = (at(eps) - at(-eps)) / (2 * eps);
        double exact = -pair(dir, solve_calabi_yau(mu).values);
        CHECK(std::fabs(fd - exact) <= 1e-6 * std::max(1.0, std::fabs(exact)));
    }

    // 𝓔(u) = ⟨MA(u), u⟩ + E(MA(u))
    for (int i = 0; i < 10; ++i) {
        auto u = plus(random_potential(m, rng), constant(m, 0.7));
        auto mu = monge_ampere(u);
        CHECK(script_energy(u) == doctest::Approx(pair(mu, u.values) + energy_of_measure(mu)).epsilon(1e-10));
    }
}

TEST_CASE("free energy") {
    auto round = make_model(LogSphere(), 100);
    for (double beta : {-1.0, 0.5, 2.0}) CHECK(std::fabs(free_energy(reference_measure(round), beta)) < 1e-14);

    auto m = make_model(football("1/2", "1/2"), 100);
    std::mt19937_64 rng(7);
    for (int i = 0; i < 10; ++i) {
        auto a = random_density(m, rng), b = random_density(m, rng);
        auto mix = [&](double s) {
            Density d = a;
            for (int j = 0; j < m->size(); ++j) d.values[j] = (1 - s) * a.values[j] + s * b.values[j];
            return free_energy(d, 1.0);
        };
        CHECK(mix(0.0) - 2 * mix(0.5) + mix(1.0) >= -1e-10);
    }
}

TEST_CASE("Ent* and Ding functional") {
    auto m = make_model(football("3/4", "3/4"), 100);
    CHECK(std::fabs(ent_star(zero_potential(m))) < 1e-13);
    CHECK(ent_star(constant(m, 0.8)) == doctest::Approx(0.8).epsilon(1e-12));
    std::mt19937_64 rng(8);
    auto dv = reference_measure(m);
    for (int i = 0; i < 10; ++i) {
        auto u = random_potential(m, rng);
        CHECK(ent_star(u) <= pair(dv, u.values) + 1e-12);
    }
    for (double beta : {-1.0, 0.5, 2.0}) CHECK(std::fabs(ding(constant(m, 1.9), beta)) < 1e-12);
    auto u = random_potential(m, rng);
    double limit = -script_energy(u) + pair(dv, u.values);
    CHECK(std::fabs(ding(u, 1e-4) - limit) < 1e-3 * std::fabs(limit) + 1e-4);
    CHECK(std::fabs(ding(u, 1e-5) - limit) < std::fabs(ding(u, 1e-4) - limit));
}

TEST_CASE("Mabuchi against Ding on random admissible potentials") {
    // M_β(u) ≥ |β|·D_β(u) for β < 0 (Gibbs variational inequality); β = −1 is M ≥ D.
    std::mt19937_64 rng(9);
    for (auto space : {LogSphere(), football("1/2", "1/2"), football("3/4", "1/3")}) {
        auto m = make_model(space, 120);
        for (int i = 0; i < 100; ++i) {
            auto u = random_potential(m, rng);
            for (double beta : {-1.0, -0.5}) CHECK(mabuchi(u, beta) >= -beta * ding(u, beta) - 1e-12);
            auto shifted = plus(u, constant(m, -4.2));
            CHECK(mabuchi(shifted, -1.0) == doctest::Approx(mabuchi(u, -1.0)).epsilon(1e-10));
        }
    }
    auto round = make_model(LogSphere(), 50);
    CHECK(std::fabs(mabuchi(zero_potential(round), -1.0)) < 1e-14);
}

TEST_CASE("Kahler-Einstein solve on the round sphere") {
    auto m = make_model(LogSphere(), 200);
    auto ke = solve_ke(m, -1.0);
    CHECK(ke.residual < 1e-10);
    double lo = *std::min_element(ke.u.values.begin(), ke.u.values.end());
    double hi = *std::max_element(ke.u.values.begin(), ke.u.values.end());
    CHECK(hi - lo < 1e-8);

    auto zero = solve_ke(m, 0.0);
    for (double v : zero.u.values) CHECK(std::fabs(v) < 1e-12);

    // β = +1 on a football: the solution minimizes F_1 among random competitors
    auto fm = make_model(football("1/2", "1/2"), 200);
    auto pos = solve_ke(fm, 1.0);
    CHECK(pos.residual < 1e-10);
    // reconstruction u = (1/β) log(μ/dV) is second order in the element width off the round sphere
    auto finer = solve_ke(make_model(football("1/2", "1/2"), 400), 1.0);
    double order = std::log2(pos.reconstruction_error / finer.reconstruction_error);
    CHECK(order > 1.8);
    CHECK(order < 2.2);
    CHECK(solve_ke(make_model(LogSphere(), 200), 1.0).reconstruction_error < 1e-8);
    double f_star = free_energy(pos.mu, 1.0);
    std::mt19937_64 rng(10);
    for (int i = 0; i < 20; ++i) CHECK(f_star < free_energy(random_density(fm, rng), 1.0));
    // and among small perturbations of itself
    for (int i = 0; i < 50; ++i) {
        auto noise = random_density(fm, rng, 0.2);
        Density d = pos.mu;
        for (int j = 0; j < fm->size(); ++j) d.values[j] = 0.97 * d.values[j] + 0.03 * noise.values[j];
        CHECK(f_star <= free_energy(d, 1.0) + 1e-8);
    }
}

TEST_CASE("Kahler-Einstein solve on a (3/4,3/4) football matches the conical closed form") {
    // Constant curvature with cone angle 2π(1 − c) at both poles: μ/dV = a·B(a,a)/(t^a + (1 − t)^a)², a = 1 − c.
    auto m = make_model(football("3/4", "3/4"), 400);
    auto ke = solve_ke(m, -1.0);
    CHECK(ke.residual < 1e-10);
    const double a = 0.25;
    const double beta_aa = std::tgamma(a) * std::tgamma(a) / std::tgamma(2 * a);
    double worst = 0.0;
    for (int i = 0; i < m->size(); ++i) {
        double t = m->grid().t()[i], tc = m->grid().t_complement()[i];
        double expected = a * beta_aa / std::pow(std::pow(t, a) + std::pow(tc, a), 2);
        worst = std::max(worst, std::fabs(ke.density[i] / expected - 1.0));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("duality of infima at beta = -1") {
    auto gap = duality_gap(make_model(LogSphere(), 100));
    CHECK(std::fabs(gap.gap) < 1e-8);
    CHECK(std::fabs(gap.inf_free_energy) < 1e-8);
    auto fb = duality_gap(make_model(football("3/4", "3/4"), 100));
    CHECK(std::fabs(fb.gap) < 1e-6);
}

TEST_CASE("coercivity scan") {
    CoercivityOptions opts;
    opts.elements = 40;
    auto rep = coercivity_scan(LogSphere(), {-0.5, -0.8, -1.2, -1.6}, opts);
    CHECK(rep.label == "heuristic");
    REQUIRE(rep.last_stable);
    REQUIRE(rep.first_dive);
    CHECK(*rep.last_stable >= -1.0);
    CHECK(*rep.first_dive <= -1.0);
    for (auto space : {football("1/2", "1/2"), football("3/4", "1/3")}) {
        auto small = coercivity_scan(space, {-0.1}, opts);
        CHECK_FALSE(small.rows.front().dives);
    }
    CHECK_THROWS_AS(coercivity_scan(LogSphere(), {0.5}), ValidationError);
}
