#include "kelab/acceptance.hpp"

#include "kelab/ensemble.hpp"
#include "kelab/na_stability.hpp"
#include "kelab/variational.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <map>
#include <random>

namespace kelab {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string num(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

LogSphere make_space(const std::vector<std::pair<SpherePoint, Rational>>& pts) {
    std::vector<LogPoint> lp;
    for (const auto& [p, w] : pts) lp.push_back({p, w});
    return LogSphere(lp);
}

LogSphere football(Rational c) {
    return make_space({{SpherePoint::finite(0.0), c}, {SpherePoint::infinity(), c}});
}

LogSphere triple(Rational a, Rational b, Rational c) {
    return make_space({{SpherePoint::finite(0.0), a}, {SpherePoint::infinity(), b}, {SpherePoint::finite(1.0), c}});
}

long smallest_level(const LogSphere& space) {
    for (long k = 1; k < 100000; ++k)
        if (space.level_admissible(k)) return k;
    throw ComputationError("no admissible level below 100000");
}

// Band masses of e^{βu}dV/Z on `bands` equal-width t-bands.
std::vector<double> ke_band_masses(const KeSolution& ke, double beta, int bands) {
    std::vector<double> out(bands, 0.0);
    const auto& m = *ke.u.model;
    for (const auto& q : m.grid().quad_points()) {
        double u = (1.0 - q.lambda) * ke.u.values[q.element] + q.lambda * ke.u.values[q.element + 1];
        int b = std::min(bands - 1, static_cast<int>(q.t * bands));
        out[b] += std::exp(beta * u - ke.log_normalizer) * q.w_dv;
    }
    return out;
}

std::vector<double> band_masses(const EmpiricalStats& st) {
    auto prof = empirical_density(st).band_profile();
    for (auto& v : prof) v /= static_cast<double>(prof.size());
    return prof;
}

// --------------------------------------------------------------------------------------------

void a1(CriterionResult& r) {
    LogSphere round;
    BasisSpec basis = bundle_basis(1, 1);
    bool ok = true;
    for (double beta : {0.5, 1.0}) {
        auto bf = brute_force_log_partition(round, basis, beta, 48);
        GibbsParams p;
        p.sweeps = 20000;
        p.burn_in = 1000;
        p.chains = 2;
        p.seed = 7;
        auto ti = log_partition(round, basis, beta, p, 20);
        double z = std::fabs(ti.value - bf.value) / ti.stderr_;
        double rel = std::fabs(bf.inf_tempered - bf.value) / std::fabs(bf.value);
        bool pass = z <= 3.0 && rel <= 0.01 && bf.inf_product >= bf.value - 1e-9;
        ok = ok && pass;
        std::string b = "beta=" + num(beta);
        r.details.push_back({b + " brute_force", num(bf.value)});
        r.details.push_back({b + " thermodynamic", num(ti.value) + " +- " + num(ti.stderr_)});
        r.details.push_back({b + " deviation_in_stderr", num(z)});
        r.details.push_back({b + " inf_tempered", num(bf.inf_tempered) + " (rel " + num(rel) + ")"});
        r.details.push_back({b + " inf_product", num(bf.inf_product)});
    }
    r.passed = ok;
    r.summary = "N=2 brute force vs thermodynamic integration and parametric inf";
}

void a2(CriterionResult& r) {
    LogSphere space = football(Rational(1, 2));
    SpherePartition part{8, 4};
    std::vector<double> expected(part.size());
    for (int b = 0; b < part.bands; ++b) {
        double lo = boost::math::ibeta(0.5, 0.5, static_cast<double>(b) / part.bands);
        double hi = boost::math::ibeta(0.5, 0.5, static_cast<double>(b + 1) / part.bands);
        for (int s = 0; s < part.sectors; ++s) expected[b * part.sectors + s] = (hi - lo) / part.sectors;
    }
    bool ok = true;
    for (long m : {15L, 63L}) {
        GibbsParams p;
        p.beta = 0.0;
        p.sweeps = 21000;
        p.burn_in = 1000;
        p.snapshot_every = 20;
        p.seed = 11;
        p.partition = part;
        auto st = mcmc_sample(space, bundle_basis(1, m), p);
        const auto& snaps = st.snapshots;
        auto counts_of = [&](std::size_t upto) {
            std::vector<double> c(part.size(), 0.0);
            for (std::size_t i = 0; i < upto; ++i)
                for (const auto& x : snaps[i].points) c[part.bin(x)] += 1.0;
            return c;
        };
        auto full = counts_of(snaps.size());
        double total = 0.0, chi2 = 0.0;
        for (double c : full) total += c;
        for (int i = 0; i < part.size(); ++i) {
            double e = expected[i] * total;
            chi2 += (full[i] - e) * (full[i] - e) / e;
        }
        boost::math::chi_squared dist(part.size() - 1);
        double pval = boost::math::cdf(boost::math::complement(dist, chi2));
        std::vector<double> tvs;
        for (std::size_t den : {64u, 16u, 4u, 1u}) {
            auto c = counts_of(snaps.size() / den);
            double t = 0.0;
            for (double v : c) t += v;
            for (double& v : c) v /= t;
            tvs.push_back(total_variation(c, expected));
        }
        bool mono = true;
        for (std::size_t i = 1; i < tvs.size(); ++i) mono = mono && tvs[i] < tvs[i - 1];
        ok = ok && pval > 0.01 && mono;
        std::string n = "N=" + std::to_string(m + 1);
        r.details.push_back({n + " chi2", num(chi2) + " (df " + std::to_string(part.size() - 1) + ")"});
        r.details.push_back({n + " p_value", num(pval)});
        std::string tv;
        for (double t : tvs) tv += (tv.empty() ? "" : ", ") + num(t);
        r.details.push_back({n + " tv_by_sample_count", tv});
    }
    r.passed = ok;
    r.summary = "beta=0 histogram against dV on the (1/2,1/2) football";
}

void a3(CriterionResult& r) {
    LogSphere round;
    auto ke = solve_ke(make_model(round, 400), -1.0);
    double hi = *std::max_element(ke.u.values.begin(), ke.u.values.end());
    double lo = *std::min_element(ke.u.values.begin(), ke.u.values.end());
    double var = hi - lo;
    r.passed = var < 1e-8 && ke.residual < 1e-10 && ke.reconstruction_error < 1e-8;
    r.details = {{"sup_variation", num(var)},
                 {"residual", num(ke.residual)},
                 {"reconstruction_error", num(ke.reconstruction_error)},
                 {"newton_iterations", std::to_string(ke.iterations)}};
    r.summary = "round sphere beta=-1";
}

void a4(CriterionResult& r) {
    const double c = 0.75, a = 1.0 - c;
    auto model = make_model(football(Rational(3, 4)), 400);
    auto ke = solve_ke(model, -1.0);
    // Pullback of the round metric under z ↦ z^{1−c}: μ/dV = a·B(a,a)/(t^a + (1−t)^a)².
    const double bab = std::exp(2.0 * std::lgamma(a) - std::lgamma(2.0 * a));
    double worst = 0.0;
    const auto& t = model->grid().t();
    const auto& tc = model->grid().t_complement();
    for (int i = 0; i < model->size(); ++i) {
        double s = std::pow(t[i], a) + std::pow(tc[i], a);
        double exact = a * bab / (s * s);
        worst = std::max(worst, std::fabs(ke.density[i] - exact) / exact);
    }
    r.passed = worst < 1e-4;
    r.details = {{"max_relative_error", num(worst)},
                 {"nodes", std::to_string(model->size())},
                 {"residual", num(ke.residual)}};
    r.summary = "(3/4,3/4) football against the conical closed form";
}

void a5(CriterionResult& r) {
    LogSphere space = football(Rational(1, 2));
    auto ke = solve_ke(make_model(space, 400), 1.0);
    auto target = ke_band_masses(ke, 1.0, 64);
    int wins = 0;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        std::vector<double> tv;
        for (long k : {24L, 98L}) {
            GibbsParams p;
            p.beta = 1.0;
            p.sweeps = 3000;
            p.burn_in = 300;
            p.seed = seed;
            p.partition = {64, 1};
            auto st = mcmc_sample(space, full_basis(space, k), p);
            tv.push_back(total_variation(band_masses(st), target));
        }
        bool pass = tv[1] < 0.1 && tv[1] < tv[0];
        wins += pass;
        r.details.push_back({"seed " + std::to_string(seed), "TV N=25 " + num(tv[0]) + ", N=99 " + num(tv[1])});
    }
    r.passed = wins >= 2;
    r.summary = std::to_string(wins) + "/3 seeds pass at beta=+1 on the (1/2,1/2) football";
}

void a6(CriterionResult& r) {
    LogSphere space = triple(Rational(1, 2), Rational(1, 2), Rational(1, 2));
    SpherePartition part{16, 16};
    // The orbifold (½,½,½) at {0, ∞, 1} is uniformized by h(w) = ((w² − 1)/(w² + 1))², and the
    // KE measure is the pushforward of Fubini–Study area, uniform in (t, θ) of w.
    std::vector<double> target(part.size(), 0.0);
    const int rt = 1500, ra = 3000;
    for (int i = 0; i < rt; ++i) {
        double t = (i + 0.5) / rt;
        for (int j = 0; j < ra; ++j) {
            std::complex<double> w = std::polar(std::sqrt(t / (1.0 - t)), 2.0 * kPi * (j + 0.5) / ra);
            std::complex<double> w2 = w * w;
            std::complex<double> h = (w2 - 1.0) / (w2 + 1.0);
            target[part.bin(SpherePoint::finite(h * h).vector())] += 1.0;
        }
    }
    for (double& v : target) v /= static_cast<double>(rt) * ra;

    const std::vector<long> levels{98, 198, 398};
    for (long k : levels) {
        auto verdict = gibbs_stability_check(space, k);
        if (verdict.verdict != Verdict::inconclusive_stable) {
            r.passed = false;
            r.summary = "pair fails the Gibbs stability check at k=" + std::to_string(k);
            return;
        }
    }
    int wins = 0;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        std::vector<double> tv;
        for (long k : levels) {
            GibbsParams p;
            p.beta = -1.0;
            p.sweeps = 4000;
            p.burn_in = 400;
            p.seed = seed;
            p.partition = part;
            auto st = mcmc_sample(space, full_basis(space, k), p);
            tv.push_back(total_variation(empirical_density(st).masses(), target));
        }
        bool pass = tv[2] < 0.15 && tv[1] < tv[0] && tv[2] < tv[1];
        wins += pass;
        r.details.push_back({"seed " + std::to_string(seed),
                             "TV N=50 " + num(tv[0]) + ", N=100 " + num(tv[1]) + ", N=200 " + num(tv[2])});
    }
    r.passed = wins >= 2;
    r.summary = std::to_string(wins) + "/3 seeds pass at beta=-1 on (1/2,1/2,1/2) [experimental]";
}

void a7(CriterionResult& r) {
    LogSphere round;
    bool ok = true;
    for (long k = 1; k <= 5; ++k) {
        Rational d = delta_k(round, k).value;
        ok = ok && d == 1;
        r.details.push_back({"P1 delta_" + std::to_string(k), rational_string(d)});
    }
    const std::vector<std::array<Rational, 3>> triples{{Rational(1, 2), Rational(1, 2), Rational(1, 2)},
                                                       {Rational(1, 3), Rational(1, 3), Rational(1, 3)},
                                                       {Rational(1, 2), Rational(1, 3), Rational(1, 4)},
                                                       {Rational(2, 3), Rational(1, 3), Rational(1, 5)},
                                                       {Rational(3, 5), Rational(1, 2), Rational(2, 3)}};
    for (const auto& w : triples) {
        LogSphere space = triple(w[0], w[1], w[2]);
        Rational closed = 2 * (1 - std::max({w[0], w[1], w[2]})) / (2 - w[0] - w[1] - w[2]);
        Rational d = delta(space).value;
        long k = smallest_level(space);
        Rational dk1 = delta_k(space, k).value, dk2 = delta_k(space, 2 * k).value;
        bool pass = d == closed && dk1 == closed && dk2 == closed;
        ok = ok && pass;
        r.details.push_back({"weights " + rational_string(w[0]) + "," + rational_string(w[1]) + "," +
                                 rational_string(w[2]),
                             "delta " + rational_string(d) + ", closed form " + rational_string(closed) +
                                 ", delta_k at k=" + std::to_string(k) + "," + std::to_string(2 * k) + ": " +
                                 rational_string(dk1) + "," + rational_string(dk2)});
    }
    r.passed = ok;
    r.summary = "exact delta_k on P1 and weight triples";
}

void a8(CriterionResult& r) {
    bool ok = true;
    auto run = [&](const std::string& name, const LogSphere& space, const CurveValuation& v, long step) {
        std::vector<long> levels;
        for (long i = 1; i <= 10; ++i) levels.push_back(i * step);
        auto tab = restriction_experiment(space, v, levels);
        ok = ok && tab.nonincreasing && tab.within_bound;
        std::string gaps;
        for (const auto& row : tab.rows) gaps += (gaps.empty() ? "" : " ") + rational_string(row.gap);
        r.details.push_back({name + " " + describe(v), "C=" + rational_string(tab.fitted_c) + " gaps " + gaps});
    };
    LogSphere round;
    run("P1", round, {SpherePoint::finite(0.0), 1}, 1);
    run("P1", round, {SpherePoint::infinity(), 2}, 1);
    run("P1", round, {SpherePoint::finite(1.0), 7}, 1);
    LogSphere fb = football(Rational(3, 4));
    long step = smallest_level(fb);
    run("football(3/4,3/4)", fb, {SpherePoint::finite(0.0), 1}, step);
    run("football(3/4,3/4)", fb, {SpherePoint::infinity(), 2}, step);
    run("football(3/4,3/4)", fb, {SpherePoint::finite(1.0), 1}, step);
    r.passed = ok;
    r.summary = "diagonal NA energy against S(v), levels k=1..10 (football: multiples of " + std::to_string(step) + ")";
}

void a9(CriterionResult& r) {
    bool ok = true;
    auto check = [&](const std::string& name, const LogSphere& space, long k) {
        auto c = lct_chain(space, k);
        bool pass = c.bound.has_value() && c.ordered;
        ok = ok && pass;
        r.details.push_back({name + " k=" + std::to_string(k),
                             "bound " + (c.bound ? rational_string(*c.bound) : std::string("none")) + " <= delta_k " +
                                 rational_string(c.delta_k) + " (examined " + std::to_string(c.examined) +
                                 ", zero-energy skipped " + std::to_string(c.skipped_zero_energy) + ")"});
    };
    LogSphere round;
    for (long k = 1; k <= 3; ++k) check("P1", round, k);
    check("(1/2,1/2,1/2)", triple(Rational(1, 2), Rational(1, 2), Rational(1, 2)), 2);
    check("(1/3,1/3,1/3)", triple(Rational(1, 3), Rational(1, 3), Rational(1, 3)), 3);
    r.passed = ok;
    r.summary = "lct upper bound <= delta_k^T";
}

void a10(CriterionResult& r) {
    auto round_model = make_model(LogSphere(), 200);
    auto dg = duality_gap(round_model);
    bool ok = std::fabs(dg.gap) < 1e-6;
    r.details.push_back({"inf F_-1", num(dg.inf_free_energy)});
    r.details.push_back({"inf dual", num(dg.inf_dual)});
    r.details.push_back({"gap", num(dg.gap)});

    std::mt19937_64 gen(20240611);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::vector<ModelPtr> models{round_model, make_model(football(Rational(1, 2)), 200)};
    int violations = 0, inputs = 0;
    double worst_fd_ma = 0.0, worst_fd_e = 0.0;
    for (int i = 0; i < 100; ++i) {
        const auto& model = models[i % 2];
        const auto& s = model->grid().s();
        std::vector<double> coef(5);
        for (double& c : coef) c = unif(gen);
        // Admissible by construction: u solves MA(u) = μ for a random positive density μ.
        Density mu{model, std::vector<double>(model->size())};
        double mass = 0.0;
        for (int j = 0; j < model->size(); ++j) {
            double v = 0.0;
            for (int q = 0; q < 5; ++q) v += coef[q] * std::cos((q + 1) * kPi * s[j]);
            mu.values[j] = std::exp(v);
            mass += mu.values[j] * model->dv_mass()[j];
        }
        for (double& v : mu.values) v /= mass;
        Potential u = solve_calabi_yau(mu);
        ++inputs;
        double m = mabuchi(u, -1.0), d = ding(u, -1.0);
        double ent = entropy(mu, reference_measure(model)), e = energy_of_measure(mu);
        violations += (m < d - 1e-12) + (ent < -1e-12) + (e < -1e-12);

        // d𝓔(u)[v] = ∫ v MA(u) and dE(μ)[ν] = −∫ u_μ dν with a mass-preserving ν.
        std::vector<double> dir(model->size());
        for (double& x : dir) x = unif(gen);
        const double h = 1e-5;
        Potential up = u, um = u;
        for (int j = 0; j < model->size(); ++j) {
            up.values[j] += h * dir[j];
            um.values[j] -= h * dir[j];
        }
        double fd = (script_energy(up) - script_energy(um)) / (2.0 * h);
        auto masses = model->apply_mass(mu.values);
        double an = 0.0;
        for (int j = 0; j < model->size(); ++j) an += dir[j] * masses[j];
        worst_fd_ma = std::max(worst_fd_ma, std::fabs(fd - an) / std::max(std::fabs(an), 1e-300));

        double shift = 0.0;
        for (int j = 0; j < model->size(); ++j) shift += dir[j] * model->dv_mass()[j];
        for (double& x : dir) x -= shift;  // Σ dv_mass = 1, so ∫ν = 0
        Density mp = mu, mm = mu;
        // E is quadratic in μ, so a large step costs no truncation error and keeps roundoff small.
        double dir_max = 0.0;
        for (double x : dir) dir_max = std::max(dir_max, std::fabs(x));
        double hh = std::min(1e-2, 0.5 * *std::min_element(mu.values.begin(), mu.values.end()) / dir_max);
        for (int j = 0; j < model->size(); ++j) {
            mp.values[j] += hh * dir[j];
            mm.values[j] -= hh * dir[j];
        }
        bool positive = *std::min_element(mm.values.begin(), mm.values.end()) >= 0.0 &&
                        *std::min_element(mp.values.begin(), mp.values.end()) >= 0.0;
        if (!positive) continue;
        double fde = (energy_of_measure(mp) - energy_of_measure(mm)) / (2.0 * hh);
        auto umu = solve_calabi_yau(mu);
        auto dn = model->apply_mass(dir);
        double ane = 0.0;
        for (int j = 0; j < model->size(); ++j) ane -= umu.values[j] * dn[j];
        worst_fd_e = std::max(worst_fd_e, std::fabs(fde - ane) / std::max(std::fabs(ane), 1e-300));
    }
    ok = ok && violations == 0 && worst_fd_ma < 1e-6 && worst_fd_e < 1e-6;
    r.details.push_back({"random inputs", std::to_string(inputs)});
    r.details.push_back({"inequality violations", std::to_string(violations)});
    r.details.push_back({"d script_E = MA max rel err", num(worst_fd_ma)});
    r.details.push_back({"dE = -u_mu max rel err", num(worst_fd_e)});
    r.passed = ok;
    r.summary = "duality gap, M>=D, Ent>=0, E>=0, first variations";
}

struct Entry {
    const char* title;
    double budget;
    void (*fn)(CriterionResult&);
};

const std::map<std::string, Entry>& registry() {
    static const std::map<std::string, Entry> r{
        {"A1", {"Gibbs variational principle at N=2", 120, a1}},
        {"A2", {"beta=0 Sanov baseline", 60, a2}},
        {"A3", {"round-sphere KE", 10, a3}},
        {"A4", {"football closed form", 30, a4}},
        {"A5", {"sampler vs variational density at beta=+1", 1200, a5}},
        {"A6", {"Fano-side convergence at beta=-1", 1800, a6}},
        {"A7", {"delta_k exactness", 5, a7}},
        {"A8", {"NA energy convergence", 5, a8}},
        {"A9", {"lct chain ordering", 60, a9}},
        {"A10", {"duality and inequality suite", 120, a10}},
    };
    return r;
}

}  // namespace

const std::vector<std::string>& acceptance_ids() {
    static const std::vector<std::string> ids{"A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "A9", "A10"};
    return ids;
}

CriterionResult run_criterion(const std::string& id) {
    auto it = registry().find(id);
    if (it == registry().end()) throw ValidationError("unknown acceptance criterion: " + id);
    CriterionResult r;
    r.id = id;
    r.title = it->second.title;
    r.budget_seconds = it->second.budget;
    auto t0 = std::chrono::steady_clock::now();
    try {
        it->second.fn(r);
    } catch (const std::exception& e) {
        r.passed = false;
        r.summary = std::string("error: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (r.seconds > r.budget_seconds) {
        r.passed = false;
        r.details.push_back({"runtime", "exceeded budget of " + num(r.budget_seconds) + " s"});
    }
    return r;
}

std::vector<CriterionResult> run_acceptance(const std::vector<std::string>& ids,
                                            const std::function<void(const CriterionResult&)>& on_result) {
    for (const auto& id : ids)
        if (!registry().count(id)) throw ValidationError("unknown acceptance criterion: " + id);
    std::vector<CriterionResult> out;
    for (const auto& id : ids) {
        out.push_back(run_criterion(id));
        if (on_result) on_result(out.back());
    }
    return out;
}

std::string result_line(const CriterionResult& r) {
    char t[32];
    std::snprintf(t, sizeof t, "%.1f", r.seconds);
    return r.id + (r.id.size() < 3 ? "  " : " ") + (r.passed ? "PASS " : "FAIL ") + r.title + ": " + r.summary +
           " [" + t + " s]";
}

std::string acceptance_json(const std::vector<CriterionResult>& results) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    bool all = true;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : results) {
        nlohmann::ordered_json e;
        e["id"] = r.id;
        e["title"] = r.title;
        e["passed"] = r.passed;
        e["summary"] = r.summary;
        e["seconds"] = r.seconds;
        e["budget_seconds"] = r.budget_seconds;
        nlohmann::ordered_json d = nlohmann::ordered_json::object();
        for (const auto& [k, v] : r.details) d[k] = v;
        e["details"] = d;
        arr.push_back(e);
        all = all && r.passed;
    }
    j["all_passed"] = all;
    j["criteria"] = arr;
    return j.dump(2) + "\n";
}

}  // namespace kelab
