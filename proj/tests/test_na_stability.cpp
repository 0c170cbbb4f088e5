#include "kelab/na_stability.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

using namespace kelab;

namespace {

const SpherePoint kZero = SpherePoint::finite(0.0);
const SpherePoint kInfinity = SpherePoint::infinity();
const SpherePoint kOne = SpherePoint::finite(1.0);

Rational q(long a, long b = 1) { return Rational(a, b); }

LogSphere triple(Rational a, Rational b, Rational c) {
    return LogSphere({{kZero, a}, {kInfinity, b}, {kOne, c}});
}

LogSphere football(Rational a, Rational b) { return LogSphere({{kZero, a}, {kInfinity, b}}); }

Rational brute_force_assignment(const std::vector<std::vector<Rational>>& cost) {
    std::vector<int> perm(cost.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::optional<Rational> best;
    do {
        Rational s = 0;
        for (std::size_t j = 0; j < perm.size(); ++j) s += cost[perm[j]][j];
        if (!best || s < *best) best = s;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return *best;
}

// Closed form for three log points: δ = 2(1 − max c)/(2 − Σ c).
Rational triple_delta(Rational a, Rational b, Rational c) {
    return 2 * (1 - std::max({a, b, c})) / (2 - a - b - c);
}

}  // namespace

TEST_CASE("log discrepancy") {
    LogSphere round;
    CHECK(log_discrepancy(round, {SpherePoint::finite({0.3, 0.2})}) == 1);
    auto t = triple(q(1, 2), q(1, 3), q(1, 4));
    CHECK(log_discrepancy(t, {kZero}) == q(1, 2));
    CHECK(log_discrepancy(t, {kOne, q(2)}) == q(3, 2));
    ToricFano segment({{-1}, {1}});
    CHECK(log_discrepancy(segment, {{1}}) == 1);
    CHECK(log_discrepancy(segment, {{-3}, q(1, 3)}) == 1);
    ToricFano square({{-1, -1}, {1, -1}, {1, 1}, {-1, 1}});
    CHECK(log_discrepancy(square, {{1, 1}}) == 2);
    CHECK_THROWS_AS(log_discrepancy(square, {{0, 0}}), ValidationError);
}

TEST_CASE("expected vanishing order") {
    LogSphere round;
    for (long k = 1; k <= 5; ++k) {
        Rational sum = 0;
        for (long i = 0; i <= 2 * k; ++i) sum += i;
        CHECK(sum / (k * (2 * k + 1)) == 1);
        CHECK(expected_vanishing(round, {kZero}, k) == 1);
        CHECK(expected_vanishing(round, {kOne}, k) == 1);
    }
    CHECK(expected_vanishing(round, {kZero}) == 1);
    for (Rational c : {q(1, 2), q(3, 4), q(2, 3)}) {
        auto fb = football(c, c);
        CHECK(expected_vanishing(fb, {kZero}) == 1 - c);
        // level-k summation of orders 0..m_k at the admissible levels
        for (long k = 1; k <= 12; ++k) {
            if (!fb.level_admissible(k)) continue;
            Rational m = k * (2 - 2 * c), sum = 0;
            for (long i = 0; i <= static_cast<long>(m); ++i) sum += i;
            CHECK(expected_vanishing(fb, {kZero}, k) == sum / (k * (m + 1)));
        }
    }
    CHECK_THROWS_AS(expected_vanishing(round, {kZero}, 0), ValidationError);

    // toric: average of ⟨m, a⟩ − k·min_P⟨y, a⟩ over the lattice points of kP, divided by k
    ToricFano square({{-1, -1}, {1, -1}, {1, 1}, {-1, 1}});
    CHECK(expected_vanishing(square, {{1, 0}}) == 1);
    ToricFano two_points({{-1, -1}, {1, -1}, {1, 0}, {0, 1}, {-1, 1}});
    for (std::vector<long> a : {std::vector<long>{1, 0}, {1, 1}, {-1, 0}, {2, -1}}) {
        Rational s = expected_vanishing(two_points, {a});
        Rational worst = 0;
        for (long k = 1; k <= 6; ++k) {
            auto pts = lattice_points(two_points, k);
            long lo = 0;
            bool first = true;
            for (const auto& m : pts) {
                long v = m[0] * a[0] + m[1] * a[1];
                lo = first ? v : std::min(lo, v);
                first = false;
            }
            Rational sum = 0;
            for (const auto& m : pts) sum += m[0] * a[0] + m[1] * a[1] - lo;
            Rational sk = sum / (k * static_cast<long>(pts.size()));
            CHECK(expected_vanishing(two_points, {a}, k) == sk);
            worst = std::max(worst, Rational(abs(sk - s) * k));
        }
        CHECK(worst <= 3);
    }
}

TEST_CASE("delta_k and delta on curves") {
    LogSphere round;
    for (long k = 1; k <= 5; ++k) CHECK(delta_k(round, k).value == 1);
    auto d = delta(round);
    CHECK(d.value == 1);

    auto fb = football(q(3, 4), q(3, 4));
    CHECK(delta_k(fb, 4).value == 1);
    CHECK(log_discrepancy(fb, {generic_point(fb)}) / expected_vanishing(fb, {generic_point(fb)}) == 4);

    auto t = triple(q(1, 2), q(1, 2), q(1, 2));
    CHECK(delta_k(t, 2).value == 2);
    CHECK(delta(t).value == 2);
    CHECK(delta(t).witness == describe(CurveValuation{kZero}));

    // closed form validated against level-k enumeration
    for (auto w : std::vector<std::array<Rational, 3>>{{q(1, 2), q(1, 3), q(1, 4)},
                                                        {q(2, 3), q(1, 3), q(1, 5)},
                                                        {q(1, 3), q(1, 3), q(1, 3)}}) {
        auto s = triple(w[0], w[1], w[2]);
        CHECK(delta(s).value == triple_delta(w[0], w[1], w[2]));
        long k = 1;
        while (!s.level_admissible(k)) ++k;
        CHECK(delta_k(s, k).value == triple_delta(w[0], w[1], w[2]));
        CHECK(delta_k(s, 2 * k).value == triple_delta(w[0], w[1], w[2]));
    }
    auto heavy = triple(q(3, 4), q(3, 4), q(3, 4));
    CHECK_THROWS_WITH_AS(delta(heavy), doctest::Contains("not log Fano"), ValidationError);
}

TEST_CASE("delta on toric Fano polytopes") {
    ToricFano segment({{-1}, {1}});
    CHECK(delta(segment).value == 1);
    ToricFano square({{-1, -1}, {1, -1}, {1, 1}, {-1, 1}});
    auto sq = delta(square);
    CHECK(sq.value == 1);
    CHECK(sq.interior);
    CHECK(sq.warnings.empty());
    ToricFano p2({{-1, -1}, {2, -1}, {-1, 2}});
    CHECK(delta(p2).value == 1);
    for (long k = 1; k <= 3; ++k) CHECK(delta_k(p2, k).value >= delta(p2).value);
    ToricFano blowup({{-1, -1}, {2, -1}, {0, 1}, {-1, 1}});
    CHECK(delta(blowup).value == q(6, 7));
    ToricFano two_points({{-1, -1}, {1, -1}, {1, 0}, {0, 1}, {-1, 1}});
    CHECK(delta(two_points).value == q(21, 25));
    auto cramped = delta(p2, 1);
    CHECK_FALSE(cramped.interior);
    REQUIRE(cramped.warnings.size() == 1);
    CHECK(cramped.warnings.front().find("increase search radius") != std::string::npos);
}

TEST_CASE("F_NA and homogeneity") {
    LogSphere round;
    CHECK(f_na(round, {kZero}) == 0);
    auto t = triple(q(1, 2), q(1, 2), q(1, 2));
    CHECK(expected_vanishing(t, {kZero}) == q(1, 4));
    CHECK(f_na(t, {kZero}) == q(1, 4));
    ToricFano two_points({{-1, -1}, {1, -1}, {1, 0}, {0, 1}, {-1, 1}});
    auto t2 = triple(q(1, 2), q(1, 3), q(1, 4));
    for (Rational c : {q(1), q(2), q(7)}) {
        for (const auto& p : {kZero, kInfinity, kOne, generic_point(t2)}) {
            CurveValuation v{p, c};
            CHECK(log_discrepancy(t2, v) == c * log_discrepancy(t2, {p}));
            CHECK(expected_vanishing(t2, v) == c * expected_vanishing(t2, {p}));
            CHECK(expected_vanishing(t2, v, 12) == c * expected_vanishing(t2, {p}, 12));
            CHECK(f_na(t2, v) == c * f_na(t2, {p}));
            CHECK(log_discrepancy(t2, v) / expected_vanishing(t2, v) == log_discrepancy(t2, {p}) / expected_vanishing(t2, {p}));
        }
        ToricValuation tv{{1, 1}, c};
        CHECK(f_na(two_points, tv) == c * f_na(two_points, {{1, 1}}));
        auto basis = full_basis(t2, 12);
        std::vector<CurveValuation> prod(basis.size(), CurveValuation{kZero, c});
        CHECK(na_energy_per_particle(prod, basis) == c * expected_vanishing(t2, {kZero}, 12));
        std::vector<ToricValuation> tprod(lattice_points(two_points, 2).size(), tv);
        CHECK(na_energy_per_particle(two_points, tprod, 2) == c * expected_vanishing(two_points, {{1, 1}}, 2));
    }
}

TEST_CASE("exact assignment against brute-force permutations") {
    std::mt19937_64 rng(41);
    std::uniform_int_distribution<int> num(0, 30), den(1, 6);
    for (int n = 1; n <= 7; ++n) {
        for (int trial = 0; trial < 6; ++trial) {
            std::vector<std::vector<Rational>> cost(n, std::vector<Rational>(n));
            for (auto& row : cost)
                for (auto& c : row) c = Rational(num(rng), den(rng));
            auto [value, rows] = min_cost_assignment(cost);
            CHECK(value == brute_force_assignment(cost));
            Rational check = 0;
            std::vector<int> sorted = rows;
            std::sort(sorted.begin(), sorted.end());
            for (int j = 0; j < n; ++j) {
                CHECK(sorted[j] == j);
                check += cost[rows[j]][j];
            }
            CHECK(check == value);
        }
    }
}

TEST_CASE("non-Archimedean energy per particle") {
    LogSphere round;
    auto basis = full_basis(round, 1);
    REQUIRE(basis.size() == 3);
    std::vector<CurveValuation> diag(3, CurveValuation{kZero});
    // cost rows (0, 1, 2), constant along each row
    std::vector<std::vector<Rational>> cost(3, std::vector<Rational>(3));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) cost[i][j] = basis_order(basis, i, diag[j]);
    CHECK(brute_force_assignment(cost) == 3);
    CHECK(na_energy_per_particle(diag, basis) == 1);
    CHECK(na_energy_per_particle(diag, basis) == expected_vanishing(round, {kZero}, 1));

    std::vector<CurveValuation> mixed{{kZero}, {kInfinity}, {generic_point(round)}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) cost[i][j] = basis_order(basis, i, mixed[j]);
    CHECK(na_energy_per_particle(mixed, basis) == brute_force_assignment(cost) / 3);
    CHECK(na_energy_per_particle(mixed, basis) < na_energy_per_particle(diag, basis));

    std::vector<CurveValuation> generic(3, CurveValuation{generic_point(round)});
    CHECK(na_energy_per_particle(generic, basis) == 0);
    CHECK_THROWS_AS(na_energy_per_particle(std::vector<CurveValuation>(2, CurveValuation{kZero}), basis), ValidationError);

    // brute force on larger mixed products
    auto t = triple(q(1, 2), q(1, 2), q(1, 2));
    auto b4 = full_basis(t, 12);
    REQUIRE(b4.size() == 7);
    std::vector<CurveValuation> mix7{{kZero}, {kZero, 2}, {kInfinity}, {kOne}, {kOne, 2}, {kInfinity, 2}, {kZero}};
    std::vector<std::vector<Rational>> c7(7, std::vector<Rational>(7));
    for (const auto& centre : {kZero, kOne}) {
        for (int i = 0; i < 7; ++i)
            for (int j = 0; j < 7; ++j) c7[i][j] = basis_order(b4, i, mix7[j], centre);
        CHECK(na_energy_per_particle(mix7, b4, centre) == brute_force_assignment(c7) / (7 * 12));
    }
}

TEST_CASE("lct chain") {
    LogSphere round;
    for (long k = 1; k <= 3; ++k) {
        auto r = lct_chain(round, k);
        REQUIRE(r.bound);
        CHECK(*r.bound <= delta_k(round, k).value);
        CHECK(r.ordered);
        CHECK(r.delta_k == 1);
    }
    auto t = triple(q(1, 2), q(1, 2), q(1, 2));
    auto r = lct_chain(t, 2);
    REQUIRE(r.bound);
    REQUIRE(r.margin);
    CHECK(*r.bound >= 1);
    CHECK(*r.bound <= r.delta_k);
    CHECK(*r.margin == r.delta_k - *r.bound);
    CHECK(r.skipped_zero_energy > 0);

    // diagonal valuations recover A(v)/S_k(v)
    for (long k : {2L, 4L}) {
        auto basis = full_basis(t, k);
        for (const auto& p : {kZero, kInfinity, kOne}) {
            std::vector<CurveValuation> diag(basis.size(), CurveValuation{p});
            Rational a_total = log_discrepancy(t, {p}) * static_cast<long>(basis.size());
            SpherePoint centre = p.at_infinity ? kZero : p;
            Rational ratio = a_total / (static_cast<long>(basis.size()) * na_energy_per_particle(diag, basis, centre));
            CHECK(ratio == log_discrepancy(t, {p}) / expected_vanishing(t, {p}, k));
        }
    }
}

TEST_CASE("restriction experiment") {
    LogSphere round;
    std::vector<long> levels{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    auto tab = restriction_experiment(round, {kZero}, levels);
    REQUIRE(tab.rows.size() == 10);
    for (const auto& row : tab.rows) CHECK(row.gap == 0);
    CHECK(tab.nonincreasing);
    CHECK(tab.within_bound);

    auto fb = football(q(3, 4), q(3, 4));
    auto ft = restriction_experiment(fb, {kZero}, {4, 8, 12, 16, 20});
    CHECK(ft.nonincreasing);
    CHECK(ft.within_bound);
    for (const auto& row : ft.rows) CHECK(row.limit == q(1, 4));

    auto doubled = restriction_experiment(round, {kZero, 2}, levels);
    for (std::size_t i = 0; i < levels.size(); ++i) {
        CHECK(doubled.rows[i].energy == 2 * tab.rows[i].energy);
        CHECK(doubled.rows[i].limit == 2 * tab.rows[i].limit);
    }

    // Bl_p P²: S_k − S = 1/(24k + 12) for v = (1, 1), so k·gap rises to 1/24
    ToricFano blowup({{-1, -1}, {2, -1}, {0, 1}, {-1, 1}});
    auto tt = restriction_experiment(blowup, {{1, 1}}, {1, 2, 3, 4, 5, 6});
    for (const auto& row : tt.rows) CHECK(row.gap == Rational(1, 24 * row.k + 12));
    CHECK(tt.nonincreasing);
    CHECK(tt.within_bound);
    CHECK(tt.fitted_c == Rational(6, 156));
    for (const auto& row : tt.rows) CHECK(row.gap * row.k <= tt.fitted_c);
}

TEST_CASE("Gibbs stability verdicts") {
    auto p1 = gibbs_stability_check(LogSphere(), 1);
    CHECK(p1.verdict == Verdict::inconclusive);
    CHECK(p1.note.find("δ=1 boundary case") != std::string::npos);

    auto t = gibbs_stability_check(triple(q(1, 2), q(1, 2), q(1, 2)), 2);
    CHECK(verdict_name(t.verdict) == "INCONCLUSIVE-STABLE");
    REQUIRE(t.chain.margin);

    // unequal weights at the poles: the heavier pole drives δ below 1
    auto uneven = gibbs_stability_check(football(q(1, 2), q(1, 4)), 4);
    CHECK(uneven.verdict == Verdict::unstable);
    CHECK(uneven.chain.witness.find("ord_0") != std::string::npos);

    // (0.99, 0.99): the generic ratio is 1/S = 100 but the pole ratio is 1
    auto sharp = football(q(99, 100), q(99, 100));
    CHECK(log_discrepancy(sharp, {generic_point(sharp)}) / expected_vanishing(sharp, {generic_point(sharp)}) == 100);
    auto sv = gibbs_stability_check(sharp, 100);
    REQUIRE(sv.chain.bound);
    CHECK(*sv.chain.bound == 1);
    CHECK(sv.verdict == Verdict::inconclusive);
}
