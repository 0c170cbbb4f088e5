#include "kelab/geometry.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace kelab;

namespace {

LogSphere football(const char* c0, const char* c1) {
    return LogSphere({{SpherePoint::finite(0.0), parse_rational(c0)}, {SpherePoint::infinity(), parse_rational(c1)}});
}

double dv_mass(const LogSphere& s, int radial = 384, int angular = 128) {
    std::vector<Vec3> pts;
    std::vector<double> w;
    for (const auto& p : s.log_points()) {
        pts.push_back(p.point.vector());
        w.push_back(to_double(p.weight));
    }
    return integrate_sphere([&](const Vec3& x, const std::vector<double>&) { return std::exp(s.log_density(x)); }, pts, w,
                            radial, angular);
}

}  // namespace

TEST_CASE("sphere coordinates: poles, moment coordinate and chordal distance") {
    auto s = SpherePoint::finite(0.0);
    auto n = SpherePoint::infinity();
    CHECK(s.t() == 0.0);
    CHECK(n.t() == 1.0);
    CHECK(chordal_sq(s, n) == doctest::Approx(1.0));
    auto z = SpherePoint::finite({1.0, 0.0});
    CHECK(z.t() == doctest::Approx(0.5));
    CHECK(chordal_sq(z, s) == doctest::Approx(0.5));
    // |z − w|² / ((1 + |z|²)(1 + |w|²)) against the vector form
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    for (int i = 0; i < 50; ++i) {
        std::complex<double> a{g(rng), g(rng)}, b{g(rng), g(rng)};
        double direct = std::norm(a - b) / ((1 + std::norm(a)) * (1 + std::norm(b)));
        auto pa = SpherePoint::finite(a), pb = SpherePoint::finite(b);
        CHECK(chordal_sq(pa.vector(), pb.vector()) == doctest::Approx(direct).epsilon(1e-12));
        CHECK(std::abs(moment_t(pa.vector()) - std::norm(a) / (1 + std::norm(a))) < 1e-14);
        auto back = SpherePoint::from_vector(pa.vector());
        CHECK(std::abs(back.z - a) < 1e-12 * (1 + std::abs(a)));
    }
}

TEST_CASE("log sphere validation") {
    CHECK_THROWS_WITH_AS(LogSphere({{SpherePoint::finite(0.0), parse_rational("6/5")}}), "non-klt pair", ValidationError);
    CHECK_THROWS_WITH_AS(LogSphere({{SpherePoint::finite(0.0), Rational(1)}}), "non-klt pair", ValidationError);
    CHECK_THROWS_AS(LogSphere({{SpherePoint::finite(1.0), Rational(1, 2)}, {SpherePoint::finite(1.0), Rational(1, 3)}}),
                    ValidationError);
    auto fb = football("3/4", "3/4");
    CHECK(fb.anticanonical_degree() == Rational(1, 2));
    CHECK(fb.level_admissible(4));
    CHECK_FALSE(fb.level_admissible(2));
    CHECK_THROWS_AS(fb.require_level(2), ValidationError);
    CHECK(fb.is_polar());
    CHECK(fb.warnings().empty());
    auto sharp = LogSphere({{SpherePoint::finite(0.0), parse_rational("0.999")}});
    CHECK(sharp.warnings().size() == 1);
    CHECK(std::isfinite(sharp.log_normalization()));
}

TEST_CASE("lattice points of dilated polytopes") {
    ToricFano segment({{-1}, {1}});
    auto p1 = lattice_points(segment, 1);
    CHECK(p1 == std::vector<std::vector<long>>{{-1}, {0}, {1}});
    for (long k = 1; k <= 5; ++k) CHECK(lattice_points(segment, k).size() == static_cast<std::size_t>(2 * k + 1));

    ToricFano square({{-1, -1}, {1, -1}, {1, 1}, {-1, 1}});
    CHECK(square.reflexive());
    CHECK(lattice_points(square, 1).size() == 9);
    for (long k = 1; k <= 4; ++k) CHECK(lattice_points(square, k).size() == static_cast<std::size_t>((2 * k + 1) * (2 * k + 1)));

    // P²: triangle with half-planes x ≥ −1, y ≥ −1, x + y ≤ 1
    ToricFano triangle({{-1, -1}, {2, -1}, {-1, 2}});
    CHECK(triangle.reflexive());
    std::size_t previous = 0;
    for (long k = 1; k <= 5; ++k) {
        std::vector<std::vector<long>> brute;
        for (long x = -2 * k; x <= 2 * k; ++x)
            for (long y = -2 * k; y <= 2 * k; ++y)
                if (x >= -k && y >= -k && x + y <= k) brute.push_back({x, y});
        auto pts = lattice_points(triangle, k);
        CHECK(pts == brute);
        CHECK(pts.size() >= previous);
        CHECK(pts.size() == static_cast<std::size_t>((3 * k + 1) * (3 * k + 2) / 2));
        previous = pts.size();
    }
    CHECK_THROWS_AS(ToricFano({{0, 0}, {1, 0}, {0, 1}}), ValidationError);
    CHECK_THROWS_AS(ToricFano({{-1, 0}, {1, 0}}), ValidationError);
}

TEST_CASE("quadrature rule") {
    std::vector<double> nodes(101), ones(101), lin(101), sq(101), cube(101);
    for (int i = 0; i <= 100; ++i) {
        double t = i / 100.0;
        t = t * t * (3 - 2 * t);  // nonuniform nodes
        nodes[i] = t;
        ones[i] = 1;
        lin[i] = t;
        sq[i] = t * t;
        cube[i] = t * t * t;
    }
    CHECK(quadrature(nodes, ones) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(quadrature(nodes, lin) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(std::abs(quadrature(nodes, sq) - 1.0 / 3.0) < 1e-10);
    CHECK(std::abs(quadrature(nodes, cube) - 0.25) < 1e-12);
    auto bad = ones;
    bad[7] = std::nan("");
    CHECK_THROWS(quadrature(nodes, bad));
}

TEST_CASE("reference density of the round sphere is uniform in t") {
    auto prof = reference_density(LogSphere(), 50);
    for (double d : prof.density) CHECK(d == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(prof.mass - 1.0) < 1e-12);
}

TEST_CASE("reference density of the (1/2,1/2) football") {
    auto prof = reference_density(football("1/2", "1/2"), 200);
    CHECK(std::abs(prof.mass - 1.0) < 1e-12);
    // dV/dt = t^{-1/2}(1 − t)^{-1/2}/π
    for (std::size_t i = 1; i + 1 < prof.t.size(); ++i) {
        double t = prof.t[i];
        double expected = 1.0 / (std::numbers::pi * std::sqrt(t * (1 - t)));
        CHECK(prof.density[i] == doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("dV has unit mass and is invariant under relabeling") {
    std::vector<LogPoint> pts{{SpherePoint::finite(0.0), Rational(1, 2)},
                              {SpherePoint::infinity(), Rational(1, 3)},
                              {SpherePoint::finite({1.0, 0.5}), Rational(1, 4)}};
    LogSphere a(pts);
    std::reverse(pts.begin(), pts.end());
    LogSphere b(pts);
    CHECK(std::abs(dv_mass(a, 512, 192) - 1.0) < 1e-10);
    CHECK(std::abs(a.log_normalization() - b.log_normalization()) < 1e-12);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g;
    for (int i = 0; i < 20; ++i) {
        Vec3 x{g(rng), g(rng), g(rng)};
        double r = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
        for (auto& c : x) c /= r;
        CHECK(a.log_density(x) == doctest::Approx(b.log_density(x)).epsilon(1e-12));
    }
    // the polar normalization is a Beta function; the sphere quadrature must reproduce it
    auto fb = football("3/4", "1/3");
    CHECK(std::abs(dv_mass(fb) - 1.0) < 1e-10);
}

TEST_CASE("radial grid") {
    RadialGrid g(100, 0.75, 0.0);
    CHECK(g.nodes() == 101);
    CHECK(g.t().front() == 0.0);
    CHECK(g.t().back() == 1.0);
    for (int i = 1; i < g.nodes(); ++i) CHECK(g.t()[i] > g.t()[i - 1]);
    CHECK(std::abs(g.raw_dv_mass() - 1.0) < 1e-10);
    CHECK_THROWS_AS(RadialGrid(1, 0.0, 0.0), ValidationError);
    CHECK_THROWS_AS(RadialGrid(10, 1.0, 0.0), ValidationError);
}
