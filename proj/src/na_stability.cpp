#include "kelab/na_stability.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <set>

namespace kelab {

namespace {

std::string point_label(const SpherePoint& p) {
    if (p.at_infinity) return "inf";
    char buf[64];
    if (p.z.imag() == 0.0)
        std::snprintf(buf, sizeof buf, "%.17g", p.z.real());
    else
        std::snprintf(buf, sizeof buf, "%.17g%+.17gi", p.z.real(), p.z.imag());
    return buf;
}

std::string scale_prefix(const Rational& s) {
    if (s == 1) return "";
    std::string out = denominator(s) == 1 ? numerator(s).str() : "(" + rational_string(s) + ")";
    return out + "*";
}

void require_fano(const LogSphere& space) {
    if (space.anticanonical_degree() <= 0)
        throw ValidationError("not log Fano: total weight must be below 2");
}

void require_scale(const Rational& s) {
    if (s <= 0) throw ValidationError("valuation scale must be positive");
}

Rational coefficient_at(const LogSphere& space, const SpherePoint& p) {
    Rational c = 0;
    for (const auto& lp : space.log_points())
        if (lp.point == p) c += lp.weight;
    return c;
}

long level_degree(const LogSphere& space, long k) {
    space.require_level(k);
    return numerator(Rational(space.bundle_degree() * k)).convert_to<long>();
}

Rational dot(const std::vector<long>& a, const std::vector<long>& b) {
    long s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Rational dot(const std::vector<Rational>& a, const std::vector<long>& b) {
    Rational s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Solution of the square system M x = rhs, or nothing when M is singular.
std::optional<std::vector<Rational>> solve_exact(std::vector<std::vector<Rational>> m, std::vector<Rational> rhs) {
    const std::size_t n = m.size();
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        while (piv < n && m[piv][c] == 0) ++piv;
        if (piv == n) return std::nullopt;
        std::swap(m[piv], m[c]);
        std::swap(rhs[piv], rhs[c]);
        for (std::size_t r = 0; r < n; ++r) {
            if (r == c || m[r][c] == 0) continue;
            Rational f = m[r][c] / m[c][c];
            for (std::size_t j = c; j < n; ++j) m[r][j] -= f * m[c][j];
            rhs[r] -= f * rhs[c];
        }
    }
    std::vector<Rational> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = rhs[i] / m[i][i];
    return x;
}

int rank_of(std::vector<std::vector<Rational>> rows) {
    int rank = 0;
    const std::size_t cols = rows.empty() ? 0 : rows[0].size();
    for (std::size_t c = 0; c < cols && rank < static_cast<int>(rows.size()); ++c) {
        std::size_t piv = rank;
        while (piv < rows.size() && rows[piv][c] == 0) ++piv;
        if (piv == rows.size()) continue;
        std::swap(rows[piv], rows[rank]);
        for (std::size_t r = rank + 1; r < rows.size(); ++r) {
            if (rows[r][c] == 0) continue;
            Rational f = rows[r][c] / rows[rank][c];
            for (std::size_t j = c; j < cols; ++j) rows[r][j] -= f * rows[rank][j];
        }
        ++rank;
    }
    return rank;
}

Rational determinant(std::vector<std::vector<Rational>> m) {
    const std::size_t n = m.size();
    Rational det = 1;
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        while (piv < n && m[piv][c] == 0) ++piv;
        if (piv == n) return 0;
        if (piv != c) {
            std::swap(m[piv], m[c]);
            det = -det;
        }
        det *= m[c][c];
        for (std::size_t r = c + 1; r < n; ++r) {
            if (m[r][c] == 0) continue;
            Rational f = m[r][c] / m[c][c];
            for (std::size_t j = c; j < n; ++j) m[r][j] -= f * m[c][j];
        }
    }
    return det;
}

int affine_dimension(const ToricFano& P, const std::vector<int>& face) {
    if (face.size() <= 1) return 0;
    const auto& V = P.vertices();
    std::vector<std::vector<Rational>> rows;
    for (std::size_t i = 1; i < face.size(); ++i) {
        std::vector<Rational> r(P.dimension());
        for (int j = 0; j < P.dimension(); ++j) r[j] = V[face[i]][j] - V[face[0]][j];
        rows.push_back(std::move(r));
    }
    return rank_of(std::move(rows));
}

std::vector<std::vector<int>> facet_vertex_sets(const ToricFano& P) {
    std::vector<std::vector<int>> out;
    for (const auto& f : P.facets()) {
        std::vector<int> s;
        for (int i = 0; i < static_cast<int>(P.vertices().size()); ++i)
            if (dot(f.normal, P.vertices()[i]) == -f.offset) s.push_back(i);
        out.push_back(std::move(s));
    }
    return out;
}

// Pulling triangulation of a face of affine dimension g; simplices as vertex index lists.
std::vector<std::vector<int>> triangulate(const std::vector<int>& face, int g,
                                          const std::vector<std::vector<int>>& facets, const ToricFano& P) {
    if (g == 0) return {{face[0]}};
    const int apex = face[0];
    std::set<std::vector<int>> subfaces;
    for (const auto& F : facets) {
        std::vector<int> inter;
        std::set_intersection(face.begin(), face.end(), F.begin(), F.end(), std::back_inserter(inter));
        if (inter.size() < static_cast<std::size_t>(g) || inter == face) continue;
        if (affine_dimension(P, inter) == g - 1) subfaces.insert(std::move(inter));
    }
    std::vector<std::vector<int>> out;
    for (const auto& sub : subfaces) {
        if (std::binary_search(sub.begin(), sub.end(), apex)) continue;
        for (auto s : triangulate(sub, g - 1, facets, P)) {
            s.insert(s.begin(), apex);
            out.push_back(std::move(s));
        }
    }
    return out;
}

std::vector<Rational> barycenter(const ToricFano& P) {
    const int n = P.dimension();
    const auto& V = P.vertices();
    std::vector<int> all(V.size());
    std::iota(all.begin(), all.end(), 0);
    auto simplices = triangulate(all, n, facet_vertex_sets(P), P);
    std::vector<Rational> b(n, Rational(0));
    Rational total = 0;
    for (const auto& s : simplices) {
        std::vector<std::vector<Rational>> m(n, std::vector<Rational>(n));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) m[i][j] = V[s[i + 1]][j] - V[s[0]][j];
        Rational vol = abs(determinant(std::move(m)));
        total += vol;
        for (int j = 0; j < n; ++j) {
            Rational c = 0;
            for (int v : s) c += V[v][j];
            b[j] += vol * c / (n + 1);
        }
    }
    for (auto& x : b) x /= total;
    return b;
}

Rational min_over_polytope(const ToricFano& P, const std::vector<long>& a) {
    Rational best = dot(P.vertices()[0], a);
    for (const auto& v : P.vertices()) best = std::min(best, dot(v, a));
    return best;
}

void require_toric_valuation(const ToricFano& P, const ToricValuation& v) {
    require_scale(v.scale);
    if (static_cast<int>(v.vector.size()) != P.dimension())
        throw ValidationError("valuation vector has the wrong dimension");
    if (std::all_of(v.vector.begin(), v.vector.end(), [](long x) { return x == 0; }))
        throw ValidationError("valuation vector must be nonzero");
}

// Orders ⟨m, a⟩ − k·min_P⟨·, a⟩ of the monomials of kP.
std::vector<Rational> monomial_orders(const ToricFano& P, const ToricValuation& v, long k,
                                      const std::vector<std::vector<long>>& points) {
    Rational shift = min_over_polytope(P, v.vector) * k;
    std::vector<Rational> out;
    out.reserve(points.size());
    for (const auto& m : points) out.push_back(v.scale * (dot(m, v.vector) - shift));
    return out;
}

bool better_witness(const std::vector<long>& a, const std::vector<long>& b) {
    long na = 0, nb = 0;
    for (long x : a) na += std::labs(x);
    for (long x : b) nb += std::labs(x);
    if (na != nb) return na < nb;
    return a < b;
}

std::vector<std::vector<long>> primitive_box(int dim, int box) {
    std::vector<std::vector<long>> out;
    std::vector<long> a(dim, -box);
    while (true) {
        long g = 0;
        for (long x : a) g = std::gcd(g, std::labs(x));
        if (g == 1) out.push_back(a);
        int i = dim - 1;
        while (i >= 0 && a[i] == box) a[i--] = -box;
        if (i < 0) break;
        ++a[i];
    }
    return out;
}

template <class Ratio>
DeltaResult toric_delta(const ToricFano& P, int box, Ratio ratio) {
    if (box < 1) throw ValidationError("search box radius must be positive");
    DeltaResult r;
    std::vector<long> best;
    for (const auto& a : primitive_box(P.dimension(), box)) {
        Rational q = ratio(ToricValuation{a, 1});
        if (best.empty() || q < r.value || (q == r.value && better_witness(a, best))) {
            r.value = q;
            best = a;
        }
    }
    r.witness = describe(ToricValuation{best, 1});
    long sup = 0;
    for (long x : best) sup = std::max(sup, std::labs(x));
    r.interior = sup < box;
    if (!r.interior) r.warnings.push_back("minimum attained on the search box boundary: increase search radius");
    return r;
}

std::vector<CurveValuation> curve_candidates(const LogSphere& space) {
    std::vector<CurveValuation> out;
    for (const auto& lp : space.log_points()) {
        bool seen = false;
        for (const auto& c : out) seen = seen || c.point == lp.point;
        if (!seen) out.push_back({lp.point, 1});
    }
    out.push_back({generic_point(space), 1});
    return out;
}

template <class Ratio>
DeltaResult curve_delta(const LogSphere& space, Ratio ratio) {
    DeltaResult r;
    bool first = true;
    for (const auto& v : curve_candidates(space)) {
        Rational q = ratio(v);
        if (first || q < r.value) {
            r.value = q;
            r.witness = describe(v);
            first = false;
        }
    }
    return r;
}

}  // namespace

std::string describe(const CurveValuation& v) { return scale_prefix(v.scale) + "ord_" + point_label(v.point); }

std::string describe(const ToricValuation& v) {
    std::string s = scale_prefix(v.scale) + "v(";
    for (std::size_t i = 0; i < v.vector.size(); ++i) s += (i ? "," : "") + std::to_string(v.vector[i]);
    return s + ")";
}

SpherePoint generic_point(const LogSphere& space) {
    const std::complex<double> tries[] = {{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {2.0, 0.0}, {3.0, 0.0}};
    for (auto w : tries) {
        auto p = SpherePoint::finite(w);
        if (coefficient_at(space, p) == 0) return p;
    }
    throw ComputationError("no generic point among the fixed tries");
}

Rational log_discrepancy(const LogSphere& space, const CurveValuation& v) {
    require_scale(v.scale);
    return v.scale * (1 - coefficient_at(space, v.point));
}

Rational log_discrepancy(const ToricFano& P, const ToricValuation& v) {
    require_toric_valuation(P, v);
    const int n = P.dimension();
    const auto& facets = P.facets();
    std::vector<Rational> rhs(v.vector.begin(), v.vector.end());
    std::optional<Rational> best;
    // A cone of the normal fan is spanned by the normals of the facets through one vertex.
    const auto& V = P.vertices();
    for (const auto& vert : V) {
        std::vector<int> through;
        for (int f = 0; f < static_cast<int>(facets.size()); ++f)
            if (dot(facets[f].normal, vert) == -facets[f].offset) through.push_back(f);
        std::vector<bool> mask(through.size(), false);
        std::fill(mask.begin(), mask.begin() + std::min<std::size_t>(n, through.size()), true);
        if (static_cast<int>(through.size()) < n) continue;
        do {
            std::vector<std::vector<Rational>> m(n, std::vector<Rational>(n));
            int col = 0;
            for (std::size_t i = 0; i < through.size(); ++i) {
                if (!mask[i]) continue;
                for (int r = 0; r < n; ++r) m[r][col] = facets[through[i]].normal[r];
                ++col;
            }
            auto lam = solve_exact(std::move(m), rhs);
            if (!lam) continue;
            if (std::any_of(lam->begin(), lam->end(), [](const Rational& x) { return x < 0; })) continue;
            Rational s = std::accumulate(lam->begin(), lam->end(), Rational(0));
            if (!best || s < *best) best = s;
        } while (std::prev_permutation(mask.begin(), mask.end()));
    }
    if (!best) throw ValidationError("valuation vector outside the fan support");
    return v.scale * *best;
}

Rational expected_vanishing(const LogSphere& space, const CurveValuation& v) {
    require_scale(v.scale);
    return v.scale * space.bundle_degree() / 2;
}

Rational expected_vanishing(const LogSphere& space, const CurveValuation& v, long k) {
    require_scale(v.scale);
    const long m = level_degree(space, k);
    BasisSpec basis = bundle_basis(k, m);
    Rational sum = 0;
    for (int i = 0; i < basis.size(); ++i) sum += basis_order(basis, i, v, v.point.at_infinity ? SpherePoint::finite(0.0) : v.point);
    return sum / (Rational(k) * basis.size());
}

Rational expected_vanishing(const ToricFano& P, const ToricValuation& v) {
    require_toric_valuation(P, v);
    return v.scale * (dot(barycenter(P), v.vector) - min_over_polytope(P, v.vector));
}

Rational expected_vanishing(const ToricFano& P, const ToricValuation& v, long k) {
    require_toric_valuation(P, v);
    if (k < 1) throw ValidationError("level k must be positive");
    auto points = lattice_points(P, k);
    auto orders = monomial_orders(P, v, k, points);
    Rational sum = std::accumulate(orders.begin(), orders.end(), Rational(0));
    return sum / (Rational(k) * static_cast<long>(points.size()));
}

Rational f_na(const LogSphere& space, const CurveValuation& v) {
    return log_discrepancy(space, v) - expected_vanishing(space, v);
}

Rational f_na(const ToricFano& P, const ToricValuation& v) {
    return log_discrepancy(P, v) - expected_vanishing(P, v);
}

DeltaResult delta_k(const LogSphere& space, long k) {
    require_fano(space);
    level_degree(space, k);
    return curve_delta(space, [&](const CurveValuation& v) {
        return log_discrepancy(space, v) / expected_vanishing(space, v, k);
    });
}

DeltaResult delta(const LogSphere& space) {
    require_fano(space);
    return curve_delta(space, [&](const CurveValuation& v) {
        return log_discrepancy(space, v) / expected_vanishing(space, v);
    });
}

DeltaResult delta_k(const ToricFano& P, long k, int box) {
    if (k < 1) throw ValidationError("level k must be positive");
    auto points = lattice_points(P, k);
    return toric_delta(P, box, [&](const ToricValuation& v) {
        auto orders = monomial_orders(P, v, k, points);
        Rational s = std::accumulate(orders.begin(), orders.end(), Rational(0)) /
                     (Rational(k) * static_cast<long>(points.size()));
        return log_discrepancy(P, v) / s;
    });
}

DeltaResult delta(const ToricFano& P, int box) {
    auto b = barycenter(P);
    return toric_delta(P, box, [&](const ToricValuation& v) {
        Rational s = dot(b, v.vector) - min_over_polytope(P, v.vector);
        return log_discrepancy(P, v) / s;
    });
}

std::pair<Rational, std::vector<int>> min_cost_assignment(const std::vector<std::vector<Rational>>& cost) {
    const int n = static_cast<int>(cost.size());
    if (n == 0) return {Rational(0), {}};
    for (const auto& row : cost)
        if (static_cast<int>(row.size()) != n) throw ValidationError("assignment matrix must be square");
    // Scale to integers so the potentials stay exact.
    BigInt lcm = 1;
    for (const auto& row : cost)
        for (const auto& c : row) {
            if (c < 0) throw ValidationError("assignment costs must be nonnegative");
            BigInt d = denominator(c);
            lcm = lcm / boost::multiprecision::gcd(lcm, d) * d;
        }
    BigInt peak = 0;
    std::vector<std::vector<long long>> a(n + 1, std::vector<long long>(n + 1, 0));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            BigInt v = numerator(cost[i][j]) * (lcm / denominator(cost[i][j]));
            peak = std::max(peak, v);
            if (peak * (n + 1) > BigInt(std::numeric_limits<long long>::max() / 4))
                throw ComputationError("assignment costs too large for exact integer scaling");
            a[i + 1][j + 1] = v.convert_to<long long>();
        }
    const long long inf = std::numeric_limits<long long>::max() / 2;
    std::vector<long long> u(n + 1, 0), v(n + 1, 0), minv(n + 1);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            int i0 = p[j0], j1 = 0;
            long long delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                long long cur = a[i0][j] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_of(n);
    Rational total = 0;
    for (int j = 1; j <= n; ++j) {
        row_of[j - 1] = p[j] - 1;
        total += cost[p[j] - 1][j - 1];
    }
    return {total, row_of};
}

Rational basis_order(const BasisSpec& basis, int element, const CurveValuation& v, const SpherePoint& centre) {
    require_scale(v.scale);
    if (centre.at_infinity) throw ValidationError("basis centre must be a finite point");
    if (element < 0 || element >= basis.size()) throw ValidationError("basis element out of range");
    const long e = basis.exponents[element];
    if (v.point == centre) return v.scale * e;
    if (v.point.at_infinity) return v.scale * (basis.degree - e);
    return 0;
}

Rational na_energy_per_particle(const std::vector<CurveValuation>& product, const BasisSpec& basis,
                                const SpherePoint& centre) {
    basis.validate();
    const int n = basis.size();
    if (static_cast<int>(product.size()) != n)
        throw ValidationError("product valuation has " + std::to_string(product.size()) + " factors, basis has " +
                              std::to_string(n) + " elements");
    std::vector<std::vector<Rational>> c(n, std::vector<Rational>(n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) c[i][j] = basis_order(basis, i, product[j], centre);
    return min_cost_assignment(c).first / (Rational(n) * basis.level);
}

Rational na_energy_per_particle(const ToricFano& P, const std::vector<ToricValuation>& product, long k) {
    if (k < 1) throw ValidationError("level k must be positive");
    auto points = lattice_points(P, k);
    const int n = static_cast<int>(points.size());
    if (static_cast<int>(product.size()) != n)
        throw ValidationError("product valuation has " + std::to_string(product.size()) + " factors, basis has " +
                              std::to_string(n) + " elements");
    std::vector<std::vector<Rational>> c(n, std::vector<Rational>(n));
    for (int j = 0; j < n; ++j) {
        auto orders = monomial_orders(P, product[j], k, points);
        for (int i = 0; i < n; ++i) c[i][j] = orders[i];
    }
    return min_cost_assignment(c).first / (Rational(n) * k);
}

LctChainReport lct_chain(const LogSphere& space, long k, int max_mixed_particles) {
    require_fano(space);
    BasisSpec basis = full_basis(space, k);
    const int n = basis.size();
    LctChainReport rep;
    rep.level = k;
    rep.particles = n;
    rep.delta_k = delta_k(space, k).value;

    std::vector<SpherePoint> points{SpherePoint::finite(0.0), SpherePoint::infinity()};
    for (const auto& lp : space.log_points())
        if (std::find(points.begin(), points.end(), lp.point) == points.end()) points.push_back(lp.point);
    points.push_back(generic_point(space));
    std::vector<CurveValuation> cands;
    for (int s : {1, 2})
        for (const auto& p : points) cands.push_back({p, s});
    // det S changes by a constant under a change of basis, so every finite centre gives a lower
    // bound for the valuation of det S; the largest is kept.
    std::vector<SpherePoint> centres;
    for (const auto& p : points)
        if (!p.at_infinity) centres.push_back(p);

    auto consider = [&](const std::vector<int>& idx) {
        std::vector<CurveValuation> prod;
        Rational a = 0;
        for (int i : idx) {
            prod.push_back(cands[i]);
            a += log_discrepancy(space, cands[i]);
        }
        Rational e = 0;
        for (const auto& c : centres) e = std::max(e, na_energy_per_particle(prod, basis, c));
        ++rep.examined;
        if (e == 0) {
            ++rep.skipped_zero_energy;
            return;
        }
        Rational ratio = a / n / e;
        if (!rep.bound || ratio < *rep.bound) {
            rep.bound = ratio;
            std::string w;
            for (std::size_t i = 0; i < prod.size(); ++i) w += (i ? " x " : "") + describe(prod[i]);
            rep.witness = w;
        }
    };

    rep.mixed_enumerated = n <= max_mixed_particles;
    if (rep.mixed_enumerated) {
        // Multisets of size n: the ratio is symmetric in the factors.
        std::vector<int> idx(n, 0);
        const int K = static_cast<int>(cands.size());
        while (true) {
            consider(idx);
            int i = n - 1;
            while (i >= 0 && idx[i] == K - 1) --i;
            if (i < 0) break;
            int v = idx[i] + 1;
            for (int j = i; j < n; ++j) idx[j] = v;
        }
    } else {
        for (int c = 0; c < static_cast<int>(cands.size()); ++c) consider(std::vector<int>(n, c));
        rep.notes.push_back("N=" + std::to_string(n) + " exceeds the mixed enumeration limit: diagonal valuations only");
    }
    if (rep.bound) {
        rep.margin = rep.delta_k - *rep.bound;
        rep.ordered = *rep.bound <= rep.delta_k;
    } else {
        rep.notes.push_back("every examined valuation has zero energy");
    }
    rep.notes.push_back("valuations of det S come from leading-term assignments: the bound is one-sided");
    return rep;
}

namespace {

RestrictionTable finish_table(std::vector<RestrictionRow> rows) {
    RestrictionTable t;
    t.rows = std::move(rows);
    t.nonincreasing = true;
    t.within_bound = true;
    t.fitted_c = 0;
    std::vector<Rational> scaled;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& r = t.rows[i];
        scaled.push_back(r.gap * r.k);
        t.fitted_c = std::max(t.fitted_c, scaled.back());
        if (i > 0 && r.gap > t.rows[i - 1].gap) t.nonincreasing = false;
    }
    // k·gap must settle: its last increment is no larger than the one before.
    const std::size_t n = scaled.size();
    if (n >= 3) {
        Rational last = abs(Rational(scaled[n - 1] - scaled[n - 2]));
        Rational prev = abs(Rational(scaled[n - 2] - scaled[n - 3]));
        t.within_bound = last <= prev;
    } else if (n == 2) {
        t.within_bound = scaled[1] <= scaled[0];
    }
    return t;
}

}  // namespace

RestrictionTable restriction_experiment(const LogSphere& space, const CurveValuation& v,
                                        const std::vector<long>& levels) {
    require_scale(v.scale);
    if (!std::is_sorted(levels.begin(), levels.end())) throw ValidationError("levels must be ascending");
    Rational limit = expected_vanishing(space, v);
    SpherePoint centre = v.point.at_infinity ? SpherePoint::finite(0.0) : v.point;
    std::vector<RestrictionRow> rows;
    for (long k : levels) {
        BasisSpec basis = bundle_basis(k, level_degree(space, k));
        std::vector<CurveValuation> diag(basis.size(), v);
        Rational e = na_energy_per_particle(diag, basis, centre);
        rows.push_back({k, e, limit, abs(Rational(e - limit))});
    }
    return finish_table(std::move(rows));
}

RestrictionTable restriction_experiment(const ToricFano& P, const ToricValuation& v, const std::vector<long>& levels) {
    require_toric_valuation(P, v);
    if (!std::is_sorted(levels.begin(), levels.end())) throw ValidationError("levels must be ascending");
    Rational limit = expected_vanishing(P, v);
    std::vector<RestrictionRow> rows;
    for (long k : levels) {
        const long n = static_cast<long>(lattice_points(P, k).size());
        Rational e = na_energy_per_particle(P, std::vector<ToricValuation>(n, v), k);
        rows.push_back({k, e, limit, abs(Rational(e - limit))});
    }
    return finish_table(std::move(rows));
}

std::string verdict_name(Verdict v) {
    switch (v) {
        case Verdict::unstable: return "UNSTABLE";
        case Verdict::inconclusive: return "INCONCLUSIVE";
        case Verdict::inconclusive_stable: return "INCONCLUSIVE-STABLE";
    }
    return "INCONCLUSIVE";
}

StabilityVerdict gibbs_stability_check(const LogSphere& space, long k) {
    StabilityVerdict out{Verdict::inconclusive, lct_chain(space, k), ""};
    const auto& b = out.chain.bound;
    if (!b) {
        out.note = "no valuation with positive energy was examined";
    } else if (*b < 1) {
        out.verdict = Verdict::unstable;
        out.note = "lct bound " + rational_string(*b) + " < 1 at " + out.chain.witness;
    } else if (*b == 1) {
        out.note = "δ=1 boundary case";
    } else {
        out.verdict = Verdict::inconclusive_stable;
        out.note = "every examined ratio exceeds 1; the valuation set is partial";
    }
    return out;
}

}  // namespace kelab
