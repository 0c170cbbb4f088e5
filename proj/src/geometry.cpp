#include "kelab/geometry.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/legendre.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>

namespace kelab {

namespace {

constexpr double kPi = 3.14159265358979323846;
// Grading exponents above this would underflow the node coordinates in double precision.
constexpr double kMaxGrading = 16.0;

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

}  // namespace

SpherePoint SpherePoint::from_vector(const Vec3& x) {
    double tc = moment_t_complement(x);
    if (tc <= 0.0) return infinity();
    double t = moment_t(x);
    double r = std::sqrt(t / tc);
    double th = std::atan2(x[1], x[0]);
    return finite(std::polar(r, th));
}

Vec3 SpherePoint::vector() const {
    if (at_infinity) return {0.0, 0.0, 1.0};
    double a2 = std::norm(z);
    double den = 1.0 + a2;
    return {2.0 * z.real() / den, 2.0 * z.imag() / den, (a2 - 1.0) / den};
}

double SpherePoint::t() const {
    if (at_infinity) return 1.0;
    double a2 = std::norm(z);
    return a2 / (1.0 + a2);
}

double SpherePoint::t_complement() const {
    if (at_infinity) return 0.0;
    return 1.0 / (1.0 + std::norm(z));
}

double SpherePoint::angle() const { return at_infinity ? 0.0 : std::arg(z); }

double moment_t(const Vec3& x) {
    if (x[2] < 0.0) return (x[0] * x[0] + x[1] * x[1]) / (2.0 * (1.0 - x[2]));
    return 0.5 * (1.0 + x[2]);
}

double moment_t_complement(const Vec3& x) {
    if (x[2] > 0.0) return (x[0] * x[0] + x[1] * x[1]) / (2.0 * (1.0 + x[2]));
    return 0.5 * (1.0 - x[2]);
}

double chordal_sq(const Vec3& x, const Vec3& y) {
    double d0 = x[0] - y[0], d1 = x[1] - y[1], d2 = x[2] - y[2];
    return 0.25 * (d0 * d0 + d1 * d1 + d2 * d2);
}

double chordal_sq(const SpherePoint& a, const SpherePoint& b) {
    if (a.at_infinity && b.at_infinity) return 0.0;
    if (a.at_infinity) return b.t_complement();
    if (b.at_infinity) return a.t_complement();
    return std::norm(a.z - b.z) / ((1.0 + std::norm(a.z)) * (1.0 + std::norm(b.z)));
}

// ---------------------------------------------------------------------------------------------

LogSphere::LogSphere(std::vector<LogPoint> points) : points_(std::move(points)) {
    Rational total = 0;
    for (std::size_t i = 0; i < points_.size(); ++i) {
        const auto& p = points_[i];
        if (p.weight <= 0 || p.weight >= 1) throw ValidationError("non-klt pair");
        for (std::size_t j = 0; j < i; ++j)
            if (points_[j].point == p.point) throw ValidationError("duplicate log point");
        total += p.weight;
        vectors_.push_back(p.point.vector());
        weights_.push_back(to_double(p.weight));
        if (weights_.back() > 0.99) {
            std::ostringstream os;
            os << "ill-conditioned weight " << weights_.back() << ": dV concentrates near a log point";
            warnings_.push_back(os.str());
        }
    }
    if (total == 2) throw ValidationError("degenerate pair: 2 - sum of weights = 0");

    if (is_polar()) {
        log_norm_ = std::log(boost::math::beta(1.0 - south_weight(), 1.0 - north_weight()));
    } else {
        std::vector<Vec3> pts = vectors_;
        std::vector<double> w = weights_;
        auto f = [&](const Vec3&, const std::vector<double>& d) {
            double l = 0.0;
            for (std::size_t i = 0; i < pts.size(); ++i) l -= w[i] * std::log(d[i]);
            return std::exp(l);
        };
        log_norm_ = std::log(integrate_sphere(f, pts, w));
    }
}

Rational LogSphere::anticanonical_degree() const {
    Rational d = 2;
    for (const auto& p : points_) d -= p.weight;
    return d;
}

Rational LogSphere::bundle_degree() const { return abs(anticanonical_degree()); }

bool LogSphere::is_polar() const {
    for (const auto& p : points_)
        if (!p.point.is_south_pole() && !p.point.is_north_pole()) return false;
    return true;
}

double LogSphere::south_weight() const {
    for (std::size_t i = 0; i < points_.size(); ++i)
        if (points_[i].point.is_south_pole()) return weights_[i];
    return 0.0;
}

double LogSphere::north_weight() const {
    for (std::size_t i = 0; i < points_.size(); ++i)
        if (points_[i].point.is_north_pole()) return weights_[i];
    return 0.0;
}

bool LogSphere::level_admissible(long k) const {
    if (k < 1) return false;
    for (const auto& p : points_)
        if (denominator(Rational(p.weight * k)) != 1) return false;
    return denominator(Rational(bundle_degree() * k)) == 1;
}

void LogSphere::require_level(long k) const {
    if (k < 1) throw ValidationError("level k must be positive");
    if (!level_admissible(k))
        throw ValidationError("level k=" + std::to_string(k) + " does not clear weight denominators");
}

double LogSphere::log_density(const Vec3& x) const {
    double l = -log_norm_;
    for (std::size_t i = 0; i < vectors_.size(); ++i) {
        double d;
        if (points_[i].point.is_south_pole())
            d = moment_t(x);
        else if (points_[i].point.is_north_pole())
            d = moment_t_complement(x);
        else
            d = chordal_sq(x, vectors_[i]);
        l -= weights_[i] * std::log(d);
    }
    return l;
}

// ---------------------------------------------------------------------------------------------

double integrate_sphere(const SphereIntegrand& f,
                        const std::vector<Vec3>& singular_points,
                        const std::vector<double>& singular_orders, int radial_nodes,
                        int angular_nodes) {
    // A partition of unity χ_j ∝ Π_{i≠j} d_i³ isolates each singular point; every piece is
    // integrated in polar coordinates centred at its point with t_j = chordal²(x, p_j) = σ^q.
    std::vector<Vec3> centres = singular_points;
    std::vector<double> orders = singular_orders;
    if (centres.empty()) {
        centres.push_back({0.0, 0.0, -1.0});
        orders.push_back(0.0);
    }
    const std::size_t n = centres.size();
    std::vector<double> d(n);
    const GaussRule& g = gauss_legendre(16);
    const int panels = std::max(1, radial_nodes / 16);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const Vec3& p = centres[j];
        Vec3 a = std::fabs(p[0]) < 0.9 ? Vec3{1.0, 0.0, 0.0} : Vec3{0.0, 1.0, 0.0};
        double ap = dot(a, p);
        Vec3 e1{a[0] - ap * p[0], a[1] - ap * p[1], a[2] - ap * p[2]};
        double n1 = std::sqrt(dot(e1, e1));
        for (double& v : e1) v /= n1;
        Vec3 e2{p[1] * e1[2] - p[2] * e1[1], p[2] * e1[0] - p[0] * e1[2], p[0] * e1[1] - p[1] * e1[0]};
        double q = std::min(1.0 / (1.0 - orders[j]), kMaxGrading);
        double piece = 0.0;
        for (int pa = 0; pa < panels; ++pa) {
            double lo = static_cast<double>(pa) / panels, hi = static_cast<double>(pa + 1) / panels;
            for (std::size_t k = 0; k < g.nodes.size(); ++k) {
                double sigma = 0.5 * (lo + hi) + 0.5 * (hi - lo) * g.nodes[k];
                double ws = 0.5 * (hi - lo) * g.weights[k];
                double t = std::pow(sigma, q);
                double dtds = q * std::pow(sigma, q - 1.0);
                double tc = 1.0 - t;
                double r = 2.0 * std::sqrt(t * tc);
                double ring = 0.0;
                for (int m = 0; m < angular_nodes; ++m) {
                    double ph = 2.0 * kPi * (m + 0.5) / angular_nodes;
                    double c = r * std::cos(ph), s = r * std::sin(ph), h = 1.0 - 2.0 * t;
                    // local south pole (t = 0) is p itself
                    Vec3 x{c * e1[0] + s * e2[0] + h * p[0], c * e1[1] + s * e2[1] + h * p[1],
                           c * e1[2] + s * e2[2] + h * p[2]};
                    double chi_num = 1.0, chi_den = 0.0;
                    for (std::size_t i = 0; i < n; ++i) d[i] = i == j ? t : chordal_sq(x, centres[i]);
                    if (n > 1) {
                        for (std::size_t l = 0; l < n; ++l) {
                            double prod = 1.0;
                            for (std::size_t i = 0; i < n; ++i)
                                if (i != l) prod *= d[i] * d[i] * d[i];
                            chi_den += prod;
                            if (l == j) chi_num = prod;
                        }
                    } else {
                        chi_den = 1.0;
                    }
                    if (chi_num == 0.0) continue;
                    if (singular_points.empty())
                        ring += f(x, {});
                    else
                        ring += f(x, d) * chi_num / chi_den;
                }
                piece += ws * dtds * ring / angular_nodes;
            }
        }
        total += piece;
    }
    return total;
}

// ---------------------------------------------------------------------------------------------

namespace {

long igcd(long a, long b) {
    a = std::labs(a);
    b = std::labs(b);
    while (b) {
        long r = a % b;
        a = b;
        b = r;
    }
    return a;
}

BigInt det_big(std::vector<std::vector<BigInt>> m) {
    // Bareiss fraction-free elimination.
    const std::size_t n = m.size();
    if (n == 0) return 1;
    BigInt prev = 1;
    int sign = 1;
    for (std::size_t k = 0; k + 1 < n; ++k) {
        if (m[k][k] == 0) {
            std::size_t r = k + 1;
            while (r < n && m[r][k] == 0) ++r;
            if (r == n) return 0;
            std::swap(m[k], m[r]);
            sign = -sign;
        }
        for (std::size_t i = k + 1; i < n; ++i)
            for (std::size_t j = k + 1; j < n; ++j)
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) / prev;
        prev = m[k][k];
    }
    return sign * m[n - 1][n - 1];
}

}  // namespace

ToricFano::ToricFano(std::vector<std::vector<long>> vertices) : vertices_(std::move(vertices)) {
    if (vertices_.empty()) throw ValidationError("polytope has no vertices");
    dim_ = static_cast<int>(vertices_[0].size());
    if (dim_ < 1) throw ValidationError("polytope dimension must be positive");
    for (const auto& v : vertices_)
        if (static_cast<int>(v.size()) != dim_) throw ValidationError("vertex dimension mismatch");

    std::map<std::vector<long>, long> found;
    if (dim_ == 1) {
        long mn = vertices_[0][0], mx = vertices_[0][0];
        for (const auto& v : vertices_) {
            mn = std::min(mn, v[0]);
            mx = std::max(mx, v[0]);
        }
        found[{1}] = -mn;
        found[{-1}] = mx;
    }
    const std::size_t nv = vertices_.size();
    std::vector<std::size_t> idx(dim_);
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start, std::size_t depth) {
        if (depth == static_cast<std::size_t>(dim_)) {
            std::vector<long> normal(dim_, 0);
            {
                // generalized cross product of the edge vectors
                for (int c = 0; c < dim_; ++c) {
                    std::vector<std::vector<BigInt>> minor;
                    for (int r = 1; r < dim_; ++r) {
                        std::vector<BigInt> row;
                        for (int cc = 0; cc < dim_; ++cc)
                            if (cc != c) row.push_back(vertices_[idx[r]][cc] - vertices_[idx[0]][cc]);
                        minor.push_back(row);
                    }
                    BigInt d = det_big(minor);
                    normal[c] = ((c % 2) ? -1 : 1) * d.convert_to<long>();
                }
            }
            long g = 0;
            for (long v : normal) g = igcd(g, v);
            if (g == 0) return;
            for (long& v : normal) v /= g;
            auto value = [&](const std::vector<long>& x) {
                long s = 0;
                for (int c = 0; c < dim_; ++c) s += normal[c] * x[c];
                return s;
            };
            long base = value(vertices_[idx[0]]);
            bool pos = false, neg = false;
            for (const auto& v : vertices_) {
                long d = value(v) - base;
                pos |= d > 0;
                neg |= d < 0;
            }
            if (pos && neg) return;
            if (!pos && !neg) return;
            if (neg) {
                for (long& v : normal) v = -v;
                base = -base;
            }
            found[normal] = -base;
            return;
        }
        for (std::size_t i = start; i < nv; ++i) {
            idx[depth] = i;
            rec(i + 1, depth + 1);
        }
    };
    if (dim_ > 1) rec(0, 0);
    for (const auto& [normal, offset] : found) {
        if (offset <= 0) throw ValidationError("origin is not interior to the polytope");
        facets_.push_back({normal, offset});
    }
    if (static_cast<int>(facets_.size()) < dim_ + 1)
        throw ValidationError("polytope is not full-dimensional");
    reflexive_ = std::all_of(facets_.begin(), facets_.end(), [](const Facet& f) { return f.offset == 1; });
}

bool ToricFano::contains(const std::vector<long>& x, long k) const {
    for (const auto& f : facets_) {
        long s = 0;
        for (int c = 0; c < dim_; ++c) s += f.normal[c] * x[c];
        if (s < -k * f.offset) return false;
    }
    return true;
}

std::vector<std::vector<long>> lattice_points(const ToricFano& polytope, long k) {
    if (k < 1) throw ValidationError("level k must be positive");
    const int n = polytope.dimension();
    std::vector<long> lo(n), hi(n);
    for (int c = 0; c < n; ++c) {
        lo[c] = hi[c] = polytope.vertices()[0][c];
        for (const auto& v : polytope.vertices()) {
            lo[c] = std::min(lo[c], v[c]);
            hi[c] = std::max(hi[c], v[c]);
        }
        lo[c] *= k;
        hi[c] *= k;
    }
    std::vector<std::vector<long>> out;
    std::vector<long> x = lo;
    while (true) {
        if (polytope.contains(x, k)) out.push_back(x);
        int c = n - 1;
        while (c >= 0 && x[c] == hi[c]) {
            x[c] = lo[c];
            --c;
        }
        if (c < 0) break;
        ++x[c];
    }
    return out;
}

// ---------------------------------------------------------------------------------------------

const GaussRule& gauss_legendre(int n) {
    static std::mutex mu;
    static std::map<int, GaussRule> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    if (n < 1) throw std::invalid_argument("Gauss rule needs at least one node");
    std::vector<double> zeros = boost::math::legendre_p_zeros<double>(n);  // nonnegative half
    GaussRule rule;
    for (double x : zeros) {
        double dp = boost::math::legendre_p_prime(n, x);
        double w = 2.0 / ((1.0 - x * x) * dp * dp);
        if (x == 0.0) {
            rule.nodes.push_back(0.0);
            rule.weights.push_back(w);
        } else {
            rule.nodes.push_back(x);
            rule.weights.push_back(w);
            rule.nodes.push_back(-x);
            rule.weights.push_back(w);
        }
    }
    std::vector<std::size_t> order(rule.nodes.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return rule.nodes[a] < rule.nodes[b]; });
    GaussRule sorted;
    for (auto i : order) {
        sorted.nodes.push_back(rule.nodes[i]);
        sorted.weights.push_back(rule.weights[i]);
    }
    return cache.emplace(n, std::move(sorted)).first->second;
}

// ---------------------------------------------------------------------------------------------

RadialGrid::RadialGrid(int elements, double south_weight, double north_weight)
    : elements_(elements), c0_(south_weight), c1_(north_weight) {
    if (elements_ < 2) throw ValidationError("grid needs at least 3 nodes");
    if (elements_ % 2) ++elements_;
    if (c0_ < 0 || c0_ >= 1 || c1_ < 0 || c1_ >= 1) throw ValidationError("non-klt pair");
    q0_ = std::min(1.0 / (1.0 - c0_), kMaxGrading);
    q1_ = std::min(1.0 / (1.0 - c1_), kMaxGrading);
    log_beta_ = std::log(boost::math::beta(1.0 - c0_, 1.0 - c1_));
    const double ln2 = std::log(2.0);
    const int M = elements_;
    const double h = 1.0 / M;

    s_.resize(M + 1);
    t_.resize(M + 1);
    tc_.resize(M + 1);
    for (int i = 0; i <= M; ++i) {
        double s = static_cast<double>(i) / M;
        s_[i] = s;
        if (2 * i <= M) {
            t_[i] = 0.5 * std::pow(2.0 * s, q0_);
            tc_[i] = 1.0 - t_[i];
        } else {
            tc_[i] = 0.5 * std::pow(2.0 * (1.0 - s), q1_);
            t_[i] = 1.0 - tc_[i];
        }
    }
    for (int i = 1; i <= M; ++i)
        if (!(t_[i] > t_[i - 1]) && !(tc_[i] < tc_[i - 1])) throw ValidationError("grid too fine for the grading: nodes coincide");

    // Points carry log t, log(1 − t), log dt/ds explicitly so that graded end elements never underflow.
    const GaussRule& inner = gauss_legendre(8);
    const GaussRule& edge = gauss_legendre(32);
    offsets_.push_back(0);
    double mass = 0.0;
    for (int e = 0; e < M; ++e) {
        bool south_edge = e == 0, north_edge = e == M - 1;
        double alpha0 = q0_ * (1.0 - c0_), alpha1 = q1_ * (1.0 - c1_);
        bool subst = (south_edge && alpha0 < 1.0 - 1e-12) || (north_edge && alpha1 < 1.0 - 1e-12);
        const GaussRule& rule = subst ? edge : inner;
        for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
            double r = 0.5 * (1.0 + rule.nodes[k]);
            double wr = 0.5 * rule.weights[k];
            double lambda, log_ws;
            // distance from the graded pole in s, in logs
            if (subst && south_edge) {
                lambda = std::exp(std::log(r) / alpha0);
                log_ws = std::log(h / alpha0) + (1.0 / alpha0 - 1.0) * std::log(r) + std::log(wr);
            } else if (subst && north_edge) {
                lambda = 1.0 - std::exp(std::log(r) / alpha1);
                log_ws = std::log(h / alpha1) + (1.0 / alpha1 - 1.0) * std::log(r) + std::log(wr);
            } else {
                lambda = r;
                log_ws = std::log(h * wr);
            }
            double s = (e + lambda) * h;
            double log_t, log_tc, log_dtds;
            bool lower = (2 * e < M);
            if (lower) {
                double log2s = subst ? std::log(2.0 * h) + std::log(r) / alpha0 : std::log(2.0 * s);
                log_t = -ln2 + q0_ * log2s;
                log_dtds = std::log(q0_) + (q0_ - 1.0) * log2s;
                log_tc = std::log1p(-std::exp(log_t));
            } else {
                double log2r = subst ? std::log(2.0 * h) + std::log(r) / alpha1
                                     : std::log(2.0 * (1.0 - s));
                log_tc = -ln2 + q1_ * log2r;
                log_dtds = std::log(q1_) + (q1_ - 1.0) * log2r;
                log_t = std::log1p(-std::exp(log_tc));
            }
            QuadPoint qp;
            qp.element = e;
            qp.lambda = lambda;
            qp.t = std::exp(log_t);
            qp.tc = std::exp(log_tc);
            qp.w_dt = std::exp(log_dtds + log_ws);
            qp.w_dv = std::exp(-c0_ * log_t - c1_ * log_tc + log_dtds + log_ws - log_beta_);
            qp.w_stiff = std::exp(log_t + log_tc - log_dtds + log_ws);
            mass += qp.w_dv;
            qp_.push_back(qp);
        }
        offsets_.push_back(static_cast<int>(qp_.size()));
    }
    raw_dv_mass_ = mass;
    for (auto& qp : qp_) qp.w_dv /= mass;
}

double RadialGrid::dv_over_dt(int node) const {
    double t = t_[node], tc = tc_[node];
    if ((t == 0.0 && c0_ > 0.0) || (tc == 0.0 && c1_ > 0.0)) return kInf;
    double l = -log_beta_;
    if (c0_ > 0.0) l -= c0_ * std::log(t);
    if (c1_ > 0.0) l -= c1_ * std::log(tc);
    return std::exp(l);
}

double quadrature(const std::vector<double>& nodes, const std::vector<double>& values) {
    const std::size_t n = nodes.size();
    if (n != values.size()) throw std::invalid_argument("quadrature: size mismatch");
    if (n < 2) throw std::invalid_argument("quadrature: need at least two nodes");
    for (double v : values)
        if (std::isnan(v)) throw std::invalid_argument("quadrature: NaN value");
    const double g = 1.0 / std::sqrt(3.0);
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        std::size_t lo = i == 0 ? 0 : i - 1;
        std::size_t hi = std::min(n - 1, lo + 3);
        if (hi - lo < 3 && n >= 4) lo = hi - 3;
        double a = nodes[i], b = nodes[i + 1];
        for (double xi : {-g, g}) {
            double x = 0.5 * (a + b) + 0.5 * (b - a) * xi;
            double p = 0.0;
            for (std::size_t j = lo; j <= hi; ++j) {
                double l = 1.0;
                for (std::size_t m = lo; m <= hi; ++m)
                    if (m != j) l *= (x - nodes[m]) / (nodes[j] - nodes[m]);
                p += l * values[j];
            }
            total += 0.5 * (b - a) * p;
        }
    }
    return total;
}

RadialProfile reference_density(const LogSphere& space, int elements) {
    if (!space.is_polar()) throw ValidationError("rotational symmetry requires log points at the poles");
    RadialGrid grid(elements, space.south_weight(), space.north_weight());
    RadialProfile out;
    out.t = grid.t();
    for (int i = 0; i < grid.nodes(); ++i) out.density.push_back(grid.dv_over_dt(i));
    out.mass = grid.raw_dv_mass();
    return out;
}

}  // namespace kelab
