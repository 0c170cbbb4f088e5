#include "kelab/ensemble.hpp"

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace kelab {

namespace {

using cplx = std::complex<double>;
constexpr double kPi = 3.14159265358979323846;

double log_binomial(long m, long e) {
    return std::lgamma(m + 1.0) - std::lgamma(e + 1.0) - std::lgamma(m - e + 1.0);
}

// Counter-based stream: the i-th draw is splitmix64(key + i·γ), so every chain is a pure
// function of (seed, chain index).
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream) : key_(mix(seed ^ mix(stream + 0x51ed27a1u))) {}

    std::uint64_t next() { return mix(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL); }
    // (0, 1]
    double uniform() { return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53; }
    // Box–Muller, both variates used.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double r = std::sqrt(-2.0 * std::log(uniform()));
        double th = 2.0 * kPi * uniform();
        spare_ = r * std::sin(th);
        has_spare_ = true;
        return r * std::cos(th);
    }

    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

Vec3 uniform_point(CounterRng& rng) {
    Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    return {v[0] / n, v[1] / n, v[2] / n};
}

// Gaussian step of scale σ in the tangent plane at x, projected back to the sphere. The
// density of the result depends only on the angle to x, so the proposal is symmetric.
Vec3 propose(const Vec3& x, double sigma, CounterRng& rng) {
    Vec3 a = std::fabs(x[0]) < 0.9 ? Vec3{1.0, 0.0, 0.0} : Vec3{0.0, 1.0, 0.0};
    double ax = a[0] * x[0] + a[1] * x[1] + a[2] * x[2];
    Vec3 e1{a[0] - ax * x[0], a[1] - ax * x[1], a[2] - ax * x[2]};
    double n1 = std::sqrt(e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]);
    for (double& v : e1) v /= n1;
    Vec3 e2{x[1] * e1[2] - x[2] * e1[1], x[2] * e1[0] - x[0] * e1[2], x[0] * e1[1] - x[1] * e1[0]};
    double g1 = sigma * rng.normal(), g2 = sigma * rng.normal();
    Vec3 y{x[0] + g1 * e1[0] + g2 * e2[0], x[1] + g1 * e1[1] + g2 * e2[1], x[2] + g1 * e1[2] + g2 * e2[2]};
    double n = std::sqrt(y[0] * y[0] + y[1] * y[1] + y[2] * y[2]);
    return {y[0] / n, y[1] / n, y[2] / n};
}

// Column (√binom(m,e) a^e b^{m−e})_e with a = √t e^{iθ}, b = √(1 − t); its squared entries are
// binom(m,e)|z|^{2e}/(1 + |z|²)^m.
struct ColumnMaker {
    long m;
    std::vector<long> exps;
    std::vector<double> half_log_binom;

    explicit ColumnMaker(const BasisSpec& b) : m(b.degree), exps(b.exponents) {
        for (long e : exps) half_log_binom.push_back(0.5 * log_binomial(m, e));
    }

    double log_binom_total() const { return 2.0 * std::accumulate(half_log_binom.begin(), half_log_binom.end(), 0.0); }

    template <class Out>
    void fill(const Vec3& x, Out&& out) const {
        double t = moment_t(x), tc = moment_t_complement(x);
        double lt = 0.5 * std::log(t), ltc = 0.5 * std::log(tc);
        double th = std::atan2(x[1], x[0]);
        for (std::size_t i = 0; i < exps.size(); ++i) {
            long e = exps[i];
            double mag;
            if (e == 0)
                mag = half_log_binom[i] + m * ltc;
            else if (e == m)
                mag = half_log_binom[i] + m * lt;
            else
                mag = half_log_binom[i] + e * lt + (m - e) * ltc;
            out(i, std::polar(std::exp(mag), e * th));
        }
    }
};

// Exponents exactly 0..m. Then det S is a weighted Vandermonde determinant and, for the monomial
// basis, log‖det S‖² = Σ_{i<j} log chordal²(x_i, x_j).
bool is_full(const BasisSpec& b) {
    if (b.size() != b.degree + 1) return false;
    std::vector<long> e = b.exponents;
    std::sort(e.begin(), e.end());
    for (long i = 0; i <= b.degree; ++i)
        if (e[i] != i) return false;
    return true;
}

double pair_log_sum(const std::vector<Vec3>& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < i; ++j) s += std::log(chordal_sq(x[i], x[j]));
    return s;
}

double log_abs_det_sq(const Eigen::MatrixXcd& s) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(s);
    double l = qr.logAbsDeterminant();
    if (!std::isfinite(l)) return -kInf;
    return 2.0 * l;
}

}  // namespace

void BasisSpec::validate() const {
    if (level < 1) throw ValidationError("level k must be positive");
    if (sign != 1 && sign != -1) throw ValidationError("basis sign must be +1 or -1");
    if (degree < 0) throw ValidationError("bundle degree must be nonnegative");
    if (exponents.empty()) throw ValidationError("basis is empty");
    std::vector<long> e = exponents;
    std::sort(e.begin(), e.end());
    if (std::adjacent_find(e.begin(), e.end()) != e.end()) throw ValidationError("basis exponents must be distinct");
    if (e.front() < 0 || e.back() > degree) throw ValidationError("basis exponent outside 0..m");
}

BasisSpec full_basis(const LogSphere& space, long k) {
    space.require_level(k);
    Rational d = space.anticanonical_degree();
    Rational m = space.bundle_degree() * k;
    BasisSpec b;
    b.level = k;
    b.sign = d > 0 ? -1 : 1;
    b.degree = numerator(m).convert_to<long>();
    for (long e = 0; e <= b.degree; ++e) b.exponents.push_back(e);
    return b;
}

BasisSpec bundle_basis(long k, long m) {
    BasisSpec b;
    b.level = k;
    b.degree = m;
    for (long e = 0; e <= m; ++e) b.exponents.push_back(e);
    b.validate();
    return b;
}

double slater_log_norm(const Configuration& config, const BasisSpec& basis) {
    basis.validate();
    const int n = basis.size();
    if (static_cast<int>(config.points.size()) != n)
        throw ValidationError("configuration has " + std::to_string(config.points.size()) + " points, basis has " +
                              std::to_string(n) + " elements");
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < i; ++j)
            if (config.points[i] == config.points[j]) return -kInf;
    if (is_full(basis)) {
        double l = pair_log_sum(config.points);
        return std::isfinite(l) ? l : -kInf;
    }
    return slater_log_norm_determinant(config, basis);
}

double slater_log_norm_determinant(const Configuration& config, const BasisSpec& basis) {
    basis.validate();
    const int n = basis.size();
    if (static_cast<int>(config.points.size()) != n)
        throw ValidationError("configuration has " + std::to_string(config.points.size()) + " points, basis has " +
                              std::to_string(n) + " elements");
    ColumnMaker cm(basis);
    Eigen::MatrixXcd s(n, n);
    for (int j = 0; j < n; ++j) cm.fill(config.points[j], [&](std::size_t i, cplx v) { s(i, j) = v; });
    double l = log_abs_det_sq(s);
    if (!std::isfinite(l)) return -kInf;
    return l - cm.log_binom_total();
}

double energy_per_particle(const Configuration& config, const BasisSpec& basis) {
    double l = slater_log_norm(config, basis);
    if (l == -kInf) return kInf;
    return -l / (static_cast<double>(basis.level) * basis.size());
}

int SpherePartition::band(const Vec3& x) const {
    int b = static_cast<int>(moment_t(x) * bands);
    return std::clamp(b, 0, bands - 1);
}

int SpherePartition::bin(const Vec3& x) const {
    double th = std::atan2(x[1], x[0]);
    int s = static_cast<int>((th + kPi) / (2.0 * kPi) * sectors);
    return band(x) * sectors + std::clamp(s, 0, sectors - 1);
}

void GibbsParams::validate() const {
    if (!std::isfinite(beta)) throw ValidationError("beta must be finite");
    if (sweeps < 1) throw ValidationError("sweeps must be positive");
    if (burn_in < 0 || sweeps <= burn_in) throw ValidationError("sweeps must exceed burn_in");
    if (!(proposal_scale > 0.0)) throw ValidationError("proposal_scale must be positive");
    if (chains < 1) throw ValidationError("chains must be positive");
    if (partition.bands < 1 || partition.sectors < 1) throw ValidationError("partition must have positive size");
    if (snapshot_every < 0) throw ValidationError("snapshot_every must be nonnegative");
}

double autocorrelation_time(const std::vector<double>& x) {
    const std::size_t n = x.size();
    if (n < 4) return 1.0;
    double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double c0 = 0.0;
    for (double v : x) c0 += (v - mean) * (v - mean);
    c0 /= n;
    if (!(c0 > 0.0)) return 1.0;
    double tau = 1.0;
    for (std::size_t lag = 1; lag < n / 2; ++lag) {
        double c = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i) c += (x[i] - mean) * (x[i + lag] - mean);
        tau += 2.0 * c / n / c0;
        if (static_cast<double>(lag) >= 5.0 * tau) break;
    }
    return std::max(tau, 1.0);
}

double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw std::invalid_argument("total_variation: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::fabs(p[i] - q[i]);
    return 0.5 * s;
}

// ---------------------------------------------------------------------------------------------

namespace {

struct ChainResult {
    std::vector<long> histogram;
    std::vector<double> energies;
    std::vector<Configuration> snapshots;
    long accepted = 0, proposed = 0;
    double scale = 0.0;
    std::string error;
};

// Acceptance ratios of single-point moves. A full basis uses the pairwise form of log|det S|²
// at O(N) per move; other bases keep S⁻¹ with rank-one updates.
class SlaterState {
public:
    SlaterState(const BasisSpec& basis, std::vector<Vec3>& x)
        : n_(basis.size()), pairwise_(is_full(basis)), cm_(basis), x_(x) {
        if (!pairwise_) {
            s_.resize(n_, n_);
            col_.resize(n_);
            w_.resize(n_);
            refresh_every_sweep_ = n_ <= 128;
        }
    }

    // Recomputes from the points; false when the configuration is degenerate.
    bool reset() {
        if (pairwise_) {
            log_norm_ = pair_log_sum(x_);
        } else {
            for (int j = 0; j < n_; ++j) cm_.fill(x_[j], [&](std::size_t i, cplx v) { s_(i, j) = v; });
            refresh();
        }
        return std::isfinite(log_norm_);
    }

    // log|det S(x with x_j → y)|² − log|det S(x)|², or −∞ at a collision.
    double log_ratio(int j, const Vec3& y) {
        if (pairwise_) {
            double d = 0.0;
            for (int i = 0; i < n_; ++i) {
                if (i == j) continue;
                double cy = chordal_sq(y, x_[i]);
                if (!(cy > 0.0)) return -kInf;
                d += std::log(cy) - std::log(chordal_sq(x_[j], x_[i]));
            }
            return d;
        }
        cm_.fill(y, [&](std::size_t i, cplx v) { col_[i] = v; });
        r_ = sinv_.row(j) * col_;
        double ar = std::norm(r_);
        return ar > 0.0 && std::isfinite(ar) ? std::log(ar) : -kInf;
    }

    // Commits the move last passed to log_ratio.
    void accept(int j, const Vec3& y, double log_ratio) {
        x_[j] = y;
        log_norm_ += log_ratio;
        if (pairwise_) return;
        w_.noalias() = sinv_ * col_;
        Eigen::RowVectorXcd row = sinv_.row(j);
        w_[j] -= 1.0;
        sinv_.noalias() -= (w_ / r_) * row;
        s_.col(j) = col_;
        if (!refresh_every_sweep_ && ++accepts_since_refresh_ >= n_) refresh();
    }

    void end_sweep() {
        if (pairwise_)
            log_norm_ = pair_log_sum(x_);
        else if (refresh_every_sweep_)
            refresh();
    }

    // slater_log_norm of the current points.
    double log_norm() const { return pairwise_ ? log_norm_ : log_norm_ - cm_.log_binom_total(); }

private:
    void refresh() {
        Eigen::PartialPivLU<Eigen::MatrixXcd> lu(s_);
        double l = 0.0;
        for (int i = 0; i < n_; ++i) l += std::log(std::abs(lu.matrixLU()(i, i)));
        log_norm_ = 2.0 * l;
        sinv_ = lu.inverse();
        accepts_since_refresh_ = 0;
    }

    int n_;
    bool pairwise_;
    ColumnMaker cm_;
    std::vector<Vec3>& x_;
    double log_norm_ = -kInf;
    Eigen::MatrixXcd s_, sinv_;
    Eigen::VectorXcd col_, w_;
    cplx r_;
    bool refresh_every_sweep_ = true;
    long accepts_since_refresh_ = 0;
};

// Metropolis chain for ‖det‖^{2β/k} Π dV(x_j).
ChainResult run_chain(const LogSphere& space, const BasisSpec& basis, const GibbsParams& p, int chain) {
    ChainResult out;
    const int n = basis.size();
    const double k = static_cast<double>(basis.level);
    CounterRng rng(p.seed, static_cast<std::uint64_t>(chain));

    std::vector<Vec3> x(n);
    std::vector<double> log_dv(n);
    SlaterState state(basis, x);
    bool ok_start = false;
    for (int attempt = 0; attempt < 100 && !ok_start; ++attempt) {
        for (int j = 0; j < n; ++j) {
            x[j] = uniform_point(rng);
            log_dv[j] = space.log_density(x[j]);
        }
        ok_start = state.reset();
    }
    if (!ok_start) {
        out.error = "could not draw a nondegenerate starting configuration";
        return out;
    }

    out.histogram.assign(p.partition.size(), 0);
    double sigma = p.proposal_scale;
    long retained = 0;
    for (long sweep = 0; sweep < p.sweeps; ++sweep) {
        long acc_sweep = 0;
        for (int j = 0; j < n; ++j) {
            Vec3 y = propose(x[j], sigma, rng);
            double lr = state.log_ratio(j, y);
            double ldv = space.log_density(y);
            bool ok = false;
            if (std::isfinite(lr) && std::isfinite(ldv)) {
                double log_acc = (p.beta / k) * lr + ldv - log_dv[j];
                ok = std::log(rng.uniform()) < log_acc;
            } else {
                rng.uniform();
            }
            if (ok) {
                state.accept(j, y, lr);
                log_dv[j] = ldv;
                ++acc_sweep;
            }
        }
        state.end_sweep();
        double rate = static_cast<double>(acc_sweep) / n;
        double energy = -state.log_norm() / (k * n);
        if (!(p.beta * energy >= p.runaway_floor)) {
            std::ostringstream os;
            os << "instability: possible Z divergence (chain " << chain << ", sweep " << sweep << ", beta*E = "
               << p.beta * energy << ")";
            out.error = os.str();
            return out;
        }
        if (sweep < p.burn_in) {
            if (p.tune) sigma = std::clamp(sigma * std::exp(rate - 0.3), 1e-4, kPi);
            continue;
        }
        out.accepted += acc_sweep;
        out.proposed += n;
        out.energies.push_back(energy);
        for (const auto& v : x) ++out.histogram[p.partition.bin(v)];
        ++retained;
        if (p.snapshot_every > 0 && retained % p.snapshot_every == 0) out.snapshots.push_back({x});
    }
    out.scale = sigma;
    return out;
}

}  // namespace

EmpiricalStats mcmc_sample(const LogSphere& space, const BasisSpec& basis, const GibbsParams& params) {
    basis.validate();
    params.validate();
    std::vector<ChainResult> results(params.chains);
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (int c = next++; c < params.chains; c = next++) {
            try {
                results[c] = run_chain(space, basis, params, c);
            } catch (const std::exception& e) {
                results[c].error = e.what();
            }
        }
    };
    int threads = thread_cap(params.chains);
    std::vector<std::thread> pool;
    for (int i = 1; i < threads; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (const auto& r : results)
        if (!r.error.empty()) throw ComputationError(r.error);

    EmpiricalStats st;
    st.partition = params.partition;
    st.particles = basis.size();
    st.retained_sweeps = params.sweeps - params.burn_in;
    st.histogram.assign(params.partition.size(), 0);
    st.conditional_on_finite_z = params.beta < 0.0;
    long acc = 0, prop = 0;
    double var_sum = 0.0;
    for (const auto& r : results) {
        for (std::size_t i = 0; i < r.histogram.size(); ++i) st.histogram[i] += r.histogram[i];
        st.energy_trace.insert(st.energy_trace.end(), r.energies.begin(), r.energies.end());
        st.snapshots.insert(st.snapshots.end(), r.snapshots.begin(), r.snapshots.end());
        acc += r.accepted;
        prop += r.proposed;
        double tau = autocorrelation_time(r.energies);
        double mean = std::accumulate(r.energies.begin(), r.energies.end(), 0.0) / r.energies.size();
        double var = 0.0;
        for (double e : r.energies) var += (e - mean) * (e - mean);
        var /= std::max<std::size_t>(1, r.energies.size() - 1);
        var_sum += var * tau / r.energies.size();
        st.chains.push_back({static_cast<double>(r.accepted) / std::max<long>(1, r.proposed), r.scale, tau, mean});
    }
    st.acceptance_rate = static_cast<double>(acc) / std::max<long>(1, prop);
    st.mean_energy = 0.0;
    double tau_sum = 0.0;
    for (const auto& c : st.chains) {
        st.mean_energy += c.mean_energy;
        tau_sum += c.autocorrelation_time;
    }
    st.mean_energy /= params.chains;
    st.autocorrelation_time = tau_sum / params.chains;
    st.energy_stderr = std::sqrt(var_sum) / params.chains;
    return st;
}

std::vector<double> BinnedDensity::masses() const {
    std::vector<double> m(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) m[i] = values[i] / partition.size();
    return m;
}

std::vector<double> BinnedDensity::band_profile() const {
    std::vector<double> out(partition.bands, 0.0);
    for (int b = 0; b < partition.bands; ++b)
        for (int s = 0; s < partition.sectors; ++s) out[b] += values[b * partition.sectors + s] / partition.sectors;
    return out;
}

BinnedDensity empirical_density(const EmpiricalStats& stats) {
    long total = std::accumulate(stats.histogram.begin(), stats.histogram.end(), 0L);
    if (total <= 0) throw ValidationError("empty histogram");
    BinnedDensity d;
    d.partition = stats.partition;
    d.values.resize(stats.histogram.size());
    for (std::size_t i = 0; i < d.values.size(); ++i)
        d.values[i] = static_cast<double>(stats.histogram[i]) / total * stats.partition.size();
    return d;
}

PartitionEstimate log_partition(const LogSphere& space, const BasisSpec& basis, double beta,
                                const GibbsParams& leg_params, int intervals) {
    if (!std::isfinite(beta)) throw ValidationError("beta must be finite");
    if (intervals < 2 || intervals % 2) throw ValidationError("thermodynamic integration needs an even number of legs");
    PartitionEstimate est{beta, 0.0, 0.0, {}, {}};
    if (beta == 0.0) {
        est.scan.push_back({0.0, 0.0, 0.0});
        return est;
    }
    const double h = beta / intervals;
    for (int i = 0; i <= intervals; ++i) {
        GibbsParams p = leg_params;
        p.beta = h * i;
        p.seed = CounterRng::mix(leg_params.seed + 0x1000u * static_cast<std::uint64_t>(i));
        p.snapshot_every = 0;
        EmpiricalStats st;
        try {
            st = mcmc_sample(space, basis, p);
        } catch (const ComputationError& e) {
            std::ostringstream os;
            os << "thermodynamic integration leg beta'=" << p.beta << " failed: " << e.what();
            throw ComputationError(os.str());
        }
        if (st.acceptance_rate < 0.01 || !std::isfinite(st.mean_energy)) {
            std::ostringstream os;
            os << "thermodynamic integration leg beta'=" << p.beta << " failed health check (acceptance "
               << st.acceptance_rate << ")";
            throw ComputationError(os.str());
        }
        est.legs.push_back({p.beta, st.mean_energy, st.energy_stderr, st.acceptance_rate});
    }
    // Simpson = Richardson extrapolation of the trapezoid rule at spacings h and 2h.
    est.scan.push_back({0.0, 0.0, 0.0});
    double value = 0.0, var = 0.0;
    for (int i = 0; i + 2 <= intervals; i += 2) {
        const double w[3] = {h / 3.0, 4.0 * h / 3.0, h / 3.0};
        for (int j = 0; j < 3; ++j) {
            value += w[j] * est.legs[i + j].mean_energy;
            var += w[j] * w[j] * est.legs[i + j].stderr_ * est.legs[i + j].stderr_;
        }
        // interior even nodes are shared by two panels
        if (i > 0) var += 2.0 * (h / 3.0) * (h / 3.0) * est.legs[i].stderr_ * est.legs[i].stderr_;
        est.scan.push_back({est.legs[i + 2].beta, value, std::sqrt(var)});
    }
    est.value = value;
    est.stderr_ = std::sqrt(var);
    return est;
}

// ---------------------------------------------------------------------------------------------

namespace {

struct QuadNode {
    Vec3 x;
    double t;
    double log_w;  // log of the dV weight
};

// Radial rule in t for dV on a polar space, graded at each log pole, normalized to total 1.
std::vector<std::pair<double, double>> radial_rule(double c0, double c1, int n) {
    const GaussRule& g = gauss_legendre(std::max(1, n / 2));
    double q0 = 1.0 / (1.0 - c0), q1 = 1.0 / (1.0 - c1);
    std::vector<std::pair<double, double>> out;  // (t, weight)
    double total = 0.0;
    for (int half = 0; half < 2; ++half) {
        for (std::size_t i = 0; i < g.nodes.size(); ++i) {
            double r = 0.25 * (1.0 + g.nodes[i]);  // distance in s from the pole, in (0, ½)
            double ws = 0.25 * g.weights[i];
            double c = half ? c1 : c0, q = half ? q1 : q0;
            double tp = 0.5 * std::pow(2.0 * r, q);
            double dtds = q * std::pow(2.0 * r, q - 1.0);
            double t = half ? 1.0 - tp : tp;
            double w = ws * dtds * std::pow(tp, -c) * std::pow(1.0 - tp, -(half ? c0 : c1));
            out.push_back({t, w});
            total += w;
        }
    }
    for (auto& p : out) p.second /= total;
    std::sort(out.begin(), out.end());
    return out;
}

Vec3 point_at(double t, double theta) {
    double r = 2.0 * std::sqrt(t * (1.0 - t));
    return {r * std::cos(theta), r * std::sin(theta), 2.0 * t - 1.0};
}

// `shift` rotates the angular nodes so that different slots never share a node.
std::vector<QuadNode> ring_nodes(const LogSphere& space, int radial, int angular, bool fixed_angle,
                                 double shift = 0.0) {
    std::vector<QuadNode> out;
    if (space.is_polar()) {
        for (auto [t, w] : radial_rule(space.south_weight(), space.north_weight(), radial)) {
            if (fixed_angle) {
                out.push_back({point_at(t, 0.0), t, std::log(w)});
            } else {
                for (int a = 0; a < angular; ++a) {
                    double th = 2.0 * kPi * (a + 0.5 + shift) / angular - kPi;
                    out.push_back({point_at(t, th), t, std::log(w / angular)});
                }
            }
        }
        return out;
    }
    double total = 0.0;
    for (auto [t, w] : radial_rule(0.0, 0.0, radial)) {
        for (int a = 0; a < angular; ++a) {
            double th = 2.0 * kPi * (a + 0.5 + shift) / angular - kPi;
            Vec3 x = point_at(t, th);
            double lw = std::log(w / angular) + space.log_density(x);
            total += std::exp(lw);
            out.push_back({x, t, lw});
        }
    }
    for (auto& nd : out) nd.log_w -= std::log(total);
    return out;
}

cplx small_det(const std::vector<const std::vector<cplx>*>& cols) {
    const std::size_t n = cols.size();
    auto a = [&](int i, int j) { return (*cols[j])[i]; };
    if (n == 1) return a(0, 0);
    if (n == 2) return a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
           a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

// Tensor-product samples of (E^(N), log weight, Σ(2t_j − 1)).
struct QuadTable {
    std::vector<double> energy, log_w, tilt;
};

QuadTable tabulate(const BasisSpec& basis, const std::vector<std::vector<QuadNode>>& slots) {
    ColumnMaker cm(basis);
    const double lbt = cm.log_binom_total();
    const int n = basis.size();
    std::vector<std::vector<std::vector<cplx>>> cols(slots.size());
    for (std::size_t s = 0; s < slots.size(); ++s)
        for (const auto& nd : slots[s]) {
            std::vector<cplx> c(n);
            cm.fill(nd.x, [&](std::size_t i, cplx v) { c[i] = v; });
            cols[s].push_back(std::move(c));
        }
    QuadTable tab;
    std::vector<std::size_t> idx(slots.size(), 0);
    std::vector<const std::vector<cplx>*> pick(slots.size());
    while (true) {
        double lw = 0.0, tilt = 0.0;
        for (std::size_t s = 0; s < slots.size(); ++s) {
            const auto& nd = slots[s][idx[s]];
            lw += nd.log_w;
            tilt += 2.0 * nd.t - 1.0;
            pick[s] = &cols[s][idx[s]];
        }
        double l = std::log(std::norm(small_det(pick))) - lbt;
        tab.energy.push_back(std::isfinite(l) ? -l / (static_cast<double>(basis.level) * n) : kInf);
        tab.log_w.push_back(lw);
        tab.tilt.push_back(tilt);
        std::size_t s = slots.size();
        while (s > 0) {
            --s;
            if (++idx[s] < slots[s].size()) break;
            idx[s] = 0;
            if (s == 0) return tab;
        }
    }
}

// log Σ w e^{−γ N E}, plus the normalized mean of E and of the tilt.
struct Moments {
    double log_z, mean_energy;
};

Moments tempered(const QuadTable& tab, double gamma, int n) {
    double amax = -kInf;
    std::vector<double> a(tab.energy.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        double e = tab.energy[i];
        a[i] = tab.log_w[i] + (e == kInf ? (gamma > 0 ? -kInf : (gamma < 0 ? kInf : 0.0)) : -gamma * n * e);
        amax = std::max(amax, a[i]);
    }
    if (!std::isfinite(amax)) return {amax, kInf};
    double z = 0.0, ez = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double w = std::exp(a[i] - amax);
        z += w;
        if (w > 0.0) ez += w * tab.energy[i];
    }
    return {amax + std::log(z), ez / z};
}

}  // namespace

BruteForceResult brute_force_log_partition(const LogSphere& space, const BasisSpec& basis, double beta, int nodes) {
    basis.validate();
    const int n = basis.size();
    if (n > 3) throw ValidationError("oracle only: brute-force quadrature refuses N > 3");
    if (!std::isfinite(beta)) throw ValidationError("beta must be finite");
    if (nodes < 4) throw ValidationError("brute-force quadrature needs at least 4 nodes");
    const bool round = space.log_points().empty();
    if (!space.is_polar() && n > 2)
        throw ValidationError("oracle only: N = 3 needs a rotationally reducible space");

    BruteForceResult res{};
    // Z is invariant under SU(2) on the round sphere and under rotation about the poles otherwise.
    std::vector<std::vector<QuadNode>> slots;
    int radial = n == 3 ? nodes / 2 : nodes;
    int angular = n == 3 ? std::max(4, nodes / 4) : 2 * nodes;
    if (round) {
        res.reduction = "SU(2): first point fixed at the south pole";
        slots.push_back({{{0.0, 0.0, -1.0}, 0.0, 0.0}});
        for (int s = 1; s < n; ++s) slots.push_back(ring_nodes(space, 2 * nodes, angular, s == 1, 0.3 * s));
    } else if (space.is_polar()) {
        res.reduction = "axial: first point at angle 0";
        for (int s = 0; s < n; ++s) slots.push_back(ring_nodes(space, radial, angular, s == 0, 0.3 * s));
    } else {
        res.reduction = "none: full product quadrature";
        for (int s = 0; s < n; ++s) slots.push_back(ring_nodes(space, radial, angular, false, 0.3 * s));
    }
    QuadTable tab = tabulate(basis, slots);
    Moments mb = tempered(tab, beta, n);
    res.value = -mb.log_z / n;

    // F^(N)(μ) = β⟨E⟩_μ + Ent(μ)/N evaluated directly at the Gibbs measure.
    {
        double ent = 0.0, mean = 0.0;
        for (std::size_t i = 0; i < tab.energy.size(); ++i) {
            if (tab.energy[i] == kInf) continue;
            double lp = tab.log_w[i] - beta * n * tab.energy[i] - mb.log_z;
            double p = std::exp(lp);
            if (p == 0.0) continue;
            ent += p * (lp - tab.log_w[i]);
            mean += p * tab.energy[i];
        }
        res.gibbs_free_energy = beta * mean + ent / n;
    }

    bool has_collisions = std::any_of(tab.energy.begin(), tab.energy.end(), [](double e) { return e == kInf; });
    auto f_tempered = [&](double gamma) {
        Moments m = tempered(tab, gamma, n);
        return (beta - gamma) * m.mean_energy - m.log_z / n;
    };
    double lo = beta - 1.0 - std::fabs(beta), hi = beta + 1.0 + std::fabs(beta);
    if (has_collisions) lo = std::max(lo, 0.0);
    auto rt = boost::math::tools::brent_find_minima(f_tempered, lo, hi, 40);
    res.tempered_argmin = rt.first;
    res.inf_tempered = rt.second;

    // Product family on a quadrature that keeps the angle of every point.
    QuadTable ptab;
    std::vector<QuadNode> single;
    if (round || !space.is_polar()) {
        std::vector<std::vector<QuadNode>> ps;
        if (space.is_polar()) {
            for (int s = 0; s < n; ++s) ps.push_back(ring_nodes(space, radial, angular, s == 0, 0.3 * s));
        } else {
            ps = slots;
        }
        ptab = tabulate(basis, ps);
        single = ring_nodes(space, radial, angular, false);
    } else {
        ptab = tab;
        single = ring_nodes(space, radial, angular, false);
    }
    auto f_product = [&](double a) {
        double lc = -kInf;
        std::vector<double> terms;
        for (const auto& nd : single) terms.push_back(nd.log_w + a * (2.0 * nd.t - 1.0));
        double mx = *std::max_element(terms.begin(), terms.end());
        double s = 0.0, st = 0.0;
        for (std::size_t i = 0; i < terms.size(); ++i) {
            double w = std::exp(terms[i] - mx);
            s += w;
            st += w * (2.0 * single[i].t - 1.0);
        }
        lc = mx + std::log(s);
        double ent = a * st / s - lc;
        double amax = -kInf;
        std::vector<double> lw(ptab.energy.size());
        for (std::size_t i = 0; i < lw.size(); ++i) {
            lw[i] = ptab.log_w[i] + a * ptab.tilt[i] - n * lc;
            amax = std::max(amax, lw[i]);
        }
        double z = 0.0, ez = 0.0;
        for (std::size_t i = 0; i < lw.size(); ++i) {
            double w = std::exp(lw[i] - amax);
            z += w;
            if (w > 0.0) ez += w * ptab.energy[i];
        }
        return beta * ez / z + ent;
    };
    auto rp = boost::math::tools::brent_find_minima(f_product, -6.0, 6.0, 40);
    res.product_argmin = rp.first;
    res.inf_product = rp.second;
    return res;
}

}  // namespace kelab
