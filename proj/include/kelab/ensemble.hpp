#pragma once

#include "kelab/geometry.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace kelab {

// Monomial basis z^e of H⁰(O(m)) at level k. The Fano regime (sign −1) samples −k(K + Δ),
// the β > 0 log regime (sign +1) samples k(K + Δ); either way m = k·|2 − Σ c|.
struct BasisSpec {
    long level = 1;
    int sign = -1;
    long degree = 0;
    std::vector<long> exponents;

    int size() const { return static_cast<int>(exponents.size()); }
    void validate() const;
};

BasisSpec full_basis(const LogSphere& space, long k);
// Full basis of O(m) at level k, for bundles other than ±(K + Δ).
BasisSpec bundle_basis(long k, long m);

struct Configuration {
    std::vector<Vec3> points;
};

// log ‖det s_i(x_j)‖² with the Fubini–Study weight (1 + |z|²)^{−m} at every point, for the monomial
// basis z^e; −∞ on collision. A full basis (exponents 0..m) uses the Vandermonde product
// Σ_{i<j} log chordal²(x_i, x_j), which stays accurate when points cluster.
double slater_log_norm(const Configuration& config, const BasisSpec& basis);
// Same quantity from a pivoted QR factorization of the Slater matrix, for any basis.
double slater_log_norm_determinant(const Configuration& config, const BasisSpec& basis);
// −slater_log_norm/(kN); +∞ on collision.
double energy_per_particle(const Configuration& config, const BasisSpec& basis);

// Equal-area cells: bands uniform in t times sectors uniform in the angle.
struct SpherePartition {
    int bands = 64;
    int sectors = 32;
    int size() const { return bands * sectors; }
    int band(const Vec3& x) const;
    int bin(const Vec3& x) const;
};

struct GibbsParams {
    double beta = 0.0;
    long sweeps = 1000;  // including burn-in
    long burn_in = 100;
    double proposal_scale = 0.5;
    std::uint64_t seed = 0;
    int chains = 1;
    bool tune = true;              // adapt proposal_scale during burn-in toward acceptance 0.3
    double runaway_floor = -100.0;  // abort when β·E^(N) drops below this
    long snapshot_every = 0;        // keep every n-th retained configuration; 0 keeps none
    SpherePartition partition;

    void validate() const;
};

struct ChainSummary {
    double acceptance_rate;
    double proposal_scale;
    double autocorrelation_time;
    double mean_energy;
};

struct EmpiricalStats {
    SpherePartition partition;
    int particles = 0;
    long retained_sweeps = 0;        // per chain
    std::vector<long> histogram;     // row-major (band, sector)
    double acceptance_rate = 0.0;
    std::vector<double> energy_trace;  // retained sweeps, chains concatenated in index order
    double autocorrelation_time = 1.0;
    double mean_energy = 0.0;
    double energy_stderr = 0.0;
    bool conditional_on_finite_z = false;  // β < 0: meaningful only if Z_N < ∞
    std::vector<ChainSummary> chains;
    std::vector<Configuration> snapshots;
};

EmpiricalStats mcmc_sample(const LogSphere& space, const BasisSpec& basis, const GibbsParams& params);

// Histogram normalized to a density relative to normalized area (1 on the uniform histogram).
struct BinnedDensity {
    SpherePartition partition;
    std::vector<double> values;
    std::vector<double> masses() const;
    // Marginal density in t, one value per band.
    std::vector<double> band_profile() const;
};

BinnedDensity empirical_density(const EmpiricalStats& stats);

// Integrated autocorrelation time with Sokal's self-consistent window (c = 5).
double autocorrelation_time(const std::vector<double>& series);

double total_variation(const std::vector<double>& p, const std::vector<double>& q);

struct PartitionLeg {
    double beta;
    double mean_energy;
    double stderr_;
    double acceptance_rate;
};

struct PartitionEstimate {
    double beta;
    double value;  // −(1/N) log Z_N(β)
    double stderr_;
    std::vector<PartitionLeg> legs;
    // Partial integrals at every even leg: (β′, −(1/N) log Z_N(β′), error).
    std::vector<std::array<double, 3>> scan;
};

// Thermodynamic integration of ⟨E^(N)⟩ over β′ ∈ [0, β] with composite Simpson weights.
PartitionEstimate log_partition(const LogSphere& space, const BasisSpec& basis, double beta,
                                const GibbsParams& leg_params, int intervals = 20);

struct BruteForceResult {
    double value;               // −(1/N) log Z_N(β)
    double gibbs_free_energy;   // F^(N) at the Gibbs measure itself
    double inf_tempered;        // inf over μ_γ ∝ e^{−γ N E^(N)} dV^⊗N
    double tempered_argmin;
    double inf_product;         // inf over ν_a^⊗N, ν_a ∝ e^{a(2t − 1)} dV
    double product_argmin;
    std::string reduction;
};

// Direct quadrature for N ≤ 3.
BruteForceResult brute_force_log_partition(const LogSphere& space, const BasisSpec& basis, double beta,
                                           int nodes = 48);

}  // namespace kelab
