#pragma once

#include "kelab/ensemble.hpp"
#include "kelab/geometry.hpp"

#include <optional>
#include <string>
#include <vector>

namespace kelab {

// c · ord_p on the sphere.
struct CurveValuation {
    SpherePoint point;
    Rational scale = 1;
};

// Monomial valuation x^m ↦ scale·⟨m, vector⟩ shifted to be nonnegative on the polytope.
struct ToricValuation {
    std::vector<long> vector;
    Rational scale = 1;
};

std::string describe(const CurveValuation& v);
std::string describe(const ToricValuation& v);

Rational log_discrepancy(const LogSphere& space, const CurveValuation& v);
Rational log_discrepancy(const ToricFano& polytope, const ToricValuation& v);

// Limit S(v).
Rational expected_vanishing(const LogSphere& space, const CurveValuation& v);
Rational expected_vanishing(const ToricFano& polytope, const ToricValuation& v);
// Level-k S_k(v): mean vanishing order of a basis adapted to v, divided by k.
Rational expected_vanishing(const LogSphere& space, const CurveValuation& v, long k);
Rational expected_vanishing(const ToricFano& polytope, const ToricValuation& v, long k);

Rational f_na(const LogSphere& space, const CurveValuation& v);
Rational f_na(const ToricFano& polytope, const ToricValuation& v);

struct DeltaResult {
    Rational value;
    std::string witness;
    // Toric searches: the witness lies strictly inside the box.
    bool interior = true;
    std::vector<std::string> warnings;
};

// Minimum of A/S_k over the candidate valuations (log points and one generic point on curves,
// lattice vectors in [−box, box]ⁿ for polytopes).
DeltaResult delta_k(const LogSphere& space, long k);
DeltaResult delta_k(const ToricFano& polytope, long k, int box = 5);
DeltaResult delta(const LogSphere& space);
DeltaResult delta(const ToricFano& polytope, int box = 5);

// A point that is neither a log point nor a pole.
SpherePoint generic_point(const LogSphere& space);

// Exact min-cost perfect matching; returns the optimal value and the row assigned to each column.
std::pair<Rational, std::vector<int>> min_cost_assignment(const std::vector<std::vector<Rational>>& cost);

// Vanishing order of the basis element (z − centre)^e along v. The basis spans H⁰(O(m)), so
// the order at ∞ is m − e.
Rational basis_order(const BasisSpec& basis, int element, const CurveValuation& v,
                     const SpherePoint& centre = SpherePoint::finite(0.0));

// (1/(Nk)) × min-cost assignment of C[i][j] = ord of basis element i along factor j. A lower
// bound for the valuation of det S, exact when no cancellation occurs.
Rational na_energy_per_particle(const std::vector<CurveValuation>& product, const BasisSpec& basis,
                                const SpherePoint& centre = SpherePoint::finite(0.0));
Rational na_energy_per_particle(const ToricFano& polytope, const std::vector<ToricValuation>& product, long k);

struct LctChainReport {
    long level;
    int particles;
    std::optional<Rational> bound;  // min over examined valuations of A/(N·E_NA)
    std::string witness;
    Rational delta_k;
    std::optional<Rational> margin;  // delta_k − bound
    bool ordered = true;             // bound ≤ delta_k
    long examined = 0;
    long skipped_zero_energy = 0;
    bool mixed_enumerated = false;
    std::vector<std::string> notes;
};

// Upper bounds for lct(D_N), D_N = (1/(kN)) div det S for the monomial basis, from diagonal and,
// for N ≤ max_mixed_particles, mixed product valuations built from torus-fixed points, log points
// and a generic point at scales 1 and 2.
LctChainReport lct_chain(const LogSphere& space, long k, int max_mixed_particles = 7);

struct RestrictionRow {
    long k;
    Rational energy;
    Rational limit;
    Rational gap;
};

struct RestrictionTable {
    std::vector<RestrictionRow> rows;
    Rational fitted_c;       // max k·gap, so gap ≤ C/k on every row
    bool nonincreasing;
    bool within_bound;       // k·gap has settled: its last increment is no larger than the previous one
};

// E_NA^(N_k) of the diagonal valuation (basis adapted to the centre of v) against S(v).
RestrictionTable restriction_experiment(const LogSphere& space, const CurveValuation& v,
                                        const std::vector<long>& levels);
RestrictionTable restriction_experiment(const ToricFano& polytope, const ToricValuation& v,
                                        const std::vector<long>& levels);

enum class Verdict { unstable, inconclusive, inconclusive_stable };
std::string verdict_name(Verdict v);

struct StabilityVerdict {
    Verdict verdict;
    LctChainReport chain;
    std::string note;
};

// Never certifies stability: the valuation set is partial.
StabilityVerdict gibbs_stability_check(const LogSphere& space, long k);

}  // namespace kelab
