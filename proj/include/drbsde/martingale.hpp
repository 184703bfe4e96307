#pragma once

#include "drbsde/measure.hpp"

namespace drbsde {

/// Largest one-step conditional-mean defect max_k |E[dX_k | node]| over
/// positive-mass nodes: zero (to tolerance) iff X is a martingale under mu.
double martingale_defect_g(const LatticeModel& m, const Measure& mu, const GProcess& x);
double martingale_defect_f(const LatticeModel& m, const Measure& mu, const FProcess& x);

/// Deflator transform of a base-filtration martingale into the enlarged
/// tree: dT(M)_k = dM_k 1_{k<=tau} - Gtilde_k^{-1} 1_{k<=tau} dM_k dm_k,
/// stopped at default. The result is an enlarged-tree martingale under the
/// reference measure; the input must be a base-tree martingale.
GProcess operator_t(const LatticeModel& m, const AzemaBundle& bundle, const FProcess& mart,
                    double input_tol = 1e-9);

struct Decomposition {
    GProcess integrand;  // Z_k, predictable, stored at the step-k node; 0 after default
    GProcess orthogonal; // M with dX = Z dB + dM, E[dM dB | node] = 0
};

/// Representation of a martingale (under mu, stopped at T and tau) against
/// the stopped walk: unique on positive-mass nodes.
Decomposition martingale_decompose(const LatticeModel& m, const Measure& mu, const GProcess& x,
                                   double input_tol = 1e-9);

/// max_k |E_mu[dB^tau_k | node]| over positive-mass nodes: the discrete
/// content of the stopped walk being a martingale under the tilted measure.
double stopped_walk_defect(const LatticeModel& m, const Measure& mu);

/// Pathwise quadratic-variation check: every realised increment of the
/// stopped walk is +/- increment (or exactly 0 after default).
double stopped_walk_bracket_defect(const LatticeModel& m, const Measure& mu);

/// The walk stopped at the default step, as an enlarged-tree process.
GProcess stopped_walk(const LatticeModel& m);

} // namespace drbsde
