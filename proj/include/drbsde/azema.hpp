#pragma once

#include "drbsde/default_law.hpp"
#include "drbsde/lattice.hpp"

namespace drbsde {

struct AssumptionPError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// The processes parameterising the default time through the base
/// filtration, all computed exactly by enumeration:
///
///   G_k      = P(tau > t_k | F_k)           (survival)
///   Gtilde_k = P(tau >= t_k | F_k) = G + q
///   q_k      = P(tau = t_k | F_k)
///   Dopt     = sum_{j<=k} q_j               (dual optional projection)
///   m        = Dopt + G                     (base-filtration martingale)
///   E_k      = prod_{j<=k} (1 + dm_j / G_{j-1})
///   Etilde_k = prod_{j<=k} (1 - q_j / Gtilde_j)
///   Psi      = 1 / E stopped at the default step (enlarged tree)
///
/// Identities G = E * Etilde, 0 < Etilde <= 1 and the martingale
/// properties of m and Psi hold exactly and are enforced by tests.
struct AzemaBundle {
    LatticeModel model;
    DefaultLaw law;
    FProcess G, Gtilde, q, Dopt, m, E, Etilde;
    GProcess Psi;
};

/// Builds the bundle; throws AssumptionPError naming the first node where
/// the survival probability is not strictly positive.
AzemaBundle build_azema(const LatticeModel& model, const DefaultLaw& law);

} // namespace drbsde
