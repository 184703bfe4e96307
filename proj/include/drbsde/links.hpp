#pragma once

#include "drbsde/solver.hpp"

#include <array>
#include <functional>

namespace drbsde {

/// Deflated data for the base-filtration formulation of the reflected
/// equation: multiply by the second Doleans-Dade factor and replace the
/// default leg with the finite-variation term built from V = 1 - Etilde.
struct FLinkData {
    std::vector<double> xi_f; // per terminal path: Etilde_N * zeta_N
    FProcess g_f;             // Etilde * g
    bool has_lower = false, has_upper = false;
    FProcess lower_f, upper_f; // Etilde * L, Etilde * U
    FProcess v_f;              // 1 - Etilde, nondecreasing, starts at 0
    FProcess zeta_dv;          // level-k increment zeta_k * dV_k (level 0 is 0)
};

/// Requires a driver independent of the solution (Zero or GTable).
FLinkData transform_first_link(const LatticeModel& m, const AzemaBundle& bundle,
                               const DRBSDEProblem& prob);

struct FSolution {
    FProcess Y, Z, Kplus, Kminus; // cumulative K, level k holds K_{t_k}
};

/// Reflected backward recursion on the base tree under the reference
/// measure, with the Stieltjes increments folded into the continuation
/// value before the driver step and the clamp.
FSolution solve_f_drbsde(const LatticeModel& m, const FLinkData& data);

struct LinkReport {
    double max_abs_error = 0.0; // |Y Etilde - Y^F| over alive nodes
    double max_k_error = 0.0;   // transport of the reflection increments
    double max_m_error = 0.0;   // orthogonal-part increments vs the default martingale
    // per-node state errors (step, prefix, error); filled on small trees
    std::vector<std::array<double, 3>> per_node_errors;
    std::vector<std::array<double, 3>> convergence; // rows (dt, error, node_count)
};

LinkReport verify_first_link(const LatticeModel& m, const AzemaBundle& bundle,
                             const DRBSDEProblem& gprob, const DRBSDESolution& gsol,
                             const FLinkData& fdata, const FSolution& fsol);

struct TransferReport {
    double terminal_gap = 0.0;     // two-sided identity for the terminal process
    double driver_gap = 0.0;       // for the running |g/alpha|^2 integral
    double lower_gap = 0.0;        // for the running sup of (L+)^2 (doubled weight)
    double upper_gap = 0.0;        // for (U-)^2
    double inequality_slack = 0.0; // bound minus left side (should be >= 0)
};

/// Exact change-of-measure identity E_Q[X_{T and tau}] =
/// E_P[Etilde_N X_N + sum_k X_k dV_k] for an adapted base-tree process X.
double transfer_identity_gap(const LatticeModel& m, const AzemaBundle& bundle, const Measure& q,
                             const FProcess& x);

TransferReport verify_integrability_transfer(const LatticeModel& m, const AzemaBundle& bundle,
                                             const Measure& q, const FProcess& zeta,
                                             const DriverSpec& driver, double beta,
                                             bool has_lower, const FProcess& lower,
                                             bool has_upper, const FProcess& upper);

struct SecondLinkReport {
    double balance_gap = 0.0;    // conditional projected balance, node-wise
    double pathwise_gap = 0.0;   // full balance with both integrands against the walk
    double ordering_gap = 0.0;   // max violation of L <= E[Y | F] <= U
    double skorokhod_gap = 0.0;  // products against the pre-default reduction of Y
    double theta_residual = 0.0; // projected orthogonal part minus its walk integrand
    double varpi = 0.0;          // integral of the y-coefficient (linear case)
};

/// Projection of the enlarged-tree solution onto the base filtration in
/// the independence regime (deterministic default masses, so the tilted
/// measure coincides with the reference one and the projection desk-checks
/// exactly). Driver must be solution-free or linear in y with a bounded
/// coefficient integral.
SecondLinkReport project_second_link(const LatticeModel& m, const AzemaBundle& bundle,
                                     const Measure& q, const DRBSDEProblem& prob,
                                     const DRBSDESolution& sol);

/// Scenario rules of (time, walk value) used by the dyadic refinement
/// sweep, which keeps one continuous-time object fixed while dt shrinks.
struct RuleSet {
    std::function<double(double, double)> zeta;
    std::function<double(double, double)> g;     // null = zero driver
    std::function<double(double, double)> lower; // null = no barrier
    std::function<double(double, double)> upper;
    std::function<double(double, double)> hazard_rate; // intensity; null = no default
};

/// Runs the first-link verification at each refinement level (grid count)
/// over a fixed horizon and returns the report of the finest level with
/// the convergence table filled.
LinkReport first_link_refinement(const RuleSet& rules, double horizon,
                                 const std::vector<int>& levels);

} // namespace drbsde
