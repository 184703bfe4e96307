#pragma once

#include "drbsde/solver.hpp"

namespace drbsde {

struct SizeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct RuleError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Two-player stopping game with a default feature: the stopper facing
/// default pays a penalised terminal leg. Barriers and the simultaneous
/// payoff live on the base tree; xi1 (survival leg) and xi2 (post-default
/// leg, xi2 > xi1) are given per terminal path.
struct GameSpec {
    DriverSpec driver;
    FProcess lower, upper;
    FProcess qproc;                // L <= Q <= U before the expiry
    std::vector<double> xi1, xi2;  // per terminal path
    double beta = 4.0;

    void validate(const LatticeModel& m, const Measure& q) const;

    /// Terminal of the associated reflected equation: xi1 on survival
    /// atoms, xi2 on default atoms.
    AtomValues terminal(const LatticeModel& m) const;
    DRBSDEProblem problem(const LatticeModel& m) const;
};

/// Adapted stop/continue decisions. A rule stops at the first flagged
/// alive node at a step >= the start; it is forced to stop at the default
/// transition and at the horizon, so it always lies within the expiry.
struct StoppingRule {
    std::vector<std::vector<std::uint8_t>> stop; // [step][prefix], alive nodes

    static StoppingRule horizon_only(const LatticeModel& m);
    static StoppingRule merge(const StoppingRule& a, const StoppingRule& b); // min of the two

    /// Realised stopping step on an atom, scanning from theta.
    int realized(const LatticeModel& m, int theta, Path path, int d) const;
};

/// Four-case payoff on atoms: lower leg if player one stops first, upper
/// leg if player two stops first, the middle process on simultaneous
/// interior stops, and the split terminal at the expiry.
AtomValues game_payoff(const LatticeModel& m, const GameSpec& spec, const StoppingRule& rule1,
                       const StoppingRule& rule2, int theta);

/// Nonlinear evaluation of a payoff observed at a stopping rule: backward
/// driver recursion before the stop, plain conditional expectation after.
/// With a zero driver the value at theta is the conditional expectation.
GProcess ef_evaluate(const LatticeModel& m, const Measure& q, const DriverSpec& driver,
                     const AtomValues& payoff, const StoppingRule& horizon, int theta);

struct GameValueReport {
    double upper = 0.0;      // min-max at the root (theta = 0) or worst node
    double lower = 0.0;      // max-min
    double y_at_theta = 0.0;
    double max_gap = 0.0;          // max |upper - lower| over start nodes
    double max_value_vs_y = 0.0;   // max |value - Y_theta| over start nodes
    std::size_t pairs = 0;
    int deviations_checked = 0;    // rule pairs evaluated
    StoppingRule saddle1, saddle2; // an argmax/argmin pair at the root
};

std::vector<StoppingRule> enumerate_rules(const LatticeModel& m, int theta,
                                          std::size_t cap = 4096);

/// Exhaustive min-max / max-min over all rule pairs from theta; the
/// solution, when given, is compared node-wise at the start step.
GameValueReport brute_force_value(const LatticeModel& m, const Measure& q, const GameSpec& spec,
                                  int theta, const DRBSDESolution* sol = nullptr,
                                  std::size_t cap = 4096);

/// First hitting rules of the barriers by the solution (exact equality by
/// clamping), forced at the expiry.
std::pair<StoppingRule, StoppingRule> saddle_from_solution(const LatticeModel& m,
                                                           const Measure& q,
                                                           const GameSpec& spec,
                                                           const DRBSDESolution& sol, int theta);

struct SaddleReport {
    int deviations_checked = 0;
    int violations = 0;
    double worst_violation = 0.0; // most negative slack across both inequalities
    double value_vs_y = 0.0;      // |E^f(pair) - Y_theta| at start nodes
    double band_defect = 0.0;     // strong-martingale property on [theta, stop]
    bool sampled = false;         // deviation set truncated at the cap
};

SaddleReport verify_saddle(const LatticeModel& m, const Measure& q, const GameSpec& spec,
                           const DRBSDESolution& sol, const StoppingRule& rule1,
                           const StoppingRule& rule2, int theta, std::size_t cap = 4096,
                           double tol = 1e-9);

} // namespace drbsde
