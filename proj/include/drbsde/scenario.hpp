#pragma once

#include "drbsde/dynkin.hpp"
#include "drbsde/links.hpp"
#include "drbsde/mc.hpp"

#include <optional>
#include <string>

namespace drbsde {

/// All problems collected while validating a scenario file, each with the
/// path to the offending field.
struct ScenarioError : std::runtime_error {
    explicit ScenarioError(std::vector<std::string> errs)
        : std::runtime_error(join(errs)), errors(std::move(errs)) {}
    std::vector<std::string> errors;
    static std::string join(const std::vector<std::string>& es) {
        std::string s = "scenario validation failed:";
        for (const auto& e : es) s += "\n  " + e;
        return s;
    }
};

enum class RunKind { TreeSolve, Penalize, LinkCheck, DynkinOracle, SaddleVerify, McSolve, ExampleBs };

/// A process rule of (time, walk or price value), the declarative form
/// used for terminals, barriers, drivers and intensities.
struct Rule {
    enum class Kind { Constant, Affine, AffineT, Call, ClampedAffine };
    Kind kind = Kind::Constant;
    double value = 0.0;                  // constant
    double a = 0.0, b = 0.0, c = 0.0;    // affine pieces
    double lo = 0.0, hi = 0.0;           // clamp bounds
    double s0 = 100.0, strike = 100.0;   // call payoff on the geometric walk

    double operator()(double t, double x) const;
};

struct LawSpec {
    enum class Kind { None, Deterministic, HazardRule, HazardTable, Cox };
    Kind kind = Kind::None;
    std::vector<double> h;                   // deterministic masses
    double a = 0.0, b = 0.0;                 // hazard or intensity rule a + b x
    double floor = 0.0, cap = 0.95;          // clamp of the per-step probability
    std::vector<std::vector<double>> table;  // per-path rows
};

struct DriverForm {
    enum class Kind { Zero, GTable, Linear };
    Kind kind = Kind::Zero;
    Rule g, r, theta;
    double epsilon = 1e-2;
};

struct GameForm {
    Rule qproc, xi1, xi2;
};

struct Scenario {
    RunKind run = RunKind::TreeSolve;
    std::string output; // artifact prefix
    std::uint64_t seed = 42;
    int threads = 1;

    // lattice tier
    LatticeConfig lattice{2, 0.25, 0.0, 0.5};
    // mc tier
    McConfig mc;

    LawSpec law;
    DriverForm driver;
    Rule terminal;
    std::optional<Rule> lower, upper;
    double beta = 4.0;
    int theta = 0;
    std::optional<GameForm> game;

    std::vector<double> penalty_levels = {1, 10, 100, 1000, 10000};
    PenaltyMode penalty_mode = PenaltyMode::Double;
    std::vector<int> refine_levels = {2, 4, 8, 16};

    RegressionBasis basis;
    BsConfig bs;

    double tol_exact = 1e-10; // override via "tolerances"
    double tol_value = 1e-9;
    double tol_penalty = 1e-3;
};

Scenario parse_scenario(const std::string& text);
Scenario load_scenario_file(const std::string& path);

/// Materialise the declarative pieces on a concrete lattice.
DefaultLaw build_law(const LatticeModel& m, const LawSpec& spec, double dt_scale_hazard = 1.0);
DriverSpec build_driver(const LatticeModel& m, const DriverForm& form);
FProcess build_process(const LatticeModel& m, const Rule& rule);

} // namespace drbsde
