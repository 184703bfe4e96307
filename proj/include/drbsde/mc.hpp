#pragma once

#include "drbsde/lattice.hpp"

#include <cstdint>
#include <functional>

namespace drbsde {

/// Counter-based random streams keyed by (seed, path, step, tag): stateless,
/// so path-parallel simulation gives identical results for any thread count.
namespace rng {
std::uint64_t mix(std::uint64_t seed, std::uint64_t path, std::uint64_t step, std::uint64_t tag);
double uniform01(std::uint64_t seed, std::uint64_t path, std::uint64_t step, std::uint64_t tag);
double gaussian(std::uint64_t seed, std::uint64_t path, std::uint64_t step, std::uint64_t tag);
double inverse_normal_cdf(double u); // Acklam's rational approximation
} // namespace rng

struct McConfig {
    int n_steps = 50;
    double dt = 0.02;
    std::int64_t n_paths = 100000;
    std::uint64_t seed = 42;
    bool two_point = false; // stratified +/- sqrt(dt) increments (tree mode)
    int threads = 1;
};

struct PathBatch {
    McConfig cfg;
    std::vector<double> incr;        // n_paths x n_steps Brownian increments
    std::vector<int> default_step;   // 1-based step of default, 0 = none
    double db(std::int64_t p, int k) const { return incr[std::size_t(p) * cfg.n_steps + k]; }
    double walk(std::int64_t p, int k) const {
        double b = 0.0;
        for (int j = 0; j < k; ++j) b += db(p, j);
        return b;
    }
};

PathBatch simulate_paths(const McConfig& cfg);

struct CoxIntensity {
    std::function<double(double t, double b)> lambda;
};

/// Default at the first grid time where the accumulated intensity crosses
/// an independent unit-exponential threshold (one stream per path).
void apply_cox_default(PathBatch& batch, const CoxIntensity& intensity);

struct RegressionBasis {
    enum class Kind { Polynomial, Piecewise };
    Kind kind = Kind::Polynomial;
    int order = 2;       // degree (polynomial) or bin count (piecewise)
    double ridge = 1e-8; // polynomial normal equations only; bins use exact means
    /// In two-point mode piecewise bins snap to the lattice coordinate, so
    /// the regression is the exact conditional expectation per tree node.
    bool saturated_two_point = false;
};

struct MCEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::int64_t n_paths = 0;
};

struct McSurfacePoint {
    int step;
    double mean, std_error;
};

/// Problem rules on (time, walk value).
struct McRules {
    std::function<double(double, double)> zeta;      // terminal / recovery process
    std::function<double(double, double)> r, theta;  // linear driver coefficients
    std::function<double(double, double)> lower, upper; // optional barriers
    double penalty = 0.0; // > 0: soft reflection at this penalty level
};

/// Regression-based backward recursion on simulated paths with clamp (or
/// penalised) reflection; the estimate carries a bootstrap standard error.
MCEstimate lsmc_solve_drbsde(const PathBatch& batch, const McRules& rules,
                             const RegressionBasis& basis,
                             std::vector<McSurfacePoint>* surface = nullptr);

struct BsConfig {
    double s0 = 100.0, strike = 100.0;
    int n_steps = 50;
    double dt = 0.02;
    std::int64_t n_paths = 100000;
    std::uint64_t seed = 42;
    int threads = 1;
    std::function<double(double)> r, mu, sigma; // deterministic time rules
    double sigma_min = 1e-4;
    std::function<double(double, double)> lambda;   // optional intensity (t, b)
    std::function<double(double, double)> recovery; // value at default (t, s)
    std::function<double(double, double)> lower, upper; // optional barriers (t, s)
    RegressionBasis basis{RegressionBasis::Kind::Polynomial, 2, 1e-8, false};
};

/// Risky-asset example with stochastic parameters: simulates the price,
/// solves the linear-driver backward equation for the call payoff,
/// optionally killed at default or reflected at barriers.
MCEstimate black_scholes_example(const BsConfig& cfg,
                                 std::vector<McSurfacePoint>* surface = nullptr);

} // namespace drbsde
