#pragma once

#include "drbsde/lattice.hpp"

#include <functional>

namespace drbsde {

enum class DriverKind { Zero, GTable, Linear, General };

/// Generator of the backward equation with stochastic Lipschitz moduli.
///
/// kappa and gamma bound |f(t,y,z) - f(t,y',z')| by kappa|y-y'| +
/// gamma|z-z'| node-wise, and alpha^2 = kappa + gamma^2 must stay above
/// epsilon > 0 everywhere. For the General kind the bound is certified by
/// sampling over a declared grid at validation time.
struct DriverSpec {
    DriverKind kind = DriverKind::Zero;

    FProcess g;        // GTable: f(t, omega) = g_t(omega)
    FProcess r, theta; // Linear: f = -r_t y - theta_t z
    std::function<double(double t, double y, double z, int k, Path p)> fn; // General

    FProcess kappa, gamma;
    double epsilon = 1e-2;
    std::vector<double> certificate_grid = {-2.0, -0.5, 0.0, 0.7, 2.0};

    static DriverSpec zero(const LatticeModel& m, double eps = 1e-2);
    static DriverSpec g_table(const LatticeModel& m, FProcess g, double eps = 1e-2);
    static DriverSpec linear(const LatticeModel& m, FProcess r, FProcess theta,
                             double eps = 1e-2);
    static DriverSpec linear_const(const LatticeModel& m, double r, double theta,
                                   double eps = 1e-2);
    static DriverSpec general(const LatticeModel& m,
                              std::function<double(double, double, double, int, Path)> fn,
                              FProcess kappa, FProcess gamma, double eps = 1e-2);

    double operator()(const LatticeModel& m, int k, Path p, double y, double z) const;
    bool depends_on_solution() const {
        return kind == DriverKind::Linear || kind == DriverKind::General;
    }

    FProcess alpha_sq(const LatticeModel& m) const;
    double max_kappa() const;

    /// H2 validation: moduli nonnegative, alpha^2 >= epsilon, and for the
    /// General kind the sampled Lipschitz certificate. Throws DataError.
    void validate(const LatticeModel& m) const;
};

} // namespace drbsde
