#include "drbsde/driver.hpp"

#include <cmath>

namespace drbsde {

DriverSpec DriverSpec::zero(const LatticeModel& m, double eps) {
    DriverSpec d;
    d.kind = DriverKind::Zero;
    d.kappa = FProcess::constant(m, eps);
    d.gamma = FProcess::constant(m, 0.0);
    d.epsilon = eps;
    return d;
}

DriverSpec DriverSpec::g_table(const LatticeModel& m, FProcess g, double eps) {
    DriverSpec d = zero(m, eps);
    d.kind = DriverKind::GTable;
    d.g = std::move(g);
    return d;
}

DriverSpec DriverSpec::linear(const LatticeModel& m, FProcess r, FProcess theta, double eps) {
    DriverSpec d;
    d.kind = DriverKind::Linear;
    d.r = std::move(r);
    d.theta = std::move(theta);
    d.kappa = FProcess(m);
    d.gamma = FProcess(m);
    for (int k = 0; k <= m.steps(); ++k)
        for (Path p = 0; p < m.nodes(k); ++p) {
            d.kappa.v[k][p] = std::max(std::abs(d.r.v[k][p]), eps);
            d.gamma.v[k][p] = std::abs(d.theta.v[k][p]);
        }
    d.epsilon = eps;
    return d;
}

DriverSpec DriverSpec::linear_const(const LatticeModel& m, double r, double theta, double eps) {
    return linear(m, FProcess::constant(m, r), FProcess::constant(m, theta), eps);
}

DriverSpec DriverSpec::general(const LatticeModel& m,
                               std::function<double(double, double, double, int, Path)> fn,
                               FProcess kappa, FProcess gamma, double eps) {
    DriverSpec d;
    d.kind = DriverKind::General;
    d.fn = std::move(fn);
    d.kappa = std::move(kappa);
    d.gamma = std::move(gamma);
    d.epsilon = eps;
    d.validate(m);
    return d;
}

double DriverSpec::operator()(const LatticeModel& m, int k, Path p, double y, double z) const {
    switch (kind) {
    case DriverKind::Zero: return 0.0;
    case DriverKind::GTable: return g.v[k][p];
    case DriverKind::Linear: return -r.v[k][p] * y - theta.v[k][p] * z;
    case DriverKind::General: return fn(m.time(k), y, z, k, p);
    }
    return 0.0;
}

FProcess DriverSpec::alpha_sq(const LatticeModel& m) const {
    FProcess a(m);
    for (int k = 0; k <= m.steps(); ++k)
        for (Path p = 0; p < m.nodes(k); ++p) {
            a.v[k][p] = kappa.v[k][p] + gamma.v[k][p] * gamma.v[k][p];
            if (a.v[k][p] < epsilon - 1e-15)
                throw DataError("driver: alpha^2 below epsilon at step " + std::to_string(k));
        }
    return a;
}

double DriverSpec::max_kappa() const {
    double mx = 0.0;
    for (const auto& lvl : kappa.v)
        for (double x : lvl) mx = std::max(mx, x);
    return mx;
}

void DriverSpec::validate(const LatticeModel& m) const {
    if (!(epsilon > 0.0)) throw DataError("driver: epsilon must be positive");
    for (int k = 0; k <= m.steps(); ++k)
        for (Path p = 0; p < m.nodes(k); ++p)
            if (kappa.v[k][p] < 0.0 || gamma.v[k][p] < 0.0)
                throw DataError("driver: negative Lipschitz modulus");
    (void)alpha_sq(m);
    if (kind != DriverKind::General) return;

    // sampled Lipschitz certificate over the declared grid
    for (int k = 0; k < m.steps(); ++k) {
        for (Path p = 0; p < m.nodes(k); ++p) {
            double t = m.time(k);
            for (double y1 : certificate_grid)
                for (double y2 : certificate_grid)
                    for (double z1 : certificate_grid)
                        for (double z2 : certificate_grid) {
                            double lhs = std::abs(fn(t, y1, z1, k, p) - fn(t, y2, z2, k, p));
                            double rhs = kappa.v[k][p] * std::abs(y1 - y2) +
                                         gamma.v[k][p] * std::abs(z1 - z2);
                            if (lhs > rhs + 1e-12)
                                throw DataError(
                                    "driver: sampled Lipschitz certificate failed at step " +
                                    std::to_string(k) + ", node " + std::to_string(p));
                        }
        }
    }
}

} // namespace drbsde
