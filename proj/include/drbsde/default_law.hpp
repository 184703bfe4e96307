#pragma once

#include "drbsde/lattice.hpp"

#include <functional>

namespace drbsde {

/// Conditional law of the default time given the full driving path.
///
/// The default time is grid-valued: tau in {t_1, ..., t_N} plus a
/// beyond-horizon bucket (tau > T). Per terminal path the law stores the
/// masses h_d = P(tau = t_d | F_N) for d = 1..N and the beyond mass at
/// d = 0. Rows sum to one; the beyond mass realises {T < tau}.
class DefaultLaw {
public:
    static constexpr int kBeyond = 0;
    static constexpr double kRowTol = 1e-12;

    DefaultLaw() = default;

    /// mass(path, d): d in 1..N for tau = t_d, d = 0 for tau > T.
    double mass(Path path, int d) const { return w_[idx(path, d)]; }
    double& mass_ref(Path path, int d) { return w_[idx(path, d)]; }

    int steps() const { return n_; }
    std::size_t paths() const { return std::size_t(1) << n_; }

    static DefaultLaw none(const LatticeModel& m) {
        DefaultLaw law(m.steps());
        for (Path w = 0; w < law.paths(); ++w) law.mass_ref(w, kBeyond) = 1.0;
        return law;
    }

    /// Same masses on every path: the independence regime.
    static DefaultLaw deterministic(const LatticeModel& m, const std::vector<double>& h) {
        if (int(h.size()) != m.steps())
            throw ConfigError("default law: deterministic h needs one mass per step");
        double sum = 0.0;
        for (double x : h) {
            if (x < 0.0) throw ConfigError("default law: negative mass");
            sum += x;
        }
        if (sum > 1.0 + kRowTol) throw ConfigError("default law: masses exceed 1");
        DefaultLaw law(m.steps());
        for (Path w = 0; w < law.paths(); ++w) {
            for (int d = 1; d <= m.steps(); ++d) law.mass_ref(w, d) = h[d - 1];
            law.mass_ref(w, kBeyond) = 1.0 - sum;
        }
        return law;
    }

    /// Explicit per-path rows: rows[path] = (h_1, ..., h_N, h_beyond).
    static DefaultLaw from_table(const LatticeModel& m,
                                 const std::vector<std::vector<double>>& rows) {
        if (rows.size() != m.paths())
            throw ConfigError("default law: table needs one row per terminal path");
        DefaultLaw law(m.steps());
        for (Path w = 0; w < law.paths(); ++w) {
            if (int(rows[w].size()) != m.steps() + 1)
                throw ConfigError("default law: row " + std::to_string(w) + " has wrong length");
            for (int d = 1; d <= m.steps(); ++d) law.mass_ref(w, d) = rows[w][d - 1];
            law.mass_ref(w, kBeyond) = rows[w][m.steps()];
        }
        law.validate();
        return law;
    }

    /// Cox-style construction from a per-step conditional default
    /// probability pi(k, prefix) in [0,1), evaluated at the step-k node
    /// reached before the move to step k+1 resolves. Masses are then
    /// adapted step by step (immersion-like case).
    static DefaultLaw from_hazard(const LatticeModel& m,
                                  const std::function<double(int, Path)>& pi) {
        DefaultLaw law(m.steps());
        int n = m.steps();
        for (Path w = 0; w < law.paths(); ++w) {
            double surv = 1.0;
            for (int d = 1; d <= n; ++d) {
                double p = pi(d - 1, LatticeModel::prefix(w, n, d - 1));
                if (!(p >= 0.0 && p < 1.0))
                    throw ConfigError("default law: hazard step probability outside [0,1)");
                law.mass_ref(w, d) = surv * p;
                surv *= 1.0 - p;
            }
            law.mass_ref(w, kBeyond) = surv;
        }
        return law;
    }

    /// Randomised path-dependent law for property tests. A positive floor
    /// on the beyond bucket keeps assumption [P] valid by construction.
    static DefaultLaw random(const LatticeModel& m, std::uint64_t seed, double beyond_floor = 0.1);

    void validate() const {
        for (Path w = 0; w < paths(); ++w) {
            double sum = 0.0;
            for (int d = 0; d <= n_; ++d) {
                double x = mass(w, d);
                if (x < 0.0)
                    throw DataError("default law: negative mass on path " + std::to_string(w));
                sum += x;
            }
            if (std::abs(sum - 1.0) > kRowTol)
                throw DataError("default law: path " + std::to_string(w) +
                                " masses sum to " + std::to_string(sum));
        }
    }

    /// Whether every h_d is measurable at step d (all paths sharing the
    /// step-d prefix carry the same mass). Holds for hazard-built laws.
    bool immersion_like() const {
        for (int d = 1; d <= n_; ++d)
            if (!mass_measurable_at(d)) return false;
        return true;
    }
    bool mass_measurable_at(int d) const {
        for (Path w = 0; w < paths(); ++w) {
            Path base = (LatticeModel::prefix(w, n_, d)) << (n_ - d);
            if (std::abs(mass(w, d) - mass(Path(base), d)) > 1e-15) return false;
        }
        return true;
    }
    bool deterministic_masses() const {
        for (int d = 0; d <= n_; ++d)
            for (Path w = 1; w < paths(); ++w)
                if (std::abs(mass(w, d) - mass(0, d)) > 1e-15) return false;
        return true;
    }

private:
    explicit DefaultLaw(int n) : n_(n), w_((std::size_t(n) + 1) << n, 0.0) {}
    std::size_t idx(Path path, int d) const { return (std::size_t(d) << n_) | path; }
    int n_ = 0;
    std::vector<double> w_;
};

} // namespace drbsde
