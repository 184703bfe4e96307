#include "drbsde/measure.hpp"

#include <cmath>
#include <limits>

namespace drbsde {

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
}

std::vector<std::vector<double>> fold_g(const LatticeModel& m, const Measure& mu,
                                        const AtomValues& x) {
    const int n = m.steps();
    std::vector<std::vector<double>> out(n + 1);
    out[n].resize(GIndex::level_size(n));
    const AtomValues& w = mu.atom_weights();
    for (std::size_t s = 0; s < out[n].size(); ++s) out[n][s] = w[s] * x[s];
    for (int k = n; k >= 1; --k) {
        out[k - 1].assign(GIndex::level_size(k - 1), 0.0);
        for (std::size_t s = 0; s < out[k].size(); ++s)
            out[k - 1][GIndex::parent(k, s)] += out[k][s];
    }
    return out;
}

std::vector<std::vector<double>> fold_f(const LatticeModel& m, const Measure& mu,
                                        const AtomValues& x) {
    const int n = m.steps();
    std::vector<std::vector<double>> out(n + 1);
    out[n].assign(m.paths(), 0.0);
    for (Path w = 0; w < m.paths(); ++w)
        for (int d = 0; d <= n; ++d)
            out[n][w] += mu.atom_weight(w, d) * x[(std::size_t(d) << n) | w];
    for (int k = n; k >= 1; --k) {
        out[k - 1].assign(m.nodes(k - 1), 0.0);
        for (std::size_t p = 0; p < out[k].size(); ++p) out[k - 1][p >> 1] += out[k][p];
    }
    return out;
}

Measure Measure::from_atoms(const LatticeModel& m, AtomValues w) {
    Measure mu;
    mu.n_ = m.steps();
    mu.atoms_ = std::move(w);
    if (mu.atoms_.size() != GIndex::level_size(m.steps()))
        throw ConfigError("measure: atom vector has wrong size");
    for (double x : mu.atoms_)
        if (x < 0.0) throw DataError("measure: negative atom weight");
    AtomValues ones(mu.atoms_.size(), 1.0);
    mu.gmass_ = fold_g(m, mu, ones);
    mu.fmass_ = fold_f(m, mu, ones);
    mu.total_ = mu.gmass_[0][0];
    return mu;
}

Measure Measure::physical(const LatticeModel& m, const DefaultLaw& law) {
    const int n = m.steps();
    AtomValues w(GIndex::level_size(n), 0.0);
    for (Path path = 0; path < m.paths(); ++path) {
        double pp = m.path_prob(path);
        for (int d = 0; d <= n; ++d) w[(std::size_t(d) << n) | path] = pp * law.mass(path, d);
    }
    return from_atoms(m, std::move(w));
}

bool Measure::equivalent_to(const Measure& ref) const {
    if (atoms_.size() != ref.atoms_.size()) return false;
    for (std::size_t i = 0; i < atoms_.size(); ++i)
        if ((atoms_[i] > 0.0) != (ref.atoms_[i] > 0.0)) return false;
    return true;
}

Measure reweight_to_q(const LatticeModel& m, const AzemaBundle& bundle) {
    const int n = m.steps();
    AtomValues w(GIndex::level_size(n), 0.0);
    for (Path path = 0; path < m.paths(); ++path) {
        double pp = m.path_prob(path);
        for (int d = 0; d <= n; ++d) {
            // density at the atom's terminal time: default step if any, else N
            std::size_t slot = (std::size_t(d) << n) | path;
            w[slot] = pp * bundle.law.mass(path, d) * bundle.Psi.v[n][slot];
        }
    }
    Measure q = Measure::from_atoms(m, std::move(w));
    if (std::abs(q.total_mass() - 1.0) > 1e-10)
        throw NumericError("reweight: tilted measure has total mass " +
                           std::to_string(q.total_mass()) +
                           " (broken martingale property of the density)");
    return q;
}

GProcess cond_expect_g(const LatticeModel& m, const Measure& mu, const AtomValues& x) {
    auto num = fold_g(m, mu, x);
    GProcess out(m, kNan);
    for (int k = 0; k <= m.steps(); ++k) {
        const auto& den = mu.gmass(k);
        for (std::size_t s = 0; s < den.size(); ++s)
            if (den[s] > 0.0) out.v[k][s] = num[k][s] / den[s];
    }
    return out;
}

FProcess cond_expect_f(const LatticeModel& m, const Measure& mu, const AtomValues& x) {
    auto num = fold_f(m, mu, x);
    FProcess out(m);
    for (int k = 0; k <= m.steps(); ++k) {
        const auto& den = mu.fmass(k);
        for (std::size_t p = 0; p < den.size(); ++p)
            out.v[k][p] = den[p] > 0.0 ? num[k][p] / den[p] : kNan;
    }
    return out;
}

std::vector<double> cond_expect_at(const LatticeModel& m, const Measure& mu, const AtomValues& x,
                                   int step, TreeKind tree) {
    if (step < 0 || step > m.steps()) throw ConfigError("conditional expectation: bad step");
    if (tree == TreeKind::GTree) return cond_expect_g(m, mu, x).v[step];
    return cond_expect_f(m, mu, x).v[step];
}

double value_at(const GProcess& p, const Measure& mu, int k, std::size_t slot) {
    if (!mu.g_reachable(k, slot))
        throw UndefinedNodeError("conditioning on a zero-mass node at step " + std::to_string(k));
    return p.v[k][slot];
}

} // namespace drbsde
