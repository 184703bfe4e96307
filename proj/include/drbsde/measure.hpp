#pragma once

#include "drbsde/azema.hpp"

namespace drbsde {

struct UndefinedNodeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A random variable on the atoms of the model. An atom is (terminal
/// path, default outcome) and is identified with a terminal node of the
/// enlarged tree: index d * 2^N + path, d = 0 meaning no default.
using AtomValues = std::vector<double>;

enum class TreeKind { FTree, GTree };

/// Probability measure on the atom space, with node masses precomputed on
/// both trees so conditional expectations are single weighted folds.
class Measure {
public:
    static Measure physical(const LatticeModel& m, const DefaultLaw& law);

    double atom_weight(Path path, int d) const { return atoms_[(std::size_t(d) << n_) | path]; }
    const AtomValues& atom_weights() const { return atoms_; }
    double total_mass() const { return total_; }

    const std::vector<double>& gmass(int k) const { return gmass_[k]; }
    const std::vector<double>& fmass(int k) const { return fmass_[k]; }
    bool g_reachable(int k, std::size_t slot) const { return gmass_[k][slot] > 0.0; }

    int steps() const { return n_; }

    /// Equivalence to the reference measure: every positive-mass atom of
    /// `ref` carries positive mass here and vice versa.
    bool equivalent_to(const Measure& ref) const;

    static Measure from_atoms(const LatticeModel& m, AtomValues w);

private:
    Measure() = default;
    int n_ = 0;
    AtomValues atoms_;
    double total_ = 0.0;
    std::vector<std::vector<double>> gmass_; // per enlarged-tree node
    std::vector<std::vector<double>> fmass_; // per base-tree node
};

/// dQ = Psi_{T and tau} dP: atom weight = reference weight times the
/// density at the atom's terminal time. Throws NumericError if the total
/// mass drifts from one beyond 1e-10 (a broken martingale property).
Measure reweight_to_q(const LatticeModel& m, const AzemaBundle& bundle);

/// Exact conditional expectation of an atom variable at every node of the
/// requested step. Zero-mass nodes are left NaN; `value_at` throws on them.
GProcess cond_expect_g(const LatticeModel& m, const Measure& mu, const AtomValues& x);
FProcess cond_expect_f(const LatticeModel& m, const Measure& mu, const AtomValues& x);
std::vector<double> cond_expect_at(const LatticeModel& m, const Measure& mu, const AtomValues& x,
                                   int step, TreeKind tree);
double value_at(const GProcess& p, const Measure& mu, int k, std::size_t slot);

/// Weighted backward fold: out[k][slot] = sum of w_atom * x_atom over
/// atoms through the node. The building block of everything above.
std::vector<std::vector<double>> fold_g(const LatticeModel& m, const Measure& mu,
                                        const AtomValues& x);
std::vector<std::vector<double>> fold_f(const LatticeModel& m, const Measure& mu,
                                        const AtomValues& x);

} // namespace drbsde
