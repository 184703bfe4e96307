#include "drbsde/solver.hpp"

#include <cmath>
#include <limits>

namespace drbsde {

namespace {

constexpr double kSeparationTol = 1e-12;

struct LiftedBarrier {
    const FProcess* f = nullptr;
    double at(int k, std::size_t slot) const {
        int st = GIndex::status_of(k, slot);
        Path p = GIndex::prefix_of(k, slot);
        return st == 0 ? f->v[k][p] : f->v[st][LatticeModel::prefix(p, k, st)];
    }
};

void validate_problem(const LatticeModel& m, const Measure& q, const DRBSDEProblem& prob,
                      bool reflected) {
    prob.driver.validate(m);
    if (!reflected) return;
    const int n = m.steps();
    if (prob.has_lower && prob.has_upper) {
        for (int k = 0; k < n; ++k)
            for (Path p = 0; p < m.nodes(k); ++p)
                if (!(prob.lower.v[k][p] < prob.upper.v[k][p] - kSeparationTol))
                    throw DataError("H3: barriers not strictly separated at step " +
                                    std::to_string(k) + ", node " + std::to_string(p));
    }
    // terminal containment at every reachable node of T and tau
    AtomValues xi = terminal_atoms(m, prob);
    for (Path w = 0; w < m.paths(); ++w) {
        for (int d = 0; d <= n; ++d) {
            if (q.atom_weight(w, d) <= 0.0) continue;
            int step = d == 0 ? n : d;
            Path p = LatticeModel::prefix(w, n, step);
            double x = xi[(std::size_t(d) << n) | w];
            if (prob.has_lower && x < prob.lower.v[step][p] - kSeparationTol)
                throw DataError("H1/H3: terminal value below the lower barrier");
            if (prob.has_upper && x > prob.upper.v[step][p] + kSeparationTol)
                throw DataError("H1/H3: terminal value above the upper barrier");
        }
    }
}

enum class Reflection { None, Clamp, Penalty };

struct SolveOutput {
    GProcess Y, Z, dKp, dKm; // dK at the deciding node
    std::vector<std::string> warnings;
};

SolveOutput backward_pass(const LatticeModel& m, const Measure& q, const DRBSDEProblem& prob,
                          Reflection refl, double pen_n, PenaltyMode pmode) {
    const int n = m.steps();
    const double dt = m.dt();

    SolveOutput out{GProcess(m, std::numeric_limits<double>::quiet_NaN()), GProcess(m),
                    GProcess(m), GProcess(m), {}};

    if (prob.driver.max_kappa() * dt >= 1.0)
        out.warnings.push_back("stability: dt * kappa >= 1 for the explicit predictor scheme");

    // values on and after T and tau: conditional expectation of the terminal
    AtomValues xi = terminal_atoms(m, prob);
    GProcess stopped = cond_expect_g(m, q, xi);
    for (int k = 0; k <= n; ++k)
        for (std::size_t s = 0; s < GIndex::level_size(k); ++s)
            if ((GIndex::status_of(k, s) != 0 || k == n) && q.g_reachable(k, s))
                out.Y.v[k][s] = stopped.v[k][s];

    LiftedBarrier lo{&prob.lower}, up{&prob.upper};
    bool lower_on = prob.has_lower && (refl != Reflection::None) &&
                    (refl == Reflection::Clamp || pmode != PenaltyMode::Upper);
    bool upper_on = prob.has_upper && (refl != Reflection::None) &&
                    (refl == Reflection::Clamp || pmode != PenaltyMode::Lower);

    for (int k = n - 1; k >= 0; --k) {
        const auto& wk = q.gmass(k);
        const auto& wk1 = q.gmass(k + 1);
        std::size_t alive = m.nodes(k);
        for (std::size_t i = 0; i < alive; ++i) {
            Path p = prob.reverse_node_order ? Path(alive - 1 - i) : Path(i);
            std::size_t s = GIndex::slot(k, 0, p);
            if (wk[s] <= 0.0) continue;
            double num = 0.0, cov = 0.0;
            for (int b = 0; b < 2; ++b) {
                Path cp = LatticeModel::child(p, b);
                double db = m.move(b);
                std::size_t ca = GIndex::slot(k + 1, 0, cp);
                std::size_t cd = GIndex::slot(k + 1, k + 1, cp);
                num += wk1[ca] * out.Y.v[k + 1][ca];
                cov += wk1[ca] * out.Y.v[k + 1][ca] * db;
                if (wk1[cd] > 0.0) {
                    num += wk1[cd] * out.Y.v[k + 1][cd];
                    cov += wk1[cd] * out.Y.v[k + 1][cd] * db;
                }
            }
            double pred = num / wk[s];
            double z = cov / (wk[s] * dt); // conditional-covariation integrand
            double y = pred + prob.driver(m, k, p, pred, z) * dt;
            for (int it = 0; it < prob.implicit_iters; ++it)
                y = pred + prob.driver(m, k, p, y, z) * dt;

            double dkp = 0.0, dkm = 0.0;
            if (refl == Reflection::Clamp) {
                if (lower_on && y < lo.at(k, s)) {
                    dkp = lo.at(k, s) - y;
                    y = lo.at(k, s);
                } else if (upper_on && y > up.at(k, s)) {
                    dkm = y - up.at(k, s);
                    y = up.at(k, s);
                }
            } else if (refl == Reflection::Penalty) {
                // y = c + n dt (L-y)^+ - n dt (y-U)^+, solved exactly
                double c = y, ndt = pen_n * dt;
                if (lower_on && c < lo.at(k, s)) {
                    y = (c + ndt * lo.at(k, s)) / (1.0 + ndt);
                    dkp = ndt * (lo.at(k, s) - y);
                } else if (upper_on && c > up.at(k, s)) {
                    y = (c + ndt * up.at(k, s)) / (1.0 + ndt);
                    dkm = ndt * (y - up.at(k, s));
                }
                if (!std::isfinite(y))
                    throw NumericError("penalization: overflow at step " + std::to_string(k) +
                                       ", node " + std::to_string(p));
            }
            out.Y.v[k][s] = y;
            out.Z.v[k][s] = z;
            out.dKp.v[k][s] = dkp;
            out.dKm.v[k][s] = dkm;
        }
    }
    return out;
}

// Accumulate the predictable increments and the residual martingale
// forward: dM = Y_k - E[Y_k | parent] - Z dB, exact by construction.
DRBSDESolution assemble(const LatticeModel& m, const Measure& q, SolveOutput&& o) {
    const int n = m.steps();
    DRBSDESolution sol{std::move(o.Y), std::move(o.Z), GProcess(m), GProcess(m), GProcess(m),
                       std::move(o.warnings)};
    for (int k = 1; k <= n; ++k) {
        const auto& wk1 = q.gmass(k);
        const auto& wk = q.gmass(k - 1);
        std::vector<double> pred(GIndex::level_size(k - 1), 0.0);
        for (std::size_t s = 0; s < wk1.size(); ++s)
            if (wk1[s] > 0.0) pred[GIndex::parent(k, s)] += wk1[s] * sol.Y.v[k][s];
        for (std::size_t s = 0; s < GIndex::level_size(k); ++s) {
            if (wk1[s] <= 0.0) continue;
            std::size_t par = GIndex::parent(k, s);
            int pst = GIndex::status_of(k, s) == k ? 0 : GIndex::status_of(k, s);
            sol.Kplus.v[k][s] = sol.Kplus.v[k - 1][par] + (pst == 0 ? o.dKp.v[k - 1][par] : 0.0);
            sol.Kminus.v[k][s] = sol.Kminus.v[k - 1][par] + (pst == 0 ? o.dKm.v[k - 1][par] : 0.0);
            double db = pst == 0 ? m.move(int(GIndex::prefix_of(k, s) & 1u)) : 0.0;
            double p = pred[par] / wk[par];
            sol.M.v[k][s] = sol.M.v[k - 1][par] + sol.Y.v[k][s] - p - sol.Z.v[k - 1][par] * db;
        }
    }
    return sol;
}

} // namespace

AtomValues terminal_atoms(const LatticeModel& m, const DRBSDEProblem& prob) {
    const int n = m.steps();
    if (!prob.terminal.empty()) {
        if (prob.terminal.size() != GIndex::level_size(n))
            throw ConfigError("terminal: atom vector has wrong size");
        return prob.terminal;
    }
    AtomValues xi(GIndex::level_size(n), 0.0);
    for (Path w = 0; w < m.paths(); ++w) {
        xi[w] = prob.zeta.v[n][w]; // survival: zeta_T
        for (int d = 1; d <= n; ++d)
            xi[(std::size_t(d) << n) | w] = prob.zeta.v[d][LatticeModel::prefix(w, n, d)];
    }
    return xi;
}

DRBSDESolution solve_bsde(const LatticeModel& m, const Measure& q, const DRBSDEProblem& prob) {
    validate_problem(m, q, prob, false);
    auto o = backward_pass(m, q, prob, Reflection::None, 0.0, PenaltyMode::Double);
    return assemble(m, q, std::move(o));
}

DRBSDESolution solve_drbsde(const LatticeModel& m, const Measure& q, const DRBSDEProblem& prob) {
    validate_problem(m, q, prob, true);
    auto o = backward_pass(m, q, prob, Reflection::Clamp, 0.0, PenaltyMode::Double);
    return assemble(m, q, std::move(o));
}

PenalizedSolution solve_penalized(const LatticeModel& m, const Measure& q,
                                  const DRBSDEProblem& prob, double n, PenaltyMode mode) {
    if (n < 0.0) throw ConfigError("penalization: level must be nonnegative");
    validate_problem(m, q, prob, true);
    auto o = backward_pass(m, q, prob, n == 0.0 ? Reflection::None : Reflection::Penalty, n, mode);
    PenalizedSolution ps{std::move(o.Y), std::move(o.Z), GProcess(m), GProcess(m)};
    for (int k = 1; k <= m.steps(); ++k) {
        for (std::size_t s = 0; s < GIndex::level_size(k); ++s) {
            if (!q.g_reachable(k, s)) continue;
            std::size_t par = GIndex::parent(k, s);
            int pst = GIndex::status_of(k, s) == k ? 0 : GIndex::status_of(k, s);
            ps.Kplus.v[k][s] = ps.Kplus.v[k - 1][par] + (pst == 0 ? o.dKp.v[k - 1][par] : 0.0);
            ps.Kminus.v[k][s] = ps.Kminus.v[k - 1][par] + (pst == 0 ? o.dKm.v[k - 1][par] : 0.0);
        }
    }
    return ps;
}

double skorokhod_defect(const LatticeModel& m, const Measure& q, const DRBSDEProblem& prob,
                        const DRBSDESolution& sol) {
    double worst = 0.0;
    LiftedBarrier lo{&prob.lower}, up{&prob.upper};
    for (int k = 0; k < m.steps(); ++k) {
        for (std::size_t s = 0; s < GIndex::level_size(k); ++s) {
            if (!q.g_reachable(k, s) || GIndex::status_of(k, s) != 0) continue;
            // increments decided at the step-k node
            std::size_t c = GIndex::slot(k + 1, 0, LatticeModel::child(GIndex::prefix_of(k, s), 0));
            double dkp = sol.Kplus.v[k + 1][c] - sol.Kplus.v[k][s];
            double dkm = sol.Kminus.v[k + 1][c] - sol.Kminus.v[k][s];
            if (prob.has_lower)
                worst = std::max(worst, std::abs(dkp * (sol.Y.v[k][s] - lo.at(k, s))));
            if (prob.has_upper)
                worst = std::max(worst, std::abs(dkm * (up.at(k, s) - sol.Y.v[k][s])));
        }
    }
    return worst;
}

double barrier_defect(const LatticeModel& m, const Measure& q, const DRBSDEProblem& prob,
                      const DRBSDESolution& sol) {
    double worst = 0.0;
    LiftedBarrier lo{&prob.lower}, up{&prob.upper};
    for (int k = 0; k < m.steps(); ++k) {
        for (std::size_t s = 0; s < m.nodes(k); ++s) { // alive slots are the first 2^k
            if (!q.g_reachable(k, s)) continue;
            if (prob.has_lower) worst = std::max(worst, lo.at(k, s) - sol.Y.v[k][s]);
            if (prob.has_upper) worst = std::max(worst, sol.Y.v[k][s] - up.at(k, s));
        }
    }
    return std::max(worst, 0.0);
}

ComparisonReport check_comparison(const LatticeModel& m, const Measure& q,
                                  const DRBSDEProblem& p1, const DRBSDESolution& s1,
                                  const DRBSDEProblem& p2, const DRBSDESolution& s2) {
    ComparisonReport rep;
    AtomValues xi1 = terminal_atoms(m, p1), xi2 = terminal_atoms(m, p2);
    for (std::size_t i = 0; i < xi1.size(); ++i) {
        if (q.atom_weights()[i] <= 0.0) continue;
        if (xi1[i] > xi2[i] + 1e-12) {
            rep.hypothesis_ok = false;
            rep.hypothesis_note = "terminal values not ordered atom-wise";
        }
    }
    for (int k = 0; k < m.steps() && rep.hypothesis_ok; ++k) {
        for (Path p = 0; p < m.nodes(k); ++p) {
            std::size_t s = GIndex::slot(k, 0, p);
            if (!q.g_reachable(k, s)) continue;
            double y = s1.Y.v[k][s], z = s1.Z.v[k][s];
            if (p1.driver(m, k, p, y, z) > p2.driver(m, k, p, y, z) + 1e-12) {
                rep.hypothesis_ok = false;
                rep.hypothesis_note = "drivers not ordered along the first solution";
                break;
            }
        }
    }
    if (!rep.hypothesis_ok) return rep;
    for (int k = 0; k <= m.steps(); ++k) {
        for (std::size_t s = 0; s < GIndex::level_size(k); ++s) {
            if (!q.g_reachable(k, s)) continue;
            double gap = s1.Y.v[k][s] - s2.Y.v[k][s];
            if (gap > 1e-12) {
                ++rep.violations;
                rep.max_violation = std::max(rep.max_violation, gap);
            }
        }
    }
    return rep;
}

namespace {

// exp(beta A) weights along an atom trajectory; A_k = sum_{j<k} alpha_j^2 dt
struct AtomWalker {
    const LatticeModel& m;
    const FProcess& alpha_sq;
    double beta, dt;
    Path path;
    int dstep; // 0 = survives
    int term() const { return dstep == 0 ? m.steps() : dstep; }
    std::size_t slot(int k) const {
        Path p = LatticeModel::prefix(path, m.steps(), k);
        int st = (dstep != 0 && k >= dstep) ? dstep : 0;
        return GIndex::slot(k, st, p);
    }
    double weight(int k) const { // e^{beta A_k}
        double a = 0.0;
        for (int j = 0; j < k; ++j)
            a += alpha_sq.v[j][LatticeModel::prefix(path, m.steps(), j)] * dt;
        return std::exp(beta * a);
    }
};

} // namespace

NormReport weighted_norms(const LatticeModel& m, const Measure& q, const DRBSDESolution& sol,
                          const FProcess& alpha_sq, double beta) {
    NormReport r;
    const int n = m.steps();
    const double dt = m.dt();
    for (Path w = 0; w < m.paths(); ++w) {
        for (int d = 0; d <= n; ++d) {
            double mass = q.atom_weight(w, d);
            if (mass <= 0.0) continue;
            AtomWalker walk{m, alpha_sq, beta, dt, w, d};
            int term = walk.term();
            double sup = 0.0, ys = 0.0, zs = 0.0, ms = 0.0, ew = 1.0, acc = 0.0;
            for (int k = 0; k <= term; ++k) {
                Path pf = LatticeModel::prefix(w, n, k);
                ew = std::exp(beta * acc);
                std::size_t s = walk.slot(k);
                double y = sol.Y.v[k][s];
                sup = std::max(sup, ew * y * y);
                if (k < term) {
                    double a2 = alpha_sq.v[k][pf];
                    double z = sol.Z.v[k][s];
                    ys += ew * y * y * a2 * dt;
                    zs += ew * z * z * dt;
                    double dm = sol.M.v[k + 1][walk.slot(k + 1)] - sol.M.v[k][s];
                    ms += ew * dm * dm;
                    acc += a2 * dt;
                }
            }
            std::size_t st = walk.slot(term);
            double kp = sol.Kplus.v[term][st], km = sol.Kminus.v[term][st];
            if (term < n) { // include the increment decided at the default step
                kp = sol.Kplus.v[n][(std::size_t(d) << n) | w];
                km = sol.Kminus.v[n][(std::size_t(d) << n) | w];
            }
            r.s2 += mass * sup;
            r.s2alpha += mass * ys;
            r.h2 += mass * zs;
            r.m2 += mass * ms;
            r.kplus2 += mass * kp * kp;
            r.kminus2 += mass * km * km;
        }
    }
    return r;
}

AprioriReport apriori_estimate(const LatticeModel& m, const Measure& q,
                               const DRBSDEProblem& p1, const DRBSDESolution& s1,
                               const DRBSDEProblem& p2, const DRBSDESolution& s2, double beta) {
    const int n = m.steps();
    const double dt = m.dt();
    FProcess a2 = p1.driver.alpha_sq(m);

    DRBSDESolution diff{GProcess(m), GProcess(m), GProcess(m), GProcess(m), GProcess(m), {}};
    for (int k = 0; k <= n; ++k)
        for (std::size_t s = 0; s < GIndex::level_size(k); ++s) {
            diff.Y.v[k][s] = s1.Y.v[k][s] - s2.Y.v[k][s];
            diff.Z.v[k][s] = s1.Z.v[k][s] - s2.Z.v[k][s];
            diff.M.v[k][s] = s1.M.v[k][s] - s2.M.v[k][s];
            diff.Kplus.v[k][s] = s1.Kplus.v[k][s] - s2.Kplus.v[k][s];
            diff.Kminus.v[k][s] = s1.Kminus.v[k][s] - s2.Kminus.v[k][s];
        }
    NormReport d = weighted_norms(m, q, diff, a2, beta);

    AprioriReport rep;
    rep.diff = d;
    rep.left = d.s2 + d.s2alpha + d.h2 + d.m2;

    AtomValues xi1 = terminal_atoms(m, p1), xi2 = terminal_atoms(m, p2);
    double right = 0.0;
    for (Path w = 0; w < m.paths(); ++w) {
        for (int dd = 0; dd <= n; ++dd) {
            double mass = q.atom_weight(w, dd);
            if (mass <= 0.0) continue;
            int term = dd == 0 ? n : dd;
            double acc = 0.0, contrib = 0.0;
            for (int k = 0; k < term; ++k) {
                Path pf = LatticeModel::prefix(w, n, k);
                std::size_t s = GIndex::slot(k, 0, pf);
                double ew = std::exp(beta * acc);
                double fbar = p1.driver(m, k, pf, s2.Y.v[k][s], s2.Z.v[k][s]) -
                              p2.driver(m, k, pf, s2.Y.v[k][s], s2.Z.v[k][s]);
                double al = std::sqrt(a2.v[k][pf]);
                contrib += ew * (fbar / al) * (fbar / al) * dt;
                // reflection cross terms: Lbar dKbar+ + Ubar dKbar-
                std::size_t c = GIndex::slot(k + 1, (dd != 0 && k + 1 >= dd) ? dd : 0,
                                             LatticeModel::prefix(w, n, k + 1));
                double dkp = (s1.Kplus.v[k + 1][c] - s1.Kplus.v[k][s]) -
                             (s2.Kplus.v[k + 1][c] - s2.Kplus.v[k][s]);
                double dkm = (s1.Kminus.v[k + 1][c] - s1.Kminus.v[k][s]) -
                             (s2.Kminus.v[k + 1][c] - s2.Kminus.v[k][s]);
                double lbar = (p1.has_lower ? p1.lower.v[k][pf] : 0.0) -
                              (p2.has_lower ? p2.lower.v[k][pf] : 0.0);
                double ubar = (p1.has_upper ? p1.upper.v[k][pf] : 0.0) -
                              (p2.has_upper ? p2.upper.v[k][pf] : 0.0);
                contrib += ew * (lbar * dkp + ubar * dkm);
                acc += a2.v[k][pf] * dt;
            }
            double xb = xi1[(std::size_t(dd) << n) | w] - xi2[(std::size_t(dd) << n) | w];
            contrib += std::exp(beta * acc) * xb * xb;
            right += mass * contrib;
        }
    }
    rep.right = right;
    rep.ratio = right > 0.0 ? rep.left / right : (rep.left <= 1e-18 ? 0.0 : INFINITY);
    return rep;
}

} // namespace drbsde
