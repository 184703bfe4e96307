#include "drbsde/links.hpp"

#include <cmath>

namespace drbsde {

FLinkData transform_first_link(const LatticeModel& m, const AzemaBundle& bundle,
                               const DRBSDEProblem& prob) {
    if (prob.driver.depends_on_solution())
        throw HypothesisError("first link: driver must not depend on the solution");
    if (!prob.terminal.empty())
        throw HypothesisError("first link: terminal must be given by a stopped base process");
    const int n = m.steps();
    FLinkData d;
    d.xi_f.resize(m.paths());
    for (Path w = 0; w < m.paths(); ++w) d.xi_f[w] = bundle.Etilde.v[n][w] * prob.zeta.v[n][w];
    d.g_f = FProcess(m);
    if (prob.driver.kind == DriverKind::GTable)
        for (int k = 0; k <= n; ++k)
            for (Path p = 0; p < m.nodes(k); ++p)
                d.g_f.v[k][p] = bundle.Etilde.v[k][p] * prob.driver.g.v[k][p];
    d.has_lower = prob.has_lower;
    d.has_upper = prob.has_upper;
    d.lower_f = FProcess(m);
    d.upper_f = FProcess(m);
    d.v_f = FProcess(m);
    d.zeta_dv = FProcess(m);
    for (int k = 0; k <= n; ++k) {
        for (Path p = 0; p < m.nodes(k); ++p) {
            double e = bundle.Etilde.v[k][p];
            if (prob.has_lower) d.lower_f.v[k][p] = e * prob.lower.v[k][p];
            if (prob.has_upper) d.upper_f.v[k][p] = e * prob.upper.v[k][p];
            d.v_f.v[k][p] = 1.0 - e;
            if (k >= 1)
                d.zeta_dv.v[k][p] =
                    prob.zeta.v[k][p] * (bundle.Etilde.v[k - 1][p >> 1] - e);
        }
    }
    return d;
}

FSolution solve_f_drbsde(const LatticeModel& m, const FLinkData& data) {
    const int n = m.steps();
    const double dt = m.dt();
    FSolution s{FProcess(m), FProcess(m), FProcess(m), FProcess(m)};
    FProcess dkp(m), dkm(m);
    for (Path w = 0; w < m.paths(); ++w) {
        double x = data.xi_f[w];
        if (data.has_lower && x < data.lower_f.v[n][w] - 1e-12)
            throw DataError("first link: deflated terminal below the deflated lower barrier");
        if (data.has_upper && x > data.upper_f.v[n][w] + 1e-12)
            throw DataError("first link: deflated terminal above the deflated upper barrier");
        s.Y.v[n][w] = x;
    }
    for (int k = n - 1; k >= 0; --k) {
        for (Path p = 0; p < m.nodes(k); ++p) {
            double cont = 0.0, cov = 0.0;
            for (int b = 0; b < 2; ++b) {
                Path c = LatticeModel::child(p, b);
                double val = s.Y.v[k + 1][c] + data.zeta_dv.v[k + 1][c];
                cont += m.bit_prob(b) * val;
                cov += m.bit_prob(b) * val * m.move(b);
            }
            double y = cont + data.g_f.v[k][p] * dt;
            s.Z.v[k][p] = cov / dt;
            if (data.has_lower && y < data.lower_f.v[k][p]) {
                dkp.v[k][p] = data.lower_f.v[k][p] - y;
                y = data.lower_f.v[k][p];
            } else if (data.has_upper && y > data.upper_f.v[k][p]) {
                dkm.v[k][p] = y - data.upper_f.v[k][p];
                y = data.upper_f.v[k][p];
            }
            s.Y.v[k][p] = y;
        }
    }
    for (int k = 1; k <= n; ++k) {
        for (Path p = 0; p < m.nodes(k); ++p) {
            s.Kplus.v[k][p] = s.Kplus.v[k - 1][p >> 1] + dkp.v[k - 1][p >> 1];
            s.Kminus.v[k][p] = s.Kminus.v[k - 1][p >> 1] + dkm.v[k - 1][p >> 1];
        }
    }
    return s;
}

LinkReport verify_first_link(const LatticeModel& m, const AzemaBundle& bundle,
                             const DRBSDEProblem& gprob, const DRBSDESolution& gsol,
                             const FLinkData& fdata, const FSolution& fsol) {
    if (fdata.xi_f.size() != m.paths())
        throw ConfigError("first link: mismatched models between the two solutions");
    const int n = m.steps();
    LinkReport rep;
    bool record_nodes = (m.paths() << 1) <= 4096;
    for (int k = 0; k <= n; ++k) {
        for (Path p = 0; p < m.nodes(k); ++p) {
            std::size_t s = GIndex::slot(k, 0, p);
            double err =
                std::abs(gsol.Y.v[k][s] * bundle.Etilde.v[k][p] - fsol.Y.v[k][p]);
            rep.max_abs_error = std::max(rep.max_abs_error, err);
            if (record_nodes) rep.per_node_errors.push_back({double(k), double(p), err});
        }
    }
    for (int k = 0; k + 1 <= n; ++k) {
        for (Path p = 0; p < m.nodes(k); ++p) {
            std::size_t s = GIndex::slot(k, 0, p);
            std::size_t c0 = GIndex::slot(k + 1, 0, LatticeModel::child(p, 0));
            double dkp_g = gsol.Kplus.v[k + 1][c0] - gsol.Kplus.v[k][s];
            double dkm_g = gsol.Kminus.v[k + 1][c0] - gsol.Kminus.v[k][s];
            double dkp_f = fsol.Kplus.v[k + 1][2 * p] - fsol.Kplus.v[k][p];
            double dkm_f = fsol.Kminus.v[k + 1][2 * p] - fsol.Kminus.v[k][p];
            rep.max_k_error = std::max(
                rep.max_k_error, std::abs(dkp_g * bundle.Etilde.v[k][p] - dkp_f));
            rep.max_k_error = std::max(
                rep.max_k_error, std::abs(dkm_g * bundle.Etilde.v[k][p] - dkm_f));
        }
    }
    // residual-martingale increments against the compensated default indicator:
    // dM = (zeta - Y^F / Etilde) dN with dN = dD - q/Gtilde on {k <= tau}
    for (int k = 1; k <= n; ++k) {
        for (Path cp = 0; cp < m.nodes(k); ++cp) {
            std::size_t alive = GIndex::slot(k, 0, cp);
            std::size_t par = GIndex::slot(k - 1, 0, cp >> 1);
            double jump = gprob.zeta.v[k][cp] - fsol.Y.v[k][cp] / bundle.Etilde.v[k][cp];
            double comp = bundle.q.v[k][cp] / bundle.Gtilde.v[k][cp];
            double da = gsol.M.v[k][alive] - gsol.M.v[k - 1][par];
            rep.max_m_error = std::max(rep.max_m_error, std::abs(da - jump * (-comp)));
            if (bundle.q.v[k][cp] > 0.0) {
                std::size_t def = GIndex::slot(k, k, cp);
                double dd = gsol.M.v[k][def] - gsol.M.v[k - 1][par];
                rep.max_m_error =
                    std::max(rep.max_m_error, std::abs(dd - jump * (1.0 - comp)));
            }
        }
    }
    return rep;
}

double transfer_identity_gap(const LatticeModel& m, const AzemaBundle& bundle, const Measure& q,
                             const FProcess& x) {
    const int n = m.steps();
    double lhs = 0.0;
    for (Path w = 0; w < m.paths(); ++w) {
        lhs += q.atom_weight(w, 0) * x.v[n][w];
        for (int d = 1; d <= n; ++d)
            lhs += q.atom_weight(w, d) * x.v[d][LatticeModel::prefix(w, n, d)];
    }
    double rhs = 0.0;
    for (Path w = 0; w < m.paths(); ++w) {
        double acc = bundle.Etilde.v[n][w] * x.v[n][w];
        for (int k = 1; k <= n; ++k) {
            Path p = LatticeModel::prefix(w, n, k);
            double dv = bundle.Etilde.v[k - 1][p >> 1] - bundle.Etilde.v[k][p];
            acc += dv * x.v[k][p];
        }
        rhs += m.path_prob(w) * acc;
    }
    return std::abs(lhs - rhs);
}

TransferReport verify_integrability_transfer(const LatticeModel& m, const AzemaBundle& bundle,
                                             const Measure& q, const FProcess& zeta,
                                             const DriverSpec& driver, double beta,
                                             bool has_lower, const FProcess& lower,
                                             bool has_upper, const FProcess& upper) {
    const int n = m.steps();
    const double dt = m.dt();
    FProcess a2 = driver.alpha_sq(m);

    FProcess acc(m); // A_k = sum_{j<k} alpha_j^2 dt
    for (int k = 1; k <= n; ++k)
        for (Path p = 0; p < m.nodes(k); ++p)
            acc.v[k][p] = acc.v[k - 1][p >> 1] + a2.v[k - 1][p >> 1] * dt;

    TransferReport rep;
    FProcess xt(m), phi(m), lsup(m), usup(m);
    for (int k = 0; k <= n; ++k) {
        for (Path p = 0; p < m.nodes(k); ++p) {
            double ew = std::exp(beta * acc.v[k][p]);
            xt.v[k][p] = ew * zeta.v[k][p] * zeta.v[k][p];
            if (k >= 1) {
                Path pp = p >> 1;
                double g0 = driver(m, k - 1, pp, 0.0, 0.0);
                double e0 = std::exp(beta * acc.v[k - 1][pp]);
                phi.v[k][p] = phi.v[k - 1][pp] + e0 * (g0 * g0 / a2.v[k - 1][pp]) * dt;
            }
            double e2 = std::exp(2.0 * beta * acc.v[k][p]);
            double lp = has_lower ? std::max(lower.v[k][p], 0.0) : 0.0;
            double um = has_upper ? std::max(-upper.v[k][p], 0.0) : 0.0;
            lsup.v[k][p] = e2 * lp * lp;
            usup.v[k][p] = e2 * um * um;
            if (k >= 1) {
                lsup.v[k][p] = std::max(lsup.v[k][p], lsup.v[k - 1][p >> 1]);
                usup.v[k][p] = std::max(usup.v[k][p], usup.v[k - 1][p >> 1]);
            }
        }
    }
    rep.terminal_gap = transfer_identity_gap(m, bundle, q, xt);
    rep.driver_gap = transfer_identity_gap(m, bundle, q, phi);
    rep.lower_gap = has_lower ? transfer_identity_gap(m, bundle, q, lsup) : 0.0;
    rep.upper_gap = has_upper ? transfer_identity_gap(m, bundle, q, usup) : 0.0;

    // inequality form of the terminal transfer
    double lhs = 0.0;
    for (Path w = 0; w < m.paths(); ++w) {
        lhs += q.atom_weight(w, 0) * xt.v[n][w];
        for (int d = 1; d <= n; ++d)
            lhs += q.atom_weight(w, d) * xt.v[d][LatticeModel::prefix(w, n, d)];
    }
    double bound = 0.0;
    for (Path w = 0; w < m.paths(); ++w) {
        double vstar = 0.0;
        for (int k = 1; k <= n; ++k) {
            Path p = LatticeModel::prefix(w, n, k);
            double dv = bundle.Etilde.v[k - 1][p >> 1] - bundle.Etilde.v[k][p];
            vstar += zeta.v[k][p] * zeta.v[k][p] * dv;
        }
        double ew = std::exp(beta * acc.v[n][w]);
        bound += m.path_prob(w) * ew * (vstar + zeta.v[n][w] * zeta.v[n][w]);
    }
    rep.inequality_slack = bound - lhs;
    return rep;
}

SecondLinkReport project_second_link(const LatticeModel& m, const AzemaBundle& bundle,
                                     const Measure& q, const DRBSDEProblem& prob,
                                     const DRBSDESolution& sol) {
    if (!bundle.law.deterministic_masses())
        throw HypothesisError(
            "second link: the independence regime requires deterministic default masses");
    bool linear_y = false;
    if (prob.driver.kind == DriverKind::Linear) {
        for (const auto& lvl : prob.driver.theta.v)
            for (double x : lvl)
                if (x != 0.0)
                    throw HypothesisError("second link: driver must not depend on z");
        linear_y = true;
    } else if (prob.driver.kind == DriverKind::General) {
        throw HypothesisError("second link: general drivers are out of scope");
    }

    const int n = m.steps();
    const double dt = m.dt();
    SecondLinkReport rep;
    if (linear_y) {
        for (int k = 0; k < n; ++k) {
            double mx = 0.0;
            for (Path p = 0; p < m.nodes(k); ++p) mx = std::max(mx, std::abs(prob.driver.r.v[k][p]));
            rep.varpi += mx * dt;
        }
        if (rep.varpi > 5.0)
            throw HypothesisError("second link: coefficient integral exceeds the suite bound 5");
    }

    // survival weights are deterministic in this regime
    std::vector<double> G(n + 1);
    for (int k = 0; k <= n; ++k) G[k] = bundle.G.v[k][0];

    FProcess yhat(m), mhat(m);
    for (int k = 0; k <= n; ++k) {
        for (Path p = 0; p < m.nodes(k); ++p) {
            double num = 0.0, den = 0.0, mnum = 0.0;
            for (int st = 0; st <= k; ++st) {
                std::size_t s = GIndex::slot(k, st, p);
                double w = q.gmass(k)[s];
                if (w <= 0.0) continue;
                num += w * sol.Y.v[k][s];
                mnum += w * sol.M.v[k][s];
                den += w;
            }
            yhat.v[k][p] = num / den;
            mhat.v[k][p] = mnum / den;
        }
    }

    const double incr = m.increment();
    for (int k = 0; k < n; ++k) {
        for (Path p = 0; p < m.nodes(k); ++p) {
            std::size_t s = GIndex::slot(k, 0, p);
            std::size_t c0 = GIndex::slot(k + 1, 0, LatticeModel::child(p, 0));
            double dkp = G[k] * (sol.Kplus.v[k + 1][c0] - sol.Kplus.v[k][s]);
            double dkm = G[k] * (sol.Kminus.v[k + 1][c0] - sol.Kminus.v[k][s]);

            // predictor at the alive node, as in the solver
            double num = 0.0;
            const auto& wk1 = q.gmass(k + 1);
            for (int b = 0; b < 2; ++b) {
                Path cp = LatticeModel::child(p, b);
                for (int st : {0, k + 1}) {
                    std::size_t c = GIndex::slot(k + 1, st, cp);
                    if (wk1[c] > 0.0) num += wk1[c] * sol.Y.v[k + 1][c];
                }
            }
            double pred = num / q.gmass(k)[s];
            double fproj = G[k] * prob.driver(m, k, p, pred, sol.Z.v[k][s]) * dt;

            double cont = m.bit_prob(0) * yhat.v[k + 1][2 * p] + m.bit_prob(1) * yhat.v[k + 1][2 * p + 1];
            rep.balance_gap = std::max(
                rep.balance_gap, std::abs(yhat.v[k][p] - cont - fproj - dkp + dkm));

            // base-filtration integrands: projected Z plus the integrand of
            // the projected orthogonal part (binary spanning is exact)
            double zhat = G[k] * sol.Z.v[k][s];
            double theta = (mhat.v[k + 1][2 * p + 1] - mhat.v[k + 1][2 * p]) / (2.0 * incr);
            for (int b = 0; b < 2; ++b) {
                Path cp = LatticeModel::child(p, b);
                double db = m.move(b);
                double mres = mhat.v[k + 1][cp] - mhat.v[k][p] - theta * db;
                rep.theta_residual = std::max(rep.theta_residual, std::abs(mres));
                double bal = yhat.v[k + 1][cp] - yhat.v[k][p] + fproj + dkp - dkm -
                             (zhat + theta) * db;
                rep.pathwise_gap = std::max(rep.pathwise_gap, std::abs(bal));
            }

            // reflection acts on the pre-default reduction of the state
            double yred = sol.Y.v[k][s];
            if (prob.has_lower) {
                rep.ordering_gap =
                    std::max(rep.ordering_gap, prob.lower.v[k][p] - yhat.v[k][p]);
                rep.skorokhod_gap =
                    std::max(rep.skorokhod_gap, std::abs(dkp * (yred - prob.lower.v[k][p])));
            }
            if (prob.has_upper) {
                rep.ordering_gap =
                    std::max(rep.ordering_gap, yhat.v[k][p] - prob.upper.v[k][p]);
                rep.skorokhod_gap =
                    std::max(rep.skorokhod_gap, std::abs(dkm * (prob.upper.v[k][p] - yred)));
            }
        }
    }
    rep.ordering_gap = std::max(rep.ordering_gap, 0.0);
    return rep;
}

LinkReport first_link_refinement(const RuleSet& rules, double horizon,
                                 const std::vector<int>& levels) {
    LinkReport out;
    for (int n : levels) {
        double dt = horizon / n;
        auto m = LatticeModel::build({n, dt, 0.0, 0.5});
        DefaultLaw law =
            rules.hazard_rate
                ? DefaultLaw::from_hazard(m,
                                          [&](int k, Path p) {
                                              double lam = rules.hazard_rate(m.time(k), m.walk(k, p));
                                              return std::min(std::max(lam * dt, 0.0), 0.95);
                                          })
                : DefaultLaw::none(m);
        auto bundle = build_azema(m, law);
        auto q = reweight_to_q(m, bundle);

        DRBSDEProblem prob;
        prob.zeta = FProcess::from(m, [&](int k, Path p) { return rules.zeta(m.time(k), m.walk(k, p)); });
        prob.driver = rules.g ? DriverSpec::g_table(m, FProcess::from(m, [&](int k, Path p) {
                                                        return rules.g(m.time(k), m.walk(k, p));
                                                    }))
                              : DriverSpec::zero(m);
        if (rules.lower) {
            prob.has_lower = true;
            prob.lower = FProcess::from(m, [&](int k, Path p) { return rules.lower(m.time(k), m.walk(k, p)); });
        }
        if (rules.upper) {
            prob.has_upper = true;
            prob.upper = FProcess::from(m, [&](int k, Path p) { return rules.upper(m.time(k), m.walk(k, p)); });
        }

        auto gsol = solve_drbsde(m, q, prob);
        auto fdata = transform_first_link(m, bundle, prob);
        auto fsol = solve_f_drbsde(m, fdata);
        auto rep = verify_first_link(m, bundle, prob, gsol, fdata, fsol);
        out.max_abs_error = rep.max_abs_error;
        out.max_k_error = rep.max_k_error;
        out.max_m_error = rep.max_m_error;
        std::size_t count = 0;
        for (int k = 0; k <= n; ++k) count += GIndex::level_size(k);
        out.convergence.push_back({dt, rep.max_abs_error, double(count)});
    }
    return out;
}

} // namespace drbsde
