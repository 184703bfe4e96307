#include "drbsde/martingale.hpp"

#include <cmath>

namespace drbsde {

double martingale_defect_g(const LatticeModel& m, const Measure& mu, const GProcess& x) {
    double worst = 0.0;
    for (int k = 0; k < m.steps(); ++k) {
        const auto& wk = mu.gmass(k);
        const auto& wk1 = mu.gmass(k + 1);
        std::vector<double> acc(wk.size(), 0.0);
        for (std::size_t s = 0; s < wk1.size(); ++s) {
            if (wk1[s] <= 0.0) continue;
            acc[GIndex::parent(k + 1, s)] += wk1[s] * x.v[k + 1][s];
        }
        for (std::size_t s = 0; s < wk.size(); ++s)
            if (wk[s] > 0.0) worst = std::max(worst, std::abs(acc[s] / wk[s] - x.v[k][s]));
    }
    return worst;
}

double martingale_defect_f(const LatticeModel& m, const Measure& mu, const FProcess& x) {
    double worst = 0.0;
    for (int k = 0; k < m.steps(); ++k) {
        const auto& wk = mu.fmass(k);
        const auto& wk1 = mu.fmass(k + 1);
        for (std::size_t p = 0; p < wk.size(); ++p) {
            if (wk[p] <= 0.0) continue;
            double acc = wk1[2 * p] * x.v[k + 1][2 * p] + wk1[2 * p + 1] * x.v[k + 1][2 * p + 1];
            worst = std::max(worst, std::abs(acc / wk[p] - x.v[k][p]));
        }
    }
    return worst;
}

GProcess operator_t(const LatticeModel& m, const AzemaBundle& bundle, const FProcess& mart,
                    double input_tol) {
    Measure p = Measure::physical(m, bundle.law);
    if (martingale_defect_f(m, p, mart) > input_tol)
        throw HypothesisError("operator_t: input is not a base-filtration martingale");

    GProcess out(m);
    out.v[0][0] = mart.v[0][0];
    for (int k = 1; k <= m.steps(); ++k) {
        for (std::size_t s = 0; s < GIndex::level_size(k); ++s) {
            int st = GIndex::status_of(k, s);
            Path pf = GIndex::prefix_of(k, s);
            std::size_t par = GIndex::parent(k, s);
            if (st != 0 && st != k) { // default strictly before k: frozen
                out.v[k][s] = out.v[k - 1][par];
                continue;
            }
            double dM = mart.v[k][pf] - mart.v[k - 1][pf >> 1];
            double dm = bundle.m.v[k][pf] - bundle.m.v[k - 1][pf >> 1];
            out.v[k][s] = out.v[k - 1][par] + dM - dM * dm / bundle.Gtilde.v[k][pf];
        }
    }
    return out;
}

Decomposition martingale_decompose(const LatticeModel& m, const Measure& mu, const GProcess& x,
                                   double input_tol) {
    if (martingale_defect_g(m, mu, x) > input_tol)
        throw HypothesisError("decompose: input is not a martingale under the given measure");

    Decomposition d{GProcess(m), GProcess(m)};
    for (int k = 0; k < m.steps(); ++k) {
        const auto& wk = mu.gmass(k);
        const auto& wk1 = mu.gmass(k + 1);
        for (std::size_t s = 0; s < wk.size(); ++s) {
            if (wk[s] <= 0.0) continue;
            int st = GIndex::status_of(k, s);
            Path pf = GIndex::prefix_of(k, s);
            double z = 0.0;
            if (st == 0) { // stopped walk still moves from alive nodes only
                double cov = 0.0;
                for (int b = 0; b < 2; ++b) {
                    Path cp = LatticeModel::child(pf, b);
                    double db = m.move(b);
                    std::size_t ca = GIndex::slot(k + 1, 0, cp);
                    std::size_t cd = GIndex::slot(k + 1, k + 1, cp);
                    cov += wk1[ca] * x.v[k + 1][ca] * db;
                    if (wk1[cd] > 0.0) cov += wk1[cd] * x.v[k + 1][cd] * db;
                }
                z = cov / (wk[s] * m.increment() * m.increment());
            } else {
                // stopped input: increments after default must vanish
                for (int b = 0; b < 2; ++b) {
                    std::size_t c = GIndex::slot(k + 1, st, LatticeModel::child(pf, b));
                    if (wk1[c] > 0.0 && std::abs(x.v[k + 1][c] - x.v[k][s]) > input_tol)
                        throw HypothesisError("decompose: input not stopped at default");
                }
            }
            d.integrand.v[k][s] = z;
        }
    }
    // orthogonal residual accumulated forward
    for (int k = 1; k <= m.steps(); ++k) {
        for (std::size_t s = 0; s < GIndex::level_size(k); ++s) {
            if (!mu.g_reachable(k, s)) continue;
            std::size_t par = GIndex::parent(k, s);
            int pst = GIndex::status_of(k, s) == k ? 0 : GIndex::status_of(k, s);
            double db = 0.0;
            if (pst == 0) {
                int b = int(GIndex::prefix_of(k, s) & 1u);
                db = m.move(b);
            }
            d.orthogonal.v[k][s] = d.orthogonal.v[k - 1][par] + x.v[k][s] - x.v[k - 1][par] -
                                   d.integrand.v[k - 1][par] * db;
        }
    }
    return d;
}

double stopped_walk_defect(const LatticeModel& m, const Measure& mu) {
    double worst = 0.0;
    for (int k = 0; k < m.steps(); ++k) {
        const auto& wk = mu.gmass(k);
        const auto& wk1 = mu.gmass(k + 1);
        for (std::size_t s = 0; s < wk.size(); ++s) {
            if (wk[s] <= 0.0 || GIndex::status_of(k, s) != 0) continue;
            Path pf = GIndex::prefix_of(k, s);
            double acc = 0.0;
            for (int b = 0; b < 2; ++b) {
                Path cp = LatticeModel::child(pf, b);
                acc += wk1[GIndex::slot(k + 1, 0, cp)] * m.move(b);
                acc += wk1[GIndex::slot(k + 1, k + 1, cp)] * m.move(b);
            }
            worst = std::max(worst, std::abs(acc / wk[s]));
        }
    }
    return worst;
}

GProcess stopped_walk(const LatticeModel& m) {
    GProcess b(m);
    for (int k = 0; k <= m.steps(); ++k) {
        for (std::size_t s = 0; s < GIndex::level_size(k); ++s) {
            int st = GIndex::status_of(k, s);
            Path p = GIndex::prefix_of(k, s);
            b.v[k][s] = st == 0 ? m.walk(k, p) : m.walk(st, LatticeModel::prefix(p, k, st));
        }
    }
    return b;
}

double stopped_walk_bracket_defect(const LatticeModel& m, const Measure& mu) {
    double worst = 0.0;
    for (int k = 0; k < m.steps(); ++k) {
        const auto& wk = mu.gmass(k);
        for (std::size_t s = 0; s < wk.size(); ++s) {
            if (wk[s] <= 0.0 || GIndex::status_of(k, s) != 0) continue;
            Path pf = GIndex::prefix_of(k, s);
            for (int b = 0; b < 2; ++b) {
                double inc = m.walk(k + 1, LatticeModel::child(pf, b)) - m.walk(k, pf);
                worst = std::max(worst, std::abs(std::abs(inc) - m.increment()));
            }
        }
    }
    return worst;
}

} // namespace drbsde
