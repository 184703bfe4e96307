#include "drbsde/dynkin.hpp"

#include <cmath>
#include <limits>

namespace drbsde {

void GameSpec::validate(const LatticeModel& m, const Measure& q) const {
    const int n = m.steps();
    if (xi1.size() != m.paths() || xi2.size() != m.paths())
        throw ConfigError("game: terminal legs need one value per terminal path");
    for (Path w = 0; w < m.paths(); ++w)
        if (!(xi2[w] > xi1[w]))
            throw DataError("game: the late-payment penalty must be positive (xi2 > xi1)");
    for (int k = 0; k < n; ++k) {
        for (Path p = 0; p < m.nodes(k); ++p) {
            if (!(lower.v[k][p] < upper.v[k][p] - 1e-12))
                throw DataError("game: barriers not strictly separated before the expiry");
            if (qproc.v[k][p] < lower.v[k][p] - 1e-12 || qproc.v[k][p] > upper.v[k][p] + 1e-12)
                throw DataError("game: simultaneous payoff outside the barriers");
        }
    }
    for (Path w = 0; w < m.paths(); ++w) {
        if (xi1[w] < lower.v[n][w] - 1e-12 || xi1[w] > upper.v[n][w] + 1e-12)
            throw DataError("game: survival leg outside the terminal barriers");
        for (int d = 1; d <= n; ++d) {
            if (q.atom_weight(w, d) <= 0.0) continue;
            Path pd = LatticeModel::prefix(w, n, d);
            if (xi2[w] < lower.v[d][pd] - 1e-12 || xi2[w] > upper.v[d][pd] + 1e-12)
                throw DataError("game: default leg outside the barriers at the default node");
        }
    }
}

AtomValues GameSpec::terminal(const LatticeModel& m) const {
    const int n = m.steps();
    AtomValues xi(GIndex::level_size(n), 0.0);
    for (Path w = 0; w < m.paths(); ++w) {
        xi[w] = xi1[w];
        for (int d = 1; d <= n; ++d) xi[(std::size_t(d) << n) | w] = xi2[w];
    }
    return xi;
}

DRBSDEProblem GameSpec::problem(const LatticeModel& m) const {
    DRBSDEProblem prob;
    prob.zeta = FProcess(m);
    prob.terminal = terminal(m);
    prob.driver = driver;
    prob.has_lower = prob.has_upper = true;
    prob.lower = lower;
    prob.upper = upper;
    prob.beta = beta;
    return prob;
}

StoppingRule StoppingRule::horizon_only(const LatticeModel& m) {
    StoppingRule r;
    r.stop.resize(m.steps() + 1);
    for (int k = 0; k <= m.steps(); ++k)
        r.stop[k].assign(m.nodes(k), k == m.steps() ? 1 : 0);
    return r;
}

StoppingRule StoppingRule::merge(const StoppingRule& a, const StoppingRule& b) {
    StoppingRule r = a;
    for (std::size_t k = 0; k < r.stop.size(); ++k)
        for (std::size_t p = 0; p < r.stop[k].size(); ++p) r.stop[k][p] |= b.stop[k][p];
    return r;
}

int StoppingRule::realized(const LatticeModel& m, int theta, Path path, int d) const {
    const int n = m.steps();
    for (int k = theta; k <= n; ++k) {
        if (d != 0 && k >= d) return d; // forced at the default transition
        if (stop[k][LatticeModel::prefix(path, n, k)]) return k;
    }
    return n; // forced at the horizon
}

AtomValues game_payoff(const LatticeModel& m, const GameSpec& spec, const StoppingRule& rule1,
                       const StoppingRule& rule2, int theta) {
    const int n = m.steps();
    if (int(rule1.stop.size()) != n + 1 || int(rule2.stop.size()) != n + 1)
        throw RuleError("game: stopping rule built for a different tree");
    AtomValues out(GIndex::level_size(n), 0.0);
    for (Path w = 0; w < m.paths(); ++w) {
        for (int d = 0; d <= n; ++d) {
            int expiry = d == 0 ? n : d;
            int s1 = rule1.realized(m, theta, w, d);
            int s2 = rule2.realized(m, theta, w, d);
            double v;
            if (s1 < s2)
                v = spec.lower.v[s1][LatticeModel::prefix(w, n, s1)];
            else if (s2 < s1)
                v = spec.upper.v[s2][LatticeModel::prefix(w, n, s2)];
            else if (s1 < expiry)
                v = spec.qproc.v[s1][LatticeModel::prefix(w, n, s1)];
            else
                v = d == 0 ? spec.xi1[w] : spec.xi2[w];
            out[(std::size_t(d) << n) | w] = v;
        }
    }
    return out;
}

GProcess ef_evaluate(const LatticeModel& m, const Measure& q, const DriverSpec& driver,
                     const AtomValues& payoff, const StoppingRule& horizon, int theta) {
    const int n = m.steps();
    const double dt = m.dt();
    GProcess cond = cond_expect_g(m, q, payoff);

    // stopped-at-or-before flags on alive nodes, scanning from theta
    std::vector<std::vector<std::uint8_t>> hit(n + 1);
    for (int k = 0; k <= n; ++k) {
        hit[k].assign(m.nodes(k), 0);
        for (Path p = 0; p < m.nodes(k); ++p) {
            bool inherited = k > theta && hit[k - 1][p >> 1];
            hit[k][p] = (k >= theta && horizon.stop[k][p]) || inherited ? 1 : 0;
        }
    }

    GProcess v(m, std::numeric_limits<double>::quiet_NaN());
    for (int k = n; k >= 0; --k) {
        for (std::size_t s = 0; s < GIndex::level_size(k); ++s) {
            if (!q.g_reachable(k, s)) continue;
            int st = GIndex::status_of(k, s);
            Path p = GIndex::prefix_of(k, s);
            if (st != 0 || k == n || hit[k][p]) {
                v.v[k][s] = cond.v[k][s]; // at or after the stop: plain projection
                continue;
            }
            const auto& wk1 = q.gmass(k + 1);
            double num = 0.0, cov = 0.0;
            for (int b = 0; b < 2; ++b) {
                Path cp = LatticeModel::child(p, b);
                double db = m.move(b);
                for (int cs : {0, k + 1}) {
                    std::size_t c = GIndex::slot(k + 1, cs, cp);
                    if (wk1[c] > 0.0) {
                        num += wk1[c] * v.v[k + 1][c];
                        cov += wk1[c] * v.v[k + 1][c] * db;
                    }
                }
            }
            double w = q.gmass(k)[s];
            double pred = num / w, z = cov / (w * dt);
            v.v[k][s] = pred + driver(m, k, p, pred, z) * dt;
        }
    }
    return v;
}

namespace {

// rule fragments on the alive subtree rooted at (k, p): either stop here
// or continue and combine fragments of both children
void gen_subtree(const LatticeModel& m, int k, Path p,
                 std::vector<std::vector<std::pair<int, Path>>>& out) {
    out.clear();
    if (k == m.steps()) {
        out.push_back({{k, p}});
        return;
    }
    out.push_back({{k, p}});
    std::vector<std::vector<std::pair<int, Path>>> left, right;
    gen_subtree(m, k + 1, LatticeModel::child(p, 0), left);
    gen_subtree(m, k + 1, LatticeModel::child(p, 1), right);
    for (const auto& l : left)
        for (const auto& r : right) {
            std::vector<std::pair<int, Path>> both = l;
            both.insert(both.end(), r.begin(), r.end());
            out.push_back(std::move(both));
        }
}

std::size_t count_rules(const LatticeModel& m, int theta) {
    std::vector<double> c(m.steps() + 1);
    c[m.steps()] = 1.0;
    for (int k = m.steps() - 1; k >= theta; --k) c[k] = 1.0 + c[k + 1] * c[k + 1];
    double total = 1.0;
    for (Path p = 0; p < m.nodes(theta); ++p) total *= c[theta];
    return total > 1e18 ? std::size_t(-1) : std::size_t(total);
}

} // namespace

std::vector<StoppingRule> enumerate_rules(const LatticeModel& m, int theta, std::size_t cap) {
    std::size_t total = count_rules(m, theta);
    if (total > cap)
        throw SizeError("game: " + std::to_string(total) + " stopping rules exceed the cap " +
                        std::to_string(cap) + "; use the saddle-verification path instead");

    // fragments per start node, then their cartesian product
    std::vector<std::vector<std::vector<std::pair<int, Path>>>> frags(m.nodes(theta));
    for (Path p = 0; p < m.nodes(theta); ++p) gen_subtree(m, theta, p, frags[p]);

    std::vector<StoppingRule> rules;
    std::vector<std::size_t> pick(m.nodes(theta), 0);
    while (true) {
        StoppingRule r = StoppingRule::horizon_only(m);
        for (Path p = 0; p < m.nodes(theta); ++p)
            for (auto [k, node] : frags[p][pick[p]]) r.stop[k][node] = 1;
        rules.push_back(std::move(r));
        std::size_t i = 0;
        for (; i < pick.size(); ++i) {
            if (++pick[i] < frags[i].size()) break;
            pick[i] = 0;
        }
        if (i == pick.size()) break;
    }
    return rules;
}

GameValueReport brute_force_value(const LatticeModel& m, const Measure& q, const GameSpec& spec,
                                  int theta, const DRBSDESolution* sol, std::size_t cap) {
    spec.validate(m, q);
    auto rules = enumerate_rules(m, theta, cap);
    const std::size_t r = rules.size();

    std::vector<std::size_t> start_nodes;
    for (Path p = 0; p < m.nodes(theta); ++p)
        if (q.g_reachable(theta, GIndex::slot(theta, 0, p))) start_nodes.push_back(p);

    std::vector<std::vector<std::vector<double>>> val(
        r, std::vector<std::vector<double>>(r, std::vector<double>(start_nodes.size())));
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j) {
            auto pay = game_payoff(m, spec, rules[i], rules[j], theta);
            auto v = ef_evaluate(m, q, spec.driver, pay,
                                 StoppingRule::merge(rules[i], rules[j]), theta);
            for (std::size_t a = 0; a < start_nodes.size(); ++a)
                val[i][j][a] = v.v[theta][GIndex::slot(theta, 0, start_nodes[a])];
        }

    GameValueReport rep;
    rep.pairs = r * r;
    rep.deviations_checked = int(r * r);
    std::size_t best_i = 0, best_j = 0;
    for (std::size_t a = 0; a < start_nodes.size(); ++a) {
        double up = 1e300, lo = -1e300;
        std::size_t arg_j = 0, arg_i = 0;
        for (std::size_t j = 0; j < r; ++j) {
            double mx = -1e300;
            for (std::size_t i = 0; i < r; ++i) mx = std::max(mx, val[i][j][a]);
            if (mx < up) {
                up = mx;
                arg_j = j;
            }
        }
        for (std::size_t i = 0; i < r; ++i) {
            double mn = 1e300;
            for (std::size_t j = 0; j < r; ++j) mn = std::min(mn, val[i][j][a]);
            if (mn > lo) {
                lo = mn;
                arg_i = i;
            }
        }
        if (a == 0) {
            rep.upper = up;
            rep.lower = lo;
            best_i = arg_i;
            best_j = arg_j;
        }
        rep.max_gap = std::max(rep.max_gap, std::abs(up - lo));
        if (sol) {
            double y = sol->Y.v[theta][GIndex::slot(theta, 0, start_nodes[a])];
            if (a == 0) rep.y_at_theta = y;
            rep.max_value_vs_y = std::max(rep.max_value_vs_y, std::abs(up - y));
            rep.max_value_vs_y = std::max(rep.max_value_vs_y, std::abs(lo - y));
        }
    }
    rep.saddle1 = rules[best_i];
    rep.saddle2 = rules[best_j];
    return rep;
}

std::pair<StoppingRule, StoppingRule> saddle_from_solution(const LatticeModel& m,
                                                           const Measure& q,
                                                           const GameSpec& spec,
                                                           const DRBSDESolution& sol, int theta) {
    auto r1 = StoppingRule::horizon_only(m);
    auto r2 = StoppingRule::horizon_only(m);
    for (int k = theta; k < m.steps(); ++k) {
        for (Path p = 0; p < m.nodes(k); ++p) {
            std::size_t s = GIndex::slot(k, 0, p);
            if (!q.g_reachable(k, s)) continue;
            if (sol.Y.v[k][s] == spec.lower.v[k][p]) r1.stop[k][p] = 1;
            if (sol.Y.v[k][s] == spec.upper.v[k][p]) r2.stop[k][p] = 1;
        }
    }
    return {r1, r2};
}

SaddleReport verify_saddle(const LatticeModel& m, const Measure& q, const GameSpec& spec,
                           const DRBSDESolution& sol, const StoppingRule& rule1,
                           const StoppingRule& rule2, int theta, std::size_t cap, double tol) {
    SaddleReport rep;
    const int n = m.steps();
    auto both = StoppingRule::merge(rule1, rule2);

    std::vector<std::size_t> starts;
    for (Path p = 0; p < m.nodes(theta); ++p)
        if (q.g_reachable(theta, GIndex::slot(theta, 0, p)))
            starts.push_back(GIndex::slot(theta, 0, p));

    std::vector<double> pair_value(starts.size());
    {
        auto pay = game_payoff(m, spec, rule1, rule2, theta);
        auto v = ef_evaluate(m, q, spec.driver, pay, both, theta);
        for (std::size_t a = 0; a < starts.size(); ++a) {
            pair_value[a] = v.v[theta][starts[a]];
            rep.value_vs_y =
                std::max(rep.value_vs_y, std::abs(pair_value[a] - sol.Y.v[theta][starts[a]]));
        }
    }

    std::vector<StoppingRule> deviations;
    try {
        deviations = enumerate_rules(m, theta, cap);
    } catch (const SizeError&) {
        deviations = enumerate_rules(m, theta, std::size_t(-1) / 2);
        deviations.resize(cap);
        rep.sampled = true;
    }
    for (const auto& dev : deviations) {
        {
            auto pay = game_payoff(m, spec, dev, rule2, theta);
            auto v = ef_evaluate(m, q, spec.driver, pay, StoppingRule::merge(dev, rule2), theta);
            for (std::size_t a = 0; a < starts.size(); ++a) {
                double slack = pair_value[a] - v.v[theta][starts[a]]; // must be >= 0
                if (slack < -tol) {
                    ++rep.violations;
                    rep.worst_violation = std::min(rep.worst_violation, slack);
                }
            }
        }
        {
            auto pay = game_payoff(m, spec, rule1, dev, theta);
            auto v = ef_evaluate(m, q, spec.driver, pay, StoppingRule::merge(rule1, dev), theta);
            for (std::size_t a = 0; a < starts.size(); ++a) {
                double slack = v.v[theta][starts[a]] - pair_value[a]; // must be >= 0
                if (slack < -tol) {
                    ++rep.violations;
                    rep.worst_violation = std::min(rep.worst_violation, slack);
                }
            }
        }
        rep.deviations_checked += 2;
    }

    // strong nonlinear-martingale property of Y up to the realised stop
    for (int k2 = theta + 1; k2 <= n; ++k2) {
        StoppingRule trunc = both;
        for (Path p = 0; p < m.nodes(k2); ++p) trunc.stop[k2][p] = 1;
        AtomValues x(GIndex::level_size(n), 0.0);
        for (Path w = 0; w < m.paths(); ++w) {
            for (int d = 0; d <= n; ++d) {
                if (q.atom_weight(w, d) <= 0.0) continue;
                int s = trunc.realized(m, theta, w, d);
                int st = (d != 0 && s >= d) ? d : 0;
                x[(std::size_t(d) << n) | w] =
                    sol.Y.v[s][GIndex::slot(s, st, LatticeModel::prefix(w, n, s))];
            }
        }
        auto v = ef_evaluate(m, q, spec.driver, x, trunc, theta);
        // compare at alive nodes not strictly inside the stopped region
        std::vector<std::vector<std::uint8_t>> hit(k2 + 1);
        for (int k = theta; k < k2; ++k) {
            hit[k].assign(m.nodes(k), 0);
            for (Path p = 0; p < m.nodes(k); ++p) {
                bool inherited = k > theta && hit[k - 1][p >> 1];
                hit[k][p] = (both.stop[k][p] && k >= theta) || inherited ? 1 : 0;
            }
            for (Path p = 0; p < m.nodes(k); ++p) {
                bool stopped_before = k > theta && hit[k - 1][p >> 1];
                std::size_t s = GIndex::slot(k, 0, p);
                if (stopped_before || !q.g_reachable(k, s)) continue;
                rep.band_defect =
                    std::max(rep.band_defect, std::abs(v.v[k][s] - sol.Y.v[k][s]));
            }
        }
    }
    return rep;
}

} // namespace drbsde
