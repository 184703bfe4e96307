#include <doctest.h>

#include "drbsde/dynkin.hpp"

#include <cmath>

using namespace drbsde;

namespace {

struct Setup {
    LatticeModel model;
    AzemaBundle bundle;
    Measure q;
};

Setup make(int n, double dt, const DefaultLaw& law) {
    auto m = LatticeModel::build({n, dt, 0.0, 0.5});
    auto b = build_azema(m, law);
    auto q = reweight_to_q(m, b);
    return {m, std::move(b), std::move(q)};
}

// Two-step game whose lower barrier binds at the down node of step one
// (but not at the root), with a positive late-payment penalty.
GameSpec bump_game(const LatticeModel& m, const DriverSpec& driver) {
    GameSpec g;
    g.driver = driver;
    g.lower = FProcess(m);
    g.upper = FProcess(m);
    g.qproc = FProcess(m);
    const double lvl[3] = {0.05, 0.13, -0.02};
    for (int k = 0; k <= 2; ++k)
        for (Path p = 0; p < m.nodes(k); ++p) {
            g.lower.v[k][p] = lvl[k];
            g.upper.v[k][p] = lvl[k] + 0.6;
            g.qproc.v[k][p] = lvl[k] + 0.3;
        }
    g.xi1.resize(m.paths());
    g.xi2.resize(m.paths());
    for (Path w = 0; w < m.paths(); ++w) {
        double x = std::min(std::max(0.4 * m.walk(2, w), -0.02), 0.58);
        g.xi1[w] = x;
        g.xi2[w] = std::min(std::max(x + 0.2, 0.13), 0.58);
        if (g.xi2[w] <= g.xi1[w]) g.xi2[w] = g.xi1[w] + 1e-3;
    }
    return g;
}

GameSpec trivial_game(const LatticeModel& m) {
    GameSpec g;
    g.driver = DriverSpec::zero(m);
    g.lower = FProcess::constant(m, -1.0);
    g.upper = FProcess::constant(m, 1.0);
    g.qproc = FProcess::constant(m, 0.0);
    g.xi1.assign(m.paths(), 0.0);
    g.xi2.assign(m.paths(), 0.5);
    return g;
}

} // namespace

TEST_CASE("payoff case analysis") {
    auto m0 = LatticeModel::build({2, 0.5, 0.0, 0.5});
    auto s = make(2, 0.5, DefaultLaw::random(m0, 51));
    auto g = bump_game(s.model, DriverSpec::zero(s.model));
    g.validate(s.model, s.q);
    auto horizon = StoppingRule::horizon_only(s.model);

    SUBCASE("both wait: the split terminal fires on every atom") {
        auto pay = game_payoff(s.model, g, horizon, horizon, 0);
        for (Path w = 0; w < s.model.paths(); ++w) {
            CHECK(pay[w] == g.xi1[w]);
            for (int d = 1; d <= 2; ++d) CHECK(pay[(std::size_t(d) << 2) | w] == g.xi2[w]);
        }
    }

    SUBCASE("player one stops immediately: lower barrier everywhere") {
        auto stopnow = horizon;
        stopnow.stop[0][0] = 1;
        auto pay = game_payoff(s.model, g, stopnow, horizon, 0);
        for (double v : pay) CHECK(v == g.lower.v[0][0]);
    }

    SUBCASE("simultaneous interior stop pays the middle process") {
        auto both = horizon;
        both.stop[1][0] = 1; // both players stop at the down node of step 1
        auto pay = game_payoff(s.model, g, both, both, 0);
        for (Path w = 0; w < s.model.paths(); ++w) {
            if (LatticeModel::prefix(w, 2, 1) != 0) continue;
            CHECK(pay[w] == g.qproc.v[1][0]);                 // survived path, stopped at 1
            CHECK(pay[(std::size_t(2) << 2) | w] == g.qproc.v[1][0]); // default after the stop... d=2 > 1
            CHECK(pay[(std::size_t(1) << 2) | w] == g.xi2[w]);        // default at the stop step
        }
    }

    SUBCASE("exactly one case fires per atom") {
        auto r1 = horizon;
        r1.stop[1][1] = 1;
        auto r2 = horizon;
        r2.stop[1][0] = 1;
        auto pay = game_payoff(s.model, g, r1, r2, 0);
        for (Path w = 0; w < s.model.paths(); ++w)
            for (int d = 0; d <= 2; ++d) {
                double v = pay[(std::size_t(d) << 2) | w];
                CHECK(std::isfinite(v)); // every atom assigned
            }
    }
}

TEST_CASE("nonlinear evaluation of stopped payoffs") {
    auto m0 = LatticeModel::build({2, 0.5, 0.0, 0.5});
    auto s = make(2, 0.5, DefaultLaw::random(m0, 53));
    auto horizon = StoppingRule::horizon_only(s.model);

    SUBCASE("zero driver: plain expectation at the root") {
        AtomValues pay(GIndex::level_size(2));
        for (std::size_t i = 0; i < pay.size(); ++i) pay[i] = 0.1 * double(i % 7) - 0.2;
        auto v = ef_evaluate(s.model, s.q, DriverSpec::zero(s.model), pay, horizon, 0);
        double mean = 0.0;
        for (std::size_t i = 0; i < pay.size(); ++i) mean += s.q.atom_weights()[i] * pay[i];
        CHECK(v.v[0][0] == doctest::Approx(mean).epsilon(1e-13));
    }

    SUBCASE("linear drift, constant payoff, deterministic horizon") {
        auto nodefault = make(2, 0.5, DefaultLaw::none(s.model));
        AtomValues pay(GIndex::level_size(2), 1.0);
        auto drv = DriverSpec::linear_const(nodefault.model, 0.1, 0.0);
        auto v = ef_evaluate(nodefault.model, nodefault.q, drv, pay, horizon, 0);
        CHECK(v.v[0][0] == doctest::Approx(0.9025).epsilon(1e-14)); // (1 - 0.05)^2
    }

    SUBCASE("the evaluation is a nondecreasing operator") {
        auto drv = DriverSpec::linear_const(s.model, 0.15, 0.1);
        AtomValues lo(GIndex::level_size(2)), hi(GIndex::level_size(2));
        for (std::size_t i = 0; i < lo.size(); ++i) {
            lo[i] = std::sin(0.9 * double(i));
            hi[i] = lo[i] + 0.05 * double(i % 3);
        }
        auto rule = horizon;
        rule.stop[1][1] = 1;
        auto vlo = ef_evaluate(s.model, s.q, drv, lo, rule, 0);
        auto vhi = ef_evaluate(s.model, s.q, drv, hi, rule, 0);
        for (int k = 0; k <= 2; ++k)
            for (std::size_t sl = 0; sl < GIndex::level_size(k); ++sl)
                if (s.q.g_reachable(k, sl)) CHECK(vhi.v[k][sl] >= vlo.v[k][sl] - 1e-12);
    }
}

TEST_CASE("rule enumeration growth and cap") {
    auto m2 = LatticeModel::build({2, 0.5, 0.0, 0.5});
    CHECK(enumerate_rules(m2, 0).size() == 5);
    auto m3 = LatticeModel::build({3, 0.25, 0.0, 0.5});
    CHECK(enumerate_rules(m3, 0).size() == 26);
    auto m5 = LatticeModel::build({5, 0.2, 0.0, 0.5});
    CHECK_THROWS_AS(enumerate_rules(m5, 0), SizeError);
}

TEST_CASE("brute force equals the reflected solution at the root") {
    SUBCASE("trivial game: value zero") {
        auto s = make(2, 0.5, DefaultLaw::none(LatticeModel::build({2, 0.5, 0.0, 0.5})));
        auto g = trivial_game(s.model);
        auto prob = g.problem(s.model);
        auto sol = solve_drbsde(s.model, s.q, prob);
        auto rep = brute_force_value(s.model, s.q, g, 0, &sol);
        CHECK(rep.upper == doctest::Approx(0.0).epsilon(1e-13));
        CHECK(rep.lower == doctest::Approx(0.0).epsilon(1e-13));
        CHECK(rep.max_value_vs_y < 1e-13);
    }

    SUBCASE("binding game with default, zero driver") {
        auto m0 = LatticeModel::build({2, 0.5, 0.0, 0.5});
        auto s = make(2, 0.5, DefaultLaw::random(m0, 57));
        auto g = bump_game(s.model, DriverSpec::zero(s.model));
        auto prob = g.problem(s.model);
        auto sol = solve_drbsde(s.model, s.q, prob);
        auto rep = brute_force_value(s.model, s.q, g, 0, &sol);
        CHECK(rep.lower <= rep.upper + 1e-13);
        CHECK(rep.max_gap < 1e-12);
        CHECK(rep.max_value_vs_y < 1e-12);
    }

    SUBCASE("three steps with a linear driver") {
        auto m0 = LatticeModel::build({3, 0.25, 0.0, 0.5});
        auto s = make(3, 0.25, DefaultLaw::random(m0, 59));
        GameSpec g;
        g.driver = DriverSpec::linear_const(s.model, 0.2, 0.1);
        g.lower = FProcess::from(s.model, [&](int k, Path) { return 0.08 * (3 - k) - 0.1; });
        g.upper = FProcess::from(s.model, [&](int k, Path p) { return 0.5 + 0.02 * s.model.walk(k, p); });
        g.qproc = FProcess::from(s.model, [&](int k, Path p) {
            return 0.5 * (g.lower.v[k][p] + g.upper.v[k][p]);
        });
        g.xi1.resize(s.model.paths());
        g.xi2.resize(s.model.paths());
        for (Path w = 0; w < s.model.paths(); ++w) {
            double x = 0.1 * s.model.walk(3, w);
            g.xi1[w] = std::min(std::max(x, -0.1), 0.4);
            g.xi2[w] = std::min(std::max(g.xi1[w] + 0.1, 0.07), 0.42);
        }
        auto prob = g.problem(s.model);
        auto sol = solve_drbsde(s.model, s.q, prob);
        auto rep = brute_force_value(s.model, s.q, g, 0, &sol);
        CHECK(rep.max_gap < 1e-9);
        CHECK(rep.max_value_vs_y < 1e-9);
        CHECK(rep.pairs == 26 * 26);
    }

    SUBCASE("interior start time") {
        auto m0 = LatticeModel::build({2, 0.5, 0.0, 0.5});
        auto s = make(2, 0.5, DefaultLaw::random(m0, 61));
        auto g = bump_game(s.model, DriverSpec::zero(s.model));
        auto prob = g.problem(s.model);
        auto sol = solve_drbsde(s.model, s.q, prob);
        auto rep = brute_force_value(s.model, s.q, g, 1, &sol);
        CHECK(rep.max_gap < 1e-12);
        CHECK(rep.max_value_vs_y < 1e-12);
    }
}

TEST_CASE("saddle extraction and verification") {
    auto m0 = LatticeModel::build({2, 0.5, 0.0, 0.5});
    auto s = make(2, 0.5, DefaultLaw::random(m0, 63));
    auto g = bump_game(s.model, DriverSpec::zero(s.model));
    auto prob = g.problem(s.model);
    auto sol = solve_drbsde(s.model, s.q, prob);

    auto [r1, r2] = saddle_from_solution(s.model, s.q, g, sol, 0);

    SUBCASE("the extracted pair passes with zero violations") {
        auto rep = verify_saddle(s.model, s.q, g, sol, r1, r2, 0);
        CHECK(rep.violations == 0);
        CHECK(rep.value_vs_y < 1e-12);
        CHECK(rep.band_defect < 1e-12);
        CHECK(rep.deviations_checked == 2 * 5);
        CHECK(!rep.sampled);
    }

    SUBCASE("extracted stops match a brute-force saddle pair atom-wise") {
        auto rep = brute_force_value(s.model, s.q, g, 0, &sol);
        for (Path w = 0; w < s.model.paths(); ++w)
            for (int d = 0; d <= 2; ++d) {
                if (s.q.atom_weight(w, d) <= 0.0) continue;
                CHECK(r1.realized(s.model, 0, w, d) == rep.saddle1.realized(s.model, 0, w, d));
                CHECK(r2.realized(s.model, 0, w, d) == rep.saddle2.realized(s.model, 0, w, d));
            }
    }

    SUBCASE("negative control: stopping player one at the start is detected") {
        REQUIRE(sol.Y.v[0][0] > g.lower.v[0][0] + 1e-6); // genuinely suboptimal stop
        auto bad = StoppingRule::horizon_only(s.model);
        bad.stop[0][0] = 1;
        auto rep = verify_saddle(s.model, s.q, g, sol, bad, r2, 0);
        CHECK(rep.violations >= 1);
        CHECK(rep.worst_violation < -1e-6);
    }

    SUBCASE("non-binding barriers: both saddle rules wait for the expiry") {
        auto tg = trivial_game(s.model);
        auto tsol = solve_drbsde(s.model, s.q, tg.problem(s.model));
        auto [t1, t2] = saddle_from_solution(s.model, s.q, tg, tsol, 0);
        for (int k = 0; k < 2; ++k)
            for (Path p = 0; p < s.model.nodes(k); ++p) {
                CHECK(t1.stop[k][p] == 0);
                CHECK(t2.stop[k][p] == 0);
            }
    }

    SUBCASE("immediate stop when the state starts on the barrier") {
        // lift the lower barrier at the root to the solution value
        auto g2 = g;
        g2.lower.v[0][0] = sol.Y.v[0][0];
        auto sol2 = solve_drbsde(s.model, s.q, g2.problem(s.model));
        auto [u1, u2] = saddle_from_solution(s.model, s.q, g2, sol2, 0);
        CHECK(u1.stop[0][0] == 1);
        (void)u2;
    }
}

TEST_CASE("the game value is insensitive to the simultaneous payoff within the barriers") {
    auto m0 = LatticeModel::build({2, 0.5, 0.0, 0.5});
    auto s = make(2, 0.5, DefaultLaw::random(m0, 67));
    auto low = bump_game(s.model, DriverSpec::zero(s.model));
    auto high = low;
    low.qproc = low.lower;
    high.qproc = high.upper;
    auto sol = solve_drbsde(s.model, s.q, low.problem(s.model));
    auto a = brute_force_value(s.model, s.q, low, 0, &sol);
    auto b = brute_force_value(s.model, s.q, high, 0, &sol);
    // off-saddle payoffs differ, the value does not
    CHECK(std::abs(a.upper - b.upper) < 1e-12);
    CHECK(std::abs(a.lower - b.lower) < 1e-12);
}
