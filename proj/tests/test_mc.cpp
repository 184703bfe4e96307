#include <doctest.h>

#include "drbsde/mc.hpp"
#include "drbsde/solver.hpp"

#include <cmath>

using namespace drbsde;

namespace {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// closed-form call price, the oracle for the example tier
double bs_call(double s0, double k, double r, double sigma, double t) {
    double d1 = (std::log(s0 / k) + (r + 0.5 * sigma * sigma) * t) / (sigma * std::sqrt(t));
    double d2 = d1 - sigma * std::sqrt(t);
    return s0 * norm_cdf(d1) - k * std::exp(-r * t) * norm_cdf(d2);
}

} // namespace

TEST_CASE("path simulation") {
    McConfig cfg;
    cfg.n_steps = 50;
    cfg.dt = 0.02;
    cfg.n_paths = 100000;
    cfg.seed = 7;

    SUBCASE("deterministic under a fixed seed and across thread counts") {
        auto a = simulate_paths(cfg);
        auto b = simulate_paths(cfg);
        McConfig cfg2 = cfg;
        cfg2.threads = 2;
        auto c = simulate_paths(cfg2);
        CHECK(a.incr == b.incr);
        CHECK(a.incr == c.incr);
    }

    SUBCASE("terminal moments within the sampling bands") {
        auto b = simulate_paths(cfg);
        double t = cfg.n_steps * cfg.dt;
        double mean = 0.0, var = 0.0;
        for (std::int64_t p = 0; p < cfg.n_paths; ++p) mean += b.walk(p, cfg.n_steps);
        mean /= double(cfg.n_paths);
        for (std::int64_t p = 0; p < cfg.n_paths; ++p) {
            double x = b.walk(p, cfg.n_steps) - mean;
            var += x * x;
        }
        var /= double(cfg.n_paths - 1);
        CHECK(std::abs(mean) < 5.0 * std::sqrt(t / double(cfg.n_paths)));
        // std error of the sample variance of a Gaussian: t sqrt(2/n)
        CHECK(std::abs(var - t) < 5.0 * t * std::sqrt(2.0 / double(cfg.n_paths)));
    }

    SUBCASE("inverse normal round trip") {
        for (double u : {0.001, 0.2, 0.5, 0.77, 0.999})
            CHECK(norm_cdf(rng::inverse_normal_cdf(u)) == doctest::Approx(u).epsilon(1e-9));
    }
}

TEST_CASE("intensity-driven defaults") {
    McConfig cfg;
    cfg.n_steps = 50;
    cfg.dt = 0.02;
    cfg.n_paths = 100000;
    cfg.seed = 11;
    auto batch = simulate_paths(cfg);

    SUBCASE("zero intensity never defaults") {
        apply_cox_default(batch, {[](double, double) { return 0.0; }});
        for (std::int64_t p = 0; p < cfg.n_paths; ++p) CHECK(batch.default_step[p] == 0);
    }

    SUBCASE("unit intensity: survival exp(-1) within five standard errors") {
        apply_cox_default(batch, {[](double, double) { return 1.0; }});
        double surv = 0.0;
        for (std::int64_t p = 0; p < cfg.n_paths; ++p)
            if (batch.default_step[p] == 0) surv += 1.0;
        surv /= double(cfg.n_paths);
        double target = std::exp(-1.0);
        double se = std::sqrt(target * (1.0 - target) / double(cfg.n_paths));
        CHECK(std::abs(surv - target) < 5.0 * se);
    }

    SUBCASE("state-dependent intensity matches the path-wise survival average") {
        auto lam = [](double, double b) { return 0.5 * (1.0 + std::tanh(b)); };
        apply_cox_default(batch, {lam});
        double surv = 0.0, model = 0.0;
        for (std::int64_t p = 0; p < cfg.n_paths; ++p) {
            if (batch.default_step[p] == 0) surv += 1.0;
            double big = 0.0, b = 0.0;
            for (int k = 0; k < cfg.n_steps; ++k) {
                big += lam(k * cfg.dt, b) * cfg.dt;
                b += batch.db(p, k);
            }
            model += std::exp(-big);
        }
        surv /= double(cfg.n_paths);
        model /= double(cfg.n_paths);
        CHECK(std::abs(surv - model) < 5.0 * 0.5 / std::sqrt(double(cfg.n_paths)));
    }
}

TEST_CASE("regression-based backward recursion") {
    SUBCASE("martingale terminal: value near zero") {
        McConfig cfg;
        cfg.n_steps = 20;
        cfg.dt = 0.05;
        cfg.n_paths = 50000;
        cfg.seed = 13;
        auto batch = simulate_paths(cfg);
        McRules rules;
        rules.zeta = [](double, double b) { return b; };
        auto est = lsmc_solve_drbsde(batch, rules, {});
        CHECK(std::abs(est.value) < 5.0 * std::sqrt(1.0 / double(cfg.n_paths)));
        CHECK(est.std_error > 0.0);
    }

    SUBCASE("saturated two-point mode reproduces exact tree values") {
        auto m = LatticeModel::build({3, 0.25, 0.0, 0.5});
        auto law = DefaultLaw::none(m);
        auto bundle = build_azema(m, law);
        auto q = reweight_to_q(m, bundle);
        DRBSDEProblem prob;
        prob.zeta = FProcess::from(m, [&](int k, Path p) {
            return std::min(std::max(1.0 + 0.4 * m.walk(k, p), 0.85), 1.6);
        });
        prob.driver = DriverSpec::linear_const(m, 0.5, 0.0); // decay binds the lower barrier
        prob.has_lower = prob.has_upper = true;
        prob.lower = FProcess::constant(m, 0.8);
        prob.upper = FProcess::constant(m, 1.7);
        auto tree = solve_drbsde(m, q, prob);
        double kplus = 0.0;
        for (std::size_t sl = 0; sl < GIndex::level_size(3); ++sl)
            kplus = std::max(kplus, tree.Kplus.v[3][sl]);
        REQUIRE(kplus > 1e-6); // reflection genuinely active

        McConfig cfg;
        cfg.n_steps = 3;
        cfg.dt = 0.25;
        cfg.n_paths = 8 * 125; // whole lattice multiples
        cfg.seed = 17;
        cfg.two_point = true;
        auto batch = simulate_paths(cfg);
        McRules rules;
        rules.zeta = [](double, double b) { return std::min(std::max(1.0 + 0.4 * b, 0.85), 1.6); };
        rules.r = [](double, double) { return 0.5; };
        rules.lower = [](double, double) { return 0.8; };
        rules.upper = [](double, double) { return 1.7; };
        RegressionBasis basis;
        basis.kind = RegressionBasis::Kind::Piecewise;
        basis.saturated_two_point = true;
        auto est = lsmc_solve_drbsde(batch, rules, basis);
        CHECK(est.value == doctest::Approx(tree.Y.v[0][0]).epsilon(1e-9));
    }

    SUBCASE("two-point mode with sampled defaults stays within the sampling band") {
        auto m = LatticeModel::build({3, 0.25, 0.0, 0.5});
        auto lam = [](double t, double b) { return 0.4 + 0.2 * std::tanh(b + t); };
        auto law = DefaultLaw::from_hazard(m, [&](int k, Path p) {
            return 1.0 - std::exp(-lam(m.time(k), m.walk(k, p)) * m.dt());
        });
        auto bundle = build_azema(m, law);
        auto q = reweight_to_q(m, bundle);
        DRBSDEProblem prob;
        prob.zeta = FProcess::from(m, [&](int k, Path p) {
            return std::min(std::max(1.0 + 0.4 * m.walk(k, p), 0.85), 1.6);
        });
        prob.driver = DriverSpec::linear_const(m, 0.5, 0.0);
        prob.has_lower = prob.has_upper = true;
        prob.lower = FProcess::constant(m, 0.8);
        prob.upper = FProcess::constant(m, 1.7);
        auto tree = solve_drbsde(m, q, prob);

        McConfig cfg;
        cfg.n_steps = 3;
        cfg.dt = 0.25;
        cfg.n_paths = 200000;
        cfg.seed = 37;
        cfg.two_point = true;
        auto batch = simulate_paths(cfg);
        apply_cox_default(batch, {lam});
        McRules rules;
        rules.zeta = [](double, double b) { return std::min(std::max(1.0 + 0.4 * b, 0.85), 1.6); };
        rules.r = [](double, double) { return 0.5; };
        rules.lower = [](double, double) { return 0.8; };
        rules.upper = [](double, double) { return 1.7; };
        RegressionBasis basis;
        basis.kind = RegressionBasis::Kind::Piecewise;
        basis.saturated_two_point = true;
        auto est = lsmc_solve_drbsde(batch, rules, basis);
        CHECK(std::abs(est.value - tree.Y.v[0][0]) < 3.0 * est.std_error + 2e-3);
    }

    SUBCASE("penalised estimates approach the reflected estimate") {
        McConfig cfg;
        cfg.n_steps = 10;
        cfg.dt = 0.1;
        cfg.n_paths = 20000;
        cfg.seed = 19;
        auto batch = simulate_paths(cfg);
        McRules rules;
        rules.zeta = [](double, double b) { return std::min(std::max(0.4 * b, -0.5), 0.5); };
        rules.r = [](double, double) { return 0.6; }; // decay pushes into the lower barrier
        rules.lower = [](double, double) { return -0.25; };
        rules.upper = [](double, double) { return 0.55; };
        auto exact = lsmc_solve_drbsde(batch, rules, {});
        double prev = 1e9;
        for (double nn : {1.0, 10.0, 100.0, 1000.0}) {
            McRules pen = rules;
            pen.penalty = nn;
            auto est = lsmc_solve_drbsde(batch, pen, {});
            double gap = std::abs(est.value - exact.value);
            CHECK(gap <= prev + 1e-12);
            prev = gap;
        }
        CHECK(prev < 1e-3);
    }
}

TEST_CASE("price example against the closed form") {
    BsConfig cfg;
    cfg.s0 = 100.0;
    cfg.strike = 100.0;
    cfg.n_steps = 50;
    cfg.dt = 0.02;
    cfg.n_paths = 100000;
    cfg.seed = 23;
    cfg.r = [](double) { return 0.05; };
    cfg.mu = [](double) { return 0.05; }; // theta = 0
    cfg.sigma = [](double) { return 0.2; };

    SUBCASE("flat parameters match the closed form within three standard errors") {
        auto est = black_scholes_example(cfg);
        double oracle = bs_call(100.0, 100.0, 0.05, 0.2, 1.0);
        CHECK(oracle == doctest::Approx(10.4506).epsilon(1e-4)); // frozen reference value
        CHECK(std::abs(est.value - oracle) < 3.0 * est.std_error);
    }

    SUBCASE("piecewise-constant volatility matches the effective-variance closed form") {
        BsConfig c2 = cfg;
        c2.seed = 29;
        c2.sigma = [](double t) { return t > 0.5 ? 0.3 : 0.2; };
        auto est = black_scholes_example(c2);
        double eff = std::sqrt(0.5 * 0.04 + 0.5 * 0.09);
        double oracle = bs_call(100.0, 100.0, 0.05, eff, 1.0);
        CHECK(std::abs(est.value - oracle) < 3.0 * est.std_error);
    }

    SUBCASE("degenerate strike: the discounted forward, here the spot itself") {
        BsConfig c3 = cfg;
        c3.strike = 0.0;
        c3.seed = 31;
        auto est = black_scholes_example(c3);
        CHECK(std::abs(est.value - 100.0) < 3.0 * est.std_error + 0.05);
    }

    SUBCASE("volatility below the floor is rejected") {
        BsConfig c4 = cfg;
        c4.sigma = [](double) { return 1e-6; };
        CHECK_THROWS_AS(black_scholes_example(c4), DataError);
    }
}

TEST_CASE("rank-deficient polynomial design without ridge is rejected") {
    McConfig cfg;
    cfg.n_steps = 2;
    cfg.dt = 0.5;
    cfg.n_paths = 16;
    cfg.seed = 3;
    cfg.two_point = true; // two distinct states at step 1, cubic basis is singular
    auto batch = simulate_paths(cfg);
    McRules rules;
    rules.zeta = [](double, double b) { return b * b; };
    RegressionBasis basis;
    basis.order = 3;
    basis.ridge = 0.0;
    CHECK_THROWS_AS(lsmc_solve_drbsde(batch, rules, basis), NumericError);
}

TEST_CASE("basis sensitivity of the regression tier stays within the sampling band") {
    McConfig cfg;
    cfg.n_steps = 20;
    cfg.dt = 0.05;
    cfg.n_paths = 40000;
    cfg.seed = 41;
    auto batch = simulate_paths(cfg);
    apply_cox_default(batch, {[](double, double b) { return 0.3 + 0.1 * std::tanh(b); }});
    McRules rules;
    rules.zeta = [](double, double b) { return std::min(std::max(1.0 + 0.4 * b, 0.85), 1.6); };
    rules.r = [](double, double) { return 0.4; };
    rules.lower = [](double, double) { return 0.8; };
    rules.upper = [](double, double) { return 1.7; };
    RegressionBasis quad{RegressionBasis::Kind::Polynomial, 2, 1e-8, false};
    RegressionBasis cubic{RegressionBasis::Kind::Polynomial, 3, 1e-8, false};
    RegressionBasis bins{RegressionBasis::Kind::Piecewise, 24, 1e-8, false};
    auto a = lsmc_solve_drbsde(batch, rules, quad);
    auto b = lsmc_solve_drbsde(batch, rules, cubic);
    auto c = lsmc_solve_drbsde(batch, rules, bins);
    CHECK(std::abs(a.value - b.value) < 5.0 * (a.std_error + b.std_error) + 2e-3);
    CHECK(std::abs(a.value - c.value) < 5.0 * (a.std_error + c.std_error) + 5e-3);
}
