#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "drbsde/azema.hpp"
#include "drbsde/martingale.hpp"
#include "drbsde/measure.hpp"

#include <cmath>

using namespace drbsde;

namespace {

LatticeModel small(int n, double dt = 0.25) { return LatticeModel::build({n, dt, 0.0, 0.5}); }

// Brute-force conditional expectation at a base-tree node by direct atom
// enumeration; independent of the fold engine it cross-checks.
double brute_cond_f(const LatticeModel& m, const Measure& mu, const AtomValues& x, int k, Path p) {
    double num = 0.0, den = 0.0;
    for (Path w = 0; w < m.paths(); ++w) {
        if (LatticeModel::prefix(w, m.steps(), k) != p) continue;
        for (int d = 0; d <= m.steps(); ++d) {
            double wt = mu.atom_weight(w, d);
            num += wt * x[(std::size_t(d) << m.steps()) | w];
            den += wt;
        }
    }
    return num / den;
}

} // namespace

TEST_CASE("lattice construction") {
    auto m1 = LatticeModel::build({1, 1.0, 0.0, 0.5});
    CHECK(m1.paths() == 2);
    CHECK(m1.increment() == doctest::Approx(1.0));
    CHECK(m1.walk(1, 1) == doctest::Approx(1.0));
    CHECK(m1.walk(1, 0) == doctest::Approx(-1.0));

    auto m3 = LatticeModel::build({3, 0.25, 0.0, 0.5});
    CHECK(m3.paths() == 8);
    CHECK(m3.increment() == doctest::Approx(0.5));

    CHECK_THROWS_AS(LatticeModel::build({0, 1.0, 0.0, 0.5}), ConfigError);
    CHECK_THROWS_AS(LatticeModel::build({2, -1.0, 0.0, 0.5}), ConfigError);
    CHECK_THROWS_AS(LatticeModel::build({2, 1.0, 0.0, 1.5}), ConfigError);
}

TEST_CASE("no default mass gives the identity bundle") {
    auto m = small(3);
    auto b = build_azema(m, DefaultLaw::none(m));
    for (int k = 0; k <= 3; ++k) {
        for (Path p = 0; p < m.nodes(k); ++p) {
            CHECK(b.G.v[k][p] == doctest::Approx(1.0).epsilon(1e-14));
            CHECK(b.q.v[k][p] == doctest::Approx(0.0).epsilon(1e-14));
            CHECK(b.m.v[k][p] == doctest::Approx(1.0).epsilon(1e-14));
            CHECK(b.E.v[k][p] == doctest::Approx(1.0).epsilon(1e-14));
            CHECK(b.Etilde.v[k][p] == doctest::Approx(1.0).epsilon(1e-14));
        }
        for (std::size_t s = 0; s < m.nodes(k); ++s)
            CHECK(b.Psi.v[k][s] == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("one-step half mass: direct summation over the two atoms") {
    auto m = LatticeModel::build({1, 1.0, 0.0, 0.5});
    auto b = build_azema(m, DefaultLaw::deterministic(m, {0.5}));
    for (Path p = 0; p < 2; ++p) {
        CHECK(b.G.v[1][p] == doctest::Approx(0.5).epsilon(1e-14));
        CHECK(b.Gtilde.v[1][p] == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(b.q.v[1][p] == doctest::Approx(0.5).epsilon(1e-14));
        CHECK(b.Etilde.v[1][p] == doctest::Approx(0.5).epsilon(1e-14));
        CHECK(b.E.v[1][p] == doctest::Approx(1.0).epsilon(1e-14));
    }
    CHECK(b.G.v[0][0] == doctest::Approx(1.0)); // survival at time zero is one
}

TEST_CASE("assumption [P] violation is reported with the node") {
    auto m = LatticeModel::build({1, 1.0, 0.0, 0.5});
    CHECK_THROWS_AS(build_azema(m, DefaultLaw::deterministic(m, {1.0})), AssumptionPError);
}

TEST_CASE("azema identities on randomized path-dependent laws") {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        int n = 2 + int(seed % 4);
        auto m = small(n, 0.2);
        auto law = DefaultLaw::random(m, seed);
        auto b = build_azema(m, law);
        auto p = Measure::physical(m, law);

        for (int k = 0; k <= n; ++k) {
            for (Path pf = 0; pf < m.nodes(k); ++pf) {
                CHECK(std::abs(b.Gtilde.v[k][pf] - b.G.v[k][pf] - b.q.v[k][pf]) < 1e-12);
                CHECK(std::abs(b.G.v[k][pf] - b.E.v[k][pf] * b.Etilde.v[k][pf]) < 1e-12);
                CHECK(b.Etilde.v[k][pf] > 0.0);
                CHECK(b.Etilde.v[k][pf] <= 1.0 + 1e-15);
                CHECK(b.E.v[k][pf] > 0.0);
            }
        }
        CHECK(martingale_defect_f(m, p, b.m) < 1e-12);
        CHECK(martingale_defect_g(m, p, b.Psi) < 1e-12);
        for (int k = 0; k <= n; ++k)
            for (std::size_t s = 0; s < GIndex::level_size(k); ++s)
                CHECK(b.Psi.v[k][s] > 0.0);
    }
}

TEST_CASE("conditional expectation: constants, walk martingale, survival cross-check") {
    auto m = small(3);
    auto law = DefaultLaw::random(m, 7);
    auto b = build_azema(m, law);
    auto p = Measure::physical(m, law);
    const int n = m.steps();

    AtomValues c(GIndex::level_size(n), 3.25);
    auto cf = cond_expect_f(m, p, c);
    for (int k = 0; k <= n; ++k)
        for (Path pf = 0; pf < m.nodes(k); ++pf) CHECK(cf.v[k][pf] == doctest::Approx(3.25));

    AtomValues bn(GIndex::level_size(n));
    for (Path w = 0; w < m.paths(); ++w)
        for (int d = 0; d <= n; ++d) bn[(std::size_t(d) << n) | w] = m.walk(n, w);
    auto bf = cond_expect_f(m, p, bn);
    for (int k = 0; k <= n; ++k)
        for (Path pf = 0; pf < m.nodes(k); ++pf)
            CHECK(bf.v[k][pf] == doctest::Approx(m.walk(k, pf)).epsilon(1e-13));

    for (int k = 0; k <= n; ++k) {
        AtomValues alive(GIndex::level_size(n), 0.0);
        for (Path w = 0; w < m.paths(); ++w)
            for (int d = 0; d <= n; ++d)
                if (d == 0 || d > k) alive[(std::size_t(d) << n) | w] = 1.0;
        auto g = cond_expect_f(m, p, alive);
        for (Path pf = 0; pf < m.nodes(k); ++pf)
            CHECK(std::abs(g.v[k][pf] - b.G.v[k][pf]) < 1e-13);
    }
}

TEST_CASE("tower property and brute-force agreement of the fold engine") {
    auto m = small(4, 0.3);
    auto law = DefaultLaw::random(m, 11);
    auto b = build_azema(m, law);
    auto q = reweight_to_q(m, b);
    const int n = m.steps();

    AtomValues x(GIndex::level_size(n));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(0.37 * double(i)) + 0.1 * double(i % 5);

    auto full = cond_expect_g(m, q, x);
    // tower: conditioning the step-3 values viewed as atoms reproduces step 2
    for (int k = 0; k + 1 <= n; ++k) {
        const auto& wk = q.gmass(k);
        const auto& wk1 = q.gmass(k + 1);
        for (std::size_t s = 0; s < wk.size(); ++s) {
            if (wk[s] <= 0.0) continue;
            double acc = 0.0;
            for (std::size_t c = 0; c < wk1.size(); ++c)
                if (wk1[c] > 0.0 && GIndex::parent(k + 1, c) == s) acc += wk1[c] * full.v[k + 1][c];
            CHECK(std::abs(acc / wk[s] - full.v[k][s]) < 1e-12);
        }
    }

    auto ff = cond_expect_f(m, q, x);
    for (int k = 0; k <= n; ++k)
        for (Path pf = 0; pf < m.nodes(k); ++pf)
            CHECK(ff.v[k][pf] == doctest::Approx(brute_cond_f(m, q, x, k, pf)).epsilon(1e-12));
}

TEST_CASE("tilted measure: identity cases and the stopped-walk martingale") {
    auto m = small(2, 0.5);

    SUBCASE("no default mass: same measure atom by atom") {
        auto b = build_azema(m, DefaultLaw::none(m));
        auto q = reweight_to_q(m, b);
        auto p = Measure::physical(m, b.law);
        for (Path w = 0; w < m.paths(); ++w)
            for (int d = 0; d <= 2; ++d)
                CHECK(q.atom_weight(w, d) == doctest::Approx(p.atom_weight(w, d)).epsilon(1e-14));
    }

    SUBCASE("deterministic masses: density is identically one") {
        auto b = build_azema(m, DefaultLaw::deterministic(m, {0.2, 0.3}));
        auto q = reweight_to_q(m, b);
        auto p = Measure::physical(m, b.law);
        for (Path w = 0; w < m.paths(); ++w)
            for (int d = 0; d <= 2; ++d)
                CHECK(q.atom_weight(w, d) == doctest::Approx(p.atom_weight(w, d)).epsilon(1e-14));
    }

    SUBCASE("path-dependent masses: exact martingale property under the tilt") {
        auto law = DefaultLaw::random(m, 3);
        auto b = build_azema(m, law);
        auto q = reweight_to_q(m, b);
        CHECK(std::abs(q.total_mass() - 1.0) < 1e-12);
        CHECK(q.equivalent_to(Measure::physical(m, law)));
        CHECK(stopped_walk_defect(m, q) < 1e-12);
        CHECK(stopped_walk_bracket_defect(m, q) == 0.0);
        // under the reference measure the stopped walk is NOT a martingale
        auto p = Measure::physical(m, law);
        CHECK(stopped_walk_defect(m, p) > 1e-6);
        CHECK(martingale_defect_g(m, q, stopped_walk(m)) < 1e-12);
    }
}

TEST_CASE("deflator transform of base martingales") {
    auto m = small(2, 0.5);

    SUBCASE("constants pass through") {
        auto law = DefaultLaw::random(m, 5);
        auto b = build_azema(m, law);
        auto t = operator_t(m, b, FProcess::constant(m, 4.0));
        for (int k = 0; k <= 2; ++k)
            for (std::size_t s = 0; s < GIndex::level_size(k); ++s)
                CHECK(t.v[k][s] == doctest::Approx(4.0).epsilon(1e-14));
    }

    SUBCASE("no default mass: the walk itself") {
        auto b = build_azema(m, DefaultLaw::none(m));
        auto walkF = FProcess::from(m, [&](int k, Path p) { return m.walk(k, p); });
        auto t = operator_t(m, b, walkF);
        for (int k = 0; k <= 2; ++k)
            for (Path p = 0; p < m.nodes(k); ++p)
                CHECK(t.v[k][GIndex::slot(k, 0, p)] == doctest::Approx(m.walk(k, p)).epsilon(1e-14));
    }

    SUBCASE("walk input: enlarged-tree martingale under the reference measure") {
        for (std::uint64_t seed = 21; seed <= 24; ++seed) {
            auto law = DefaultLaw::random(m, seed);
            auto b = build_azema(m, law);
            auto p = Measure::physical(m, law);
            auto walkF = FProcess::from(m, [&](int k, Path pf) { return m.walk(k, pf); });
            auto t = operator_t(m, b, walkF);
            CHECK(martingale_defect_g(m, p, t) < 1e-12);
            // the transform plus the finite-variation correction rebuilds the stopped walk
            auto bw = stopped_walk(m);
            for (int k = 1; k <= 2; ++k) {
                for (std::size_t s = 0; s < GIndex::level_size(k); ++s) {
                    if (!p.g_reachable(k, s)) continue;
                    int st = GIndex::status_of(k, s);
                    Path pf = GIndex::prefix_of(k, s);
                    double corr = 0.0;
                    int lim = st == 0 ? k : st;
                    for (int j = 1; j <= lim; ++j) {
                        Path pj = LatticeModel::prefix(pf, k, j);
                        double dB = m.walk(j, pj) - m.walk(j - 1, pj >> 1);
                        double dm = b.m.v[j][pj] - b.m.v[j - 1][pj >> 1];
                        corr += dB * dm / b.Gtilde.v[j][pj];
                    }
                    CHECK(std::abs(t.v[k][s] + corr - bw.v[k][s]) < 1e-12);
                }
            }
        }
    }

    SUBCASE("non-martingale input is rejected") {
        auto law = DefaultLaw::random(m, 9);
        auto b = build_azema(m, law);
        auto drift = FProcess::from(m, [&](int k, Path p) { return m.walk(k, p) + 0.1 * k; });
        CHECK_THROWS_AS(operator_t(m, b, drift), HypothesisError);
    }
}

TEST_CASE("martingale representation against the stopped walk") {
    auto m = small(2, 0.5);

    SUBCASE("the stopped walk itself: unit integrand, no residual") {
        auto law = DefaultLaw::random(m, 13);
        auto b = build_azema(m, law);
        auto q = reweight_to_q(m, b);
        auto d = martingale_decompose(m, q, stopped_walk(m));
        for (int k = 0; k < 2; ++k)
            for (std::size_t s = 0; s < m.nodes(k); ++s)
                if (q.g_reachable(k, s)) CHECK(d.integrand.v[k][s] == doctest::Approx(1.0).epsilon(1e-12));
        for (int k = 0; k <= 2; ++k)
            for (std::size_t s = 0; s < GIndex::level_size(k); ++s)
                if (q.g_reachable(k, s)) CHECK(std::abs(d.orthogonal.v[k][s]) < 1e-12);
    }

    SUBCASE("default indicator under deterministic masses: pure orthogonal part") {
        auto b = build_azema(m, DefaultLaw::deterministic(m, {0.25, 0.25}));
        auto q = reweight_to_q(m, b);
        AtomValues ind(GIndex::level_size(2), 0.0);
        for (Path w = 0; w < m.paths(); ++w)
            for (int d = 1; d <= 2; ++d) ind[(std::size_t(d) << 2) | w] = 1.0;
        auto x = cond_expect_g(m, q, ind);
        auto d = martingale_decompose(m, q, x);
        double resid = 0.0;
        for (int k = 0; k < 2; ++k)
            for (std::size_t s = 0; s < m.nodes(k); ++s)
                if (q.g_reachable(k, s)) resid = std::max(resid, std::abs(d.integrand.v[k][s]));
        CHECK(resid < 1e-13);
        // the orthogonal part carries the default jump
        CHECK(std::abs(d.orthogonal.v[1][GIndex::slot(1, 1, 0)]) > 0.1);
        CHECK(martingale_defect_g(m, q, d.orthogonal) < 1e-12);
    }

    SUBCASE("constants decompose trivially; conditional orthogonality holds generally") {
        auto law = DefaultLaw::random(m, 17);
        auto b = build_azema(m, law);
        auto q = reweight_to_q(m, b);
        auto d0 = martingale_decompose(m, q, GProcess(m, 2.0));
        for (int k = 0; k < 2; ++k)
            for (std::size_t s = 0; s < GIndex::level_size(k); ++s)
                CHECK(std::abs(d0.integrand.v[k][s]) < 1e-14);

        // stopped terminal variable: a function of (default step, path to it)
        AtomValues x(GIndex::level_size(2));
        for (Path w = 0; w < m.paths(); ++w) {
            x[w] = std::cos(1.1 * m.walk(2, w));
            for (int d = 1; d <= 2; ++d)
                x[(std::size_t(d) << 2) | w] =
                    0.4 * d + std::cos(1.1 * m.walk(d, LatticeModel::prefix(w, 2, d)));
        }
        auto mart = cond_expect_g(m, q, x);
        auto d = martingale_decompose(m, q, mart);
        CHECK(martingale_defect_g(m, q, d.orthogonal) < 1e-12);
        // E[dM dB | node] = 0 at every positive-mass node
        for (int k = 0; k < 2; ++k) {
            const auto& wk = q.gmass(k);
            const auto& wk1 = q.gmass(k + 1);
            for (std::size_t s = 0; s < wk.size(); ++s) {
                if (wk[s] <= 0.0 || GIndex::status_of(k, s) != 0) continue;
                Path pf = GIndex::prefix_of(k, s);
                double acc = 0.0;
                for (int bb = 0; bb < 2; ++bb) {
                    Path cp = LatticeModel::child(pf, bb);
                    for (int st : {0, k + 1}) {
                        std::size_t c = GIndex::slot(k + 1, st, cp);
                        if (wk1[c] > 0.0)
                            acc += wk1[c] * (d.orthogonal.v[k + 1][c] - d.orthogonal.v[k][s]) *
                                   m.move(bb);
                    }
                }
                CHECK(std::abs(acc / wk[s]) < 1e-12);
            }
        }
    }
}

TEST_CASE("undefined-node access is rejected") {
    auto m = small(2, 0.5);
    auto b = build_azema(m, DefaultLaw::none(m)); // defaulted nodes unreachable
    auto q = reweight_to_q(m, b);
    AtomValues x(GIndex::level_size(2), 1.0);
    auto g = cond_expect_g(m, q, x);
    CHECK_THROWS_AS(value_at(g, q, 1, GIndex::slot(1, 1, 0)), UndefinedNodeError);
}

TEST_CASE("default-law construction and measurability flags") {
    auto m = LatticeModel::build({3, 0.25, 0.0, 0.5});

    SUBCASE("hazard-built laws are measurable step by step") {
        auto law = DefaultLaw::from_hazard(
            m, [&](int k, Path p) { return 0.1 + 0.05 * (m.walk(k, p) > 0 ? 1 : 0); });
        law.validate();
        CHECK(law.immersion_like());
        CHECK(!law.deterministic_masses());
    }

    SUBCASE("randomized laws are generally not measurable early") {
        auto law = DefaultLaw::random(m, 99);
        law.validate();
        CHECK(!law.immersion_like());
    }

    SUBCASE("deterministic laws are both") {
        auto law = DefaultLaw::deterministic(m, {0.1, 0.2, 0.3});
        CHECK(law.immersion_like());
        CHECK(law.deterministic_masses());
    }

    SUBCASE("bad rows are rejected") {
        std::vector<std::vector<double>> rows(m.paths(), {0.5, 0.5, 0.5, 0.5});
        CHECK_THROWS_AS(DefaultLaw::from_table(m, rows), DataError);
        CHECK_THROWS_AS(DefaultLaw::deterministic(m, {0.7, 0.7, 0.7}), ConfigError);
    }
}
