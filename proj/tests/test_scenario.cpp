#include <doctest.h>

#include "drbsde/runner.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace drbsde;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool has_error_with(const ScenarioError& e, const std::string& needle) {
    for (const auto& msg : e.errors)
        if (msg.find(needle) != std::string::npos) return true;
    return false;
}

std::string tmpdir(const std::string& tag) {
    auto d = std::filesystem::temp_directory_path() / ("drbsde_test_" + tag);
    std::filesystem::create_directories(d);
    return d.string();
}

} // namespace

TEST_CASE("scenario parsing") {
    SUBCASE("minimal tree solve falls back to defaults") {
        auto sc = parse_scenario(R"({"run":"tree-solve",
            "model":{"kind":"lattice"},
            "terminal":{"kind":"constant","value":1.0}})");
        CHECK(sc.lattice.n_steps == 2);
        CHECK(sc.driver.kind == DriverForm::Kind::Zero);
        CHECK(sc.beta == 4.0);
    }

    SUBCASE("inverted barriers violate the separation hypothesis") {
        try {
            parse_scenario(R"({"run":"tree-solve",
                "model":{"kind":"lattice","n_steps":2,"dt":0.5},
                "terminal":{"kind":"constant","value":0.0},
                "barriers":{"lower":{"kind":"constant","value":0.5},
                            "upper":{"kind":"constant","value":-0.5}}})");
            FAIL("expected a validation error");
        } catch (const ScenarioError& e) {
            CHECK(has_error_with(e, "H3"));
            CHECK(has_error_with(e, "lower rule"));
            CHECK(has_error_with(e, "upper rule"));
        }
    }

    SUBCASE("non-positive late-payment penalty is rejected") {
        try {
            parse_scenario(R"({"run":"dynkin-oracle",
                "model":{"kind":"lattice","n_steps":2,"dt":0.5},
                "barriers":{"lower":{"kind":"constant","value":-1},
                            "upper":{"kind":"constant","value":1}},
                "game":{"qproc":{"kind":"constant","value":0},
                        "xi1":{"kind":"constant","value":0.5},
                        "xi2":{"kind":"constant","value":0.5}}})");
            FAIL("expected a validation error");
        } catch (const ScenarioError& e) {
            CHECK(has_error_with(e, "penalty must be positive"));
        }
    }

    SUBCASE("all problems are reported with their field paths") {
        try {
            parse_scenario(R"({"run":"nope","junk":1,
                "model":{"kind":"lattice","dt":"soon"},
                "driver":{"kind":"warp"}})");
            FAIL("expected a validation error");
        } catch (const ScenarioError& e) {
            CHECK(e.errors.size() >= 4);
            CHECK(has_error_with(e, "$.run"));
            CHECK(has_error_with(e, "$.junk"));
            CHECK(has_error_with(e, "$.model.dt"));
            CHECK(has_error_with(e, "$.driver.kind"));
        }
    }

    SUBCASE("missing run-specific fields are reported") {
        try {
            parse_scenario(R"({"run":"dynkin-oracle","model":{"kind":"lattice"}})");
            FAIL("expected a validation error");
        } catch (const ScenarioError& e) {
            CHECK(has_error_with(e, "$.game"));
        }
    }
}

TEST_CASE("scenario runs") {
    SUBCASE("trivial game solves to zero with clean reflection checks") {
        auto sc = load_scenario_file(std::string(SCENARIO_DIR) + "/trivial_game.json");
        auto rep = run_scenario(sc, tmpdir("trivial"));
        CHECK(rep.ok());
        bool found = false;
        for (const auto& n : rep.notes) found = found || n == "Y0 = 0";
        CHECK(found);
        bool sk = false;
        for (const auto& c : rep.checks) sk = sk || (c.name == "skorokhod-plus" && c.pass);
        CHECK(sk);
    }

    SUBCASE("oracle run reproduces the state value") {
        auto sc = load_scenario_file(std::string(SCENARIO_DIR) + "/dynkin_oracle.json");
        auto rep = run_scenario(sc, tmpdir("oracle"));
        CHECK(rep.ok());
    }

    SUBCASE("link sweep writes the convergence table") {
        auto sc = load_scenario_file(std::string(SCENARIO_DIR) + "/link_check.json");
        auto dir = tmpdir("link");
        auto rep = run_scenario(sc, dir);
        CHECK(rep.ok());
        auto csv = slurp(dir + "/link_check_link.csv");
        CHECK(csv.rfind("dt,max_error,node_count", 0) == 0);
        int rows = 0;
        for (char c : csv)
            if (c == '\n') ++rows;
        CHECK(rows == 5); // header + one row per refinement level
    }

    SUBCASE("artifacts are byte-identical across reruns") {
        auto sc = load_scenario_file(std::string(SCENARIO_DIR) + "/tree_basic.json");
        auto d1 = tmpdir("rerun_a"), d2 = tmpdir("rerun_b");
        run_scenario(sc, d1);
        run_scenario(sc, d2);
        CHECK(slurp(d1 + "/tree_basic_solution.csv") == slurp(d2 + "/tree_basic_solution.csv"));
        CHECK(!slurp(d1 + "/tree_basic_solution.csv").empty());
    }
}
