#include "drbsde/scenario.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace drbsde {

using nlohmann::json;

double Rule::operator()(double t, double x) const {
    switch (kind) {
    case Kind::Constant: return value;
    case Kind::Affine: return a + b * x;
    case Kind::AffineT: return a + b * x + c * t;
    case Kind::Call: return std::max(s0 * std::exp(x) - strike, 0.0);
    case Kind::ClampedAffine: return std::min(std::max(a + b * x, lo), hi);
    }
    return 0.0;
}

namespace {

struct Collector {
    std::vector<std::string> errors;
    void add(const std::string& path, const std::string& msg) { errors.push_back(path + ": " + msg); }
    void finish() {
        if (!errors.empty()) throw ScenarioError(std::move(errors));
    }
};

void check_keys(Collector& col, const json& j, const std::string& path,
                const std::set<std::string>& allowed) {
    if (!j.is_object()) return;
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) col.add(path + "." + it.key(), "unknown key");
}

double num(Collector& col, const json& j, const std::string& path, const std::string& key,
           double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) {
        col.add(path + "." + key, "expected a number");
        return fallback;
    }
    return j[key].get<double>();
}

Rule parse_rule(Collector& col, const json& j, const std::string& path) {
    Rule r;
    if (j.is_number()) { // shorthand for a constant
        r.kind = Rule::Kind::Constant;
        r.value = j.get<double>();
        return r;
    }
    if (!j.is_object()) {
        col.add(path, "expected a rule object or a number");
        return r;
    }
    check_keys(col, j, path, {"kind", "value", "a", "b", "c", "lo", "hi", "s0", "strike"});
    std::string kind = j.value("kind", "constant");
    if (kind == "constant") {
        r.kind = Rule::Kind::Constant;
        r.value = num(col, j, path, "value", 0.0);
    } else if (kind == "affine") {
        r.kind = Rule::Kind::Affine;
        r.a = num(col, j, path, "a", 0.0);
        r.b = num(col, j, path, "b", 0.0);
    } else if (kind == "affine_t") {
        r.kind = Rule::Kind::AffineT;
        r.a = num(col, j, path, "a", 0.0);
        r.b = num(col, j, path, "b", 0.0);
        r.c = num(col, j, path, "c", 0.0);
    } else if (kind == "call") {
        r.kind = Rule::Kind::Call;
        r.s0 = num(col, j, path, "s0", 100.0);
        r.strike = num(col, j, path, "strike", 100.0);
    } else if (kind == "clamped_affine") {
        r.kind = Rule::Kind::ClampedAffine;
        r.a = num(col, j, path, "a", 0.0);
        r.b = num(col, j, path, "b", 0.0);
        r.lo = num(col, j, path, "lo", -1.0);
        r.hi = num(col, j, path, "hi", 1.0);
        if (r.lo > r.hi) col.add(path, "clamp bounds inverted");
    } else {
        col.add(path + ".kind", "unknown rule kind '" + kind + "'");
    }
    return r;
}

} // namespace

Scenario parse_scenario(const std::string& text) {
    Collector col;
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        col.add("$", std::string("not valid JSON: ") + e.what());
        col.finish();
    }
    Scenario sc;
    check_keys(col, j, "$",
               {"run", "output", "seed", "threads", "model", "default_law", "driver", "terminal",
                "barriers", "beta", "theta", "game", "penalty", "refine", "mc", "bs",
                "tolerances"});

    std::string run = j.value("run", "");
    if (run == "tree-solve") sc.run = RunKind::TreeSolve;
    else if (run == "penalize") sc.run = RunKind::Penalize;
    else if (run == "link-check") sc.run = RunKind::LinkCheck;
    else if (run == "dynkin-oracle") sc.run = RunKind::DynkinOracle;
    else if (run == "saddle-verify") sc.run = RunKind::SaddleVerify;
    else if (run == "mc-solve") sc.run = RunKind::McSolve;
    else if (run == "example-bs") sc.run = RunKind::ExampleBs;
    else col.add("$.run", "must be one of tree-solve, penalize, link-check, dynkin-oracle, "
                          "saddle-verify, mc-solve, example-bs");

    sc.output = j.value("output", "run");
    sc.seed = j.value("seed", std::uint64_t(42));
    sc.threads = int(num(col, j, "$", "threads", 1));

    bool mc_run = sc.run == RunKind::McSolve || sc.run == RunKind::ExampleBs;
    if (j.contains("model")) {
        const json& m = j["model"];
        check_keys(col, m, "$.model",
                   {"kind", "n_steps", "dt", "increment", "up_prob", "n_paths", "two_point"});
        std::string kind = m.value("kind", mc_run ? "mc" : "lattice");
        if (kind == "lattice") {
            sc.lattice.n_steps = int(num(col, m, "$.model", "n_steps", 2));
            sc.lattice.dt = num(col, m, "$.model", "dt", 0.25);
            sc.lattice.increment = num(col, m, "$.model", "increment", 0.0);
            sc.lattice.up_prob = num(col, m, "$.model", "up_prob", 0.5);
            if (sc.lattice.n_steps < 1) col.add("$.model.n_steps", "must be >= 1");
            if (!(sc.lattice.dt > 0)) col.add("$.model.dt", "must be positive");
            if (!(sc.lattice.up_prob > 0 && sc.lattice.up_prob < 1))
                col.add("$.model.up_prob", "must lie in (0,1)");
        } else if (kind == "mc") {
            sc.mc.n_steps = int(num(col, m, "$.model", "n_steps", 50));
            sc.mc.dt = num(col, m, "$.model", "dt", 0.02);
            sc.mc.n_paths = std::int64_t(num(col, m, "$.model", "n_paths", 100000));
            sc.mc.two_point = m.value("two_point", false);
            if (sc.mc.n_paths < 1) col.add("$.model.n_paths", "must be >= 1");
        } else {
            col.add("$.model.kind", "must be lattice or mc");
        }
    } else if (sc.run != RunKind::ExampleBs) {
        col.add("$.model", "required for this run kind");
    }
    sc.mc.seed = sc.seed;
    sc.mc.threads = sc.threads;

    if (j.contains("default_law")) {
        const json& l = j["default_law"];
        check_keys(col, l, "$.default_law", {"kind", "h", "a", "b", "floor", "cap", "table"});
        std::string kind = l.value("kind", "none");
        if (kind == "none") sc.law.kind = LawSpec::Kind::None;
        else if (kind == "deterministic") {
            sc.law.kind = LawSpec::Kind::Deterministic;
            if (!l.contains("h") || !l["h"].is_array())
                col.add("$.default_law.h", "deterministic law needs a mass array");
            else
                for (const auto& x : l["h"]) sc.law.h.push_back(x.get<double>());
        } else if (kind == "hazard_of_path") {
            if (l.contains("table")) {
                sc.law.kind = LawSpec::Kind::HazardTable;
                for (const auto& row : l["table"]) {
                    sc.law.table.emplace_back();
                    for (const auto& x : row) sc.law.table.back().push_back(x.get<double>());
                }
            } else {
                sc.law.kind = LawSpec::Kind::HazardRule;
                sc.law.a = num(col, l, "$.default_law", "a", 0.2);
                sc.law.b = num(col, l, "$.default_law", "b", 0.0);
                sc.law.floor = num(col, l, "$.default_law", "floor", 0.0);
                sc.law.cap = num(col, l, "$.default_law", "cap", 0.95);
                if (!(sc.law.cap < 1.0)) col.add("$.default_law.cap", "must be < 1");
            }
        } else if (kind == "cox") {
            sc.law.kind = LawSpec::Kind::Cox;
            sc.law.a = num(col, l, "$.default_law", "a", 0.0);
            sc.law.b = num(col, l, "$.default_law", "b", 0.0);
        } else {
            col.add("$.default_law.kind",
                    "must be none, deterministic, hazard_of_path or cox");
        }
    }

    if (j.contains("driver")) {
        const json& d = j["driver"];
        check_keys(col, d, "$.driver", {"kind", "g", "r", "theta", "epsilon"});
        std::string kind = d.value("kind", "zero");
        sc.driver.epsilon = num(col, d, "$.driver", "epsilon", 1e-2);
        if (kind == "zero") sc.driver.kind = DriverForm::Kind::Zero;
        else if (kind == "gtable") {
            sc.driver.kind = DriverForm::Kind::GTable;
            if (d.contains("g")) sc.driver.g = parse_rule(col, d["g"], "$.driver.g");
            else col.add("$.driver.g", "gtable driver needs a g rule");
        } else if (kind == "linear") {
            sc.driver.kind = DriverForm::Kind::Linear;
            if (d.contains("r")) sc.driver.r = parse_rule(col, d["r"], "$.driver.r");
            if (d.contains("theta")) sc.driver.theta = parse_rule(col, d["theta"], "$.driver.theta");
        } else {
            col.add("$.driver.kind", "must be zero, gtable or linear");
        }
    }

    if (j.contains("terminal")) sc.terminal = parse_rule(col, j["terminal"], "$.terminal");
    else if (sc.run != RunKind::ExampleBs && sc.run != RunKind::DynkinOracle &&
             sc.run != RunKind::SaddleVerify)
        col.add("$.terminal", "required for this run kind");

    if (j.contains("barriers")) {
        const json& b = j["barriers"];
        check_keys(col, b, "$.barriers", {"lower", "upper"});
        if (b.contains("lower")) sc.lower = parse_rule(col, b["lower"], "$.barriers.lower");
        if (b.contains("upper")) sc.upper = parse_rule(col, b["upper"], "$.barriers.upper");
    }

    sc.beta = num(col, j, "$", "beta", 4.0);
    sc.theta = int(num(col, j, "$", "theta", 0));

    if (j.contains("game")) {
        const json& g = j["game"];
        check_keys(col, g, "$.game", {"qproc", "xi1", "xi2"});
        GameForm gf;
        if (g.contains("qproc")) gf.qproc = parse_rule(col, g["qproc"], "$.game.qproc");
        else col.add("$.game.qproc", "required");
        if (g.contains("xi1")) gf.xi1 = parse_rule(col, g["xi1"], "$.game.xi1");
        else col.add("$.game.xi1", "required");
        if (g.contains("xi2")) gf.xi2 = parse_rule(col, g["xi2"], "$.game.xi2");
        else col.add("$.game.xi2", "required");
        sc.game = gf;
    } else if (sc.run == RunKind::DynkinOracle || sc.run == RunKind::SaddleVerify) {
        col.add("$.game", "required for game run kinds");
    }

    if (j.contains("penalty")) {
        const json& p = j["penalty"];
        check_keys(col, p, "$.penalty", {"levels", "mode"});
        if (p.contains("levels")) {
            sc.penalty_levels.clear();
            for (const auto& x : p["levels"]) sc.penalty_levels.push_back(x.get<double>());
        }
        std::string mode = p.value("mode", "double");
        if (mode == "lower") sc.penalty_mode = PenaltyMode::Lower;
        else if (mode == "upper") sc.penalty_mode = PenaltyMode::Upper;
        else if (mode == "double") sc.penalty_mode = PenaltyMode::Double;
        else col.add("$.penalty.mode", "must be lower, upper or double");
    }

    if (j.contains("refine")) {
        const json& r = j["refine"];
        check_keys(col, r, "$.refine", {"levels"});
        if (r.contains("levels")) {
            sc.refine_levels.clear();
            for (const auto& x : r["levels"]) sc.refine_levels.push_back(x.get<int>());
        }
    }

    if (j.contains("mc")) {
        const json& m = j["mc"];
        check_keys(col, m, "$.mc", {"basis"});
        if (m.contains("basis")) {
            const json& b = m["basis"];
            check_keys(col, b, "$.mc.basis", {"kind", "order", "ridge", "saturated"});
            std::string kind = b.value("kind", "polynomial");
            if (kind == "polynomial") sc.basis.kind = RegressionBasis::Kind::Polynomial;
            else if (kind == "piecewise") sc.basis.kind = RegressionBasis::Kind::Piecewise;
            else col.add("$.mc.basis.kind", "must be polynomial or piecewise");
            sc.basis.order = int(num(col, b, "$.mc.basis", "order", 2));
            sc.basis.ridge = num(col, b, "$.mc.basis", "ridge", 1e-8);
            sc.basis.saturated_two_point = b.value("saturated", false);
            if (sc.basis.order < 0) col.add("$.mc.basis.order", "must be >= 0");
        }
    }

    if (j.contains("bs")) {
        const json& b = j["bs"];
        check_keys(col, b, "$.bs",
                   {"s0", "strike", "r", "mu", "sigma", "sigma_min", "n_steps", "dt", "n_paths"});
        sc.bs.s0 = num(col, b, "$.bs", "s0", 100.0);
        sc.bs.strike = num(col, b, "$.bs", "strike", 100.0);
        double r = num(col, b, "$.bs", "r", 0.05);
        double mu = num(col, b, "$.bs", "mu", 0.05);
        double sg = num(col, b, "$.bs", "sigma", 0.2);
        sc.bs.r = [r](double) { return r; };
        sc.bs.mu = [mu](double) { return mu; };
        sc.bs.sigma = [sg](double) { return sg; };
        sc.bs.sigma_min = num(col, b, "$.bs", "sigma_min", 1e-4);
        sc.bs.n_steps = int(num(col, b, "$.bs", "n_steps", 50));
        sc.bs.dt = num(col, b, "$.bs", "dt", 0.02);
        sc.bs.n_paths = std::int64_t(num(col, b, "$.bs", "n_paths", 100000));
    }
    sc.bs.seed = sc.seed;
    sc.bs.threads = sc.threads;

    if (j.contains("tolerances")) {
        const json& t = j["tolerances"];
        check_keys(col, t, "$.tolerances", {"exact", "value", "penalty"});
        sc.tol_exact = num(col, t, "$.tolerances", "exact", sc.tol_exact);
        sc.tol_value = num(col, t, "$.tolerances", "value", sc.tol_value);
        sc.tol_penalty = num(col, t, "$.tolerances", "penalty", sc.tol_penalty);
    }

    // cross-field validation on small models where rules can be evaluated
    if (col.errors.empty() && !mc_run) {
        auto m = LatticeModel::build(sc.lattice);
        if (sc.lower && sc.upper) {
            for (int k = 0; k < m.steps(); ++k)
                for (Path p = 0; p < m.nodes(k); ++p) {
                    double lo = (*sc.lower)(m.time(k), m.walk(k, p));
                    double hi = (*sc.upper)(m.time(k), m.walk(k, p));
                    if (!(lo < hi - 1e-12)) {
                        col.add("$.barriers", "lower rule meets the upper rule at step " +
                                                  std::to_string(k) + " (H3)");
                        k = m.steps();
                        break;
                    }
                }
        }
        if (sc.game) {
            for (Path w = 0; w < m.paths(); ++w) {
                double t = m.horizon(), x = m.walk(m.steps(), w);
                if (!(sc.game->xi2(t, x) > sc.game->xi1(t, x))) {
                    col.add("$.game", "penalty must be positive: xi2 <= xi1 on some path");
                    break;
                }
            }
        }
    }

    col.finish();
    return sc;
}

Scenario load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str());
}

DefaultLaw build_law(const LatticeModel& m, const LawSpec& spec, double) {
    switch (spec.kind) {
    case LawSpec::Kind::None: return DefaultLaw::none(m);
    case LawSpec::Kind::Deterministic: return DefaultLaw::deterministic(m, spec.h);
    case LawSpec::Kind::HazardRule:
        return DefaultLaw::from_hazard(m, [&](int k, Path p) {
            double pi = (spec.a + spec.b * m.walk(k, p)) * m.dt();
            return std::min(std::max(pi, spec.floor), spec.cap);
        });
    case LawSpec::Kind::HazardTable: return DefaultLaw::from_table(m, spec.table);
    case LawSpec::Kind::Cox:
        return DefaultLaw::from_hazard(m, [&](int k, Path p) {
            double lam = std::max(spec.a + spec.b * m.walk(k, p), 0.0);
            return 1.0 - std::exp(-lam * m.dt());
        });
    }
    return DefaultLaw::none(m);
}

FProcess build_process(const LatticeModel& m, const Rule& rule) {
    return FProcess::from(m, [&](int k, Path p) { return rule(m.time(k), m.walk(k, p)); });
}

DriverSpec build_driver(const LatticeModel& m, const DriverForm& form) {
    switch (form.kind) {
    case DriverForm::Kind::Zero: return DriverSpec::zero(m, form.epsilon);
    case DriverForm::Kind::GTable:
        return DriverSpec::g_table(m, build_process(m, form.g), form.epsilon);
    case DriverForm::Kind::Linear:
        return DriverSpec::linear(m, build_process(m, form.r), build_process(m, form.theta),
                                  form.epsilon);
    }
    return DriverSpec::zero(m, form.epsilon);
}

} // namespace drbsde
