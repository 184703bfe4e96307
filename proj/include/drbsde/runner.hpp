#pragma once

#include "drbsde/scenario.hpp"

namespace drbsde {

struct CheckLine {
    std::string name; // the identity or inequality being verified
    bool pass = false;
    double measured = 0.0;
    double tolerance = 0.0;
};

struct RunReport {
    std::vector<CheckLine> checks;
    std::vector<std::string> artifacts; // files written
    std::vector<std::string> notes;
    bool ok() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

/// Executes one scenario, writing CSV artifacts under out_dir with the
/// scenario's output prefix. Deterministic: identical scenarios and seeds
/// produce byte-identical artifacts.
RunReport run_scenario(const Scenario& sc, const std::string& out_dir);

std::string format_g12(double x); // 12 significant digits, CSV convention

} // namespace drbsde
