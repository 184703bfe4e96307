#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace drbsde {

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct DataError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct HypothesisError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Path = std::uint32_t;

struct LatticeConfig {
    int n_steps = 2;
    double dt = 0.25;
    double increment = 0.0; // 0 -> sqrt(dt)
    double up_prob = 0.5;
};

/// Non-recombining binomial path tree driving the base filtration.
///
/// A terminal path is an N-bit word, most significant bit first, so the
/// node reached at step k along a path is `path >> (N - k)`. Bit 1 is an
/// up move of `increment`, bit 0 a down move of the same size.
class LatticeModel {
public:
    static LatticeModel build(const LatticeConfig& cfg) {
        if (cfg.n_steps < 1)
            throw ConfigError("lattice: n_steps must be >= 1, got " + std::to_string(cfg.n_steps));
        if (cfg.n_steps > 24)
            throw ConfigError("lattice: n_steps above 24 not representable as a full path tree");
        if (!(cfg.dt > 0.0))
            throw ConfigError("lattice: dt must be positive");
        if (!(cfg.up_prob > 0.0 && cfg.up_prob < 1.0))
            throw ConfigError("lattice: up_prob must lie in (0,1)");
        double incr = cfg.increment > 0.0 ? cfg.increment : std::sqrt(cfg.dt);
        return LatticeModel(cfg.n_steps, cfg.dt, incr, cfg.up_prob);
    }

    int steps() const { return n_; }
    double dt() const { return dt_; }
    double increment() const { return incr_; }
    double up_prob() const { return p_; }
    double horizon() const { return n_ * dt_; }
    double time(int k) const { return k * dt_; }

    std::size_t paths() const { return std::size_t(1) << n_; }
    std::size_t nodes(int k) const { return std::size_t(1) << k; }

    static Path prefix(Path path_or_prefix, int from_step, int to_step) {
        return path_or_prefix >> (from_step - to_step);
    }
    static int bit(Path prefix, int step, int j) { // j-th move (1-based), j <= step
        return int((prefix >> (step - j)) & 1u);
    }
    static Path child(Path prefix, int b) { return (prefix << 1) | Path(b); }

    double move(int b) const { return b ? incr_ : -incr_; }
    double bit_prob(int b) const { return b ? p_ : 1.0 - p_; }

    /// Walk value B_{t_k} at a step-k node.
    double walk(int k, Path prefix) const {
        int ups = 0;
        for (int j = 1; j <= k; ++j) ups += bit(prefix, k, j);
        return (2 * ups - k) * incr_;
    }

    /// Reference-measure probability of a step-k node.
    double node_prob(int k, Path prefix) const {
        int ups = 0;
        for (int j = 1; j <= k; ++j) ups += bit(prefix, k, j);
        return std::pow(p_, ups) * std::pow(1.0 - p_, k - ups);
    }
    double path_prob(Path path) const { return node_prob(n_, path); }

private:
    LatticeModel(int n, double dt, double incr, double p) : n_(n), dt_(dt), incr_(incr), p_(p) {}
    int n_;
    double dt_;
    double incr_;
    double p_;
};

/// Adapted process on the base-filtration tree: one value per step-k node.
struct FProcess {
    std::vector<std::vector<double>> v;

    FProcess() = default;
    explicit FProcess(const LatticeModel& m) {
        v.resize(m.steps() + 1);
        for (int k = 0; k <= m.steps(); ++k) v[k].assign(m.nodes(k), 0.0);
    }
    static FProcess constant(const LatticeModel& m, double c) {
        FProcess f(m);
        for (auto& lvl : f.v)
            for (auto& x : lvl) x = c;
        return f;
    }
    template <class Fn> // fn(k, prefix) -> value
    static FProcess from(const LatticeModel& m, Fn&& fn) {
        FProcess f(m);
        for (int k = 0; k <= m.steps(); ++k)
            for (Path p = 0; p < m.nodes(k); ++p) f.v[k][p] = fn(k, p);
        return f;
    }
    double operator()(int k, Path p) const { return v[k][p]; }
    double& at(int k, Path p) { return v[k][p]; }
    int levels() const { return int(v.size()); }
};

/// Node index on the enlarged tree.
///
/// At step k a node is (prefix, status) with status 0 = alive (no default
/// yet) and status d in 1..k = default occurred at step d. The slot index
/// is status * 2^k + prefix, so the terminal level doubles as the atom
/// space: atom (path, d) <-> slot d * 2^N + path.
struct GIndex {
    static std::size_t level_size(int k) { return std::size_t(k + 1) << k; }
    static std::size_t slot(int k, int status, Path prefix) {
        return (std::size_t(status) << k) | prefix;
    }
    static int status_of(int k, std::size_t slot) { return int(slot >> k); }
    static Path prefix_of(int k, std::size_t slot) {
        return Path(slot & ((std::size_t(1) << k) - 1));
    }
    /// Parent slot at step k-1 of a step-k node.
    static std::size_t parent(int k, std::size_t s) {
        int st = status_of(k, s);
        Path pf = prefix_of(k, s) >> 1;
        return slot(k - 1, st == k ? 0 : st, pf);
    }
};

/// Adapted process on the enlarged tree.
struct GProcess {
    std::vector<std::vector<double>> v;

    GProcess() = default;
    explicit GProcess(const LatticeModel& m, double fill = 0.0) {
        v.resize(m.steps() + 1);
        for (int k = 0; k <= m.steps(); ++k) v[k].assign(GIndex::level_size(k), fill);
    }
    double operator()(int k, std::size_t slot) const { return v[k][slot]; }
    double& at(int k, std::size_t slot) { return v[k][slot]; }
    int levels() const { return int(v.size()); }
};

/// Lift a base-tree process to the enlarged tree, freezing it at the
/// default step (the lift used for barriers and for the terminal process).
GProcess lift_stopped(const LatticeModel& m, const FProcess& f);

/// Lift without stopping: alive and defaulted nodes read the running value.
GProcess lift_running(const LatticeModel& m, const FProcess& f);

} // namespace drbsde
