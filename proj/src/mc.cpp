#include "drbsde/mc.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace drbsde {

namespace rng {

namespace {
std::uint64_t splitmix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}
} // namespace

std::uint64_t mix(std::uint64_t seed, std::uint64_t path, std::uint64_t step, std::uint64_t tag) {
    return splitmix(splitmix(splitmix(seed ^ 0xd1b54a32d192ed03ull) ^ path) ^
                    (step * 0x9e3779b97f4a7c15ull + tag));
}

double uniform01(std::uint64_t seed, std::uint64_t path, std::uint64_t step, std::uint64_t tag) {
    return (double(mix(seed, path, step, tag) >> 11) + 0.5) * 0x1p-53;
}

// Acklam's inverse normal with one Halley refinement step.
double inverse_normal_cdf(double u) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1.0 - plow;
    double x;
    if (u < plow) {
        double q = std::sqrt(-2.0 * std::log(u));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (u <= phigh) {
        double q = u - 0.5, s = q * q;
        x = (((((a[0] * s + a[1]) * s + a[2]) * s + a[3]) * s + a[4]) * s + a[5]) * q /
            (((((b[0] * s + b[1]) * s + b[2]) * s + b[3]) * s + b[4]) * s + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - u));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - u;
    double v = e * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(x * x / 2.0);
    return x - v / (1.0 + x * v / 2.0);
}

double gaussian(std::uint64_t seed, std::uint64_t path, std::uint64_t step, std::uint64_t tag) {
    return inverse_normal_cdf(uniform01(seed, path, step, tag));
}

} // namespace rng

namespace {

void parallel_paths(std::int64_t n, int threads, const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (threads <= 1) {
        fn(0, n);
        return;
    }
    std::vector<std::thread> pool;
    std::int64_t chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        std::int64_t lo = t * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back(fn, lo, hi);
    }
    for (auto& th : pool) th.join();
}

} // namespace

PathBatch simulate_paths(const McConfig& cfg) {
    if (cfg.n_paths < 1) throw ConfigError("mc: n_paths must be >= 1");
    if (cfg.n_steps < 1 || !(cfg.dt > 0.0)) throw ConfigError("mc: bad time grid");
    PathBatch b;
    b.cfg = cfg;
    b.incr.resize(std::size_t(cfg.n_paths) * cfg.n_steps);
    b.default_step.assign(cfg.n_paths, 0);
    const double sdt = std::sqrt(cfg.dt);
    parallel_paths(cfg.n_paths, cfg.threads, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t p = lo; p < hi; ++p) {
            if (cfg.two_point) {
                // stratified lattice enumeration: path index supplies the bits,
                // most significant first, cycling when n_paths exceeds 2^steps
                std::uint64_t bits = std::uint64_t(p);
                for (int k = 0; k < cfg.n_steps; ++k) {
                    int bit = int((bits >> (cfg.n_steps - 1 - k)) & 1ull);
                    b.incr[std::size_t(p) * cfg.n_steps + k] = bit ? sdt : -sdt;
                }
            } else {
                for (int k = 0; k < cfg.n_steps; ++k)
                    b.incr[std::size_t(p) * cfg.n_steps + k] =
                        sdt * rng::gaussian(cfg.seed, std::uint64_t(p), std::uint64_t(k), 0);
            }
        }
    });
    return b;
}

void apply_cox_default(PathBatch& batch, const CoxIntensity& intensity) {
    const auto& cfg = batch.cfg;
    parallel_paths(cfg.n_paths, cfg.threads, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t p = lo; p < hi; ++p) {
            double threshold = -std::log(rng::uniform01(cfg.seed, std::uint64_t(p), 0, 1));
            double big = 0.0, b = 0.0;
            batch.default_step[p] = 0;
            for (int k = 0; k < cfg.n_steps; ++k) {
                double lam = intensity.lambda(k * cfg.dt, b);
                if (lam < 0.0) throw DataError("cox: negative intensity");
                big += lam * cfg.dt;
                b += batch.db(p, k);
                if (big >= threshold) {
                    batch.default_step[p] = k + 1;
                    break;
                }
            }
        }
    });
}

namespace {

struct Design {
    // per-path predicted conditional expectation via least squares or bins
    const RegressionBasis& basis;
    int n_steps;
    bool two_point;
    double sdt;

    std::vector<double> fit(const std::vector<double>& x, const std::vector<double>& y,
                            int step) const {
        const std::size_t n = x.size();
        std::vector<double> out(n, 0.0);
        if (n == 0) return out;
        if (step == 0) { // constant state: the conditional expectation is the mean
            double mean = 0.0;
            for (double v : y) mean += v;
            mean /= double(n);
            for (auto& v : out) v = mean;
            return out;
        }
        if (basis.kind == RegressionBasis::Kind::Piecewise) {
            int bins = basis.order;
            double lo = *std::min_element(x.begin(), x.end());
            double hi = *std::max_element(x.begin(), x.end());
            auto bin_of = [&](double v) {
                if (two_point && basis.saturated_two_point) {
                    // lattice coordinate: v = (2u - step) * sqrt(dt)
                    int u = int(std::lround((v / sdt + step) / 2.0));
                    return std::min(std::max(u, 0), step);
                }
                if (hi <= lo) return 0;
                int i = int(double(bins) * (v - lo) / (hi - lo));
                return std::min(std::max(i, 0), bins - 1);
            };
            int nb = (two_point && basis.saturated_two_point) ? step + 1 : basis.order;
            std::vector<double> sum(nb, 0.0), cnt(nb, 0.0);
            std::vector<int> idx(n);
            for (std::size_t i = 0; i < n; ++i) {
                idx[i] = bin_of(x[i]);
                sum[idx[i]] += y[i];
                cnt[idx[i]] += 1.0;
            }
            for (std::size_t i = 0; i < n; ++i) out[i] = sum[idx[i]] / cnt[idx[i]];
            return out;
        }
        // polynomial in the state, ridge-regularised normal equations
        const int dim = basis.order + 1;
        std::vector<double> xtx(dim * dim, 0.0), xty(dim, 0.0);
        std::vector<double> pw(dim);
        for (std::size_t i = 0; i < n; ++i) {
            pw[0] = 1.0;
            for (int j = 1; j < dim; ++j) pw[j] = pw[j - 1] * x[i];
            for (int a = 0; a < dim; ++a) {
                xty[a] += pw[a] * y[i];
                for (int c = 0; c < dim; ++c) xtx[a * dim + c] += pw[a] * pw[c];
            }
        }
        for (int a = 0; a < dim; ++a) xtx[a * dim + a] += basis.ridge;
        // Gaussian elimination with partial pivoting
        std::vector<double> beta = xty;
        for (int col = 0; col < dim; ++col) {
            int piv = col;
            for (int rr = col + 1; rr < dim; ++rr)
                if (std::abs(xtx[rr * dim + col]) > std::abs(xtx[piv * dim + col])) piv = rr;
            if (std::abs(xtx[piv * dim + col]) < 1e-13)
                throw NumericError("regression: rank-deficient design without ridge");
            if (piv != col) {
                for (int c = 0; c < dim; ++c) std::swap(xtx[piv * dim + c], xtx[col * dim + c]);
                std::swap(beta[piv], beta[col]);
            }
            double d = xtx[col * dim + col];
            for (int rr = col + 1; rr < dim; ++rr) {
                double f = xtx[rr * dim + col] / d;
                for (int c = col; c < dim; ++c) xtx[rr * dim + c] -= f * xtx[col * dim + c];
                beta[rr] -= f * beta[col];
            }
        }
        for (int col = dim - 1; col >= 0; --col) {
            for (int c = col + 1; c < dim; ++c) beta[col] -= xtx[col * dim + c] * beta[c];
            beta[col] /= xtx[col * dim + col];
        }
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0, pwr = 1.0;
            for (int j = 0; j < dim; ++j) {
                acc += beta[j] * pwr;
                pwr *= x[i];
            }
            out[i] = acc;
        }
        return out;
    }
};

double soft_or_hard_reflect(double y, double lo, bool has_lo, double up, bool has_up, double n,
                            double dt) {
    if (n > 0.0) {
        if (has_lo && y < lo) return (y + n * dt * lo) / (1.0 + n * dt);
        if (has_up && y > up) return (y + n * dt * up) / (1.0 + n * dt);
        return y;
    }
    if (has_lo && y < lo) return lo;
    if (has_up && y > up) return up;
    return y;
}

} // namespace

MCEstimate lsmc_solve_drbsde(const PathBatch& batch, const McRules& rules,
                             const RegressionBasis& basis, std::vector<McSurfacePoint>* surface) {
    const auto& cfg = batch.cfg;
    const std::int64_t n = cfg.n_paths;
    const int steps = cfg.n_steps;
    const double dt = cfg.dt;
    if (!rules.zeta) throw ConfigError("mc: terminal rule missing");

    std::vector<double> b(n, 0.0), y(n, 0.0);
    std::vector<double> bpath(std::size_t(n) * (steps + 1));
    for (std::int64_t p = 0; p < n; ++p) {
        double acc = 0.0;
        bpath[std::size_t(p) * (steps + 1)] = 0.0;
        for (int k = 0; k < steps; ++k) {
            acc += batch.db(p, k);
            bpath[std::size_t(p) * (steps + 1) + k + 1] = acc;
        }
    }
    auto bat = [&](std::int64_t p, int k) { return bpath[std::size_t(p) * (steps + 1) + k]; };

    // terminal values at T and tau
    for (std::int64_t p = 0; p < n; ++p) {
        int d = batch.default_step[p];
        int k = d == 0 ? steps : d;
        y[p] = rules.zeta(k * dt, bat(p, k));
    }

    Design design{basis, steps, cfg.two_point, std::sqrt(dt)};
    if (surface) surface->clear();

    auto step0_value = [&](const std::vector<double>& ynext, const std::vector<double>& zraw) {
        double pred = 0.0, zv = 0.0;
        for (double v : ynext) pred += v;
        for (double v : zraw) zv += v;
        pred /= double(ynext.size());
        zv /= double(zraw.size());
        double f = 0.0;
        if (rules.r) f -= rules.r(0.0, 0.0) * pred;
        if (rules.theta) f -= rules.theta(0.0, 0.0) * zv;
        double val = pred + f * dt;
        double lo = rules.lower ? rules.lower(0.0, 0.0) : 0.0;
        double up = rules.upper ? rules.upper(0.0, 0.0) : 0.0;
        return soft_or_hard_reflect(val, lo, bool(rules.lower), up, bool(rules.upper),
                                    rules.penalty, dt);
    };

    std::vector<double> ynext0, zraw0;
    for (int k = steps - 1; k >= 0; --k) {
        std::vector<std::int64_t> alive;
        for (std::int64_t p = 0; p < n; ++p)
            if (batch.default_step[p] == 0 || batch.default_step[p] > k) alive.push_back(p);
        std::vector<double> xs(alive.size()), ynext(alive.size()), zraw(alive.size());
        for (std::size_t i = 0; i < alive.size(); ++i) {
            xs[i] = bat(alive[i], k);
            ynext[i] = y[alive[i]];
            zraw[i] = y[alive[i]] * batch.db(alive[i], k) / dt;
        }
        if (k == 0) {
            ynext0 = ynext;
            zraw0 = zraw;
            break;
        }
        std::vector<double> pred = design.fit(xs, ynext, k);
        std::vector<double> zhat = design.fit(xs, zraw, k);
        for (std::size_t i = 0; i < alive.size(); ++i) {
            std::int64_t p = alive[i];
            double t = k * dt;
            double f = 0.0;
            if (rules.r) f -= rules.r(t, xs[i]) * pred[i];
            if (rules.theta) f -= rules.theta(t, xs[i]) * zhat[i];
            double val = pred[i] + f * dt;
            double lo = rules.lower ? rules.lower(t, xs[i]) : 0.0;
            double up = rules.upper ? rules.upper(t, xs[i]) : 0.0;
            val = soft_or_hard_reflect(val, lo, bool(rules.lower), up, bool(rules.upper),
                                       rules.penalty, dt);
            y[p] = val;
        }
        if (surface) {
            double mean = 0.0, var = 0.0;
            for (std::int64_t p = 0; p < n; ++p) mean += y[p];
            mean /= double(n);
            for (std::int64_t p = 0; p < n; ++p) var += (y[p] - mean) * (y[p] - mean);
            surface->push_back({k, mean, std::sqrt(var / double(n)) / std::sqrt(double(n))});
        }
    }

    double value = step0_value(ynext0, zraw0);
    if (surface) {
        surface->push_back({0, value, 0.0});
        std::reverse(surface->begin(), surface->end());
    }

    // bootstrap the whole step-0 aggregation
    const int nboot = 200;
    const std::size_t m0 = ynext0.size();
    std::vector<double> bm(nboot);
    std::vector<double> ry(m0), rz(m0);
    for (int rep = 0; rep < nboot; ++rep) {
        for (std::size_t i = 0; i < m0; ++i) {
            std::size_t p = std::size_t(
                rng::mix(cfg.seed ^ 0xb005ull, std::uint64_t(i), std::uint64_t(rep), 2) % m0);
            ry[i] = ynext0[p];
            rz[i] = zraw0[p];
        }
        bm[rep] = step0_value(ry, rz);
    }
    double bmean = 0.0, bvar = 0.0;
    for (double v : bm) bmean += v;
    bmean /= nboot;
    for (double v : bm) bvar += (v - bmean) * (v - bmean);
    bvar /= nboot - 1;

    return {value, std::sqrt(bvar), n};
}

MCEstimate black_scholes_example(const BsConfig& cfg, std::vector<McSurfacePoint>* surface) {
    if (!cfg.r || !cfg.mu || !cfg.sigma) throw ConfigError("bs: rate rules missing");
    for (int k = 0; k < cfg.n_steps; ++k)
        if (cfg.sigma(k * cfg.dt) < cfg.sigma_min)
            throw DataError("bs: volatility below the configured floor");

    McConfig mcfg;
    mcfg.n_steps = cfg.n_steps;
    mcfg.dt = cfg.dt;
    mcfg.n_paths = cfg.n_paths;
    mcfg.seed = cfg.seed;
    mcfg.threads = cfg.threads;
    PathBatch batch = simulate_paths(mcfg);
    if (cfg.lambda) apply_cox_default(batch, CoxIntensity{cfg.lambda});

    const std::int64_t n = cfg.n_paths;
    const int steps = cfg.n_steps;
    const double dt = cfg.dt;

    // exact lognormal stepping of the price
    std::vector<double> spath(std::size_t(n) * (steps + 1));
    parallel_paths(n, cfg.threads, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t p = lo; p < hi; ++p) {
            double s = cfg.s0;
            spath[std::size_t(p) * (steps + 1)] = s;
            for (int k = 0; k < steps; ++k) {
                double sg = cfg.sigma(k * dt), mu = cfg.mu(k * dt);
                s *= std::exp((mu - 0.5 * sg * sg) * dt + sg * batch.db(p, k));
                spath[std::size_t(p) * (steps + 1) + k + 1] = s;
            }
        }
    });
    auto sat = [&](std::int64_t p, int k) { return spath[std::size_t(p) * (steps + 1) + k]; };

    std::vector<double> y(n);
    for (std::int64_t p = 0; p < n; ++p) {
        int d = batch.default_step[p];
        if (d == 0)
            y[p] = std::max(sat(p, steps) - cfg.strike, 0.0);
        else
            y[p] = cfg.recovery ? cfg.recovery(d * dt, sat(p, d)) : 0.0;
    }

    Design design{cfg.basis, steps, false, std::sqrt(dt)};
    if (surface) surface->clear();
    std::vector<double> contrib0; // per-path inputs to the step-0 aggregation
    for (int k = steps - 1; k >= 0; --k) {
        std::vector<std::int64_t> alive;
        for (std::int64_t p = 0; p < n; ++p)
            if (batch.default_step[p] == 0 || batch.default_step[p] > k) alive.push_back(p);
        std::vector<double> xs(alive.size()), ynext(alive.size()), zraw(alive.size());
        for (std::size_t i = 0; i < alive.size(); ++i) {
            xs[i] = sat(alive[i], k);
            ynext[i] = y[alive[i]];
            zraw[i] = y[alive[i]] * batch.db(alive[i], k) / dt;
        }
        double t = k * dt;
        double rr = cfg.r(t), th = (cfg.mu(t) - rr) / cfg.sigma(t);
        if (k == 0) {
            contrib0.resize(alive.size());
            for (std::size_t i = 0; i < alive.size(); ++i)
                contrib0[i] = ynext[i] + (-rr * ynext[i] - th * zraw[i]) * dt;
            break;
        }
        bool need_regression = cfg.lower || cfg.upper || th != 0.0;
        std::vector<double> pred, zhat;
        if (need_regression) {
            pred = design.fit(xs, ynext, k);
            zhat = design.fit(xs, zraw, k);
        }
        for (std::size_t i = 0; i < alive.size(); ++i) {
            // without barriers and with a y-linear driver, pathwise
            // discounting avoids any regression bias
            double pv = need_regression ? pred[i] : ynext[i];
            double zv = need_regression ? zhat[i] : 0.0;
            double val = pv + (-rr * pv - th * zv) * dt;
            if (cfg.lower || cfg.upper) {
                double lo = cfg.lower ? cfg.lower(t, xs[i]) : 0.0;
                double up = cfg.upper ? cfg.upper(t, xs[i]) : 0.0;
                val = soft_or_hard_reflect(val, lo, bool(cfg.lower), up, bool(cfg.upper), 0.0, dt);
            }
            y[alive[i]] = val;
        }
        if (surface) {
            double mean = 0.0, var = 0.0;
            for (std::int64_t p = 0; p < n; ++p) mean += y[p];
            mean /= double(n);
            for (std::int64_t p = 0; p < n; ++p) var += (y[p] - mean) * (y[p] - mean);
            surface->push_back({k, mean, std::sqrt(var / double(n)) / std::sqrt(double(n))});
        }
    }

    double mean = 0.0, var = 0.0;
    for (double v : contrib0) mean += v;
    mean /= double(contrib0.size());
    for (double v : contrib0) var += (v - mean) * (v - mean);
    var /= double(contrib0.size() - 1);
    double value = mean;
    if (cfg.lower || cfg.upper) {
        double lo = cfg.lower ? cfg.lower(0.0, cfg.s0) : 0.0;
        double up = cfg.upper ? cfg.upper(0.0, cfg.s0) : 0.0;
        value = soft_or_hard_reflect(value, lo, bool(cfg.lower), up, bool(cfg.upper), 0.0, dt);
    }
    if (surface) {
        surface->push_back({0, value, std::sqrt(var / double(contrib0.size()))});
        std::reverse(surface->begin(), surface->end());
    }
    return {value, std::sqrt(var / double(contrib0.size())), n};
}

} // namespace drbsde
