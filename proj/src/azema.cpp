#include "drbsde/azema.hpp"

namespace drbsde {

namespace {

// Fold per-path values down to step-k node sums by pairwise summation.
std::vector<double> fold_to(std::vector<double> x, int from, int to) {
    for (int l = from; l > to; --l) {
        std::size_t half = std::size_t(1) << (l - 1);
        for (std::size_t p = 0; p < half; ++p) x[p] = x[2 * p] + x[2 * p + 1];
        x.resize(half);
    }
    return x;
}

} // namespace

AzemaBundle build_azema(const LatticeModel& model, const DefaultLaw& law) {
    if (law.steps() != model.steps())
        throw ConfigError("azema: default law built for a different number of steps");
    law.validate();

    const int n = model.steps();
    const std::size_t npaths = model.paths();

    std::vector<double> pprob(npaths);
    for (Path w = 0; w < npaths; ++w) pprob[w] = model.path_prob(w);

    // suffix[w] holds sum_{j > k} h_j while looping k downward
    std::vector<double> suffix(npaths);
    for (Path w = 0; w < npaths; ++w) suffix[w] = law.mass(w, DefaultLaw::kBeyond);

    FProcess G(model), q(model);
    std::vector<std::vector<double>> tail(n + 1), at(n + 1);
    for (int k = n; k >= 0; --k) {
        std::vector<double> t(npaths), a(npaths, 0.0);
        for (Path w = 0; w < npaths; ++w) {
            t[w] = pprob[w] * suffix[w];
            if (k >= 1) a[w] = pprob[w] * law.mass(w, k);
        }
        tail[k] = fold_to(std::move(t), n, k);
        at[k] = fold_to(std::move(a), n, k);
        if (k >= 1)
            for (Path w = 0; w < npaths; ++w) suffix[w] += law.mass(w, k);
    }

    for (int k = 0; k <= n; ++k) {
        for (Path p = 0; p < model.nodes(k); ++p) {
            double np = model.node_prob(k, p);
            G.v[k][p] = tail[k][p] / np;
            q.v[k][p] = at[k][p] / np;
            if (!(G.v[k][p] > 0.0))
                throw AssumptionPError("assumption [P] violated: survival not positive at step " +
                                       std::to_string(k) + ", node " + std::to_string(p));
        }
    }

    AzemaBundle b{model, law, G, G, q, FProcess(model), FProcess(model), FProcess(model),
                  FProcess(model), GProcess(model)};
    b.Gtilde = FProcess(model);
    for (int k = 0; k <= n; ++k)
        for (Path p = 0; p < model.nodes(k); ++p) b.Gtilde.v[k][p] = G.v[k][p] + q.v[k][p];

    b.Dopt.v[0][0] = q.v[0][0]; // = 0: no mass at time zero
    b.m.v[0][0] = b.Dopt.v[0][0] + G.v[0][0];
    b.E.v[0][0] = 1.0;
    b.Etilde.v[0][0] = 1.0;
    for (int k = 1; k <= n; ++k) {
        for (Path p = 0; p < model.nodes(k); ++p) {
            Path pp = p >> 1;
            b.Dopt.v[k][p] = b.Dopt.v[k - 1][pp] + q.v[k][p];
            b.m.v[k][p] = b.Dopt.v[k][p] + G.v[k][p];
            double dm = b.m.v[k][p] - b.m.v[k - 1][pp];
            b.E.v[k][p] = b.E.v[k - 1][pp] * (1.0 + dm / G.v[k - 1][pp]);
            b.Etilde.v[k][p] = b.Etilde.v[k - 1][pp] * (1.0 - q.v[k][p] / b.Gtilde.v[k][p]);
        }
    }

    for (int k = 0; k <= n; ++k) {
        for (std::size_t s = 0; s < GIndex::level_size(k); ++s) {
            int st = GIndex::status_of(k, s);
            Path p = GIndex::prefix_of(k, s);
            double e = st == 0 ? b.E.v[k][p] : b.E.v[st][LatticeModel::prefix(p, k, st)];
            b.Psi.v[k][s] = 1.0 / e;
        }
    }
    return b;
}

} // namespace drbsde
