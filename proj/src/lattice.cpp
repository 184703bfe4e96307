#include "drbsde/lattice.hpp"

namespace drbsde {

GProcess lift_stopped(const LatticeModel& m, const FProcess& f) {
    GProcess g(m);
    for (int k = 0; k <= m.steps(); ++k) {
        for (std::size_t s = 0; s < GIndex::level_size(k); ++s) {
            int st = GIndex::status_of(k, s);
            Path p = GIndex::prefix_of(k, s);
            g.v[k][s] = st == 0 ? f.v[k][p] : f.v[st][LatticeModel::prefix(p, k, st)];
        }
    }
    return g;
}

GProcess lift_running(const LatticeModel& m, const FProcess& f) {
    GProcess g(m);
    for (int k = 0; k <= m.steps(); ++k)
        for (std::size_t s = 0; s < GIndex::level_size(k); ++s)
            g.v[k][s] = f.v[k][GIndex::prefix_of(k, s)];
    return g;
}

} // namespace drbsde
