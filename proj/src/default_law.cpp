#include "drbsde/default_law.hpp"

namespace drbsde {

namespace {
// splitmix64: stateless generator for reproducible test laws
std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}
double unit(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return double(mix64(seed ^ mix64(a ^ mix64(b))) >> 11) * 0x1p-53;
}
} // namespace

DefaultLaw DefaultLaw::random(const LatticeModel& m, std::uint64_t seed, double beyond_floor) {
    if (!(beyond_floor > 0.0 && beyond_floor < 1.0))
        throw ConfigError("default law: beyond_floor must lie in (0,1)");
    DefaultLaw law(m.steps());
    int n = m.steps();
    for (Path w = 0; w < law.paths(); ++w) {
        double sum = 0.0;
        std::vector<double> raw(n);
        for (int d = 1; d <= n; ++d) {
            raw[d - 1] = unit(seed, w, std::uint64_t(d));
            sum += raw[d - 1];
        }
        double scale = sum > 0.0 ? (1.0 - beyond_floor) * unit(seed, w, 0x5eedull) / sum : 0.0;
        double used = 0.0;
        for (int d = 1; d <= n; ++d) {
            law.mass_ref(w, d) = raw[d - 1] * scale;
            used += raw[d - 1] * scale;
        }
        law.mass_ref(w, kBeyond) = 1.0 - used;
    }
    law.validate();
    return law;
}

} // namespace drbsde
