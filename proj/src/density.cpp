#include "wtransport/density.hpp"

#include <cmath>
#include <cstdio>

namespace wtransport {

namespace {
std::atomic<long> floor_events{0};
}

long density_floor_events() { return floor_events.load(); }

Density make_density(GridField raw, double mass_tol) {
    int clipped = 0;
    for (double& v : raw.values)
        if (v < Density::kFloor) {
            v = Density::kFloor;
            ++clipped;
        }
    if (clipped > 0) {
        floor_events.fetch_add(1);
        std::fprintf(stderr, "warning: density floored at %d of %d nodes\n", clipped, raw.n);
    }
    const double mass = integrate(raw);
    if (!(mass > 0.0)) throw DensityError("density has non-positive mass");
    if (mass_tol > 0.0 && std::abs(mass - 1.0) > mass_tol)
        throw DensityError("density mass off by " + std::to_string(mass - 1.0));
    for (double& v : raw.values) {
        v /= mass;
        if (v < Density::kFloor) v = Density::kFloor;
    }
    return Density{std::move(raw)};
}

Density density_from(int n, const std::function<double(double)>& f) {
    return make_density(sample_field(n, f));
}

GridField hat_density(const Density& rho) {
    const int n = rho.n();
    std::vector<double> inv(n);
    for (int j = 0; j < n; ++j) inv[j] = 1.0 / rho[j];
    const double c = integrate(GridField(n, inv));
    std::vector<double> v(n);
    for (int j = 0; j < n; ++j) v[j] = 1.0 / (c * rho[j]);
    return GridField(n, std::move(v));
}

}  // namespace wtransport
