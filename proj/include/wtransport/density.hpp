#ifndef WTRANSPORT_DENSITY_HPP
#define WTRANSPORT_DENSITY_HPP

#include <atomic>

#include "wtransport/gridfield.hpp"

namespace wtransport {

/** Probability density on the circle w.r.t. Lebesgue dx: positive samples,
 *  unit mass. Values are floored at kFloor (with a warning) and the field is
 *  renormalized to unit mass on construction. */
struct Density {
    static constexpr double kFloor = 1e-12;
    static constexpr double kMassTol = 1e-8;

    GridField rho;

    int n() const { return rho.n; }
    double operator[](int j) const { return rho.values[j]; }
};

// Count of flooring events since process start (each make_density that had
// to clip at least one value counts once).
long density_floor_events();

/** Build a Density from raw samples. Values below the floor are clipped
 *  (warning on stderr); if |mass - 1| > mass_tol afterwards a DensityError is
 *  raised, otherwise the field is scaled to unit mass exactly.
 *  mass_tol < 0 accepts any positive mass (plain normalization). */
Density make_density(GridField raw, double mass_tol = -1.0);

// Convenience: sample a positive function and normalize it.
Density density_from(int n, const std::function<double(double)>& f);

// 1 / ((integral of 1/rho) * rho): the unit-mass multiple of 1/rho used by
// tangent-space projections.
GridField hat_density(const Density& rho);

}  // namespace wtransport

#endif
