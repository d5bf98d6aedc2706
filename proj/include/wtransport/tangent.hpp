#ifndef WTRANSPORT_TANGENT_HPP
#define WTRANSPORT_TANGENT_HPP

#include "wtransport/density.hpp"
#include "wtransport/flow.hpp"

namespace wtransport {

// Tangent projection at rho: v - (integral of v dx) * hat_density(rho).
// Fixes zero-mean fields, output always has zero mean.
GridField project(const Density& rho, const GridField& v);

// Witten Laplacian f'' + (log rho)' f' (generator of the Dirichlet form
// with weight rho).
GridField witten_laplacian(const Density& rho, const GridField& f);

// Weighted divergence Z' + (log rho)' Z; adjoint of -d/dx in L2(rho dx).
GridField div_mu(const Density& rho, const GridField& Z);

/** L2(c_t) residual of the projection-derivative identity along the flow of
 *  V from rho0: centered difference of s -> Proj_{c_s} Z at t (half-width h)
 *  against -Proj_{c_t}((Delta_{c_t} phi_t) * (Z - Proj_{c_t} Z)).
 *  Decays O(h^2); flow steps use the given dt. */
double projection_derivative_residual(const VelocityPotential& V, const Density& rho0,
                                      const GridField& Z, double t, double h,
                                      double dt = 1e-3);

}  // namespace wtransport

#endif
