#ifndef WTRANSPORT_TRANSPORT_DET_HPP
#define WTRANSPORT_TRANSPORT_DET_HPP

#include "wtransport/density.hpp"
#include "wtransport/flow.hpp"

namespace wtransport {

/** Right-hand side of parallel translation in Lagrangian form: for f = g o X,
 *  Lambda(t, f) = -(integral of f * a_t * rho0 dx) * hat(rho_t)(X), with
 *  a_t = (dxx phi_t / rho_t)(X). All factors are evaluated through the exact
 *  transport identity rho_t(X) J = rho0. */
GridField lambda_det(double t, const GridField& f, const VelocityPotential& V,
                     const Density& rho0, const FlowState& flow);

struct DetTransportRecord {
    double t;
    double norm2;   // integral of f^2 rho0 dx (= integral of g^2 rho_t dx)
    double mean_g;  // integral of f J dx (= integral of g dx)
};

struct DetTransportResult {
    std::vector<DetTransportRecord> records;  // one per step, including t = 0
    FlowState flow;                           // state at T
    GridField f;                              // Lagrangian transported field at T
    double norm_drift_rel;                    // max_t |norm - norm_0| / norm_0
    double max_abs_mean_g;
};

/** Joint RK4 integration of (X, J, f) on [0, T]: flow of V plus parallel
 *  translation of g0 (as its Lagrangian representative). g0 must have zero
 *  mean (tangency); no renormalization is applied along the way. */
DetTransportResult integrate_parallel_det(
    const VelocityPotential& V, const Density& rho0, const GridField& g0, double T, double dt,
    const std::function<void(double, const GridField&, const FlowState&)>& observer = {});

// Eulerian representative g = f o X^{-1}.
GridField eulerian_field(const GridField& f, const FlowState& flow);

/** Residual of the weak transport identity against a test function:
 *  | d/dt integral(test' g_t rho_t dx) - integral(test'' dxphi_t g_t rho_t dx) |
 *  with a centered difference of half-width h at time t (both integrals
 *  evaluated by pushforward quadrature). */
double weak_form_residual(const VelocityPotential& V, const Density& rho0,
                          const GridField& g0, const GridField& test, double t, double h,
                          double dt = 1e-3);

}  // namespace wtransport

#endif
