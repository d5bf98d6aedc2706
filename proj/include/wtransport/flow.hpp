#ifndef WTRANSPORT_FLOW_HPP
#define WTRANSPORT_FLOW_HPP

#include <optional>

#include "wtransport/density.hpp"
#include "wtransport/gridfield.hpp"

namespace wtransport {

struct FourierMode {
    int k = 1;
    double cos_coef = 0.0;
    double sin_coef = 0.0;
};

/** Velocity potential phi_t(x) = w(t) * sum_k (a_k cos kx + b_k sin kx).
 *  The weight w is smooth on [0,1] (constant 1 by default); spatial
 *  derivatives up to third order are analytic in the mode table. */
class VelocityPotential {
  public:
    explicit VelocityPotential(std::vector<FourierMode> modes,
                               std::function<double(double)> time_weight = {});

    double weight(double t) const { return time_weight_ ? time_weight_(t) : 1.0; }
    int max_mode() const { return max_mode_; }
    const std::vector<FourierMode>& modes() const { return modes_; }

    double phi(double t, double x) const;
    double dx(double t, double x) const;
    double dxx(double t, double x) const;
    double dxxx(double t, double x) const;

    // dx and dxx along a vector of points (one sincos per mode per point).
    void eval_flow_fields(double t, const std::vector<double>& xs,
                          std::vector<double>& out_dx, std::vector<double>& out_dxx) const;

    // Sampled fields on the n-grid (requires max mode < n/2).
    GridField grid_phi(double t, int n) const;
    GridField grid_dx(double t, int n) const;
    GridField grid_dxx(double t, int n) const;
    GridField grid_dxxx(double t, int n) const;

  private:
    std::vector<FourierMode> modes_;
    std::function<double(double)> time_weight_;
    int max_mode_ = 0;
};

/** Lagrangian state of the flow dX = (dx phi_t)(X) dt with Jacobian carried
 *  by the variational equation dJ = (dxx phi_t)(X) J dt. */
struct FlowState {
    double t = 0.0;
    LiftedMap X;
    GridField J;

    static FlowState identity(int n);
};

// One RK4 step of the joint (X, J) system. Throws DiffeomorphismError if the
// Jacobian drops below 1e-10 or the lift stops increasing.
void advance_flow(FlowState& state, const VelocityPotential& V, double dt);

// Advance from the current state to time t_target with uniform steps of dt
// (the last step shrinks to land exactly). Optional per-step observer.
void advance_to(FlowState& state, const VelocityPotential& V, double t_target, double dt,
                const std::function<void(const FlowState&)>& observer = {});

/** Pushforward of rho0 under the flow map, resampled to the uniform grid:
 *  rho_t(y) = (rho0 / J)(X^{-1}(y)). raw_mass_residual (optional) receives
 *  |mass - 1| before renormalization; beyond Density::kMassTol it throws. */
Density push_density(const Density& rho0, const FlowState& state,
                     Interp method = Interp::Spectral, double* raw_mass_residual = nullptr);

// Density of d(X_t^{-1})_# dx / dx on the original grid; equals the carried
// Jacobian on the circle.
GridField inverse_jacobian_density(const FlowState& state);

// Max relative gap between the carried Jacobian and the spectral derivative
// of the lift (consistency of the two Jacobian computations).
double jacobian_consistency_gap(const FlowState& state);

}  // namespace wtransport

#endif
