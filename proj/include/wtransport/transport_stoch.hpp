#ifndef WTRANSPORT_TRANSPORT_STOCH_HPP
#define WTRANSPORT_TRANSPORT_STOCH_HPP

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "wtransport/density.hpp"
#include "wtransport/stoch_flow.hpp"

namespace wtransport {

/** Per-channel drift coefficient samples along the particles:
 *  a_c = (d2phi_c / rho_t)(X_t), b_c = ((d2phi_c * dphi_c)' / rho_t)(X_t). */
struct DriftCoefficients {
    std::vector<GridField> a, b;
};

DriftCoefficients drift_coefficients(ChannelAdapter& chans, const StochFlowState& state,
                                     const Density& rho_t);

/** The transport drift fields of channel c evaluated on the printed closed
 *  forms (Eulerian rho_t interpolated along X):
 *    Lambda_c(f) = -(int f a_c rho dx) rhohat_t(X)
 *    Theta_c(f)  = -(int f a_c rho dx) (rhohat_t d2phi_c)(X)
 *                  -(int f b_c rho dx) rhohat_t(X)
 *                  +3 (int f a_c rho dx) (int d2phi_c rhohat_t dx) rhohat_t(X)
 *  where rho is the base density rho_t(X) J recovered from the state. */
std::pair<GridField, GridField> lambda_theta(int channel, const GridField& f,
                                             const DriftCoefficients& coeffs,
                                             const Density& rho_t, const StochFlowState& state,
                                             ChannelAdapter& chans);

/** Joint state of the stochastic flow and the Lagrangian transported field
 *  f_t = g_t(X_t) living in L2(rho0 dx). */
struct StochParallelState {
    StochFlowState flow;
    GridField f;
};

/** One step of the coupled (flow, transport) system. StratHeun integrates
 *  the Stratonovich form df = sum_c w_c Lambda_c(f) o dB^c; ItoEuler adds
 *  the printed Theta drift, df = sum_c w_c Lambda_c dB^c
 *  + sum_c (w_c^2/2) Theta_c dt. All quadratures run against the initial
 *  density (no inversions, no interpolation). */
void stoch_transport_step(StochParallelState& state, ChannelAdapter& chans,
                          const BrownianDriver& driver, int step, const Density& rho0,
                          Scheme scheme);

struct StochTransportRecord {
    double t = 0.0;
    double norm2 = 0.0;   // int f^2 rho0 dx = int g^2 rho_t dx
    double mean_g = 0.0;  // int f J dx = int g dx
};

struct StochTransportResult {
    std::vector<StochTransportRecord> records;
    StochFlowState state;      // final flow state
    GridField f;               // final Lagrangian field
    double norm_drift_rel = 0.0;
    double max_abs_mean_g = 0.0;
    double kunita_gap_final = 0.0;
};

/** Integrate the stochastic parallel translation over the driver's range.
 *  g0 must have zero Lebesgue mean (tangent condition). The optional
 *  observer runs after every step. */
StochTransportResult integrate_stoch_parallel(
    const GridField& g0, ChannelAdapter& chans, const BrownianDriver& driver,
    const Density& rho0, Scheme scheme,
    const std::function<void(const StochParallelState&)>& observer = {});

// Eulerian tangent field g_t = f_t o X_t^{-1} at the final time.
GridField eulerian_field(const StochTransportResult& result, Interp method = Interp::Spectral);

/** Monte Carlo batch of pathwise conservation diagnostics. */
struct TransportBatchReport {
    int paths = 0;
    double dt = 0.0, T = 0.0;
    std::uint64_t seed = 0;
    double worst_norm_drift = 0.0;  // max over paths of max_t |norm2/norm2_0 - 1|
    double worst_mean_g = 0.0;      // max over paths and steps of |int g dx|
    double worst_kunita_gap = 0.0;
    std::vector<double> norm_drifts;  // per path
};

/** dt_fine keys the Brownian lattice; the integration step is
 *  dt_fine * coarsen_block, so batches with the same seed and dt_fine ride
 *  identical Brownian paths at different step sizes. */
TransportBatchReport stoch_transport_batch(std::uint64_t seed, const GridField& g0,
                                           const Density& rho0, ChannelAdapter& chans,
                                           int paths, double dt_fine, double T, Scheme scheme,
                                           int coarsen_block = 1);

/** Ito-Euler vs Stratonovich-Heun strong gap E ||f_T^ito - f_T^strat||^2
 *  in L2(rho0 dx) on coupled noise, per dt; certifies the Theta algebra. */
struct SchemeGapReport {
    std::vector<double> dts;
    std::vector<double> gaps;
    std::vector<double> std_errors;
    double order = 0.0;  // least-squares slope of log gap vs log dt
    bool pass = false;   // order >= threshold
    double threshold = 0.0;
};

SchemeGapReport scheme_agreement_experiment(std::uint64_t seed, const GridField& g0,
                                            const Density& rho0, int N, double q,
                                            const std::vector<double>& dts, double T, int paths,
                                            double order_threshold);

/** Galerkin convergence of the transported field across truncation levels:
 *  E[sup_t ||f^L - f^ref||^2_{L2(rho0 dx)}] per level on coupled noise. */
struct GalerkinReport {
    std::vector<int> levels;
    int ref_level = 0;
    double q = 0.0, dt = 0.0, T = 0.0, beta = 0.0;
    int paths = 0, n = 0;
    std::uint64_t seed = 0;
    std::vector<double> sup_errors;
    std::vector<double> std_errors;
    std::vector<double> exceedance;  // fraction of paths with sup error^2 > L^{-beta}
    double slope = 0.0, slope_se = 0.0;
    double slope_bound = 0.0;      // -(q - 1/2)
    double slope_threshold = 0.0;  // acceptance threshold
    bool decreasing = false;
    bool pass = false;
};

GalerkinReport galerkin_convergence(std::uint64_t seed, const GridField& g0, const Density& rho0,
                                    double q, const std::vector<int>& levels, int ref_level,
                                    int paths, double dt, double T, double beta,
                                    double slope_threshold);

/** L2(dx) gap between the eight printed drift terms and their consolidated
 *  form (the I2+J2, I4+J4 merges); pure grid algebra, expected <= 1e-9. */
double rs_identity_check(const Density& rho_t, const GridField& phi, const GridField& psi);

}  // namespace wtransport

#endif
