#include "wtransport/flow.hpp"

#include <cmath>

namespace wtransport {

VelocityPotential::VelocityPotential(std::vector<FourierMode> modes,
                                     std::function<double(double)> time_weight)
    : modes_(std::move(modes)), time_weight_(std::move(time_weight)) {
    for (const auto& m : modes_) {
        if (m.k < 1) throw ConfigError("velocity potential: mode numbers must be >= 1");
        max_mode_ = std::max(max_mode_, m.k);
    }
}

double VelocityPotential::phi(double t, double x) const {
    double s = 0.0;
    for (const auto& m : modes_)
        s += m.cos_coef * std::cos(m.k * x) + m.sin_coef * std::sin(m.k * x);
    return weight(t) * s;
}

double VelocityPotential::dx(double t, double x) const {
    double s = 0.0;
    for (const auto& m : modes_)
        s += m.k * (-m.cos_coef * std::sin(m.k * x) + m.sin_coef * std::cos(m.k * x));
    return weight(t) * s;
}

double VelocityPotential::dxx(double t, double x) const {
    double s = 0.0;
    for (const auto& m : modes_) {
        const double k2 = static_cast<double>(m.k) * m.k;
        s += -k2 * (m.cos_coef * std::cos(m.k * x) + m.sin_coef * std::sin(m.k * x));
    }
    return weight(t) * s;
}

double VelocityPotential::dxxx(double t, double x) const {
    double s = 0.0;
    for (const auto& m : modes_) {
        const double k3 = static_cast<double>(m.k) * m.k * m.k;
        s += k3 * (m.cos_coef * std::sin(m.k * x) - m.sin_coef * std::cos(m.k * x));
    }
    return weight(t) * s;
}

void VelocityPotential::eval_flow_fields(double t, const std::vector<double>& xs,
                                         std::vector<double>& out_dx,
                                         std::vector<double>& out_dxx) const {
    const size_t n = xs.size();
    out_dx.assign(n, 0.0);
    out_dxx.assign(n, 0.0);
    const double w = weight(t);
    for (const auto& m : modes_) {
        const double k = m.k, k2 = k * k;
        for (size_t j = 0; j < n; ++j) {
            const double c = std::cos(m.k * xs[j]), s = std::sin(m.k * xs[j]);
            out_dx[j] += w * k * (-m.cos_coef * s + m.sin_coef * c);
            out_dxx[j] += -w * k2 * (m.cos_coef * c + m.sin_coef * s);
        }
    }
}

namespace {
GridField sample_pot(const VelocityPotential& V, int n, double t,
                     double (VelocityPotential::*eval)(double, double) const) {
    check_grid_size(n);
    if (V.max_mode() >= n / 2)
        throw ConfigError("velocity potential is not resolved on this grid");
    std::vector<double> v(n);
    for (int j = 0; j < n; ++j) v[j] = (V.*eval)(t, grid_node(n, j));
    return GridField(n, std::move(v));
}
}  // namespace

GridField VelocityPotential::grid_phi(double t, int n) const {
    return sample_pot(*this, n, t, &VelocityPotential::phi);
}
GridField VelocityPotential::grid_dx(double t, int n) const {
    return sample_pot(*this, n, t, &VelocityPotential::dx);
}
GridField VelocityPotential::grid_dxx(double t, int n) const {
    return sample_pot(*this, n, t, &VelocityPotential::dxx);
}
GridField VelocityPotential::grid_dxxx(double t, int n) const {
    return sample_pot(*this, n, t, &VelocityPotential::dxxx);
}

FlowState FlowState::identity(int n) {
    return FlowState{0.0, LiftedMap::identity(n), GridField(n, std::vector<double>(n, 1.0))};
}

void advance_flow(FlowState& state, const VelocityPotential& V, double dt) {
    const int n = state.X.n;
    const auto& x0 = state.X.lift;
    const auto& j0 = state.J.values;
    std::vector<double> kx(n), kj(n), xs(n), js(n);
    std::vector<double> ax(n, 0.0), aj(n, 0.0);  // weighted slope accumulators
    std::vector<double> vdx, vdxx;

    const double stage_t[4] = {state.t, state.t + dt / 2, state.t + dt / 2, state.t + dt};
    const double stage_c[4] = {0.0, 0.5, 0.5, 1.0};
    const double comb_w[4] = {1.0 / 6, 1.0 / 3, 1.0 / 3, 1.0 / 6};

    for (int s = 0; s < 4; ++s) {
        for (int j = 0; j < n; ++j) {
            xs[j] = x0[j] + stage_c[s] * dt * (s == 0 ? 0.0 : kx[j]);
            js[j] = j0[j] + stage_c[s] * dt * (s == 0 ? 0.0 : kj[j]);
        }
        V.eval_flow_fields(stage_t[s], xs, vdx, vdxx);
        for (int j = 0; j < n; ++j) {
            kx[j] = vdx[j];
            kj[j] = vdxx[j] * js[j];
            ax[j] += comb_w[s] * kx[j];
            aj[j] += comb_w[s] * kj[j];
        }
    }

    std::vector<double> x1(n), j1(n);
    for (int j = 0; j < n; ++j) {
        x1[j] = x0[j] + dt * ax[j];
        j1[j] = j0[j] + dt * aj[j];
        if (!(j1[j] > 1e-10)) throw DiffeomorphismError("flow Jacobian lost positivity");
    }
    LiftedMap X1(n, std::move(x1));
    validate_monotone(X1);
    state.X = std::move(X1);
    state.J = GridField(n, std::move(j1));
    state.t += dt;
}

void advance_to(FlowState& state, const VelocityPotential& V, double t_target, double dt,
                const std::function<void(const FlowState&)>& observer) {
    if (!(dt > 0)) throw ConfigError("advance_to: dt must be positive");
    while (state.t < t_target - 1e-12) {
        const double step = std::min(dt, t_target - state.t);
        advance_flow(state, V, step);
        if (observer) observer(state);
    }
}

Density push_density(const Density& rho0, const FlowState& state, Interp method,
                     double* raw_mass_residual) {
    const int n = state.X.n;
    if (rho0.n() != n) throw ConfigError("push_density: grid mismatch");
    std::vector<double> lag(n);
    for (int j = 0; j < n; ++j) lag[j] = rho0[j] / state.J.values[j];
    LiftedMap Xinv = invert_monotone(state.X);
    GridField resampled = compose(GridField(n, std::move(lag)), Xinv, method);
    const double mass = integrate(resampled);
    if (raw_mass_residual) *raw_mass_residual = std::abs(mass - 1.0);
    if (std::abs(mass - 1.0) > Density::kMassTol)
        throw NumericError("push_density: mass drifted by " + std::to_string(mass - 1.0));
    return make_density(std::move(resampled));
}

GridField inverse_jacobian_density(const FlowState& state) { return state.J; }

double jacobian_consistency_gap(const FlowState& state) {
    GridField spectral = lift_derivative(state.X);
    double worst = 0.0;
    for (int j = 0; j < state.X.n; ++j) {
        const double denom = std::max(std::abs(state.J.values[j]), 1e-12);
        worst = std::max(worst, std::abs(spectral.values[j] - state.J.values[j]) / denom);
    }
    return worst;
}

}  // namespace wtransport
