#include "wtransport/tangent.hpp"

#include <cmath>

namespace wtransport {

GridField project(const Density& rho, const GridField& v) {
    if (rho.n() != v.n) throw ConfigError("project: grid mismatch");
    const double total = integrate(v);
    GridField hat = hat_density(rho);
    std::vector<double> out(v.n);
    for (int j = 0; j < v.n; ++j) out[j] = v.values[j] - total * hat.values[j];
    return GridField(v.n, std::move(out));
}

namespace {
GridField log_derivative(const Density& rho) {
    std::vector<double> lg(rho.n());
    for (int j = 0; j < rho.n(); ++j) lg[j] = std::log(rho[j]);
    return differentiate(GridField(rho.n(), std::move(lg)), 1);
}
}  // namespace

GridField witten_laplacian(const Density& rho, const GridField& f) {
    if (rho.n() != f.n) throw ConfigError("witten_laplacian: grid mismatch");
    GridField d1 = differentiate(f, 1);
    GridField d2 = differentiate(f, 2);
    GridField dlog = log_derivative(rho);
    std::vector<double> out(f.n);
    for (int j = 0; j < f.n; ++j) out[j] = d2.values[j] + dlog.values[j] * d1.values[j];
    return GridField(f.n, std::move(out));
}

GridField div_mu(const Density& rho, const GridField& Z) {
    if (rho.n() != Z.n) throw ConfigError("div_mu: grid mismatch");
    GridField d1 = differentiate(Z, 1);
    GridField dlog = log_derivative(rho);
    std::vector<double> out(Z.n);
    for (int j = 0; j < Z.n; ++j) out[j] = d1.values[j] + dlog.values[j] * Z.values[j];
    return GridField(Z.n, std::move(out));
}

double projection_derivative_residual(const VelocityPotential& V, const Density& rho0,
                                      const GridField& Z, double t, double h, double dt) {
    if (!(h > 0) || t - h < 0) throw ConfigError("projection derivative: need 0 < h <= t");
    const int n = rho0.n();

    FlowState st = FlowState::identity(n);
    advance_to(st, V, t - h, dt);
    Density rho_m = push_density(rho0, st);
    advance_to(st, V, t, dt);
    Density rho_t = push_density(rho0, st);
    advance_to(st, V, t + h, dt);
    Density rho_p = push_density(rho0, st);

    GridField Pm = project(rho_m, Z);
    GridField Pt = project(rho_t, Z);
    GridField Pp = project(rho_p, Z);

    GridField diff = (1.0 / (2 * h)) * (Pp - Pm);

    GridField phi_t = V.grid_phi(t, n);
    GridField lap = witten_laplacian(rho_t, phi_t);
    GridField perp = Z - Pt;
    GridField rhs = -1.0 * project(rho_t, lap * perp);

    return l2_norm_weighted(diff - rhs, rho_t.rho);
}

}  // namespace wtransport
