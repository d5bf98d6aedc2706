#include <cmath>

#include "doctest.h"
#include "wtransport/flow.hpp"

using namespace wtransport;

namespace {

VelocityPotential sine_potential() {
    return VelocityPotential({{1, 0.0, 1.0}});  // phi = sin x, velocity cos x
}

// Independent reference: per-node RK4 on the scalar ODE with tiny steps.
double reference_point_flow(const VelocityPotential& V, double x0, double T, double dt) {
    double x = x0, t = 0.0;
    while (t < T - 1e-15) {
        const double h = std::min(dt, T - t);
        const double k1 = V.dx(t, x);
        const double k2 = V.dx(t + h / 2, x + h / 2 * k1);
        const double k3 = V.dx(t + h / 2, x + h / 2 * k2);
        const double k4 = V.dx(t + h, x + h * k3);
        x += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
        t += h;
    }
    return x;
}

}  // namespace

TEST_CASE("flow matches a fine-step per-node reference") {
    const int n = 64;
    auto V = sine_potential();
    FlowState st = FlowState::identity(n);
    advance_to(st, V, 1.0, 1e-3);
    CHECK(st.t == doctest::Approx(1.0));
    for (int j = 0; j < n; j += 7) {
        const double ref = reference_point_flow(V, grid_node(n, j), 1.0, 1e-5);
        CHECK(std::abs(st.X.lift[j] - ref) < 1e-9);
    }
}

TEST_CASE("variational Jacobian agrees with quadrature along the path") {
    const int n = 64;
    auto V = sine_potential();
    FlowState st = FlowState::identity(n);
    // accumulate integral of dxx phi(X_s) with the trapezoid on each step
    std::vector<double> acc(n, 0.0), prev(n), cur(n);
    for (int j = 0; j < n; ++j) prev[j] = V.dxx(0.0, st.X.lift[j]);
    const double dt = 1e-3;
    for (int s = 0; s < 1000; ++s) {
        advance_flow(st, V, dt);
        for (int j = 0; j < n; ++j) {
            cur[j] = V.dxx(st.t, st.X.lift[j]);
            acc[j] += 0.5 * dt * (prev[j] + cur[j]);
            prev[j] = cur[j];
        }
    }
    for (int j = 0; j < n; ++j)
        CHECK(std::abs(st.J.values[j] - std::exp(acc[j])) < 1e-6);
    // and against the spectral derivative of the lift
    CHECK(jacobian_consistency_gap(st) < 1e-7);
}

TEST_CASE("flow group property under composition") {
    const int n = 128;
    auto V = sine_potential();
    FlowState full = FlowState::identity(n);
    advance_to(full, V, 1.0, 1e-3);

    FlowState first = FlowState::identity(n);
    advance_to(first, V, 0.5, 1e-3);
    // restart from identity at t = 0.5 (time-homogeneous potential)
    FlowState second = FlowState::identity(n);
    second.t = 0.5;
    advance_to(second, V, 1.0, 1e-3);

    LiftedMap glued = compose_maps(second.X, first.X);
    for (int j = 0; j < n; ++j)
        CHECK(std::abs(glued.lift[j] - full.X.lift[j]) < 1e-7);
}

TEST_CASE("pushforward density conserves mass and satisfies the transport identity") {
    const int n = 256;
    auto V = sine_potential();
    auto rho0 = density_from(n, [](double x) { return 1.0 + 0.3 * std::cos(x); });
    FlowState st = FlowState::identity(n);
    advance_to(st, V, 1.0, 1e-3);

    double mass_residual = 1.0;
    Density rho1 = push_density(rho0, st, Interp::Spectral, &mass_residual);
    CHECK(mass_residual < 1e-8);
    CHECK(integrate(rho1.rho) == doctest::Approx(1.0).epsilon(1e-13));

    // rho_t(X_t) * J = rho_0 nodewise
    Interpolant itp(rho1.rho);
    for (int j = 0; j < n; j += 5) {
        const double lhs = itp(st.X.lift[j]) * st.J.values[j];
        CHECK(std::abs(lhs - rho0[j]) < 1e-8);
    }
}

TEST_CASE("weak continuity equation holds along the flow") {
    const int n = 128;
    auto V = sine_potential();
    auto rho0 = density_from(n, [](double x) { return 1.0 + 0.25 * std::sin(x); });
    auto psi = sample_field(n, [](double x) { return std::cos(2 * x); });
    auto dpsi = differentiate(psi, 1);

    // A(s) = integral of psi d(mu_s) computed by pushforward quadrature
    auto A = [&](double s) {
        FlowState st = FlowState::identity(n);
        advance_to(st, V, s, 1e-3);
        GridField psiX = compose(psi, st.X);
        double acc = 0;
        for (int j = 0; j < n; ++j) acc += psiX.values[j] * rho0[j];
        return acc * (kTwoPi / n);
    };
    const double t = 0.5, h = 1e-2;
    const double lhs = (A(t + h) - A(t - h)) / (2 * h);

    FlowState st = FlowState::identity(n);
    advance_to(st, V, t, 1e-3);
    Interpolant dpsi_itp(dpsi);
    double rhs = 0;
    for (int j = 0; j < n; ++j)
        rhs += dpsi_itp(st.X.lift[j]) * V.dx(t, st.X.lift[j]) * rho0[j];
    rhs *= kTwoPi / n;

    CHECK(std::abs(lhs - rhs) < 1e-5);
}

TEST_CASE("unstable step loses the diffeomorphism property") {
    const int n = 64;
    VelocityPotential big({{3, 0.0, 4.0}});
    FlowState st = FlowState::identity(n);
    CHECK_THROWS_AS(
        [&] {
            for (int s = 0; s < 100; ++s) advance_flow(st, big, 0.5);
        }(),
        DiffeomorphismError);
}

TEST_CASE("density flooring warns and renormalizes") {
    const int n = 64;
    const long before = density_floor_events();
    auto raw = sample_field(n, [](double x) { return std::max(std::cos(x), -0.05) + 0.04; });
    Density d = make_density(raw);
    CHECK(density_floor_events() == before + 1);
    CHECK(integrate(d.rho) == doctest::Approx(1.0).epsilon(1e-9));
    double lo = 1e9;
    for (double v : d.rho.values) lo = std::min(lo, v);
    CHECK(lo >= Density::kFloor);
}

TEST_CASE("unresolved potential is rejected on grid sampling") {
    VelocityPotential V({{40, 1.0, 0.0}});
    CHECK_THROWS_AS(V.grid_dx(0.0, 64), ConfigError);
}
