#include <cmath>
#include <random>

#include "doctest.h"
#include "wtransport/tangent.hpp"

using namespace wtransport;

namespace {

// smooth random density and field from a few low harmonics
Density random_density(std::mt19937& rng, int n) {
    std::uniform_real_distribution<double> u(-0.4, 0.4);
    double a1 = u(rng), b1 = u(rng), a2 = 0.5 * u(rng);
    return density_from(n, [=](double x) {
        return std::exp(a1 * std::cos(x) + b1 * std::sin(x) + a2 * std::cos(2 * x));
    });
}

GridField random_field(std::mt19937& rng, int n, int kmax = 4) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<std::pair<double, double>> c(kmax + 1);
    for (int k = 1; k <= kmax; ++k) c[k] = {u(rng), u(rng)};
    double c0 = u(rng);
    return sample_field(n, [=](double x) {
        double s = c0;
        for (int k = 1; k <= kmax; ++k)
            s += c[k].first * std::cos(k * x) + c[k].second * std::sin(k * x);
        return s;
    });
}

}  // namespace

TEST_CASE("hat density integrates to one and matches the closed form") {
    const int n = 128;
    auto rho = density_from(n, [](double x) { return 1.0 + 0.5 * std::cos(x); });
    GridField hat = hat_density(rho);
    CHECK(integrate(hat) == doctest::Approx(1.0).epsilon(1e-12));
    // C = integral dx / rho = (2pi)^2 / sqrt(1 - 1/4) for rho = (1+cos x/2)/2pi
    const double C = kTwoPi * kTwoPi / std::sqrt(0.75);
    for (int j = 0; j < n; j += 9) {
        const double x = grid_node(n, j);
        const double rho_x = (1.0 + 0.5 * std::cos(x)) / kTwoPi;
        CHECK(hat.values[j] == doctest::Approx(1.0 / (C * rho_x)).epsilon(1e-10));
    }
}

TEST_CASE("projection: idempotent, zero mean, orthogonal complement along hat density") {
    std::mt19937 rng(2024);
    const int n = 128;
    for (int trial = 0; trial < 100; ++trial) {
        Density rho = random_density(rng, n);
        GridField v = random_field(rng, n);
        GridField pv = project(rho, v);

        CHECK(std::abs(integrate(pv)) < 1e-9);                      // lands in the tangent space
        GridField ppv = project(rho, pv);
        for (int j = 0; j < n; ++j)
            CHECK(std::abs(ppv.values[j] - pv.values[j]) < 1e-9);   // idempotent

        // v - Pv is orthogonal to every zero-mean w in L2(rho)
        GridField w = random_field(rng, n);
        GridField w0 = project(rho, w);
        double ip = 0;
        for (int j = 0; j < n; ++j)
            ip += (v.values[j] - pv.values[j]) * w0.values[j] * rho[j];
        ip *= kTwoPi / n;
        CHECK(std::abs(ip) < 1e-9);
    }
}

TEST_CASE("witten laplacian is symmetric with Dirichlet form") {
    std::mt19937 rng(5);
    const int n = 256;
    Density rho = random_density(rng, n);
    GridField f = random_field(rng, n);
    GridField g = random_field(rng, n);
    GridField lf = witten_laplacian(rho, f);
    GridField df = differentiate(f, 1), dg = differentiate(g, 1);
    double lhs = 0, rhs = 0;
    for (int j = 0; j < n; ++j) {
        lhs += lf.values[j] * g.values[j] * rho[j];
        rhs -= df.values[j] * dg.values[j] * rho[j];
    }
    CHECK(std::abs(lhs - rhs) * kTwoPi / n < 1e-9);
}

TEST_CASE("div_mu is the negative adjoint of d/dx in L2(rho)") {
    std::mt19937 rng(6);
    const int n = 256;
    Density rho = random_density(rng, n);
    GridField Z = random_field(rng, n);
    GridField f = random_field(rng, n);
    GridField dZ = div_mu(rho, Z);
    GridField df = differentiate(f, 1);
    double lhs = 0, rhs = 0;
    for (int j = 0; j < n; ++j) {
        lhs += f.values[j] * dZ.values[j] * rho[j];
        rhs -= df.values[j] * Z.values[j] * rho[j];
    }
    CHECK(std::abs(lhs - rhs) * kTwoPi / n < 1e-9);

    // consistency: witten_laplacian f = div_mu(f')
    GridField a = witten_laplacian(rho, f);
    GridField b = div_mu(rho, differentiate(f, 1));
    for (int j = 0; j < n; ++j) CHECK(std::abs(a.values[j] - b.values[j]) < 1e-9);
}

TEST_CASE("projection derivative residual decays at second order in h") {
    const int n = 256;
    VelocityPotential V({{1, 0.0, 1.0}});  // phi = sin x
    auto rho0 = density_from(n, [](double x) { return 1.0 + 0.3 * std::cos(x); });
    GridField Z = sample_field(n, [](double x) { return 1.0 + std::cos(x); });

    const double r1 = projection_derivative_residual(V, rho0, Z, 0.5, 1e-2);
    const double r2 = projection_derivative_residual(V, rho0, Z, 0.5, 5e-3);
    CHECK(r2 < r1);
    CHECK(r1 / r2 > 3.5);  // Richardson: O(h^2) halving gives ~4
}
