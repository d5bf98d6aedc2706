#include <cmath>
#include <random>

#include "doctest.h"
#include "wtransport/gridfield.hpp"

using namespace wtransport;

namespace {

double max_abs_diff(const GridField& f, const std::function<double(double)>& ref) {
    double worst = 0.0;
    for (int j = 0; j < f.n; ++j)
        worst = std::max(worst, std::abs(f.values[j] - ref(grid_node(f.n, j))));
    return worst;
}

}  // namespace

TEST_CASE("grid size validation") {
    CHECK_THROWS_AS(check_grid_size(6), ConfigError);
    CHECK_THROWS_AS(check_grid_size(48), ConfigError);
    CHECK_THROWS_AS(check_grid_size(4), ConfigError);
    CHECK_NOTHROW(check_grid_size(8));
    CHECK_NOTHROW(check_grid_size(4096));
    CHECK_THROWS_AS(GridField(16, std::vector<double>(15, 0.0)), ConfigError);
    std::vector<double> bad(16, 0.0);
    bad[3] = std::nan("");
    CHECK_THROWS_AS(GridField(16, bad), NumericError);
}

TEST_CASE("spectral derivative is exact on resolved harmonics") {
    auto f = sample_field(64, [](double x) { return std::sin(3 * x); });
    auto d1 = differentiate(f, 1);
    CHECK(max_abs_diff(d1, [](double x) { return 3 * std::cos(3 * x); }) < 1e-12);
    auto d2 = differentiate(f, 2);
    CHECK(max_abs_diff(d2, [](double x) { return -9 * std::sin(3 * x); }) < 1e-11);
    auto d3 = differentiate(f, 3);
    CHECK(max_abs_diff(d3, [](double x) { return -27 * std::cos(3 * x); }) < 1e-10);
}

TEST_CASE("spectral derivative on a random band-limited field") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> coef(-1.0, 1.0);
    const int n = 128, kmax = 20;
    std::vector<double> a(kmax + 1), b(kmax + 1);
    for (int k = 1; k <= kmax; ++k) { a[k] = coef(rng); b[k] = coef(rng); }
    auto val = [&](double x) {
        double s = 0;
        for (int k = 1; k <= kmax; ++k) s += a[k] * std::cos(k * x) + b[k] * std::sin(k * x);
        return s;
    };
    auto dval = [&](double x) {
        double s = 0;
        for (int k = 1; k <= kmax; ++k) s += k * (-a[k] * std::sin(k * x) + b[k] * std::cos(k * x));
        return s;
    };
    auto f = sample_field(n, val);
    CHECK(max_abs_diff(differentiate(f, 1), dval) < 1e-11);
}

TEST_CASE("rectangle rule integrates resolved trig polynomials exactly") {
    auto f = sample_field(64, [](double x) { return std::sin(3 * x) * std::sin(3 * x); });
    CHECK(integrate(f) == doctest::Approx(std::numbers::pi).epsilon(1e-14));
    auto g = sample_field(16, [](double) { return 1.0; });
    CHECK(integrate(g) == doctest::Approx(kTwoPi).epsilon(1e-15));
    CHECK(mean_value(g) == doctest::Approx(1.0));
}

TEST_CASE("trigonometric interpolation hits the analytic value off-grid") {
    auto f = sample_field(32, [](double x) { return std::sin(2 * x); });
    CHECK(std::abs(interpolate(f, 0.123) - std::sin(0.246)) < 1e-12);
    // exact at nodes
    Interpolant itp(f);
    for (int j = 0; j < f.n; ++j)
        CHECK(std::abs(itp(grid_node(f.n, j)) - f.values[j]) < 1e-13);
    // periodic extension
    CHECK(std::abs(itp(0.5 + kTwoPi) - itp(0.5)) < 1e-12);
}

TEST_CASE("periodic cubic interpolation converges on smooth fields") {
    auto probe = [](int n) {
        auto f = sample_field(n, [](double x) { return std::exp(std::sin(x)); });
        Interpolant itp(f, Interp::CubicPeriodic);
        double worst = 0;
        for (int i = 0; i < 200; ++i) {
            double x = kTwoPi * (i + 0.37) / 200;
            worst = std::max(worst, std::abs(itp(x) - std::exp(std::sin(x))));
        }
        return worst;
    };
    const double e64 = probe(64), e128 = probe(128);
    CHECK(e128 < 1e-6);
    CHECK(e64 / e128 > 12.0);  // fourth order: ratio ~16
    // exact at nodes
    auto f = sample_field(64, [](double x) { return std::cos(3 * x); });
    Interpolant itp(f, Interp::CubicPeriodic);
    for (int j = 0; j < 64; ++j)
        CHECK(std::abs(itp(grid_node(64, j)) - f.values[j]) < 1e-13);
}

TEST_CASE("compose and invert_monotone round-trip") {
    const int n = 256;
    auto nodes = grid_nodes(n);
    std::vector<double> lift(n);
    for (int j = 0; j < n; ++j) lift[j] = nodes[j] + 0.3 * std::sin(nodes[j]);
    LiftedMap m(n, lift);
    validate_monotone(m);

    LiftedMap minv = invert_monotone(m);
    LiftEvaluator ev(m);
    for (int j = 0; j < n; ++j)
        CHECK(std::abs(ev(minv.lift[j]) - nodes[j]) < 1e-10);

    // composition of the two maps is the identity
    LiftedMap round = compose_maps(m, minv);
    for (int j = 0; j < n; ++j)
        CHECK(std::abs(round.lift[j] - nodes[j]) < 1e-9);

    // compose a field with the map and undo it
    auto f = sample_field(n, [](double x) { return std::cos(x) + 0.5 * std::sin(2 * x); });
    GridField fm = compose(f, m);
    GridField back = compose(fm, minv);
    for (int j = 0; j < n; ++j) CHECK(std::abs(back.values[j] - f.values[j]) < 1e-9);
}

TEST_CASE("invert_monotone rejects a non-diffeomorphism") {
    const int n = 64;
    auto nodes = grid_nodes(n);
    std::vector<double> lift(n);
    for (int j = 0; j < n; ++j) lift[j] = nodes[j] + 1.2 * std::sin(nodes[j]);
    CHECK_THROWS_AS(invert_monotone(LiftedMap(n, lift)), DiffeomorphismError);
}

TEST_CASE("lift derivative matches the analytic Jacobian") {
    const int n = 128;
    auto nodes = grid_nodes(n);
    std::vector<double> lift(n);
    for (int j = 0; j < n; ++j) lift[j] = nodes[j] + 0.25 * std::sin(2 * nodes[j]);
    GridField d = lift_derivative(LiftedMap(n, lift));
    CHECK(max_abs_diff(d, [](double x) { return 1.0 + 0.5 * std::cos(2 * x); }) < 1e-11);
}

TEST_CASE("weighted L2 norm agrees with quadrature") {
    const int n = 64;
    auto f = sample_field(n, [](double x) { return std::sin(x); });
    auto w = sample_field(n, [](double x) { return (1 + 0.5 * std::cos(x)) / kTwoPi; });
    // integral of sin^2 (1 + 0.5 cos x)/2pi dx = pi/2pi = 0.5
    CHECK(l2_norm_weighted(f, w) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
}
