#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include "doctest.h"
#include "wtransport/density.hpp"
#include "wtransport/errors.hpp"
#include "wtransport/flow.hpp"
#include "wtransport/functionals.hpp"
#include "wtransport/noise.hpp"
#include "wtransport/stoch_flow.hpp"

using namespace wtransport;

namespace {

Density cos_density(int n, double amp) {
    std::vector<double> v(n);
    for (int j = 0; j < n; ++j) v[j] = (1.0 + amp * std::cos(grid_node(n, j))) / kTwoPi;
    return Density(GridField(n, v));
}

GridField sampled(int n, const std::function<double(double)>& f) {
    std::vector<double> v(n);
    for (int j = 0; j < n; ++j) v[j] = f(grid_node(n, j));
    return GridField(n, v);
}

// Density pushed forward along the flow of +/-pot for time |h|, 16 RK4 steps.
Density push_at(const Density& rho0, const VelocityPotential& pot, const VelocityPotential& neg,
                double h) {
    FlowState st = FlowState::identity(rho0.n());
    advance_to(st, h > 0 ? pot : neg, std::abs(h), std::abs(h) / 16.0);
    return push_density(rho0, st);
}

}  // namespace

TEST_CASE("energy functionals match closed forms") {
    const int n = 256;
    const Density uni = cos_density(n, 0.0);
    const Density rho = cos_density(n, 0.3);
    const GridField sinx = sampled(n, [](double x) { return std::sin(x); });
    const GridField cosx = sampled(n, [](double x) { return std::cos(x); });

    const Functional Fc = PotentialEnergy{sampled(n, [](double) { return 0.7; })};
    CHECK(evaluate(Fc, rho) == doctest::Approx(0.7).epsilon(1e-15));

    const Functional Fe = InternalEnergy::entropy();
    CHECK(evaluate(Fe, uni) == std::log(1.0 / kTwoPi));

    const Functional Fw = InteractionEnergy::difference_kernel(cosx);
    CHECK(std::abs(evaluate(Fw, uni)) <= 1e-15);

    // D F_phi = int phi' psi' dmu, D F_int = -int (chi'(rho) rho - chi(rho)) psi'' dx,
    // D F_W via Phi(x) = int (W(x,y) + W(y,x)) mu(dy).
    const Functional Fs = PotentialEnergy{sinx};
    CHECK(first_derivative(Fs, uni, sinx) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(second_derivative(Fe, uni, sinx) == doctest::Approx(0.5).epsilon(1e-13));
    CHECK(first_derivative(Fw, rho, cosx) == doctest::Approx(0.15).epsilon(1e-13));
    CHECK(second_derivative(Fw, uni, sinx) == doctest::Approx(0.5).epsilon(1e-13));

    // Constant test functions generate no transport: every derivative is zero.
    const GridField cst = sampled(n, [](double) { return 2.0; });
    CHECK(first_derivative(Fs, rho, cst) == 0.0);
    CHECK(first_derivative(Fe, rho, cst) == 0.0);
    CHECK(first_derivative(Fw, rho, cst) == 0.0);
    CHECK(second_derivative(Fs, rho, cst) == 0.0);
    CHECK(second_derivative(Fe, rho, cst) == 0.0);
    CHECK(second_derivative(Fw, rho, cst) == 0.0);

    CHECK(functional_name(Fs) == "potential");
    CHECK(functional_name(Fe) == "entropy");
    CHECK(functional_name(Functional(InternalEnergy::power(2.0))) == "power");
    CHECK(functional_name(Fw) == "interaction");
}

TEST_CASE("difference kernels expand to the expected grid") {
    const int n = 256;
    const Functional Fw = InteractionEnergy::difference_kernel(
        sampled(n, [](double x) { return std::cos(x) + 0.4 * std::sin(2 * x); }));
    const auto& W = std::get<InteractionEnergy>(Fw);
    REQUIRE(W.n == n);
    double worst = 0.0;
    for (int i = 0; i < n; i += 17)
        for (int j = 0; j < n; j += 13) {
            const double d = grid_node(n, i) - grid_node(n, j);
            worst = std::max(worst, std::abs(W.kernel[static_cast<std::size_t>(i) * n + j] -
                                             (std::cos(d) + 0.4 * std::sin(2 * d))));
        }
    CHECK(worst <= 1e-14);
    CHECK(!W.terms.empty());
}

TEST_CASE("internal drift identity holds on random smooth pairs") {
    const int n = 256;
    std::mt19937_64 eng(7);
    std::normal_distribution<double> g(0.0, 1.0);
    const InternalEnergy ents = InternalEnergy::entropy();
    const InternalEnergy pow2 = InternalEnergy::power(2.0);
    double w1 = 0.0, w2 = 0.0;
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<double> pv(n, 0.0), lr(n, 0.0);
        for (int k = 1; k <= 5; ++k) {
            const double pa = g(eng), pb = g(eng);
            const double ra = 0.25 * g(eng) / k, rb = 0.25 * g(eng) / k;
            for (int j = 0; j < n; ++j) {
                const double x = grid_node(n, j);
                pv[j] += (pa * std::cos(k * x) + pb * std::sin(k * x)) / (k * k);
                lr[j] += ra * std::cos(k * x) + rb * std::sin(k * x);
            }
        }
        std::vector<double> rv(n);
        double mass = 0.0;
        for (int j = 0; j < n; ++j) mass += (rv[j] = std::exp(lr[j]));
        mass *= kTwoPi / n;
        for (double& v : rv) v /= mass;
        const Density rr(GridField(n, rv));
        const GridField ph(n, pv);
        w1 = std::max(w1, internal_drift_identity_check(ents, rr, ph));
        w2 = std::max(w2, internal_drift_identity_check(pow2, rr, ph));
    }
    CHECK(w1 <= 1e-12);
    CHECK(w2 <= 1e-12);
}

TEST_CASE("derivative formulas match flow finite differences") {
    const int n = 256;
    const Density rho = cos_density(n, 0.3);
    const GridField psi = sampled(n, [](double x) { return std::sin(x) + 0.3 * std::cos(2 * x); });
    const VelocityPotential pot({{1, 0.0, 1.0}, {2, 0.3, 0.0}});
    const VelocityPotential neg({{1, 0.0, -1.0}, {2, -0.3, 0.0}});

    struct Probe {
        Functional F;
        double d1, d2;
    };
    std::vector<Probe> probes;
    probes.push_back({PotentialEnergy{sampled(
                          n, [](double x) { return std::sin(x) + 0.5 * std::cos(2 * x); })},
                      0.8, -0.1});
    probes.push_back({InternalEnergy::entropy(), 0.0, 1.22});
    probes.push_back({InternalEnergy::power(2.0), 0.0135 / (kTwoPi / 2.0), 0.40581327});
    probes.push_back({InteractionEnergy::difference_kernel(
                          sampled(n, [](double x) { return std::cos(x); })),
                      0.0135, 0.47345});

    for (const Probe& p : probes) {
        CAPTURE(functional_name(p.F));
        const double d1 = first_derivative(p.F, rho, psi);
        const double d2 = second_derivative(p.F, rho, psi);
        if (p.d1 == 0.0)
            CHECK(std::abs(d1) <= 1e-14);
        else
            CHECK(d1 == doctest::Approx(p.d1).epsilon(1e-7));
        CHECK(d2 == doctest::Approx(p.d2).epsilon(1e-7));

        const double f0 = evaluate(p.F, rho);
        double preverr1 = 0.0, preverr2 = 0.0;
        for (const double h : {1e-2, 5e-3}) {
            const Density rp = push_at(rho, pot, neg, h);
            const Density rm = push_at(rho, pot, neg, -h);
            const double fp = evaluate(p.F, rp), fm = evaluate(p.F, rm);
            const double e1 = std::abs((fp - fm) / (2 * h) - d1);
            const double e2 = std::abs((fp - 2 * f0 + fm) / (h * h) - d2);
            if (preverr1 > 0.0) {
                CHECK(preverr1 / e1 >= 3.5);
                CHECK(preverr1 / e1 <= 4.5);
                CHECK(preverr2 / e2 >= 3.5);
                CHECK(preverr2 / e2 <= 4.5);
                CHECK(e1 <= 1e-5);
                CHECK(e2 <= 1e-5);
            }
            preverr1 = e1;
            preverr2 = e2;
        }
    }
}

TEST_CASE("drift-only compensator residual shrinks at second order") {
    const int n = 256;
    const Density rho = cos_density(n, 0.3);
    const VelocityPotential pot({{1, 0.0, 1.0}, {2, 0.3, 0.0}});
    const std::vector<Functional> Fs = {
        PotentialEnergy{sampled(n, [](double x) { return std::sin(x) + 0.5 * std::cos(2 * x); })},
        InternalEnergy::entropy(),
        InteractionEnergy::difference_kernel(sampled(n, [](double x) { return std::cos(x); }))};
    for (const Functional& F : Fs) {
        CAPTURE(functional_name(F));
        const double coarse = ito_drift_residual(F, rho, pot, 1e-3, 0.5);
        const double fine = ito_drift_residual(F, rho, pot, 5e-4, 0.5);
        CHECK(coarse <= 1e-7);
        CHECK(coarse / fine >= 3.5);
        CHECK(coarse / fine <= 4.5);
    }
}

TEST_CASE("product rule for second derivatives along the flow") {
    const int n = 256;
    const Density uni = cos_density(n, 0.0);
    const Density rho = cos_density(n, 0.3);
    const GridField sinx = sampled(n, [](double x) { return std::sin(x); });
    const GridField cosx = sampled(n, [](double x) { return std::cos(x); });
    const GridField psi = sampled(n, [](double x) { return std::sin(x) + 0.3 * std::cos(2 * x); });
    const Functional F1 = PotentialEnergy{sinx};
    const Functional F2 = PotentialEnergy{cosx};
    const VelocityPotential pot({{1, 0.0, 1.0}, {2, 0.3, 0.0}});
    const VelocityPotential neg({{1, 0.0, -1.0}, {2, -0.3, 0.0}});

    // D2(F1 F2) = F2 D2F1 + F1 D2F2 + 2 (DF1)(DF2) along the same field.
    const double expansion = evaluate(F2, rho) * second_derivative(F1, rho, psi) +
                             evaluate(F1, rho) * second_derivative(F2, rho, psi) +
                             2.0 * first_derivative(F1, rho, psi) * first_derivative(F2, rho, psi);
    const double g0 = evaluate(F1, rho) * evaluate(F2, rho);
    std::vector<double> fds;
    double prev = 0.0;
    for (const double h : {1e-2, 5e-3}) {
        const Density rp = push_at(rho, pot, neg, h);
        const Density rm = push_at(rho, pot, neg, -h);
        const double gp = evaluate(F1, rp) * evaluate(F2, rp);
        const double gm = evaluate(F1, rm) * evaluate(F2, rm);
        const double fd = (gp - 2 * g0 + gm) / (h * h);
        fds.push_back(fd);
        const double err = std::abs(fd - expansion);
        if (prev > 0.0) {
            CHECK(prev / err >= 3.5);
            CHECK(prev / err <= 4.5);
        }
        prev = err;
    }
    const double richardson = (4.0 * fds[1] - fds[0]) / 3.0;
    CHECK(std::abs(richardson - expansion) <= 1e-9);

    // At the uniform density every term of the expansion is analytic.
    const double lhs = evaluate(F2, uni) * second_derivative(F1, uni, sinx) +
                       evaluate(F1, uni) * second_derivative(F2, uni, sinx) +
                       2.0 * first_derivative(F1, uni, sinx) * first_derivative(F2, uni, sinx);
    CHECK(std::abs(lhs) <= 1e-15);
    CHECK(first_derivative(F1, uni, sinx) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(std::abs(first_derivative(F2, uni, sinx)) <= 1e-15);
}

TEST_CASE("weak density form closes along deterministic and stochastic paths") {
    const int n = 256;
    const Density rho = cos_density(n, 0.3);
    const VelocityPotential pot({{1, 0.0, 1.0}, {2, 0.3, 0.0}});
    PotentialChannels silent({pot}, {0.0});
    const double dt = 1e-3;
    const int steps = 250;

    std::vector<Density> det;
    det.push_back(rho);
    FlowState st = FlowState::identity(n);
    for (int k = 0; k < steps; ++k) {
        advance_flow(st, pot, dt);
        det.push_back(push_density(rho, st));
    }
    const BrownianDriver drv = sample_driver(3, dt, steps, 1);
    const GridField theta =
        sampled(n, [](double x) { return std::cos(x) + 0.2 * std::sin(3 * x); });
    CHECK(spde_residual(det, silent, drv, theta, &pot) <= 1e-8);
    CHECK(spde_residual(det, silent, drv, sampled(n, [](double) { return 1.3; }), &pot) <= 1e-14);

    // Noisy paths: the residual is O(dt) in the time step, coupled refinement.
    const NoiseBasis basis(2, 3.0);
    FourierChannels chans(basis);
    double loggeo = 0.0;
    for (const std::uint64_t s : {11ULL, 12ULL, 13ULL, 14ULL}) {
        const BrownianDriver fine = sample_driver(s, 5e-4, 500, basis.channels());
        const BrownianDriver coarse = fine.coarsened(2);
        const auto pf = stochastic_density_path(rho, chans, fine, Scheme::StratHeun);
        const auto pc = stochastic_density_path(rho, chans, coarse, Scheme::StratHeun);
        REQUIRE(pf.size() == 501);
        REQUIRE(pc.size() == 251);
        const double rf = spde_residual(pf, chans, fine, theta);
        const double rc = spde_residual(pc, chans, coarse, theta);
        CAPTURE(s);
        CHECK(rf > 1e-5);
        CHECK(rf <= 1e-2);
        CHECK(rc > rf);
        loggeo += std::log(rc / rf);
    }
    CHECK(std::exp(loggeo / 4.0) == doctest::Approx(1.496).epsilon(0.02));
}

TEST_CASE("ito verification centers the compensated increment") {
    const int n = 256;
    const Density uni = cos_density(n, 0.0);
    const Density rho = cos_density(n, 0.3);
    const GridField sinx = sampled(n, [](double x) { return std::sin(x); });
    const GridField psi = sampled(n, [](double x) { return std::sin(x) + 0.3 * std::cos(2 * x); });
    PotentialChannels chans({VelocityPotential({{1, 0.0, 1.0}})}, {1.0});

    // Odd observable, even noise and even start: the antithetic flip mirrors
    // the flow, the pair averages cancel to roundoff and z is floored to ~0.
    const ItoReport deg =
        ito_verify(PotentialEnergy{sinx}, uni, chans, 42, 128, 1e-3, 0.08, 8);
    CHECK(deg.functional == "potential");
    CHECK(deg.paths == 128);
    CHECK(deg.seed == 42);
    CHECK(std::abs(deg.estimate) <= 1e-14);
    CHECK(deg.std_error <= 1e-15);
    CHECK(deg.scale == doctest::Approx(0.1311857).epsilon(1e-3));
    CHECK(std::abs(deg.z_score) <= 1e-3);
    CHECK(deg.pass);
    CHECK(deg.martingale_pass);
    REQUIRE(deg.blocks.size() == 8);
    CHECK(deg.blocks.front().t0 == 0.0);
    CHECK(deg.blocks.back().t1 == doctest::Approx(0.08).epsilon(1e-12));
    for (const auto& b : deg.blocks) CHECK(std::abs(b.z) <= 1e-3);

    // Mixed-parity observable on a tilted start: genuinely statistical.
    const ItoReport mix = ito_verify(PotentialEnergy{psi}, rho, chans, 42, 128, 1e-3, 0.08, 8);
    CHECK(mix.estimate == doctest::Approx(6.884361e-04).epsilon(1e-5));
    CHECK(mix.std_error == doctest::Approx(8.221601e-04).epsilon(1e-5));
    CHECK(mix.std_error > 1e-5);
    CHECK(mix.z_score == doctest::Approx(0.837350).epsilon(1e-4));
    CHECK(mix.pass);
    CHECK(mix.martingale_pass);

    const ItoReport ent =
        ito_verify(InternalEnergy::entropy(), rho, chans, 42, 128, 1e-3, 0.08, 8);
    CHECK(ent.functional == "entropy");
    CHECK(ent.z_score == doctest::Approx(-0.844669).epsilon(1e-4));
    CHECK(ent.scale == doctest::Approx(1.837323).epsilon(1e-3));
    CHECK(ent.pass);
    CHECK(ent.martingale_pass);

    const ItoReport inter = ito_verify(
        InteractionEnergy::difference_kernel(sampled(n, [](double x) { return std::cos(x); })),
        rho, chans, 42, 128, 1e-3, 0.08, 8);
    CHECK(inter.functional == "interaction");
    CHECK(inter.z_score == doctest::Approx(-0.833462).epsilon(1e-4));
    CHECK(inter.pass);
    CHECK(inter.martingale_pass);

    // Same configuration reruns bitwise identically.
    const ItoReport again = ito_verify(PotentialEnergy{psi}, rho, chans, 42, 128, 1e-3, 0.08, 8);
    CHECK(again.estimate == mix.estimate);
    CHECK(again.std_error == mix.std_error);
    CHECK(again.z_score == mix.z_score);
}

TEST_CASE("functional configuration errors are rejected") {
    const int n = 256;
    const Density rho = cos_density(n, 0.3);
    const GridField sinx = sampled(n, [](double x) { return std::sin(x); });
    const GridField small = sampled(64, [](double x) { return std::sin(x); });
    PotentialChannels chans({VelocityPotential({{1, 0.0, 1.0}})}, {1.0});
    const Functional Fs = PotentialEnergy{sinx};

    CHECK_THROWS_AS((void)InternalEnergy::power(1.0), ConfigError);
    CHECK_THROWS_AS((void)InternalEnergy::power(0.5), ConfigError);
    CHECK_THROWS_AS(InternalEnergy(nullptr, nullptr, nullptr, "broken"), ConfigError);

    CHECK_THROWS_AS(InteractionEnergy(1, {0.0}), ConfigError);
    CHECK_THROWS_AS(InteractionEnergy(4, std::vector<double>(15, 0.0)), ConfigError);
    std::vector<double> bad(static_cast<std::size_t>(4) * 4, 0.0);
    bad[5] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(InteractionEnergy(4, bad), ConfigError);
    CHECK_THROWS_AS((void)InteractionEnergy::separable({}), ConfigError);
    CHECK_THROWS_AS((void)InteractionEnergy::separable({{sinx, small}}), ConfigError);
    CHECK_THROWS_AS(
        (void)InteractionEnergy::difference_kernel(sampled(n, [](double) { return 0.0; })),
        ConfigError);

    CHECK_THROWS_AS((void)evaluate(Functional(PotentialEnergy{small}), rho), ConfigError);
    CHECK_THROWS_AS((void)first_derivative(Fs, rho, small), ConfigError);
    CHECK_THROWS_AS((void)internal_drift_identity_check(InternalEnergy::entropy(), rho, small),
                    ConfigError);

    CHECK_THROWS_AS((void)ito_verify(Fs, rho, chans, 1, 62, 1e-3, 0.08, 8), ConfigError);
    CHECK_THROWS_AS((void)ito_verify(Fs, rho, chans, 1, 129, 1e-3, 0.08, 8), ConfigError);
    CHECK_THROWS_AS((void)ito_verify(Fs, rho, chans, 1, 128, 1e-3, 0.08, 7), ConfigError);
    CHECK_THROWS_AS((void)ito_verify(Fs, rho, chans, 1, 128, 1e-3, 0.08, 0), ConfigError);
    CHECK_THROWS_AS((void)ito_verify(Fs, rho, chans, 1, 128, 3e-4, 0.08, 8), ConfigError);
    CHECK_THROWS_AS((void)ito_verify(Fs, rho, chans, 1, 128, 1e-3, -0.08, 8), ConfigError);

    // Raw dense kernels carry no separable terms, so pathwise pullback fails.
    std::vector<double> flat(static_cast<std::size_t>(n) * n, 0.5);
    CHECK_THROWS_AS(
        (void)ito_verify(Functional(InteractionEnergy(n, flat)), rho, chans, 1, 128, 1e-3, 0.08, 8),
        ConfigError);
    CHECK(evaluate(Functional(InteractionEnergy(n, flat)), rho) ==
          doctest::Approx(0.5).epsilon(1e-12));

    const BrownianDriver drv = sample_driver(1, 1e-3, 10, 1);
    std::vector<Density> path(10, rho);
    CHECK_THROWS_AS((void)spde_residual(path, chans, drv, sinx, nullptr), ConfigError);
    path.push_back(rho);
    const NoiseBasis basis(2, 3.0);
    FourierChannels four(basis);
    CHECK_THROWS_AS((void)spde_residual(path, four, drv, sinx, nullptr), ConfigError);
    CHECK_THROWS_AS((void)spde_residual(path, chans, drv, small, nullptr), ConfigError);

    CHECK_THROWS_AS((void)ito_drift_residual(Fs, rho, VelocityPotential({{1, 0.0, 1.0}}),
                                             3e-4, 0.001),
                    ConfigError);
}
