#include "wtransport/transport_det.hpp"

#include <cmath>

namespace wtransport {

namespace {

// Lambda on raw stage vectors; dx2X = dxx phi_t(X) already evaluated.
void lambda_raw(const std::vector<double>& f, const std::vector<double>& dx2X,
                const std::vector<double>& jac, const Density& rho0, std::vector<double>& out) {
    const int n = rho0.n();
    const double w = kTwoPi / n;
    double S = 0.0, C = 0.0;
    for (int j = 0; j < n; ++j) {
        S += f[j] * dx2X[j] * jac[j];
        C += jac[j] * jac[j] / rho0[j];
    }
    S *= w;
    C *= w;
    // hat(rho_t)(X) = J / (C rho0)
    for (int j = 0; j < n; ++j) out[j] = -S * jac[j] / (C * rho0[j]);
}

}  // namespace

GridField lambda_det(double t, const GridField& f, const VelocityPotential& V,
                     const Density& rho0, const FlowState& flow) {
    const int n = rho0.n();
    if (f.n != n || flow.X.n != n) throw ConfigError("lambda_det: grid mismatch");
    std::vector<double> vdx, vdxx, out(n);
    V.eval_flow_fields(t, flow.X.lift, vdx, vdxx);
    lambda_raw(f.values, vdxx, flow.J.values, rho0, out);
    return GridField(n, std::move(out));
}

DetTransportResult integrate_parallel_det(
    const VelocityPotential& V, const Density& rho0, const GridField& g0, double T, double dt,
    const std::function<void(double, const GridField&, const FlowState&)>& observer) {
    const int n = rho0.n();
    if (g0.n != n) throw ConfigError("transport: grid mismatch");
    if (!(dt > 0) || !(T > 0)) throw ConfigError("transport: need positive T and dt");
    if (std::abs(integrate(g0)) > 1e-8)
        throw ConfigError("transport: initial field must have zero mean (tangency)");

    FlowState st = FlowState::identity(n);
    std::vector<double> f(g0.values);

    const double w = kTwoPi / n;
    auto norm2 = [&](const std::vector<double>& ff) {
        double s = 0;
        for (int j = 0; j < n; ++j) s += ff[j] * ff[j] * rho0[j];
        return s * w;
    };
    auto mean_g = [&](const std::vector<double>& ff, const std::vector<double>& jac) {
        double s = 0;
        for (int j = 0; j < n; ++j) s += ff[j] * jac[j];
        return s * w;
    };

    DetTransportResult res;
    res.records.push_back({0.0, norm2(f), mean_g(f, st.J.values)});
    const double norm0 = res.records[0].norm2;
    if (!(norm0 > 0)) throw ConfigError("transport: initial field is zero");

    std::vector<double> xs(n), js(n), fs(n), kx(n), kj(n), kf(n);
    std::vector<double> ax(n), aj(n), af(n);
    std::vector<double> vdx, vdxx;

    double drift = 0.0, worst_mean = std::abs(res.records[0].mean_g);

    while (st.t < T - 1e-12) {
        const double h = std::min(dt, T - st.t);
        const double stage_t[4] = {st.t, st.t + h / 2, st.t + h / 2, st.t + h};
        const double stage_c[4] = {0.0, 0.5, 0.5, 1.0};
        const double comb[4] = {1.0 / 6, 1.0 / 3, 1.0 / 3, 1.0 / 6};
        std::fill(ax.begin(), ax.end(), 0.0);
        std::fill(aj.begin(), aj.end(), 0.0);
        std::fill(af.begin(), af.end(), 0.0);
        for (int s = 0; s < 4; ++s) {
            for (int j = 0; j < n; ++j) {
                const double c = stage_c[s] * h;
                xs[j] = st.X.lift[j] + (s == 0 ? 0.0 : c * kx[j]);
                js[j] = st.J.values[j] + (s == 0 ? 0.0 : c * kj[j]);
                fs[j] = f[j] + (s == 0 ? 0.0 : c * kf[j]);
            }
            V.eval_flow_fields(stage_t[s], xs, vdx, vdxx);
            lambda_raw(fs, vdxx, js, rho0, kf);
            for (int j = 0; j < n; ++j) {
                kx[j] = vdx[j];
                kj[j] = vdxx[j] * js[j];
                ax[j] += comb[s] * kx[j];
                aj[j] += comb[s] * kj[j];
                af[j] += comb[s] * kf[j];
            }
        }
        std::vector<double> x1(n), j1(n);
        for (int j = 0; j < n; ++j) {
            x1[j] = st.X.lift[j] + h * ax[j];
            j1[j] = st.J.values[j] + h * aj[j];
            f[j] += h * af[j];
            if (!(j1[j] > 1e-10)) throw DiffeomorphismError("transport: Jacobian lost positivity");
            if (!std::isfinite(f[j])) throw NumericError("transport: field blew up");
        }
        LiftedMap X1(n, std::move(x1));
        validate_monotone(X1);
        st.X = std::move(X1);
        st.J = GridField(n, std::move(j1));
        st.t += h;

        const double nr = norm2(f), mg = mean_g(f, st.J.values);
        res.records.push_back({st.t, nr, mg});
        drift = std::max(drift, std::abs(nr - norm0) / norm0);
        worst_mean = std::max(worst_mean, std::abs(mg));
        if (observer) observer(st.t, GridField(n, f), st);
    }

    res.flow = std::move(st);
    res.f = GridField(n, std::move(f));
    res.norm_drift_rel = drift;
    res.max_abs_mean_g = worst_mean;
    return res;
}

GridField eulerian_field(const GridField& f, const FlowState& flow) {
    LiftedMap Xinv = invert_monotone(flow.X);
    return compose(f, Xinv);
}

double weak_form_residual(const VelocityPotential& V, const Density& rho0,
                          const GridField& g0, const GridField& test, double t, double h,
                          double dt) {
    const int n = rho0.n();
    if (!(h > 0) || t - h < 0 || h < dt) throw ConfigError("weak form: need dt <= h <= t");
    GridField dtest = differentiate(test, 1);
    GridField d2test = differentiate(test, 2);
    Interpolant dtest_i(dtest), d2test_i(d2test);

    const double w = kTwoPi / n;
    double A_m = 0, A_p = 0, B = 0;
    auto obs = [&](double tt, const GridField& f, const FlowState& fl) {
        const bool at_m = std::abs(tt - (t - h)) <= dt / 2;
        const bool at_t = std::abs(tt - t) <= dt / 2;
        const bool at_p = std::abs(tt - (t + h)) <= dt / 2;
        if (at_m || at_p) {
            double a = 0;
            for (int j = 0; j < n; ++j) a += dtest_i(fl.X.lift[j]) * f.values[j] * rho0[j];
            (at_m ? A_m : A_p) = a * w;
        }
        if (at_t) {
            double b = 0;
            for (int j = 0; j < n; ++j)
                b += d2test_i(fl.X.lift[j]) * V.dx(tt, fl.X.lift[j]) * f.values[j] * rho0[j];
            B = b * w;
        }
    };
    integrate_parallel_det(V, rho0, g0, t + h, dt, obs);
    return std::abs((A_p - A_m) / (2 * h) - B);
}

}  // namespace wtransport
