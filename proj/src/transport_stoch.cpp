#include "wtransport/transport_stoch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace wtransport {

namespace {

constexpr double kMeanTol = 1e-8;

int exact_step_count(double T, double dt, const char* who) {
    const int steps = static_cast<int>(std::llround(T / dt));
    if (!(steps > 0) || std::abs(steps * dt - T) > 1e-9 * std::max(1.0, T))
        throw ConfigError(std::string(who) + ": horizon must be an integer multiple of dt");
    return steps;
}

/** One contracted stage of the coupled system at (X, J, f): flow pieces
 *  vel = sum_c w_c dphi_c(X) dB_c, sec = sum_c w_c d2phi_c(X) dB_c, the
 *  transport scalar S = sum_c w_c (int f d2phi_c(X) J dx) dB_c, and the
 *  Lagrangian total mass of 1/rho_t, C = int J^2/rho0 dx. With theta
 *  requested (Ito scheme) also accumulates
 *    tfield_j = -sum_c (w_c^2/2) Sa_c d2phi_c(X_j)
 *    tscalar  = sum_c (w_c^2/2) (-Sb_c + 3 Sa_c j2hat_c)
 *  where Sa_c = int f d2phi_c(X) J dx, Sb_c = int f dcurv_c(X) J dx and
 *  j2hat_c = (1/C) int d2phi_c(X) J^2/rho0 dx. */
void transport_stage(ChannelAdapter& chans, const std::vector<double>& X, const GridField& J,
                     const std::vector<double>& f, const Density& rho0,
                     const std::vector<double>& dB, std::vector<double>& vel,
                     std::vector<double>& sec, double& S, double& C,
                     std::vector<double>* tfield, double* tscalar) {
    const std::size_t n = X.size();
    const double w = kTwoPi / static_cast<double>(n);
    chans.prepare(X);

    C = 0.0;
    for (std::size_t j = 0; j < n; ++j) C += J[j] * J[j] / rho0[j];
    C *= w;

    std::fill(vel.begin(), vel.end(), 0.0);
    std::fill(sec.begin(), sec.end(), 0.0);
    S = 0.0;
    if (tfield) {
        std::fill(tfield->begin(), tfield->end(), 0.0);
        *tscalar = 0.0;
    }

    for (int c = 0; c < chans.channels(); ++c) {
        const double wc = chans.weight(c);
        if (wc == 0.0) continue;
        const double wb = wc * dB[static_cast<std::size_t>(c)];
        const double* d1 = chans.dphi_row(c);
        for (std::size_t j = 0; j < n; ++j) vel[j] += wb * d1[j];
        const double* d2 = chans.d2phi_row(c);
        double sa = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            sec[j] += wb * d2[j];
            sa += f[j] * d2[j] * J[j];
        }
        sa *= w;
        S += wb * sa;
        if (tfield) {
            const double half_w2 = 0.5 * wc * wc;
            double j2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                (*tfield)[j] -= half_w2 * sa * d2[j];
                j2 += d2[j] * J[j] * J[j] / rho0[j];
            }
            j2 *= w / C;
            const double* dc = chans.dcurv_row(c);
            double sb = 0.0;
            for (std::size_t j = 0; j < n; ++j) sb += f[j] * dc[j] * J[j];
            sb *= w;
            *tscalar += half_w2 * (3.0 * sa * j2 - sb);
        }
    }
}

double weighted_norm2(const std::vector<double>& f, const Density& rho0) {
    const std::size_t n = f.size();
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += f[j] * f[j] * rho0[j];
    return acc * kTwoPi / static_cast<double>(n);
}

double lagrangian_mean(const std::vector<double>& f, const GridField& J) {
    const std::size_t n = f.size();
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += f[j] * J[j];
    return acc * kTwoPi / static_cast<double>(n);
}

}  // namespace

DriftCoefficients drift_coefficients(ChannelAdapter& chans, const StochFlowState& state,
                                     const Density& rho_t) {
    const int n = rho_t.n();
    if (state.X.n != n) throw ConfigError("drift coefficients: state and density grids differ");
    const Interpolant rho_at(rho_t.rho);
    std::vector<double> rtX(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        rtX[j] = rho_at(state.X.lift[j]);
        if (!(rtX[j] > 0.0)) throw DensityError("drift coefficients: density vanished along the flow");
    }
    chans.prepare(state.X.lift);
    DriftCoefficients out;
    out.a.reserve(chans.channels());
    out.b.reserve(chans.channels());
    for (int c = 0; c < chans.channels(); ++c) {
        std::vector<double> av(static_cast<std::size_t>(n)), bv(static_cast<std::size_t>(n));
        const double* d2 = chans.d2phi_row(c);
        for (int j = 0; j < n; ++j) av[j] = d2[j] / rtX[j];
        const double* dc = chans.dcurv_row(c);
        for (int j = 0; j < n; ++j) bv[j] = dc[j] / rtX[j];
        out.a.emplace_back(n, std::move(av));
        out.b.emplace_back(n, std::move(bv));
    }
    return out;
}

std::pair<GridField, GridField> lambda_theta(int channel, const GridField& f,
                                             const DriftCoefficients& coeffs,
                                             const Density& rho_t, const StochFlowState& state,
                                             ChannelAdapter& chans) {
    const int n = rho_t.n();
    if (channel < 0 || channel >= static_cast<int>(coeffs.a.size()))
        throw ConfigError("lambda_theta: channel out of range");
    const double w = kTwoPi / n;

    // C = int dx / rho_t on the Eulerian grid
    double C = 0.0;
    for (int j = 0; j < n; ++j) C += 1.0 / rho_t[j];
    C *= w;

    const Interpolant rho_at(rho_t.rho);
    std::vector<double> rtX(static_cast<std::size_t>(n)), rhatX(static_cast<std::size_t>(n)),
        rho0(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        rtX[j] = rho_at(state.X.lift[j]);
        if (!(rtX[j] > 0.0)) throw DensityError("lambda_theta: density vanished along the flow");
        rhatX[j] = 1.0 / (C * rtX[j]);
        rho0[j] = rtX[j] * state.J[j];  // transport identity recovers the base density
    }

    const GridField& a = coeffs.a[static_cast<std::size_t>(channel)];
    const GridField& b = coeffs.b[static_cast<std::size_t>(channel)];
    double Sa = 0.0, Sb = 0.0;
    for (int j = 0; j < n; ++j) {
        Sa += f[j] * a[j] * rho0[j];
        Sb += f[j] * b[j] * rho0[j];
    }
    Sa *= w;
    Sb *= w;

    // d2phi_c along the particles and the grid integral int d2phi_c rhohat dx
    // via the Lagrangian identity (1/C) int d2phi_c(X) J^2/rho0 dx.
    chans.prepare(state.X.lift);
    const double* d2 = chans.d2phi_row(channel);
    double j2hat = 0.0;
    for (int j = 0; j < n; ++j) j2hat += d2[j] * state.J[j] * state.J[j] / rho0[j];
    j2hat *= w / C;

    std::vector<double> lam(static_cast<std::size_t>(n)), th(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        lam[j] = -Sa * rhatX[j];
        th[j] = (-Sa * d2[j] - Sb + 3.0 * Sa * j2hat) * rhatX[j];
    }
    return {GridField(n, std::move(lam)), GridField(n, std::move(th))};
}

void stoch_transport_step(StochParallelState& state, ChannelAdapter& chans,
                          const BrownianDriver& driver, int step, const Density& rho0,
                          Scheme scheme) {
    StochFlowState& fl = state.flow;
    const std::size_t n = fl.X.lift.size();
    const std::vector<double> dB = driver.increments_at(step);
    std::vector<double> vel(n), sec(n);
    double S = 0.0, C = 0.0;

    if (scheme == Scheme::StratHeun) {
        transport_stage(chans, fl.X.lift, fl.J, state.f.values, rho0, dB, vel, sec, S, C,
                        nullptr, nullptr);
        std::vector<double> fdot(n);
        for (std::size_t j = 0; j < n; ++j) fdot[j] = -S * fl.J[j] / (C * rho0[j]);
        // predictor
        std::vector<double> xp(n), fp(n);
        GridField jp = fl.J;
        for (std::size_t j = 0; j < n; ++j) {
            xp[j] = fl.X.lift[j] + vel[j];
            jp.values[j] = fl.J[j] * std::exp(sec[j]);
            fp[j] = state.f[j] + fdot[j];
        }
        std::vector<double> vel1(n), sec1(n);
        double S1 = 0.0, C1 = 0.0;
        transport_stage(chans, xp, jp, fp, rho0, dB, vel1, sec1, S1, C1, nullptr, nullptr);
        for (std::size_t j = 0; j < n; ++j) {
            const double fdot1 = -S1 * jp[j] / (C1 * rho0[j]);
            fl.X.lift[j] += 0.5 * (vel[j] + vel1[j]);
            const double dlog = 0.5 * (sec[j] + sec1[j]);
            fl.J.values[j] *= std::exp(dlog);
            fl.logKhat.values[j] += dlog;
            state.f.values[j] += 0.5 * (fdot[j] + fdot1);
        }
    } else if (scheme == Scheme::StratMidpoint) {
        // fixed-point sweeps at arithmetic midpoints; conserves int f J dx
        // to the sweep residual because the stage cancellation holds exactly
        // at the starred state.
        std::vector<double> xn(fl.X.lift), jn(fl.J.values), fn(state.f.values);
        std::vector<double> xm(n), jm(n), fm(n);
        for (int sweep = 0; sweep < 4; ++sweep) {
            for (std::size_t j = 0; j < n; ++j) {
                xm[j] = 0.5 * (fl.X.lift[j] + xn[j]);
                jm[j] = 0.5 * (fl.J[j] + jn[j]);
                fm[j] = 0.5 * (state.f[j] + fn[j]);
            }
            GridField jmid(static_cast<int>(n), jm);
            transport_stage(chans, xm, jmid, fm, rho0, dB, vel, sec, S, C, nullptr, nullptr);
            for (std::size_t j = 0; j < n; ++j) {
                xn[j] = fl.X.lift[j] + vel[j];
                jn[j] = fl.J[j] + jm[j] * sec[j];
                fn[j] = state.f[j] - S * jm[j] / (C * rho0[j]);
            }
        }
        for (std::size_t j = 0; j < n; ++j) {
            const double ratio = jn[j] / fl.J[j];
            if (!(ratio > 0.0))
                throw DiffeomorphismError("stochastic transport: Jacobian update lost positivity");
            fl.X.lift[j] = xn[j];
            fl.J.values[j] = jn[j];
            fl.logKhat.values[j] += std::log(ratio);
            state.f.values[j] = fn[j];
        }
    } else {
        std::vector<double> tfield(n);
        double tscalar = 0.0;
        transport_stage(chans, fl.X.lift, fl.J, state.f.values, rho0, dB, vel, sec, S, C,
                        &tfield, &tscalar);
        std::vector<double> ddx(n), dlogdrift(n);
        chans.ito_drifts(ddx, dlogdrift);
        const double dt = driver.dt;
        for (std::size_t j = 0; j < n; ++j) {
            const double rhatX = fl.J[j] / (C * rho0[j]);
            state.f.values[j] += -S * rhatX + dt * rhatX * (tfield[j] + tscalar);
            fl.X.lift[j] += vel[j] + dt * ddx[j];
            const double dlog = sec[j] + dt * dlogdrift[j];
            fl.J.values[j] *= std::exp(dlog);
            fl.logKhat.values[j] += dlog;
        }
    }

    fl.t += driver.dt;
    validate_flow_step(fl);
    for (std::size_t j = 0; j < n; ++j)
        if (!std::isfinite(state.f[j]))
            throw NumericError("stochastic transport: field became non-finite");
}

StochTransportResult integrate_stoch_parallel(
    const GridField& g0, ChannelAdapter& chans, const BrownianDriver& driver,
    const Density& rho0, Scheme scheme,
    const std::function<void(const StochParallelState&)>& observer) {
    const int n = rho0.n();
    if (g0.n != n) throw ConfigError("stochastic transport: field and density grids differ");
    if (std::abs(mean_value(g0)) > kMeanTol)
        throw ConfigError("stochastic transport: initial field must have zero mean");

    StochParallelState st;
    st.flow = StochFlowState::identity(n);
    st.f = g0;

    StochTransportResult out;
    out.records.reserve(static_cast<std::size_t>(driver.steps) + 1);
    const double norm0 = weighted_norm2(st.f.values, rho0);
    if (!(norm0 > 0.0)) throw ConfigError("stochastic transport: initial field must be nonzero");
    out.records.push_back({0.0, norm0, lagrangian_mean(st.f.values, st.flow.J)});

    for (int s = 0; s < driver.steps; ++s) {
        stoch_transport_step(st, chans, driver, s, rho0, scheme);
        const double norm2 = weighted_norm2(st.f.values, rho0);
        const double mean_g = lagrangian_mean(st.f.values, st.flow.J);
        out.records.push_back({st.flow.t, norm2, mean_g});
        out.norm_drift_rel = std::max(out.norm_drift_rel, std::abs(norm2 - norm0) / norm0);
        out.max_abs_mean_g = std::max(out.max_abs_mean_g, std::abs(mean_g));
        if (observer) observer(st);
    }
    out.kunita_gap_final = kunita_gap(st.flow);
    out.state = std::move(st.flow);
    out.f = std::move(st.f);
    return out;
}

GridField eulerian_field(const StochTransportResult& result, Interp method) {
    return compose(result.f, invert_monotone(result.state.X), method);
}

TransportBatchReport stoch_transport_batch(std::uint64_t seed, const GridField& g0,
                                           const Density& rho0, ChannelAdapter& chans,
                                           int paths, double dt_fine, double T, Scheme scheme,
                                           int coarsen_block) {
    if (paths < 1) throw ConfigError("transport batch: need at least one path");
    const int fine_steps = exact_step_count(T, dt_fine, "transport batch");
    TransportBatchReport rep;
    rep.paths = paths;
    rep.dt = dt_fine * coarsen_block;
    rep.T = T;
    rep.seed = seed;
    rep.norm_drifts.reserve(static_cast<std::size_t>(paths));
    for (int p = 0; p < paths; ++p) {
        BrownianDriver drv = sample_driver(path_seed(seed, static_cast<std::uint64_t>(p)),
                                           dt_fine, fine_steps, chans.channels());
        if (coarsen_block > 1) drv = drv.coarsened(coarsen_block);
        const StochTransportResult r = integrate_stoch_parallel(g0, chans, drv, rho0, scheme);
        rep.norm_drifts.push_back(r.norm_drift_rel);
        rep.worst_norm_drift = std::max(rep.worst_norm_drift, r.norm_drift_rel);
        rep.worst_mean_g = std::max(rep.worst_mean_g, r.max_abs_mean_g);
        rep.worst_kunita_gap = std::max(rep.worst_kunita_gap, r.kunita_gap_final);
    }
    return rep;
}

SchemeGapReport scheme_agreement_experiment(std::uint64_t seed, const GridField& g0,
                                            const Density& rho0, int N, double q,
                                            const std::vector<double>& dts, double T, int paths,
                                            double order_threshold) {
    if (dts.size() < 2) throw ConfigError("scheme agreement: need at least two step sizes");
    NoiseBasis basis(N, q);
    FourierChannels chans(basis);
    SchemeGapReport rep;
    rep.dts = dts;
    rep.threshold = order_threshold;
    for (double dt : dts) {
        const int steps = exact_step_count(T, dt, "scheme agreement");
        double sum = 0.0, sumsq = 0.0;
        for (int p = 0; p < paths; ++p) {
            const BrownianDriver drv = sample_driver(path_seed(seed, static_cast<std::uint64_t>(p)),
                                                     dt, steps, basis.channels());
            const StochTransportResult a =
                integrate_stoch_parallel(g0, chans, drv, rho0, Scheme::StratHeun);
            const StochTransportResult b =
                integrate_stoch_parallel(g0, chans, drv, rho0, Scheme::ItoEuler);
            GridField d = a.f - b.f;
            const double g2 = weighted_norm2(d.values, rho0);
            sum += g2;
            sumsq += g2 * g2;
        }
        const double mean = sum / paths;
        const double var = std::max(0.0, sumsq / paths - mean * mean);
        rep.gaps.push_back(mean);
        rep.std_errors.push_back(std::sqrt(var / paths));
    }
    // least-squares slope of log gap against log dt (positive = decays with dt)
    const std::size_t m = dts.size();
    double xbar = 0.0;
    for (double dt : dts) xbar += std::log(dt);
    xbar /= static_cast<double>(m);
    double den = 0.0, num = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double dx = std::log(dts[i]) - xbar;
        den += dx * dx;
        num += dx * std::log(rep.gaps[i]);
    }
    rep.order = num / den;
    rep.pass = rep.order >= order_threshold;
    return rep;
}

GalerkinReport galerkin_convergence(std::uint64_t seed, const GridField& g0, const Density& rho0,
                                    double q, const std::vector<int>& levels, int ref_level,
                                    int paths, double dt, double T, double beta,
                                    double slope_threshold) {
    if (!(q > 2.5)) throw ConfigError("galerkin convergence: weight exponent must exceed 5/2");
    if (levels.empty()) throw ConfigError("galerkin convergence: need at least one level");
    for (std::size_t i = 0; i + 1 < levels.size(); ++i)
        if (levels[i] >= levels[i + 1]) throw ConfigError("galerkin convergence: levels must increase");
    for (int L : levels) {
        if (L < 1) throw ConfigError("galerkin convergence: levels must be positive");
        if (L > ref_level) throw ConfigError("galerkin convergence: reference must dominate levels");
    }
    if (paths < 8) throw ConfigError("galerkin convergence: need at least 8 paths");
    const int n = rho0.n();
    if (g0.n != n) throw ConfigError("galerkin convergence: field and density grids differ");
    if (std::abs(mean_value(g0)) > kMeanTol)
        throw ConfigError("galerkin convergence: initial field must have zero mean");
    const int steps = exact_step_count(T, dt, "galerkin convergence");

    const std::size_t nl = levels.size();
    std::vector<FourierChannels> adapters;
    adapters.reserve(nl + 1);
    for (int L : levels) adapters.emplace_back(NoiseBasis(L, q));
    adapters.emplace_back(NoiseBasis(ref_level, q));

    std::vector<double> sum(nl, 0.0), sumsq(nl, 0.0);
    std::vector<int> exceed(nl, 0);
    const double w = kTwoPi / n;

    for (int p = 0; p < paths; ++p) {
        const BrownianDriver drv = sample_driver(path_seed(seed, static_cast<std::uint64_t>(p)),
                                                 dt, steps, 2 * ref_level);
        std::vector<StochParallelState> st(nl + 1);
        for (std::size_t i = 0; i <= nl; ++i) {
            st[i].flow = StochFlowState::identity(n);
            st[i].f = g0;
        }
        std::vector<double> sup(nl, 0.0);
        for (int s = 0; s < steps; ++s) {
            for (std::size_t i = 0; i <= nl; ++i)
                stoch_transport_step(st[i], adapters[i], drv, s, rho0, Scheme::StratHeun);
            const std::vector<double>& fref = st[nl].f.values;
            for (std::size_t i = 0; i < nl; ++i) {
                double acc = 0.0;
                for (int j = 0; j < n; ++j) {
                    const double d = st[i].f.values[j] - fref[j];
                    acc += d * d * rho0[j];
                }
                sup[i] = std::max(sup[i], acc * w);
            }
        }
        for (std::size_t i = 0; i < nl; ++i) {
            sum[i] += sup[i];
            sumsq[i] += sup[i] * sup[i];
            if (sup[i] > std::pow(static_cast<double>(levels[i]), -beta)) ++exceed[i];
        }
    }

    GalerkinReport rep;
    rep.levels = levels;
    rep.ref_level = ref_level;
    rep.q = q;
    rep.dt = dt;
    rep.T = T;
    rep.beta = beta;
    rep.paths = paths;
    rep.n = n;
    rep.seed = seed;
    rep.slope_bound = -(q - 0.5);
    rep.slope_threshold = slope_threshold;
    rep.sup_errors.resize(nl);
    rep.std_errors.resize(nl);
    rep.exceedance.resize(nl);
    for (std::size_t i = 0; i < nl; ++i) {
        const double mean = sum[i] / paths;
        const double var = std::max(0.0, sumsq[i] / paths - mean * mean);
        rep.sup_errors[i] = mean;
        rep.std_errors[i] = std::sqrt(var / paths);
        rep.exceedance[i] = static_cast<double>(exceed[i]) / paths;
    }
    rep.decreasing = true;
    for (std::size_t i = 0; i + 1 < nl; ++i)
        if (!(rep.sup_errors[i + 1] < rep.sup_errors[i])) rep.decreasing = false;

    bool positive = true;
    for (double v : rep.sup_errors)
        if (!(v > 0.0)) positive = false;
    if (positive && nl >= 2) {
        double xbar = 0.0;
        for (int L : levels) xbar += std::log(static_cast<double>(L));
        xbar /= static_cast<double>(nl);
        double den = 0.0, num = 0.0, varslope = 0.0;
        for (std::size_t i = 0; i < nl; ++i) {
            const double dx = std::log(static_cast<double>(levels[i])) - xbar;
            den += dx * dx;
        }
        for (std::size_t i = 0; i < nl; ++i) {
            const double ccoef = (std::log(static_cast<double>(levels[i])) - xbar) / den;
            num += ccoef * std::log(rep.sup_errors[i]);
            const double rel = rep.std_errors[i] / rep.sup_errors[i];
            varslope += ccoef * ccoef * rel * rel;
        }
        rep.slope = num;
        rep.slope_se = std::sqrt(varslope);
    } else {
        rep.slope = -std::numeric_limits<double>::infinity();
        rep.slope_se = 0.0;
    }
    rep.pass = rep.decreasing && rep.slope <= slope_threshold;
    return rep;
}

double rs_identity_check(const Density& rho_t, const GridField& phi, const GridField& psi) {
    const int n = rho_t.n();
    if (phi.n != n || psi.n != n) throw ConfigError("drift identity check: grid mismatch");

    const GridField d1phi = differentiate(phi, 1);
    const GridField d2phi = differentiate(phi, 2);
    const GridField d2psi = differentiate(psi, 2);
    const GridField rhat = hat_density(rho_t);
    const GridField dxrhat = differentiate(rhat, 1);

    // log-derivative of the density for the eight-term side
    std::vector<double> logr(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) logr[j] = std::log(rho_t[j]);
    const GridField dlogr = differentiate(GridField(n, std::move(logr)), 1);

    const double A = integrate(d2psi * d1phi);
    const GridField u = d2psi * d1phi;
    const GridField du = differentiate(u, 1);

    // eight printed terms
    const GridField I1 = du * d1phi;
    const GridField I2 = (-A) * (dxrhat * d1phi);
    const GridField I3 = (-integrate(I1)) * rhat;
    const GridField I4 = (A * integrate(dxrhat * d1phi)) * rhat;
    const GridField J1 = A * (d2phi * rhat);
    const GridField J2 = A * (dlogr * d1phi * rhat);
    const GridField J3 = (-A * integrate(d2phi * rhat)) * rhat;
    const GridField J4 = (-A * integrate(dlogr * d1phi * rhat)) * rhat;
    const GridField eight = I1 + I2 + I3 + I4 + J1 + J2 + J3 + J4;

    // consolidated form after merging I2+J2 and I4+J4
    const GridField consolidated = I1 + I3 + J1 + J3 + 2.0 * I2 + 2.0 * I4;

    return l2_norm(eight - consolidated);
}

}  // namespace wtransport
