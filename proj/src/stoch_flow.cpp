#include "wtransport/stoch_flow.hpp"

#include <algorithm>
#include <limits>
#include <cmath>

namespace wtransport {

namespace {

constexpr double kJacFloor = 1e-10;

void check_monotone_lift(const std::vector<double>& lift) {
    const std::size_t n = lift.size();
    for (std::size_t j = 0; j + 1 < n; ++j) {
        if (!(lift[j + 1] > lift[j]))
            throw DiffeomorphismError("stochastic flow: map lost monotonicity (dt too large for the noise)");
    }
    if (!(lift[0] + kTwoPi > lift[n - 1]))
        throw DiffeomorphismError("stochastic flow: map lost monotonicity at the seam");
}

// Accumulate the Stratonovich increments contracted with dB:
// vel_j = sum_c w_c dphi_c(x_j) dB_c, sec_j = sum_c w_c d2phi_c(x_j) dB_c.
void contract(ChannelAdapter& chans, const std::vector<double>& dB,
              std::vector<double>& vel, std::vector<double>& sec) {
    const std::size_t n = vel.size();
    std::fill(vel.begin(), vel.end(), 0.0);
    std::fill(sec.begin(), sec.end(), 0.0);
    for (int c = 0; c < chans.channels(); ++c) {
        const double wb = chans.weight(c) * dB[static_cast<std::size_t>(c)];
        if (wb == 0.0) continue;
        const double* d1 = chans.dphi_row(c);
        for (std::size_t j = 0; j < n; ++j) vel[j] += wb * d1[j];
        const double* d2 = chans.d2phi_row(c);
        for (std::size_t j = 0; j < n; ++j) sec[j] += wb * d2[j];
    }
}

}  // namespace

FourierChannels::FourierChannels(const NoiseBasis& basis) : basis_(basis) {}

void FourierChannels::prepare(const std::vector<double>& x) {
    table_.build(x, basis_.N);
    scratch_d2_.resize(x.size());
    scratch_dc_.resize(x.size());
}

const double* FourierChannels::dphi_row(int c) {
    const int k = basis_.pair_k(c);
    return (c % 2 == 0) ? table_.cos_row(k) : table_.sin_row(k);
}

const double* FourierChannels::d2phi_row(int c) {
    const int k = basis_.pair_k(c);
    const double kk = static_cast<double>(k);
    const double* src = (c % 2 == 0) ? table_.sin_row(k) : table_.cos_row(k);
    const double fac = (c % 2 == 0) ? -kk : kk;
    for (std::size_t j = 0; j < table_.n; ++j) scratch_d2_[j] = fac * src[j];
    return scratch_d2_.data();
}

const double* FourierChannels::dcurv_row(int c) {
    // +-k^2 cos(2kx) with cos(2a) = 2 cos^2 a - 1
    const int k = basis_.pair_k(c);
    const double fac = (c % 2 == 0) ? -static_cast<double>(k) * k : static_cast<double>(k) * k;
    const double* ck = table_.cos_row(k);
    for (std::size_t j = 0; j < table_.n; ++j) scratch_dc_[j] = fac * (2.0 * ck[j] * ck[j] - 1.0);
    return scratch_dc_.data();
}

void FourierChannels::ito_drifts(std::vector<double>& dx, std::vector<double>& dlog) {
    std::fill(dx.begin(), dx.end(), 0.0);
    std::fill(dlog.begin(), dlog.end(), basis_.strat_log_drift());
}

PotentialChannels::PotentialChannels(std::vector<VelocityPotential> fields,
                                     std::vector<double> weights)
    : fields_(std::move(fields)), weights_(std::move(weights)) {
    if (fields_.empty()) throw ConfigError("PotentialChannels: need at least one channel");
    if (fields_.size() != weights_.size())
        throw ConfigError("PotentialChannels: one weight per channel required");
}

void PotentialChannels::prepare(const std::vector<double>& x) {
    x_ = x;
    row_d1_.resize(x.size());
    row_d2_.resize(x.size());
    row_dc_.resize(x.size());
    cached_ = -1;
}

void PotentialChannels::fill(int c) {
    if (cached_ == c) return;
    const VelocityPotential& f = fields_[static_cast<std::size_t>(c)];
    for (std::size_t j = 0; j < x_.size(); ++j) {
        const double d1 = f.dx(0.0, x_[j]);
        const double d2 = f.dxx(0.0, x_[j]);
        const double d3 = f.dxxx(0.0, x_[j]);
        row_d1_[j] = d1;
        row_d2_[j] = d2;
        row_dc_[j] = d3 * d1 + d2 * d2;
    }
    cached_ = c;
}

const double* PotentialChannels::dphi_row(int c) {
    fill(c);
    return row_d1_.data();
}

const double* PotentialChannels::d2phi_row(int c) {
    fill(c);
    return row_d2_.data();
}

const double* PotentialChannels::dcurv_row(int c) {
    fill(c);
    return row_dc_.data();
}

void PotentialChannels::ito_drifts(std::vector<double>& dx, std::vector<double>& dlog) {
    std::fill(dx.begin(), dx.end(), 0.0);
    std::fill(dlog.begin(), dlog.end(), 0.0);
    for (int c = 0; c < channels(); ++c) {
        const double w2 = 0.5 * weights_[static_cast<std::size_t>(c)] * weights_[static_cast<std::size_t>(c)];
        const VelocityPotential& f = fields_[static_cast<std::size_t>(c)];
        for (std::size_t j = 0; j < x_.size(); ++j) {
            const double d1 = f.dx(0.0, x_[j]);
            const double d2 = f.dxx(0.0, x_[j]);
            const double d3 = f.dxxx(0.0, x_[j]);
            dx[j] += w2 * d2 * d1;
            dlog[j] += w2 * d3 * d1;
        }
    }
}

StochFlowState StochFlowState::identity(int n) {
    StochFlowState s;
    s.t = 0.0;
    s.X = LiftedMap::identity(n);
    s.J = GridField(n, std::vector<double>(static_cast<std::size_t>(n), 1.0));
    s.logKhat = GridField(n, std::vector<double>(static_cast<std::size_t>(n), 0.0));
    return s;
}

void advance_stoch_flow(StochFlowState& state, ChannelAdapter& chans,
                        const BrownianDriver& driver, int step, Scheme scheme) {
    const std::size_t n = state.X.lift.size();
    const std::vector<double> dB = driver.increments_at(step);
    std::vector<double> vel(n), sec(n);

    chans.prepare(state.X.lift);
    contract(chans, dB, vel, sec);

    if (scheme == Scheme::StratHeun) {
        // predictor
        std::vector<double> xp(n);
        for (std::size_t j = 0; j < n; ++j) xp[j] = state.X.lift[j] + vel[j];
        // corrector stage at the predicted point
        std::vector<double> vel1(n), sec1(n);
        chans.prepare(xp);
        contract(chans, dB, vel1, sec1);
        for (std::size_t j = 0; j < n; ++j) {
            state.X.lift[j] += 0.5 * (vel[j] + vel1[j]);
            const double dlog = 0.5 * (sec[j] + sec1[j]);
            state.J.values[j] *= std::exp(dlog);
            state.logKhat.values[j] += dlog;
        }
    } else if (scheme == Scheme::StratMidpoint) {
        // fixed-point sweeps of X_new = X + vel(X*), J_new = J + J* sec(X*)
        // at the arithmetic midpoints; the first sweep reuses the stage
        // already contracted at X (X* = X when X_new is seeded with X).
        std::vector<double> xn(n), jn(n), xm(n), jm(n);
        for (std::size_t j = 0; j < n; ++j) {
            xn[j] = state.X.lift[j] + vel[j];
            jn[j] = state.J[j] * (1.0 + sec[j]);
        }
        for (int sweep = 1; sweep < 4; ++sweep) {
            for (std::size_t j = 0; j < n; ++j) {
                xm[j] = 0.5 * (state.X.lift[j] + xn[j]);
                jm[j] = 0.5 * (state.J[j] + jn[j]);
            }
            chans.prepare(xm);
            contract(chans, dB, vel, sec);
            for (std::size_t j = 0; j < n; ++j) {
                xn[j] = state.X.lift[j] + vel[j];
                jn[j] = state.J[j] + jm[j] * sec[j];
            }
        }
        for (std::size_t j = 0; j < n; ++j) {
            const double ratio = jn[j] / state.J[j];
            if (!(ratio > 0.0))
                throw DiffeomorphismError("stochastic flow: Jacobian update lost positivity");
            state.X.lift[j] = xn[j];
            state.J.values[j] = jn[j];
            state.logKhat.values[j] += std::log(ratio);
        }
    } else {
        std::vector<double> ddx(n), dlogdrift(n);
        chans.ito_drifts(ddx, dlogdrift);
        const double dt = driver.dt;
        for (std::size_t j = 0; j < n; ++j) {
            state.X.lift[j] += vel[j] + dt * ddx[j];
            const double dlog = sec[j] + dt * dlogdrift[j];
            state.J.values[j] *= std::exp(dlog);
            state.logKhat.values[j] += dlog;
        }
    }

    state.t += driver.dt;
    validate_flow_step(state);
}

void validate_flow_step(const StochFlowState& state) {
    check_monotone_lift(state.X.lift);
    for (std::size_t j = 0; j < state.X.lift.size(); ++j) {
        if (!(state.J[j] > kJacFloor))
            throw DiffeomorphismError("stochastic flow: Jacobian lost positivity");
        if (!std::isfinite(state.X.lift[j]) || !std::isfinite(state.logKhat[j]))
            throw NumericError("stochastic flow: state became non-finite");
    }
}

GridField kunita_density(const StochFlowState& state) {
    GridField out = state.logKhat;
    for (double& v : out.values) v = std::exp(v);
    return out;
}

double kunita_gap(const StochFlowState& state) {
    double gap = 0.0;
    for (std::size_t j = 0; j < state.J.values.size(); ++j)
        gap = std::max(gap, std::abs(std::exp(state.logKhat[j]) - state.J[j]) / state.J[j]);
    return gap;
}

namespace {

struct SlopeFit {
    double slope = 0.0;
    double slope_se = 0.0;  // from per-point SEs by the delta method
};

SlopeFit fit_loglog(const std::vector<double>& ns, const std::vector<double>& means,
                    const std::vector<double>& ses) {
    const std::size_t m = ns.size();
    for (double v : means)
        if (!(v > 0.0)) return {-std::numeric_limits<double>::infinity(), 0.0};
    if (m < 2) return {0.0, 0.0};
    std::vector<double> lx(m), ly(m), sy(m);
    for (std::size_t i = 0; i < m; ++i) {
        lx[i] = std::log(ns[i]);
        ly[i] = std::log(means[i]);
        sy[i] = ses[i] / means[i];
    }
    double xbar = 0.0;
    for (double v : lx) xbar += v;
    xbar /= static_cast<double>(m);
    double den = 0.0;
    for (double v : lx) den += (v - xbar) * (v - xbar);
    SlopeFit fit;
    double var = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double c = (lx[i] - xbar) / den;
        fit.slope += c * ly[i];
        var += c * c * sy[i] * sy[i];
    }
    fit.slope_se = std::sqrt(var);
    return fit;
}

}  // namespace

CouplingReport coupling_error_experiment(std::uint64_t seed, const std::vector<int>& levels,
                                         int ref_level, double q, int n, double dt, double T,
                                         int p, int paths, double slope_threshold) {
    if (levels.empty()) throw ConfigError("coupling experiment: need at least one level");
    for (std::size_t i = 0; i + 1 < levels.size(); ++i)
        if (levels[i] >= levels[i + 1]) throw ConfigError("coupling experiment: levels must increase");
    for (int L : levels) {
        if (L < 1) throw ConfigError("coupling experiment: levels must be positive");
        if (L > ref_level) throw ConfigError("coupling experiment: reference level must dominate all levels");
    }
    if (p < 1) throw ConfigError("coupling experiment: moment order must be >= 1");
    if (paths < 32) throw ConfigError("coupling experiment: need at least 32 paths");
    check_grid_size(n);

    const int steps = static_cast<int>(std::llround(T / dt));
    if (!(steps > 0) || std::abs(steps * dt - T) > 1e-9 * std::max(1.0, T))
        throw ConfigError("coupling experiment: T must be an integer multiple of dt");

    const std::size_t nl = levels.size();
    std::vector<double> sum(nl, 0.0), sumsq(nl, 0.0);

    std::vector<FourierChannels> adapters;
    adapters.reserve(nl + 1);
    for (int L : levels) adapters.emplace_back(NoiseBasis(L, q));
    adapters.emplace_back(NoiseBasis(ref_level, q));

    for (int path = 0; path < paths; ++path) {
        const BrownianDriver drv = sample_driver(path_seed(seed, static_cast<std::uint64_t>(path)),
                                                 dt, steps, 2 * ref_level);
        std::vector<StochFlowState> st;
        st.reserve(nl + 1);
        for (std::size_t i = 0; i <= nl; ++i) st.push_back(StochFlowState::identity(n));
        for (int s = 0; s < steps; ++s)
            for (std::size_t i = 0; i <= nl; ++i)
                advance_stoch_flow(st[i], adapters[i], drv, s, Scheme::StratHeun);
        const std::vector<double>& ref = st[nl].X.lift;
        for (std::size_t i = 0; i < nl; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < ref.size(); ++j) {
                const double d = st[i].X.lift[j] - ref[j];
                acc += std::pow(d * d, p);
            }
            acc /= static_cast<double>(ref.size());
            sum[i] += acc;
            sumsq[i] += acc * acc;
        }
    }

    CouplingReport rep;
    rep.levels = levels;
    rep.ref_level = ref_level;
    rep.q = q;
    rep.dt = dt;
    rep.T = T;
    rep.p = p;
    rep.paths = paths;
    rep.n = n;
    rep.seed = seed;
    rep.slope_bound = -(2.0 * q - 1.0);
    rep.slope_threshold = slope_threshold;
    rep.estimates.resize(nl);
    rep.std_errors.resize(nl);
    std::vector<double> ns(nl);
    for (std::size_t i = 0; i < nl; ++i) {
        const double mean = sum[i] / paths;
        const double var = std::max(0.0, sumsq[i] / paths - mean * mean);
        rep.estimates[i] = mean;
        rep.std_errors[i] = std::sqrt(var / paths);
        ns[i] = static_cast<double>(levels[i]);
    }
    rep.decreasing = true;
    for (std::size_t i = 0; i + 1 < nl; ++i)
        if (!(rep.estimates[i + 1] < rep.estimates[i])) rep.decreasing = false;
    const SlopeFit fit = fit_loglog(ns, rep.estimates, rep.std_errors);
    rep.slope = fit.slope;
    rep.slope_se = fit.slope_se;
    rep.pass = rep.decreasing && rep.slope <= slope_threshold;
    return rep;
}

MomentReport moment_bound_check(std::uint64_t seed, int N, double q, int n, double dt,
                                double t, int p, int paths) {
    if (p < 1) throw ConfigError("moment check: moment order must be >= 1");
    check_grid_size(n);
    const int steps = static_cast<int>(std::llround(t / dt));
    if (!(steps > 0) || std::abs(steps * dt - t) > 1e-9 * std::max(1.0, t))
        throw ConfigError("moment check: t must be an integer multiple of dt");

    NoiseBasis basis(N, q);
    FourierChannels chans(basis);
    // Stratonovich-to-Ito shift: K-hat = K-tilde * exp(t/2 sum_{k<=N} k^{2-2q})
    const double ito_shift = -basis.strat_log_drift() * t;

    double sum = 0.0, sumsq = 0.0;
    for (int path = 0; path < paths; ++path) {
        const BrownianDriver drv = sample_driver(path_seed(seed, static_cast<std::uint64_t>(path)),
                                                 dt, steps, basis.channels());
        StochFlowState st = StochFlowState::identity(n);
        for (int s = 0; s < steps; ++s) advance_stoch_flow(st, chans, drv, s, Scheme::StratHeun);
        const double khat = std::exp(st.logKhat[0] + ito_shift);
        const double stat = std::pow(khat, p);
        sum += stat;
        sumsq += stat * stat;
    }

    MomentReport rep;
    rep.N = N;
    rep.q = q;
    rep.dt = dt;
    rep.t = t;
    rep.p = p;
    rep.paths = paths;
    rep.n = n;
    rep.seed = seed;
    rep.estimate = sum / paths;
    const double var = std::max(0.0, sumsq / paths - rep.estimate * rep.estimate);
    rep.std_error = std::sqrt(var / paths);
    rep.ci_lo = rep.estimate - 1.96 * rep.std_error;
    rep.ci_hi = rep.estimate + 1.96 * rep.std_error;
    rep.bound = std::exp(static_cast<double>(p) * p * zeta_sum(2.0 * q - 2.0) * t);
    double partial = 0.0;
    for (int k = 1; k <= N; ++k) partial += std::pow(static_cast<double>(k), 2.0 - 2.0 * q);
    rep.exact = std::exp(0.5 * p * p * partial * t);
    rep.pass = rep.ci_hi <= rep.bound;
    return rep;
}

}  // namespace wtransport
