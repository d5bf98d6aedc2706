#include "wtransport/gridfield.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>

namespace wtransport {

namespace {

// FFTW plan creation is not thread-safe; new-array execution is. Plans are
// created once per size with FFTW_UNALIGNED so any caller buffer works.
struct Plans {
    fftw_plan fwd;
    fftw_plan bwd;
};

const Plans& plans_for(int n) {
    static std::mutex mtx;
    static std::map<int, Plans> cache;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(n);
    if (it == cache.end()) {
        std::vector<double> re(n);
        std::vector<fftw_complex> co(n / 2 + 1);
        Plans p;
        p.fwd = fftw_plan_dft_r2c_1d(n, re.data(), co.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
        p.bwd = fftw_plan_dft_c2r_1d(n, co.data(), re.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
        it = cache.emplace(n, p).first;
    }
    return it->second;
}

// Forward real FFT: C_k = sum_j f_j e^{-i 2 pi j k / n}, k = 0..n/2.
std::vector<std::complex<double>> rfft(const GridField& f) {
    const int n = f.n;
    std::vector<double> in(f.values);
    std::vector<std::complex<double>> out(n / 2 + 1);
    fftw_execute_dft_r2c(plans_for(n).fwd, in.data(),
                         reinterpret_cast<fftw_complex*>(out.data()));
    return out;
}

GridField irfft(int n, std::vector<std::complex<double>> coef) {
    std::vector<double> out(n);
    fftw_execute_dft_c2r(plans_for(n).bwd,
                         reinterpret_cast<fftw_complex*>(coef.data()), out.data());
    for (double& v : out) v /= n;
    return GridField(n, std::move(out));
}

void check_finite(const std::vector<double>& v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw NumericError(std::string(what) + ": non-finite value");
}

}  // namespace

void check_grid_size(int n) {
    if (n < 8 || (n & (n - 1)) != 0)
        throw ConfigError("grid size must be a power of two >= 8, got " + std::to_string(n));
}

GridField::GridField(int n_, std::vector<double> vals) : n(n_), values(std::move(vals)) {
    check_grid_size(n);
    if (static_cast<int>(values.size()) != n)
        throw ConfigError("grid field: value count does not match n");
    check_finite(values, "grid field");
}

std::vector<double> grid_nodes(int n) {
    check_grid_size(n);
    std::vector<double> x(n);
    for (int j = 0; j < n; ++j) x[j] = kTwoPi * j / n;
    return x;
}

double grid_node(int n, int j) { return kTwoPi * j / n; }

GridField sample_field(int n, const std::function<double(double)>& f) {
    check_grid_size(n);
    std::vector<double> v(n);
    for (int j = 0; j < n; ++j) v[j] = f(kTwoPi * j / n);
    return GridField(n, std::move(v));
}

double integrate(const GridField& f) {
    double s = 0.0, c = 0.0;  // Kahan
    for (double v : f.values) {
        double y = v - c;
        double t = s + y;
        c = (t - s) - y;
        s = t;
    }
    return s * (kTwoPi / f.n);
}

double mean_value(const GridField& f) { return integrate(f) / kTwoPi; }

double l2_norm(const GridField& f) {
    double s = 0.0;
    for (double v : f.values) s += v * v;
    return std::sqrt(s * (kTwoPi / f.n));
}

double l2_norm_weighted(const GridField& f, const GridField& w) {
    if (f.n != w.n) throw ConfigError("weighted norm: grid mismatch");
    double s = 0.0;
    for (int j = 0; j < f.n; ++j) s += f.values[j] * f.values[j] * w.values[j];
    return std::sqrt(s * (kTwoPi / f.n));
}

GridField differentiate(const GridField& f, int order) {
    if (order < 1 || order > 3) throw ConfigError("differentiate: order must be 1..3");
    const int n = f.n;
    auto c = rfft(f);
    for (int k = 0; k <= n / 2; ++k) {
        std::complex<double> ik(0.0, static_cast<double>(k));
        std::complex<double> factor = 1.0;
        for (int p = 0; p < order; ++p) factor *= ik;
        c[k] *= factor;
    }
    if (order % 2 == 1) c[n / 2] = 0.0;  // Nyquist has no well-defined odd derivative
    return irfft(n, std::move(c));
}

Interpolant::Interpolant(const GridField& f, Interp method) : n_(f.n), method_(method) {
    const int n = n_;
    if (method_ == Interp::Spectral) {
        auto c = rfft(f);
        a_.resize(n / 2 + 1);
        b_.resize(n / 2 + 1);
        a_[0] = c[0].real() / n;
        b_[0] = 0.0;
        for (int k = 1; k < n / 2; ++k) {
            a_[k] = 2.0 * c[k].real() / n;
            b_[k] = -2.0 * c[k].imag() / n;
        }
        a_[n / 2] = c[n / 2].real() / n;
        b_[n / 2] = 0.0;
    } else {
        // Periodic cubic spline: cyclic tridiagonal solve for second
        // derivatives (Sherman-Morrison on the wrap terms).
        y_ = f.values;
        const double h = kTwoPi / n;
        std::vector<double> rhs(n);
        for (int j = 0; j < n; ++j) {
            double ym = y_[(j + n - 1) % n], yp = y_[(j + 1) % n];
            rhs[j] = 6.0 * (yp - 2.0 * y_[j] + ym) / (h * h);
        }
        // Cyclic system y2[j-1] + 4 y2[j] + y2[j+1] = rhs[j]: handle the wrap
        // corners with Sherman-Morrison (two plain tridiagonal solves).
        const double gamma = -4.0;
        auto solve_mod = [&](const std::vector<double>& d) {
            std::vector<double> diag(n, 4.0);
            diag[0] = 4.0 - gamma;
            diag[n - 1] = 4.0 - 1.0 / gamma;
            std::vector<double> cp(n), dp(n);
            double bt = diag[0];
            cp[0] = 1.0 / bt;
            dp[0] = d[0] / bt;
            for (int i = 1; i < n; ++i) {
                bt = diag[i] - cp[i - 1];
                cp[i] = 1.0 / bt;
                dp[i] = (d[i] - dp[i - 1]) / bt;
            }
            std::vector<double> x(n);
            x[n - 1] = dp[n - 1];
            for (int i = n - 2; i >= 0; --i) x[i] = dp[i] - cp[i] * x[i + 1];
            return x;
        };
        std::vector<double> u(n, 0.0);
        u[0] = gamma;
        u[n - 1] = 1.0;
        std::vector<double> x = solve_mod(rhs);
        std::vector<double> z = solve_mod(u);
        const double vx = x[0] + x[n - 1] / gamma;
        const double vz = z[0] + z[n - 1] / gamma;
        const double fac = vx / (1.0 + vz);
        y2_.resize(n);
        for (int i = 0; i < n; ++i) y2_[i] = x[i] - fac * z[i];
    }
}

double Interpolant::operator()(double x) const {
    const int n = n_;
    if (method_ == Interp::Spectral) {
        // recurrence over harmonics: c_{k+1} = c_k c_1 - s_k s_1, etc.
        const double c1 = std::cos(x), s1 = std::sin(x);
        double ck = c1, sk = s1;
        double acc = a_[0];
        for (int k = 1; k < n / 2; ++k) {
            acc += a_[k] * ck + b_[k] * sk;
            const double cn = ck * c1 - sk * s1;
            sk = sk * c1 + ck * s1;
            ck = cn;
        }
        acc += a_[n / 2] * ck;  // Nyquist: cosine only
        return acc;
    }
    const double h = kTwoPi / n;
    double xr = std::fmod(x, kTwoPi);
    if (xr < 0) xr += kTwoPi;
    int j = static_cast<int>(xr / h);
    if (j >= n) j = n - 1;
    const int jp = (j + 1) % n;
    const double A = ((j + 1) * h - xr) / h;
    const double B = 1.0 - A;
    return A * y_[j] + B * y_[jp] +
           ((A * A * A - A) * y2_[j] + (B * B * B - B) * y2_[jp]) * (h * h) / 6.0;
}

double interpolate(const GridField& f, double x, Interp method) {
    return Interpolant(f, method)(x);
}

LiftedMap::LiftedMap(int n_, std::vector<double> lift_) : n(n_), lift(std::move(lift_)) {
    check_grid_size(n);
    if (static_cast<int>(lift.size()) != n)
        throw ConfigError("lifted map: value count does not match n");
    check_finite(lift, "lifted map");
}

LiftedMap LiftedMap::identity(int n) {
    return LiftedMap(n, grid_nodes(n));
}

GridField LiftedMap::periodic_part() const {
    std::vector<double> p(n);
    for (int j = 0; j < n; ++j) p[j] = lift[j] - grid_node(n, j);
    return GridField(n, std::move(p));
}

void validate_monotone(const LiftedMap& m) {
    for (int j = 0; j + 1 < m.n; ++j)
        if (!(m.lift[j + 1] > m.lift[j]))
            throw DiffeomorphismError("map lift is not strictly increasing");
    if (!(m.lift[0] + kTwoPi > m.lift[m.n - 1]))
        throw DiffeomorphismError("map lift violates winding one at the seam");
}

LiftEvaluator::LiftEvaluator(const LiftedMap& m, Interp method)
    : p_(m.periodic_part(), method), dp_(differentiate(m.periodic_part(), 1), method) {}

GridField compose(const GridField& f, const LiftedMap& m, Interp method) {
    if (f.n != m.n) throw ConfigError("compose: grid mismatch");
    Interpolant itp(f, method);
    std::vector<double> v(m.n);
    for (int j = 0; j < m.n; ++j) v[j] = itp(m.lift[j]);
    return GridField(m.n, std::move(v));
}

LiftedMap compose_maps(const LiftedMap& outer, const LiftedMap& inner) {
    if (outer.n != inner.n) throw ConfigError("compose_maps: grid mismatch");
    Interpolant p(outer.periodic_part());
    std::vector<double> lift(inner.n);
    for (int j = 0; j < inner.n; ++j) lift[j] = inner.lift[j] + p(inner.lift[j]);
    return LiftedMap(inner.n, std::move(lift));
}

GridField lift_derivative(const LiftedMap& m) {
    GridField d = differentiate(m.periodic_part(), 1);
    for (double& v : d.values) v += 1.0;
    return d;
}

LiftedMap invert_monotone(const LiftedMap& m) {
    validate_monotone(m);
    const int n = m.n;
    GridField p = m.periodic_part();
    Interpolant pi(p);
    Interpolant dpi(differentiate(p, 1));
    const double pmin = *std::min_element(p.values.begin(), p.values.end());
    const double pmax = *std::max_element(p.values.begin(), p.values.end());

    std::vector<double> inv(n);
    for (int j = 0; j < n; ++j) {
        const double y = grid_node(n, j);
        // m(z) = z + p(z) = y has a root near [y - pmax, y - pmin]; the
        // interpolant can overshoot the grid range between nodes, so widen
        // until the bracket straddles a sign change.
        auto F = [&](double z) { return z + pi(z) - y; };
        double margin = 1e-9;
        double lo = y - pmax - margin, hi = y - pmin + margin;
        while ((F(lo) >= 0.0 || F(hi) <= 0.0) && margin < 1.0) {
            margin *= 10.0;
            lo = y - pmax - margin;
            hi = y - pmin + margin;
        }
        if (F(lo) >= 0.0 || F(hi) <= 0.0)
            throw DiffeomorphismError("invert_monotone: could not bracket the inverse");
        double z = y - pi(y);  // first-order guess
        z = std::clamp(z, lo, hi);
        double f = F(z);
        bool done = false;
        for (int it = 0; it < 100; ++it) {
            if (std::abs(f) <= 1e-13) { done = true; break; }
            if (f > 0) hi = z; else lo = z;
            const double d = 1.0 + dpi(z);
            double zn = (d > 1e-12) ? z - f / d : 0.5 * (lo + hi);
            if (!(zn > lo && zn < hi)) zn = 0.5 * (lo + hi);
            z = zn;
            f = F(z);
        }
        if (!done && std::abs(f) > 1e-10)
            throw DiffeomorphismError("invert_monotone: Newton failed to converge");
        inv[j] = z;
    }
    LiftedMap out(n, std::move(inv));
    validate_monotone(out);
    return out;
}

GridField operator+(const GridField& f, const GridField& g) {
    if (f.n != g.n) throw ConfigError("field add: grid mismatch");
    std::vector<double> v(f.n);
    for (int j = 0; j < f.n; ++j) v[j] = f.values[j] + g.values[j];
    return GridField(f.n, std::move(v));
}

GridField operator-(const GridField& f, const GridField& g) {
    if (f.n != g.n) throw ConfigError("field sub: grid mismatch");
    std::vector<double> v(f.n);
    for (int j = 0; j < f.n; ++j) v[j] = f.values[j] - g.values[j];
    return GridField(f.n, std::move(v));
}

GridField operator*(const GridField& f, const GridField& g) {
    if (f.n != g.n) throw ConfigError("field mul: grid mismatch");
    std::vector<double> v(f.n);
    for (int j = 0; j < f.n; ++j) v[j] = f.values[j] * g.values[j];
    return GridField(f.n, std::move(v));
}

GridField operator*(double s, const GridField& f) {
    std::vector<double> v(f.n);
    for (int j = 0; j < f.n; ++j) v[j] = s * f.values[j];
    return GridField(f.n, std::move(v));
}

}  // namespace wtransport
