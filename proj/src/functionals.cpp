#include "wtransport/functionals.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "wtransport/errors.hpp"

namespace wtransport {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

int exact_step_count(double T, double dt, const char* who) {
    if (!(T > 0.0) || !(dt > 0.0))
        throw ConfigError(std::string(who) + ": need T > 0 and dt > 0");
    const double q = T / dt;
    const long long k = std::llround(q);
    if (k < 1 || std::abs(q - static_cast<double>(k)) > 1e-9 * std::max(1.0, q))
        throw ConfigError(std::string(who) + ": T must be an integer multiple of dt");
    return static_cast<int>(k);
}

// Sparse trigonometric form of a band-limited grid field; derivatives are
// exact mode rotations, so pullback evaluation at flowed points costs one
// sincos per retained mode per point.
struct TrigPoly {
    double c0 = 0.0;
    std::vector<double> k, ca, cb;

    static TrigPoly from_field(const GridField& f) {
        const int n = f.n;
        TrigPoly p;
        double scale = 0.0, s0 = 0.0;
        for (double v : f.values) {
            scale = std::max(scale, std::abs(v));
            s0 += v;
        }
        p.c0 = s0 / n;
        const double tol = 1e-12 * std::max(1.0, scale);
        for (int m = 1; m <= n / 2; ++m) {
            double a = 0.0, b = 0.0;
            for (int j = 0; j < n; ++j) {
                const double x = grid_node(n, j);
                a += f.values[j] * std::cos(m * x);
                b += f.values[j] * std::sin(m * x);
            }
            a *= 2.0 / n;
            b *= 2.0 / n;
            if (m == n / 2) {
                a *= 0.5;  // Nyquist cosine carries half weight
                b = 0.0;
            }
            if (std::abs(a) + std::abs(b) > tol) {
                p.k.push_back(static_cast<double>(m));
                p.ca.push_back(a);
                p.cb.push_back(b);
            }
        }
        return p;
    }

    // value, first and second derivative at the points, one sincos per mode
    void eval3(const std::vector<double>& x, std::vector<double>& f0, std::vector<double>& f1,
               std::vector<double>& f2) const {
        f0.assign(x.size(), c0);
        f1.assign(x.size(), 0.0);
        f2.assign(x.size(), 0.0);
        for (std::size_t m = 0; m < k.size(); ++m) {
            const double kk = k[m], a = ca[m], b = cb[m], k2 = kk * kk;
            for (std::size_t j = 0; j < x.size(); ++j) {
                const double c = std::cos(kk * x[j]), s = std::sin(kk * x[j]);
                f0[j] += a * c + b * s;
                f1[j] += kk * (b * c - a * s);
                f2[j] -= k2 * (a * c + b * s);
            }
        }
    }
};

void check_same_grid(int a, int b, const char* who) {
    if (a != b) throw ConfigError(std::string(who) + ": grid size mismatch");
}

void check_functional_grid(const Functional& F, int n, const char* who) {
    std::visit(overloaded{
                   [&](const PotentialEnergy& P) { check_same_grid(P.varphi.n, n, who); },
                   [&](const InternalEnergy&) {},
                   [&](const InteractionEnergy& W) { check_same_grid(W.n, n, who); },
               },
               F);
}

void check_positive(const Density& rho, const char* who) {
    for (double v : rho.rho.values)
        if (!(v > 0.0)) throw DensityError(std::string(who) + ": density must be positive");
}

struct MeanSe {
    double mean = 0.0, se = 0.0;
};

MeanSe mean_se(const std::vector<double>& v) {
    MeanSe r;
    const double m = static_cast<double>(v.size());
    for (double x : v) r.mean += x;
    r.mean /= m;
    if (v.size() > 1) {
        double var = 0.0;
        for (double x : v) var += (x - r.mean) * (x - r.mean);
        var /= (m - 1.0);
        r.se = std::sqrt(var / m);
    }
    return r;
}

// Relative floor on the z denominator: below 1e-10 of the functional's own
// scale an estimate is numerically zero, not statistically significant.
constexpr double kZFloorRel = 1e-10;

double safe_z(double mean, double se, double floor = 0.0) {
    const double denom = std::max(se, floor);
    if (denom > 0.0) return mean / denom;
    return mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mean);
}

// Lagrangian pullback evaluators: F(mu_t) and the Ito drift
// (1/2) sum_c w_c^2 D2_c F at the current flow state, all quadratures in
// L2(rho0 dx) along the particles (no inversions).
class PullEval {
  public:
    PullEval(const Functional& F, const Density& rho0)
        : n_(rho0.n()), w_(kTwoPi / n_), rho0_(rho0.rho.values), row_(n_) {
        std::visit(overloaded{
                       [&](const PotentialEnergy& P) {
                           kind_ = Kind::Potential;
                           poly_ = TrigPoly::from_field(P.varphi);
                       },
                       [&](const InternalEnergy& I) {
                           kind_ = Kind::Internal;
                           internal_ = &I;
                       },
                       [&](const InteractionEnergy& W) {
                           kind_ = Kind::Interaction;
                           if (W.terms.empty())
                               throw ConfigError(
                                   "interaction energy: pathwise evaluation requires a "
                                   "separable kernel");
                           for (const auto& [a, b] : W.terms) {
                               terms_.push_back({TrigPoly::from_field(a),
                                                 TrigPoly::from_field(b),
                                                 {}, {}, {}, {}, {}, {}, 0.0, 0.0});
                           }
                       },
                   },
                   F);
    }

    void at_points(const std::vector<double>& X) {
        switch (kind_) {
            case Kind::Potential:
                poly_.eval3(X, p0_, p1_, p2_);
                break;
            case Kind::Internal:
                break;
            case Kind::Interaction:
                for (Term& t : terms_) {
                    t.A.eval3(X, t.a0, t.a1, t.a2);
                    t.B.eval3(X, t.b0, t.b1, t.b2);
                    t.A0 = t.B0 = 0.0;
                    for (int j = 0; j < n_; ++j) {
                        t.A0 += t.a0[j] * rho0_[j];
                        t.B0 += t.b0[j] * rho0_[j];
                    }
                    t.A0 *= w_;
                    t.B0 *= w_;
                }
                break;
        }
    }

    double value(const std::vector<double>& J) const {
        switch (kind_) {
            case Kind::Potential: {
                double s = 0.0;
                for (int j = 0; j < n_; ++j) s += p0_[j] * rho0_[j];
                return s * w_;
            }
            case Kind::Internal: {
                double s = 0.0;
                for (int j = 0; j < n_; ++j)
                    s += internal_->chi_at(rho0_[j] / J[j]) * J[j];
                return s * w_;
            }
            case Kind::Interaction: {
                double s = 0.0;
                for (const Term& t : terms_) s += t.A0 * t.B0;
                return s;
            }
        }
        return 0.0;
    }

    // int dx(F-gradient potential) against the field with Eulerian samples
    // psi' = vdx(X), psi'' = vdxx(X) already pulled back to the particles
    double first_derivative_pull(const std::vector<double>& vdx, const std::vector<double>& vdxx,
                                 const std::vector<double>& J) const {
        switch (kind_) {
            case Kind::Potential: {
                double s = 0.0;
                for (int j = 0; j < n_; ++j) s += p1_[j] * vdx[j] * rho0_[j];
                return s * w_;
            }
            case Kind::Internal: {
                double s = 0.0;
                for (int j = 0; j < n_; ++j) {
                    const double r = rho0_[j] / J[j];
                    s -= internal_->p(r) * r * vdxx[j] * J[j];
                }
                return s * w_;
            }
            case Kind::Interaction: {
                double s = 0.0;
                for (const Term& t : terms_) {
                    double pa = 0.0, pb = 0.0;
                    for (int j = 0; j < n_; ++j) {
                        pa += t.a1[j] * vdx[j] * rho0_[j];
                        pb += t.b1[j] * vdx[j] * rho0_[j];
                    }
                    s += w_ * pa * t.B0 + t.A0 * w_ * pb;
                }
                return s;
            }
        }
        return 0.0;
    }

    double half_drift(ChannelAdapter& chans, const std::vector<double>& J) {
        const int C = chans.channels();
        double acc = 0.0;
        for (int c = 0; c < C; ++c) {
            const double wc = chans.weight(c);
            if (wc == 0.0) continue;
            double d2 = 0.0;
            switch (kind_) {
                case Kind::Potential: {
                    const double* r1 = chans.dphi_row(c);
                    std::copy(r1, r1 + n_, row_.begin());
                    const double* r2 = chans.d2phi_row(c);
                    double s = 0.0;
                    for (int j = 0; j < n_; ++j)
                        s += (r2[j] * row_[j] * p1_[j] + row_[j] * row_[j] * p2_[j]) * rho0_[j];
                    d2 = s * w_;
                    break;
                }
                case Kind::Internal: {
                    const double* r2 = chans.d2phi_row(c);
                    std::copy(r2, r2 + n_, row_.begin());
                    const double* rc = chans.dcurv_row(c);
                    double s = 0.0;
                    for (int j = 0; j < n_; ++j) {
                        const double r = rho0_[j] / J[j];
                        const double dd = row_[j];
                        const double grad3 = rc[j] - dd * dd;  // dx(psi) dxxx(psi)
                        s += (internal_->dp(r) * dd * dd * r * r - internal_->p(r) * grad3 * r) *
                             J[j];
                    }
                    d2 = s * w_;
                    break;
                }
                case Kind::Interaction: {
                    const double* r1 = chans.dphi_row(c);
                    std::copy(r1, r1 + n_, row_.begin());
                    const double* r2 = chans.d2phi_row(c);
                    for (const Term& t : terms_) {
                        double pa2 = 0.0, pb2 = 0.0, pa1 = 0.0, pb1 = 0.0, la = 0.0, lb = 0.0;
                        for (int j = 0; j < n_; ++j) {
                            const double ps = row_[j], pss = r2[j], r0 = rho0_[j];
                            pa2 += ps * ps * t.a2[j] * r0;
                            pb2 += ps * ps * t.b2[j] * r0;
                            pa1 += ps * t.a1[j] * r0;
                            pb1 += ps * t.b1[j] * r0;
                            la += pss * ps * t.a1[j] * r0;
                            lb += pss * ps * t.b1[j] * r0;
                        }
                        d2 += w_ * (pa2 + la) * t.B0 + 2.0 * (w_ * pa1) * (w_ * pb1) +
                              t.A0 * w_ * (pb2 + lb);
                    }
                    break;
                }
            }
            acc += 0.5 * wc * wc * d2;
        }
        return acc;
    }

  private:
    enum class Kind { Potential, Internal, Interaction };
    struct Term {
        TrigPoly A, B;
        std::vector<double> a0, a1, a2, b0, b1, b2;
        double A0 = 0.0, B0 = 0.0;
    };

    Kind kind_ = Kind::Potential;
    int n_ = 0;
    double w_ = 0.0;
    std::vector<double> rho0_;
    TrigPoly poly_;
    std::vector<double> p0_, p1_, p2_;
    const InternalEnergy* internal_ = nullptr;
    std::vector<Term> terms_;
    std::vector<double> row_;
};

// spectral d/dy applied to every row of a row-major n x n matrix
std::vector<double> matrix_dy(const std::vector<double>& m, int n) {
    std::vector<double> out(m.size());
    std::vector<double> row(n);
    for (int i = 0; i < n; ++i) {
        std::copy(m.begin() + i * n, m.begin() + (i + 1) * n, row.begin());
        GridField d = differentiate(GridField(n, row));
        std::copy(d.values.begin(), d.values.end(), out.begin() + i * n);
    }
    return out;
}

std::vector<double> matrix_transpose(const std::vector<double>& m, int n) {
    std::vector<double> out(m.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out[j * n + i] = m[i * n + j];
    return out;
}

}  // namespace

InternalEnergy::InternalEnergy(std::function<double(double)> chi_,
                               std::function<double(double)> dchi_,
                               std::function<double(double)> d2chi_, std::string name_)
    : chi(std::move(chi_)), dchi(std::move(dchi_)), d2chi(std::move(d2chi_)),
      name(std::move(name_)) {
    if (!chi || !dchi || !d2chi)
        throw ConfigError("internal energy: chi, chi' and chi'' are all required");
    for (int u = 0; u <= 120; ++u) {
        const double s = std::pow(10.0, -u / 10.0);
        const double bound =
            std::abs(chi(s)) + s * std::abs(dchi(s)) + s * s * std::abs(d2chi(s));
        if (!std::isfinite(bound) || bound > 1e8) {
            std::fprintf(stderr,
                         "warning: internal energy '%s' may violate the boundedness "
                         "hypothesis on [0,1] (|chi|+s|chi'|+s^2|chi''| = %g at s = %g)\n",
                         name.c_str(), bound, s);
            break;
        }
    }
}

InternalEnergy InternalEnergy::entropy() {
    return InternalEnergy([](double s) { return s * std::log(s); },
                          [](double s) { return std::log(s) + 1.0; },
                          [](double s) { return 1.0 / s; }, "entropy");
}

InternalEnergy InternalEnergy::power(double m) {
    if (!(m > 1.0)) throw ConfigError("internal energy: power law needs m > 1");
    return InternalEnergy(
        [m](double s) { return std::pow(s, m) / (m - 1.0); },
        [m](double s) { return m * std::pow(s, m - 1.0) / (m - 1.0); },
        [m](double s) { return m * std::pow(s, m - 2.0); }, "power");
}

double InternalEnergy::chi_at(double s) const { return chi(std::max(s, Density::kFloor)); }

double InternalEnergy::p(double s) const {
    s = std::max(s, Density::kFloor);
    return dchi(s) - chi(s) / s;
}

double InternalEnergy::dp(double s) const {
    s = std::max(s, Density::kFloor);
    return d2chi(s) - dchi(s) / s + chi(s) / (s * s);
}

InteractionEnergy::InteractionEnergy(int n_, std::vector<double> kernel_)
    : n(n_), kernel(std::move(kernel_)) {
    if (n < 2 || kernel.size() != static_cast<std::size_t>(n) * n)
        throw ConfigError("interaction energy: kernel must be an n x n grid");
    for (double v : kernel)
        if (!std::isfinite(v)) throw ConfigError("interaction energy: kernel must be finite");
}

InteractionEnergy InteractionEnergy::separable(
    std::vector<std::pair<GridField, GridField>> terms_) {
    if (terms_.empty()) throw ConfigError("interaction energy: need at least one term");
    const int n = terms_.front().first.n;
    std::vector<double> kernel(static_cast<std::size_t>(n) * n, 0.0);
    for (const auto& [a, b] : terms_) {
        if (a.n != n || b.n != n)
            throw ConfigError("interaction energy: separable terms must share one grid");
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) kernel[i * n + j] += a[i] * b[j];
    }
    InteractionEnergy W(n, std::move(kernel));
    W.terms = std::move(terms_);
    return W;
}

InteractionEnergy InteractionEnergy::difference_kernel(const GridField& profile) {
    const int n = profile.n;
    const TrigPoly tp = TrigPoly::from_field(profile);
    std::vector<std::pair<GridField, GridField>> terms;
    auto sampled = [n](const std::function<double(double)>& f) {
        std::vector<double> v(n);
        for (int j = 0; j < n; ++j) v[j] = f(grid_node(n, j));
        return GridField(n, std::move(v));
    };
    if (std::abs(tp.c0) > 0.0) {
        terms.emplace_back(sampled([](double) { return 1.0; }),
                           sampled([&](double) { return tp.c0; }));
    }
    for (std::size_t m = 0; m < tp.k.size(); ++m) {
        const double k = tp.k[m], a = tp.ca[m], b = tp.cb[m];
        terms.emplace_back(sampled([k](double x) { return std::cos(k * x); }),
                           sampled([=](double y) { return a * std::cos(k * y) - b * std::sin(k * y); }));
        terms.emplace_back(sampled([k](double x) { return std::sin(k * x); }),
                           sampled([=](double y) { return a * std::sin(k * y) + b * std::cos(k * y); }));
    }
    if (terms.empty()) throw ConfigError("interaction energy: profile is identically zero");
    return separable(std::move(terms));
}

std::string functional_name(const Functional& F) {
    return std::visit(overloaded{
                          [](const PotentialEnergy&) { return std::string("potential"); },
                          [](const InternalEnergy& I) { return I.name; },
                          [](const InteractionEnergy&) { return std::string("interaction"); },
                      },
                      F);
}

double evaluate(const Functional& F, const Density& rho) {
    const int n = rho.n();
    check_functional_grid(F, n, "functional evaluation");
    const double w = kTwoPi / n;
    return std::visit(
        overloaded{
            [&](const PotentialEnergy& P) {
                double s = 0.0;
                for (int j = 0; j < n; ++j) s += P.varphi[j] * rho[j];
                return s * w;
            },
            [&](const InternalEnergy& I) {
                check_positive(rho, "internal energy");
                double s = 0.0;
                for (int j = 0; j < n; ++j) s += I.chi_at(rho[j]);
                return s * w;
            },
            [&](const InteractionEnergy& W) {
                double s = 0.0;
                for (int i = 0; i < n; ++i) {
                    double row = 0.0;
                    for (int j = 0; j < n; ++j) row += W.kernel[i * n + j] * rho[j];
                    s += row * rho[i];
                }
                return s * w * w;
            },
        },
        F);
}

double first_derivative(const Functional& F, const Density& rho, const GridField& psi) {
    const int n = rho.n();
    check_functional_grid(F, n, "first derivative");
    check_same_grid(psi.n, n, "first derivative");
    const double w = kTwoPi / n;
    const GridField dpsi = differentiate(psi);
    return std::visit(
        overloaded{
            [&](const PotentialEnergy& P) {
                const GridField dphi = differentiate(P.varphi);
                double s = 0.0;
                for (int j = 0; j < n; ++j) s += dphi[j] * dpsi[j] * rho[j];
                return s * w;
            },
            [&](const InternalEnergy& I) {
                check_positive(rho, "internal energy");
                const GridField d2psi = differentiate(psi, 2);
                double s = 0.0;
                for (int j = 0; j < n; ++j) s -= I.p(rho[j]) * rho[j] * d2psi[j];
                return s * w;
            },
            [&](const InteractionEnergy& W) {
                std::vector<double> phi(n, 0.0);
                for (int i = 0; i < n; ++i) {
                    double s = 0.0;
                    for (int j = 0; j < n; ++j)
                        s += (W.kernel[i * n + j] + W.kernel[j * n + i]) * rho[j];
                    phi[i] = s * w;
                }
                const GridField dphi = differentiate(GridField(n, std::move(phi)));
                double s = 0.0;
                for (int j = 0; j < n; ++j) s += dphi[j] * dpsi[j] * rho[j];
                return s * w;
            },
        },
        F);
}

double second_derivative(const Functional& F, const Density& rho, const GridField& psi) {
    const int n = rho.n();
    check_functional_grid(F, n, "second derivative");
    check_same_grid(psi.n, n, "second derivative");
    const double w = kTwoPi / n;
    const GridField dpsi = differentiate(psi);
    const GridField d2psi = differentiate(psi, 2);
    return std::visit(
        overloaded{
            [&](const PotentialEnergy& P) {
                const GridField dphi = differentiate(P.varphi);
                const GridField d2phi = differentiate(P.varphi, 2);
                double s = 0.0;
                for (int j = 0; j < n; ++j)
                    s += dpsi[j] * (d2psi[j] * dphi[j] + dpsi[j] * d2phi[j]) * rho[j];
                return s * w;
            },
            [&](const InternalEnergy& I) {
                check_positive(rho, "internal energy");
                const GridField d3psi = differentiate(psi, 3);
                double s = 0.0;
                for (int j = 0; j < n; ++j) {
                    const double r = rho[j];
                    s += I.dp(r) * d2psi[j] * d2psi[j] * r * r -
                         I.p(r) * dpsi[j] * d3psi[j] * r;
                }
                return s * w;
            },
            [&](const InteractionEnergy& W) {
                // G = W + W^T; the mixed term carries dxdy(G), the Lie term
                // the flow derivatives of Phi = int G(x, .) dmu
                std::vector<double> G(static_cast<std::size_t>(n) * n);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j)
                        G[i * n + j] = W.kernel[i * n + j] + W.kernel[j * n + i];
                const std::vector<double> Gy = matrix_dy(G, n);
                const std::vector<double> M =
                    matrix_transpose(matrix_dy(matrix_transpose(Gy, n), n), n);
                std::vector<double> phi(n, 0.0);
                double mixed = 0.0;
                for (int i = 0; i < n; ++i) {
                    double srow = 0.0, prow = 0.0;
                    for (int j = 0; j < n; ++j) {
                        srow += M[i * n + j] * dpsi[j] * rho[j];
                        prow += G[i * n + j] * rho[j];
                    }
                    mixed += dpsi[i] * srow * rho[i];
                    phi[i] = prow * w;
                }
                mixed *= w * w;
                GridField phig(n, std::move(phi));
                const GridField dphi = differentiate(phig);
                const GridField d2phi = differentiate(phig, 2);
                double lie = 0.0;
                for (int j = 0; j < n; ++j)
                    lie += dpsi[j] * (d2psi[j] * dphi[j] + dpsi[j] * d2phi[j]) * rho[j];
                return mixed + lie * w;
            },
        },
        F);
}

double internal_drift_identity_check(const InternalEnergy& F, const Density& rho,
                                     const GridField& phi) {
    const int n = rho.n();
    check_same_grid(phi.n, n, "internal drift identity");
    check_positive(rho, "internal drift identity");
    const double w = kTwoPi / n;
    const GridField dphi = differentiate(phi);
    const GridField d2phi = differentiate(phi, 2);
    const GridField d3phi = differentiate(phi, 3);
    std::vector<double> flux(n);
    for (int j = 0; j < n; ++j) flux[j] = rho[j] * dphi[j];
    const GridField div1 = differentiate(GridField(n, std::move(flux)));
    std::vector<double> flux2(n);
    for (int j = 0; j < n; ++j) flux2[j] = div1[j] * dphi[j];
    const GridField div2 = differentiate(GridField(n, std::move(flux2)));
    double i1 = 0.0, i2 = 0.0, i3 = 0.0, i4 = 0.0;
    for (int j = 0; j < n; ++j) {
        const double r = rho[j];
        i1 += F.dchi(r) * div2[j];
        i2 += F.d2chi(r) * div1[j] * div1[j];
        i3 += F.dp(r) * d2phi[j] * d2phi[j] * r * r;
        i4 += (F.dchi(r) * r - F.chi_at(r)) * dphi[j] * d3phi[j];
    }
    return std::abs(i1 + i2 - (i3 - i4)) * w;
}

ItoReport ito_verify(const Functional& F, const Density& rho0, ChannelAdapter& chans,
                     std::uint64_t seed, int paths, double dt, double T, int blocks) {
    const int steps = exact_step_count(T, dt, "ito verification");
    if (paths < 64) throw ConfigError("ito verification: need at least 64 paths");
    if (paths % 2 != 0)
        throw ConfigError("ito verification: antithetic pairing needs an even path count");
    if (blocks < 1 || steps % blocks != 0)
        throw ConfigError("ito verification: steps must split evenly into martingale blocks");
    if (chans.channels() < 1)
        throw ConfigError("ito verification: need at least one noise channel");
    const int n = rho0.n();
    check_functional_grid(F, n, "ito verification");

    const int span = steps / blocks;
    const int pairs = paths / 2;
    PullEval ev(F, rho0);

    std::vector<std::vector<double>> comp(static_cast<std::size_t>(pairs),
                                          std::vector<double>(blocks, 0.0));
    std::vector<double> fin(paths, 0.0);
    double f0 = 0.0;
    for (int q = 0; q < pairs; ++q) {
        for (int sgn = 0; sgn < 2; ++sgn) {
            BrownianDriver drv = sample_driver(path_seed(seed, q), dt, steps, chans.channels());
            drv.antithetic = (sgn == 1);
            StochFlowState st = StochFlowState::identity(n);
            ev.at_points(st.X.lift);
            double fprev = ev.value(st.J.values);
            f0 = fprev;
            for (int b = 0; b < blocks; ++b) {
                double drift = 0.0;
                for (int k = 0; k < span; ++k) {
                    chans.prepare(st.X.lift);
                    drift += ev.half_drift(chans, st.J.values) * dt;
                    advance_stoch_flow(st, chans, drv, b * span + k, Scheme::StratHeun);
                    ev.at_points(st.X.lift);
                }
                const double fcur = ev.value(st.J.values);
                comp[q][b] += 0.5 * (fcur - fprev - drift);
                fprev = fcur;
            }
            fin[2 * q + sgn] = fprev;
        }
    }

    ItoReport rep;
    rep.functional = functional_name(F);
    rep.paths = paths;
    rep.dt = dt;
    rep.T = T;
    rep.seed = seed;
    rep.blocks.resize(blocks);
    rep.martingale_pass = true;
    std::vector<double> tot(pairs, 0.0), col(pairs, 0.0);
    for (int q = 0; q < pairs; ++q)
        for (int b = 0; b < blocks; ++b) tot[q] += comp[q][b];
    const MeanSe fm = mean_se(fin);
    rep.scale = std::abs(f0) + fm.se * std::sqrt(static_cast<double>(paths));
    const double zfloor = kZFloorRel * rep.scale;
    const MeanSe all = mean_se(tot);
    rep.estimate = all.mean;
    rep.std_error = all.se;
    rep.z_score = safe_z(all.mean, all.se, zfloor);
    for (int b = 0; b < blocks; ++b) {
        for (int q = 0; q < pairs; ++q) col[q] = comp[q][b];
        const MeanSe ms = mean_se(col);
        MartingaleBlock& blk = rep.blocks[b];
        blk.t0 = b * span * dt;
        blk.t1 = (b + 1) * span * dt;
        blk.mean = ms.mean;
        blk.std_error = ms.se;
        blk.z = safe_z(ms.mean, ms.se, zfloor);
        if (std::abs(blk.z) > 3.0) rep.martingale_pass = false;
    }
    rep.pass = std::abs(rep.z_score) <= 3.0 && rep.martingale_pass;
    return rep;
}

double ito_drift_residual(const Functional& F, const Density& rho0, const VelocityPotential& V,
                          double dt, double T) {
    const int steps = exact_step_count(T, dt, "ito drift residual");
    const int n = rho0.n();
    check_functional_grid(F, n, "ito drift residual");
    PullEval ev(F, rho0);
    FlowState st = FlowState::identity(n);
    std::vector<double> vdx(n), vdxx(n);
    ev.at_points(st.X.lift);
    const double f0 = ev.value(st.J.values);
    V.eval_flow_fields(0.0, st.X.lift, vdx, vdxx);
    double acc = 0.5 * ev.first_derivative_pull(vdx, vdxx, st.J.values);
    for (int k = 0; k < steps; ++k) {
        advance_flow(st, V, dt);
        ev.at_points(st.X.lift);
        V.eval_flow_fields(st.t, st.X.lift, vdx, vdxx);
        const double d = ev.first_derivative_pull(vdx, vdxx, st.J.values);
        acc += (k + 1 == steps) ? 0.5 * d : d;
    }
    const double fT = ev.value(st.J.values);
    return std::abs(fT - f0 - acc * dt);
}

std::vector<Density> stochastic_density_path(const Density& rho0, ChannelAdapter& chans,
                                             const BrownianDriver& driver, Scheme scheme) {
    const int n = rho0.n();
    std::vector<Density> path;
    path.reserve(static_cast<std::size_t>(driver.steps) + 1);
    path.push_back(rho0);
    StochFlowState st = StochFlowState::identity(n);
    const std::vector<double> nodes = grid_nodes(n);
    std::vector<double> periodic(n), js(n);
    for (int k = 0; k < driver.steps; ++k) {
        advance_stoch_flow(st, chans, driver, k, scheme);
        for (int j = 0; j < n; ++j) periodic[j] = st.X.lift[j] - nodes[j];
        const GridField dpart = differentiate(GridField(n, periodic));
        for (int j = 0; j < n; ++j) js[j] = 1.0 + dpart[j];
        FlowState snap{st.t, st.X, GridField(n, js)};
        path.push_back(push_density(rho0, snap));
    }
    return path;
}

double spde_residual(const std::vector<Density>& rho_path, ChannelAdapter& chans,
                     const BrownianDriver& driver, const GridField& test_fn,
                     const VelocityPotential* drift) {
    if (rho_path.size() != static_cast<std::size_t>(driver.steps) + 1)
        throw ConfigError("spde residual: density path does not match the driver");
    if (driver.channels != chans.channels())
        throw ConfigError("spde residual: driver/channel count mismatch");
    const int n = test_fn.n;
    for (const Density& r : rho_path)
        if (r.n() != n) throw ConfigError("spde residual: grid size mismatch");
    const double w = kTwoPi / n, dt = driver.dt;
    const GridField th1 = differentiate(test_fn);
    const int C = chans.channels();

    // channel rows at the fixed Eulerian grid
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(C), std::vector<double>(n));
    chans.prepare(grid_nodes(n));
    for (int c = 0; c < C; ++c) {
        const double* r = chans.dphi_row(c);
        std::copy(r, r + n, rows[c].begin());
    }

    double noise = 0.0, corr = 0.0, drift_acc = 0.0;
    std::vector<double> u(n);
    for (int k = 0; k < driver.steps; ++k) {
        const GridField& rho = rho_path[k].rho;
        for (int c = 0; c < C; ++c) {
            const double wc = chans.weight(c);
            if (wc == 0.0) continue;
            double m = 0.0;
            for (int j = 0; j < n; ++j) m += th1[j] * rows[c][j] * rho[j];
            noise += wc * (m * w) * driver.increment(k, c);
            for (int j = 0; j < n; ++j) u[j] = rho[j] * rows[c][j];
            const GridField u1 = differentiate(GridField(n, u));
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += th1[j] * u1[j] * rows[c][j];
            corr += 0.5 * wc * wc * (s * w) * dt;
        }
    }
    if (drift != nullptr) {
        for (int k = 0; k <= driver.steps; ++k) {
            const GridField vd = drift->grid_dx(k * dt, n);
            double d = 0.0;
            for (int j = 0; j < n; ++j) d += th1[j] * vd[j] * rho_path[k].rho[j];
            d *= w;
            drift_acc += (k == 0 || k == driver.steps) ? 0.5 * d : d;
        }
        drift_acc *= dt;
    }
    double bracket = 0.0;
    for (int j = 0; j < n; ++j)
        bracket += test_fn[j] * (rho_path.back().rho[j] - rho_path.front().rho[j]);
    bracket *= w;
    return std::abs(bracket - noise - drift_acc + corr);
}

}  // namespace wtransport
