#ifndef WTRANSPORT_GRIDFIELD_HPP
#define WTRANSPORT_GRIDFIELD_HPP

#include <functional>
#include <numbers>
#include <vector>

#include "wtransport/errors.hpp"

namespace wtransport {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/** Real scalar field sampled on the uniform grid x_j = 2*pi*j/n of the circle.
 *  n must be a power of two, n >= 8 (radix-2 transforms). */
struct GridField {
    int n = 0;
    std::vector<double> values;

    GridField() = default;
    GridField(int n_, std::vector<double> vals);

    double operator[](int j) const { return values[j]; }
    double& operator[](int j) { return values[j]; }
};

// Grid nodes x_j = 2*pi*j/n.
std::vector<double> grid_nodes(int n);
double grid_node(int n, int j);

// Sample a callable on the grid.
GridField sample_field(int n, const std::function<double(double)>& f);

void check_grid_size(int n);

// Rectangle rule (2*pi/n) * sum(values); exact for trigonometric polynomials
// of degree < n.
double integrate(const GridField& f);

// Mean value (1/2pi) * integral.
double mean_value(const GridField& f);

// L2(dx) norm on the circle.
double l2_norm(const GridField& f);

// Weighted L2 norm: sqrt(integral of f^2 * w dx).
double l2_norm_weighted(const GridField& f, const GridField& w);

// Spectral derivative of order 1..3 (exact on resolved trig polynomials).
// Odd orders zero the Nyquist mode.
GridField differentiate(const GridField& f, int order = 1);

enum class Interp { Spectral, CubicPeriodic };

/** Reusable interpolant of a grid field.
 *  Spectral: the trigonometric interpolant (band-limited, exact at nodes).
 *  CubicPeriodic: periodic cubic spline, O(1) per evaluation. */
class Interpolant {
  public:
    Interpolant(const GridField& f, Interp method = Interp::Spectral);
    double operator()(double x) const;

    int n() const { return n_; }

  private:
    int n_;
    Interp method_;
    // spectral: f(x) = a[0] + sum_k (a[k] cos kx + b[k] sin kx) + a[n/2] cos((n/2)x)
    std::vector<double> a_, b_;
    // cubic: node values and second derivatives
    std::vector<double> y_, y2_;
};

// One-off interpolation (builds a transient interpolant; prefer Interpolant
// for repeated evaluation).
double interpolate(const GridField& f, double x, Interp method = Interp::Spectral);

/** Orientation-preserving circle map through its lift: a strictly increasing
 *  function on the nodes with lift(x + 2*pi) = lift(x) + 2*pi (winding 1).
 *  The periodic part lift(x) - x is a GridField in disguise. */
struct LiftedMap {
    int n = 0;
    std::vector<double> lift;

    LiftedMap() = default;
    LiftedMap(int n_, std::vector<double> lift_);

    static LiftedMap identity(int n);

    GridField periodic_part() const;
};

// Throws DiffeomorphismError unless the lift is strictly increasing with
// winding one.
void validate_monotone(const LiftedMap& m);

// Evaluate the lift anywhere (periodic part interpolated spectrally).
class LiftEvaluator {
  public:
    explicit LiftEvaluator(const LiftedMap& m, Interp method = Interp::Spectral);
    double operator()(double x) const { return x + p_(x); }
    double derivative(double x) const { return 1.0 + dp_(x); }

  private:
    Interpolant p_, dp_;
};

// Samples f(m(x_j)).
GridField compose(const GridField& f, const LiftedMap& m, Interp method = Interp::Spectral);

// outer . inner as lifted maps.
LiftedMap compose_maps(const LiftedMap& outer, const LiftedMap& inner);

// Pointwise derivative of the lift on the nodes (spectral on the periodic
// part); equals the Jacobian of the circle map.
GridField lift_derivative(const LiftedMap& m);

/** Inverse of a monotone lifted map by safeguarded Newton (bisection
 *  fallback); nodewise residual |m(m^{-1}(x_j)) - x_j| <= 1e-10. */
LiftedMap invert_monotone(const LiftedMap& m);

// Pointwise helpers.
GridField operator+(const GridField& f, const GridField& g);
GridField operator-(const GridField& f, const GridField& g);
GridField operator*(const GridField& f, const GridField& g);
GridField operator*(double s, const GridField& f);

}  // namespace wtransport

#endif
