#ifndef WTRANSPORT_NOISE_HPP
#define WTRANSPORT_NOISE_HPP

#include <cstdint>
#include <vector>

#include "wtransport/errors.hpp"

namespace wtransport {

// splitmix64 finalizer: bijective 64-bit mixer.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Standard normal draw keyed by (seed, channel, step): stateless, so any
// truncation/refinement reading the same key sees the same draw.
double standard_normal(std::uint64_t seed, std::uint64_t channel, std::uint64_t step);

// Deterministic per-path seed derivation for Monte Carlo batches.
inline std::uint64_t path_seed(std::uint64_t base, std::uint64_t path) {
    return mix64(base ^ mix64(0x517cc1b727220a95ULL + path));
}

/** Brownian increments dB^c_s ~ N(0, dt), c < channels, s < steps, computed
 *  on demand from the counter RNG. Drivers with the same seed agree channel
 *  by channel regardless of the channel count (restriction property).
 *  `block` > 1 sums contiguous fine increments of step dt/block, so
 *  coarsened drivers ride the same Brownian path (refinement coupling). */
struct BrownianDriver {
    std::uint64_t seed = 0;
    double dt = 0.0;
    int steps = 0;
    int channels = 0;
    bool antithetic = false;
    int block = 1;

    double increment(int step, int channel) const;
    std::vector<double> increments_at(int step) const;  // all channels

    // Same Brownian path on a lattice `factor` times coarser.
    BrownianDriver coarsened(int factor) const;
};

BrownianDriver sample_driver(std::uint64_t seed, double dt, int steps, int channels);

/** Fourier noise basis: pairs phi_{2k-1} = sin(kx)/k, phi_{2k} = -cos(kx)/k
 *  for k = 1..N, channel weights 1/alpha_c with alpha_c = ceil(c/2)^q (so the
 *  velocity fields are cos(kx)/k^q and sin(kx)/k^q). Channels are 0-based
 *  here: even c <-> sine potential, odd c <-> cosine potential. */
struct NoiseBasis {
    int N = 0;
    double q = 0.0;

    NoiseBasis(int N_, double q_);

    int channels() const { return 2 * N; }
    int pair_k(int c) const { return c / 2 + 1; }
    double inv_alpha(int c) const;

    double dphi(int c, double x) const;   // dx phi_c
    double d2phi(int c, double x) const;  // |.| <= k
    double d3phi(int c, double x) const;
    double dcurv(int c, double x) const;  // (d2phi_c * dphi_c)'; |.| <= k^2

    // Stratonovich-vs-Ito rate of the log Kunita density:
    // -(1/2) sum_{k<=N} k^{2-2q} per unit time (the pair structure makes it
    // state-independent).
    double strat_log_drift() const;
};

// Riemann zeta partial/complete sum for s > 1 (direct sum + integral tail).
double zeta_sum(double s);

// cos(k x_j), sin(k x_j) tables for k = 1..pairs built by angle recurrence.
struct TrigTable {
    int pairs = 0;
    std::size_t n = 0;
    std::vector<double> c, s;  // row-major, row k-1

    void build(const std::vector<double>& x, int pairs);
    const double* cos_row(int k) const { return c.data() + (k - 1) * n; }
    const double* sin_row(int k) const { return s.data() + (k - 1) * n; }
};

}  // namespace wtransport

#endif
