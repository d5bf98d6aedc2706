#include "wtransport/noise.hpp"

#include <cmath>

namespace wtransport {

namespace {

// (0,1) exclusive: offset by half an ulp of the 53-bit lattice.
inline double to_unit(std::uint64_t h) {
    return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

constexpr double kTau = 6.283185307179586476925286766559;

}  // namespace

double standard_normal(std::uint64_t seed, std::uint64_t channel, std::uint64_t step) {
    std::uint64_t k = mix64(seed);
    k = mix64(k ^ (0x9e3779b97f4a7c15ULL + channel));
    k = mix64(k ^ (0xd1b54a32d192ed03ULL + step));
    const double u1 = to_unit(mix64(k ^ 0xa0761d6478bd642fULL));
    const double u2 = to_unit(mix64(k ^ 0xe7037ed1a0b428dbULL));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTau * u2);
}

double BrownianDriver::increment(int step, int channel) const {
    if (step < 0 || step >= steps) throw ConfigError("Brownian increment: step out of range");
    if (channel < 0 || channel >= channels) throw ConfigError("Brownian increment: channel out of range");
    const double fine_sd = std::sqrt(dt / block);
    const std::uint64_t base = static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(block);
    double acc = 0.0;
    for (int i = 0; i < block; ++i)
        acc += standard_normal(seed, static_cast<std::uint64_t>(channel), base + i);
    return (antithetic ? -acc : acc) * fine_sd;
}

BrownianDriver BrownianDriver::coarsened(int factor) const {
    if (factor < 1 || steps % factor != 0)
        throw ConfigError("coarsened driver: factor must divide the step count");
    BrownianDriver d = *this;
    d.dt = dt * factor;
    d.steps = steps / factor;
    d.block = block * factor;
    return d;
}

std::vector<double> BrownianDriver::increments_at(int step) const {
    std::vector<double> out(static_cast<std::size_t>(channels));
    for (int c = 0; c < channels; ++c) out[static_cast<std::size_t>(c)] = increment(step, c);
    return out;
}

BrownianDriver sample_driver(std::uint64_t seed, double dt, int steps, int channels) {
    if (!(dt > 0.0)) throw ConfigError("sample_driver: dt must be positive");
    if (steps <= 0) throw ConfigError("sample_driver: steps must be positive");
    if (channels <= 0) throw ConfigError("sample_driver: channels must be positive");
    BrownianDriver d;
    d.seed = seed;
    d.dt = dt;
    d.steps = steps;
    d.channels = channels;
    return d;
}

NoiseBasis::NoiseBasis(int N_, double q_) : N(N_), q(q_) {
    if (N < 1) throw ConfigError("NoiseBasis: need at least one pair");
    if (!(q > 1.0)) throw ConfigError("NoiseBasis: weight exponent must exceed 1");
}

double NoiseBasis::inv_alpha(int c) const {
    return std::pow(static_cast<double>(pair_k(c)), -q);
}

double NoiseBasis::dphi(int c, double x) const {
    const double k = pair_k(c);
    return (c % 2 == 0) ? std::cos(k * x) : std::sin(k * x);
}

double NoiseBasis::d2phi(int c, double x) const {
    const double k = pair_k(c);
    return (c % 2 == 0) ? -k * std::sin(k * x) : k * std::cos(k * x);
}

double NoiseBasis::d3phi(int c, double x) const {
    const double k = pair_k(c);
    return (c % 2 == 0) ? -k * k * std::cos(k * x) : -k * k * std::sin(k * x);
}

double NoiseBasis::dcurv(int c, double x) const {
    // even: (-k sin * cos)' = -(k/2 sin 2k)' = -k^2 cos(2kx); odd: +k^2 cos(2kx)
    const double k = pair_k(c);
    return (c % 2 == 0) ? -k * k * std::cos(2.0 * k * x) : k * k * std::cos(2.0 * k * x);
}

double NoiseBasis::strat_log_drift() const {
    double s = 0.0;
    for (int k = 1; k <= N; ++k) s += std::pow(static_cast<double>(k), 2.0 - 2.0 * q);
    return -0.5 * s;
}

double zeta_sum(double s) {
    if (!(s > 1.0)) throw ConfigError("zeta_sum: requires s > 1");
    const int M = 200000;
    double acc = 0.0;
    for (int k = M; k >= 1; --k) acc += std::pow(static_cast<double>(k), -s);
    // Euler-Maclaurin tail: int_M^inf x^-s dx + M^-s / 2
    acc += std::pow(static_cast<double>(M), 1.0 - s) / (s - 1.0) - 0.5 * std::pow(static_cast<double>(M), -s);
    return acc;
}

void TrigTable::build(const std::vector<double>& x, int pairs_) {
    pairs = pairs_;
    n = x.size();
    c.resize(static_cast<std::size_t>(pairs) * n);
    s.resize(static_cast<std::size_t>(pairs) * n);
    double* c1 = c.data();
    double* s1 = s.data();
    for (std::size_t j = 0; j < n; ++j) {
        c1[j] = std::cos(x[j]);
        s1[j] = std::sin(x[j]);
    }
    for (int k = 2; k <= pairs; ++k) {
        double* ck = c.data() + static_cast<std::size_t>(k - 1) * n;
        double* sk = s.data() + static_cast<std::size_t>(k - 1) * n;
        const double* cp = c.data() + static_cast<std::size_t>(k - 2) * n;
        const double* sp = s.data() + static_cast<std::size_t>(k - 2) * n;
        for (std::size_t j = 0; j < n; ++j) {
            ck[j] = cp[j] * c1[j] - sp[j] * s1[j];
            sk[j] = sp[j] * c1[j] + cp[j] * s1[j];
        }
    }
}

}  // namespace wtransport
