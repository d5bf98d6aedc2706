#ifndef WTRANSPORT_ERRORS_HPP
#define WTRANSPORT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace wtransport {

// Bad user input: malformed config, out-of-range parameter, wrong grid size.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// A map stopped being a diffeomorphism (Jacobian lost positivity) or an
// inversion failed to converge.
struct DiffeomorphismError : std::runtime_error {
    explicit DiffeomorphismError(const std::string& msg) : std::runtime_error(msg) {}
};

// A density became ill-conditioned (mass off, negative values beyond repair).
struct DensityError : std::runtime_error {
    explicit DensityError(const std::string& msg) : std::runtime_error(msg) {}
};

// Any other numeric breakdown (non-finite values, failed solve).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace wtransport

#endif
