#ifndef WTRANSPORT_IO_HPP
#define WTRANSPORT_IO_HPP

#include <string>
#include <string_view>
#include <vector>

#include "wtransport/flow.hpp"
#include "wtransport/gridfield.hpp"
#include "wtransport/transport_det.hpp"
#include "wtransport/transport_stoch.hpp"

namespace wtransport {

// Shortest representation that round-trips a double (%.17g).
std::string format_g17(double v);

/** CSV column of the n sampled values under the header `# n=<n> domain=2pi`,
 *  LF line endings, full round-trip precision. */
std::string grid_field_csv(const GridField& f);

// Strict inverse of grid_field_csv; throws ConfigError on malformed input.
GridField grid_field_from_csv(const std::string& text);

/** Long-format flow trajectory, header `t,x_j,X_t,J_t`: one row per
 *  (state, node), states in the order given. */
std::string flow_trajectory_csv(const std::vector<FlowState>& states);

/** Transport trajectory, header `t,norm,mean_g`: norm is the L2(rho_t)
 *  norm of the transported field (square root of the tracked norm2). */
std::string transport_trajectory_csv(const std::vector<DetTransportRecord>& records);
std::string transport_trajectory_csv(const std::vector<StochTransportRecord>& records);

/** Writes content to path via a temp file in the same directory plus an
 *  atomic rename; surfaces filesystem errors as std::runtime_error. */
void write_text_atomic(const std::string& path, const std::string& content);

// Whole file as a string; throws std::runtime_error if unreadable.
std::string read_text(const std::string& path);

// SHA-1 digest as 40 lowercase hex digits.
std::string sha1_hex(std::string_view bytes);

// Content address in git blob form: sha1("blob <size>\0" + bytes).
std::string git_blob_hash(std::string_view bytes);

}  // namespace wtransport

#endif
