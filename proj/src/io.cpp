#include "wtransport/io.hpp"

#include <array>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "wtransport/errors.hpp"

namespace wtransport {

namespace {

void append_row(std::string& out, std::initializer_list<double> cells) {
    bool first = true;
    for (double c : cells) {
        if (!first) out.push_back(',');
        out += format_g17(c);
        first = false;
    }
    out.push_back('\n');
}

template <typename Record>
std::string record_csv(const std::vector<Record>& records) {
    std::string out = "t,norm,mean_g\n";
    for (const Record& r : records) append_row(out, {r.t, std::sqrt(r.norm2), r.mean_g});
    return out;
}

[[noreturn]] void fail_io(const std::string& what, const std::string& path) {
    throw std::runtime_error(what + " " + path + ": " + std::strerror(errno));
}

inline std::uint32_t rol(std::uint32_t v, int s) { return (v << s) | (v >> (32 - s)); }

}  // namespace

std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string grid_field_csv(const GridField& f) {
    std::string out = "# n=" + std::to_string(f.n) + " domain=2pi\n";
    for (double v : f.values) {
        out += format_g17(v);
        out.push_back('\n');
    }
    return out;
}

GridField grid_field_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("grid field csv: empty input");
    int n = 0;
    if (std::sscanf(line.c_str(), "# n=%d domain=2pi", &n) != 1 ||
        line != "# n=" + std::to_string(n) + " domain=2pi")
        throw ConfigError("grid field csv: bad header '" + line + "'");
    std::vector<double> vals;
    vals.reserve(static_cast<std::size_t>(n));
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        char* end = nullptr;
        const double v = std::strtod(line.c_str(), &end);
        if (end == line.c_str() || *end != '\0')
            throw ConfigError("grid field csv: bad value '" + line + "'");
        vals.push_back(v);
    }
    if (static_cast<int>(vals.size()) != n)
        throw ConfigError("grid field csv: expected " + std::to_string(n) + " values, got " +
                          std::to_string(vals.size()));
    return GridField(n, std::move(vals));
}

std::string flow_trajectory_csv(const std::vector<FlowState>& states) {
    std::string out = "t,x_j,X_t,J_t\n";
    for (const FlowState& s : states) {
        const int n = s.J.n;
        for (int j = 0; j < n; ++j)
            append_row(out, {s.t, grid_node(n, j), s.X.lift[j], s.J[j]});
    }
    return out;
}

std::string transport_trajectory_csv(const std::vector<DetTransportRecord>& records) {
    return record_csv(records);
}

std::string transport_trajectory_csv(const std::vector<StochTransportRecord>& records) {
    return record_csv(records);
}

void write_text_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    std::FILE* f = std::fopen(tmp.c_str(), "wb");
    if (!f) fail_io("cannot open", tmp);
    const std::size_t written = content.empty() ? 0 : std::fwrite(content.data(), 1, content.size(), f);
    const bool ok = written == content.size() && std::fclose(f) == 0;
    if (!ok) {
        std::remove(tmp.c_str());
        fail_io("cannot write", tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        fail_io("cannot rename to", path);
    }
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_io("cannot read", path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string sha1_hex(std::string_view bytes) {
    std::array<std::uint32_t, 5> h = {0x67452301u, 0xEFCDAB89u, 0x98BADCFEu, 0x10325476u,
                                      0xC3D2E1F0u};
    std::string msg(bytes);
    const std::uint64_t bitlen = static_cast<std::uint64_t>(msg.size()) * 8;
    msg.push_back(static_cast<char>(0x80));
    while (msg.size() % 64 != 56) msg.push_back('\0');
    for (int i = 7; i >= 0; --i) msg.push_back(static_cast<char>((bitlen >> (8 * i)) & 0xFF));

    std::uint32_t w[80];
    for (std::size_t off = 0; off < msg.size(); off += 64) {
        for (int i = 0; i < 16; ++i) {
            w[i] = 0;
            for (int b = 0; b < 4; ++b)
                w[i] = (w[i] << 8) | static_cast<unsigned char>(msg[off + 4 * i + b]);
        }
        for (int i = 16; i < 80; ++i) w[i] = rol(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);
        std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4];
        for (int i = 0; i < 80; ++i) {
            std::uint32_t f, k;
            if (i < 20) {
                f = (b & c) | (~b & d);
                k = 0x5A827999u;
            } else if (i < 40) {
                f = b ^ c ^ d;
                k = 0x6ED9EBA1u;
            } else if (i < 60) {
                f = (b & c) | (b & d) | (c & d);
                k = 0x8F1BBCDCu;
            } else {
                f = b ^ c ^ d;
                k = 0xCA62C1D6u;
            }
            const std::uint32_t t = rol(a, 5) + f + e + k + w[i];
            e = d;
            d = c;
            c = rol(b, 30);
            b = a;
            a = t;
        }
        h[0] += a;
        h[1] += b;
        h[2] += c;
        h[3] += d;
        h[4] += e;
    }
    std::string hex;
    hex.reserve(40);
    for (std::uint32_t v : h)
        for (int i = 7; i >= 0; --i) hex.push_back("0123456789abcdef"[(v >> (4 * i)) & 0xF]);
    return hex;
}

std::string git_blob_hash(std::string_view bytes) {
    std::string framed = "blob " + std::to_string(bytes.size());
    framed.push_back('\0');
    framed.append(bytes);
    return sha1_hex(framed);
}

}  // namespace wtransport
