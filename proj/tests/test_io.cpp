#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "wtransport/errors.hpp"
#include "wtransport/flow.hpp"
#include "wtransport/io.hpp"

using namespace wtransport;

namespace {

std::filesystem::path scratch_dir() {
    const auto d = std::filesystem::temp_directory_path() / "wtransport_io_test";
    std::filesystem::create_directories(d);
    return d;
}

int count_lines(const std::string& s) {
    int c = 0;
    for (char ch : s) c += ch == '\n';
    return c;
}

}  // namespace

TEST_CASE("g17 formatting round-trips doubles exactly") {
    for (const double v : {0.1, 1.0, 3.141592653589793, 1e-300, -2.5e17, 0.0,
                           -0.0072913462734, 6.02e23}) {
        const std::string s = format_g17(v);
        CHECK(std::strtod(s.c_str(), nullptr) == v);
    }
    CHECK(format_g17(1.0) == "1");
    CHECK(format_g17(0.1) == "0.10000000000000001");
}

TEST_CASE("grid field csv round-trips with the documented header") {
    const GridField f = sample_field(8, [](double x) { return std::sin(x) + 0.25; });
    const std::string csv = grid_field_csv(f);
    CHECK(csv.rfind("# n=8 domain=2pi\n", 0) == 0);
    CHECK(count_lines(csv) == 9);
    CHECK(csv.find('\r') == std::string::npos);

    const GridField g = grid_field_from_csv(csv);
    REQUIRE(g.n == 8);
    for (int j = 0; j < 8; ++j) CHECK(g[j] == f[j]);

    const GridField big = sample_field(64, [](double x) { return std::exp(std::cos(3 * x)); });
    const GridField back = grid_field_from_csv(grid_field_csv(big));
    for (int j = 0; j < 64; ++j) CHECK(back[j] == big[j]);
}

TEST_CASE("malformed grid field csv is rejected") {
    CHECK_THROWS_AS((void)grid_field_from_csv(""), ConfigError);
    CHECK_THROWS_AS((void)grid_field_from_csv("# n=8 domain=pi\n1\n"), ConfigError);
    CHECK_THROWS_AS((void)grid_field_from_csv("# n=08 domain=2pi\n1\n"), ConfigError);
    CHECK_THROWS_AS((void)grid_field_from_csv("# n=8 domain=2pi\n1\n2\n"), ConfigError);
    std::string bad = "# n=8 domain=2pi\n";
    for (int j = 0; j < 7; ++j) bad += "0.5\n";
    bad += "zebra\n";
    CHECK_THROWS_AS((void)grid_field_from_csv(bad), ConfigError);
}

TEST_CASE("flow trajectory csv is long-format with grid nodes") {
    const int n = 8;
    std::vector<FlowState> states;
    states.push_back(FlowState::identity(n));
    FlowState st = FlowState::identity(n);
    const VelocityPotential pot({{1, 0.0, 1.0}});
    advance_to(st, pot, 0.02, 0.01);
    states.push_back(st);

    const std::string csv = flow_trajectory_csv(states);
    CHECK(csv.rfind("t,x_j,X_t,J_t\n", 0) == 0);
    CHECK(count_lines(csv) == 1 + 2 * n);
    CHECK(csv.find("\n0,0,0,1\n") != std::string::npos);
    CHECK(csv.find("\n0.02") != std::string::npos);
}

TEST_CASE("transport trajectory csv reports the root norm") {
    std::vector<DetTransportRecord> det(2);
    det[0] = {0.0, 4.0, 0.0};
    det[1] = {0.5, 4.0, 1e-9};
    const std::string csv = transport_trajectory_csv(det);
    CHECK(csv == "t,norm,mean_g\n0,2,0\n0.5,2,1.0000000000000001e-09\n");

    std::vector<StochTransportRecord> sto(1);
    sto[0].t = 0.25;
    sto[0].norm2 = 2.25;
    sto[0].mean_g = -0.5;
    CHECK(transport_trajectory_csv(sto) == "t,norm,mean_g\n0.25,1.5,-0.5\n");
}

TEST_CASE("atomic writes replace files without leaving temporaries") {
    const auto dir = scratch_dir();
    const std::string path = (dir / "report.json").string();
    write_text_atomic(path, "{\"a\":1}\n");
    CHECK(read_text(path) == "{\"a\":1}\n");
    write_text_atomic(path, "{\"a\":2}\n");
    CHECK(read_text(path) == "{\"a\":2}\n");
    CHECK(!std::filesystem::exists(path + ".tmp"));

    CHECK_THROWS_AS(write_text_atomic("/nonexistent-dir/x.csv", "x"), std::runtime_error);
    CHECK_THROWS_AS((void)read_text((dir / "missing.csv").string()), std::runtime_error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("sha1 and git blob hashes match the reference vectors") {
    CHECK(sha1_hex("") == "da39a3ee5e6b4b0d3255bfef95601890afd80709");
    CHECK(sha1_hex("abc") == "a9993e364706816aba3e25717850c26c9cd0d89d");
    CHECK(sha1_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
          "84983e441c3bd26ebaae4aa1f95129e5e54670f1");
    // Million-character message exercises the multi-block path.
    CHECK(sha1_hex(std::string(1000000, 'a')) == "34aa973cd4c4daa4f61eeb2bdbad27316534016f");
    CHECK(git_blob_hash("abc") == "f2ba8f84ab5c1bce84a7b441cb1959cfc7093b7f");
    CHECK(git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}
