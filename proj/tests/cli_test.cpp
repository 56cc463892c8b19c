#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "narrowforge/serialize.hpp"

namespace {

struct RunResult {
    int exit_code;
    std::string out;
};

RunResult run(const std::string& args) {
    const std::string cmd = std::string(NF_CLI_PATH) + " " + args + " 2>/dev/null";
    std::array<char, 4096> buf{};
    std::string out;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (fgets(buf.data(), buf.size(), pipe)) out += buf.data();
    const int status = pclose(pipe);
    return RunResult{WEXITSTATUS(status), out};
}

std::string data_path(const std::string& name) {
    return std::string(NF_TEST_DATA_DIR) + "/" + name;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("bound subcommand prints the width formula") {
    RunResult r = run("bound --n 2 --m 3 --activation relu");
    CHECK(r.exit_code == 0);
    CHECK(r.out == "6\n");
    CHECK(run("bound --n 1 --m 7 --activation leaky-relu").out == "7\n");
    CHECK(run("bound --n 1 --m 1 --activation general:tanh").out == "5\n");
}

TEST_CASE("verify a network against itself exits zero with zero error") {
    const std::string net_path = "/tmp/nf_cli_self.json";
    {
        narrowforge::Network net = narrowforge::Network::identity(2);
        narrowforge::save_text(net_path, narrowforge::to_json(net));
    }
    RunResult r = run("verify " + net_path + " --oracle net:" + net_path +
                      " --grid 11 --box 0:1,0:1 --tol 1e-12");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("\"sup_error\": 0.0") != std::string::npos);
}

TEST_CASE("compile-pwl reproduces the frozen golden network byte for byte") {
    const std::string out_path = "/tmp/nf_cli_golden_out.json";
    std::remove(out_path.c_str());
    RunResult r = run("compile-pwl " + data_path("golden_pwl.json") + " -o " + out_path +
                      " --tol 1e-8");
    CHECK(r.exit_code == 0);
    CHECK(slurp(out_path) == slurp(data_path("golden_net.json")));
}

TEST_CASE("malformed input exits nonzero") {
    const std::string bad_path = "/tmp/nf_cli_bad.json";
    narrowforge::save_text(bad_path, "{\"breakpoints\": [0.0], \"slopes\"");
    RunResult r = run("compile-pwl " + bad_path);
    CHECK(r.exit_code == 2);
}

TEST_CASE("compile-acf emits a verify report and gates on tol") {
    const std::string acf_path = "/tmp/nf_cli_acf.json";
    narrowforge::AcfSpec spec;
    spec.d = 2;
    narrowforge::RidgeTerm t;
    t.a = 0.5;
    t.b = Eigen::VectorXd::Ones(1);
    t.c = -0.3;
    t.beta = 0.5;
    spec.t.terms.push_back(t);
    narrowforge::save_text(acf_path, narrowforge::to_json(spec));
    RunResult r = run("compile-acf " + acf_path + " --box 0:1,0:1 --tol 1e-4 --grid 41");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("\"sup_error\"") != std::string::npos);
    CHECK(r.out.find("\"width\": 2") != std::string::npos);
}
