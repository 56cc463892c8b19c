#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "narrowforge/box.hpp"
#include "narrowforge/network.hpp"

namespace narrowforge {

/// Grid-measured verification result. The sup error is a lower bound on the
/// true sup norm; grid_res is recorded so the reader knows the lattice.
struct VerifyReport {
    double sup_error = 0.0;
    Eigen::VectorXd argmax;
    int grid_res = 0;
    int width = 0;
    int depth = 0;
    std::vector<double> per_stage_errors;
    double wall_time_s = 0.0;
    std::uint64_t seed = 0;
};

using VectorOracle = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Max inf-norm deviation from the oracle over the uniform grid_res^n lattice.
VerifyReport sup_error(const Network& net, const VectorOracle& oracle, const Box& box,
                       int grid_res);

struct MonotoneResult {
    bool ok = true;
    Eigen::VectorXd counterexample_lo;  // two inputs ordered in x_d
    Eigen::VectorXd counterexample_hi;
};

/// Random prefixes with ordered x_d pairs: the last output must strictly
/// increase. Returns the first counterexample found.
MonotoneResult check_monotone_last(const Network& net, const Box& box, int samples,
                                   std::uint64_t seed = 0);

struct InvertResult {
    bool ok = false;
    double max_roundtrip_error = 0.0;
    std::string reason;  // set when not invertible by construction
};

InvertResult check_invertible(const Network& net, const Box& box, int samples,
                              double tol, std::uint64_t seed = 0);

/// Thread cap honoring NARROWFORGE_THREADS (>=1).
int thread_cap();

}  // namespace narrowforge
