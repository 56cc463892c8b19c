#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "narrowforge/box.hpp"
#include "narrowforge/coupling.hpp"
#include "narrowforge/network.hpp"
#include "narrowforge/ridge.hpp"

namespace narrowforge {

/// Oracle for a single-coordinate transformation
///   x -> (x_1..x_{d-1}, tau_d(x)),  tau_d strictly increasing in x_d.
struct SctOracle {
    int d = 1;
    std::function<double(const Eigen::VectorXd&)> tau_d;
};

/// Slice values u_i(x') = tau_d(x', i/N) sampled on a prefix lattice.
struct SliceTable {
    int N = 1;
    Eigen::MatrixXd prefix_grid;  // rows = prefix points
    Eigen::MatrixXd u;            // (N+1) x points

    /// Throws MonotonicityError unless u_i < u_{i+1} pointwise.
    void validate() const;
};

SliceTable build_slice_table(const SctOracle& oracle, const Box& box, int N,
                             int prefix_res);

/// Immutable snapshot of the sharpening iteration. `ratio_target` is the
/// continuous ratio b; the working target is b * (base slice at alpha2).
struct SharpenState {
    std::shared_ptr<const Network> net;   // current g_i
    std::shared_ptr<const Network> base;  // original f fixing the ratio
    std::function<double(const Eigen::VectorXd&)> ratio_target;  // b
    double alpha1 = 0.0;
    double alpha2 = 1.0;
    Box box;  // current enclosure (prefix fixed, last coordinate tracked)
    double gamma = 0.0;
    double fit_slack = 0.0;
    double last_fit_error = 0.0;
    bool converged = false;
};

SharpenState make_sharpen_state(Network g0,
                                std::function<double(const Eigen::VectorXd&)> b,
                                double alpha1, double alpha2, const Box& box,
                                int grid_res);

/// One sharpening update. Refused (state returned unchanged, converged set)
/// once gamma <= 1. Post: gamma_new <= gamma_old^{2/3} + fit_slack.
SharpenState sharpen_step(const SharpenState& state, const Box& box, int grid_res,
                          const FitOptions& budget);

struct SctOptions {
    int prefix_res = 33;
    int grid_res = 33;  // sharpening grid
    FitOptions fit;     // h_i fits
    FitOptions slice_fit;  // u_i fits
    int max_sharpen_iters = 60;
    std::uint64_t seed = 0;
    SctOptions() {
        fit.max_terms = 192;
        slice_fit.max_terms = 192;
    }
};

struct SctReport {
    std::vector<double> slice_errors;  // grid-measured per slice
    double max_slice_error = 0.0;
    double inter_slice_oscillation = 0.0;  // measured, not certified
    std::vector<int> sharpen_iters;
    int width = 0;
    int depth = 0;
};

/// Grid-slice induction compiler: width exactly d, Leaky-ReLU only, slice
/// errors <= tol at every x_d = i/N.
Network compile_sct_leakyrelu(const SctOracle& oracle, const Box& box, int N,
                              double tol, const SctOptions& opts = {},
                              SctReport* report = nullptr);

struct LiftOptions {
    int max_stages = 96;
    int candidates = 48;
    int train_res = 0;  // 0 = auto
    std::uint64_t seed = 0;
};

struct LiftReport {
    double validation_error = 0.0;
    int stages = 0;
    bool converged = false;
};

/// Width-(d+1) ReLU network computing x -> (x_1..x_{d-1}, tau(x)) for tau
/// given as a ridge sum over R^d. Pass-through channels are positivity
/// shifted; the last-coordinate channel carries the running accumulation
/// exactly, the extra channel computes one ridge term per layer.
Network lift_relu(const RidgeSum& tau, int d, const Box& box, double tol,
                  const LiftOptions& opts = {}, LiftReport* report = nullptr);

/// Same circuit, tau supplied as an oracle and fitted greedily.
Network lift_relu_fit(const std::function<double(const Eigen::VectorXd&)>& tau, int d,
                      const Box& box, double tol, const LiftOptions& opts = {},
                      LiftReport* report = nullptr);

/// Ridge sum routed through a custom activation sigma.
struct SigmaRidgeTerm {
    double a = 0.0;
    Eigen::VectorXd b;
    double c = 0.0;
};
struct SigmaRidge {
    double constant = 0.0;
    Eigen::VectorXd linear;  // dim d
    std::vector<SigmaRidgeTerm> terms;

    double eval(const std::string& sigma, const Eigen::VectorXd& x) const;
};

SigmaRidge fit_sigma_ridge(const std::function<double(const Eigen::VectorXd&)>& oracle,
                           const std::string& sigma, const Box& box,
                           const FitOptions& opts);

struct GeneralLiftOptions {
    FitOptions fit;
    double min_epsilon = 1e-6;
    int epsilon_steps = 18;  // halvings tried from 0.5 downward
};

/// Width-(d+2) network with activation sigma computing (x_1..x_{d-1}, tau(x)).
/// Pass-through channels ride the approximate identity
/// x ~ (sigma(eps x + alpha) - sigma(alpha)) / (eps sigma'(alpha)).
Network lift_general(const std::string& sigma, const SigmaRidge& tau, int d,
                     const Box& box, double tol, const GeneralLiftOptions& opts = {},
                     LiftReport* report = nullptr);

Network lift_general_fit(const std::string& sigma,
                         const std::function<double(const Eigen::VectorXd&)>& tau, int d,
                         const Box& box, double tol,
                         const GeneralLiftOptions& opts = {},
                         LiftReport* report = nullptr);

}  // namespace narrowforge
