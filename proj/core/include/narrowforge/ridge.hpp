#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "narrowforge/box.hpp"

namespace narrowforge {

/// One ridge term  a * lr_beta(b . x + c)  over a prefix domain.
struct RidgeTerm {
    double a = 0.0;
    Eigen::VectorXd b;
    double c = 0.0;
    double beta = 0.01;

    double eval(const Eigen::VectorXd& x) const;
};

/// constant + sum of ridge terms; the working representation for s, t and
/// every fitted prefix function.
struct RidgeSum {
    std::vector<RidgeTerm> terms;
    double constant = 0.0;

    static RidgeSum constant_only(double c) { return RidgeSum{{}, c}; }

    double eval(const Eigen::VectorXd& x) const;
    Eigen::VectorXd eval_batch(const Eigen::MatrixXd& xs) const;  // rows = points

    RidgeSum negated() const;
    /// Term-wise concatenation (sum of the two functions).
    static RidgeSum concat(const RidgeSum& u, const RidgeSum& v);

    /// Enclosure of the values over a box.
    std::pair<double, double> interval(const Box& box) const;
    /// Upper bound on the Lipschitz constant w.r.t. the inf norm.
    double lipschitz_bound() const;
    /// Sampled max l1 gradient over the box; far tighter than the
    /// coefficient-sum bound for many-term fitted sums.
    double sampled_lipschitz(const Box& box) const;
};

struct FitOptions {
    int max_terms = 256;
    double tol = 1e-6;
    std::uint64_t seed = 0;
    double beta = 0.01;      // shared beta of fitted terms
    int train_res = 0;       // 0 = auto from dimension
    int adaptive_rounds = 48;
    // Known ridge directions of the oracle (e.g. the kink directions of an
    // underlying sum); the dictionary lays kink ladders along each.
    std::vector<Eigen::VectorXd> hint_directions;
};

struct RidgeFit {
    RidgeSum sum;
    double train_error = 0.0;
    double validation_error = 0.0;
    int terms = 0;
    std::uint64_t seed = 0;
    bool converged = false;
};

/// Least-squares ridge fit with fixed-seed random directions plus
/// deterministic axis kinks, validated on a half-cell-shifted grid.
/// Never throws on a missed tolerance; inspect `converged`.
RidgeFit fit_ridge(const std::function<double(const Eigen::VectorXd&)>& oracle,
                   const Box& box, const FitOptions& opts = {});

/// Same, but throws FitError when the tolerance is not reached.
RidgeFit fit_ridge_or_throw(const std::function<double(const Eigen::VectorXd&)>& oracle,
                            const Box& box, const FitOptions& opts = {});

/// Multilinear interpolant of values sampled on lattice(box, res); the bridge
/// from grid-sampled data to the continuous oracles the fitters expect.
class GridInterpolant {
  public:
    GridInterpolant(Box box, int res, Eigen::VectorXd values);

    double operator()(const Eigen::VectorXd& x) const;

  private:
    Box box_;
    int res_;
    Eigen::VectorXd values_;
    std::vector<long> strides_;
};

}  // namespace narrowforge
