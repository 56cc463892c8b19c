#pragma once

#include <Eigen/Core>
#include <functional>

#include "narrowforge/box.hpp"
#include "narrowforge/network.hpp"

namespace narrowforge {

/// Strictly increasing 1-D piecewise-linear function given by breakpoints,
/// per-interval slopes (one more than breakpoints) and an anchor point
/// (x0, f(x0)) fixing the intercept. Continuous by construction.
class PwlFunction {
  public:
    PwlFunction(Eigen::VectorXd breakpoints, Eigen::VectorXd slopes,
                double anchor_x, double anchor_y);

    const Eigen::VectorXd& breakpoints() const { return breakpoints_; }
    const Eigen::VectorXd& slopes() const { return slopes_; }
    double anchor_x() const { return anchor_x_; }
    double anchor_y() const { return anchor_y_; }

    double eval(double x) const;
    double operator()(double x) const { return eval(x); }

    /// Copy with phantom breakpoints (equal adjacent slopes) removed.
    PwlFunction normalized() const;

  private:
    Eigen::VectorXd breakpoints_;
    Eigen::VectorXd slopes_;
    double anchor_x_;
    double anchor_y_;
};

inline double eval_pwl(const PwlFunction& f, double x) { return f.eval(x); }

/// Exact width-1 Leaky-ReLU compilation of an increasing PWL function.
/// depth == number of (non-phantom) breakpoints; agrees with eval_pwl on
/// all of R up to float roundoff.
Network compile_increasing_pwl(const PwlFunction& f);

struct PwlApproxOptions {
    int max_knots = 4096;
    int validation_factor = 8;  // validation points per knot interval
};

/// Adaptive PWL interpolant of a strictly increasing continuous scalar
/// function with sup error <= tol on [a, b], measured on a validation grid
/// finer than the knot grid. Knots are inserted at the measured worst point.
PwlFunction pwl_approximate(const std::function<double(double)>& g, double a, double b,
                            double tol, const PwlApproxOptions& opts = {});

struct GeneralizeOptions {
    PwlApproxOptions approx;
    double range_pad = 0.05;  // relative padding of activation input ranges
};

/// Rewrites a network whose activations are one strictly increasing custom
/// sigma (plus Identity/Leaky-ReLU) into a Leaky-ReLU-only network of the
/// same max width, with sup error <= tol over the box.
Network generalize_activation(const Network& net, const Box& box, double tol,
                              const GeneralizeOptions& opts = {});

}  // namespace narrowforge
