#pragma once

#include <Eigen/Core>

namespace narrowforge {

/// Dense affine map x -> weight * x + bias.
struct AffineMap {
    Eigen::MatrixXd weight;
    Eigen::VectorXd bias;

    AffineMap() = default;
    AffineMap(Eigen::MatrixXd w, Eigen::VectorXd b);

    static AffineMap identity(int d);

    int in_dim() const { return static_cast<int>(weight.cols()); }
    int out_dim() const { return static_cast<int>(weight.rows()); }

    Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
    Eigen::MatrixXd apply_batch(const Eigen::MatrixXd& xs) const;  // rows = points

    /// Numerical invertibility: square and smallest singular value above
    /// `threshold`. The exact-arithmetic notion needs a float cutoff.
    bool is_invertible(double threshold = 1e-12) const;
    double smallest_singular_value() const;

    /// Solve weight * x + bias = y. Throws NotInvertibleError.
    Eigen::VectorXd solve(const Eigen::VectorXd& y, double threshold = 1e-12) const;

    /// Composition (this ∘ inner) fused into a single affine map.
    AffineMap after(const AffineMap& inner) const;
};

}  // namespace narrowforge
