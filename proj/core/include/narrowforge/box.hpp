#pragma once

#include <Eigen/Core>
#include <vector>

namespace narrowforge {

/// Axis-aligned compact domain. A zero-dimensional box is legal and denotes
/// the single empty point (the prefix domain of a 1-D map).
struct Box {
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;

    Box() = default;
    Box(Eigen::VectorXd lo, Eigen::VectorXd hi);

    static Box unit(int dim);                       // [0,1]^dim
    static Box uniform(int dim, double a, double b);  // [a,b]^dim

    int dim() const { return static_cast<int>(lo.size()); }
    bool contains(const Eigen::VectorXd& x, double slack = 0.0) const;
    Box prefix(int k) const;  // first k coordinates
    double span(int i) const { return hi[i] - lo[i]; }

    /// Interval hull of two boxes of equal dimension.
    static Box hull(const Box& a, const Box& b);
};

/// Uniform lattice with `res` points per axis (res >= 2 unless dim == 0),
/// materialized row-per-point. A dim-0 box yields one empty point.
Eigen::MatrixXd lattice(const Box& box, int res);

/// Lattice shifted by half a cell, clipped to the box (validation grids).
Eigen::MatrixXd shifted_lattice(const Box& box, int res);

}  // namespace narrowforge
