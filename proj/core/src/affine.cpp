#include "narrowforge/affine.hpp"

#include <Eigen/Dense>
#include <string>

#include "narrowforge/error.hpp"

namespace narrowforge {

AffineMap::AffineMap(Eigen::MatrixXd w, Eigen::VectorXd b)
    : weight(std::move(w)), bias(std::move(b)) {
    if (weight.rows() != bias.size())
        throw DimensionError("affine weight has " + std::to_string(weight.rows()) +
                             " rows but bias has " + std::to_string(bias.size()) +
                             " entries");
}

AffineMap AffineMap::identity(int d) {
    return AffineMap(Eigen::MatrixXd::Identity(d, d), Eigen::VectorXd::Zero(d));
}

Eigen::VectorXd AffineMap::apply(const Eigen::VectorXd& x) const {
    if (x.size() != weight.cols())
        throw DimensionError("affine expects input of dim " +
                             std::to_string(weight.cols()) + ", got " +
                             std::to_string(x.size()));
    return weight * x + bias;
}

Eigen::MatrixXd AffineMap::apply_batch(const Eigen::MatrixXd& xs) const {
    if (xs.cols() != weight.cols())
        throw DimensionError("affine expects input of dim " +
                             std::to_string(weight.cols()) + ", got " +
                             std::to_string(xs.cols()));
    return (xs * weight.transpose()).rowwise() + bias.transpose();
}

double AffineMap::smallest_singular_value() const {
    if (weight.rows() == 0 || weight.cols() == 0) return 0.0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(weight);
    return svd.singularValues().minCoeff();
}

bool AffineMap::is_invertible(double threshold) const {
    if (weight.rows() != weight.cols()) return false;
    if (weight.rows() == 0) return true;
    return smallest_singular_value() > threshold;
}

Eigen::VectorXd AffineMap::solve(const Eigen::VectorXd& y, double threshold) const {
    if (weight.rows() != weight.cols())
        throw NotInvertibleError("affine map is not square (" +
                                 std::to_string(weight.rows()) + "x" +
                                 std::to_string(weight.cols()) + ")");
    if (!is_invertible(threshold))
        throw NotInvertibleError("affine map is numerically singular");
    return weight.partialPivLu().solve(y - bias);
}

AffineMap AffineMap::after(const AffineMap& inner) const {
    if (inner.out_dim() != in_dim())
        throw DimensionError("cannot fuse affines: inner out dim " +
                             std::to_string(inner.out_dim()) + " != outer in dim " +
                             std::to_string(in_dim()));
    return AffineMap(weight * inner.weight, weight * inner.bias + bias);
}

}  // namespace narrowforge
