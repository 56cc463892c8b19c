#pragma once

#include <Eigen/Core>
#include <vector>

#include "narrowforge/activation.hpp"
#include "narrowforge/affine.hpp"

namespace narrowforge {

/// One hidden layer: affine map followed by a componentwise activation.
struct Layer {
    AffineMap affine;
    ActivationTag activation;
};

/// Feedforward network  final ∘ act ∘ W_N ∘ ... ∘ act ∘ W_1.
///
/// width  = largest intermediate dimension (excludes input and final output),
/// depth  = number of activation layers.
/// Immutable after construction; safe to share across threads.
class Network {
  public:
    Network(int input_dim, std::vector<Layer> layers, AffineMap final_affine);

    static Network identity(int d);
    static Network affine_only(AffineMap a);

    int input_dim() const { return input_dim_; }
    int output_dim() const { return final_.out_dim(); }
    int width() const;
    int depth() const { return static_cast<int>(layers_.size()); }

    const std::vector<Layer>& layers() const { return layers_; }
    const AffineMap& final_affine() const { return final_; }

    Eigen::VectorXd evaluate(const Eigen::VectorXd& x) const;
    /// Rows are points; returns one output row per input row.
    Eigen::MatrixXd evaluate_batch(const Eigen::MatrixXd& xs) const;
    /// Post-activation vector of every layer, then the final output.
    std::vector<Eigen::VectorXd> evaluate_trace(const Eigen::VectorXd& x) const;

    /// Layer-by-layer inversion (affine solve + scalar activation inverse).
    /// Requires square invertible affines and strictly increasing activations.
    Eigen::VectorXd invert(const Eigen::VectorXd& y, double threshold = 1e-12) const;

  private:
    int input_dim_;
    std::vector<Layer> layers_;
    AffineMap final_;
};

/// evaluate(compose(outer, inner), x) == evaluate(outer, evaluate(inner, x)).
/// The seam affines are fused so no phantom layer appears.
Network compose(const Network& outer, const Network& inner);

inline Eigen::VectorXd evaluate(const Network& net, const Eigen::VectorXd& x) {
    return net.evaluate(x);
}
inline Eigen::VectorXd invert_evaluate(const Network& net, const Eigen::VectorXd& y) {
    return net.invert(y);
}

}  // namespace narrowforge
