#include "narrowforge/network.hpp"

#include <string>
#include <utility>

#include "narrowforge/error.hpp"

namespace narrowforge {

namespace {

void apply_activation_inplace(const ActivationTag& act, Eigen::MatrixXd& z) {
    switch (act.kind()) {
        case ActivationKind::Identity:
            return;
        case ActivationKind::Relu:
            z = z.cwiseMax(0.0);
            return;
        case ActivationKind::LeakyRelu: {
            const double beta = act.beta();
            z = z.unaryExpr([beta](double v) { return v >= 0.0 ? v : beta * v; });
            return;
        }
        case ActivationKind::Custom: {
            const CustomActivation& c = custom_activation(act.name());
            z = z.unaryExpr([&c](double v) { return c.eval(v); });
            return;
        }
    }
}

}  // namespace

Network::Network(int input_dim, std::vector<Layer> layers, AffineMap final_affine)
    : input_dim_(input_dim), layers_(std::move(layers)), final_(std::move(final_affine)) {
    if (input_dim_ <= 0)
        throw DimensionError("network input dim must be positive");
    int cur = input_dim_;
    for (size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i].affine.in_dim() != cur)
            throw DimensionError("layer " + std::to_string(i) + " expects input dim " +
                                     std::to_string(layers_[i].affine.in_dim()) +
                                     " but receives " + std::to_string(cur),
                                 static_cast<int>(i));
        cur = layers_[i].affine.out_dim();
    }
    if (final_.in_dim() != cur)
        throw DimensionError("final affine expects input dim " +
                             std::to_string(final_.in_dim()) + " but receives " +
                             std::to_string(cur));
}

Network Network::identity(int d) { return affine_only(AffineMap::identity(d)); }

Network Network::affine_only(AffineMap a) {
    int in = a.in_dim();
    return Network(in, {}, std::move(a));
}

int Network::width() const {
    int w = 0;
    for (const Layer& l : layers_) w = std::max(w, l.affine.out_dim());
    return w;
}

Eigen::VectorXd Network::evaluate(const Eigen::VectorXd& x) const {
    if (x.size() != input_dim_)
        throw DimensionError("evaluate: expected input dim " + std::to_string(input_dim_) +
                             ", got " + std::to_string(x.size()));
    Eigen::MatrixXd z = x.transpose();
    for (const Layer& l : layers_) {
        z = l.affine.apply_batch(z);
        apply_activation_inplace(l.activation, z);
    }
    z = final_.apply_batch(z);
    return z.row(0).transpose();
}

Eigen::MatrixXd Network::evaluate_batch(const Eigen::MatrixXd& xs) const {
    if (xs.cols() != input_dim_)
        throw DimensionError("evaluate_batch: expected input dim " +
                             std::to_string(input_dim_) + ", got " +
                             std::to_string(xs.cols()));
    Eigen::MatrixXd z = xs;
    for (const Layer& l : layers_) {
        z = l.affine.apply_batch(z);
        apply_activation_inplace(l.activation, z);
    }
    return final_.apply_batch(z);
}

std::vector<Eigen::VectorXd> Network::evaluate_trace(const Eigen::VectorXd& x) const {
    std::vector<Eigen::VectorXd> trace;
    trace.reserve(layers_.size() + 1);
    Eigen::MatrixXd z = x.transpose();
    for (const Layer& l : layers_) {
        z = l.affine.apply_batch(z);
        apply_activation_inplace(l.activation, z);
        trace.push_back(z.row(0).transpose());
    }
    z = final_.apply_batch(z);
    trace.push_back(z.row(0).transpose());
    return trace;
}

Eigen::VectorXd Network::invert(const Eigen::VectorXd& y, double threshold) const {
    Eigen::VectorXd cur = final_.solve(y, threshold);
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
        if (!it->activation.strictly_increasing())
            throw NotInvertibleError("activation is not strictly increasing");
        Eigen::VectorXd pre(cur.size());
        for (Eigen::Index i = 0; i < cur.size(); ++i)
            pre[i] = it->activation.invert(cur[i]);
        cur = it->affine.solve(pre, threshold);
    }
    return cur;
}

Network compose(const Network& outer, const Network& inner) {
    if (inner.output_dim() != outer.input_dim())
        throw DimensionError("compose: inner output dim " +
                             std::to_string(inner.output_dim()) +
                             " != outer input dim " + std::to_string(outer.input_dim()));
    std::vector<Layer> layers = inner.layers();
    AffineMap final_affine;
    if (outer.layers().empty()) {
        final_affine = outer.final_affine().after(inner.final_affine());
    } else {
        const std::vector<Layer>& ol = outer.layers();
        layers.push_back(Layer{ol[0].affine.after(inner.final_affine()), ol[0].activation});
        layers.insert(layers.end(), ol.begin() + 1, ol.end());
        final_affine = outer.final_affine();
    }
    return Network(inner.input_dim(), std::move(layers), std::move(final_affine));
}

}  // namespace narrowforge
