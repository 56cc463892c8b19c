#pragma once

#include <functional>
#include <optional>
#include <string>

namespace narrowforge {

enum class ActivationKind { LeakyRelu, Relu, Identity, Custom };

/// Properties of a registered custom scalar activation.
struct CustomActivation {
    std::function<double(double)> eval;
    bool strictly_increasing = false;
    // Point alpha where sigma is C^1 with sigma'(alpha) != 0, when known.
    std::optional<double> alpha;
    std::optional<double> deriv_at_alpha;
};

void register_custom_activation(const std::string& name, CustomActivation act);
bool has_custom_activation(const std::string& name);
const CustomActivation& custom_activation(const std::string& name);

/// Componentwise activation attached to a layer. LeakyRelu carries its own
/// beta, so beta may differ across layers.
class ActivationTag {
  public:
    static ActivationTag leaky_relu(double beta);
    static ActivationTag relu() { return ActivationTag(ActivationKind::Relu); }
    static ActivationTag identity() { return ActivationTag(ActivationKind::Identity); }
    static ActivationTag custom(std::string name);

    ActivationKind kind() const { return kind_; }
    double beta() const { return beta_; }
    const std::string& name() const { return name_; }

    double apply(double x) const;
    // Inverse of a strictly increasing activation. Leaky-ReLU inverts as
    // lr_{1/beta}; custom activations fall back to monotone bisection.
    double invert(double y) const;
    bool strictly_increasing() const;
    // Non-decreasing suffices for sound interval propagation.
    bool monotone() const;

    bool operator==(const ActivationTag& o) const {
        return kind_ == o.kind_ && beta_ == o.beta_ && name_ == o.name_;
    }

  private:
    explicit ActivationTag(ActivationKind kind) : kind_(kind) {}

    ActivationKind kind_;
    double beta_ = 1.0;
    std::string name_;
};

inline double leaky_relu(double beta, double x) { return x >= 0.0 ? x : beta * x; }

}  // namespace narrowforge
