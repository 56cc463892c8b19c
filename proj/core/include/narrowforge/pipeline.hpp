#pragma once

#include <string>

#include "narrowforge/box.hpp"
#include "narrowforge/coupling.hpp"
#include "narrowforge/network.hpp"
#include "narrowforge/sct.hpp"

namespace narrowforge {

enum class ActivationClassKind { LeakyRelu, Relu, General };

/// The three branches of the extra-width constant alpha(sigma).
struct ActivationClass {
    ActivationClassKind kind = ActivationClassKind::LeakyRelu;
    std::string sigma;  // registered custom activation, General only

    static ActivationClass leaky_relu() { return {ActivationClassKind::LeakyRelu, ""}; }
    static ActivationClass relu() { return {ActivationClassKind::Relu, ""}; }
    static ActivationClass general(std::string sigma_name) {
        return {ActivationClassKind::General, std::move(sigma_name)};
    }
};

int alpha_of(const ActivationClass& cls);  // 0 / 1 / 2
int min_width_bound(int n, int m, const ActivationClass& cls);  // max(2n+1,m)+alpha

/// Zero-padding inclusion R^n -> R^d and projection R^d -> R^m onto the
/// first m coordinates. Both are affine-only networks.
Network include_map(int n, int d);
Network project_map(int d, int m);

/// Target function given as an extended-diffeomorphism program over
/// R^{max(2n+1, m)}; the embedding/extension steps are user-supplied.
struct DiffeoTarget {
    int n = 1;
    int m = 1;
    InnProgram program;

    int d() const { return std::max(2 * n + 1, m); }

    /// Exact semantics project . program . include.
    Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
};

struct PipelineOptions {
    InnCompileOptions inn;
    LiftOptions lift;
    GeneralLiftOptions general;
};

/// End-to-end compilation: width(result) <= min_width_bound(n, m, cls).
/// For Leaky-ReLU the program compiles at width d; ReLU and general
/// activations route coupling stages through the width-(d+1)/(d+2) lifts.
Network compile_pipeline(const DiffeoTarget& target, const ActivationClass& cls,
                         const Box& box, double tol, const PipelineOptions& opts = {});

}  // namespace narrowforge
