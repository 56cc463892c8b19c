#pragma once

#include <variant>
#include <vector>

#include "narrowforge/box.hpp"
#include "narrowforge/network.hpp"
#include "narrowforge/pwl.hpp"
#include "narrowforge/ridge.hpp"

namespace narrowforge {

/// Exact width-d realization of
///   (x_1..x_d) -> (x_1..x_{d-1}, x_d + a lr_beta(b . x_{1:d-1} + c))
/// over the box. Pass-through coordinates are positivity-shifted so the two
/// activation layers act as the identity on them.
Network build_ridge_add(int d, const RidgeTerm& term, const Box& box);

/// (x_1..x_d) -> (x_1..x_{d-1}, x_d + t(x_{1:d-1})) as a composition of
/// ridge adds; depth is two activation layers per term, width d.
Network build_translation_add(int d, const RidgeSum& t, const Box& box);

/// Applies a scalar 1->1 network to the last coordinate while passing the
/// d-1 prefix coordinates through positivity shifts. Width d.
Network lift_scalar_to_last(const Network& scalar, int d, const Box& box);

/// Single-coordinate affine coupling flow
///   x -> (x_{1:d-1}, exp(s(x_{1:d-1})) * x_d + t(x_{1:d-1})).
struct AcfSpec {
    int d = 2;
    RidgeSum s;
    RidgeSum t;

    Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
    Eigen::VectorXd apply_inverse(const Eigen::VectorXd& y) const;
};

/// One stage of an INN program: invertible affine, ACF, or a handle to an
/// already-compiled single-coordinate transformation.
struct SctHandle {
    Network net;
};
using InnStage = std::variant<AffineMap, AcfSpec, SctHandle>;

/// Stages apply to the input in list order: stages[0] acts first.
struct InnProgram {
    int d = 2;
    std::vector<InnStage> stages;

    Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
};

struct AcfCompileOptions {
    FitOptions fit;           // budget for the shift-correction fit
    PwlApproxOptions approx;  // knot budgets for log/exp
    AcfCompileOptions() { fit.max_terms = 768; }
};

/// Four-step log/add/exp/add compilation of an ACF, width d, sup error on
/// the box <= tol (grid-measured by the caller). Monotone increasing in x_d.
Network compile_acf(const AcfSpec& spec, const Box& box, double tol,
                    const AcfCompileOptions& opts = {});

struct InnCompileOptions {
    AcfCompileOptions acf;
    double affine_invertibility_threshold = 1e-12;
};

/// Compiles a whole program with per-stage budgets split by downstream
/// Lipschitz estimates. Width d.
Network compile_inn(const InnProgram& prog, const Box& box, double tol,
                    const InnCompileOptions& opts = {});

/// Enclosure of the box image under the exact stage semantics (prefix
/// coordinates never change; the last coordinate interval is tracked).
Box acf_box_image(const AcfSpec& spec, const Box& box);

/// Budget-splitting helpers, shared with the pipeline assembly.
double inn_stage_lipschitz(const InnStage& stage, const Box& box);
Box inn_stage_box_image(const InnStage& stage, const Box& box);

}  // namespace narrowforge
