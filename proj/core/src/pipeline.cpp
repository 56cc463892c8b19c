#include "narrowforge/pipeline.hpp"

#include <string>

#include "narrowforge/error.hpp"

namespace narrowforge {

int alpha_of(const ActivationClass& cls) {
    switch (cls.kind) {
        case ActivationClassKind::LeakyRelu: return 0;
        case ActivationClassKind::Relu: return 1;
        case ActivationClassKind::General: return 2;
    }
    return 2;
}

int min_width_bound(int n, int m, const ActivationClass& cls) {
    if (n < 1 || m < 1) throw Error("min_width_bound needs n, m >= 1");
    return std::max(2 * n + 1, m) + alpha_of(cls);
}

Network include_map(int n, int d) {
    if (d < n) throw DimensionError("include: d < n");
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, n);
    w.topLeftCorner(n, n).setIdentity();
    return Network::affine_only(AffineMap(std::move(w), Eigen::VectorXd::Zero(d)));
}

Network project_map(int d, int m) {
    if (m > d) throw DimensionError("project: m > d");
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(m, d);
    w.topLeftCorner(m, m).setIdentity();
    return Network::affine_only(AffineMap(std::move(w), Eigen::VectorXd::Zero(m)));
}

Eigen::VectorXd DiffeoTarget::apply(const Eigen::VectorXd& x) const {
    Eigen::VectorXd padded = Eigen::VectorXd::Zero(d());
    padded.head(n) = x;
    return program.apply(padded).head(m);
}

namespace {

// Oracle for one stage's last coordinate; used by the ReLU/general lifts.
std::function<double(const Eigen::VectorXd&)> stage_last_coordinate(const InnStage& stage) {
    if (const auto* acf = std::get_if<AcfSpec>(&stage)) {
        AcfSpec copy = *acf;
        return [copy](const Eigen::VectorXd& x) { return copy.apply(x)[copy.d - 1]; };
    }
    auto net = std::make_shared<Network>(std::get<SctHandle>(stage).net);
    return [net](const Eigen::VectorXd& x) {
        return net->evaluate(x)[net->input_dim() - 1];
    };
}

}  // namespace

Network compile_pipeline(const DiffeoTarget& target, const ActivationClass& cls,
                         const Box& box, double tol, const PipelineOptions& opts) {
    const int n = target.n, m = target.m, d = target.d();
    if (box.dim() != n) throw DimensionError("compile_pipeline: box dim != n");
    if (target.program.d != d)
        throw DimensionError("compile_pipeline: program dim " +
                             std::to_string(target.program.d) + " != max(2n+1,m) = " +
                             std::to_string(d));
    const int bound = min_width_bound(n, m, cls);

    // The inclusion pads with zeros; compiling over a padded unit box keeps
    // the coupling fits well conditioned around the slice of interest.
    Eigen::VectorXd lo = Eigen::VectorXd::Zero(d), hi = Eigen::VectorXd::Ones(d);
    lo.head(n) = box.lo;
    hi.head(n) = box.hi;
    const Box box_d(lo, hi);

    Network h = Network::identity(d);
    if (cls.kind == ActivationClassKind::LeakyRelu) {
        h = compile_inn(target.program, box_d, tol, opts.inn);
    } else {
        const auto& stages = target.program.stages;
        const int ns = static_cast<int>(stages.size());
        std::vector<Box> boxes{box_d};
        std::vector<double> lips;
        int approx_stages = 0;
        for (const InnStage& stage : stages) {
            lips.push_back(std::max(1.0, inn_stage_lipschitz(stage, boxes.back())));
            boxes.push_back(inn_stage_box_image(stage, boxes.back()));
            if (!std::holds_alternative<AffineMap>(stage)) ++approx_stages;
        }
        std::vector<double> amp(ns, 1.0);
        for (int i = ns - 2; i >= 0; --i) amp[i] = amp[i + 1] * lips[i + 1];

        for (int i = 0; i < ns; ++i) {
            const InnStage& stage = stages[i];
            try {
                if (const auto* aff = std::get_if<AffineMap>(&stage)) {
                    if (!aff->is_invertible(opts.inn.affine_invertibility_threshold))
                        throw NotInvertibleError("affine stage is numerically singular");
                    h = compose(Network::affine_only(*aff), h);
                    continue;
                }
                const double budget = tol / (std::max(approx_stages, 1) * amp[i]);
                auto oracle = stage_last_coordinate(stage);
                Network lifted =
                    cls.kind == ActivationClassKind::Relu
                        ? lift_relu_fit(oracle, d, boxes[i], budget, opts.lift)
                        : lift_general_fit(cls.sigma, oracle, d, boxes[i], budget,
                                           opts.general);
                h = compose(lifted, h);
            } catch (const FitError& e) {
                throw FitError("pipeline stage " + std::to_string(i) + ": " + e.what(),
                               e.best_error);
            } catch (const NotInvertibleError& e) {
                throw NotInvertibleError("pipeline stage " + std::to_string(i) + ": " +
                                         e.what());
            }
        }
    }

    Network out = compose(project_map(d, m), compose(h, include_map(n, d)));
    if (out.width() > bound)
        throw Error("internal width accounting violation: " + std::to_string(out.width()) +
                    " > " + std::to_string(bound));
    return out;
}

}  // namespace narrowforge
