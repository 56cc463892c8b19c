#include "narrowforge/pwl.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "narrowforge/error.hpp"
#include "narrowforge/intervals.hpp"

namespace narrowforge {

PwlFunction::PwlFunction(Eigen::VectorXd breakpoints, Eigen::VectorXd slopes,
                         double anchor_x, double anchor_y)
    : breakpoints_(std::move(breakpoints)),
      slopes_(std::move(slopes)),
      anchor_x_(anchor_x),
      anchor_y_(anchor_y) {
    if (slopes_.size() != breakpoints_.size() + 1)
        throw DimensionError("PWL needs one slope per interval: " +
                             std::to_string(breakpoints_.size()) + " breakpoints need " +
                             std::to_string(breakpoints_.size() + 1) + " slopes");
    for (Eigen::Index i = 0; i + 1 < breakpoints_.size(); ++i)
        if (!(breakpoints_[i] < breakpoints_[i + 1]))
            throw Error("PWL breakpoints must be strictly increasing");
    for (Eigen::Index i = 0; i < slopes_.size(); ++i)
        if (!(slopes_[i] > 0.0))
            throw MonotonicityError("PWL slope " + std::to_string(i) +
                                    " is not positive: " + std::to_string(slopes_[i]));
}

namespace {

// Index of the affine piece containing x (ties resolve right; continuity
// makes either choice evaluate identically).
int segment_of(const Eigen::VectorXd& bp, double x) {
    return static_cast<int>(std::upper_bound(bp.data(), bp.data() + bp.size(), x) -
                            bp.data());
}

}  // namespace

double PwlFunction::eval(double x) const {
    const int sa = segment_of(breakpoints_, anchor_x_);
    const int sx = segment_of(breakpoints_, x);
    double v = anchor_y_;
    double p = anchor_x_;
    if (sx >= sa) {
        for (int s = sa; s < sx; ++s) {
            v += slopes_[s] * (breakpoints_[s] - p);
            p = breakpoints_[s];
        }
    } else {
        for (int s = sa; s > sx; --s) {
            v += slopes_[s] * (breakpoints_[s - 1] - p);
            p = breakpoints_[s - 1];
        }
    }
    return v + slopes_[sx] * (x - p);
}

PwlFunction PwlFunction::normalized() const {
    std::vector<double> bp, sl;
    sl.push_back(slopes_[0]);
    for (Eigen::Index i = 0; i < breakpoints_.size(); ++i) {
        if (slopes_[i + 1] == sl.back()) continue;  // phantom breakpoint
        bp.push_back(breakpoints_[i]);
        sl.push_back(slopes_[i + 1]);
    }
    Eigen::VectorXd b(bp.size()), s(sl.size());
    for (size_t i = 0; i < bp.size(); ++i) b[i] = bp[i];
    for (size_t i = 0; i < sl.size(); ++i) s[i] = sl[i];
    return PwlFunction(b, s, anchor_x_, anchor_y_);
}

Network compile_increasing_pwl(const PwlFunction& input) {
    const PwlFunction f = input.normalized();
    const Eigen::VectorXd& bp = f.breakpoints();
    const Eigen::VectorXd& sl = f.slopes();
    const int n = static_cast<int>(bp.size());

    auto affine1 = [](double w, double b) {
        Eigen::MatrixXd wm(1, 1);
        wm(0, 0) = w;
        Eigen::VectorXd bv(1);
        bv[0] = b;
        return AffineMap(std::move(wm), std::move(bv));
    };

    if (n == 0)
        return Network::affine_only(affine1(sl[0], f.anchor_y() - sl[0] * f.anchor_x()));

    // Base: the leftmost piece extended over all of R (line through
    // (bp_0, f(bp_0)) with the first slope).
    const double v0 = f.eval(bp[0]);
    Network net = Network::affine_only(affine1(sl[0], v0 - sl[0] * bp[0]));

    // Re-attach breakpoints smallest to largest; each wrap peels back one
    // level of the recursion  f = (s_k/s_{k-1}) lr_{s_{k-1}/s_k}(f0 - v_k) + v_k.
    for (int k = 0; k < n; ++k) {
        const double vk = f.eval(bp[k]);
        const double beta = sl[k] / sl[k + 1];
        std::vector<Layer> wrap_layers;
        wrap_layers.push_back(Layer{affine1(1.0, -vk), ActivationTag::leaky_relu(beta)});
        Network wrap(1, std::move(wrap_layers), affine1(sl[k + 1] / sl[k], vk));
        net = compose(wrap, net);
    }
    return net;
}

PwlFunction pwl_approximate(const std::function<double(double)>& g, double a, double b,
                            double tol, const PwlApproxOptions& opts) {
    if (!(a < b)) throw Error("pwl_approximate needs a < b");
    if (!(tol > 0.0)) throw Error("pwl_approximate needs tol > 0");

    std::set<double> knots{a, b};
    auto interpolant = [&](const std::vector<double>& ks,
                           const std::vector<double>& vs) {
        const int m = static_cast<int>(ks.size());
        Eigen::VectorXd bp(m - 2), sl(m - 1);
        for (int i = 0; i + 1 < m; ++i) {
            sl[i] = (vs[i + 1] - vs[i]) / (ks[i + 1] - ks[i]);
            if (!(sl[i] > 0.0))
                throw MonotonicityError("sampled values are not strictly increasing near x=" +
                                        std::to_string(ks[i]));
        }
        for (int i = 1; i + 1 < m; ++i) bp[i - 1] = ks[i];
        return PwlFunction(bp, sl, ks.front(), vs.front());
    };

    double best_err = std::numeric_limits<double>::infinity();
    while (true) {
        std::vector<double> ks(knots.begin(), knots.end());
        std::vector<double> vs(ks.size());
        for (size_t i = 0; i < ks.size(); ++i) vs[i] = g(ks[i]);
        PwlFunction f = interpolant(ks, vs);

        // Validation on a per-segment refinement of the knot grid.
        double worst_err = 0.0, worst_x = a;
        for (size_t i = 0; i + 1 < ks.size(); ++i) {
            for (int j = 1; j < opts.validation_factor; ++j) {
                const double t = ks[i] + (ks[i + 1] - ks[i]) * j / opts.validation_factor;
                const double err = std::abs(g(t) - f.eval(t));
                if (err > worst_err) {
                    worst_err = err;
                    worst_x = t;
                }
            }
        }
        best_err = std::min(best_err, worst_err);
        if (worst_err <= tol) return f;
        if (static_cast<int>(knots.size()) >= opts.max_knots)
            throw FitError("pwl_approximate: " + std::to_string(opts.max_knots) +
                               "-knot budget exhausted, best sup error " +
                               std::to_string(best_err),
                           best_err);
        knots.insert(worst_x);
    }
}

namespace {

// Scalar 1->1 network applied to every coordinate of a d-dim signal.
// Each 1x1 affine a*u + b becomes the diagonal map a*I x + b*1.
Network diagonal_expand(const Network& scalar, int d) {
    auto diag = [d](const AffineMap& a1) {
        return AffineMap(a1.weight(0, 0) * Eigen::MatrixXd::Identity(d, d),
                         Eigen::VectorXd::Constant(d, a1.bias[0]));
    };
    std::vector<Layer> layers;
    layers.reserve(scalar.layers().size());
    for (const Layer& l : scalar.layers()) layers.push_back(Layer{diag(l.affine), l.activation});
    return Network(d, std::move(layers), diag(scalar.final_affine()));
}

double operator_inf_norm(const Eigen::MatrixXd& w) {
    return w.rows() == 0 ? 0.0 : w.cwiseAbs().rowwise().sum().maxCoeff();
}

// Sampled Lipschitz constant of an activation over [lo, hi].
double activation_lipschitz(const ActivationTag& act, double lo, double hi) {
    switch (act.kind()) {
        case ActivationKind::Identity: return 1.0;
        case ActivationKind::Relu: return 1.0;
        case ActivationKind::LeakyRelu: return std::max(1.0, act.beta());
        case ActivationKind::Custom: break;
    }
    const int res = 512;
    if (!(hi > lo)) return 1.0;
    double lip = 0.0, prev = act.apply(lo);
    const double h = (hi - lo) / res;
    for (int i = 1; i <= res; ++i) {
        const double cur = act.apply(lo + i * h);
        lip = std::max(lip, std::abs(cur - prev) / h);
        prev = cur;
    }
    return std::max(lip, 1e-12);
}

}  // namespace

Network generalize_activation(const Network& net, const Box& box, double tol,
                              const GeneralizeOptions& opts) {
    if (!(tol > 0.0)) throw Error("generalize_activation needs tol > 0");

    // Validate: one custom sigma throughout (Identity/Leaky-ReLU pass through).
    std::string sigma_name;
    for (const Layer& l : net.layers()) {
        if (l.activation.kind() != ActivationKind::Custom) continue;
        if (!l.activation.strictly_increasing())
            throw MonotonicityError("activation '" + l.activation.name() +
                                    "' is not strictly increasing");
        if (sigma_name.empty())
            sigma_name = l.activation.name();
        else if (sigma_name != l.activation.name())
            throw Error("generalize_activation expects a single custom activation, found '" +
                        sigma_name + "' and '" + l.activation.name() + "'");
    }
    if (sigma_name.empty()) return net;  // already Leaky-ReLU/Identity only

    const CustomActivation& sigma = custom_activation(sigma_name);
    const IntervalTrace trace = propagate_interval_trace(net, box);
    const int n_layers = static_cast<int>(net.layers().size());

    // Per-layer activation input range (union over coordinates), padded so the
    // approximant stays valid under small upstream perturbations.
    std::vector<double> range_lo(n_layers), range_hi(n_layers);
    int n_custom = 0;
    for (int k = 0; k < n_layers; ++k) {
        const Box& pre = trace.pre_activation[k];
        double lo = pre.lo.minCoeff(), hi = pre.hi.maxCoeff();
        const double pad = opts.range_pad * std::max(hi - lo, 1.0) + 1e-9;
        range_lo[k] = lo - pad;
        range_hi[k] = hi + pad;
        if (net.layers()[k].activation.kind() == ActivationKind::Custom) ++n_custom;
    }

    // Error budget per custom layer, inverse to the Lipschitz constant of the
    // downstream tail (interval-estimated).
    std::vector<double> downstream(n_layers, 1.0);
    double tail = operator_inf_norm(net.final_affine().weight);
    for (int k = n_layers - 1; k >= 0; --k) {
        downstream[k] = std::max(tail, 1e-12);
        const double act_lip =
            activation_lipschitz(net.layers()[k].activation, range_lo[k], range_hi[k]);
        tail *= act_lip * std::max(operator_inf_norm(net.layers()[k].affine.weight), 1e-12);
    }

    Network result = Network::identity(net.input_dim());
    for (int k = 0; k < n_layers; ++k) {
        const Layer& l = net.layers()[k];
        if (l.activation.kind() != ActivationKind::Custom) {
            if (l.activation.kind() == ActivationKind::Identity) {
                result = compose(Network::affine_only(l.affine), result);
            } else {
                result = compose(Network(l.affine.in_dim(), {l}, AffineMap::identity(l.affine.out_dim())),
                                 result);
            }
            continue;
        }
        const double budget = tol / (n_custom * downstream[k]);
        PwlFunction approx = pwl_approximate(sigma.eval, range_lo[k], range_hi[k], budget,
                                             opts.approx);
        Network scalar = compile_increasing_pwl(approx);
        const int dk = l.affine.out_dim();
        Network rep = compose(diagonal_expand(scalar, dk), Network::affine_only(l.affine));
        if (rep.layers().empty()) {
            // Affine approximant: keep the layer slot so the width is unchanged.
            rep = Network(rep.input_dim(),
                          {Layer{rep.final_affine(), ActivationTag::identity()}},
                          AffineMap::identity(dk));
        }
        result = compose(rep, result);
    }
    return compose(Network::affine_only(net.final_affine()), result);
}

}  // namespace narrowforge
