#include "narrowforge/coupling.hpp"

#include <cmath>
#include <random>
#include <string>

#include "narrowforge/error.hpp"
#include "narrowforge/intervals.hpp"

namespace narrowforge {

namespace {

constexpr double kMargin = 1.0;  // positivity margin for pass-through slots

}  // namespace

Network build_ridge_add(int d, const RidgeTerm& term, const Box& box) {
    if (d < 1) throw DimensionError("build_ridge_add needs d >= 1");
    if (box.dim() != d)
        throw DimensionError("build_ridge_add: box dim " + std::to_string(box.dim()) +
                             " != d = " + std::to_string(d));
    if (term.b.size() != d - 1)
        throw DimensionError("ridge term direction has dim " + std::to_string(term.b.size()) +
                             ", expected d-1 = " + std::to_string(d - 1));
    for (int j = 0; j < d; ++j)
        if (!std::isfinite(box.lo[j]) || !std::isfinite(box.hi[j]))
            throw Error("build_ridge_add requires a compact box");

    const bool b_zero = term.b.size() == 0 || term.b.cwiseAbs().maxCoeff() == 0.0;
    if (term.a == 0.0 || b_zero) {
        // Constant add (or nothing): affine only.
        AffineMap f = AffineMap::identity(d);
        f.bias[d - 1] = term.a * leaky_relu(term.beta, term.c);
        return Network::affine_only(std::move(f));
    }

    int slot = 0;
    term.b.cwiseAbs().maxCoeff(&slot);

    // Range of the ridge value a * lr_beta(b . x' + c) over the box.
    double arg_lo = term.c, arg_hi = term.c;
    for (int j = 0; j < d - 1; ++j) {
        const double w = term.b[j];
        arg_lo += w >= 0 ? w * box.lo[j] : w * box.hi[j];
        arg_hi += w >= 0 ? w * box.hi[j] : w * box.lo[j];
    }
    const double r0 = term.a * leaky_relu(term.beta, arg_lo);
    const double r1 = term.a * leaky_relu(term.beta, arg_hi);
    const double ridge_lo = std::min(r0, r1);

    // Shifts keeping every pass-through slot positive through both
    // activations; the last slot must survive the addition as well.
    Eigen::VectorXd shift = Eigen::VectorXd::Zero(d);
    for (int j = 0; j < d - 1; ++j)
        if (j != slot) shift[j] = kMargin - box.lo[j];
    shift[d - 1] = kMargin - box.lo[d - 1] + std::max(0.0, -ridge_lo);

    // Layer 1: place the ridge argument in `slot`, shift the rest.
    Eigen::MatrixXd w1 = Eigen::MatrixXd::Identity(d, d);
    Eigen::VectorXd b1 = shift;
    w1.row(slot).setZero();
    w1.row(slot).head(d - 1) = term.b.transpose();
    b1[slot] = term.c;

    // Layer 2: add a * slot into the last coordinate, keep the slot.
    Eigen::MatrixXd w2 = Eigen::MatrixXd::Identity(d, d);
    w2(d - 1, slot) += term.a;

    // Final affine: invert the slot substitution and remove the shifts.
    Eigen::MatrixXd wf = Eigen::MatrixXd::Identity(d, d);
    Eigen::VectorXd bf = -shift;
    wf.row(slot).setZero();
    double bias_slot = -term.c;
    for (int j = 0; j < d - 1; ++j) {
        if (j == slot) continue;
        wf(slot, j) = -term.b[j];
        bias_slot += term.b[j] * shift[j];
    }
    wf(slot, slot) = 1.0;
    wf.row(slot) /= term.b[slot];
    bf[slot] = bias_slot / term.b[slot];

    std::vector<Layer> layers;
    layers.push_back(Layer{AffineMap(std::move(w1), std::move(b1)),
                           ActivationTag::leaky_relu(term.beta)});
    layers.push_back(Layer{AffineMap(std::move(w2), Eigen::VectorXd::Zero(d)),
                           ActivationTag::leaky_relu(1.0 / term.beta)});
    return Network(d, std::move(layers), AffineMap(std::move(wf), std::move(bf)));
}

Network build_translation_add(int d, const RidgeSum& t, const Box& box) {
    AffineMap const_add = AffineMap::identity(d);
    const_add.bias[d - 1] = t.constant;
    Network net = Network::affine_only(std::move(const_add));

    Box cur = box;
    cur.lo[d - 1] = box.lo[d - 1] + t.constant;
    cur.hi[d - 1] = box.hi[d - 1] + t.constant;

    for (const RidgeTerm& term : t.terms) {
        net = compose(build_ridge_add(d, term, cur), net);
        // Widen the last-coordinate interval by the term's value range.
        RidgeSum one{{term}, 0.0};
        auto [lo, hi] = one.interval(box.prefix(d - 1));
        cur.lo[d - 1] += lo;
        cur.hi[d - 1] += hi;
    }
    return net;
}

Network lift_scalar_to_last(const Network& scalar, int d, const Box& box) {
    if (scalar.input_dim() != 1 || scalar.output_dim() != 1)
        throw DimensionError("lift_scalar_to_last expects a 1->1 network");
    if (box.dim() != d) throw DimensionError("lift_scalar_to_last: box dim != d");

    auto embed = [d](const AffineMap& a1, const Eigen::VectorXd& diag_bias) {
        Eigen::MatrixXd w = Eigen::MatrixXd::Identity(d, d);
        w(d - 1, d - 1) = a1.weight(0, 0);
        Eigen::VectorXd b = diag_bias;
        b[d - 1] = a1.bias[0];
        return AffineMap(std::move(w), std::move(b));
    };

    if (scalar.layers().empty()) {
        return Network::affine_only(embed(scalar.final_affine(), Eigen::VectorXd::Zero(d)));
    }

    Eigen::VectorXd shift = Eigen::VectorXd::Zero(d);
    for (int j = 0; j < d - 1; ++j) shift[j] = kMargin - box.lo[j];

    std::vector<Layer> layers;
    layers.reserve(scalar.layers().size());
    bool first = true;
    for (const Layer& l : scalar.layers()) {
        layers.push_back(Layer{embed(l.affine, first ? shift : Eigen::VectorXd::Zero(d)),
                               l.activation});
        first = false;
    }
    AffineMap fin = embed(scalar.final_affine(), -shift);
    return Network(d, std::move(layers), std::move(fin));
}

Eigen::VectorXd AcfSpec::apply(const Eigen::VectorXd& x) const {
    if (x.size() != d)
        throw DimensionError("ACF over dim " + std::to_string(d) + " applied to dim " +
                             std::to_string(x.size()));
    Eigen::VectorXd y = x;
    const Eigen::VectorXd prefix = x.head(d - 1);
    y[d - 1] = std::exp(s.eval(prefix)) * x[d - 1] + t.eval(prefix);
    return y;
}

Eigen::VectorXd AcfSpec::apply_inverse(const Eigen::VectorXd& y) const {
    Eigen::VectorXd x = y;
    const Eigen::VectorXd prefix = y.head(d - 1);
    x[d - 1] = (y[d - 1] - t.eval(prefix)) * std::exp(-s.eval(prefix));
    return x;
}

Box acf_box_image(const AcfSpec& spec, const Box& box) {
    const Box prefix = box.prefix(spec.d - 1);
    auto [s_lo, s_hi] = spec.s.interval(prefix);
    auto [t_lo, t_hi] = spec.t.interval(prefix);
    const double e_lo = std::exp(s_lo), e_hi = std::exp(s_hi);
    const double xlo = box.lo[spec.d - 1], xhi = box.hi[spec.d - 1];
    const double m_lo = std::min(std::min(e_lo * xlo, e_hi * xlo), std::min(e_lo * xhi, e_hi * xhi));
    const double m_hi = std::max(std::max(e_lo * xlo, e_hi * xlo), std::max(e_lo * xhi, e_hi * xhi));
    Box out = box;
    out.lo[spec.d - 1] = m_lo + t_lo;
    out.hi[spec.d - 1] = m_hi + t_hi;
    return out;
}

Eigen::VectorXd InnProgram::apply(const Eigen::VectorXd& x) const {
    Eigen::VectorXd cur = x;
    for (const InnStage& stage : stages) {
        if (const auto* aff = std::get_if<AffineMap>(&stage)) {
            cur = aff->apply(cur);
        } else if (const auto* acf = std::get_if<AcfSpec>(&stage)) {
            cur = acf->apply(cur);
        } else {
            cur = std::get<SctHandle>(stage).net.evaluate(cur);
        }
    }
    return cur;
}

Network compile_acf(const AcfSpec& spec, const Box& box, double tol,
                    const AcfCompileOptions& opts) {
    const int d = spec.d;
    if (box.dim() != d) throw DimensionError("compile_acf: box dim != spec.d");
    if (!(tol > 0.0)) throw Error("compile_acf needs tol > 0");
    const Box prefix = box.prefix(d - 1);

    if (spec.s.terms.empty()) {
        // exp(s) is a constant: scale + translation add, no log/exp needed.
        const double scale = std::exp(spec.s.constant);
        AffineMap sc = AffineMap::identity(d);
        sc.weight(d - 1, d - 1) = scale;
        Box scaled = box;
        scaled.lo[d - 1] = std::min(scale * box.lo[d - 1], scale * box.hi[d - 1]);
        scaled.hi[d - 1] = std::max(scale * box.lo[d - 1], scale * box.hi[d - 1]);
        return compose(build_translation_add(d, spec.t, scaled),
                       Network::affine_only(std::move(sc)));
    }

    // Conjugate the last coordinate by +M so the log argument sits in
    // [1, hi+M]; the residual -M*exp(s(x')) is folded into the final add.
    const double M = 1.0 - box.lo[d - 1];
    auto [s_lo, s_hi] = spec.s.interval(prefix);
    const double u_hi = box.hi[d - 1] + M;
    const double w_lo = 0.0 + s_lo, w_hi = std::log(u_hi) + s_hi;

    const double amp = std::exp(w_hi);
    const double e_log = 0.2 * tol / std::max(amp, 1.0);
    const double e_exp = 0.2 * tol;
    const double e_fit = 0.6 * tol;

    // Step 1: u = log(x_d + M) on the last coordinate.
    PwlFunction plog = pwl_approximate([](double u) { return std::log(u); }, 0.5,
                                       u_hi + 0.5, e_log, opts.approx);
    Network slog = compose(compile_increasing_pwl(plog),
                           Network::affine_only(AffineMap(
                               Eigen::MatrixXd::Constant(1, 1, 1.0),
                               Eigen::VectorXd::Constant(1, M))));
    Network net = lift_scalar_to_last(slog, d, box);
    Box cur = box;
    cur.lo[d - 1] = plog.eval(box.lo[d - 1] + M) - e_log;
    cur.hi[d - 1] = plog.eval(box.hi[d - 1] + M) + e_log;

    // Step 2: add s(x') exactly.
    net = compose(build_translation_add(d, spec.s, cur), net);
    cur.lo[d - 1] += s_lo;
    cur.hi[d - 1] += s_hi;

    // Step 3: exponential on the last coordinate.
    PwlFunction pexp = pwl_approximate([](double u) { return std::exp(u); },
                                       std::min(w_lo, cur.lo[d - 1]) - 0.1,
                                       std::max(w_hi, cur.hi[d - 1]) + 0.1, e_exp,
                                       opts.approx);
    net = compose(lift_scalar_to_last(compile_increasing_pwl(pexp), d, cur), net);
    cur.lo[d - 1] = pexp.eval(cur.lo[d - 1]) - e_exp;
    cur.hi[d - 1] = pexp.eval(cur.hi[d - 1]) + e_exp;

    // Step 4: add t(x') and the conjugation correction -M*exp(s(x')).
    // exp(s) bends exactly along s's kink directions, so hint them.
    FitOptions fit = opts.fit;
    fit.tol = e_fit;
    for (const RidgeTerm& term : spec.s.terms) fit.hint_directions.push_back(term.b);
    const RidgeSum& s_sum = spec.s;
    RidgeFit corr = fit_ridge(
        [&s_sum, M](const Eigen::VectorXd& px) { return -M * std::exp(s_sum.eval(px)); },
        prefix, fit);
    if (!corr.converged)
        throw FitError("compile_acf: shift-correction fit missed tol " +
                           std::to_string(e_fit) + " (best " +
                           std::to_string(corr.validation_error) + ")",
                       corr.validation_error);
    RidgeSum t_eff = RidgeSum::concat(spec.t, corr.sum);
    net = compose(build_translation_add(d, t_eff, cur), net);
    return net;
}

double inn_stage_lipschitz(const InnStage& stage, const Box& box) {
    if (const auto* aff = std::get_if<AffineMap>(&stage)) {
        return aff->weight.cwiseAbs().rowwise().sum().maxCoeff();
    }
    if (const auto* acf = std::get_if<AcfSpec>(&stage)) {
        const Box prefix = box.prefix(acf->d - 1);
        auto [s_lo, s_hi] = acf->s.interval(prefix);
        const double xd_max =
            std::max(std::abs(box.lo[acf->d - 1]), std::abs(box.hi[acf->d - 1]));
        const double scale = std::exp(s_hi);
        const double lip_s = acf->s.sampled_lipschitz(prefix);
        const double lip_t = acf->t.sampled_lipschitz(prefix);
        return std::max(1.0, scale + scale * lip_s * xd_max + lip_t);
    }
    // SCT handle: sampled finite-difference estimate.
    const Network& net = std::get<SctHandle>(stage).net;
    const int d = box.dim();
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double lip = 1.0;
    for (int s = 0; s < 64; ++s) {
        Eigen::VectorXd x(d);
        for (int j = 0; j < d; ++j) x[j] = box.lo[j] + unif(rng) * box.span(j);
        Eigen::VectorXd y = net.evaluate(x);
        for (int j = 0; j < d; ++j) {
            const double h = 1e-4 * std::max(box.span(j), 1.0);
            Eigen::VectorXd xp = x;
            xp[j] = std::min(x[j] + h, box.hi[j]);
            if (xp[j] == x[j]) continue;
            Eigen::VectorXd yp = net.evaluate(xp);
            lip = std::max(lip, (yp - y).cwiseAbs().maxCoeff() / (xp[j] - x[j]) *
                                    static_cast<double>(d));
        }
    }
    return lip;
}

Box inn_stage_box_image(const InnStage& stage, const Box& box) {
    if (const auto* aff = std::get_if<AffineMap>(&stage)) return affine_interval(*aff, box);
    if (const auto* acf = std::get_if<AcfSpec>(&stage)) return acf_box_image(*acf, box);
    // Sampled range of the handle network, padded.
    const Network& net = std::get<SctHandle>(stage).net;
    const int d = box.dim();
    const int res = d <= 2 ? 17 : 7;
    Eigen::MatrixXd pts = lattice(box, res);
    Eigen::MatrixXd out = net.evaluate_batch(pts);
    Eigen::VectorXd lo = out.colwise().minCoeff(), hi = out.colwise().maxCoeff();
    Eigen::VectorXd pad = 0.2 * (hi - lo).cwiseMax(1e-6);
    return Box(lo - pad, hi + pad);
}

Network compile_inn(const InnProgram& prog, const Box& box, double tol,
                    const InnCompileOptions& opts) {
    const int d = prog.d;
    if (box.dim() != d) throw DimensionError("compile_inn: box dim != program dim");
    const int n = static_cast<int>(prog.stages.size());
    if (n == 0) return Network::identity(d);

    // Downstream amplification per stage, from stage Lipschitz estimates on
    // forward-propagated boxes.
    std::vector<Box> boxes{box};
    std::vector<double> lips;
    for (const InnStage& stage : prog.stages) {
        lips.push_back(std::max(1.0, inn_stage_lipschitz(stage, boxes.back())));
        boxes.push_back(inn_stage_box_image(stage, boxes.back()));
    }
    std::vector<double> amp(n, 1.0);
    for (int i = n - 2; i >= 0; --i) amp[i] = amp[i + 1] * lips[i + 1];

    Network net = Network::identity(d);
    for (int i = 0; i < n; ++i) {
        const InnStage& stage = prog.stages[i];
        try {
            if (const auto* aff = std::get_if<AffineMap>(&stage)) {
                if (!aff->is_invertible(opts.affine_invertibility_threshold))
                    throw NotInvertibleError("affine stage is numerically singular");
                net = compose(Network::affine_only(*aff), net);
            } else if (const auto* acf = std::get_if<AcfSpec>(&stage)) {
                const double budget = tol / (n * amp[i]);
                net = compose(compile_acf(*acf, boxes[i], budget, opts.acf), net);
            } else {
                const Network& handle = std::get<SctHandle>(stage).net;
                if (handle.input_dim() != d || handle.output_dim() != d)
                    throw DimensionError("SCT handle has wrong dimension");
                net = compose(handle, net);
            }
        } catch (const FitError& e) {
            throw FitError("stage " + std::to_string(i) + ": " + e.what(), e.best_error);
        } catch (const NotInvertibleError& e) {
            throw NotInvertibleError("stage " + std::to_string(i) + ": " + e.what());
        } catch (const DimensionError& e) {
            throw DimensionError("stage " + std::to_string(i) + ": " + e.what());
        }
    }
    return net;
}

}  // namespace narrowforge
