#include "narrowforge/sct.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "narrowforge/error.hpp"
#include "narrowforge/pwl.hpp"

namespace narrowforge {

namespace {

AffineMap affine1(double w, double b) {
    Eigen::MatrixXd wm(1, 1);
    wm(0, 0) = w;
    Eigen::VectorXd bv(1);
    bv[0] = b;
    return AffineMap(std::move(wm), std::move(bv));
}

// Scalar u -> scale * lr_{1/scale}(u): multiplies positive values by `scale`
// and leaves non-positive values fixed.
Network positive_scale_net(double scale) {
    std::vector<Layer> layers;
    layers.push_back(Layer{affine1(1.0, 0.0), ActivationTag::leaky_relu(1.0 / scale)});
    return Network(1, std::move(layers), affine1(scale, 0.0));
}

// Evaluate the last output coordinate of `net` on the slice x_d = alpha over
// the given prefix points.
Eigen::VectorXd slice_values(const Network& net, const Eigen::MatrixXd& prefix,
                             double alpha) {
    const int d = net.input_dim();
    Eigen::MatrixXd pts(prefix.rows(), d);
    if (d > 1) pts.leftCols(d - 1) = prefix;
    pts.col(d - 1).setConstant(alpha);
    return net.evaluate_batch(pts).col(d - 1);
}

double positive_scale_endpoint(double scale, double u) { return u < 0 ? u : scale * u; }

}  // namespace

void SliceTable::validate() const {
    for (int i = 0; i + 1 <= N; ++i)
        for (Eigen::Index p = 0; p < u.cols(); ++p)
            if (!(u(i, p) < u(i + 1, p)))
                throw MonotonicityError(
                    "slice table is not strictly increasing: u_" + std::to_string(i) +
                    " >= u_" + std::to_string(i + 1) + " at prefix point " +
                    std::to_string(p));
}

SliceTable build_slice_table(const SctOracle& oracle, const Box& box, int N,
                             int prefix_res) {
    if (N < 1) throw Error("slice count N must be >= 1");
    const int d = oracle.d;
    SliceTable table;
    table.N = N;
    table.prefix_grid = lattice(box.prefix(d - 1), prefix_res);
    const Eigen::Index npts = table.prefix_grid.rows();
    table.u.resize(N + 1, npts);
    Eigen::VectorXd x(d);
    for (Eigen::Index p = 0; p < npts; ++p) {
        for (int j = 0; j < d - 1; ++j) x[j] = table.prefix_grid(p, j);
        for (int i = 0; i <= N; ++i) {
            x[d - 1] = box.lo[d - 1] + box.span(d - 1) * i / N;
            table.u(i, p) = oracle.tau_d(x);
        }
    }
    return table;
}

namespace {

struct SliceMeasurement {
    Eigen::VectorXd target;  // T(p) = b(p) * base(p, alpha2)
    Eigen::VectorXd g;       // current slice values
    Eigen::VectorXd ratio;   // T / g
    double gamma = 0.0;
};

// Measures the ratio on the grid, renormalizing the network so the minimum
// ratio is exactly one (a single Leaky-ReLU wrap on the last coordinate).
SliceMeasurement measure_and_normalize(std::shared_ptr<const Network>& net, Box& box,
                                       const Network& base,
                                       const std::function<double(const Eigen::VectorXd&)>& b,
                                       double alpha2, const Eigen::MatrixXd& prefix) {
    const int d = net->input_dim();
    SliceMeasurement m;
    Eigen::VectorXd base_slice = slice_values(base, prefix, alpha2);
    m.target.resize(prefix.rows());
    for (Eigen::Index p = 0; p < prefix.rows(); ++p)
        m.target[p] = b(prefix.row(p)) * base_slice[p];
    m.g = slice_values(*net, prefix, alpha2);
    for (Eigen::Index p = 0; p < m.g.size(); ++p) {
        if (!(m.g[p] > 0.0))
            throw Error("sharpening requires positive slice values at alpha2 (got " +
                        std::to_string(m.g[p]) + ")");
        if (!(m.target[p] > 0.0))
            throw Error("sharpening target must be positive at alpha2");
    }
    m.ratio = m.target.cwiseQuotient(m.g);
    const double c = m.ratio.minCoeff();
    if (std::abs(c - 1.0) > 1e-9) {
        Network wrapped = compose(lift_scalar_to_last(positive_scale_net(c), d, box), *net);
        net = std::make_shared<Network>(std::move(wrapped));
        box.lo[d - 1] = positive_scale_endpoint(c, box.lo[d - 1]);
        box.hi[d - 1] = positive_scale_endpoint(c, box.hi[d - 1]);
        m.g *= c;
        m.ratio /= c;
    }
    m.gamma = m.ratio.maxCoeff();
    return m;
}

}  // namespace

SharpenState make_sharpen_state(Network g0,
                                std::function<double(const Eigen::VectorXd&)> b,
                                double alpha1, double alpha2, const Box& box,
                                int grid_res) {
    SharpenState st;
    const int d = g0.input_dim();
    st.base = std::make_shared<Network>(g0);
    st.net = st.base;
    st.ratio_target = std::move(b);
    st.alpha1 = alpha1;
    st.alpha2 = alpha2;
    st.box = box;
    Eigen::MatrixXd prefix = lattice(box.prefix(d - 1), grid_res);
    SliceMeasurement m =
        measure_and_normalize(st.net, st.box, *st.base, st.ratio_target, alpha2, prefix);
    st.gamma = m.gamma;
    st.converged = st.gamma <= 1.0 + 1e-9;
    return st;
}

SharpenState sharpen_step(const SharpenState& state, const Box& box, int grid_res,
                          const FitOptions& budget) {
    if (state.converged) return state;  // step refused, gamma already at one
    const int d = state.net->input_dim();
    const Box prefix_box = box.prefix(d - 1);
    const Eigen::MatrixXd prefix = lattice(prefix_box, grid_res);

    SharpenState next = state;
    SliceMeasurement m = measure_and_normalize(next.net, next.box, *state.base,
                                               state.ratio_target, state.alpha2, prefix);
    next.gamma = m.gamma;
    if (m.gamma <= 1.0 + 1e-9) {
        next.converged = true;
        return next;
    }

    const double gamma13 = std::cbrt(m.gamma);
    const double gamma23 = gamma13 * gamma13;

    // L_0: ratio within [1, gamma^{1/3}]; L_1: within [gamma^{2/3}, gamma].
    std::vector<int> l0, l1;
    for (Eigen::Index p = 0; p < m.ratio.size(); ++p) {
        if (m.ratio[p] <= gamma13 * (1.0 + 1e-12)) l0.push_back(static_cast<int>(p));
        if (m.ratio[p] >= gamma23 * (1.0 - 1e-12)) l1.push_back(static_cast<int>(p));
    }

    auto set_distance = [&](Eigen::Index p, const std::vector<int>& set) {
        double best = std::numeric_limits<double>::infinity();
        for (int q : set)
            best = std::min(best, (prefix.row(p) - prefix.row(q)).norm());
        return best;
    };

    // h = (1 - phi) * g with phi the set-distance blend, then fitted so it can
    // enter the width-d translation-add machinery.
    Eigen::VectorXd h(m.g.size());
    for (Eigen::Index p = 0; p < m.g.size(); ++p) {
        const double d0 = set_distance(p, l0);
        const double d1 = set_distance(p, l1);
        const double phi = d0 / (d0 + d1);
        h[p] = (1.0 - phi) * m.g[p];
    }

    GridInterpolant h_interp(prefix_box, grid_res, h);
    RidgeFit fit = fit_ridge([&h_interp](const Eigen::VectorXd& x) { return h_interp(x); },
                             prefix_box, budget);
    Eigen::VectorXd h_model = prefix_box.dim() == 0
                                  ? Eigen::VectorXd::Constant(1, fit.sum.constant)
                                  : fit.sum.eval_batch(prefix);
    const double eps_h = (h_model - h).cwiseAbs().maxCoeff();

    // g_{i+1} = gamma^{1/3} lr_{gamma^{-1/3}}(g_i - h) + h.
    auto [h_lo, h_hi] = fit.sum.interval(prefix_box);
    Network cur = compose(build_translation_add(d, fit.sum.negated(), next.box), *next.net);
    Box cur_box = next.box;
    cur_box.lo[d - 1] -= h_hi;
    cur_box.hi[d - 1] -= h_lo;

    cur = compose(lift_scalar_to_last(positive_scale_net(gamma13), d, cur_box), cur);
    cur_box.lo[d - 1] = positive_scale_endpoint(gamma13, cur_box.lo[d - 1]);
    cur_box.hi[d - 1] = positive_scale_endpoint(gamma13, cur_box.hi[d - 1]);

    cur = compose(build_translation_add(d, fit.sum, cur_box), cur);
    cur_box.lo[d - 1] += h_lo;
    cur_box.hi[d - 1] += h_hi;

    next.net = std::make_shared<Network>(std::move(cur));
    next.box = cur_box;

    Eigen::VectorXd g2 = slice_values(*next.net, prefix, state.alpha2);
    next.gamma = m.target.cwiseQuotient(g2).maxCoeff();
    next.last_fit_error = eps_h;
    const double eps_g = (1.0 + gamma13) * eps_h;
    const double min_g2 = g2.minCoeff();
    next.fit_slack = gamma23 * eps_g / std::max(min_g2 - eps_g, 1e-12);
    next.converged = next.gamma <= 1.0 + 1e-9;
    return next;
}

namespace {

bool is_unit_box(const Box& box) {
    for (int i = 0; i < box.dim(); ++i)
        if (box.lo[i] != 0.0 || box.hi[i] != 1.0) return false;
    return true;
}

void check_monotone_oracle(const SctOracle& oracle, const Box& box, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0x5c7u);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const int d = oracle.d;
    for (int s = 0; s < 200; ++s) {
        Eigen::VectorXd a(d), b(d);
        for (int j = 0; j < d; ++j) a[j] = box.lo[j] + unif(rng) * box.span(j);
        b = a;
        double t0 = box.lo[d - 1] + unif(rng) * box.span(d - 1);
        double t1 = box.lo[d - 1] + unif(rng) * box.span(d - 1);
        if (t0 > t1) std::swap(t0, t1);
        if (t1 - t0 < 1e-3 * box.span(d - 1)) continue;
        a[d - 1] = t0;
        b[d - 1] = t1;
        if (!(oracle.tau_d(a) < oracle.tau_d(b)))
            throw MonotonicityError("oracle is not strictly increasing in x_d at a sampled pair");
    }
}

}  // namespace

Network compile_sct_leakyrelu(const SctOracle& oracle, const Box& box, int N,
                              double tol, const SctOptions& opts, SctReport* report) {
    const int d = oracle.d;
    if (box.dim() != d) throw DimensionError("compile_sct: box dim != oracle.d");
    if (N < 1) throw Error("compile_sct: slice count N must be >= 1");
    if (!(tol > 0.0)) throw Error("compile_sct: tol must be positive");

    if (!is_unit_box(box)) {
        // Conjugate by the diagonal affine mapping [0,1]^d onto the box.
        Eigen::VectorXd span(d);
        for (int j = 0; j < d; ++j) span[j] = box.span(j);
        AffineMap to_box(Eigen::MatrixXd(span.asDiagonal()), box.lo);
        AffineMap to_unit(Eigen::MatrixXd(span.cwiseInverse().asDiagonal()),
                          -box.lo.cwiseQuotient(span));
        SctOracle inner;
        inner.d = d;
        const double lo_d = box.lo[d - 1], span_d = span[d - 1];
        inner.tau_d = [&oracle, to_box, lo_d, span_d](const Eigen::VectorXd& y) {
            return (oracle.tau_d(to_box.apply(y)) - lo_d) / span_d;
        };
        Network core = compile_sct_leakyrelu(inner, Box::unit(d), N, tol / span_d, opts,
                                             report);
        if (report) {
            for (double& e : report->slice_errors) e *= span_d;
            report->max_slice_error *= span_d;
            report->inter_slice_oscillation *= span_d;
        }
        Network out = compose(Network::affine_only(to_box),
                              compose(core, Network::affine_only(to_unit)));
        if (report) {
            report->width = out.width();
            report->depth = out.depth();
        }
        return out;
    }

    check_monotone_oracle(oracle, box, opts.seed);
    SliceTable table = build_slice_table(oracle, box, N, opts.prefix_res);
    table.validate();
    const Box prefix_box = box.prefix(d - 1);

    FitOptions slice_fit = opts.slice_fit;
    slice_fit.tol = tol / 4.0;
    FitOptions h_fit = opts.fit;
    h_fit.tol = tol / (8.0 * (N + 1));

    auto fit_slice = [&](int i) {
        Eigen::VectorXd vals = table.u.row(i).transpose();
        GridInterpolant interp(prefix_box, opts.prefix_res, vals);
        RidgeFit f = fit_ridge([&interp](const Eigen::VectorXd& x) { return interp(x); },
                               prefix_box, slice_fit);
        return f.sum;
    };

    if (report) {
        report->sharpen_iters.clear();
        report->slice_errors.clear();
    }

    // G_0 matches slice 0 exactly up to the u_0 fit (which cancels later).
    RidgeSum u_hat = fit_slice(0);
    Network g = build_translation_add(d, u_hat, box);
    Box cur_box = box;
    {
        auto [lo, hi] = u_hat.interval(prefix_box);
        cur_box.lo[d - 1] += lo;
        cur_box.hi[d - 1] += hi;
    }

    for (int n0 = 0; n0 < N; ++n0) {
        const double alpha1 = static_cast<double>(n0) / N;
        const double alpha2 = static_cast<double>(n0 + 1) / N;
        if (n0 > 0) u_hat = fit_slice(n0);

        // Shift the matched slice to zero.
        g = compose(build_translation_add(d, u_hat.negated(), cur_box), g);
        auto [u_lo, u_hi] = u_hat.interval(prefix_box);
        cur_box.lo[d - 1] -= u_hi;
        cur_box.hi[d - 1] -= u_lo;

        // Target ratio b = (u_{n0+1} - u_hat) / (g'(., alpha2)).
        auto base = std::make_shared<Network>(g);
        Eigen::VectorXd next_vals = table.u.row(n0 + 1).transpose();
        auto next_interp = std::make_shared<GridInterpolant>(prefix_box, opts.prefix_res,
                                                             next_vals);
        RidgeSum u_hat_copy = u_hat;
        const double a2 = alpha2;
        auto b_fun = [base, next_interp, u_hat_copy, a2](const Eigen::VectorXd& p) {
            Eigen::VectorXd x(base->input_dim());
            x.head(base->input_dim() - 1) = p;
            x[base->input_dim() - 1] = a2;
            const double denom = base->evaluate(x)[base->input_dim() - 1];
            return ((*next_interp)(p) - u_hat_copy.eval(p)) / denom;
        };
        SharpenState state = make_sharpen_state(g, b_fun, alpha1, alpha2, cur_box,
                                                opts.grid_res);

        const Eigen::MatrixXd sharpen_grid = lattice(prefix_box, opts.grid_res);
        int iters = 0;
        while (true) {
            const double max_g =
                slice_values(*state.net, sharpen_grid, alpha2).cwiseAbs().maxCoeff();
            if (state.converged || (state.gamma - 1.0) * max_g <= 0.5 * tol) break;
            if (iters >= opts.max_sharpen_iters)
                throw FitError("compile_sct: slice " + std::to_string(n0 + 1) +
                                   " did not converge in " +
                                   std::to_string(opts.max_sharpen_iters) +
                                   " sharpening steps (gamma " +
                                   std::to_string(state.gamma) + ")",
                               state.gamma - 1.0);
            state = sharpen_step(state, state.box, opts.grid_res, h_fit);
            ++iters;
        }
        if (report) report->sharpen_iters.push_back(iters);

        // Shift back.
        g = compose(build_translation_add(d, u_hat, state.box), *state.net);
        cur_box = state.box;
        cur_box.lo[d - 1] += u_lo;
        cur_box.hi[d - 1] += u_hi;
    }

    if (g.width() < d) {
        // Degenerate targets can collapse to affine-only networks; pad with a
        // positivity-shifted wrap that is the identity on the box so the
        // emitted network always has width exactly d.
        Eigen::VectorXd shift(d);
        for (int j = 0; j < d; ++j) shift[j] = 1.0 - cur_box.lo[j];
        std::vector<Layer> pad;
        pad.push_back(Layer{AffineMap(Eigen::MatrixXd::Identity(d, d), shift),
                            ActivationTag::leaky_relu(0.5)});
        Network wrap(d, std::move(pad),
                     AffineMap(Eigen::MatrixXd::Identity(d, d), -shift));
        g = compose(wrap, g);
    }

    if (report) {
        report->slice_errors.assign(N + 1, 0.0);
        for (int i = 0; i <= N; ++i) {
            Eigen::VectorXd got =
                slice_values(g, table.prefix_grid, static_cast<double>(i) / N);
            report->slice_errors[i] =
                (got - table.u.row(i).transpose()).cwiseAbs().maxCoeff();
        }
        report->max_slice_error =
            *std::max_element(report->slice_errors.begin(), report->slice_errors.end());
        double osc = 0.0;
        for (int i = 0; i < N; ++i) {
            const double mid = (i + 0.5) / N;
            Eigen::VectorXd got = slice_values(g, table.prefix_grid, mid);
            Eigen::VectorXd x(d);
            for (Eigen::Index p = 0; p < table.prefix_grid.rows(); ++p) {
                for (int j = 0; j < d - 1; ++j) x[j] = table.prefix_grid(p, j);
                x[d - 1] = mid;
                osc = std::max(osc, std::abs(got[p] - oracle.tau_d(x)));
            }
        }
        report->inter_slice_oscillation = osc;
        report->width = g.width();
        report->depth = g.depth();
    }
    return g;
}

// ---------------------------------------------------------------------------
// Width-(d+1) ReLU lift.
//
// Channel layout: d-1 positivity-shifted prefix carriers, one channel for the
// running value v (x_d plus the folded terms, shifted positive), one worker
// channel holding the current ReLU term. Each term k reads v_{k-1}, which is
// reconstructible from the previous v channel and the previous worker, so the
// fold of term k-1 happens in the same affine that computes term k.
// ---------------------------------------------------------------------------

namespace {

struct ReluStage {
    Eigen::VectorXd b_prefix;  // dim d-1
    double b_v = 0.0;
    double c = 0.0;
    double fold = 0.0;  // coefficient folded into the v channel
};

struct ReluReadout {
    double constant = 0.0;
    Eigen::VectorXd q;   // prefix coefficients
    double rho = 0.0;    // v-channel coefficient
    double mu = 0.0;     // worker coefficient
};

int auto_lift_res(int d) {
    switch (d) {
        case 1: return 513;
        case 2: return 49;
        case 3: return 15;
        default: return 9;
    }
}

Network emit_relu_lift(int d, const Box& box, const std::vector<ReluStage>& stages,
                       const ReluReadout& readout) {
    const int p = d - 1;
    const int w = d + 1;

    // Positivity shifts: constants for the prefix, per-layer for v.
    Eigen::VectorXd mx(p);
    for (int j = 0; j < p; ++j) mx[j] = 1.0 - box.lo[j];

    // Track the v interval stage by stage to derive its shifts.
    const int n = static_cast<int>(stages.size());
    std::vector<double> v_lo(n + 1), v_hi(n + 1), f_hi(n);
    v_lo[0] = box.lo[d - 1];
    v_hi[0] = box.hi[d - 1];
    for (int k = 0; k < n; ++k) {
        double a_lo = stages[k].c, a_hi = stages[k].c;
        for (int j = 0; j < p; ++j) {
            const double bj = stages[k].b_prefix[j];
            a_lo += bj >= 0 ? bj * box.lo[j] : bj * box.hi[j];
            a_hi += bj >= 0 ? bj * box.hi[j] : bj * box.lo[j];
        }
        const double bv = stages[k].b_v;
        a_lo += bv >= 0 ? bv * v_lo[k] : bv * v_hi[k];
        a_hi += bv >= 0 ? bv * v_hi[k] : bv * v_lo[k];
        f_hi[k] = std::max(0.0, a_hi);
        const double add_lo = std::min(0.0, stages[k].fold * f_hi[k]);
        const double add_hi = std::max(0.0, stages[k].fold * f_hi[k]);
        v_lo[k + 1] = v_lo[k] + add_lo;
        v_hi[k + 1] = v_hi[k] + add_hi;
    }
    std::vector<double> mv(n);
    for (int k = 0; k < n; ++k) mv[k] = 1.0 - v_lo[k];

    std::vector<Layer> layers;
    {  // First layer: d -> d+1.
        Eigen::MatrixXd wm = Eigen::MatrixXd::Zero(w, d);
        Eigen::VectorXd bm = Eigen::VectorXd::Zero(w);
        for (int j = 0; j < p; ++j) {
            wm(j, j) = 1.0;
            bm[j] = mx[j];
        }
        wm(p, d - 1) = 1.0;
        bm[p] = mv[0];
        for (int j = 0; j < p; ++j) wm(p + 1, j) = stages[0].b_prefix[j];
        wm(p + 1, d - 1) = stages[0].b_v;
        bm[p + 1] = stages[0].c;
        layers.push_back(Layer{AffineMap(std::move(wm), std::move(bm)),
                               ActivationTag::relu()});
    }
    for (int k = 1; k < n; ++k) {  // v_{k-1} = (V - mv_{k-1}) + fold_{k-1} * W.
        Eigen::MatrixXd wm = Eigen::MatrixXd::Zero(w, w);
        Eigen::VectorXd bm = Eigen::VectorXd::Zero(w);
        for (int j = 0; j < p; ++j) wm(j, j) = 1.0;
        wm(p, p) = 1.0;
        wm(p, p + 1) = stages[k - 1].fold;
        bm[p] = mv[k] - mv[k - 1];
        for (int j = 0; j < p; ++j) {
            wm(p + 1, j) = stages[k].b_prefix[j];
            bm[p + 1] -= stages[k].b_prefix[j] * mx[j];
        }
        wm(p + 1, p) = stages[k].b_v;
        wm(p + 1, p + 1) = stages[k].b_v * stages[k - 1].fold;
        bm[p + 1] += stages[k].c - stages[k].b_v * mv[k - 1];
        layers.push_back(Layer{AffineMap(std::move(wm), std::move(bm)),
                               ActivationTag::relu()});
    }
    // Final affine: (x', tau) from the shifted state.
    Eigen::MatrixXd wf = Eigen::MatrixXd::Zero(d, w);
    Eigen::VectorXd bf = Eigen::VectorXd::Zero(d);
    for (int j = 0; j < p; ++j) {
        wf(j, j) = 1.0;
        bf[j] = -mx[j];
    }
    bf[d - 1] = readout.constant - readout.rho * mv[n - 1];
    for (int j = 0; j < p; ++j) {
        wf(d - 1, j) = readout.q[j];
        bf[d - 1] -= readout.q[j] * mx[j];
    }
    // The readout was solved against the pre-fold running value, so the last
    // worker enters with mu alone.
    wf(d - 1, p) = readout.rho;
    wf(d - 1, p + 1) = readout.mu;
    return Network(d, std::move(layers), AffineMap(std::move(wf), std::move(bf)));
}

Network lift_relu_engine(const std::function<double(const Eigen::VectorXd&)>& tau,
                         const std::vector<RidgeTerm>* given, int d, const Box& box,
                         double tol, const LiftOptions& opts, LiftReport* report) {
    if (box.dim() != d) throw DimensionError("lift_relu: box dim != d");
    for (int j = 0; j < d; ++j)
        if (!std::isfinite(box.lo[j]) || !std::isfinite(box.hi[j]))
            throw Error("lift_relu requires a compact box");
    const int p = d - 1;
    const int res = opts.train_res > 0 ? opts.train_res : auto_lift_res(d);
    const Eigen::MatrixXd train = lattice(box, res);
    const Eigen::MatrixXd val = shifted_lattice(box, res);
    Eigen::VectorXd y(train.rows()), yv(val.rows());
    for (Eigen::Index i = 0; i < train.rows(); ++i) y[i] = tau(train.row(i));
    for (Eigen::Index i = 0; i < val.rows(); ++i) yv[i] = tau(val.row(i));
    const double yscale = std::max(1.0, y.cwiseAbs().maxCoeff());

    Eigen::VectorXd v = train.col(d - 1);
    Eigen::VectorXd vv = val.col(d - 1);

    std::mt19937_64 rng(opts.seed ^ 0x11f7u);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    std::vector<ReluStage> stages;
    std::vector<ReluReadout> readouts;
    std::vector<double> val_errors;
    size_t given_next = 0;

    Eigen::VectorXd worst_point;  // in (x', v) coordinates
    double worst_v = 0.0;

    auto solve_readout = [&](const Eigen::VectorXd& f, const Eigen::VectorXd& vcur) {
        Eigen::MatrixXd A(train.rows(), p + 3);
        A.col(0).setOnes();
        for (int j = 0; j < p; ++j) A.col(1 + j) = train.col(j);
        A.col(p + 1) = vcur;
        A.col(p + 2) = f;
        Eigen::VectorXd coef = A.colPivHouseholderQr().solve(y);
        const double resid = (A * coef - y).norm();
        return std::make_pair(coef, resid);
    };

    const double relu_tol = tol;
    for (int k = 0; k < opts.max_stages; ++k) {
        // Candidate kink surfaces in (x', v) coordinates.
        std::vector<std::pair<Eigen::VectorXd, double>> cands;  // (b over (x',v), c)
        if (given && given_next < given->size()) {
            const RidgeTerm& t = (*given)[given_next];
            Eigen::VectorXd b(p + 1);
            b.head(p) = t.b.head(p);
            b[p] = t.b[p];  // x_d direction reinterpreted over v
            cands.emplace_back(b, t.c);
        }
        const double v_span = std::max(v.maxCoeff() - v.minCoeff(), 1e-9);
        for (int r = 0; r < opts.candidates; ++r) {
            Eigen::VectorXd b(p + 1);
            for (int j = 0; j < p; ++j) b[j] = gauss(rng) * 2.0 / std::max(box.span(j), 1e-9);
            b[p] = gauss(rng) * 2.0 / v_span;
            const Eigen::Index row =
                static_cast<Eigen::Index>(unif(rng) * (train.rows() - 1));
            double c = 0.0;
            for (int j = 0; j < p; ++j) c -= b[j] * train(row, j);
            c -= b[p] * v[row];
            cands.emplace_back(b, c);
        }
        if (worst_point.size() == p + 1) {  // axis kinks through the worst point
            for (int j = 0; j <= p; ++j) {
                Eigen::VectorXd b = Eigen::VectorXd::Zero(p + 1);
                b[j] = j < p ? 2.0 / std::max(box.span(j), 1e-9) : 2.0 / v_span;
                cands.emplace_back(b, -b[j] * (j < p ? worst_point[j] : worst_v));
            }
        }

        double best_resid = std::numeric_limits<double>::infinity();
        Eigen::VectorXd best_coef, best_f, best_fv, best_b;
        double best_c = 0.0;
        for (auto& [b, c] : cands) {
            Eigen::VectorXd arg = (train.leftCols(p) * b.head(p)).eval();
            arg += b[p] * v;
            arg.array() += c;
            Eigen::VectorXd f = arg.cwiseMax(0.0);
            auto [coef, resid] = solve_readout(f, v);
            if (resid < best_resid) {
                best_resid = resid;
                best_coef = coef;
                best_f = f;
                best_b = b;
                best_c = c;
            }
        }

        // Commit the stage: fold coefficient from the readout estimate.
        const double rho = best_coef[p + 1];
        const double mu = best_coef[p + 2];
        const double fold = std::abs(rho) > 1e-8 * yscale / std::max(v.cwiseAbs().maxCoeff(), 1.0)
                                ? mu / rho
                                : 0.0;
        ReluStage stage;
        stage.b_prefix = best_b.head(p);
        stage.b_v = best_b[p];
        stage.c = best_c;
        stage.fold = fold;
        stages.push_back(stage);

        Eigen::VectorXd argv = (val.leftCols(p) * best_b.head(p)).eval();
        argv += best_b[p] * vv;
        argv.array() += best_c;
        Eigen::VectorXd fv = argv.cwiseMax(0.0);

        // Validation error of the committed readout.
        ReluReadout ro;
        ro.constant = best_coef[0];
        ro.q = best_coef.segment(1, p);
        ro.rho = rho;
        ro.mu = mu;
        readouts.push_back(ro);
        Eigen::VectorXd pred = Eigen::VectorXd::Constant(val.rows(), ro.constant);
        pred += val.leftCols(p) * ro.q;
        pred += ro.rho * vv + ro.mu * fv;
        const double verr = (pred - yv).cwiseAbs().maxCoeff();
        val_errors.push_back(verr);

        // Track the worst residual point for adaptive candidates.
        Eigen::VectorXd pred_t = Eigen::VectorXd::Constant(train.rows(), ro.constant);
        pred_t += train.leftCols(p) * ro.q;
        pred_t += ro.rho * v + ro.mu * best_f;
        Eigen::Index wi;
        (pred_t - y).cwiseAbs().maxCoeff(&wi);
        worst_point.resize(p + 1);
        worst_point.head(p) = train.row(wi).head(p);
        worst_v = v[wi];
        worst_point[p] = worst_v;

        v += fold * best_f;
        vv += fold * fv;
        if (given && given_next < given->size()) ++given_next;
        if (verr <= relu_tol) break;
    }

    // Best prefix of committed stages by validation error.
    int best_k = 0;
    for (size_t i = 1; i < val_errors.size(); ++i)
        if (val_errors[i] < val_errors[best_k]) best_k = static_cast<int>(i);
    const double best_err = val_errors[best_k];
    std::vector<ReluStage> used(stages.begin(), stages.begin() + best_k + 1);
    Network net = emit_relu_lift(d, box, used, readouts[best_k]);

    if (report) {
        report->validation_error = best_err;
        report->stages = best_k + 1;
        report->converged = best_err <= tol;
    }
    if (best_err > tol)
        throw FitError("lift_relu: missed tol " + std::to_string(tol) + " with " +
                           std::to_string(stages.size()) + " stages (best " +
                           std::to_string(best_err) + ")",
                       best_err);
    return net;
}

}  // namespace

Network lift_relu(const RidgeSum& tau, int d, const Box& box, double tol,
                  const LiftOptions& opts, LiftReport* report) {
    for (const RidgeTerm& t : tau.terms)
        if (t.b.size() != d)
            throw DimensionError("lift_relu: ridge terms must be over R^d");
    std::vector<RidgeTerm> terms = tau.terms;
    // Terms reading x_d go first: the first of them folds while the running
    // value still equals x_d exactly; prefix-only terms are immune to folds.
    std::stable_partition(terms.begin(), terms.end(), [d](const RidgeTerm& t) {
        return t.b[d - 1] != 0.0;
    });
    auto oracle = [&tau](const Eigen::VectorXd& x) { return tau.eval(x); };
    return lift_relu_engine(oracle, &terms, d, box, tol, opts, report);
}

Network lift_relu_fit(const std::function<double(const Eigen::VectorXd&)>& tau, int d,
                      const Box& box, double tol, const LiftOptions& opts,
                      LiftReport* report) {
    return lift_relu_engine(tau, nullptr, d, box, tol, opts, report);
}

// ---------------------------------------------------------------------------
// Width-(d+2) general-activation lift.
// ---------------------------------------------------------------------------

double SigmaRidge::eval(const std::string& sigma, const Eigen::VectorXd& x) const {
    const CustomActivation& act = custom_activation(sigma);
    double v = constant + linear.dot(x);
    for (const SigmaRidgeTerm& t : terms) v += t.a * act.eval(t.b.dot(x) + t.c);
    return v;
}

SigmaRidge fit_sigma_ridge(const std::function<double(const Eigen::VectorXd&)>& oracle,
                           const std::string& sigma, const Box& box,
                           const FitOptions& opts) {
    const CustomActivation& act = custom_activation(sigma);
    const int d = box.dim();
    const int res = opts.train_res > 0 ? opts.train_res : auto_lift_res(d);
    const Eigen::MatrixXd train = lattice(box, res);
    const Eigen::MatrixXd val = shifted_lattice(box, res);
    Eigen::VectorXd y(train.rows()), yv(val.rows());
    for (Eigen::Index i = 0; i < train.rows(); ++i) y[i] = oracle(train.row(i));
    for (Eigen::Index i = 0; i < val.rows(); ++i) yv[i] = oracle(val.row(i));

    std::mt19937_64 rng(opts.seed ^ 0x51617u);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    auto random_feature = [&](const Eigen::VectorXd* through) {
        SigmaRidgeTerm t;
        t.b.resize(d);
        for (int j = 0; j < d; ++j) t.b[j] = gauss(rng) * 2.0 / std::max(box.span(j), 1e-9);
        if (through) {
            t.c = -t.b.dot(*through);
        } else {
            Eigen::VectorXd pt(d);
            for (int j = 0; j < d; ++j) pt[j] = box.lo[j] + unif(rng) * box.span(j);
            t.c = -t.b.dot(pt) + gauss(rng) * 0.25;
        }
        return t;
    };

    std::vector<SigmaRidgeTerm> feats;
    for (int i = 0; i < std::min(96, opts.max_terms); ++i)
        feats.push_back(random_feature(nullptr));

    double best_err = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_coef;
    size_t best_nfeats = 0;

    // Least squares, then transition-centering refinement at the worst
    // validation points until the budget or the tolerance is hit.
    for (int round = 0; round < 12; ++round) {
        const int n_feats = static_cast<int>(feats.size());
        Eigen::MatrixXd A(train.rows(), 1 + d + n_feats);
        Eigen::MatrixXd Av(val.rows(), 1 + d + n_feats);
        A.col(0).setOnes();
        Av.col(0).setOnes();
        for (int j = 0; j < d; ++j) {
            A.col(1 + j) = train.col(j);
            Av.col(1 + j) = val.col(j);
        }
        for (int i = 0; i < n_feats; ++i) {
            Eigen::VectorXd arg = (train * feats[i].b).array() + feats[i].c;
            Eigen::VectorXd argv = (val * feats[i].b).array() + feats[i].c;
            A.col(1 + d + i) = arg.unaryExpr([&](double u) { return act.eval(u); });
            Av.col(1 + d + i) = argv.unaryExpr([&](double u) { return act.eval(u); });
        }
        Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
        svd.setThreshold(1e-10);
        Eigen::VectorXd coef = svd.solve(y);
        Eigen::VectorXd res = (Av * coef - yv).cwiseAbs();
        const double verr = res.maxCoeff();
        if (verr < best_err) {
            best_err = verr;
            best_coef = coef;
            best_nfeats = feats.size();
        }
        if (best_err <= opts.tol || n_feats >= opts.max_terms) break;
        for (int k = 0; k < 4 && static_cast<int>(feats.size()) < opts.max_terms; ++k) {
            Eigen::Index wi;
            res.maxCoeff(&wi);
            res[wi] = 0.0;
            const Eigen::VectorXd point = val.row(wi).transpose();
            for (int r = 0; r < 4 && static_cast<int>(feats.size()) < opts.max_terms; ++r)
                feats.push_back(random_feature(&point));
        }
    }
    if (best_err > opts.tol)
        throw FitError("fit_sigma_ridge: missed tol " + std::to_string(opts.tol) +
                           " (best " + std::to_string(best_err) + ")",
                       best_err);

    SigmaRidge out;
    out.constant = best_coef[0];
    out.linear = best_coef.segment(1, d);
    const double yscale = std::max(1.0, y.cwiseAbs().maxCoeff());
    for (size_t i = 0; i < best_nfeats; ++i) {
        if (std::abs(best_coef[1 + d + i]) <= 1e-13 * yscale) continue;
        SigmaRidgeTerm t = feats[i];
        t.a = best_coef[1 + d + i];
        out.terms.push_back(t);
    }
    return out;
}

namespace {

struct SigmaCoding {
    double alpha = 0.0;
    double sigma_alpha = 0.0;
    double deriv = 1.0;
    double epsilon = 0.5;
};

// Emit the width-(d+2) network for a fixed epsilon.
Network emit_general_lift(const std::string& sigma, const SigmaRidge& tau, int d,
                          const Box& box, const SigmaCoding& code) {
    const CustomActivation& act = custom_activation(sigma);
    const int w = d + 2;
    const int n = static_cast<int>(tau.terms.size());
    const double eps = code.epsilon;
    const double dec = 1.0 / (eps * code.deriv);  // decode gain per unit

    // Normalisation of each carried quantity to [-1, 1].
    Eigen::VectorXd mid(d), rad(d);
    for (int j = 0; j < d; ++j) {
        mid[j] = 0.5 * (box.lo[j] + box.hi[j]);
        rad[j] = std::max(0.5 * box.span(j), 1e-9);
    }
    // Accumulator range from sampled term ranges.
    double s_lo = 0.0, s_hi = 0.0, run_lo = 0.0, run_hi = 0.0;
    for (const SigmaRidgeTerm& t : tau.terms) {
        double a_lo = t.c, a_hi = t.c;
        for (int j = 0; j < d; ++j) {
            const double bj = t.b[j];
            a_lo += bj >= 0 ? bj * box.lo[j] : bj * box.hi[j];
            a_hi += bj >= 0 ? bj * box.hi[j] : bj * box.lo[j];
        }
        double f_lo = std::numeric_limits<double>::infinity(), f_hi = -f_lo;
        for (int s = 0; s <= 64; ++s) {
            const double fv = act.eval(a_lo + (a_hi - a_lo) * s / 64.0);
            f_lo = std::min(f_lo, fv);
            f_hi = std::max(f_hi, fv);
        }
        run_lo += std::min(t.a * f_lo, t.a * f_hi);
        run_hi += std::max(t.a * f_lo, t.a * f_hi);
        s_lo = std::min(s_lo, run_lo);
        s_hi = std::max(s_hi, run_hi);
    }
    const double mid_s = 0.5 * (s_lo + s_hi);
    const double rad_s = std::max(0.5 * (s_hi - s_lo), 1e-9);

    // decode(P_j) = A_j * P_j + B_j recovers the carried quantity.
    auto decode_gain = [&](double r) { return r * dec; };
    auto decode_off = [&](double m, double r) { return m - r * dec * code.sigma_alpha; };

    std::vector<Layer> layers;
    {  // First layer: raw x -> coded carriers, first term, coded zero sum.
        Eigen::MatrixXd wm = Eigen::MatrixXd::Zero(w, d);
        Eigen::VectorXd bm = Eigen::VectorXd::Zero(w);
        for (int j = 0; j < d; ++j) {
            wm(j, j) = eps / rad[j];
            bm[j] = code.alpha - eps * mid[j] / rad[j];
        }
        for (int j = 0; j < d; ++j) wm(d, j) = tau.terms[0].b[j];
        bm[d] = tau.terms[0].c;
        bm[d + 1] = code.alpha + eps * (0.0 - mid_s) / rad_s;
        layers.push_back(Layer{AffineMap(std::move(wm), std::move(bm)),
                               ActivationTag::custom(sigma)});
    }
    for (int k = 1; k < n; ++k) {
        Eigen::MatrixXd wm = Eigen::MatrixXd::Zero(w, w);
        Eigen::VectorXd bm = Eigen::VectorXd::Zero(w);
        // Re-encode carriers: (eps/rad)*decode(P) + alpha - eps*mid/rad.
        for (int j = 0; j < d; ++j) {
            wm(j, j) = (eps / rad[j]) * decode_gain(rad[j]);
            bm[j] = (eps / rad[j]) * (decode_off(mid[j], rad[j]) - mid[j]) + code.alpha;
        }
        // Worker: w_k over decoded carriers.
        for (int j = 0; j < d; ++j) {
            wm(d, j) = tau.terms[k].b[j] * decode_gain(rad[j]);
            bm[d] += tau.terms[k].b[j] * decode_off(mid[j], rad[j]);
        }
        bm[d] += tau.terms[k].c;
        // Accumulator: encode(decode(prev acc) + a_{k-1} * prev worker).
        wm(d + 1, d + 1) = (eps / rad_s) * decode_gain(rad_s);
        wm(d + 1, d) = (eps / rad_s) * tau.terms[k - 1].a;
        bm[d + 1] = (eps / rad_s) * (decode_off(mid_s, rad_s) - mid_s) + code.alpha;
        layers.push_back(Layer{AffineMap(std::move(wm), std::move(bm)),
                               ActivationTag::custom(sigma)});
    }
    // Final affine: prefix decode + tau readout.
    Eigen::MatrixXd wf = Eigen::MatrixXd::Zero(d, w);
    Eigen::VectorXd bf = Eigen::VectorXd::Zero(d);
    for (int j = 0; j < d - 1; ++j) {
        wf(j, j) = decode_gain(rad[j]);
        bf[j] = decode_off(mid[j], rad[j]);
    }
    bf[d - 1] = tau.constant;
    for (int j = 0; j < d; ++j) {
        wf(d - 1, j) += tau.linear[j] * decode_gain(rad[j]);
        bf[d - 1] += tau.linear[j] * decode_off(mid[j], rad[j]);
    }
    wf(d - 1, d + 1) = decode_gain(rad_s);
    bf[d - 1] += decode_off(mid_s, rad_s);
    wf(d - 1, d) = tau.terms[n - 1].a;
    return Network(d, std::move(layers), AffineMap(std::move(wf), std::move(bf)));
}

}  // namespace

Network lift_general(const std::string& sigma, const SigmaRidge& tau_in, int d,
                     const Box& box, double tol, const GeneralLiftOptions& opts,
                     LiftReport* report) {
    const CustomActivation& act = custom_activation(sigma);
    if (!act.alpha.has_value())
        throw Error("lift_general: activation '" + sigma +
                    "' has no registered differentiability point");
    SigmaCoding code;
    code.alpha = *act.alpha;
    code.sigma_alpha = act.eval(code.alpha);
    if (act.deriv_at_alpha.has_value()) {
        code.deriv = *act.deriv_at_alpha;
    } else {
        const double h = 1e-5;
        code.deriv = (act.eval(code.alpha + h) - act.eval(code.alpha - h)) / (2.0 * h);
    }
    if (std::abs(code.deriv) < 1e-8)
        throw Error("lift_general: sigma'(alpha) below threshold for '" + sigma + "'");

    SigmaRidge tau = tau_in;
    if (tau.linear.size() == 0) tau.linear = Eigen::VectorXd::Zero(d);
    if (tau.terms.empty()) {
        SigmaRidgeTerm dummy;
        dummy.a = 0.0;
        dummy.b = Eigen::VectorXd::Zero(d);
        dummy.b[0] = 1.0;
        dummy.c = 0.0;
        tau.terms.push_back(dummy);
    }

    const int res = auto_lift_res(d);
    const Eigen::MatrixXd val = shifted_lattice(box, res);
    Eigen::MatrixXd want(val.rows(), d);
    for (Eigen::Index i = 0; i < val.rows(); ++i) {
        want.row(i).head(d - 1) = val.row(i).head(d - 1);
        want(i, d - 1) = tau.eval(sigma, val.row(i));
    }

    double best_err = std::numeric_limits<double>::infinity();
    Network best = Network::identity(d);
    double eps = 0.5;
    for (int step = 0; step < opts.epsilon_steps && eps >= opts.min_epsilon; ++step) {
        code.epsilon = eps;
        Network net = emit_general_lift(sigma, tau, d, box, code);
        const double err = (net.evaluate_batch(val) - want).cwiseAbs().maxCoeff();
        if (err < best_err) {
            best_err = err;
            best = std::move(net);
        }
        if (best_err <= tol * 0.5) break;
        eps *= 0.5;
    }
    if (report) {
        report->validation_error = best_err;
        report->stages = static_cast<int>(tau.terms.size());
        report->converged = best_err <= tol;
    }
    if (best_err > tol)
        throw FitError("lift_general: epsilon search missed tol " + std::to_string(tol) +
                           " (best " + std::to_string(best_err) + ")",
                       best_err);
    return best;
}

Network lift_general_fit(const std::string& sigma,
                         const std::function<double(const Eigen::VectorXd&)>& tau, int d,
                         const Box& box, double tol, const GeneralLiftOptions& opts,
                         LiftReport* report) {
    // The fit carries most of the budget; the epsilon search converges fast.
    FitOptions fo = opts.fit;
    fo.tol = tol * 0.7;
    SigmaRidge fitted = fit_sigma_ridge(tau, sigma, box, fo);
    Network net = lift_general(sigma, fitted, d, box, tol * 0.3, opts, report);
    if (report) {
        // Total error vs the oracle, not just vs the fitted surrogate.
        const int res = auto_lift_res(d);
        const Eigen::MatrixXd val = shifted_lattice(box, res);
        double err = 0.0;
        for (Eigen::Index i = 0; i < val.rows(); ++i) {
            const Eigen::VectorXd out = net.evaluate(val.row(i));
            err = std::max(err, std::abs(out[d - 1] - tau(val.row(i))));
        }
        report->validation_error = err;
        report->converged = err <= tol;
    }
    return net;
}

}  // namespace narrowforge
