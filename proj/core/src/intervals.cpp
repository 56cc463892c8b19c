#include "narrowforge/intervals.hpp"

#include <cmath>
#include <string>

#include "narrowforge/error.hpp"

namespace narrowforge {

Box::Box(Eigen::VectorXd lo_in, Eigen::VectorXd hi_in)
    : lo(std::move(lo_in)), hi(std::move(hi_in)) {
    if (lo.size() != hi.size())
        throw DimensionError("box lo/hi dims differ");
    for (Eigen::Index i = 0; i < lo.size(); ++i)
        if (!(lo[i] <= hi[i]))
            throw Error("box is empty in coordinate " + std::to_string(i));
}

Box Box::unit(int dim) { return uniform(dim, 0.0, 1.0); }

Box Box::uniform(int dim, double a, double b) {
    return Box(Eigen::VectorXd::Constant(dim, a), Eigen::VectorXd::Constant(dim, b));
}

bool Box::contains(const Eigen::VectorXd& x, double slack) const {
    if (x.size() != lo.size()) return false;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (x[i] < lo[i] - slack || x[i] > hi[i] + slack) return false;
    return true;
}

Box Box::prefix(int k) const { return Box(lo.head(k), hi.head(k)); }

Box Box::hull(const Box& a, const Box& b) {
    if (a.dim() != b.dim()) throw DimensionError("hull of boxes of different dims");
    return Box(a.lo.cwiseMin(b.lo), a.hi.cwiseMax(b.hi));
}

Eigen::MatrixXd lattice(const Box& box, int res) {
    const int d = box.dim();
    if (d == 0) return Eigen::MatrixXd(1, 0);
    if (res < 2) throw Error("lattice resolution must be >= 2");
    long total = 1;
    for (int i = 0; i < d; ++i) total *= res;
    Eigen::MatrixXd pts(total, d);
    std::vector<int> idx(d, 0);
    for (long p = 0; p < total; ++p) {
        for (int i = 0; i < d; ++i)
            pts(p, i) = box.lo[i] + box.span(i) * idx[i] / (res - 1);
        for (int i = d - 1; i >= 0; --i) {
            if (++idx[i] < res) break;
            idx[i] = 0;
        }
    }
    return pts;
}

Eigen::MatrixXd shifted_lattice(const Box& box, int res) {
    Eigen::MatrixXd pts = lattice(box, res);
    for (int i = 0; i < box.dim(); ++i) {
        const double h = 0.5 * box.span(i) / (res - 1);
        for (Eigen::Index p = 0; p < pts.rows(); ++p)
            pts(p, i) = std::min(pts(p, i) + h, box.hi[i]);
    }
    return pts;
}

Box affine_interval(const AffineMap& a, const Box& box) {
    if (box.dim() != a.in_dim())
        throw DimensionError("affine_interval: box dim " + std::to_string(box.dim()) +
                             " != affine in dim " + std::to_string(a.in_dim()));
    Eigen::MatrixXd wpos = a.weight.cwiseMax(0.0);
    Eigen::MatrixXd wneg = a.weight.cwiseMin(0.0);
    Eigen::VectorXd lo = a.bias + wpos * box.lo + wneg * box.hi;
    Eigen::VectorXd hi = a.bias + wpos * box.hi + wneg * box.lo;
    return Box(std::move(lo), std::move(hi));
}

namespace {

Box activation_interval(const ActivationTag& act, const Box& box) {
    if (!act.monotone())
        throw Error("interval propagation requires monotone activations");
    Eigen::VectorXd lo(box.dim()), hi(box.dim());
    for (int i = 0; i < box.dim(); ++i) {
        lo[i] = act.apply(box.lo[i]);
        hi[i] = act.apply(box.hi[i]);
    }
    return Box(std::move(lo), std::move(hi));
}

}  // namespace

IntervalTrace propagate_interval_trace(const Network& net, const Box& box) {
    if (box.dim() != net.input_dim())
        throw DimensionError("propagate_intervals: box dim " + std::to_string(box.dim()) +
                             " != network input dim " + std::to_string(net.input_dim()));
    IntervalTrace trace;
    Box cur = box;
    for (const Layer& l : net.layers()) {
        Box pre = affine_interval(l.affine, cur);
        Box post = activation_interval(l.activation, pre);
        trace.pre_activation.push_back(pre);
        trace.post_activation.push_back(post);
        cur = std::move(post);
    }
    trace.output = affine_interval(net.final_affine(), cur);
    return trace;
}

std::vector<Box> propagate_intervals(const Network& net, const Box& box) {
    IntervalTrace trace = propagate_interval_trace(net, box);
    std::vector<Box> boxes = std::move(trace.post_activation);
    boxes.push_back(std::move(trace.output));
    return boxes;
}

}  // namespace narrowforge
