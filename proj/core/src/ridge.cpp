#include "narrowforge/ridge.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "narrowforge/activation.hpp"
#include "narrowforge/error.hpp"

namespace narrowforge {

double RidgeTerm::eval(const Eigen::VectorXd& x) const {
    if (x.size() != b.size())
        throw DimensionError("ridge term over dim " + std::to_string(b.size()) +
                             " applied to dim " + std::to_string(x.size()));
    return a * leaky_relu(beta, b.dot(x) + c);
}

double RidgeSum::eval(const Eigen::VectorXd& x) const {
    double v = constant;
    for (const RidgeTerm& t : terms) v += t.eval(x);
    return v;
}

Eigen::VectorXd RidgeSum::eval_batch(const Eigen::MatrixXd& xs) const {
    Eigen::VectorXd v = Eigen::VectorXd::Constant(xs.rows(), constant);
    for (const RidgeTerm& t : terms) {
        Eigen::VectorXd arg = (xs * t.b).array() + t.c;
        const double beta = t.beta;
        v += t.a * arg.unaryExpr([beta](double u) { return leaky_relu(beta, u); });
    }
    return v;
}

RidgeSum RidgeSum::negated() const {
    RidgeSum r = *this;
    r.constant = -r.constant;
    for (RidgeTerm& t : r.terms) t.a = -t.a;
    return r;
}

RidgeSum RidgeSum::concat(const RidgeSum& u, const RidgeSum& v) {
    RidgeSum r = u;
    r.constant += v.constant;
    r.terms.insert(r.terms.end(), v.terms.begin(), v.terms.end());
    return r;
}

std::pair<double, double> RidgeSum::interval(const Box& box) const {
    double lo = constant, hi = constant;
    for (const RidgeTerm& t : terms) {
        double arg_lo = t.c, arg_hi = t.c;
        for (Eigen::Index j = 0; j < t.b.size(); ++j) {
            const double w = t.b[j];
            arg_lo += w >= 0 ? w * box.lo[j] : w * box.hi[j];
            arg_hi += w >= 0 ? w * box.hi[j] : w * box.lo[j];
        }
        double v0 = t.a * leaky_relu(t.beta, arg_lo);
        double v1 = t.a * leaky_relu(t.beta, arg_hi);
        lo += std::min(v0, v1);
        hi += std::max(v0, v1);
    }
    return {lo, hi};
}

double RidgeSum::lipschitz_bound() const {
    double l = 0.0;
    for (const RidgeTerm& t : terms)
        l += std::abs(t.a) * std::max(1.0, t.beta) * t.b.cwiseAbs().sum();
    return l;
}

double RidgeSum::sampled_lipschitz(const Box& box) const {
    const int p = box.dim();
    if (p == 0 || terms.empty()) return 0.0;
    const int res = p == 1 ? 257 : (p == 2 ? 33 : (p == 3 ? 13 : 7));
    const Eigen::MatrixXd pts = lattice(box, res);
    double lip = 0.0;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        double grad1 = 0.0;
        for (int j = 0; j < p; ++j) {
            const double h = std::max(1e-6 * box.span(j), 1e-9);
            Eigen::VectorXd a = pts.row(i).transpose(), b = a;
            a[j] = std::max(a[j] - h, box.lo[j]);
            b[j] = std::min(b[j] + h, box.hi[j]);
            if (b[j] == a[j]) continue;
            grad1 += std::abs(eval(b) - eval(a)) / (b[j] - a[j]);
        }
        lip = std::max(lip, grad1);
    }
    return lip;
}

namespace {

int auto_train_res(int dim) {
    switch (dim) {
        case 1: return 1025;
        case 2: return 65;
        case 3: return 21;
        case 4: return 11;
        default: return 7;
    }
}

struct Feature {
    Eigen::VectorXd b;
    double c;
};

Eigen::VectorXd feature_column(const Feature& f, const Eigen::MatrixXd& pts, double beta) {
    Eigen::VectorXd arg = (pts * f.b).array() + f.c;
    return arg.unaryExpr([beta](double u) { return leaky_relu(beta, u); });
}

}  // namespace

RidgeFit fit_ridge(const std::function<double(const Eigen::VectorXd&)>& oracle,
                   const Box& box, const FitOptions& opts) {
    const int p = box.dim();
    RidgeFit fit;
    fit.seed = opts.seed;

    if (p == 0) {
        fit.sum = RidgeSum::constant_only(oracle(Eigen::VectorXd(0)));
        fit.converged = true;
        return fit;
    }

    const int res = opts.train_res > 0 ? opts.train_res : auto_train_res(p);
    const Eigen::MatrixXd train = lattice(box, res);
    const Eigen::MatrixXd val = shifted_lattice(box, res);
    Eigen::VectorXd y_train(train.rows()), y_val(val.rows());
    for (Eigen::Index i = 0; i < train.rows(); ++i) y_train[i] = oracle(train.row(i));
    for (Eigen::Index i = 0; i < val.rows(); ++i) y_val[i] = oracle(val.row(i));
    const double yscale = std::max(1.0, y_train.cwiseAbs().maxCoeff());

    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    auto random_point = [&] {
        Eigen::VectorXd x(p);
        for (int j = 0; j < p; ++j) x[j] = box.lo[j] + unif(rng) * box.span(j);
        return x;
    };
    auto random_direction = [&] {
        Eigen::VectorXd b(p);
        for (int j = 0; j < p; ++j) b[j] = gauss(rng);
        double norm = b.norm();
        if (norm < 1e-12) { b.setZero(); b[0] = 1.0; norm = 1.0; }
        for (int j = 0; j < p; ++j) b[j] *= 2.0 / (norm * std::max(box.span(j), 1e-9));
        return b;
    };
    auto axis_direction = [&](int j) {
        Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
        b[j] = 2.0 / std::max(box.span(j), 1e-9);
        return b;
    };

    // Dictionary: linear-exact features (one per axis, argument kept positive
    // over the box so lr acts as the identity there) plus kink features.
    std::vector<Feature> linear;
    for (int j = 0; j < p; ++j)
        linear.push_back(Feature{Eigen::VectorXd::Unit(p, j), 1.0 - box.lo[j]});

    std::vector<Feature> kinks;
    const int kink_budget = std::max(0, opts.max_terms - p);

    // Kink ladders along any hinted ridge directions.
    if (!opts.hint_directions.empty()) {
        const int per_dir =
            std::min(256, kink_budget / (2 * static_cast<int>(opts.hint_directions.size())));
        for (const Eigen::VectorXd& dir : opts.hint_directions) {
            if (dir.size() != p || dir.cwiseAbs().maxCoeff() == 0.0) continue;
            double arg_lo = 0.0, arg_hi = 0.0;
            for (int j = 0; j < p; ++j) {
                arg_lo += dir[j] >= 0 ? dir[j] * box.lo[j] : dir[j] * box.hi[j];
                arg_hi += dir[j] >= 0 ? dir[j] * box.hi[j] : dir[j] * box.lo[j];
            }
            for (int k = 0; k < per_dir; ++k) {
                const double pos = arg_lo + (arg_hi - arg_lo) * (k + 0.5) / per_dir;
                kinks.push_back(Feature{dir, -pos});
            }
        }
    }

    const int n0 = std::min(kink_budget - static_cast<int>(kinks.size()),
                            p == 1 ? 224 : 160);
    const int det_stride = p == 1 ? 4 : 2;  // 3:1 deterministic:random in 1-D
    int n_det = 0;
    for (int i = 0; i < n0; ++i) n_det += (i % det_stride != det_stride - 1) ? 1 : 0;
    const int per_axis = (n_det + p - 1) / std::max(p, 1);
    int det_index = 0;
    for (int i = 0; i < n0; ++i) {
        if (i % det_stride != det_stride - 1) {
            const int j = det_index % p;
            const int slot = det_index / p;
            ++det_index;
            Eigen::VectorXd b = axis_direction(j);
            const double pos = box.lo[j] + box.span(j) * (slot + 0.5) / std::max(per_axis, 1);
            kinks.push_back(Feature{b, -b[j] * pos});
        } else {
            Eigen::VectorXd b = random_direction();
            kinks.push_back(Feature{b, -b.dot(random_point())});
        }
    }

    RidgeFit best;
    best.seed = opts.seed;
    best.validation_error = std::numeric_limits<double>::infinity();

    auto run_ls = [&](bool include_linear_and_kinks) {
        const int nf = 1 + (include_linear_and_kinks
                                ? static_cast<int>(linear.size() + kinks.size())
                                : 0);
        Eigen::MatrixXd A(train.rows(), nf);
        Eigen::MatrixXd Av(val.rows(), nf);
        A.col(0).setOnes();
        Av.col(0).setOnes();
        if (include_linear_and_kinks) {
            int col = 1;
            for (const Feature& f : linear) {
                A.col(col) = feature_column(f, train, opts.beta);
                Av.col(col) = feature_column(f, val, opts.beta);
                ++col;
            }
            for (const Feature& f : kinks) {
                A.col(col) = feature_column(f, train, opts.beta);
                Av.col(col) = feature_column(f, val, opts.beta);
                ++col;
            }
        }
        // Min-norm least squares: near-duplicate kink columns otherwise
        // produce cancellation pairs that blow up between grid points. The
        // truncation rank is chosen by validation error, which also damps
        // overfit wiggle between training points.
        Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
        Eigen::VectorXd coef;
        double train_err = 0.0, val_err = std::numeric_limits<double>::infinity();
        for (double threshold : {1e-12, 1e-9, 1e-7, 1e-5, 1e-3}) {
            svd.setThreshold(threshold);
            Eigen::VectorXd cand = svd.solve(y_train);
            const double verr = (Av * cand - y_val).cwiseAbs().maxCoeff();
            if (verr < val_err) {
                val_err = verr;
                train_err = (A * cand - y_train).cwiseAbs().maxCoeff();
                coef = std::move(cand);
            }
        }
        Eigen::VectorXd val_res = Av * coef - y_val;

        if (val_err < best.validation_error) {
            RidgeSum sum;
            sum.constant = coef[0];
            if (include_linear_and_kinks) {
                int col = 1;
                auto push = [&](const Feature& f) {
                    if (std::abs(coef[col]) > 1e-13 * yscale)
                        sum.terms.push_back(RidgeTerm{coef[col], f.b, f.c, opts.beta});
                    ++col;
                };
                for (const Feature& f : linear) push(f);
                for (const Feature& f : kinks) push(f);
            }
            best.sum = std::move(sum);
            best.train_error = train_err;
            best.validation_error = val_err;
            best.terms = static_cast<int>(best.sum.terms.size());
        }
        // Worst validation points, best first, for adaptive kink insertion.
        std::vector<Eigen::Index> order(val.rows());
        for (Eigen::Index i = 0; i < val.rows(); ++i) order[i] = i;
        Eigen::VectorXd abs_res = val_res.cwiseAbs();
        std::partial_sort(order.begin(), order.begin() + std::min<Eigen::Index>(32, val.rows()),
                          order.end(),
                          [&](Eigen::Index a, Eigen::Index b) { return abs_res[a] > abs_res[b]; });
        Eigen::MatrixXd worst(std::min<Eigen::Index>(32, val.rows()), p);
        for (Eigen::Index i = 0; i < worst.rows(); ++i) worst.row(i) = val.row(order[i]);
        return std::make_pair(val_err, worst);
    };

    // Constant-only first: a constant oracle must come back constant-only.
    auto [err0, worst0] = run_ls(false);
    if (err0 <= opts.tol) {
        best.converged = true;
        return best;
    }

    for (int round = 0; round <= opts.adaptive_rounds; ++round) {
        auto [err, worst] = run_ls(true);
        if (err <= opts.tol) {
            best.converged = true;
            return best;
        }
        if (static_cast<int>(kinks.size()) >= kink_budget) break;
        // Refine around the worst points: axis kinks through each, plus a few
        // random hyperplanes through the very worst one.
        const int points = p == 1 ? std::min<int>(8, worst.rows()) : std::min<int>(4, worst.rows());
        for (int i = 0; i < points; ++i) {
            for (int j = 0; j < p && static_cast<int>(kinks.size()) < kink_budget; ++j) {
                Eigen::VectorXd b = axis_direction(j);
                kinks.push_back(Feature{b, -b[j] * worst(i, j)});
            }
            for (const Eigen::VectorXd& dir : opts.hint_directions) {
                if (dir.size() != p || static_cast<int>(kinks.size()) >= kink_budget)
                    continue;
                kinks.push_back(Feature{dir, -dir.dot(worst.row(i).transpose())});
            }
        }
        for (int r = 0; r < (p > 1 ? 3 : 1) && static_cast<int>(kinks.size()) < kink_budget;
             ++r) {
            Eigen::VectorXd b = random_direction();
            kinks.push_back(Feature{b, -b.dot(worst.row(0).transpose())});
        }
    }
    return best;
}

RidgeFit fit_ridge_or_throw(const std::function<double(const Eigen::VectorXd&)>& oracle,
                            const Box& box, const FitOptions& opts) {
    RidgeFit fit = fit_ridge(oracle, box, opts);
    if (!fit.converged)
        throw FitError("ridge fit missed tol " + std::to_string(opts.tol) +
                           " within " + std::to_string(opts.max_terms) +
                           " terms (best validation error " +
                           std::to_string(fit.validation_error) + ")",
                       fit.validation_error);
    return fit;
}

GridInterpolant::GridInterpolant(Box box, int res, Eigen::VectorXd values)
    : box_(std::move(box)), res_(res), values_(std::move(values)) {
    const int d = box_.dim();
    long expect = 1;
    strides_.assign(d, 1);
    for (int i = d - 1; i >= 0; --i) {
        strides_[i] = expect;
        expect *= res_;
    }
    if (d == 0) expect = 1;
    if (values_.size() != expect)
        throw DimensionError("grid interpolant: expected " + std::to_string(expect) +
                             " values, got " + std::to_string(values_.size()));
}

double GridInterpolant::operator()(const Eigen::VectorXd& x) const {
    const int d = box_.dim();
    if (d == 0) return values_[0];
    std::vector<int> i0(d);
    std::vector<double> w(d);
    for (int i = 0; i < d; ++i) {
        const double span = std::max(box_.span(i), 1e-300);
        double t = (x[i] - box_.lo[i]) / span * (res_ - 1);
        t = std::clamp(t, 0.0, static_cast<double>(res_ - 1));
        int k = std::min(static_cast<int>(t), res_ - 2);
        i0[i] = k;
        w[i] = t - k;
    }
    double acc = 0.0;
    for (int corner = 0; corner < (1 << d); ++corner) {
        double weight = 1.0;
        long idx = 0;
        for (int i = 0; i < d; ++i) {
            const bool hi = corner & (1 << i);
            weight *= hi ? w[i] : 1.0 - w[i];
            idx += (i0[i] + (hi ? 1 : 0)) * strides_[i];
        }
        if (weight != 0.0) acc += weight * values_[idx];
    }
    return acc;
}

}  // namespace narrowforge
