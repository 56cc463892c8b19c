#include "narrowforge/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <random>
#include <thread>

#include "narrowforge/error.hpp"

namespace narrowforge {

int thread_cap() {
    static const int cap = [] {
        int hw = static_cast<int>(std::thread::hardware_concurrency());
        if (hw < 1) hw = 1;
        if (const char* env = std::getenv("NARROWFORGE_THREADS")) {
            const int requested = std::atoi(env);
            if (requested >= 1) hw = std::min(hw, requested);
        }
        return hw;
    }();
    return cap;
}

VerifyReport sup_error(const Network& net, const VectorOracle& oracle, const Box& box,
                       int grid_res) {
    if (grid_res < 2) throw Error("sup_error needs grid_res >= 2");
    if (box.dim() != net.input_dim())
        throw DimensionError("sup_error: box dim != network input dim");
    const auto start = std::chrono::steady_clock::now();

    const Eigen::MatrixXd pts = lattice(box, grid_res);
    const Eigen::Index npts = pts.rows();

    const int threads = std::min<int>(thread_cap(), static_cast<int>(npts));
    std::vector<double> worst(threads, -1.0);
    std::vector<Eigen::Index> worst_idx(threads, 0);

    auto work = [&](int t) {
        const Eigen::Index begin = npts * t / threads;
        const Eigen::Index end = npts * (t + 1) / threads;
        if (begin >= end) return;
        Eigen::MatrixXd out = net.evaluate_batch(pts.middleRows(begin, end - begin));
        for (Eigen::Index i = begin; i < end; ++i) {
            const Eigen::VectorXd want = oracle(pts.row(i).transpose());
            if (want.size() != out.cols())
                throw DimensionError("sup_error: oracle output dim mismatch");
            const double err =
                (out.row(i - begin).transpose() - want).cwiseAbs().maxCoeff();
            if (err > worst[t]) {
                worst[t] = err;
                worst_idx[t] = i;
            }
        }
    };
    if (threads <= 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
        for (std::thread& th : pool) th.join();
    }

    int best_t = 0;
    for (int t = 1; t < threads; ++t)
        if (worst[t] > worst[best_t]) best_t = t;

    VerifyReport report;
    report.sup_error = std::max(worst[best_t], 0.0);
    report.argmax = pts.row(worst_idx[best_t]).transpose();
    report.grid_res = grid_res;
    report.width = net.width();
    report.depth = net.depth();
    report.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

MonotoneResult check_monotone_last(const Network& net, const Box& box, int samples,
                                   std::uint64_t seed) {
    const int d = net.input_dim();
    std::mt19937_64 rng(seed ^ 0x6d6fu);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    MonotoneResult result;
    for (int s = 0; s < samples; ++s) {
        Eigen::VectorXd a(d);
        for (int j = 0; j < d; ++j) a[j] = box.lo[j] + unif(rng) * box.span(j);
        Eigen::VectorXd b = a;
        double t0 = box.lo[d - 1] + unif(rng) * box.span(d - 1);
        double t1 = box.lo[d - 1] + unif(rng) * box.span(d - 1);
        if (t0 > t1) std::swap(t0, t1);
        if (t1 - t0 < 1e-6 * std::max(box.span(d - 1), 1.0)) continue;
        a[d - 1] = t0;
        b[d - 1] = t1;
        const double ya = net.evaluate(a)[net.output_dim() - 1];
        const double yb = net.evaluate(b)[net.output_dim() - 1];
        if (!(ya < yb)) {
            result.ok = false;
            result.counterexample_lo = a;
            result.counterexample_hi = b;
            return result;
        }
    }
    return result;
}

InvertResult check_invertible(const Network& net, const Box& box, int samples,
                              double tol, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0x1e7u);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    InvertResult result;
    const int d = net.input_dim();
    for (int s = 0; s < samples; ++s) {
        Eigen::VectorXd x(d);
        for (int j = 0; j < d; ++j) x[j] = box.lo[j] + unif(rng) * box.span(j);
        try {
            Eigen::VectorXd back = net.invert(net.evaluate(x));
            result.max_roundtrip_error =
                std::max(result.max_roundtrip_error, (x - back).cwiseAbs().maxCoeff());
        } catch (const NotInvertibleError& e) {
            result.ok = false;
            result.reason = std::string("not invertible by construction: ") + e.what();
            return result;
        }
    }
    result.ok = result.max_roundtrip_error <= tol;
    return result;
}

}  // namespace narrowforge
