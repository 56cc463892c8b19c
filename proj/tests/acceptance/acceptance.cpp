// Acceptance suite: every criterion prints exactly one PASS/FAIL line with
// its measured numbers and wall time. Exit code 0 iff all criteria pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "narrowforge/coupling.hpp"
#include "narrowforge/error.hpp"
#include "narrowforge/pipeline.hpp"
#include "narrowforge/pwl.hpp"
#include "narrowforge/sct.hpp"
#include "narrowforge/serialize.hpp"
#include "narrowforge/verify.hpp"
#include "test_util.hpp"

using namespace narrowforge;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void run_criterion(int index, const std::string& name, double time_limit_s,
                   const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
        outcome = body();
    } catch (const std::exception& e) {
        outcome.pass = false;
        outcome.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (time_limit_s > 0 && secs > time_limit_s) {
        outcome.pass = false;
        outcome.detail += " [exceeded " + std::to_string(time_limit_s) + "s budget]";
    }
    if (!outcome.pass) ++failures;
    std::printf("[%s] criterion %d: %s (%s, %.1fs)\n", outcome.pass ? "PASS" : "FAIL",
                index, name.c_str(), outcome.detail.c_str(), secs);
    std::fflush(stdout);
}

std::string data_path(const std::string& name) {
    return std::string(NF_TEST_DATA_DIR) + "/" + name;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// 1. Exact PWL compilation.
Outcome criterion_pwl() {
    std::mt19937_64 rng(1001);
    std::uniform_int_distribution<int> nbp(0, 20);
    double worst_rel = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        PwlFunction f = nftest::random_increasing_pwl(nbp(rng), rng);
        Network net = compile_increasing_pwl(f);
        if (net.depth() != f.breakpoints().size())
            return {false, "depth != breakpoint count"};
        Eigen::MatrixXd xs(10000, 1);
        for (int i = 0; i < 10000; ++i) xs(i, 0) = -10.0 + 20.0 * i / 9999.0;
        Eigen::VectorXd out = net.evaluate_batch(xs);
        for (int i = 0; i < 10000; ++i) {
            const double want = f.eval(xs(i, 0));
            worst_rel = std::max(worst_rel,
                                 std::abs(out[i] - want) / (1.0 + std::abs(want)));
        }
    }
    std::ostringstream ss;
    ss << "max relative error " << worst_rel;
    return {worst_rel < 1e-9, ss.str()};
}

// 2. Ridge-add exactness.
Outcome criterion_ridge_add() {
    std::mt19937_64 rng(1002);
    double worst = 0.0, worst_pass = 0.0;
    int count = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const int d = 2 + trial % 3;
        RidgeTerm t = nftest::random_ridge_term(d - 1, rng);
        Network net = build_ridge_add(d, t, Box::unit(d));
        if (net.width() != d) return {false, "width != d"};
        const Eigen::MatrixXd grid = lattice(Box::unit(d), 21);
        Eigen::MatrixXd out = net.evaluate_batch(grid);
        for (Eigen::Index i = 0; i < grid.rows(); ++i) {
            const Eigen::VectorXd x = grid.row(i).transpose();
            const double want =
                x[d - 1] + t.a * leaky_relu(t.beta, t.b.dot(x.head(d - 1)) + t.c);
            worst = std::max(worst, std::abs(out(i, d - 1) - want));
            for (int j = 0; j < d - 1; ++j)
                worst_pass = std::max(worst_pass, std::abs(out(i, j) - x[j]));
        }
        ++count;
    }
    std::ostringstream ss;
    ss << count << " terms, sup " << worst << ", pass-through " << worst_pass;
    return {worst < 1e-9 && worst_pass < 1e-12, ss.str()};
}

RidgeSum bounded_sum(int prefix_dim, int terms, double cap, std::mt19937_64& rng) {
    RidgeSum sum;
    for (int i = 0; i < terms; ++i)
        sum.terms.push_back(nftest::random_ridge_term(prefix_dim, rng));
    auto [lo, hi] = sum.interval(Box::unit(prefix_dim));
    const double scale = cap / std::max({std::abs(lo), std::abs(hi), cap});
    for (RidgeTerm& t : sum.terms) t.a *= scale;
    sum.constant *= scale;
    return sum;
}

// 3. ACF compilation.
Outcome criterion_acf() {
    std::mt19937_64 rng(1003);
    const double tol = 1e-3;
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        AcfSpec spec;
        spec.d = 2;
        spec.s = bounded_sum(1, 4, 1.0, rng);
        spec.t = bounded_sum(1, 4, 1.0, rng);
        Network net = compile_acf(spec, Box::unit(2), tol);
        auto report = sup_error(
            net, [&spec](const Eigen::VectorXd& x) { return spec.apply(x); },
            Box::unit(2), 101);
        worst = std::max(worst, report.sup_error);
        if (!check_monotone_last(net, Box::unit(2), 300, 7 + trial).ok)
            return {false, "monotonicity check failed"};
    }
    std::ostringstream ss;
    ss << "20 specs, worst grid sup error " << worst;
    return {worst < tol, ss.str()};
}

// 4. Gamma contraction.
Outcome criterion_gamma() {
    const double delta = 0.01;
    double worst_slack = 0.0;
    for (double gamma0 : {2.0, 4.0, 6.0, 8.0, 10.0}) {
        Network f = Network::identity(2);
        auto b = [gamma0](const Eigen::VectorXd& p) {
            const double s = std::sin(M_PI * p[0]);
            return 1.0 + (gamma0 - 1.0) * s * s;
        };
        SharpenState st = make_sharpen_state(f, b, 0.0, 1.0, Box::unit(2), 33);
        const int predicted = static_cast<int>(std::ceil(
            std::log(std::log(1.0 + delta) / std::log(gamma0)) / std::log(2.0 / 3.0)));
        FitOptions budget;
        budget.tol = 4e-4;
        budget.max_terms = 256;
        int iters = 0;
        while (st.gamma >= 1.0 + delta) {
            if (iters > predicted + 2) {
                std::ostringstream ss;
                ss << "gamma0 " << gamma0 << ": " << iters << " iters > predicted "
                   << predicted << " + 2 (gamma " << st.gamma << ")";
                return {false, ss.str()};
            }
            SharpenState next = sharpen_step(st, st.box, 33, budget);
            if (next.fit_slack >= 0.05) {
                std::ostringstream ss;
                ss << "fit slack " << next.fit_slack << " >= 0.05";
                return {false, ss.str()};
            }
            if (next.gamma > std::pow(st.gamma, 2.0 / 3.0) + next.fit_slack) {
                std::ostringstream ss;
                ss << "gamma " << next.gamma << " > " << st.gamma << "^(2/3) + "
                   << next.fit_slack;
                return {false, ss.str()};
            }
            worst_slack = std::max(worst_slack, next.fit_slack);
            st = next;
            ++iters;
        }
    }
    std::ostringstream ss;
    ss << "5 problems converged below 1.01, max fit slack " << worst_slack;
    return {true, ss.str()};
}

// 5. SCT slice induction.
Outcome criterion_sct() {
    const double tol = 1e-2;
    double worst = 0.0;

    {  // d = 1
        Eigen::VectorXd bp(3), slopes(4);
        bp << 0.25, 0.5, 0.75;
        slopes << 0.5, 1.5, 0.8, 2.0;
        PwlFunction f(bp, slopes, 0.0, 0.0);
        SctOracle oracle;
        oracle.d = 1;
        oracle.tau_d = [&f](const Eigen::VectorXd& x) { return f.eval(x[0]); };
        SctReport report;
        Network net = compile_sct_leakyrelu(oracle, Box::unit(1), 8, tol, SctOptions{},
                                            &report);
        if (net.width() > 1) return {false, "d=1 width exceeded 1"};
        worst = std::max(worst, report.max_slice_error);
        if (!check_monotone_last(net, Box::unit(1), 1000, 5).ok)
            return {false, "d=1 monotonicity failed"};
    }
    {  // d = 2
        SctOracle oracle;
        oracle.d = 2;
        oracle.tau_d = [](const Eigen::VectorXd& x) {
            return x[1] + 0.25 * std::sin(M_PI * x[0]) * x[1] * (1.0 - x[1]);
        };
        SctReport report;
        Network net = compile_sct_leakyrelu(oracle, Box::unit(2), 8, tol, SctOptions{},
                                            &report);
        if (net.width() != 2) return {false, "d=2 width != 2"};
        worst = std::max(worst, report.max_slice_error);
        if (!check_monotone_last(net, Box::unit(2), 1000, 6).ok)
            return {false, "d=2 monotonicity failed"};
    }
    std::ostringstream ss;
    ss << "worst slice error " << worst << " on 33-point prefix grids";
    return {worst < tol, ss.str()};
}

// 6. Width accounting.
Outcome criterion_width() {
    std::mt19937_64 rng(1006);
    // compile_sct widths are checked in criterion 5; lifts here.
    for (int d : {1, 2, 3}) {
        RidgeSum tau;
        RidgeTerm t = nftest::random_ridge_term(d, rng);
        t.a *= 0.1;
        tau.terms.push_back(t);
        LiftOptions lo;
        lo.max_stages = 8;
        lo.candidates = 12;
        Network r = lift_relu(tau, d, Box::unit(d), 0.5, lo);
        if (r.width() != d + 1) return {false, "lift_relu width != d+1"};
        SigmaRidge stau;
        stau.linear = Eigen::VectorXd::Zero(d);
        Network gnet = lift_general("tanh", stau, d, Box::unit(d), 0.5);
        if (gnet.width() != d + 2) return {false, "lift_general width != d+2"};
    }

    int checked = 0;
    for (int n : {1, 2}) {
        for (int m : {1, 2, 3}) {
            const int d = std::max(2 * n + 1, m);
            DiffeoTarget target;
            target.n = n;
            target.m = m;
            target.program.d = d;
            target.program.stages.emplace_back(
                AffineMap(nftest::random_invertible(d, rng),
                          0.1 * nftest::random_vector(d, rng)));
            AcfSpec acf;
            acf.d = d;
            acf.s = bounded_sum(d - 1, 1, 0.05, rng);
            acf.t = bounded_sum(d - 1, 1, 0.05, rng);
            target.program.stages.emplace_back(acf);

            PipelineOptions opts;
            opts.lift.max_stages = 10;
            opts.lift.candidates = 12;
            opts.lift.train_res = d >= 4 ? 5 : 0;
            opts.general.fit.max_terms = 96;
            opts.general.fit.train_res = d >= 4 ? 5 : 0;
            for (ActivationClass cls :
                 {ActivationClass::leaky_relu(), ActivationClass::relu(),
                  ActivationClass::general("tanh")}) {
                Network net = compile_pipeline(target, cls, Box::unit(n), 0.5, opts);
                if (net.width() > min_width_bound(n, m, cls)) {
                    std::ostringstream ss;
                    ss << "width " << net.width() << " > bound for n=" << n
                       << " m=" << m << " alpha=" << alpha_of(cls);
                    return {false, ss.str()};
                }
                ++checked;
            }
        }
    }
    std::ostringstream ss;
    ss << checked << " pipeline compiles + 6 lifts, zero violations";
    return {true, ss.str()};
}

// 7. Invertibility.
Outcome criterion_invertibility() {
    std::mt19937_64 rng(1007);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        Network net = nftest::random_leaky_network(3, 10, rng);
        auto res = check_invertible(net, Box::uniform(3, -1.0, 1.0), 20, 1e-8,
                                    trial);
        if (!res.ok) return {false, "round-trip failed: " + res.reason};
        worst = std::max(worst, res.max_roundtrip_error);
    }

    // INN program composed with its analytic inverse.
    const double tol = 2e-3;
    AcfSpec fwd;
    fwd.d = 2;
    fwd.s = bounded_sum(1, 3, 0.8, rng);
    fwd.t = bounded_sum(1, 3, 0.8, rng);
    AcfSpec inv;
    inv.d = 2;
    inv.s = fwd.s.negated();
    FitOptions fopts;
    fopts.tol = tol / 2;
    fopts.max_terms = 384;
    inv.t = fit_ridge_or_throw(
                [&fwd](const Eigen::VectorXd& p) {
                    return -fwd.t.eval(p) * std::exp(-fwd.s.eval(p));
                },
                Box::unit(1), fopts)
                .sum;
    InnProgram prog;
    prog.d = 2;
    prog.stages.emplace_back(fwd);
    prog.stages.emplace_back(inv);
    Network net = compile_inn(prog, Box::unit(2), tol);
    auto report = sup_error(
        net, [](const Eigen::VectorXd& x) { return x; }, Box::unit(2), 51);
    std::ostringstream ss;
    ss << "100 nets round-trip <= " << worst << ", inn inverse sup "
       << report.sup_error << " < 2 tol";
    return {worst < 1e-8 && report.sup_error < 2 * tol, ss.str()};
}

// 8. Activation generalization.
Outcome criterion_generalization() {
    std::mt19937_64 rng(1008);
    std::vector<Layer> layers;
    for (int i = 0; i < 2; ++i)
        layers.push_back(Layer{AffineMap(nftest::random_matrix(2, 2, rng),
                                         nftest::random_vector(2, rng, 0.3)),
                               ActivationTag::custom("tanh")});
    Network net(2, std::move(layers),
                AffineMap(nftest::random_matrix(2, 2, rng),
                          nftest::random_vector(2, rng, 0.3)));
    const double tol = 1e-2;
    Network out = generalize_activation(net, Box::unit(2), tol);
    if (out.width() != net.width()) return {false, "width changed"};
    for (const Layer& l : out.layers())
        if (l.activation.kind() == ActivationKind::Custom)
            return {false, "custom activation left in output"};
    double worst = 0.0;
    for (int i = 0; i < 50; ++i)
        for (int j = 0; j < 50; ++j) {
            Eigen::VectorXd x(2);
            x << i / 49.0, j / 49.0;
            worst = std::max(worst,
                             (out.evaluate(x) - net.evaluate(x)).cwiseAbs().maxCoeff());
        }
    std::ostringstream ss;
    ss << "sup error " << worst << " on 50x50 grid at width " << out.width();
    return {worst < tol, ss.str()};
}

// 9. Serialization.
Outcome criterion_serialization() {
    const std::string golden_net = slurp(data_path("golden_net.json"));
    if (to_json(network_from_json(golden_net)) != golden_net)
        return {false, "golden round-trip not byte-identical"};

    std::mt19937_64 rng(1009);
    Network net = nftest::random_leaky_network(3, 6, rng);
    Network back = network_from_json(to_json(net));
    for (int i = 0; i < 100; ++i) {
        Eigen::VectorXd x = nftest::random_vector(3, rng, 2.0);
        Eigen::VectorXd a = net.evaluate(x);
        Eigen::VectorXd b = back.evaluate(x);
        for (int j = 0; j < 3; ++j)
            if (a[j] != b[j]) return {false, "evaluation differs after round trip"};
    }
    return {true, "golden file byte-exact, 100-point evaluation 0 ulp"};
}

}  // namespace

int main() {
    run_criterion(1, "exact PWL compilation", 5.0, criterion_pwl);
    run_criterion(2, "ridge-add exactness", 10.0, criterion_ridge_add);
    run_criterion(3, "ACF compilation at 1e-3", 60.0, criterion_acf);
    run_criterion(4, "gamma contraction", 120.0, criterion_gamma);
    run_criterion(5, "SCT slice induction", 300.0, criterion_sct);
    run_criterion(6, "width accounting", 0.0, criterion_width);
    run_criterion(7, "invertibility", 0.0, criterion_invertibility);
    run_criterion(8, "activation generalization", 0.0, criterion_generalization);
    run_criterion(9, "serialization", 0.0, criterion_serialization);
    if (failures > 0) {
        std::printf("%d criterion(s) failed\n", failures);
        return 1;
    }
    std::printf("all 9 criteria passed\n");
    return 0;
}
