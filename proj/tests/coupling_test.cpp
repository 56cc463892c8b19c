#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "narrowforge/coupling.hpp"
#include "narrowforge/error.hpp"
#include "narrowforge/serialize.hpp"
#include "narrowforge/verify.hpp"
#include "test_util.hpp"

using namespace narrowforge;

namespace {

double ridge_add_formula(const RidgeTerm& t, const Eigen::VectorXd& x) {
    const int d = static_cast<int>(x.size());
    return x[d - 1] + t.a * leaky_relu(t.beta, t.b.dot(x.head(d - 1)) + t.c);
}

}  // namespace

TEST_CASE("ridge add: a = 0 is the identity on the box") {
    RidgeTerm t;
    t.a = 0.0;
    t.b = Eigen::VectorXd::Ones(1);
    t.c = 0.3;
    t.beta = 0.5;
    Network net = build_ridge_add(2, t, Box::unit(2));
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        Eigen::VectorXd x(2);
        x << unif(rng), unif(rng);
        CHECK((net.evaluate(x) - x).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("ridge add matches the closed form in d = 2") {
    RidgeTerm t;
    t.a = 1.0;
    t.b = Eigen::VectorXd::Ones(1);
    t.c = 0.0;
    t.beta = 0.5;
    Network net = build_ridge_add(2, t, Box::uniform(2, -3.0, 4.0));
    Eigen::VectorXd x(2);
    x << -2.0, 3.0;
    Eigen::VectorXd y = net.evaluate(x);
    CHECK(y[0] == doctest::Approx(-2.0));
    CHECK(y[1] == doctest::Approx(2.0));
    x << 1.0, 3.0;
    y = net.evaluate(x);
    CHECK(y[0] == doctest::Approx(1.0));
    CHECK(y[1] == doctest::Approx(4.0));
    CHECK(net.width() == 2);
    CHECK(net.depth() == 2);
}

TEST_CASE("ridge add is exact for random terms in d = 3") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        RidgeTerm t = nftest::random_ridge_term(2, rng);
        Network net = build_ridge_add(3, t, Box::unit(3));
        CHECK(net.width() == 3);
        const Eigen::MatrixXd grid = lattice(Box::unit(3), 21);
        Eigen::MatrixXd out = net.evaluate_batch(grid);
        for (Eigen::Index i = 0; i < grid.rows(); ++i) {
            const Eigen::VectorXd x = grid.row(i).transpose();
            CHECK(std::abs(out(i, 2) - ridge_add_formula(t, x)) < 1e-9);
            CHECK(std::abs(out(i, 0) - x[0]) < 1e-12);
            CHECK(std::abs(out(i, 1) - x[1]) < 1e-12);
        }
    }
}

TEST_CASE("ridge add with zero direction is a pure bias add") {
    RidgeTerm t;
    t.a = 2.0;
    t.b = Eigen::VectorXd::Zero(1);
    t.c = 1.5;
    t.beta = 0.5;
    Network net = build_ridge_add(2, t, Box::unit(2));
    CHECK(net.depth() == 0);
    Eigen::VectorXd x(2);
    x << 0.3, 0.4;
    CHECK(net.evaluate(x)[1] == doctest::Approx(0.4 + 2.0 * 1.5));
}

TEST_CASE("ridge add rejects unbounded boxes") {
    Eigen::VectorXd lo = Eigen::VectorXd::Zero(2);
    Eigen::VectorXd hi = Eigen::VectorXd::Ones(2);
    hi[0] = std::numeric_limits<double>::infinity();
    RidgeTerm t = []{ std::mt19937_64 r(3); return nftest::random_ridge_term(1, r); }();
    CHECK_THROWS_AS(build_ridge_add(2, t, Box(lo, hi)), Error);
}

TEST_CASE("translation add: constant-only shifts the last coordinate") {
    RidgeSum sum = RidgeSum::constant_only(5.0);
    Network net = build_translation_add(2, sum, Box::unit(2));
    CHECK(net.depth() == 0);
    Eigen::VectorXd x(2);
    x << 0.25, 0.5;
    Eigen::VectorXd y = net.evaluate(x);
    CHECK(y[0] == doctest::Approx(0.25));
    CHECK(y[1] == doctest::Approx(5.5));
}

TEST_CASE("translation add with one term equals build_ridge_add") {
    std::mt19937_64 rng(31);
    RidgeTerm t = nftest::random_ridge_term(1, rng);
    RidgeSum sum{{t}, 0.0};
    Network a = build_translation_add(2, sum, Box::unit(2));
    Network b = build_ridge_add(2, t, Box::unit(2));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        Eigen::VectorXd x(2);
        x << unif(rng), unif(rng);
        CHECK((a.evaluate(x) - b.evaluate(x)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("translation add: 8-term ridge sum on a 101x101 grid") {
    std::mt19937_64 rng(41);
    RidgeSum sum;
    for (int i = 0; i < 8; ++i) sum.terms.push_back(nftest::random_ridge_term(1, rng));
    sum.constant = 0.7;
    Network net = build_translation_add(2, sum, Box::unit(2));
    CHECK(net.depth() == 16);
    CHECK(net.width() == 2);
    const Eigen::MatrixXd grid = lattice(Box::unit(2), 101);
    Eigen::MatrixXd out = net.evaluate_batch(grid);
    for (Eigen::Index i = 0; i < grid.rows(); ++i) {
        const double want = grid(i, 1) + sum.eval(grid.row(i).head(1).transpose());
        CHECK(std::abs(out(i, 1) - want) < 1e-8);
        CHECK(std::abs(out(i, 0) - grid(i, 0)) < 1e-12);
    }
}

TEST_CASE("translation add handles d = 1 (constant-only prefix)") {
    RidgeSum sum = RidgeSum::constant_only(-2.0);
    Network net = build_translation_add(1, sum, Box::unit(1));
    CHECK(net.evaluate(Eigen::VectorXd::Constant(1, 0.5))[0] == doctest::Approx(-1.5));
}

TEST_CASE("fit_ridge: constant oracle returns constant-only sum") {
    RidgeFit fit = fit_ridge([](const Eigen::VectorXd&) { return 3.25; }, Box::unit(1));
    CHECK(fit.converged);
    CHECK(fit.sum.terms.empty());
    CHECK(fit.sum.constant == doctest::Approx(3.25));
    CHECK(fit.validation_error < 1e-9);
}

TEST_CASE("fit_ridge recovers a gentle ridge sum within 1e-6") {
    // Three terms: one exactly linear on the box, two gentle kinks. Least
    // squares with adaptive kink refinement must reproduce the sum.
    RidgeSum truth;
    truth.constant = 0.2;
    {
        RidgeTerm lin;
        lin.a = 0.7;
        lin.b = Eigen::VectorXd::Ones(1);
        lin.c = 1.0;  // argument positive on [0,1]
        lin.beta = 0.01;
        truth.terms.push_back(lin);
        RidgeTerm k1;
        k1.a = 2e-3;
        k1.b = Eigen::VectorXd::Constant(1, 2.0);
        k1.c = -0.9;
        k1.beta = 0.01;
        truth.terms.push_back(k1);
        RidgeTerm k2;
        k2.a = -1.5e-3;
        k2.b = Eigen::VectorXd::Constant(1, 1.0);
        k2.c = -0.37;
        k2.beta = 0.01;
        truth.terms.push_back(k2);
    }
    FitOptions opts;
    opts.tol = 1e-6;
    RidgeFit fit = fit_ridge([&truth](const Eigen::VectorXd& x) { return truth.eval(x); },
                             Box::unit(1), opts);
    CHECK(fit.converged);
    CHECK(fit.validation_error < 1e-6);
}

TEST_CASE("fit_ridge reaches 1e-2 for sin(2 pi x) with 64 terms") {
    FitOptions opts;
    opts.max_terms = 64;
    opts.tol = 1e-2;
    RidgeFit fit = fit_ridge(
        [](const Eigen::VectorXd& x) { return std::sin(2.0 * M_PI * x[0]); },
        Box::unit(1), opts);
    CHECK(fit.converged);
    CHECK(fit.validation_error < 1e-2);
    CHECK(fit.terms <= 64);
}

TEST_CASE("fit_ridge failure is explicit, not silent") {
    FitOptions opts;
    opts.max_terms = 3;
    opts.tol = 1e-10;
    RidgeFit fit = fit_ridge(
        [](const Eigen::VectorXd& x) { return std::sin(6.0 * x[0]) + std::cos(17.0 * x[0]); },
        Box::unit(1), opts);
    CHECK_FALSE(fit.converged);
    CHECK(fit.validation_error > 1e-10);
    CHECK_THROWS_AS(fit_ridge_or_throw(
                        [](const Eigen::VectorXd& x) {
                            return std::sin(6.0 * x[0]) + std::cos(17.0 * x[0]);
                        },
                        Box::unit(1), opts),
                    FitError);
}

TEST_CASE("compile_acf: zero s and t is the identity") {
    AcfSpec spec;
    spec.d = 2;
    Network net = compile_acf(spec, Box::unit(2), 1e-3);
    const Eigen::MatrixXd grid = lattice(Box::unit(2), 21);
    Eigen::MatrixXd out = net.evaluate_batch(grid);
    CHECK((out - grid).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("compile_acf with constant-free s equals build_ridge_add") {
    std::mt19937_64 rng(51);
    AcfSpec spec;
    spec.d = 2;
    RidgeTerm t = nftest::random_ridge_term(1, rng);
    spec.t.terms.push_back(t);
    Network acf_net = compile_acf(spec, Box::unit(2), 1e-3);
    Network direct = build_ridge_add(2, t, Box::unit(2));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        Eigen::VectorXd x(2);
        x << unif(rng), unif(rng);
        CHECK((acf_net.evaluate(x) - direct.evaluate(x)).cwiseAbs().maxCoeff() < 1e-9);
    }
}

namespace {

// Random ridge sum rescaled so |sum| <= cap on the unit prefix box.
RidgeSum bounded_ridge_sum(int prefix_dim, int terms, double cap, std::mt19937_64& rng) {
    RidgeSum sum;
    for (int i = 0; i < terms; ++i) sum.terms.push_back(nftest::random_ridge_term(prefix_dim, rng));
    auto [lo, hi] = sum.interval(Box::unit(prefix_dim));
    const double scale = cap / std::max({std::abs(lo), std::abs(hi), cap});
    for (RidgeTerm& t : sum.terms) t.a *= scale;
    sum.constant *= scale;
    return sum;
}

}  // namespace

TEST_CASE("compile_acf meets 1e-3 for random 4-term specs") {
    std::mt19937_64 rng(61);
    AcfSpec spec;
    spec.d = 2;
    spec.s = bounded_ridge_sum(1, 4, 1.0, rng);
    spec.t = bounded_ridge_sum(1, 4, 1.0, rng);
    const double tol = 1e-3;
    Network net = compile_acf(spec, Box::unit(2), tol);
    auto report = sup_error(
        net, [&spec](const Eigen::VectorXd& x) { return spec.apply(x); }, Box::unit(2),
        101);
    CHECK(report.sup_error < tol);
    CHECK(net.width() == 2);
    auto mono = check_monotone_last(net, Box::unit(2), 500);
    CHECK(mono.ok);
}

TEST_CASE("compile_inn: mutually inverse affines give the identity") {
    std::mt19937_64 rng(71);
    Eigen::MatrixXd w = nftest::random_invertible(3, rng);
    Eigen::VectorXd b = nftest::random_vector(3, rng);
    InnProgram prog;
    prog.d = 3;
    prog.stages.emplace_back(AffineMap(w, b));
    Eigen::MatrixXd winv = w.inverse();
    prog.stages.emplace_back(AffineMap(winv, -winv * b));
    Network net = compile_inn(prog, Box::unit(3), 1e-6);
    const Eigen::MatrixXd grid = lattice(Box::unit(3), 9);
    Eigen::MatrixXd out = net.evaluate_batch(grid);
    CHECK((out - grid).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("compile_inn: single-acf program equals compile_acf") {
    std::mt19937_64 rng(81);
    AcfSpec spec;
    spec.d = 2;
    spec.s = bounded_ridge_sum(1, 2, 0.5, rng);
    spec.t = bounded_ridge_sum(1, 2, 0.5, rng);
    InnProgram prog;
    prog.d = 2;
    prog.stages.emplace_back(spec);
    Network a = compile_inn(prog, Box::unit(2), 1e-3);
    Network b = compile_acf(spec, Box::unit(2), 1e-3);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        Eigen::VectorXd x(2);
        x << unif(rng), unif(rng);
        CHECK((a.evaluate(x) - b.evaluate(x)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("compile_inn rejects singular affine stages with the stage index") {
    InnProgram prog;
    prog.d = 2;
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(2, 2);
    w(0, 0) = 1.0;
    prog.stages.emplace_back(AffineMap(w, Eigen::VectorXd::Zero(2)));
    try {
        compile_inn(prog, Box::unit(2), 1e-3);
        FAIL("expected NotInvertibleError");
    } catch (const NotInvertibleError& e) {
        CHECK(std::string(e.what()).find("stage 0") != std::string::npos);
    }
}

TEST_CASE("acf round trip: spec composed with analytic inverse is near identity") {
    std::mt19937_64 rng(91);
    AcfSpec fwd;
    fwd.d = 2;
    fwd.s = bounded_ridge_sum(1, 3, 0.8, rng);
    fwd.t = bounded_ridge_sum(1, 3, 0.8, rng);

    const double tol = 2e-3;
    // Inverse ACF: s' = -s, t' = -t * exp(-s) fitted as a ridge sum.
    AcfSpec inv;
    inv.d = 2;
    inv.s = fwd.s.negated();
    FitOptions fopts;
    fopts.tol = tol / 2;
    fopts.max_terms = 384;
    RidgeFit tf = fit_ridge_or_throw(
        [&fwd](const Eigen::VectorXd& p) {
            return -fwd.t.eval(p) * std::exp(-fwd.s.eval(p));
        },
        Box::unit(1), fopts);
    inv.t = tf.sum;

    InnProgram prog;
    prog.d = 2;
    prog.stages.emplace_back(fwd);
    prog.stages.emplace_back(inv);
    Network net = compile_inn(prog, Box::unit(2), tol);
    auto report = sup_error(
        net, [](const Eigen::VectorXd& x) { return x; }, Box::unit(2), 51);
    CHECK(report.sup_error < 2 * tol);
}

TEST_CASE("inn and acf json round trips") {
    std::mt19937_64 rng(101);
    InnProgram prog;
    prog.d = 2;
    prog.stages.emplace_back(AffineMap(nftest::random_invertible(2, rng),
                                       nftest::random_vector(2, rng)));
    AcfSpec spec;
    spec.d = 2;
    spec.s = bounded_ridge_sum(1, 2, 1.0, rng);
    spec.t = bounded_ridge_sum(1, 2, 1.0, rng);
    prog.stages.emplace_back(spec);
    prog.stages.emplace_back(SctHandle{Network::identity(2)});

    InnProgram back = inn_from_json(to_json(prog));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int i = 0; i < 50; ++i) {
        Eigen::VectorXd x(2);
        x << unif(rng), unif(rng);
        CHECK((back.apply(x) - prog.apply(x)).cwiseAbs().maxCoeff() == 0.0);
    }
}
