#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <string>

#include "narrowforge/error.hpp"
#include "narrowforge/intervals.hpp"
#include "narrowforge/pipeline.hpp"
#include "narrowforge/serialize.hpp"
#include "narrowforge/verify.hpp"

#include <json.hpp>

namespace nf = narrowforge;

namespace {

// Boxes are written lo:hi,lo:hi,... ; a single range replicates across dims.
nf::Box parse_box(const std::string& text, int expected_dim) {
    std::vector<std::pair<double, double>> ranges;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos)
            throw nf::ParseError("box range '" + item + "' is not lo:hi");
        ranges.emplace_back(std::stod(item.substr(0, colon)),
                            std::stod(item.substr(colon + 1)));
    }
    if (ranges.empty()) throw nf::ParseError("empty box");
    if (expected_dim > 0 && static_cast<int>(ranges.size()) == 1)
        ranges.assign(expected_dim, ranges[0]);
    if (expected_dim > 0 && static_cast<int>(ranges.size()) != expected_dim)
        throw nf::ParseError("box has " + std::to_string(ranges.size()) +
                             " ranges, expected " + std::to_string(expected_dim));
    Eigen::VectorXd lo(ranges.size()), hi(ranges.size());
    for (size_t i = 0; i < ranges.size(); ++i) {
        lo[i] = ranges[i].first;
        hi[i] = ranges[i].second;
    }
    return nf::Box(lo, hi);
}

nf::ActivationClass parse_activation_class(const std::string& text) {
    if (text == "leaky-relu") return nf::ActivationClass::leaky_relu();
    if (text == "relu") return nf::ActivationClass::relu();
    if (text.rfind("general:", 0) == 0)
        return nf::ActivationClass::general(text.substr(8));
    throw nf::ParseError("activation must be leaky-relu, relu, or general:<name>");
}

nf::VectorOracle parse_oracle(const std::string& spec) {
    if (spec == "identity")
        return [](const Eigen::VectorXd& x) { return x; };
    const auto colon = spec.find(':');
    if (colon == std::string::npos)
        throw nf::ParseError("oracle spec must be identity or kind:file");
    const std::string kind = spec.substr(0, colon);
    const std::string path = spec.substr(colon + 1);
    const std::string text = nf::load_text(path);
    if (kind == "net") {
        auto net = std::make_shared<nf::Network>(nf::network_from_json(text));
        return [net](const Eigen::VectorXd& x) { return net->evaluate(x); };
    }
    if (kind == "pwl") {
        auto f = std::make_shared<nf::PwlFunction>(nf::pwl_from_json(text));
        return [f](const Eigen::VectorXd& x) {
            return Eigen::VectorXd::Constant(1, f->eval(x[0])).eval();
        };
    }
    if (kind == "acf") {
        auto spec_ptr = std::make_shared<nf::AcfSpec>(nf::acf_from_json(text));
        return [spec_ptr](const Eigen::VectorXd& x) { return spec_ptr->apply(x); };
    }
    if (kind == "inn") {
        auto prog = std::make_shared<nf::InnProgram>(nf::inn_from_json(text));
        return [prog](const Eigen::VectorXd& x) { return prog->apply(x); };
    }
    if (kind == "target") {
        auto t = std::make_shared<nf::DiffeoTarget>(nf::target_from_json(text));
        return [t](const Eigen::VectorXd& x) { return t->apply(x); };
    }
    throw nf::ParseError("unknown oracle kind '" + kind + "'");
}

// SCT spec family for the CLI: tau(x) = exp(scale(x')) * warp(x_d) + translate(x').
nf::SctOracle sct_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw nf::ParseError(e.what());
    }
    nf::SctOracle oracle;
    oracle.d = j.at("d").get<int>();
    auto scale = std::make_shared<nf::RidgeSum>(
        j.contains("scale") ? nf::ridge_sum_from_json(j.at("scale").dump())
                            : nf::RidgeSum{});
    auto translate = std::make_shared<nf::RidgeSum>(
        j.contains("translate") ? nf::ridge_sum_from_json(j.at("translate").dump())
                                : nf::RidgeSum{});
    std::shared_ptr<nf::PwlFunction> warp;
    if (j.contains("warp"))
        warp = std::make_shared<nf::PwlFunction>(nf::pwl_from_json(j.at("warp").dump()));
    const int d = oracle.d;
    oracle.tau_d = [scale, translate, warp, d](const Eigen::VectorXd& x) {
        const Eigen::VectorXd prefix = x.head(d - 1);
        const double w = warp ? warp->eval(x[d - 1]) : x[d - 1];
        return std::exp(scale->eval(prefix)) * w + translate->eval(prefix);
    };
    return oracle;
}

int emit_and_gate(const nf::VerifyReport& report, double tol, std::uint64_t seed,
                  const std::string& out_path, const nf::Network* net) {
    nf::VerifyReport r = report;
    r.seed = seed;
    if (net && !out_path.empty()) nf::save_text(out_path, nf::to_json(*net));
    std::cout << nf::to_json(r) << std::endl;
    return r.sup_error <= tol ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"narrowforge: compiles coupling-flow programs into deep narrow "
                 "Leaky-ReLU/ReLU networks and verifies them on grids"};
    app.require_subcommand(1);

    std::string in_path, out_path, box_text = "0:1", oracle_spec, activation_text;
    std::string sct_spec_path;
    double tol = 1e-6;
    int grid = 101, slices = 8, n = 1, m = 1;
    std::uint64_t seed = 0;
    app.add_option("--seed", seed, "seed recorded in reports")->capture_default_str();

    auto* pwl = app.add_subcommand("compile-pwl", "compile an increasing PWL function");
    pwl->add_option("input", in_path)->required();
    pwl->add_option("-o,--output", out_path);
    pwl->add_option("--grid", grid)->capture_default_str();
    pwl->add_option("--tol", tol)->capture_default_str();

    auto* acf = app.add_subcommand("compile-acf", "compile a single-coordinate ACF");
    acf->add_option("input", in_path)->required();
    acf->add_option("-o,--output", out_path);
    acf->add_option("--box", box_text)->capture_default_str();
    acf->add_option("--tol", tol)->capture_default_str();
    acf->add_option("--grid", grid)->capture_default_str();

    auto* inn = app.add_subcommand("compile-inn", "compile an INN program");
    inn->add_option("input", in_path)->required();
    inn->add_option("-o,--output", out_path);
    inn->add_option("--box", box_text)->capture_default_str();
    inn->add_option("--tol", tol)->capture_default_str();
    inn->add_option("--grid", grid)->capture_default_str();

    auto* sct = app.add_subcommand("compile-sct", "compile a single-coordinate transformation");
    sct->add_option("--spec", sct_spec_path)->required();
    sct->add_option("--slices", slices)->capture_default_str();
    sct->add_option("-o,--output", out_path);
    sct->add_option("--box", box_text)->capture_default_str();
    sct->add_option("--tol", tol)->capture_default_str();
    sct->add_option("--grid", grid)->capture_default_str();

    auto* pipe = app.add_subcommand("compile-pipeline", "compile a diffeomorphism target");
    pipe->add_option("input", in_path)->required();
    pipe->add_option("--activation", activation_text)->required();
    pipe->add_option("-o,--output", out_path);
    pipe->add_option("--box", box_text)->capture_default_str();
    pipe->add_option("--tol", tol)->capture_default_str();
    pipe->add_option("--grid", grid)->capture_default_str();

    auto* verify = app.add_subcommand("verify", "grid sup-error of a network vs an oracle");
    verify->add_option("input", in_path)->required();
    verify->add_option("--oracle", oracle_spec)->required();
    verify->add_option("--grid", grid)->capture_default_str();
    verify->add_option("--box", box_text)->capture_default_str();
    verify->add_option("--tol", tol)->capture_default_str();

    auto* bound = app.add_subcommand("bound", "print the width bound max(2n+1,m)+alpha");
    bound->add_option("--n", n)->required();
    bound->add_option("--m", m)->required();
    bound->add_option("--activation", activation_text)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (pwl->parsed()) {
            auto f = nf::pwl_from_json(nf::load_text(in_path));
            nf::Network net = nf::compile_increasing_pwl(f);
            double lo = -10, hi = 10;
            if (f.breakpoints().size() > 0) {
                lo = std::min(lo, f.breakpoints()[0] - 1.0);
                hi = std::max(hi, f.breakpoints()[f.breakpoints().size() - 1] + 1.0);
            }
            nf::Box box = nf::Box::uniform(1, lo, hi);
            auto report = nf::sup_error(
                net,
                [&f](const Eigen::VectorXd& x) {
                    return Eigen::VectorXd::Constant(1, f.eval(x[0])).eval();
                },
                box, grid);
            return emit_and_gate(report, tol, seed, out_path, &net);
        }
        if (acf->parsed()) {
            auto spec = nf::acf_from_json(nf::load_text(in_path));
            nf::Box box = parse_box(box_text, spec.d);
            nf::Network net = nf::compile_acf(spec, box, tol);
            auto report = nf::sup_error(
                net, [&spec](const Eigen::VectorXd& x) { return spec.apply(x); }, box,
                grid);
            return emit_and_gate(report, tol, seed, out_path, &net);
        }
        if (inn->parsed()) {
            auto prog = nf::inn_from_json(nf::load_text(in_path));
            nf::Box box = parse_box(box_text, prog.d);
            nf::Network net = nf::compile_inn(prog, box, tol);
            auto report = nf::sup_error(
                net, [&prog](const Eigen::VectorXd& x) { return prog.apply(x); }, box,
                grid);
            return emit_and_gate(report, tol, seed, out_path, &net);
        }
        if (sct->parsed()) {
            nf::SctOracle oracle = sct_from_json(nf::load_text(sct_spec_path));
            nf::Box box = parse_box(box_text, oracle.d);
            nf::SctOptions opts;
            opts.seed = seed;
            nf::SctReport screport;
            nf::Network net =
                nf::compile_sct_leakyrelu(oracle, box, slices, tol, opts, &screport);
            const nf::SctOracle& orc = oracle;
            auto report = nf::sup_error(
                net,
                [&orc](const Eigen::VectorXd& x) {
                    Eigen::VectorXd y = x;
                    y[orc.d - 1] = orc.tau_d(x);
                    return y;
                },
                box, grid);
            report.per_stage_errors = screport.slice_errors;
            // Gate on the slice errors; between slices only the modulus of
            // continuity is claimed.
            nf::VerifyReport gate = report;
            gate.sup_error = screport.max_slice_error;
            std::uint64_t s = seed;
            if (net.input_dim() && !out_path.empty())
                nf::save_text(out_path, nf::to_json(net));
            gate.seed = s;
            std::cout << nf::to_json(gate) << std::endl;
            return gate.sup_error <= tol ? 0 : 1;
        }
        if (pipe->parsed()) {
            auto target = nf::target_from_json(nf::load_text(in_path));
            nf::ActivationClass cls = parse_activation_class(activation_text);
            nf::Box box = parse_box(box_text, target.n);
            nf::Network net = nf::compile_pipeline(target, cls, box, tol);
            auto report = nf::sup_error(
                net, [&target](const Eigen::VectorXd& x) { return target.apply(x); },
                box, grid);
            return emit_and_gate(report, tol, seed, out_path, &net);
        }
        if (verify->parsed()) {
            nf::Network net = nf::network_from_json(nf::load_text(in_path));
            nf::Box box = parse_box(box_text, net.input_dim());
            auto report = nf::sup_error(net, parse_oracle(oracle_spec), box, grid);
            return emit_and_gate(report, tol, seed, "", nullptr);
        }
        if (bound->parsed()) {
            std::cout << nf::min_width_bound(n, m, parse_activation_class(activation_text))
                      << std::endl;
            return 0;
        }
    } catch (const nf::Error& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    }
    return 2;
}
