#include "narrowforge/serialize.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "narrowforge/error.hpp"

namespace narrowforge {

using nlohmann::json;

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    if (!j.is_array()) throw ParseError("expected a matrix (array of arrays)");
    const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
    Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        if (static_cast<Eigen::Index>(j[i].size()) != cols)
            throw ParseError("ragged matrix rows");
        for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
    }
    return m;
}

Eigen::VectorXd vector_from_json(const json& j) {
    if (!j.is_array()) throw ParseError("expected a vector (array)");
    Eigen::VectorXd v(j.size());
    for (size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
    return v;
}

json affine_to_json(const AffineMap& a) {
    return json{{"weight", matrix_to_json(a.weight)}, {"bias", vector_to_json(a.bias)}};
}

AffineMap affine_from_json(const json& j) {
    return AffineMap(matrix_from_json(j.at("weight")), vector_from_json(j.at("bias")));
}

json activation_to_json(const ActivationTag& act) {
    switch (act.kind()) {
        case ActivationKind::LeakyRelu: return json{{"leaky_relu", act.beta()}};
        case ActivationKind::Relu: return json("relu");
        case ActivationKind::Identity: return json("identity");
        case ActivationKind::Custom: return json{{"custom", act.name()}};
    }
    return json("identity");
}

ActivationTag activation_from_json(const json& j) {
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "relu") return ActivationTag::relu();
        if (s == "identity") return ActivationTag::identity();
        throw ParseError("unknown activation '" + s + "'");
    }
    if (j.is_object()) {
        if (j.contains("leaky_relu"))
            return ActivationTag::leaky_relu(j.at("leaky_relu").get<double>());
        if (j.contains("custom"))
            return ActivationTag::custom(j.at("custom").get<std::string>());
    }
    throw ParseError("malformed activation tag");
}

json parse(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(e.what());
    }
}

json network_to_json_obj(const Network& net) {
    json layers = json::array();
    for (const Layer& l : net.layers()) {
        json jl = affine_to_json(l.affine);
        jl["activation"] = activation_to_json(l.activation);
        layers.push_back(std::move(jl));
    }
    return json{{"input_dim", net.input_dim()},
                {"layers", std::move(layers)},
                {"final", affine_to_json(net.final_affine())}};
}

Network network_from_json_obj(const json& j) {
    try {
        const int input_dim = j.at("input_dim").get<int>();
        std::vector<Layer> layers;
        for (const json& jl : j.at("layers"))
            layers.push_back(Layer{affine_from_json(jl),
                                   activation_from_json(jl.at("activation"))});
        return Network(input_dim, std::move(layers), affine_from_json(j.at("final")));
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed network: ") + e.what());
    }
}

json ridge_sum_to_json_obj(const RidgeSum& sum) {
    json terms = json::array();
    for (const RidgeTerm& t : sum.terms)
        terms.push_back(json{{"a", t.a},
                             {"b", vector_to_json(t.b)},
                             {"c", t.c},
                             {"beta", t.beta}});
    return json{{"constant", sum.constant}, {"terms", std::move(terms)}};
}

RidgeSum ridge_sum_from_json_obj(const json& j) {
    RidgeSum sum;
    sum.constant = j.at("constant").get<double>();
    for (const json& jt : j.at("terms"))
        sum.terms.push_back(RidgeTerm{jt.at("a").get<double>(),
                                      vector_from_json(jt.at("b")),
                                      jt.at("c").get<double>(),
                                      jt.at("beta").get<double>()});
    return sum;
}

json inn_to_json_obj(const InnProgram& prog) {
    json stages = json::array();
    for (const InnStage& stage : prog.stages) {
        if (const auto* aff = std::get_if<AffineMap>(&stage)) {
            stages.push_back(json{{"affine", affine_to_json(*aff)}});
        } else if (const auto* acf = std::get_if<AcfSpec>(&stage)) {
            stages.push_back(json{{"acf",
                                   json{{"s", ridge_sum_to_json_obj(acf->s)},
                                        {"t", ridge_sum_to_json_obj(acf->t)}}}});
        } else {
            stages.push_back(
                json{{"sct", network_to_json_obj(std::get<SctHandle>(stage).net)}});
        }
    }
    return json{{"d", prog.d}, {"stages", std::move(stages)}};
}

InnProgram inn_from_json_obj(const json& j) {
    InnProgram prog;
    prog.d = j.at("d").get<int>();
    for (const json& js : j.at("stages")) {
        if (js.contains("affine")) {
            prog.stages.emplace_back(affine_from_json(js.at("affine")));
        } else if (js.contains("acf")) {
            AcfSpec spec;
            spec.d = prog.d;
            spec.s = ridge_sum_from_json_obj(js.at("acf").at("s"));
            spec.t = ridge_sum_from_json_obj(js.at("acf").at("t"));
            prog.stages.emplace_back(std::move(spec));
        } else if (js.contains("sct")) {
            prog.stages.emplace_back(SctHandle{network_from_json_obj(js.at("sct"))});
        } else {
            throw ParseError("unknown INN stage kind");
        }
    }
    return prog;
}

}  // namespace

std::string to_json(const Network& net) { return network_to_json_obj(net).dump(2); }

Network network_from_json(const std::string& text) {
    return network_from_json_obj(parse(text));
}

std::string to_json(const PwlFunction& f) {
    json j{{"breakpoints", vector_to_json(f.breakpoints())},
           {"slopes", vector_to_json(f.slopes())},
           {"anchor", json::array({f.anchor_x(), f.anchor_y()})}};
    return j.dump(2);
}

PwlFunction pwl_from_json(const std::string& text) {
    const json j = parse(text);
    try {
        const json& anchor = j.at("anchor");
        if (anchor.size() != 2) throw ParseError("anchor must be [x0, f0]");
        return PwlFunction(vector_from_json(j.at("breakpoints")),
                           vector_from_json(j.at("slopes")), anchor[0].get<double>(),
                           anchor[1].get<double>());
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed pwl: ") + e.what());
    }
}

std::string to_json(const RidgeSum& sum) { return ridge_sum_to_json_obj(sum).dump(2); }

RidgeSum ridge_sum_from_json(const std::string& text) {
    try {
        return ridge_sum_from_json_obj(parse(text));
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed ridge sum: ") + e.what());
    }
}

std::string to_json(const AcfSpec& spec) {
    json j{{"d", spec.d},
           {"s", ridge_sum_to_json_obj(spec.s)},
           {"t", ridge_sum_to_json_obj(spec.t)}};
    return j.dump(2);
}

AcfSpec acf_from_json(const std::string& text) {
    const json j = parse(text);
    try {
        AcfSpec spec;
        spec.d = j.at("d").get<int>();
        spec.s = ridge_sum_from_json_obj(j.at("s"));
        spec.t = ridge_sum_from_json_obj(j.at("t"));
        return spec;
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed acf: ") + e.what());
    }
}

std::string to_json(const InnProgram& prog) { return inn_to_json_obj(prog).dump(2); }

InnProgram inn_from_json(const std::string& text) {
    try {
        return inn_from_json_obj(parse(text));
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed inn program: ") + e.what());
    }
}

std::string to_json(const DiffeoTarget& target) {
    json j{{"n", target.n}, {"m", target.m}, {"program", inn_to_json_obj(target.program)}};
    return j.dump(2);
}

DiffeoTarget target_from_json(const std::string& text) {
    const json j = parse(text);
    try {
        DiffeoTarget t;
        t.n = j.at("n").get<int>();
        t.m = j.at("m").get<int>();
        t.program = inn_from_json_obj(j.at("program"));
        return t;
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed target: ") + e.what());
    }
}

std::string to_json(const SliceTable& table) {
    json grid = json::array();
    for (Eigen::Index p = 0; p < table.prefix_grid.rows(); ++p)
        grid.push_back(vector_to_json(table.prefix_grid.row(p).transpose()));
    json u = json::array();
    for (Eigen::Index i = 0; i < table.u.rows(); ++i)
        u.push_back(vector_to_json(table.u.row(i).transpose()));
    return json{{"N", table.N}, {"prefix_grid", std::move(grid)}, {"u", std::move(u)}}
        .dump(2);
}

std::string to_json(const VerifyReport& report) {
    json j{{"sup_error", report.sup_error},
           {"argmax", vector_to_json(report.argmax)},
           {"grid_res", report.grid_res},
           {"width", report.width},
           {"depth", report.depth},
           {"seed", report.seed},
           {"wall_time_s", report.wall_time_s}};
    json stages = json::array();
    for (double e : report.per_stage_errors) stages.push_back(e);
    j["per_stage_errors"] = std::move(stages);
    return j.dump(2);
}

std::string load_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void save_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << text;
}

}  // namespace narrowforge
