// fuchsian: command-line front end over the header library.
//
//   fuchsian <command> [input] [--tol X] [--order N] [--strict] [--seed S] [--out FILE]
//
// Inputs and outputs are JSON documents (see README); "-" means stdin/stdout.
// Exit status: 0 success, 2 validation error, 3 numeric failure,
// 4 Undetermined verdict under --strict.

#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fuchsian/io.hpp"
#include "fuchsian/verify.hpp"

namespace {

using namespace fuchsian;
namespace fio = fuchsian::io;
using fio::Json;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitUndetermined = 4;

struct Flags {
    std::optional<double> tol;
    std::optional<int> order;
    bool strict = false;
    std::uint64_t seed = 0x5eed;
    std::string out = "-";
    std::string input = "-";

    // command specific
    std::string target;
    std::string mode = "ordered";
    std::vector<int> lambda;
    std::vector<double> vector_re;
    std::vector<double> vector_im;
    int puncture = -1;
    double r0 = 0.1;
    double r1 = 1e-4;
    int count = 12;
    double compare_tol = 1e-6;
};

/// Result of a command: the document to write and whether its verdict is Undetermined.
struct Outcome {
    Json doc;
    bool undetermined = false;
};

Json load(const std::string& path) { return fio::parse_text(fio::read_source(path)); }

Json report(const std::string& command, Json body) {
    body["command"] = command;
    return fio::envelope(fio::kind::report, std::move(body));
}

Json rational_json(const Rational& q) { return Json{{"den", q.den}, {"num", q.num}, {"text", q.str()}}; }

InvariantSearchOptions search_options(const Flags& f) {
    InvariantSearchOptions o;
    o.seed = f.seed;
    return o;
}

ComplexVector probe_vector(const Flags& f, Index r) {
    if (f.vector_re.empty()) return ComplexVector::Ones(r) / std::sqrt(static_cast<double>(r));
    if (static_cast<Index>(f.vector_re.size()) != r) throw ValidationError("shape-mismatch", "--vector needs one entry per row");
    if (!f.vector_im.empty() && f.vector_im.size() != f.vector_re.size()) {
        throw ValidationError("shape-mismatch", "--vector-imag must match --vector in length");
    }
    ComplexVector v(r);
    for (Index i = 0; i < r; ++i) {
        const auto k = static_cast<std::size_t>(i);
        v(i) = Complex(f.vector_re[k], f.vector_im.empty() ? 0.0 : f.vector_im[k]);
    }
    return v;
}

// ---- commands ----

Outcome cmd_normlog(const Flags& f) {
    const ComplexMatrix g = fio::matrix_from_json(fio::field(fio::payload(load(f.input), fio::kind::matrix), "matrix"));
    const auto k = norm_log(g).k;
    return {fio::envelope(fio::kind::matrix, Json{{"matrix", fio::to_json(k)}})};
}

Outcome cmd_normal_form(const Flags& f) {
    LocalLogConnection conn = fio::local_connection_from_json(fio::payload(load(f.input), fio::kind::local_connection));
    if (f.order) {
        if (*f.order < 0 || *f.order > conn.order()) {
            throw ValidationError("bad-order", "--order must lie between 0 and the input series order");
        }
        conn = LocalLogConnection(conn.a.truncate(*f.order));
    }
    NormalFormOptions opts;
    if (f.tol) opts.resonance_tol = *f.tol;
    const NormalForm nf = normal_form(conn, opts);
    const auto fc = fundamental_check_report(nf.k, nf.phi);
    const auto conv = convergence_diagnostic(conn, nf);
    Json checks = Json::array();
    for (const auto& c : conv.checks) checks.push_back(Json{{"j", c.j}, {"lhs", c.lhs}, {"ok", c.ok}, {"rhs", c.rhs}});
    return {report("normal-form",
                   Json{{"k", fio::to_json(nf.k)},
                        {"phi", nf.phi.entries()},
                        {"t", fio::to_json(nf.t)},
                        {"m", fio::to_json(nf.m)},
                        {"near_resonances", nf.near_resonances},
                        {"truncated_resonances", nf.truncated_resonances},
                        {"gauge_residual", gauge_residual(conn, nf)},
                        {"fundamental_check", Json{{"deviation", fc.deviation}, {"passed", fc.passed}}},
                        {"convergence", Json{{"all_ok", conv.all_ok},
                                             {"big_c", conv.big_c},
                                             {"c0", conv.c0},
                                             {"checks", checks},
                                             {"d", conv.d},
                                             {"delta", conv.delta},
                                             {"delta_in_range", conv.delta_in_range},
                                             {"eps0", conv.eps0}}}})};
}

WeightedFlatBundle load_bundle(const Flags& f) {
    WeightedFlatBundle b = fio::bundle_from_json(fio::payload(load(f.input), fio::kind::weighted_bundle));
    b.validate(f.tol.value_or(1e-8));
    return b;
}

Outcome cmd_degree(const Flags& f) {
    const auto b = load_bundle(f);
    const long d = degree(b);
    return {report("degree", Json{{"degree", d}, {"rank", b.rank()}, {"slope", rational_json(slope(b))}})};
}

Outcome cmd_semistable(const Flags& f) {
    const auto b = load_bundle(f);
    const auto res = semistable(b, search_options(f));
    Json body{{"verdict", to_string(res.verdict)}, {"total_slope", rational_json(res.total_slope)}, {"reason", res.reason}};
    body["max_sub_slope"] = res.max_sub_slope ? rational_json(*res.max_sub_slope) : Json(nullptr);
    body["witness"] = res.witness ? fio::to_json(*res.witness) : Json(nullptr);
    return {report("semistable", body), res.verdict == Stability::undetermined};
}

Representation load_rep(const Flags& f, const std::string& path) {
    Representation rep = fio::representation_from_json(fio::payload(load(path), fio::kind::representation));
    rep.validate(f.tol.value_or(1e-8));
    return rep;
}

Outcome cmd_synth_commutative(const Flags& f) {
    const auto sys = commutative_fuchsian(load_rep(f, f.input));
    return {fio::envelope(fio::kind::fuchsian_system, fio::to_json(sys))};
}

Outcome cmd_bq_frame(const Flags& f) {
    const auto prob = fio::splitting_problem_from_json(fio::payload(load(f.input), fio::kind::splitting_problem));
    const auto frame = bq_frame(prob.c, prob.q, f.tol.value_or(1e-9));
    return {report("bq-frame", Json{{"sigma", frame.sigma},
                                    {"p", fio::to_json(frame.p)},
                                    {"b", fio::to_json(frame.b)},
                                    {"residual", frame.residual},
                                    {"min_pivot", frame.min_pivot}})};
}

Outcome cmd_solve_weights(const Flags& f) {
    WeightCondition mode;
    if (f.mode == "ordered") {
        mode = WeightCondition::ordered;
    } else if (f.mode == "equal") {
        mode = WeightCondition::equal;
    } else {
        throw ValidationError("bad-mode", "--mode must be 'ordered' or 'equal'");
    }
    const auto sol = solve_weights_parabolic(load_rep(f, f.input), mode);
    Json rho = Json::array();
    for (const auto& row : sol.rho) rho.push_back(fio::to_json(row));
    return {report("solve-weights", Json{{"feasible", sol.feasible},
                                         {"verdict", sol.feasible ? "Solved" : "Undetermined"},
                                         {"mode", to_string(mode)},
                                         {"phi", sol.phi},
                                         {"lambda", sol.lambda},
                                         {"rho", rho},
                                         {"method", sol.method},
                                         {"reason", sol.reason}}),
            !sol.feasible};
}

Outcome cmd_shift_weights(const Flags& f) {
    const auto b = load_bundle(f);
    return {fio::envelope(fio::kind::weighted_bundle, fio::to_json(shift_weights(b, f.lambda)))};
}

Outcome cmd_embed_double(const Flags& f) {
    const auto emb = double_rank_embedding(load_rep(f, f.input));
    return {fio::envelope(fio::kind::representation, fio::to_json(emb.rep))};
}

Outcome cmd_decide_rank3(const Flags& f) {
    const auto d = rank3_decide(load_rep(f, f.input), search_options(f));
    return {report("decide-rank3", Json{{"verdict", to_string(d.verdict)},
                                        {"certificate", d.certificate},
                                        {"puncture", d.puncture},
                                        {"algebra_dim", d.algebra_dim},
                                        {"jordan_blocks", d.jordan_blocks},
                                        {"exponent_sum", fio::to_json(d.exponent_sum)}}),
            d.verdict == Rank3Verdict::undetermined};
}

Outcome cmd_verify(const Flags& f) {
    FuchsianSystem sys = fio::system_from_json(fio::payload(load(f.input), fio::kind::fuchsian_system));
    sys.validate();
    std::optional<Representation> target;
    if (!f.target.empty()) target = load_rep(f, f.target);
    const double tol = f.tol.value_or(1e-10);
    const auto rep = monodromy_report(sys, target ? &*target : nullptr, tol, f.compare_tol);
    Json body{{"basepoint", fio::to_json(rep.basepoint)},
              {"loops", fio::to_json(rep.loops)},
              {"relation_order", rep.relation_order},
              {"product_defect", rep.product_defect},
              {"product_defect_relative", rep.product_defect_relative},
              {"integration_defects", rep.integration_defects},
              {"max_reversal_defect", rep.max_reversal_defect},
              {"compared", rep.compared},
              {"residuals", rep.residuals},
              {"consistent", report_consistent(rep, target ? &*target : nullptr, 10 * tol)}};
    if (rep.compared) {
        body["conjugacy"] = Json{{"found", rep.conjugacy.found},
                                 {"residual", rep.conjugacy.residual},
                                 {"null_dim", rep.conjugacy.null_dim},
                                 {"s", fio::to_json(rep.conjugacy.s)}};
    } else {
        body["conjugacy"] = nullptr;
    }
    return {report("verify", body)};
}

Outcome cmd_growth(const Flags& f) {
    const Json doc = load(f.input);
    const auto radii = geometric_radii(f.r0, f.r1, f.count);
    GrowthEstimate g;
    const std::string k = fio::document_kind(doc);
    if (k == fio::kind::local_connection) {
        const auto conn = fio::local_connection_from_json(fio::payload(doc, k));
        g = growth_exponent(conn, probe_vector(f, conn.rank()), radii);
    } else if (k == fio::kind::fuchsian_system) {
        const auto sys = fio::system_from_json(fio::payload(doc, k));
        sys.validate();
        if (f.puncture < 0 || static_cast<std::size_t>(f.puncture) >= sys.size()) {
            throw ValidationError("bad-puncture", "--puncture must index a puncture of the system");
        }
        g = growth_exponent(sys, static_cast<std::size_t>(f.puncture), probe_vector(f, sys.rank()), radii);
    } else {
        throw ValidationError("wrong-kind", "growth takes a local-connection or fuchsian-system document");
    }
    return {report("growth", Json{{"exponent", g.exponent},
                                  {"slope", g.slope},
                                  {"half_width", g.half_width},
                                  {"reliable", g.reliable},
                                  {"verdict", g.reliable ? "Reliable" : "Undetermined"},
                                  {"log_radius", g.log_radius},
                                  {"log_norm", g.log_norm}}),
            !g.reliable};
}

void print_error(const char* category, const std::string& reason, const std::string& message) {
    const Json err{{"error", Json{{"category", category}, {"message", message}, {"reason", reason}}}};
    std::cerr << err.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Local normal forms, weighted flat bundles and Fuchsian systems on the punctured sphere"};
    app.require_subcommand(1, 1);
    app.fallthrough();

    Flags f;
    app.add_option("--tol", f.tol, "tolerance (defaults depend on the command)");
    app.add_option("--order", f.order, "truncation order for series inputs");
    app.add_flag("--strict", f.strict, "exit with status 4 on an Undetermined verdict");
    app.add_option("--seed", f.seed, "seed for randomized searches");
    app.add_option("--out", f.out, "output path, '-' for stdout");

    using Handler = std::function<Outcome(const Flags&)>;
    std::map<CLI::App*, Handler> handlers;
    const auto add = [&](const char* name, const char* help, Handler h) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("input", f.input, "input document, '-' for stdin");
        handlers[sub] = std::move(h);
        return sub;
    };

    add("normlog", "normalized logarithm of a matrix document", cmd_normlog);
    add("normal-form", "local normal form of a logarithmic connection", cmd_normal_form);
    add("degree", "degree and slope of a weighted flat bundle", cmd_degree);
    add("semistable", "stability verdict of a weighted flat bundle", cmd_semistable);
    add("synth-commutative", "Fuchsian system realizing a commuting representation", cmd_synth_commutative);
    add("bq-frame", "permutation and triangular frame for a splitting problem", cmd_bq_frame);
    add("solve-weights", "integral weights for an upper-triangular representation", cmd_solve_weights)
        ->add_option("--mode", f.mode, "ordered or equal");
    add("shift-weights", "shift every weight at puncture j by lambda_j", cmd_shift_weights)
        ->add_option("--lambda", f.lambda, "one integer per puncture")
        ->required()
        ->delimiter(',')->allow_extra_args(false);
    add("embed-double", "rank-doubling embedding with a cyclic eigenvector", cmd_embed_double);
    add("decide-rank3", "realizability verdict for a rank-3 representation", cmd_decide_rank3);
    CLI::App* verify = add("verify", "integrate monodromy of a Fuchsian system", cmd_verify);
    verify->add_option("--target", f.target, "representation to compare against");
    verify->add_option("--compare-tol", f.compare_tol, "tolerance of the conjugacy comparison");
    CLI::App* growth = add("growth", "growth exponent of a flat section at a puncture", cmd_growth);
    growth->add_option("--vector", f.vector_re, "real parts of the probe vector")->delimiter(',')->allow_extra_args(false);
    growth->add_option("--vector-imag", f.vector_im, "imaginary parts of the probe vector")->delimiter(',')->allow_extra_args(false);
    growth->add_option("--puncture", f.puncture, "puncture index for fuchsian-system input");
    growth->add_option("--r0", f.r0, "largest radius");
    growth->add_option("--r1", f.r1, "smallest radius");
    growth->add_option("--count", f.count, "number of radii");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("usage", "usage", e.what());
        return kExitValidation;
    }

    try {
        const Outcome result = handlers.at(app.get_subcommands().front())(f);
        fio::write_sink(f.out, fio::dump(result.doc));
        return result.undetermined && f.strict ? kExitUndetermined : kExitOk;
    } catch (const ValidationError& e) {
        print_error("validation", e.reason(), e.what());
        return kExitValidation;
    } catch (const NumericError& e) {
        print_error("numeric", e.reason(), e.what());
        return kExitNumeric;
    } catch (const std::exception& e) {
        print_error("numeric", "internal", e.what());
        return kExitNumeric;
    }
}
