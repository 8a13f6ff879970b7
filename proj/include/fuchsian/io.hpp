#pragma once

// JSON documents for the command-line tool. Every document is an envelope
//   {"kind": <tag>, "payload": {...}, "version": "1"}
// Complex numbers are [re, im], matrices are row-major nested arrays and
// series are {"order": N, "coeffs": [A^0, ..., A^N]}. Object keys are sorted
// and floats use the shortest representation that reads back to the same
// double, so parse followed by dump reproduces a canonical document exactly.

#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fuchsian/bundles.hpp"
#include "fuchsian/local_forms.hpp"
#include "fuchsian/synth.hpp"

namespace fuchsian::io {

using Json = nlohmann::json;

inline constexpr const char* kFormatVersion = "1";

namespace kind {
inline constexpr const char* matrix = "matrix";
inline constexpr const char* representation = "representation";
inline constexpr const char* local_connection = "local-connection";
inline constexpr const char* weighted_bundle = "weighted-bundle";
inline constexpr const char* fuchsian_system = "fuchsian-system";
inline constexpr const char* splitting_problem = "splitting-problem";
inline constexpr const char* report = "report";
}  // namespace kind

inline bool known_kind(const std::string& k) {
    for (const char* s : {kind::matrix, kind::representation, kind::local_connection, kind::weighted_bundle,
                          kind::fuchsian_system, kind::splitting_problem, kind::report}) {
        if (k == s) return true;
    }
    return false;
}

[[noreturn]] inline void schema_error(const std::string& what) { throw ValidationError("schema", what); }

inline const Json& field(const Json& obj, const char* key) {
    if (!obj.is_object()) schema_error(std::string("expected an object holding '") + key + "'");
    const auto it = obj.find(key);
    if (it == obj.end()) schema_error(std::string("missing field '") + key + "'");
    return *it;
}

// ---- scalars ----

inline Json to_json(Complex z) { return Json::array({z.real(), z.imag()}); }

/// Accepts [re, im] or a bare real number.
inline Complex complex_from_json(const Json& j) {
    if (j.is_number()) return {j.get<double>(), 0.0};
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
        schema_error("complex numbers are [re, im]");
    }
    return {j[0].get<double>(), j[1].get<double>()};
}

inline Json to_json(const std::vector<Complex>& v) {
    Json out = Json::array();
    for (Complex z : v) out.push_back(to_json(z));
    return out;
}

inline std::vector<Complex> complex_list_from_json(const Json& j) {
    if (!j.is_array()) schema_error("expected an array of complex numbers");
    std::vector<Complex> out;
    for (const auto& e : j) out.push_back(complex_from_json(e));
    return out;
}

template <class Int>
std::vector<Int> int_list_from_json(const Json& j) {
    if (!j.is_array()) schema_error("expected an array of integers");
    std::vector<Int> out;
    for (const auto& e : j) {
        if (!e.is_number_integer()) schema_error("expected an integer");
        out.push_back(e.get<Int>());
    }
    return out;
}

// ---- matrices and series ----

inline Json to_json(const ComplexMatrix& m) {
    Json rows = Json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Index k = 0; k < m.cols(); ++k) row.push_back(to_json(m(i, k)));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Json to_json(const ComplexVector& v) {
    Json out = Json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(to_json(v(i)));
    return out;
}

inline ComplexMatrix matrix_from_json(const Json& j) {
    if (!j.is_array() || j.empty()) schema_error("matrices are non-empty arrays of rows");
    const std::size_t rows = j.size();
    if (!j[0].is_array() || j[0].empty()) schema_error("matrix rows must be non-empty arrays");
    const std::size_t cols = j[0].size();
    ComplexMatrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (std::size_t i = 0; i < rows; ++i) {
        if (!j[i].is_array() || j[i].size() != cols) schema_error("matrix rows must have equal length");
        for (std::size_t k = 0; k < cols; ++k) m(static_cast<Index>(i), static_cast<Index>(k)) = complex_from_json(j[i][k]);
    }
    return m;
}

inline ComplexVector vector_from_json(const Json& j) {
    const auto v = complex_list_from_json(j);
    if (v.empty()) schema_error("vectors must be non-empty");
    ComplexVector out(static_cast<Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Index>(i)) = v[i];
    return out;
}

inline Json to_json(const std::vector<ComplexMatrix>& ms) {
    Json out = Json::array();
    for (const auto& m : ms) out.push_back(to_json(m));
    return out;
}

inline std::vector<ComplexMatrix> matrix_list_from_json(const Json& j) {
    if (!j.is_array()) schema_error("expected an array of matrices");
    std::vector<ComplexMatrix> out;
    for (const auto& e : j) out.push_back(matrix_from_json(e));
    return out;
}

inline Json to_json(const MatrixSeries& s) {
    return Json{{"order", s.order()}, {"coeffs", to_json(s.coeffs())}};
}

inline MatrixSeries series_from_json(const Json& j) {
    const Json& order = field(j, "order");
    if (!order.is_number_integer() || order.get<long>() < 0) schema_error("series order must be a non-negative integer");
    auto coeffs = matrix_list_from_json(field(j, "coeffs"));
    if (static_cast<long>(coeffs.size()) != order.get<long>() + 1) {
        schema_error("series must list order + 1 coefficients");
    }
    return MatrixSeries(std::move(coeffs));
}

// ---- domain objects ----

inline Json to_json(const Representation& rep) {
    return Json{{"basepoint", to_json(rep.basepoint)},
                {"matrices", to_json(rep.matrices)},
                {"punctures", to_json(rep.punctures)}};
}

/// Punctures default to 0, 1, ..., n-1 and the basepoint to 0 when omitted.
inline Representation representation_from_json(const Json& j) {
    Representation rep;
    rep.matrices = matrix_list_from_json(field(j, "matrices"));
    if (j.contains("punctures")) {
        rep.punctures = complex_list_from_json(j["punctures"]);
    } else {
        for (std::size_t k = 0; k < rep.matrices.size(); ++k) rep.punctures.emplace_back(static_cast<double>(k), 0.0);
    }
    if (j.contains("basepoint")) rep.basepoint = complex_from_json(j["basepoint"]);
    return rep;
}

inline Json to_json(const LocalLogConnection& c) { return Json{{"series", to_json(c.a)}}; }

inline LocalLogConnection local_connection_from_json(const Json& j) {
    return LocalLogConnection(series_from_json(field(j, "series")));
}

inline Json to_json(const WeightedFlag& f) {
    Json dims = Json::array();
    for (Index d : f.dims()) dims.push_back(d);
    return Json{{"basis", to_json(f.basis())}, {"dims", dims}, {"weights", f.weights()}};
}

inline WeightedFlag flag_from_json(const Json& j) {
    return WeightedFlag(matrix_from_json(field(j, "basis")), int_list_from_json<Index>(field(j, "dims")),
                        int_list_from_json<int>(field(j, "weights")));
}

inline Json to_json(const WeightedFlatBundle& b) {
    Json flags = Json::array();
    for (const auto& f : b.flags) flags.push_back(to_json(f));
    return Json{{"flags", flags}, {"representation", to_json(b.rep)}};
}

inline WeightedFlatBundle bundle_from_json(const Json& j) {
    WeightedFlatBundle b;
    b.rep = representation_from_json(field(j, "representation"));
    const Json& flags = field(j, "flags");
    if (!flags.is_array()) schema_error("flags must be an array");
    for (const auto& f : flags) b.flags.push_back(flag_from_json(f));
    return b;
}

inline Json to_json(const FuchsianSystem& sys) {
    return Json{{"punctures", to_json(sys.punctures)}, {"residues", to_json(sys.residues)}};
}

inline FuchsianSystem system_from_json(const Json& j) {
    FuchsianSystem sys;
    sys.punctures = complex_list_from_json(field(j, "punctures"));
    sys.residues = matrix_list_from_json(field(j, "residues"));
    return sys;
}

/// Input of the splitting-frame construction: a splitting type and Q(z).
struct SplittingProblem {
    SplittingType c;
    MatrixSeries q;
};

inline Json to_json(const SplittingProblem& p) {
    return Json{{"series", to_json(p.q)}, {"splitting_type", p.c.c}};
}

inline SplittingProblem splitting_problem_from_json(const Json& j) {
    return {SplittingType(int_list_from_json<int>(field(j, "splitting_type"))), series_from_json(field(j, "series"))};
}

// ---- envelope ----

inline Json envelope(const std::string& k, Json payload) {
    return Json{{"kind", k}, {"payload", std::move(payload)}, {"version", kFormatVersion}};
}

/// Canonical text: two-space indent, sorted keys, trailing newline.
inline std::string dump(const Json& doc) { return doc.dump(2) + "\n"; }

inline Json parse_text(const std::string& text) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ValidationError("parse-error", e.what());
    }
}

/// Checks the envelope and returns it; `expected` empty accepts any known kind.
inline const Json& check_envelope(const Json& doc, const std::string& expected = {}) {
    const Json& k = field(doc, "kind");
    const Json& v = field(doc, "version");
    field(doc, "payload");
    if (!k.is_string() || !known_kind(k.get<std::string>())) schema_error("unknown document kind");
    if (!v.is_string() || v.get<std::string>() != kFormatVersion) {
        throw ValidationError("unsupported-version", "document version must be \"1\"");
    }
    if (!expected.empty() && k.get<std::string>() != expected) {
        throw ValidationError("wrong-kind", "expected a '" + expected + "' document, got '" + k.get<std::string>() + "'");
    }
    return doc;
}

inline std::string document_kind(const Json& doc) { return check_envelope(doc)["kind"].get<std::string>(); }

inline const Json& payload(const Json& doc, const std::string& expected) { return check_envelope(doc, expected)["payload"]; }

/// Parses a document and rebuilds it through the typed objects of its kind.
/// On canonical input the result dumps to the same bytes.
inline Json canonicalize(const Json& doc) {
    const std::string k = document_kind(doc);
    const Json& p = doc["payload"];
    if (k == kind::matrix) return envelope(k, Json{{"matrix", to_json(matrix_from_json(field(p, "matrix")))}});
    if (k == kind::representation) return envelope(k, to_json(representation_from_json(p)));
    if (k == kind::local_connection) return envelope(k, to_json(local_connection_from_json(p)));
    if (k == kind::weighted_bundle) return envelope(k, to_json(bundle_from_json(p)));
    if (k == kind::fuchsian_system) return envelope(k, to_json(system_from_json(p)));
    if (k == kind::splitting_problem) return envelope(k, to_json(splitting_problem_from_json(p)));
    if (!p.is_object() || !p.contains("command")) schema_error("report payloads carry a 'command' field");
    return envelope(k, p);
}

inline std::string read_source(const std::string& path) {
    if (path == "-") {
        return std::string(std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>());
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("io-error", "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_sink(const std::string& path, const std::string& text) {
    if (path == "-") {
        std::cout << text;
        std::cout.flush();
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("io-error", "cannot write " + path);
    out << text;
}

}  // namespace fuchsian::io
