#pragma once
// JSON and CSV serialization. Infinite bounds are written as null; numbers go
// through nlohmann's shortest round-trip formatting, CSV through %.17g.

#include "bvd/uniqueness.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>

namespace bvd::io {

using json = nlohmann::json;

namespace detail {

inline std::string at(const std::string& path, const std::string& msg) { return "field '" + path + "': " + msg; }

inline const json& require(const json& j, const std::string& key, const std::string& path) {
    if (!j.is_object()) throw ValidationError(at(path, "expected an object"));
    auto it = j.find(key);
    if (it == j.end()) throw ValidationError(at(path.empty() ? key : path + "." + key, "missing"));
    return *it;
}

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

inline double number(const json& j, const std::string& path) {
    if (j.is_null()) throw ValidationError(at(path, "expected a number, got null"));
    if (!j.is_number()) throw ValidationError(at(path, "expected a number"));
    return j.get<double>();
}

inline std::string string(const json& j, const std::string& path) {
    if (!j.is_string()) throw ValidationError(at(path, "expected a string"));
    return j.get<std::string>();
}

inline Vector vector(const json& j, const std::string& path, bool null_is_inf = false, double inf_sign = 1.0) {
    if (!j.is_array()) throw ValidationError(at(path, "expected an array"));
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string p = path + "[" + std::to_string(i) + "]";
        if (null_is_inf && j[i].is_null())
            v[static_cast<Eigen::Index>(i)] = inf_sign * kInf;
        else
            v[static_cast<Eigen::Index>(i)] = number(j[i], p);
    }
    return v;
}

inline Matrix matrix(const json& j, const std::string& path) {
    if (!j.is_array() || j.empty()) throw ValidationError(at(path, "expected a non-empty array of rows"));
    const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
    Matrix M(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < j.size(); ++r) {
        const Vector row = vector(j[r], path + "[" + std::to_string(r) + "]");
        if (static_cast<std::size_t>(row.size()) != cols) throw ValidationError(at(path, "ragged matrix rows"));
        M.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    return M;
}

inline json to_json(const Vector& v, bool inf_as_null = false) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (inf_as_null && std::isinf(v[i]))
            a.push_back(nullptr);
        else
            a.push_back(v[i]);
    }
    return a;
}

inline json to_json(const Matrix& M) {
    json a = json::array();
    for (Eigen::Index r = 0; r < M.rows(); ++r) a.push_back(to_json(Vector(M.row(r).transpose())));
    return a;
}

inline bool same(const Vector& a, const Vector& b) { return a.size() == b.size() && (a.array() == b.array()).all(); }

}  // namespace detail

// --- Domain ------------------------------------------------------------------

inline json to_json(const Domain& d) {
    json j{{"dim", d.dim()}, {"lower", detail::to_json(d.lower(), true)}, {"upper", detail::to_json(d.upper(), true)}};
    if (d.has_equality()) j["eq"] = {{"W", detail::to_json(d.eq_lhs())}, {"b", detail::to_json(d.eq_rhs())}};
    if (d.grid()) j["grid"] = *d.grid();
    return j;
}

inline Domain domain_from_json(const json& j, const std::string& path = "domain") {
    if (!j.is_object()) throw ValidationError(detail::at(path, "expected an object"));
    const double dimv = detail::number(detail::require(j, "dim", path), detail::join(path, "dim"));
    if (dimv < 1 || dimv != std::floor(dimv)) throw ValidationError(detail::at(detail::join(path, "dim"), "must be a positive integer"));
    const int dim = static_cast<int>(dimv);
    Domain d = Domain::unbounded(dim);
    if (j.contains("lower") || j.contains("upper")) {
        const Vector lo = j.contains("lower") ? detail::vector(j["lower"], detail::join(path, "lower"), true, -1.0)
                                              : Vector::Constant(dim, -kInf);
        const Vector hi = j.contains("upper") ? detail::vector(j["upper"], detail::join(path, "upper"), true, 1.0)
                                              : Vector::Constant(dim, kInf);
        if (lo.size() != dim || hi.size() != dim)
            throw ValidationError(detail::at(path, "lower/upper length must equal dim"));
        try {
            d = Domain::box(lo, hi);
        } catch (const ValidationError& e) {
            throw ValidationError(detail::at(path, e.what()));
        }
    }
    if (j.contains("eq")) {
        const std::string p = detail::join(path, "eq");
        const Matrix W = detail::matrix(detail::require(j["eq"], "W", p), p + ".W");
        const Vector b = detail::vector(detail::require(j["eq"], "b", p), p + ".b");
        try {
            d = d.with_equality(W, b);
        } catch (const ValidationError& e) {
            throw ValidationError(detail::at(p, e.what()));
        }
    }
    if (j.contains("grid")) {
        const Vector g = detail::vector(j["grid"], detail::join(path, "grid"));
        d = d.with_grid(std::vector<double>(g.data(), g.data() + g.size()));
    }
    return d;
}

// --- Ensembles ---------------------------------------------------------------

inline json to_json(const WeightedEnsemble& e) {
    json pts = json::array();
    for (const auto& p : e.points()) pts.push_back(detail::to_json(p));
    return {{"points", pts}, {"weights", e.weights()}};
}

inline WeightedEnsemble ensemble_from_json(const json& j, const std::string& path = "ensemble") {
    const json& pts = detail::require(j, "points", path);
    if (!pts.is_array() || pts.empty()) throw ValidationError(detail::at(detail::join(path, "points"), "expected a non-empty array"));
    std::vector<Point> points;
    for (std::size_t i = 0; i < pts.size(); ++i)
        points.push_back(detail::vector(pts[i], detail::join(path, "points") + "[" + std::to_string(i) + "]"));
    try {
        if (!j.contains("weights")) return make_ensemble(std::move(points));
        const Vector w = detail::vector(j["weights"], detail::join(path, "weights"));
        return make_ensemble(std::move(points), std::vector<double>(w.data(), w.data() + w.size()));
    } catch (const ValidationError& e) {
        throw ValidationError(detail::at(path, e.what()));
    }
}

// --- Divergence specs --------------------------------------------------------

struct DivergenceSpec {
    std::string name;
    catalog::Params params;
    /// Parameters explicitly given, kept so the spec re-serializes as written.
    json raw_params = json::object();

    CatalogEntry build() const { return catalog::make(name, params); }
};

inline DivergenceSpec divergence_spec_from_json(const json& j, const std::string& path = "divergence") {
    DivergenceSpec s;
    const json& name = detail::require(j, "name", path);
    if (!name.is_string()) throw ValidationError(detail::at(detail::join(path, "name"), "expected a string"));
    s.name = name.get<std::string>();
    const auto& names = catalog::names();
    if (std::find(names.begin(), names.end(), s.name) == names.end())
        throw ValidationError(detail::at(detail::join(path, "name"), "unknown divergence '" + s.name + "'"));
    const std::string pp = detail::join(path, "params");
    if (j.contains("params")) {
        const json& p = j["params"];
        if (!p.is_object()) throw ValidationError(detail::at(pp, "expected an object"));
        s.raw_params = p;
        for (const auto& [key, val] : p.items()) {
            const std::string kp = pp + "." + key;
            if (key == "d") {
                const double d = detail::number(val, kp);
                if (d < 1 || d != std::floor(d)) throw ValidationError(detail::at(kp, "must be a positive integer"));
                s.params.d = static_cast<int>(d);
            } else if (key == "alpha") {
                s.params.alpha = detail::number(val, kp);
            } else if (key == "epsilon") {
                s.params.epsilon = detail::number(val, kp);
            } else if (key == "K") {
                s.params.K = detail::matrix(val, kp);
            } else if (key == "map") {
                if (!val.is_string()) throw ValidationError(detail::at(kp, "expected a string"));
                s.params.map = val.get<std::string>();
            } else if (key == "levels") {
                const Vector v = detail::vector(val, kp);
                s.params.levels.assign(v.data(), v.data() + v.size());
            } else {
                throw ValidationError(detail::at(kp, "unknown parameter"));
            }
        }
    }
    if (s.params.K && !s.raw_params.contains("d"))
        s.params.d = static_cast<int>(s.params.K->rows());
    if (j.contains("domain")) s.params.domain = domain_from_json(j["domain"], detail::join(path, "domain"));
    if (s.params.domain && !s.raw_params.contains("d") && !s.params.K) s.params.d = s.params.domain->dim();
    return s;
}

inline json to_json(const DivergenceSpec& s) {
    json j{{"name", s.name}, {"params", s.raw_params}};
    if (s.params.domain) j["domain"] = to_json(*s.params.domain);
    return j;
}

/// Description of a built divergence: name, parameters, domain, and whether
/// the dual map is closed form or inverted by Newton iteration.
inline json describe(const CatalogEntry& e) {
    if (const auto* d = std::get_if<GBregmanDivergence>(&e)) {
        json p = json::object();
        for (const auto& [k, v] : d->params()) p[k] = v;
        return {{"name", d->name()},
                {"params", p},
                {"domain", to_json(d->domain())},
                {"kind", "g_bregman"},
                {"metadata", {{"dual", d->dual_is_newton() ? "newton" : "closed_form"}}}};
    }
    const auto& l = std::get<LossFunction>(e);
    return {{"name", l.name}, {"domain", to_json(l.domain)}, {"kind", "loss"}, {"metadata", {{"smooth", l.smooth}}}};
}

// --- Centroids ---------------------------------------------------------------

inline CentroidMethod centroid_method_from_string(const std::string& s) {
    for (auto m : {CentroidMethod::closed_form, CentroidMethod::lagrange, CentroidMethod::brute_force})
        if (s == to_string(m)) return m;
    throw ValidationError("unknown centroid method: " + s);
}

inline json to_json(const CentroidResult& r) {
    return {{"point", detail::to_json(r.point)},
            {"multipliers", detail::to_json(r.multipliers)},
            {"objective", r.objective},
            {"method", to_string(r.method)},
            {"non_unique", r.non_unique},
            {"warnings", r.warnings}};
}

inline CentroidResult centroid_from_json(const json& j, const std::string& path = "centroid") {
    CentroidResult r;
    r.point = detail::vector(detail::require(j, "point", path), detail::join(path, "point"));
    r.multipliers = detail::vector(detail::require(j, "multipliers", path), detail::join(path, "multipliers"));
    r.objective = detail::number(detail::require(j, "objective", path), detail::join(path, "objective"));
    r.method = centroid_method_from_string(detail::require(j, "method", path).get<std::string>());
    r.non_unique = detail::require(j, "non_unique", path).get<bool>();
    if (j.contains("warnings")) r.warnings = j["warnings"].get<std::vector<std::string>>();
    return r;
}

inline bool same(const CentroidResult& a, const CentroidResult& b) {
    return detail::same(a.point, b.point) && detail::same(a.multipliers, b.multipliers) && a.objective == b.objective &&
           a.method == b.method && a.non_unique == b.non_unique && a.warnings == b.warnings;
}

// --- Decomposition reports ---------------------------------------------------

inline json to_json(const DecompositionReport& r) {
    json j{{"divergence", r.divergence},
           {"d", r.d},
           {"n_labels", r.n_labels},
           {"n_preds", r.n_preds},
           {"expected_loss", r.expected_loss},
           {"intrinsic_noise", r.intrinsic_noise},
           {"bias", r.bias},
           {"variance", r.variance},
           {"gap", r.gap},
           {"central_label", detail::to_json(r.central_label)},
           {"central_prediction", detail::to_json(r.central_prediction)},
           {"multipliers", r.multipliers ? detail::to_json(*r.multipliers) : json(nullptr)},
           {"method", r.method},
           {"non_unique", r.non_unique},
           {"warnings", r.warnings}};
    return j;
}

inline DecompositionReport report_from_json(const json& j, const std::string& path = "report") {
    DecompositionReport r;
    auto num = [&](const char* k) { return detail::number(detail::require(j, k, path), detail::join(path, k)); };
    r.divergence = detail::require(j, "divergence", path).get<std::string>();
    r.d = static_cast<int>(num("d"));
    r.n_labels = static_cast<std::size_t>(num("n_labels"));
    r.n_preds = static_cast<std::size_t>(num("n_preds"));
    r.expected_loss = num("expected_loss");
    r.intrinsic_noise = num("intrinsic_noise");
    r.bias = num("bias");
    r.variance = num("variance");
    r.gap = num("gap");
    r.central_label = detail::vector(detail::require(j, "central_label", path), detail::join(path, "central_label"));
    r.central_prediction =
        detail::vector(detail::require(j, "central_prediction", path), detail::join(path, "central_prediction"));
    if (j.contains("multipliers") && !j["multipliers"].is_null())
        r.multipliers = detail::vector(j["multipliers"], detail::join(path, "multipliers"));
    r.method = detail::require(j, "method", path).get<std::string>();
    r.non_unique = detail::require(j, "non_unique", path).get<bool>();
    if (j.contains("warnings")) r.warnings = j["warnings"].get<std::vector<std::string>>();
    return r;
}

inline bool same(const DecompositionReport& a, const DecompositionReport& b) {
    const bool mult = a.multipliers.has_value() == b.multipliers.has_value() &&
                      (!a.multipliers || detail::same(*a.multipliers, *b.multipliers));
    return a.divergence == b.divergence && a.d == b.d && a.n_labels == b.n_labels && a.n_preds == b.n_preds &&
           a.expected_loss == b.expected_loss && a.intrinsic_noise == b.intrinsic_noise && a.bias == b.bias &&
           a.variance == b.variance && a.gap == b.gap && detail::same(a.central_label, b.central_label) &&
           detail::same(a.central_prediction, b.central_prediction) && mult && a.method == b.method &&
           a.non_unique == b.non_unique && a.warnings == b.warnings;
}

inline const char* csv_header() { return "divergence,d,n_labels,n_preds,expected,noise,bias,variance,gap"; }

inline std::string csv_row(const DecompositionReport& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g", r.expected_loss, r.intrinsic_noise, r.bias,
                  r.variance, r.gap);
    std::string name = r.divergence;
    if (name.find_first_of(",\"") != std::string::npos) {
        std::string q = "\"";
        for (char c : name) q += c == '"' ? std::string("\"\"") : std::string(1, c);
        name = q + "\"";
    }
    return name + "," + std::to_string(r.d) + "," + std::to_string(r.n_labels) + "," + std::to_string(r.n_preds) + "," +
           buf;
}

// --- Classification ----------------------------------------------------------

inline json to_json(const DeterminantWitness& w) {
    return {{"t_a", detail::to_json(w.t_a)},
            {"t_b", detail::to_json(w.t_b)},
            {"y_a", detail::to_json(w.y_a)},
            {"y_b", detail::to_json(w.y_b)},
            {"determinant", w.determinant}};
}

inline json to_json(const SeparabilityVerdict& v) {
    json j{{"numerical_rank", v.numerical_rank},
           {"singular_values", v.singular_values},
           {"threshold", v.threshold},
           {"separable", v.separable},
           {"withheld", v.withheld},
           {"unreliable", v.unreliable},
           {"samples", v.samples}};
    if (v.witness) j["witness"] = to_json(*v.witness);
    return j;
}

inline json to_json(const ClassifyResult& r) {
    json seps = json::array();
    for (const auto& s : r.separability) seps.push_back(to_json(s));
    json j{{"verdict", to_string(r.verdict)},
           {"seed", r.seed},
           {"grid_points", r.grid_points},
           {"gap_trials_run", r.gap_trials_run},
           {"failures", r.failures},
           {"max_abs_gap", r.max_abs_gap},
           {"separability", seps},
           {"notes", r.notes}};
    j["determinant_witness"] = r.determinant_witness ? to_json(*r.determinant_witness) : json(nullptr);
    if (r.gap_witness)
        j["gap_witness"] = {{"labels", to_json(r.gap_witness->labels)},
                            {"preds", to_json(r.gap_witness->preds)},
                            {"report", to_json(r.gap_witness->report)}};
    else
        j["gap_witness"] = nullptr;
    return j;
}

}  // namespace bvd::io
