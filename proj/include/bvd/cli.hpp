#pragma once
// Batch front end: one experiment spec file in, CSV/JSON/SVG artifacts out.

#include "bvd/io.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

namespace bvd::cli {

using io::json;
namespace fs = std::filesystem;

enum class Command { decompose, centroid, classify, sweep };

inline const char* to_string(Command c) {
    switch (c) {
        case Command::decompose: return "decompose";
        case Command::centroid: return "centroid";
        case Command::classify: return "classify";
        case Command::sweep: return "sweep";
    }
    return "?";
}

inline Command command_from_string(const std::string& s) {
    for (auto c : {Command::decompose, Command::centroid, Command::classify, Command::sweep})
        if (s == to_string(c)) return c;
    throw ValidationError("field 'command': unknown command '" + s + "'");
}

struct SweepSpec {
    std::string param;
    std::vector<double> values;
};

struct ExperimentSpec {
    Command command = Command::decompose;
    io::DivergenceSpec divergence;
    std::optional<Domain> domain;
    std::optional<WeightedEnsemble> labels;
    std::optional<WeightedEnsemble> preds;
    /// Centroid command: which centroid of which ensemble.
    Side side = Side::second_arg;
    std::optional<SweepSpec> sweep;
    ClassifyConfig classify;
    BruteForceOptions brute_force;
    std::string output_name = "result";
    std::vector<std::string> formats{"json"};
};

namespace detail {

using io::detail::at;
using io::detail::join;

inline json read_json_file(const fs::path& p, const std::string& field) {
    std::ifstream in(p);
    if (!in) throw ValidationError(at(field, "cannot open file " + p.string()));
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(at(field, p.string() + ": " + e.what()));
    }
}

/// An ensemble given inline or as a path relative to the spec file.
inline WeightedEnsemble ensemble_field(const json& j, const std::string& field, const fs::path& base) {
    if (j.is_string()) return io::ensemble_from_json(read_json_file(base / j.get<std::string>(), field), field);
    return io::ensemble_from_json(j, field);
}

inline int int_field(const json& j, const std::string& field, int lo) {
    const double v = io::detail::number(j, field);
    if (v != std::floor(v) || v < lo) throw ValidationError(at(field, "must be an integer >= " + std::to_string(lo)));
    return static_cast<int>(v);
}

inline std::pair<Vector, Vector> box_field(const json& j, const std::string& field) {
    const Vector lo = io::detail::vector(io::detail::require(j, "lower", field), join(field, "lower"));
    const Vector hi = io::detail::vector(io::detail::require(j, "upper", field), join(field, "upper"));
    if (lo.size() != hi.size() || (lo.array() >= hi.array()).any())
        throw ValidationError(at(field, "need lower < upper, equal lengths"));
    return {lo, hi};
}

inline catalog::Params with_param(catalog::Params p, const std::string& name, double v) {
    if (name == "alpha")
        p.alpha = v;
    else if (name == "epsilon")
        p.epsilon = v;
    else
        throw ValidationError(at("sweep.param", "only alpha and epsilon can be swept"));
    return p;
}

}  // namespace detail

/// Parses and validates a spec. `base` resolves relative ensemble paths.
inline ExperimentSpec parse_spec(const json& j, const fs::path& base = ".") {
    using detail::at;
    if (!j.is_object()) throw ValidationError("spec must be a JSON object");
    static const std::vector<std::string> known{"command", "divergence", "domain",   "labels",
                                                "preds",   "ensemble",   "side",     "sweep",
                                                "classify", "brute_force", "output", "description"};
    for (const auto& [k, v] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end()) throw ValidationError(at(k, "unknown field"));

    ExperimentSpec s;
    s.command = command_from_string(io::detail::string(io::detail::require(j, "command", ""), "command"));
    s.divergence = io::divergence_spec_from_json(io::detail::require(j, "divergence", ""), "divergence");
    if (j.contains("domain")) s.domain = io::domain_from_json(j["domain"], "domain");

    CatalogEntry entry = [&] {
        try {
            return s.divergence.build();
        } catch (const ValidationError& e) {
            throw ValidationError(at("divergence", e.what()));
        }
    }();
    const Domain dom = s.domain.value_or(std::visit(
        [](const auto& e) {
            if constexpr (std::is_same_v<std::decay_t<decltype(e)>, GBregmanDivergence>)
                return e.domain();
            else
                return e.domain;
        },
        entry));

    auto ensemble = [&](const char* key) {
        WeightedEnsemble e = detail::ensemble_field(io::detail::require(j, key, ""), key, base);
        if (e.dim() != dom.dim())
            throw ValidationError(at(key, "point dimension " + std::to_string(e.dim()) + " does not match domain dimension " +
                                              std::to_string(dom.dim())));
        for (std::size_t i = 0; i < e.size(); ++i)
            if (!dom.contains(e.point(i)))
                throw ValidationError(at(std::string(key) + ".points[" + std::to_string(i) + "]", "outside the domain"));
        return e;
    };

    switch (s.command) {
        case Command::decompose:
        case Command::sweep:
            s.labels = ensemble("labels");
            s.preds = ensemble("preds");
            break;
        case Command::centroid: {
            s.labels = ensemble("ensemble");
            const std::string side = io::detail::string(io::detail::require(j, "side", ""), "side");
            if (side == "label")
                s.side = Side::second_arg;
            else if (side == "prediction")
                s.side = Side::first_arg;
            else
                throw ValidationError(at("side", "expected 'label' or 'prediction'"));
            break;
        }
        case Command::classify: break;
    }

    if (s.command == Command::sweep) {
        const json& sw = io::detail::require(j, "sweep", "");
        SweepSpec sp;
        sp.param = io::detail::string(io::detail::require(sw, "param", "sweep"), "sweep.param");
        const Vector vals = io::detail::vector(io::detail::require(sw, "values", "sweep"), "sweep.values");
        if (vals.size() == 0) throw ValidationError(at("sweep.values", "empty"));
        sp.values.assign(vals.data(), vals.data() + vals.size());
        for (std::size_t i = 0; i < sp.values.size(); ++i) {
            try {
                catalog::make(s.divergence.name, detail::with_param(s.divergence.params, sp.param, sp.values[i]));
            } catch (const ValidationError& e) {
                throw ValidationError(at("sweep.values[" + std::to_string(i) + "]", e.what()));
            }
        }
        s.sweep = sp;
    } else if (j.contains("sweep")) {
        throw ValidationError(at("sweep", "only valid with the sweep command"));
    }

    if (j.contains("classify")) {
        const json& c = j["classify"];
        if (!c.is_object()) throw ValidationError(at("classify", "expected an object"));
        for (const auto& [k, v] : c.items()) {
            const std::string f = "classify." + k;
            if (k == "seed") {
                if (!v.is_number_unsigned()) throw ValidationError(at(f, "expected a non-negative integer"));
                s.classify.seed = v.get<std::uint64_t>();
            } else if (k == "n_grids") {
                s.classify.n_grids = detail::int_field(v, f, 0);
            } else if (k == "grid_points") {
                s.classify.grid_points = detail::int_field(v, f, 2);
            } else if (k == "gap_trials") {
                s.classify.gap_trials = detail::int_field(v, f, 0);
            } else if (k == "max_support") {
                s.classify.max_support = detail::int_field(v, f, 1);
            } else if (k == "gap_threshold") {
                s.classify.gap_threshold = io::detail::number(v, f);
            } else if (k == "rank_threshold") {
                s.classify.separability.threshold = io::detail::number(v, f);
            } else if (k == "step") {
                s.classify.separability.step = io::detail::number(v, f);
            } else if (k == "region") {
                s.classify.region = detail::box_field(v, f);
            } else {
                throw ValidationError(at(f, "unknown field"));
            }
        }
    }

    if (j.contains("brute_force")) {
        const json& b = j["brute_force"];
        if (!b.is_object()) throw ValidationError(at("brute_force", "expected an object"));
        for (const auto& [k, v] : b.items()) {
            const std::string f = "brute_force." + k;
            if (k == "grid")
                s.brute_force.grid = detail::int_field(v, f, 2);
            else if (k == "restarts")
                s.brute_force.restarts = detail::int_field(v, f, 1);
            else if (k == "search_box")
                s.brute_force.search_box = detail::box_field(v, f);
            else
                throw ValidationError(at(f, "unknown field"));
        }
        s.classify.brute_force = s.brute_force;
    }

    if (j.contains("output")) {
        const json& o = j["output"];
        if (!o.is_object()) throw ValidationError(at("output", "expected an object"));
        if (o.contains("name")) {
            s.output_name = io::detail::string(o["name"], "output.name");
            if (s.output_name.empty() || s.output_name.find('/') != std::string::npos)
                throw ValidationError(at("output.name", "must be a plain file stem"));
        }
        if (o.contains("formats")) {
            if (!o["formats"].is_array()) throw ValidationError(at("output.formats", "expected an array"));
            s.formats.clear();
            for (std::size_t i = 0; i < o["formats"].size(); ++i)
                s.formats.push_back(io::detail::string(o["formats"][i], "output.formats[" + std::to_string(i) + "]"));
        }
    }
    for (std::size_t i = 0; i < s.formats.size(); ++i) {
        const auto& f = s.formats[i];
        const std::string field = "output.formats[" + std::to_string(i) + "]";
        if (f != "json" && f != "csv" && f != "svg") throw ValidationError(at(field, "unknown format '" + f + "'"));
        if (f == "csv" && s.command != Command::decompose && s.command != Command::sweep)
            throw ValidationError(at(field, "csv output is for decompose and sweep"));
        if (f == "svg" && s.command != Command::sweep) throw ValidationError(at(field, "svg output is for sweep"));
    }
    return s;
}

inline ExperimentSpec load_spec(const fs::path& file) {
    return parse_spec(detail::read_json_file(file, "spec"), file.parent_path().empty() ? fs::path(".") : file.parent_path());
}

/// Worker count: BVD_THREADS if set, else the hardware concurrency.
inline unsigned thread_cap() {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("BVD_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1) throw ValidationError("BVD_THREADS must be a positive integer");
        return static_cast<unsigned>(v);
    }
    return hw;
}

/// Minimal static line chart of |gap| against the swept parameter.
inline std::string gap_svg(const std::string& param, const std::vector<double>& xs, const std::vector<double>& gaps) {
    const double W = 480, H = 320, L = 70, R = 20, T = 20, B = 50;
    double xmin = *std::min_element(xs.begin(), xs.end()), xmax = *std::max_element(xs.begin(), xs.end());
    if (xmax == xmin) {
        xmin -= 0.5;
        xmax += 0.5;
    }
    double ymax = 0.0;
    for (double g : gaps) ymax = std::max(ymax, std::abs(g));
    if (ymax == 0.0) ymax = 1.0;
    auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
    auto py = [&](double y) { return H - B - std::abs(y) / ymax * (H - T - B); };
    char buf[256];
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"320\" viewBox=\"0 0 480 320\">\n";
    o << "<rect width=\"480\" height=\"320\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf, "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", L, H - B, W - R, H - B);
    o << buf;
    std::snprintf(buf, sizeof buf, "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", L, T, L, H - B);
    o << buf;
    o << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%s%.3f,%.3f", i ? " " : "", px(xs[i]), py(gaps[i]));
        o << buf;
    }
    o << "\"/>\n";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        std::snprintf(buf, sizeof buf, "<circle cx=\"%.3f\" cy=\"%.3f\" r=\"3\" fill=\"steelblue\"/>\n", px(xs[i]),
                      py(gaps[i]));
        o << buf;
    }
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" font-size=\"12\">%.6g</text>\n", 2.0, T + 4, ymax);
    o << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" font-size=\"12\">%.6g</text>\n", L, H - B + 16, xmin);
    o << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" font-size=\"12\" text-anchor=\"end\">%.6g</text>\n",
                  W - R, H - B + 16, xmax);
    o << buf;
    o << "<text x=\"240\" y=\"310\" font-size=\"13\" text-anchor=\"middle\">" << param << "</text>\n";
    o << "<text x=\"14\" y=\"160\" font-size=\"13\" transform=\"rotate(-90 14 160)\" text-anchor=\"middle\">|gap|</text>\n";
    o << "</svg>\n";
    return o.str();
}

struct RunResult {
    std::vector<fs::path> artifacts;
};

/// Thrown for numerical failures, naming the operation that failed.
class OperationFailed : public NumericalError {
public:
    OperationFailed(const std::string& op, const std::string& what)
        : NumericalError(op + ": " + what), op_(op) {}
    const std::string& operation() const { return op_; }

private:
    std::string op_;
};

namespace detail {

template <class Fn>
auto guarded(const std::string& op, Fn&& fn) {
    try {
        return fn();
    } catch (const ValidationError&) {
        throw;
    } catch (const OperationFailed&) {
        throw;
    } catch (const NumericalError& e) {
        throw OperationFailed(op, e.what());
    }
}

inline void write_file(const fs::path& p, const std::string& content, RunResult& res) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + p.string());
    out << content;
    res.artifacts.push_back(p);
}

}  // namespace detail

inline RunResult run(const ExperimentSpec& spec, const fs::path& outdir = ".") {
    fs::create_directories(outdir);
    RunResult res;
    const auto wants = [&](const char* f) { return std::find(spec.formats.begin(), spec.formats.end(), f) != spec.formats.end(); };
    const auto stem = outdir / spec.output_name;
    const CatalogEntry entry = spec.divergence.build();

    switch (spec.command) {
        case Command::decompose: {
            const auto rep = detail::guarded("decompose", [&] {
                return decompose(entry, *spec.labels, *spec.preds, spec.domain, spec.brute_force);
            });
            if (wants("json")) {
                json j{{"command", "decompose"}, {"divergence", io::describe(entry)}, {"report", io::to_json(rep)}};
                detail::write_file(stem.string() + ".json", j.dump(2) + "\n", res);
            }
            if (wants("csv"))
                detail::write_file(stem.string() + ".csv", std::string(io::csv_header()) + "\n" + io::csv_row(rep) + "\n", res);
            break;
        }
        case Command::centroid: {
            const auto c = detail::guarded("centroid", [&] {
                return centroid(entry, *spec.labels, spec.side, spec.domain, spec.brute_force);
            });
            json j{{"command", "centroid"},
                   {"divergence", io::describe(entry)},
                   {"side", spec.side == Side::second_arg ? "label" : "prediction"},
                   {"centroid", io::to_json(c)}};
            if (wants("json")) detail::write_file(stem.string() + ".json", j.dump(2) + "\n", res);
            break;
        }
        case Command::classify: {
            LossFunction loss = as_loss(entry);
            if (spec.domain) loss.domain = *spec.domain;
            const auto r = detail::guarded("classify", [&] { return classify_loss(loss, spec.classify); });
            json j{{"command", "classify"}, {"divergence", io::describe(entry)}, {"result", io::to_json(r)}};
            if (wants("json")) detail::write_file(stem.string() + ".json", j.dump(2) + "\n", res);
            break;
        }
        case Command::sweep: {
            const auto& sw = *spec.sweep;
            const std::size_t n = sw.values.size();
            std::vector<std::optional<DecompositionReport>> reports(n);
            std::vector<std::exception_ptr> errors(n);
            std::atomic<std::size_t> next{0};
            auto worker = [&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        const auto e = catalog::make(spec.divergence.name,
                                                     detail::with_param(spec.divergence.params, sw.param, sw.values[i]));
                        auto r = decompose(e, *spec.labels, *spec.preds, spec.domain, spec.brute_force);
                        char num[32];
                        const auto end = std::to_chars(num, num + sizeof num, sw.values[i]).ptr;
                        r.divergence += "(" + sw.param + "=" + std::string(num, end) + ")";
                        reports[i] = std::move(r);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            };
            const unsigned nthreads = static_cast<unsigned>(std::min<std::size_t>(thread_cap(), n));
            std::vector<std::thread> pool;
            for (unsigned t = 1; t < nthreads; ++t) pool.emplace_back(worker);
            worker();
            for (auto& t : pool) t.join();
            for (std::size_t i = 0; i < n; ++i)
                if (errors[i]) detail::guarded("sweep[" + std::to_string(i) + "]", [&] {
                        std::rethrow_exception(errors[i]);
                        return 0;
                    });

            std::vector<double> gaps;
            json arr = json::array();
            std::string csv = std::string(io::csv_header()) + "\n";
            for (const auto& r : reports) {
                gaps.push_back(r->gap);
                arr.push_back(io::to_json(*r));
                csv += io::csv_row(*r) + "\n";
            }
            if (wants("json")) {
                json j{{"command", "sweep"},
                       {"divergence", io::to_json(spec.divergence)},
                       {"param", sw.param},
                       {"values", sw.values},
                       {"reports", arr}};
                detail::write_file(stem.string() + ".json", j.dump(2) + "\n", res);
            }
            if (wants("csv")) detail::write_file(stem.string() + ".csv", csv, res);
            if (wants("svg")) detail::write_file(stem.string() + ".svg", gap_svg(sw.param, sw.values, gaps), res);
            break;
        }
    }
    return res;
}

}  // namespace bvd::cli
