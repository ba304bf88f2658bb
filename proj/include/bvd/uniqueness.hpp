#pragma once
// Empirical test of whether a black-box loss can admit a clean bias-variance
// decomposition: the mixed second derivative d2L/dy dt of such a loss factors
// as H2(y) H1(t)', so the matrix of mixed Hessians stacked over a label grid
// and a prediction grid has rank at most d. The classifier combines that rank
// test with a search for decompositions whose terms fail to add up.

#include "bvd/decomposition.hpp"

#include <random>

namespace bvd {

struct MixedHessianSample {
    Point label;
    Point prediction;
    /// (i, j) = d2 L / dy_i dt_j
    Matrix matrix;
    double step = 0.0;
    bool reliable = true;
};

namespace detail {

inline Matrix mixed_hessian_at(const LossFunction& loss, const Point& t, const Point& y, double h) {
    const int d = static_cast<int>(t.size());
    Matrix H(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            Point tp = t, tm = t, yp = y, ym = y;
            tp[j] += h;
            tm[j] -= h;
            yp[i] += h;
            ym[i] -= h;
            H(i, j) = (loss(tp, yp) - loss(tp, ym) - loss(tm, yp) + loss(tm, ym)) / (4.0 * h * h);
        }
    }
    return H;
}

}  // namespace detail

/// Central-difference mixed Hessian. The sample is flagged unreliable when
/// halving the step moves any entry by more than 1e-4 relative.
inline MixedHessianSample mixed_hessian_fd(const LossFunction& loss, const Point& t, const Point& y,
                                           std::optional<double> step = std::nullopt) {
    if (!loss.smooth) throw ValidationError("mixed Hessian needs a smooth loss; " + loss.name + " is not");
    if (t.size() != loss.dim || y.size() != loss.dim) throw ValidationError("point dimension does not match loss");
    const double h = step.value_or(1e-4 * (1.0 + std::max(t.cwiseAbs().maxCoeff(), y.cwiseAbs().maxCoeff())));
    if (!(h > 0.0)) throw ValidationError("finite-difference step must be positive");
    const Domain box = loss.domain.without_equality();
    for (int k = 0; k < t.size(); ++k) {
        for (double s : {-h, h}) {
            Point tt = t, yy = y;
            tt[k] += s;
            yy[k] += s;
            if (!box.contains(tt) || !box.contains(yy))
                throw ValidationError("finite-difference stencil leaves the domain at coordinate " + std::to_string(k));
        }
    }
    MixedHessianSample s;
    s.label = t;
    s.prediction = y;
    s.step = h;
    s.matrix = detail::mixed_hessian_at(loss, t, y, h);
    const Matrix half = detail::mixed_hessian_at(loss, t, y, 0.5 * h);
    if (!s.matrix.allFinite() || !half.allFinite())
        throw NumericalError("mixed Hessian is not finite at the requested point");
    const double scale = s.matrix.cwiseAbs().maxCoeff();
    s.reliable = (s.matrix - half).cwiseAbs().maxCoeff() <= 1e-4 * scale;
    return s;
}

struct DeterminantWitness {
    Point t_a, t_b, y_a, y_b;
    /// H(t_a, y_a) H(t_b, y_b) - H(t_a, y_b) H(t_b, y_a)
    double determinant = 0.0;
};

struct SeparabilityVerdict {
    int numerical_rank = 0;
    std::vector<double> singular_values;
    double threshold = 1e-6;
    bool separable = false;
    bool withheld = false;
    int unreliable = 0;
    int samples = 0;
    std::optional<DeterminantWitness> witness;  // d = 1 only
};

struct SeparabilityOptions {
    double threshold = 1e-6;
    std::optional<double> step;
};

/// Stacks mixed Hessians into M[(l,i),(k,j)] = H(t_k, y_l)(i,j) and counts
/// singular values above threshold * sigma_max. Separable iff rank <= d.
inline SeparabilityVerdict separability_rank_test(const LossFunction& loss, const std::vector<Point>& label_grid,
                                                  const std::vector<Point>& pred_grid,
                                                  const SeparabilityOptions& opt = {}) {
    const int d = loss.dim;
    if (static_cast<int>(label_grid.size()) < 2 * d || static_cast<int>(pred_grid.size()) < 2 * d)
        throw ValidationError("separability test needs at least 2d points per grid");
    const int nl = static_cast<int>(label_grid.size()), np = static_cast<int>(pred_grid.size());

    SeparabilityVerdict v;
    v.threshold = opt.threshold;
    v.samples = nl * np;
    Matrix M = Matrix::Zero(np * d, nl * d);
    Matrix scalar = Matrix::Zero(np, nl);  // d = 1 view, rows = predictions
    for (int l = 0; l < np; ++l) {
        for (int k = 0; k < nl; ++k) {
            try {
                const auto s = mixed_hessian_fd(loss, label_grid[k], pred_grid[l], opt.step);
                if (!s.reliable) ++v.unreliable;
                M.block(l * d, k * d, d, d) = s.matrix;
                if (d == 1) scalar(l, k) = s.matrix(0, 0);
            } catch (const ValidationError&) {
                throw;
            } catch (const Error&) {
                ++v.unreliable;
            }
        }
    }
    if (v.unreliable * 10 > v.samples) {
        v.withheld = true;
        return v;
    }
    Eigen::BDCSVD<Matrix> svd(M);
    const Vector sv = svd.singularValues();
    v.singular_values.assign(sv.data(), sv.data() + sv.size());
    const double smax = sv.size() ? sv[0] : 0.0;
    for (int i = 0; i < sv.size(); ++i)
        if (smax > 0.0 && sv[i] > opt.threshold * smax) ++v.numerical_rank;
    v.separable = v.numerical_rank <= d;

    if (d == 1) {
        DeterminantWitness w;
        double best = -1.0;
        for (int ka = 0; ka < nl; ++ka)
            for (int kb = ka + 1; kb < nl; ++kb)
                for (int la = 0; la < np; ++la)
                    for (int lb = la + 1; lb < np; ++lb) {
                        const double det = scalar(la, ka) * scalar(lb, kb) - scalar(lb, ka) * scalar(la, kb);
                        if (std::abs(det) > best) {
                            best = std::abs(det);
                            w = {label_grid[ka], label_grid[kb], pred_grid[la], pred_grid[lb], det};
                        }
                    }
        v.witness = w;
    }
    return v;
}

// ---------------------------------------------------------------------------

enum class LossVerdict { consistent_with_gbregman, not_gbregman, inconclusive };

inline const char* to_string(LossVerdict v) {
    switch (v) {
        case LossVerdict::consistent_with_gbregman: return "consistent_with_gbregman";
        case LossVerdict::not_gbregman: return "not_gbregman";
        case LossVerdict::inconclusive: return "inconclusive";
    }
    return "?";
}

struct ClassifyConfig {
    std::uint64_t seed = 20240917;
    int n_grids = 3;
    int grid_points = 8;
    int gap_trials = 12;
    int max_support = 3;
    double gap_threshold = 1e-3;
    /// Sampling region; defaults to the loss domain pulled 5% inwards, with
    /// [-2, 2] standing in for unbounded coordinates.
    std::optional<std::pair<Vector, Vector>> region;
    SeparabilityOptions separability;
    BruteForceOptions brute_force;
};

struct GapWitness {
    WeightedEnsemble labels;
    WeightedEnsemble preds;
    DecompositionReport report;
};

struct ClassifyResult {
    LossVerdict verdict = LossVerdict::inconclusive;
    std::uint64_t seed = 0;
    int grid_points = 0;
    int gap_trials_run = 0;
    int failures = 0;
    double max_abs_gap = 0.0;
    std::vector<SeparabilityVerdict> separability;
    std::optional<DeterminantWitness> determinant_witness;
    std::optional<GapWitness> gap_witness;
    std::vector<std::string> notes;
};

namespace detail {

inline std::pair<Vector, Vector> sampling_region(const Domain& dom, const std::optional<std::pair<Vector, Vector>>& r) {
    if (r) return *r;
    const int d = dom.dim();
    Vector lo(d), hi(d);
    for (int i = 0; i < d; ++i) {
        double a = dom.lower()[i], b = dom.upper()[i];
        if (!std::isfinite(a) && !std::isfinite(b)) {
            a = -2.0;
            b = 2.0;
        } else if (!std::isfinite(b)) {
            b = a + 4.0;
        } else if (!std::isfinite(a)) {
            a = b - 4.0;
        }
        const double m = dom.discrete() ? 0.0 : 0.05 * (b - a);
        lo[i] = a + m;
        hi[i] = b - m;
    }
    return {lo, hi};
}

/// Draws a feasible point from the region (equality constraints included).
/// True when a brute-force centroid sits on the search box edge away from
/// any real domain boundary, i.e. the box was too small to contain it.
inline bool on_artificial_edge(const DecompositionReport& rep, const Domain& dom,
                               const std::pair<Vector, Vector>& box) {
    for (const Point* x : {&rep.central_label, &rep.central_prediction}) {
        for (int i = 0; i < x->size(); ++i) {
            const double tol = 1e-7 * (1.0 + box.second[i] - box.first[i]);
            const double v = (*x)[i];
            if (std::abs(v - box.first[i]) < tol && box.first[i] > dom.lower()[i] + tol) return true;
            if (std::abs(v - box.second[i]) < tol && box.second[i] < dom.upper()[i] - tol) return true;
        }
    }
    return false;
}

template <class Rng>
std::optional<Point> sample_point(const Domain& dom, const std::pair<Vector, Vector>& region, Rng& rng) {
    const int d = dom.dim();
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    if (dom.discrete()) {
        const auto& lv = *dom.grid();
        std::uniform_int_distribution<std::size_t> pick(0, lv.size() - 1);
        for (int tries = 0; tries < 1000; ++tries) {
            Point p(d);
            for (int i = 0; i < d; ++i) p[i] = lv[pick(rng)];
            if (dom.contains(p)) return p;
        }
        return std::nullopt;
    }
    BruteForceOptions bo;
    bo.search_box = region;
    const Subspace sub = make_subspace(dom, bo);
    const int m = static_cast<int>(sub.N.cols());
    for (int tries = 0; tries < 10000; ++tries) {
        Vector z(m);
        for (int j = 0; j < m; ++j) z[j] = sub.zlo[j] + (sub.zhi[j] - sub.zlo[j]) * u01(rng);
        const Point x = sub.to_x(z);
        if (sub.in_box(x) && dom.contains(sub.clamp(x))) return sub.clamp(x);
    }
    return std::nullopt;
}

template <class Rng>
std::optional<WeightedEnsemble> sample_ensemble(const Domain& dom, const std::pair<Vector, Vector>& region,
                                                int max_support, Rng& rng) {
    std::uniform_int_distribution<int> size(1, std::max(1, max_support));
    std::uniform_real_distribution<double> w(0.05, 1.0);
    const int n = size(rng);
    std::vector<Point> pts;
    std::vector<double> ws;
    for (int k = 0; k < n; ++k) {
        auto p = sample_point(dom, region, rng);
        if (!p) return std::nullopt;
        pts.push_back(*p);
        ws.push_back(w(rng));
    }
    return make_ensemble(std::move(pts), std::move(ws));
}

}  // namespace detail

/// Empirical classification. not_gbregman needs a reliable non-separability
/// witness or an additivity gap above the threshold; consistent_with_gbregman
/// means every test at the configured sizes passed, which is evidence, not proof.
inline ClassifyResult classify_loss(const LossFunction& loss, const ClassifyConfig& cfg = {}) {
    ClassifyResult res;
    res.seed = cfg.seed;
    res.grid_points = std::max(cfg.grid_points, 2 * loss.dim);
    std::mt19937_64 rng(cfg.seed);
    const auto region = detail::sampling_region(loss.domain, cfg.region);
    bool inconclusive = false;

    if (loss.smooth) {
        // Kink avoidance: no label/prediction pair may share a coordinate within 10 h.
        const double margin = 10.0 * cfg.separability.step.value_or(
                                         1e-4 * (1.0 + std::max(region.first.cwiseAbs().maxCoeff(),
                                                                region.second.cwiseAbs().maxCoeff())));
        const Domain box = loss.domain.without_equality();
        for (int g = 0; g < cfg.n_grids; ++g) {
            std::vector<Point> labels, preds;
            for (int tries = 0; tries < 100000 && static_cast<int>(labels.size()) < res.grid_points; ++tries) {
                auto p = detail::sample_point(box, region, rng);
                if (p) labels.push_back(*p);
            }
            for (int tries = 0; tries < 100000 && static_cast<int>(preds.size()) < res.grid_points; ++tries) {
                auto p = detail::sample_point(box, region, rng);
                if (!p) continue;
                bool clear = true;
                for (const auto& t : labels)
                    if ((t - *p).cwiseAbs().minCoeff() < margin) clear = false;
                if (clear) preds.push_back(*p);
            }
            if (static_cast<int>(preds.size()) < res.grid_points ||
                static_cast<int>(labels.size()) < res.grid_points) {
                inconclusive = true;
                res.notes.push_back("could not sample a full separability grid");
                continue;
            }
            try {
                auto v = separability_rank_test(loss, labels, preds, cfg.separability);
                if (v.withheld) {
                    inconclusive = true;
                    res.notes.push_back("separability verdict withheld: too many unreliable Hessian samples");
                } else if (!v.separable) {
                    res.verdict = LossVerdict::not_gbregman;
                    if (v.witness) res.determinant_witness = v.witness;
                }
                res.separability.push_back(std::move(v));
            } catch (const Error& e) {
                inconclusive = true;
                res.notes.push_back(std::string("separability test failed: ") + e.what());
            }
        }
    } else {
        res.notes.push_back("loss is not smooth: separability test skipped");
    }

    // Gap search: deterministic corner probes first, then random ensembles.
    BruteForceOptions bf = cfg.brute_force;
    if (!bf.search_box) bf.search_box = region;
    std::vector<std::pair<WeightedEnsemble, WeightedEnsemble>> trials;
    if (!loss.domain.has_equality()) {
        const auto probe_box = loss.domain.bounded() ? std::make_pair(loss.domain.lower(), loss.domain.upper()) : region;
        trials.emplace_back(make_ensemble({probe_box.first}),
                            make_ensemble({probe_box.first, probe_box.second}, {1.0, 2.0}));
        trials.emplace_back(make_ensemble({probe_box.first, probe_box.second}, {2.0, 1.0}),
                            make_ensemble({probe_box.second}));
    }
    for (int k = 0; k < cfg.gap_trials; ++k) {
        auto a = detail::sample_ensemble(loss.domain, region, cfg.max_support, rng);
        auto b = detail::sample_ensemble(loss.domain, region, cfg.max_support, rng);
        if (a && b) trials.emplace_back(std::move(*a), std::move(*b));
    }
    for (auto& [labels, preds] : trials) {
        if (res.gap_witness) break;
        try {
            BruteForceOptions trial = bf;
            if (!cfg.brute_force.search_box) {
                auto box = region;
                for (const auto* e : {&labels, &preds})
                    for (const auto& p : e->points()) {
                        box.first = box.first.cwiseMin(p);
                        box.second = box.second.cwiseMax(p);
                    }
                const Vector pad = box.second - box.first;
                box.first -= pad;
                box.second += pad;
                trial.search_box = box;
            }
            auto rep = decompose_generic(loss, labels, preds, loss.domain, trial);
            if (detail::on_artificial_edge(rep, loss.domain, *trial.search_box)) {
                ++res.failures;
                continue;
            }
            ++res.gap_trials_run;
            res.max_abs_gap = std::max(res.max_abs_gap, std::abs(rep.gap));
            if (std::abs(rep.gap) > cfg.gap_threshold) {
                res.verdict = LossVerdict::not_gbregman;
                res.gap_witness = GapWitness{labels, preds, std::move(rep)};
            }
        } catch (const Error&) {
            ++res.failures;
        }
    }
    if (res.gap_trials_run == 0) inconclusive = true;

    if (res.verdict != LossVerdict::not_gbregman)
        res.verdict = inconclusive ? LossVerdict::inconclusive : LossVerdict::consistent_with_gbregman;
    return res;
}

}  // namespace bvd
