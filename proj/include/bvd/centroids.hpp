#pragma once
// Central labels and central predictions: closed-form g-/f-means, equality
// constrained solves through Lagrange multipliers, power means for the alpha
// divergence on the simplex, and a brute-force minimization oracle.

#include "bvd/divergences.hpp"
#include "bvd/nelder_mead.hpp"

#include <numeric>

namespace bvd {

enum class CentroidMethod { closed_form, lagrange, brute_force };

inline const char* to_string(CentroidMethod m) {
    switch (m) {
        case CentroidMethod::closed_form: return "closed_form";
        case CentroidMethod::lagrange: return "lagrange";
        case CentroidMethod::brute_force: return "brute_force";
    }
    return "?";
}

/// Which argument of the loss is free. first_arg minimizes E L(x, P) (the
/// central prediction for an ensemble of predictions); second_arg minimizes
/// E L(P, x) (the central label for an ensemble of labels).
enum class Side { first_arg, second_arg };

inline const char* to_string(Side s) { return s == Side::first_arg ? "first_arg" : "second_arg"; }

struct CentroidResult {
    Point point;
    Vector multipliers = Vector(0);
    double objective = 0.0;
    CentroidMethod method = CentroidMethod::closed_form;
    bool non_unique = false;
    std::vector<std::string> warnings;
};

template <class Loss>
double expected_loss_at(const Loss& loss, const WeightedEnsemble& ens, Side side, const Point& x) {
    return ens.expectation_scalar([&](const Point& p) { return side == Side::first_arg ? loss(x, p) : loss(p, x); });
}

namespace detail {

inline void require_support(const GBregmanDivergence& div, const WeightedEnsemble& ens, const char* what) {
    if (ens.dim() != div.dim()) throw ValidationError(std::string(what) + " dimension does not match divergence");
    for (std::size_t k = 0; k < ens.size(); ++k) div.require_feasible(ens.point(k), what);
}

/// Finds lambda with W h(mean + W' lambda) = b by Newton on lambda, where h is
/// an inverse map with Jacobian jac.
inline std::pair<Point, Vector> solve_multipliers(const Vector& mean, const std::function<Vector(const Vector&)>& h,
                                                  const std::function<Matrix(const Vector&)>& jac, const Matrix& W,
                                                  const Vector& b, int max_iter = 100) {
    Vector lambda = Vector::Zero(W.rows());
    auto eval = [&](const Vector& lam, Point& y, Vector& r) {
        try {
            y = h(mean + W.transpose() * lam);
        } catch (const NumericalError&) {
            return false;
        }
        if (!y.allFinite()) return false;
        r = W * y - b;
        return true;
    };
    Point y;
    Vector r;
    if (!eval(lambda, y, r)) throw ConvergenceError("multiplier solve: inverse map failed at lambda = 0", kInf);
    double rn = r.cwiseAbs().maxCoeff();
    const double target = 1e-14 * (1.0 + b.cwiseAbs().maxCoeff());
    for (int it = 0; it < max_iter && rn > target; ++it) {
        const Vector v = mean + W.transpose() * lambda;
        const Matrix J = W * (jac ? jac(v) : fd_jacobian(h, v)) * W.transpose();
        const Vector step = J.fullPivLu().solve(-r);
        if (!step.allFinite()) break;
        double damp = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls, damp *= 0.5) {
            Point yn;
            Vector rnext;
            if (!eval(lambda + damp * step, yn, rnext)) continue;
            const double rnn = rnext.cwiseAbs().maxCoeff();
            if (rnn < rn) {
                lambda += damp * step;
                y = yn;
                r = rnext;
                rn = rnn;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
    }
    if (rn > kFeasibilityTol) throw ConvergenceError("multiplier Newton did not converge", rn);
    return {y, lambda};
}

}  // namespace detail

/// t = g^-1(E g(T)); minimizes E D(T, t) whenever it is feasible.
inline CentroidResult g_mean_label(const GBregmanDivergence& div, const WeightedEnsemble& labels) {
    detail::require_support(div, labels, "label");
    const Vector v = labels.expectation([&](const Point& t) { return div.mapping().forward(t); });
    CentroidResult res;
    res.point = div.mapping().inverse(v);
    if (!div.domain().contains(res.point))
        throw InfeasibleError("g-mean label is infeasible; use constrained_central_label");
    res.objective = expected_loss_at(div, labels, Side::second_arg, res.point);
    return res;
}

/// y = f^-1(E f(Y)); minimizes E D(y, Y) whenever it is feasible.
inline CentroidResult f_mean_prediction(const GBregmanDivergence& div, const WeightedEnsemble& preds) {
    detail::require_support(div, preds, "prediction");
    const Vector v = preds.expectation([&](const Point& y) { return div.dual_mapping().forward(y); });
    CentroidResult res;
    res.point = div.dual_mapping().inverse(v);
    if (!div.domain().contains(res.point))
        throw InfeasibleError("f-mean prediction is infeasible; use constrained_central_prediction");
    res.objective = expected_loss_at(div, preds, Side::first_arg, res.point);
    return res;
}

/// Central prediction of a standard Bregman divergence (g = identity) under
/// W y = b: f(y*) = E f(Y) + W' lambda.
inline CentroidResult constrained_central_prediction(const GBregmanDivergence& div, const WeightedEnsemble& preds,
                                                     const Domain& domain) {
    if (!div.mapping().identity)
        throw ValidationError("constrained_central_prediction needs a standard Bregman divergence (g = identity)");
    if (!domain.has_equality()) return f_mean_prediction(div.with_domain(domain), preds);
    detail::require_support(div, preds, "prediction");
    const Vector mean = preds.expectation([&](const Point& y) { return div.dual_mapping().forward(y); });
    // With g = identity, f^-1 = grad B, so its Jacobian is the Hessian of B.
    std::function<Matrix(const Vector&)> jac;
    if (div.dual_generator().hessian) jac = div.dual_generator().hessian;
    auto [y, lambda] = detail::solve_multipliers(mean, div.dual_mapping().inverse, jac, domain.eq_lhs(), domain.eq_rhs());
    if (!domain.contains(y))
        throw InfeasibleError("constrained central prediction violates the box bounds (active sets are not handled)");
    CentroidResult res;
    res.point = y;
    res.multipliers = lambda;
    res.method = CentroidMethod::lagrange;
    res.objective = expected_loss_at(div, preds, Side::first_arg, y);
    return res;
}

/// Central label of a reverse Bregman divergence (f = identity) under W t = b:
/// g(t*) = E g(T) + W' lambda.
inline CentroidResult constrained_central_label(const GBregmanDivergence& div, const WeightedEnsemble& labels,
                                                const Domain& domain) {
    if (!div.dual_mapping().identity)
        throw ValidationError("constrained_central_label needs a reverse Bregman divergence (f = identity)");
    if (!domain.has_equality()) return g_mean_label(div.with_domain(domain), labels);
    detail::require_support(div, labels, "label");
    const Vector mean = labels.expectation([&](const Point& t) { return div.mapping().forward(t); });
    // With f = identity, g^-1 = grad A.
    std::function<Matrix(const Vector&)> jac;
    if (div.generator().hessian) jac = div.generator().hessian;
    auto [t, lambda] = detail::solve_multipliers(mean, div.mapping().inverse, jac, domain.eq_lhs(), domain.eq_rhs());
    if (!domain.contains(t))
        throw InfeasibleError("constrained central label violates the box bounds (active sets are not handled)");
    CentroidResult res;
    res.point = t;
    res.multipliers = lambda;
    res.method = CentroidMethod::lagrange;
    res.objective = expected_loss_at(div, labels, Side::second_arg, t);
    return res;
}

/// Normalized power mean for the alpha divergence on the simplex: exponent
/// alpha for labels (second_arg), 1 - alpha for predictions (first_arg).
inline CentroidResult power_mean_centroids(const GBregmanDivergence& div, const WeightedEnsemble& ens, Side side) {
    const double a = div.param("alpha");
    const double p = side == Side::second_arg ? a : 1.0 - a;
    detail::require_support(div, ens, side == Side::second_arg ? "label" : "prediction");
    Vector m = ens.expectation([&](const Point& x) {
        Vector out(x.size());
        for (int i = 0; i < x.size(); ++i) {
            if (x[i] < 0.0) throw BoundaryError("power mean of a negative coordinate", i);
            out[i] = std::pow(x[i], p);
        }
        return out;
    });
    for (int i = 0; i < m.size(); ++i) m[i] = std::pow(m[i], 1.0 / p);
    const double z = m.sum();
    if (!(z > 0.0)) throw BoundaryError("power mean is zero in every coordinate", 0);
    CentroidResult res;
    res.point = m / z;
    res.objective = expected_loss_at(div, ens, side, res.point);
    return res;
}

// ---------------------------------------------------------------------------
// Brute-force oracle.

struct BruteForceOptions {
    int grid = 41;
    int restarts = 5;
    /// Required when the domain is unbounded; intersected with it otherwise.
    std::optional<std::pair<Vector, Vector>> search_box;
    double tie_tol = 1e-9;
    double distinct_tol = 1e-4;
};

namespace detail {

/// Affine parameterization x = x0 + N z of {W x = b} with orthonormal N and
/// the box of z values that can reach the bounds.
struct Subspace {
    Vector x0;
    Matrix N;
    Vector zlo, zhi;
    Vector lo, hi;

    Vector to_x(const Vector& z) const { return x0 + N * z; }
    bool in_box(const Vector& x) const {
        for (int i = 0; i < x.size(); ++i) {
            const double slack = 1e-12 * (1.0 + std::abs(hi[i] - lo[i]));
            if (x[i] < lo[i] - slack || x[i] > hi[i] + slack) return false;
        }
        return true;
    }
    /// Snaps round-off excursions back onto the box.
    Vector clamp(Vector x) const {
        for (int i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
        return x;
    }
};

inline Subspace make_subspace(const Domain& domain, const BruteForceOptions& opt) {
    const int d = domain.dim();
    Subspace s;
    s.lo = domain.lower();
    s.hi = domain.upper();
    if (opt.search_box) {
        if (opt.search_box->first.size() != d || opt.search_box->second.size() != d)
            throw ValidationError("search box dimension mismatch");
        s.lo = s.lo.cwiseMax(opt.search_box->first);
        s.hi = s.hi.cwiseMin(opt.search_box->second);
    }
    if (!s.lo.allFinite() || !s.hi.allFinite())
        throw ValidationError("brute-force centroid needs a bounded domain or a search box");
    if ((s.hi - s.lo).minCoeff() < 0.0) throw ValidationError("empty search box");

    if (!domain.has_equality()) {
        s.x0 = Vector::Zero(d);
        s.N = Matrix::Identity(d, d);
        s.zlo = s.lo;
        s.zhi = s.hi;
        return s;
    }
    const Matrix& W = domain.eq_lhs();
    Eigen::JacobiSVD<Matrix> svd(W, Eigen::ComputeFullV | Eigen::ComputeThinU);
    s.x0 = svd.solve(domain.eq_rhs());
    const int k = domain.kappa();
    s.N = svd.matrixV().rightCols(d - k);
    const int m = d - k;
    s.zlo = Vector::Zero(m);
    s.zhi = Vector::Zero(m);
    for (int j = 0; j < m; ++j) {
        for (int i = 0; i < d; ++i) {
            const double a = s.N(i, j) * (s.lo[i] - s.x0[i]);
            const double c = s.N(i, j) * (s.hi[i] - s.x0[i]);
            s.zlo[j] += std::min(a, c);
            s.zhi[j] += std::max(a, c);
        }
    }
    return s;
}

inline bool lex_less(const Vector& a, const Vector& b) {
    for (int i = 0; i < a.size(); ++i) {
        if (a[i] < b[i]) return true;
        if (a[i] > b[i]) return false;
    }
    return false;
}

struct Candidate {
    Vector x;
    double value;
};

/// Picks the best candidate; among candidates within tie_tol of the best that
/// are distinct, returns the lexicographically smallest and flags non-uniqueness.
inline CentroidResult select_candidate(std::vector<Candidate> cands, const BruteForceOptions& opt) {
    if (cands.empty()) throw NumericalError("brute-force centroid found no finite objective value");
    auto best = std::min_element(cands.begin(), cands.end(),
                                 [](const Candidate& a, const Candidate& b) { return a.value < b.value; });
    CentroidResult res;
    res.method = CentroidMethod::brute_force;
    res.point = best->x;
    res.objective = best->value;
    const Candidate* lex = &*best;
    for (const auto& c : cands) {
        if (c.value > best->value + opt.tie_tol) continue;
        if ((c.x - best->x).cwiseAbs().maxCoeff() > opt.distinct_tol) res.non_unique = true;
        if (lex_less(c.x, lex->x)) lex = &c;
    }
    if (res.non_unique) {
        res.point = lex->x;
        res.objective = lex->value;
    }
    return res;
}

}  // namespace detail

/// Minimizes the expected loss over one argument: exhaustive on discrete
/// domains, otherwise a 41-per-dimension grid refined by Nelder-Mead from the
/// best grid points. Equality constraints are eliminated through a null-space
/// parameterization.
template <class Loss>
CentroidResult brute_force_centroid(const Loss& loss, const WeightedEnsemble& ens, Side side, const Domain& domain,
                                    const BruteForceOptions& opt = {}) {
    if (ens.dim() != domain.dim()) throw ValidationError("ensemble dimension does not match domain");
    auto objective = [&](const Vector& x) {
        try {
            const double v = expected_loss_at(loss, ens, side, x);
            return std::isfinite(v) ? v : kInf;
        } catch (const Error&) {
            return kInf;
        }
    };
    const int d = domain.dim();

    if (domain.discrete()) {
        const auto& levels = *domain.grid();
        std::vector<detail::Candidate> cands;
        std::vector<std::size_t> idx(d, 0);
        for (;;) {
            Vector x(d);
            for (int i = 0; i < d; ++i) x[i] = levels[idx[i]];
            if (domain.contains(x)) {
                const double v = objective(x);
                if (std::isfinite(v)) cands.push_back({x, v});
            }
            int i = d - 1;
            while (i >= 0 && ++idx[i] == levels.size()) idx[i--] = 0;
            if (i < 0) break;
        }
        return detail::select_candidate(std::move(cands), opt);
    }

    const detail::Subspace sub = detail::make_subspace(domain, opt);
    const int m = static_cast<int>(sub.N.cols());
    if (m == 0) {
        if (!sub.in_box(sub.x0)) throw ValidationError("equality constraints leave no feasible point");
        return detail::select_candidate({{sub.x0, objective(sub.x0)}}, opt);
    }
    auto zobj = [&](const Vector& z) {
        const Vector x = sub.to_x(z);
        return sub.in_box(x) ? objective(sub.clamp(x)) : kInf;
    };

    const int n = std::max(opt.grid, 2);
    const Vector spacing = (sub.zhi - sub.zlo) / (n - 1);
    std::vector<detail::Candidate> grid_pts;  // stored in z coordinates
    std::vector<int> idx(m, 0);
    for (;;) {
        Vector z(m);
        for (int j = 0; j < m; ++j) z[j] = sub.zlo[j] + spacing[j] * idx[j];
        const double v = zobj(z);
        if (std::isfinite(v)) grid_pts.push_back({z, v});
        int j = m - 1;
        while (j >= 0 && ++idx[j] == n) idx[j--] = 0;
        if (j < 0) break;
    }
    if (grid_pts.empty()) throw NumericalError("brute-force centroid: objective is infinite on the whole grid");
    std::stable_sort(grid_pts.begin(), grid_pts.end(),
                     [](const detail::Candidate& a, const detail::Candidate& b) { return a.value < b.value; });

    std::vector<detail::Candidate> cands;
    const int starts = std::min<int>(std::max(opt.restarts, 1), static_cast<int>(grid_pts.size()));
    Vector step = spacing;
    for (int j = 0; j < m; ++j)
        if (step[j] == 0.0) step[j] = 1e-3;
    for (int s = 0; s < starts; ++s) {
        auto r = detail::nelder_mead(zobj, grid_pts[s].x, step);
        // Polish: restart from the result with a smaller simplex.
        auto r2 = detail::nelder_mead(zobj, r.x, step * 1e-3);
        if (r2.value <= r.value) r = r2;
        if (std::isfinite(r.value)) cands.push_back({sub.clamp(sub.to_x(r.x)), r.value});
    }
    for (const auto& g : grid_pts) {
        if (g.value > grid_pts.front().value + opt.tie_tol) break;
        cands.push_back({sub.clamp(sub.to_x(g.x)), g.value});
    }
    return detail::select_candidate(std::move(cands), opt);
}

struct UniquenessProbe {
    bool unique = true;
    Point minimizer;
    Point alternative;  // set when a second minimizer was found
    double objective = 0.0;
};

/// Restarts Nelder-Mead from points displaced around the oracle minimizer and
/// reports a second minimizer with the same objective, if one exists.
template <class Loss>
UniquenessProbe probe_uniqueness(const Loss& loss, const WeightedEnsemble& ens, Side side, const Domain& domain,
                                 const BruteForceOptions& opt = {}) {
    const CentroidResult base = brute_force_centroid(loss, ens, side, domain, opt);
    UniquenessProbe probe;
    probe.minimizer = base.point;
    probe.objective = base.objective;
    probe.alternative = base.point;

    const detail::Subspace sub = detail::make_subspace(domain, opt);
    const int m = static_cast<int>(sub.N.cols());
    auto objective = [&](const Vector& x) {
        try {
            return expected_loss_at(loss, ens, side, x);
        } catch (const Error&) {
            return kInf;
        }
    };
    auto zobj = [&](const Vector& z) {
        const Vector x = sub.to_x(z);
        return sub.in_box(x) ? objective(sub.clamp(x)) : kInf;
    };
    const Vector z0 = sub.N.transpose() * (base.point - sub.x0);
    const Vector spacing = (sub.zhi - sub.zlo) / (std::max(opt.grid, 2) - 1);
    for (int j = 0; j < m; ++j) {
        for (double k : {2.0, -2.0, 5.0, -5.0, 10.0, -10.0}) {
            Vector z = z0;
            z[j] = std::clamp(z[j] + k * spacing[j], sub.zlo[j], sub.zhi[j]);
            if (!std::isfinite(zobj(z))) continue;
            const auto r = detail::nelder_mead(zobj, z, spacing * 0.5);
            const Vector x = sub.clamp(sub.to_x(r.x));
            if (r.value <= probe.objective + opt.tie_tol &&
                (x - probe.minimizer).cwiseAbs().maxCoeff() > opt.distinct_tol) {
                probe.unique = false;
                probe.alternative = x;
                return probe;
            }
        }
    }
    if (base.non_unique) probe.unique = false;
    return probe;
}

}  // namespace bvd
