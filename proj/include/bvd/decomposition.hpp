#pragma once
// Bias-variance decompositions:
//   E L(T, Y) = E L(T, t*) + L(t*, y*) + E L(y*, Y) + gap
// The gap is always reported; it is zero exactly for clean decompositions.

#include "bvd/catalog.hpp"
#include "bvd/centroids.hpp"

namespace bvd {

struct DecompositionReport {
    std::string divergence;
    int d = 0;
    std::size_t n_labels = 0;
    std::size_t n_preds = 0;
    double expected_loss = 0.0;
    double intrinsic_noise = 0.0;
    double bias = 0.0;
    double variance = 0.0;
    double gap = 0.0;
    Point central_label;
    Point central_prediction;
    std::optional<Vector> multipliers;
    std::string method;
    bool non_unique = false;
    std::vector<std::string> warnings;

    void finish() { gap = expected_loss - intrinsic_noise - bias - variance; }
};

/// E_{T,Y} L(T, Y) over independent label and prediction ensembles.
template <class Loss>
double expected_pair_loss(const Loss& loss, const WeightedEnsemble& labels, const WeightedEnsemble& preds) {
    double acc = 0.0;
    for (std::size_t k = 0; k < labels.size(); ++k) {
        double row = 0.0;
        for (std::size_t l = 0; l < preds.size(); ++l) row += preds.weight(l) * loss(labels.point(k), preds.point(l));
        acc += labels.weight(k) * row;
    }
    if (!std::isfinite(acc)) throw NumericalError("expected loss is not finite");
    return acc;
}

namespace detail {

inline DecompositionReport report_header(const std::string& name, const WeightedEnsemble& labels,
                                         const WeightedEnsemble& preds) {
    if (labels.dim() != preds.dim()) throw ValidationError("labels and predictions differ in dimension");
    DecompositionReport r;
    r.divergence = name;
    r.d = labels.dim();
    r.n_labels = labels.size();
    r.n_preds = preds.size();
    return r;
}

}  // namespace detail

/// Evaluates the three terms directly for supplied centroids.
template <class Loss>
DecompositionReport decompose_with_centroids(const Loss& loss, const std::string& name, const WeightedEnsemble& labels,
                                             const WeightedEnsemble& preds, const Point& t_star,
                                             const Point& y_star) {
    DecompositionReport r = detail::report_header(name, labels, preds);
    r.central_label = t_star;
    r.central_prediction = y_star;
    r.expected_loss = expected_pair_loss(loss, labels, preds);
    r.intrinsic_noise = expected_loss_at(loss, labels, Side::second_arg, t_star);
    r.bias = loss(t_star, y_star);
    r.variance = expected_loss_at(loss, preds, Side::first_arg, y_star);
    r.finish();
    return r;
}

/// Centroids from the brute-force oracle, terms by direct evaluation.
inline DecompositionReport decompose_generic(const LossFunction& loss, const WeightedEnsemble& labels,
                                             const WeightedEnsemble& preds, const Domain& domain,
                                             const BruteForceOptions& opt = {}) {
    if (!labels.within(domain) || !preds.within(domain))
        throw ValidationError("ensemble points must lie in the domain");
    const CentroidResult t = brute_force_centroid(loss, labels, Side::second_arg, domain, opt);
    const CentroidResult y = brute_force_centroid(loss, preds, Side::first_arg, domain, opt);
    DecompositionReport r = decompose_with_centroids(loss, loss.name, labels, preds, t.point, y.point);
    r.method = "brute_force";
    r.non_unique = t.non_unique || y.non_unique;
    return r;
}

/// Closed form for g-Bregman divergences without equality constraints:
/// noise = E A(g(T)) - A(g(t)), variance = E B(f(Y)) - B(f(y)).
inline DecompositionReport decompose_gbregman(const GBregmanDivergence& div, const WeightedEnsemble& labels,
                                              const WeightedEnsemble& preds) {
    if (div.domain().has_equality())
        throw ValidationError("decompose_gbregman applies to inequality-only domains; use decompose_constrained_bregman");
    const CentroidResult t = g_mean_label(div, labels);
    const CentroidResult y = f_mean_prediction(div, preds);
    const auto& A = div.generator();
    const auto& B = div.dual_generator();
    const auto& g = div.mapping();
    const auto& f = div.dual_mapping();

    DecompositionReport r = detail::report_header(div.name(), labels, preds);
    r.method = "closed_form";
    r.central_label = t.point;
    r.central_prediction = y.point;
    r.expected_loss = expected_pair_loss(div, labels, preds);
    r.intrinsic_noise = labels.expectation_scalar([&](const Point& x) { return A(g(x)); }) - A(g(t.point));
    r.bias = div.eval(t.point, y.point);
    r.variance = preds.expectation_scalar([&](const Point& x) { return B(f(x)); }) - B(f(y.point));
    r.finish();
    return r;
}

/// Linear equality constraints W y = b. For g = identity the central label is
/// the plain mean and variance = lambda' b + E B(f(Y)) - B(f(y*)); for
/// f = identity the roles flip and lambda' b moves into the noise term.
inline DecompositionReport decompose_constrained_bregman(const GBregmanDivergence& div,
                                                         const WeightedEnsemble& labels,
                                                         const WeightedEnsemble& preds, const Domain& domain) {
    const GBregmanDivergence d = div.with_domain(domain);
    if (!labels.within(domain) || !preds.within(domain))
        throw ValidationError("ensemble points must lie in the constrained domain");
    const auto& A = d.generator();
    const auto& B = d.dual_generator();
    const auto& g = d.mapping();
    const auto& f = d.dual_mapping();

    DecompositionReport r = detail::report_header(d.name(), labels, preds);
    r.expected_loss = expected_pair_loss(d, labels, preds);
    const Vector& b = domain.eq_rhs();

    if (g.identity) {
        const CentroidResult t = g_mean_label(d, labels);
        const CentroidResult y = constrained_central_prediction(d, preds, domain);
        r.method = "lagrange";
        r.central_label = t.point;
        r.central_prediction = y.point;
        r.multipliers = y.multipliers;
        r.intrinsic_noise = labels.expectation_scalar([&](const Point& x) { return A(x); }) - A(t.point);
        r.bias = d.eval(t.point, y.point);
        const double lb = y.multipliers.size() ? y.multipliers.dot(b) : 0.0;
        r.variance = lb + preds.expectation_scalar([&](const Point& x) { return B(f(x)); }) - B(f(y.point));
    } else if (f.identity) {
        const CentroidResult t = constrained_central_label(d, labels, domain);
        const CentroidResult y = f_mean_prediction(d, preds);
        r.method = "lagrange_label";
        r.central_label = t.point;
        r.central_prediction = y.point;
        r.multipliers = t.multipliers;
        const double lb = t.multipliers.size() ? t.multipliers.dot(b) : 0.0;
        r.intrinsic_noise = labels.expectation_scalar([&](const Point& x) { return A(g(x)); }) - A(g(t.point)) + lb;
        r.bias = d.eval(t.point, y.point);
        r.variance = preds.expectation_scalar([&](const Point& x) { return B(x); }) - B(y.point);
    } else {
        throw ValidationError("constrained closed form needs g = identity or f = identity");
    }
    r.finish();
    return r;
}

/// Which loss terms get their arguments swapped.
struct OrderingSwap {
    bool noise = false;     // L(t*, T) instead of L(T, t*)
    bool bias = false;      // L(y*, t*) instead of L(t*, y*)
    bool variance = false;  // L(Y, y*) instead of L(y*, Y)
};

/// Additivity gap with some terms argument-swapped; centroids are the closed-form means.
inline double ordering_violation_gap(const GBregmanDivergence& div, const WeightedEnsemble& labels,
                                     const WeightedEnsemble& preds, OrderingSwap swap) {
    const Point t = g_mean_label(div, labels).point;
    const Point y = f_mean_prediction(div, preds).point;
    const double expected = expected_pair_loss(div, labels, preds);
    const double noise = labels.expectation_scalar([&](const Point& x) { return swap.noise ? div(t, x) : div(x, t); });
    const double bias = swap.bias ? div(y, t) : div(t, y);
    const double variance =
        preds.expectation_scalar([&](const Point& x) { return swap.variance ? div(x, y) : div(y, x); });
    return expected - noise - bias - variance;
}

// ---------------------------------------------------------------------------
// Exponential-family negative log-likelihood for one observation z.

struct ExponentialFamily {
    std::string name;
    /// Log-partition function over canonical parameters.
    Generator log_partition;
    std::function<Vector(const Vector&)> sufficient_statistic;
    std::function<double(const Vector&)> log_base;

    /// -log p(z; theta) including every constant.
    double neg_log_likelihood(const Vector& z, const Vector& theta) const {
        return -theta.dot(sufficient_statistic(z)) + log_partition(theta) - log_base(z);
    }
};

/// Univariate Gaussian: phi(z) = (z, z^2), h = 1, theta = (m/s, -1/(2s)).
inline ExponentialFamily gaussian_family() {
    ExponentialFamily fam;
    fam.name = "gaussian";
    fam.log_partition = catalog::gaussian_canonical().generator();
    fam.sufficient_statistic = [](const Vector& z) {
        Vector phi(2);
        phi << z[0], z[0] * z[0];
        return phi;
    };
    fam.log_base = [](const Vector&) { return 0.0; };
    return fam;
}

/// E[-log p(z; Theta)] = -log p(z; theta*) + (E B(Theta) - B(theta*)) with
/// theta* = E Theta, the canonical parameter of the f-mean prediction. The
/// bias may be negative; there is no noise term.
inline DecompositionReport exp_family_loglik_decompose(const ExponentialFamily& fam, const Vector& z,
                                                       const WeightedEnsemble& canonical_preds) {
    const Generator& B = fam.log_partition;
    for (std::size_t k = 0; k < canonical_preds.size(); ++k)
        if (!B.domain.contains(canonical_preds.point(k)))
            throw ValidationError("canonical parameter outside the log-partition domain at support point " +
                                  std::to_string(k));
    DecompositionReport r;
    r.divergence = fam.name + "_loglik";
    r.d = canonical_preds.dim();
    r.n_labels = 1;
    r.n_preds = canonical_preds.size();
    r.method = "loglik";
    const Vector theta_star = canonical_preds.mean();
    r.central_label = fam.sufficient_statistic(z);
    r.central_prediction = theta_star;
    r.expected_loss =
        canonical_preds.expectation_scalar([&](const Point& th) { return fam.neg_log_likelihood(z, th); });
    r.intrinsic_noise = 0.0;
    r.bias = fam.neg_log_likelihood(z, theta_star);
    r.variance = canonical_preds.expectation_scalar([&](const Point& th) { return B(th); }) - B(theta_star);
    r.finish();
    return r;
}

// ---------------------------------------------------------------------------

/// Picks the appropriate route for a catalog entry: closed form, Lagrange, or
/// the brute-force oracle (with a warning when a g-Bregman divergence has
/// equality constraints that neither closed form covers).
inline DecompositionReport decompose(const CatalogEntry& entry, const WeightedEnsemble& labels,
                                     const WeightedEnsemble& preds, const std::optional<Domain>& domain = std::nullopt,
                                     const BruteForceOptions& opt = {}) {
    if (const auto* div = std::get_if<GBregmanDivergence>(&entry)) {
        const Domain dom = domain.value_or(div->domain());
        if (!dom.has_equality()) return decompose_gbregman(div->with_domain(dom), labels, preds);
        if (div->mapping().identity || div->dual_mapping().identity)
            return decompose_constrained_bregman(*div, labels, preds, dom);
        auto r = decompose_generic(div->with_domain(dom).as_loss(), labels, preds, dom, opt);
        r.warnings.push_back("equality constraints with nonlinear g and f: centroids from brute force");
        return r;
    }
    const auto& loss = std::get<LossFunction>(entry);
    return decompose_generic(loss, labels, preds, domain.value_or(loss.domain), opt);
}

/// Centroid of one ensemble, routed like decompose(). Side::second_arg gives
/// the central label, Side::first_arg the central prediction.
inline CentroidResult centroid(const CatalogEntry& entry, const WeightedEnsemble& ens, Side side,
                               const std::optional<Domain>& domain = std::nullopt, const BruteForceOptions& opt = {}) {
    if (const auto* div = std::get_if<GBregmanDivergence>(&entry)) {
        const Domain dom = domain.value_or(div->domain());
        const GBregmanDivergence d = div->with_domain(dom);
        if (!dom.has_equality()) return side == Side::second_arg ? g_mean_label(d, ens) : f_mean_prediction(d, ens);
        if (side == Side::first_arg && d.mapping().identity) return constrained_central_prediction(d, ens, dom);
        if (side == Side::second_arg && d.dual_mapping().identity) return constrained_central_label(d, ens, dom);
        auto r = brute_force_centroid(d.as_loss(), ens, side, dom, opt);
        r.warnings.push_back("no closed form for this constrained centroid: brute force");
        return r;
    }
    const auto& loss = std::get<LossFunction>(entry);
    return brute_force_centroid(loss, ens, side, domain.value_or(loss.domain), opt);
}

}  // namespace bvd
