#pragma once
// Derivative-free minimization used by the brute-force centroid oracle.

#include "bvd/core.hpp"

namespace bvd::detail {

struct NelderMeadResult {
    Vector x;
    double value = kInf;
    int iterations = 0;
};

/// Standard Nelder-Mead (reflection 1, expansion 2, contraction 1/2, shrink 1/2).
/// Non-finite objective values are treated as +inf.
template <class Fn>
NelderMeadResult nelder_mead(Fn&& fn, const Vector& start, const Vector& step, double xtol = 1e-11,
                             double ftol = 1e-15, int max_iter = 4000) {
    const int n = static_cast<int>(start.size());
    auto f = [&](const Vector& x) {
        double v;
        try {
            v = fn(x);
        } catch (const Error&) {
            return kInf;
        }
        return std::isfinite(v) ? v : kInf;
    };
    std::vector<Vector> simplex(n + 1, start);
    std::vector<double> vals(n + 1);
    for (int i = 0; i < n; ++i) simplex[i + 1][i] += step[i];
    for (int i = 0; i <= n; ++i) vals[i] = f(simplex[i]);

    std::vector<int> order(n + 1);
    int it = 0;
    for (; it < max_iter; ++it) {
        for (int i = 0; i <= n; ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return vals[a] < vals[b]; });
        const int best = order.front(), worst = order.back(), second = order[n - 1];

        double size = 0.0;
        for (int i = 0; i <= n; ++i) size = std::max(size, (simplex[i] - simplex[best]).cwiseAbs().maxCoeff());
        const double spread = vals[worst] - vals[best];
        if (size <= xtol && (spread <= ftol * (1.0 + std::abs(vals[best])) || !std::isfinite(spread))) break;
        if (size <= 1e-3 * xtol) break;

        Vector centroid = Vector::Zero(n);
        for (int i = 0; i <= n; ++i)
            if (i != worst) centroid += simplex[i];
        centroid /= n;

        const Vector xr = centroid + (centroid - simplex[worst]);
        const double fr = f(xr);
        if (fr < vals[best]) {
            const Vector xe = centroid + 2.0 * (centroid - simplex[worst]);
            const double fe = f(xe);
            if (fe < fr) {
                simplex[worst] = xe;
                vals[worst] = fe;
            } else {
                simplex[worst] = xr;
                vals[worst] = fr;
            }
            continue;
        }
        if (fr < vals[second]) {
            simplex[worst] = xr;
            vals[worst] = fr;
            continue;
        }
        const bool outside = fr < vals[worst];
        const Vector xc = outside ? Vector(centroid + 0.5 * (xr - centroid))
                                  : Vector(centroid + 0.5 * (simplex[worst] - centroid));
        const double fc = f(xc);
        if (fc < (outside ? fr : vals[worst])) {
            simplex[worst] = xc;
            vals[worst] = fc;
            continue;
        }
        for (int i = 0; i <= n; ++i) {
            if (i == best) continue;
            simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
            vals[i] = f(simplex[i]);
        }
    }
    int best = 0;
    for (int i = 1; i <= n; ++i)
        if (vals[i] < vals[best]) best = i;
    return {simplex[best], vals[best], it};
}

}  // namespace bvd::detail
