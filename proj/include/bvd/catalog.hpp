#pragma once
// Named divergences: the classic Bregman/g-Bregman examples with closed-form
// duals, plus non-Bregman losses used as counterexamples.

#include "bvd/divergences.hpp"

#include <numbers>
#include <variant>

namespace bvd {

using CatalogEntry = std::variant<GBregmanDivergence, LossFunction>;

namespace detail {

inline constexpr double kTiny = 1e-300;

inline Vector point2(double a, double b) {
    Vector v(2);
    v << a, b;
    return v;
}

inline double xlogx(double x, int i) {
    if (x < 0.0) throw BoundaryError("x log x of a negative value", i);
    return x == 0.0 ? 0.0 : x * std::log(x);
}

inline double safe_log(double x, int i) {
    if (!(x >= kTiny)) throw BoundaryError("log of a value below 1e-300", i);
    return std::log(x);
}

inline double nonneg_pow(double x, double p, int i) {
    if (x < 0.0) throw BoundaryError("fractional power of a negative value", i);
    if (x == 0.0 && p < 0.0) throw BoundaryError("negative power of zero", i);
    return std::pow(x, p);
}

template <class Fn>
Vector map_coords(const Vector& x, Fn&& fn) {
    Vector out(x.size());
    for (int i = 0; i < x.size(); ++i) out[i] = fn(x[i], i);
    return out;
}

inline Mapping identity_mapping() {
    Mapping m;
    m.name = "identity";
    m.identity = true;
    m.forward = [](const Vector& y) { return y; };
    m.inverse = [](const Vector& v) { return v; };
    m.jacobian = [](const Vector& y) { return Matrix(Matrix::Identity(y.size(), y.size())); };
    return m;
}

/// Scalar bijection applied coordinatewise.
struct ScalarMap {
    std::string name;
    std::function<double(double, int)> fwd;
    std::function<double(double, int)> inv;
    std::function<double(double, int)> deriv;
};

inline ScalarMap scalar_map(const std::string& name) {
    if (name == "identity")
        return {name, [](double x, int) { return x; }, [](double v, int) { return v; },
                [](double, int) { return 1.0; }};
    if (name == "log")
        return {name, [](double x, int i) { return safe_log(x, i); }, [](double v, int) { return std::exp(v); },
                [](double x, int i) {
                    if (!(x >= kTiny)) throw BoundaryError("derivative of log below 1e-300", i);
                    return 1.0 / x;
                }};
    if (name == "exp")
        return {name, [](double x, int) { return std::exp(x); }, [](double v, int i) { return safe_log(v, i); },
                [](double x, int) { return std::exp(x); }};
    if (name == "sqrt")
        return {name, [](double x, int i) { return nonneg_pow(x, 0.5, i); },
                [](double v, int i) {
                    if (v < 0.0) throw BoundaryError("inverse sqrt of a negative value", i);
                    return v * v;
                },
                [](double x, int i) { return 0.5 / nonneg_pow(x, 0.5, i); }};
    throw ValidationError("unknown coordinate map: " + name);
}

inline Mapping coordinatewise(const ScalarMap& s) {
    if (s.name == "identity") return identity_mapping();
    Mapping m;
    m.name = s.name;
    m.forward = [s](const Vector& y) { return map_coords(y, s.fwd); };
    m.inverse = [s](const Vector& v) { return map_coords(v, s.inv); };
    m.jacobian = [s](const Vector& y) { return Matrix(map_coords(y, s.deriv).asDiagonal()); };
    return m;
}

inline Matrix checked_pd(const Matrix& K, int d) {
    if (K.rows() != d || K.cols() != d) throw ValidationError("K must be d x d");
    if (!K.allFinite() || !K.isApprox(K.transpose(), 1e-12))
        throw ValidationError("K must be symmetric");
    Eigen::LLT<Matrix> llt(K);
    if (llt.info() != Eigen::Success) throw ValidationError("K is not positive definite");
    return K;
}

inline GBregmanDivergence quadratic(std::string name, const Matrix& K, Mapping g, const Domain& dom) {
    const Matrix Kinv = K.inverse();
    const int d = static_cast<int>(K.rows());
    Generator A;
    A.domain = Domain::unbounded(d);
    A.value = [K](const Vector& u) { return u.dot(K * u); };
    A.gradient = [K](const Vector& u) { return Vector(2.0 * K * u); };
    A.hessian = [K](const Vector&) { return Matrix(2.0 * K); };

    Generator B;
    B.domain = Domain::unbounded(d);
    B.value = [Kinv](const Vector& v) { return 0.25 * v.dot(Kinv * v); };
    B.gradient = [Kinv](const Vector& v) { return Vector(0.5 * Kinv * v); };
    B.hessian = [Kinv](const Vector&) { return Matrix(0.5 * Kinv); };

    Mapping f;
    f.name = g.identity ? "2K" : "2K*" + g.name;
    f.forward = [K, g](const Vector& y) { return Vector(2.0 * K * g.forward(y)); };
    f.inverse = [Kinv, g](const Vector& v) { return g.inverse(0.5 * Kinv * v); };
    f.jacobian = [K, g](const Vector& y) { return Matrix(2.0 * K * g.jacobian_at(y)); };
    return GBregmanDivergence(std::move(name), std::move(A), std::move(g), std::move(B), std::move(f), dom);
}

inline void check_dim(int d, const Domain& dom) {
    if (d < 1) throw ValidationError("dimension must be >= 1");
    if (dom.dim() != d) throw ValidationError("domain dimension does not match");
}

}  // namespace detail

namespace catalog {

/// ||t - y||^2.
inline GBregmanDivergence sq_euclidean(int d, std::optional<Domain> dom = std::nullopt) {
    Domain D = dom.value_or(Domain::unbounded(d));
    detail::check_dim(d, D);
    auto out = detail::quadratic("sq_euclidean", Matrix::Identity(d, d), detail::identity_mapping(), D);
    out.set_param("d", d);
    return out;
}

/// (t - y)' K (t - y), K positive definite.
inline GBregmanDivergence mahalanobis(const Matrix& K, std::optional<Domain> dom = std::nullopt) {
    const int d = static_cast<int>(K.rows());
    Domain D = dom.value_or(Domain::unbounded(d));
    detail::check_dim(d, D);
    auto out = detail::quadratic("mahalanobis", detail::checked_pd(K, d), detail::identity_mapping(), D);
    out.set_param("d", d);
    return out;
}

/// (g(t) - g(y))' K (g(t) - g(y)) for a coordinatewise bijection g.
inline GBregmanDivergence g_mahalanobis(const std::string& map, const Matrix& K,
                                        std::optional<Domain> dom = std::nullopt) {
    const int d = static_cast<int>(K.rows());
    Domain D = dom.value_or(map == "log" || map == "sqrt" ? Domain::box(Vector::Zero(d), Vector::Constant(d, kInf))
                                                          : Domain::unbounded(d));
    detail::check_dim(d, D);
    auto out = detail::quadratic("g_mahalanobis", detail::checked_pd(K, d),
                                 detail::coordinatewise(detail::scalar_map(map)), D);
    out.set_param("d", d);
    return out;
}

/// Generalized KL: sum t log(t/y) + sum y - sum t. Default domain [0,1]^d.
inline GBregmanDivergence kl(int d, std::optional<Domain> dom = std::nullopt) {
    Domain D = dom.value_or(Domain::box(d, 0.0, 1.0));
    detail::check_dim(d, D);
    using detail::map_coords;
    Generator A;
    A.domain = Domain::box(Vector::Zero(d), Vector::Constant(d, kInf));
    A.value = [](const Vector& u) {
        double s = 0.0;
        for (int i = 0; i < u.size(); ++i) s += detail::xlogx(u[i], i) - u[i];
        return s;
    };
    A.gradient = [](const Vector& u) { return map_coords(u, detail::safe_log); };
    A.hessian = [](const Vector& u) {
        return Matrix(map_coords(u, [](double x, int i) { return 1.0 / std::exp(detail::safe_log(x, i)); })
                          .asDiagonal());
    };

    Generator B;
    B.domain = Domain::unbounded(d);
    B.value = [](const Vector& v) { return v.array().exp().sum(); };
    B.gradient = [](const Vector& v) { return Vector(v.array().exp()); };
    B.hessian = [](const Vector& v) { return Matrix(Vector(v.array().exp()).asDiagonal()); };

    Mapping f = detail::coordinatewise(detail::scalar_map("log"));
    auto out = GBregmanDivergence("kl", std::move(A), detail::identity_mapping(), std::move(B), std::move(f), D);
    out.set_param("d", d);
    return out;
}

/// sum y log(y/t) + sum t - sum y, i.e. kl with arguments swapped.
inline GBregmanDivergence reverse_kl(int d, std::optional<Domain> dom = std::nullopt) {
    const GBregmanDivergence r = kl(d, dom).reversed();
    GBregmanDivergence out("reverse_kl", r.generator(), r.mapping(), r.dual_generator(), r.dual_mapping(),
                           r.domain());
    out.set_param("d", d);
    return out;
}

/// Alpha-divergence for 0 < alpha < 1 with g_i(y) = y_i^alpha / (1 - alpha) and
/// A(u) = (1-alpha)^((1-alpha)/alpha) sum u_i^(1/alpha).
inline GBregmanDivergence alpha(double a, int d, std::optional<Domain> dom = std::nullopt) {
    if (!(a > 0.0 && a < 1.0)) throw ValidationError("alpha must lie in (0,1)");
    Domain D = dom.value_or(Domain::box(d, 0.0, 1.0));
    detail::check_dim(d, D);
    using detail::map_coords;
    using detail::nonneg_pow;
    const double c = std::pow(1.0 - a, (1.0 - a) / a);
    const double cb = std::pow(a, a / (1.0 - a));

    Generator A;
    A.domain = Domain::box(Vector::Zero(d), Vector::Constant(d, kInf));
    A.value = [a, c](const Vector& u) {
        double s = 0.0;
        for (int i = 0; i < u.size(); ++i) s += nonneg_pow(u[i], 1.0 / a, i);
        return c * s;
    };
    A.gradient = [a, c](const Vector& u) {
        return map_coords(u, [a, c](double x, int i) { return c / a * nonneg_pow(x, 1.0 / a - 1.0, i); });
    };
    A.hessian = [a, c](const Vector& u) {
        return Matrix(map_coords(u, [a, c](double x, int i) {
                          return c / a * (1.0 / a - 1.0) * nonneg_pow(x, 1.0 / a - 2.0, i);
                      }).asDiagonal());
    };

    Generator B;
    B.domain = Domain::box(Vector::Zero(d), Vector::Constant(d, kInf));
    B.value = [a, cb](const Vector& v) {
        double s = 0.0;
        for (int i = 0; i < v.size(); ++i) s += nonneg_pow(v[i], 1.0 / (1.0 - a), i);
        return cb * s;
    };
    B.gradient = [a, cb](const Vector& v) {
        return map_coords(v, [a, cb](double x, int i) { return cb / (1.0 - a) * nonneg_pow(x, a / (1.0 - a), i); });
    };
    B.hessian = [a, cb](const Vector& v) {
        return Matrix(map_coords(v, [a, cb](double x, int i) {
                          return cb * a / ((1.0 - a) * (1.0 - a)) * nonneg_pow(x, a / (1.0 - a) - 1.0, i);
                      }).asDiagonal());
    };

    Mapping g;
    g.name = "power";
    g.forward = [a](const Vector& y) {
        return map_coords(y, [a](double x, int i) { return nonneg_pow(x, a, i) / (1.0 - a); });
    };
    g.inverse = [a](const Vector& u) {
        return map_coords(u, [a](double x, int i) { return nonneg_pow((1.0 - a) * x, 1.0 / a, i); });
    };
    g.jacobian = [a](const Vector& y) {
        return Matrix(map_coords(y, [a](double x, int i) { return a / (1.0 - a) * nonneg_pow(x, a - 1.0, i); })
                          .asDiagonal());
    };

    Mapping f;
    f.name = "power_dual";
    f.forward = [a](const Vector& y) {
        return map_coords(y, [a](double x, int i) { return nonneg_pow(x, 1.0 - a, i) / a; });
    };
    f.inverse = [a](const Vector& v) {
        return map_coords(v, [a](double x, int i) { return nonneg_pow(a * x, 1.0 / (1.0 - a), i); });
    };
    f.jacobian = [a](const Vector& y) {
        return Matrix(map_coords(y, [a](double x, int i) { return (1.0 - a) / a * nonneg_pow(x, -a, i); })
                          .asDiagonal());
    };

    auto out = GBregmanDivergence("alpha", std::move(A), std::move(g), std::move(B), std::move(f), D);
    out.set_param("alpha", a);
    out.set_param("d", d);
    return out;
}

/// KL between univariate Gaussians N(m_y, s_y) || N(m_t, s_t) with points
/// (m, s), s the variance; g maps to canonical parameters, f to moments.
inline GBregmanDivergence gaussian_canonical(std::optional<Domain> dom = std::nullopt) {
    Domain D = dom.value_or(Domain::box(detail::point2(-kInf, 0.0), detail::point2(kInf, kInf)));
    detail::check_dim(2, D);
    constexpr double pi = std::numbers::pi;

    Generator A;
    A.domain = Domain::box(detail::point2(-kInf, -kInf), detail::point2(kInf, 0.0));
    A.value = [](const Vector& u) {
        if (!(u[1] < 0.0)) throw BoundaryError("canonical precision parameter must be negative", 1);
        return -u[0] * u[0] / (4.0 * u[1]) - 0.5 * std::log(-u[1] / pi);
    };
    A.gradient = [](const Vector& u) {
        if (!(u[1] < 0.0)) throw BoundaryError("canonical precision parameter must be negative", 1);
        return detail::point2(-u[0] / (2.0 * u[1]), u[0] * u[0] / (4.0 * u[1] * u[1]) - 1.0 / (2.0 * u[1]));
    };
    A.hessian = [](const Vector& u) {
        Matrix H(2, 2);
        H(0, 0) = -1.0 / (2.0 * u[1]);
        H(0, 1) = H(1, 0) = u[0] / (2.0 * u[1] * u[1]);
        H(1, 1) = -u[0] * u[0] / (2.0 * u[1] * u[1] * u[1]) + 1.0 / (2.0 * u[1] * u[1]);
        return H;
    };

    Generator B;
    B.domain = Domain::unbounded(2);
    B.value = [](const Vector& v) {
        const double s = v[1] - v[0] * v[0];
        if (!(s > detail::kTiny)) throw BoundaryError("second moment below squared mean", 1);
        return -0.5 - 0.5 * std::log(2.0 * pi * s);
    };
    B.gradient = [](const Vector& v) {
        const double s = v[1] - v[0] * v[0];
        if (!(s > detail::kTiny)) throw BoundaryError("second moment below squared mean", 1);
        return detail::point2(v[0] / s, -1.0 / (2.0 * s));
    };
    B.hessian = [](const Vector& v) {
        const double s = v[1] - v[0] * v[0];
        Matrix H(2, 2);
        H(0, 0) = 1.0 / s + 2.0 * v[0] * v[0] / (s * s);
        H(0, 1) = H(1, 0) = -v[0] / (s * s);
        H(1, 1) = 1.0 / (2.0 * s * s);
        return H;
    };

    Mapping g;
    g.name = "gaussian_natural";
    g.forward = [](const Vector& y) {
        if (!(y[1] > detail::kTiny)) throw BoundaryError("variance must be positive", 1);
        return detail::point2(y[0] / y[1], -1.0 / (2.0 * y[1]));
    };
    g.inverse = [](const Vector& u) {
        if (!(u[1] < 0.0)) throw BoundaryError("canonical precision parameter must be negative", 1);
        return detail::point2(-u[0] / (2.0 * u[1]), -1.0 / (2.0 * u[1]));
    };
    g.jacobian = [](const Vector& y) {
        Matrix J(2, 2);
        J << 1.0 / y[1], -y[0] / (y[1] * y[1]), 0.0, 1.0 / (2.0 * y[1] * y[1]);
        return J;
    };

    Mapping f;
    f.name = "gaussian_moments";
    f.forward = [](const Vector& y) { return detail::point2(y[0], y[0] * y[0] + y[1]); };
    f.inverse = [](const Vector& v) { return detail::point2(v[0], v[1] - v[0] * v[0]); };
    f.jacobian = [](const Vector& y) {
        Matrix J(2, 2);
        J << 1.0, 0.0, 2.0 * y[0], 1.0;
        return J;
    };
    auto out = GBregmanDivergence("gaussian_canonical", std::move(A), std::move(g), std::move(B), std::move(f), D);
    out.set_param("d", 2);
    return out;
}

/// Sum of independent Bernoulli KL terms t log(t/y) + (1-t) log((1-t)/(1-y)).
inline GBregmanDivergence bernoulli_kl(int d = 1, std::optional<Domain> dom = std::nullopt) {
    Domain D = dom.value_or(Domain::box(d, 0.0, 1.0));
    detail::check_dim(d, D);
    using detail::map_coords;
    Generator A;
    A.domain = Domain::box(d, 0.0, 1.0);
    A.value = [](const Vector& u) {
        double s = 0.0;
        for (int i = 0; i < u.size(); ++i) s += detail::xlogx(u[i], i) + detail::xlogx(1.0 - u[i], i);
        return s;
    };
    A.gradient = [](const Vector& u) {
        return map_coords(u, [](double x, int i) { return detail::safe_log(x, i) - detail::safe_log(1.0 - x, i); });
    };
    A.hessian = [](const Vector& u) {
        return Matrix(map_coords(u, [](double x, int i) {
                          detail::safe_log(x, i);
                          detail::safe_log(1.0 - x, i);
                          return 1.0 / (x * (1.0 - x));
                      }).asDiagonal());
    };

    auto sigmoid = [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); };
    Generator B;
    B.domain = Domain::unbounded(d);
    B.value = [](const Vector& v) {
        double s = 0.0;
        for (int i = 0; i < v.size(); ++i) s += std::max(v[i], 0.0) + std::log1p(std::exp(-std::abs(v[i])));
        return s;
    };
    B.gradient = [sigmoid](const Vector& v) { return map_coords(v, [sigmoid](double x, int) { return sigmoid(x); }); };
    B.hessian = [sigmoid](const Vector& v) {
        return Matrix(map_coords(v, [sigmoid](double x, int) {
                          const double s = sigmoid(x);
                          return s * (1.0 - s);
                      }).asDiagonal());
    };

    Mapping f;
    f.name = "logit";
    f.forward = A.gradient;
    f.inverse = B.gradient;
    f.jacobian = A.hessian;
    auto out = GBregmanDivergence("bernoulli_kl", std::move(A), detail::identity_mapping(), std::move(B),
                                  std::move(f), D);
    out.set_param("d", d);
    return out;
}

/// sum |t_i - y_i|^eps. Not a g-Bregman divergence unless eps == 2.
inline LossFunction minkowski_loss(double eps, int d, std::optional<Domain> dom = std::nullopt) {
    if (!(eps > 0.0 && eps <= 2.0)) throw ValidationError("minkowski exponent must lie in (0,2]");
    Domain D = dom.value_or(Domain::unbounded(d));
    detail::check_dim(d, D);
    LossFunction L;
    L.name = eps == 1.0 ? "l1" : "minkowski";
    L.dim = d;
    L.domain = D;
    L.eval = [eps](const Point& t, const Point& y) {
        double s = 0.0;
        for (int i = 0; i < t.size(); ++i) s += std::pow(std::abs(t[i] - y[i]), eps);
        return s;
    };
    return L;
}

/// Minkowski entry: the g-Bregman squared Euclidean distance for eps == 2,
/// a plain loss otherwise.
inline CatalogEntry minkowski(double eps, int d, std::optional<Domain> dom = std::nullopt) {
    if (eps == 2.0) return sq_euclidean(d, dom);
    return minkowski_loss(eps, d, dom);
}

inline LossFunction l1(int d, std::optional<Domain> dom = std::nullopt) { return minkowski_loss(1.0, d, dom); }

/// 0-1 loss on the finite grid levels^d.
inline LossFunction zero_one_grid(int d, std::vector<double> levels) {
    if (levels.empty()) throw ValidationError("zero_one_grid needs levels");
    const auto [lo, hi] = std::minmax_element(levels.begin(), levels.end());
    LossFunction L;
    L.name = "zero_one_grid";
    L.dim = d;
    L.domain = Domain::box(d, *lo, *hi).with_grid(levels);
    L.smooth = false;
    L.eval = [](const Point& t, const Point& y) { return t == y ? 0.0 : 1.0; };
    return L;
}

// Closed forms of the Gaussian KL, used to cross-check the g-Bregman entry.

/// KL in canonical parameters theta = (m/s, -1/(2s)) of label t and prediction y.
inline double gaussian_kl_canonical(const Vector& t, const Vector& y) {
    return -0.5 + y[0] * t[0] / (2.0 * y[1]) - y[0] * y[0] * t[1] / (4.0 * y[1] * y[1]) + t[1] / (2.0 * y[1]) -
           t[0] * t[0] / (4.0 * t[1]) - 0.5 * std::log(t[1] / y[1]);
}

/// Same divergence in (mean, variance) coordinates.
inline double gaussian_kl_moment(const Vector& t, const Vector& y) {
    const double r = y[1] / t[1];
    return (y[0] - t[0]) * (y[0] - t[0]) / (2.0 * t[1]) - 0.5 * (1.0 - r + std::log(r));
}

inline Vector gaussian_to_canonical(const Vector& mv) { return detail::point2(mv[0] / mv[1], -1.0 / (2.0 * mv[1])); }

// ---------------------------------------------------------------------------

struct Params {
    int d = 2;
    double alpha = 0.5;
    double epsilon = 1.5;
    std::optional<Matrix> K;
    std::string map = "identity";
    std::vector<double> levels{0.0, 1.0, 2.0};
    std::optional<Domain> domain;
};

inline const std::vector<std::string>& names() {
    static const std::vector<std::string> n{"sq_euclidean", "mahalanobis",    "kl",           "reverse_kl",
                                            "alpha",        "gaussian_canonical", "bernoulli_kl", "g_mahalanobis",
                                            "minkowski",    "l1",             "zero_one_grid"};
    return n;
}

inline CatalogEntry make(const std::string& name, const Params& p = {}) {
    const Matrix K = p.K.value_or(Matrix::Identity(p.d, p.d));
    if (name == "sq_euclidean") return sq_euclidean(p.d, p.domain);
    if (name == "mahalanobis") return mahalanobis(K, p.domain);
    if (name == "g_mahalanobis") return g_mahalanobis(p.map, K, p.domain);
    if (name == "kl") return kl(p.d, p.domain);
    if (name == "reverse_kl") return reverse_kl(p.d, p.domain);
    if (name == "alpha") return alpha(p.alpha, p.d, p.domain);
    if (name == "gaussian_canonical") return gaussian_canonical(p.domain);
    if (name == "bernoulli_kl") return bernoulli_kl(p.d, p.domain);
    if (name == "minkowski") return minkowski(p.epsilon, p.d, p.domain);
    if (name == "l1") return l1(p.d, p.domain);
    if (name == "zero_one_grid") return zero_one_grid(p.d, p.levels);
    throw ValidationError("unknown divergence name: " + name);
}

}  // namespace catalog

inline LossFunction as_loss(const CatalogEntry& e) {
    if (auto* d = std::get_if<GBregmanDivergence>(&e)) return d->as_loss();
    return std::get<LossFunction>(e);
}

}  // namespace bvd
