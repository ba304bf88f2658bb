#pragma once
// g-Bregman divergences D_A^g(t, y) = D_A(g(t), g(y)) together with their
// dual pair {B, f}: f = grad A o g, B the convex conjugate of A.

#include "bvd/core.hpp"

#include <map>
#include <memory>

namespace bvd {

/// Strictly convex scalar function on the image of a mapping.
struct Generator {
    std::function<double(const Vector&)> value;
    std::function<Vector(const Vector&)> gradient;
    std::function<Matrix(const Vector&)> hessian;  // optional
    Domain domain;

    double operator()(const Vector& u) const { return value(u); }
    Matrix hessian_at(const Vector& u) const;
};

/// Invertible coordinate map.
struct Mapping {
    std::string name;
    std::function<Vector(const Vector&)> forward;
    std::function<Vector(const Vector&)> inverse;
    std::function<Matrix(const Vector&)> jacobian;  // optional
    bool identity = false;
    /// inverse is computed by Newton iteration rather than in closed form
    bool newton_inverse = false;

    Vector operator()(const Vector& y) const { return forward(y); }
    Matrix jacobian_at(const Vector& y) const;
};

namespace detail {

/// Central-difference Jacobian of a vector function.
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& fn, const Vector& x) {
    const Vector f0 = fn(x);
    Matrix J(f0.size(), x.size());
    for (int j = 0; j < x.size(); ++j) {
        const double h = 1e-6 * (1.0 + std::abs(x[j]));
        Vector xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        J.col(j) = (fn(xp) - fn(xm)) / (2.0 * h);
    }
    return J;
}

/// A point strictly inside the box part of a domain, used as a Newton start.
inline Vector interior_point(const Domain& dom) {
    Vector x(dom.dim());
    for (int i = 0; i < dom.dim(); ++i) {
        const double lo = dom.lower()[i], hi = dom.upper()[i];
        if (std::isfinite(lo) && std::isfinite(hi))
            x[i] = 0.5 * (lo + hi);
        else if (std::isfinite(lo))
            x[i] = lo + 1.0;
        else if (std::isfinite(hi))
            x[i] = hi - 1.0;
        else
            x[i] = 0.0;
    }
    return x;
}

struct NewtonOptions {
    double tol = 1e-12;
    int max_iter = 100;
};

/// Solves F(x) = target by damped Newton. Falls back to bisection in 1-D when
/// Newton stalls and the domain supplies a bracket.
inline Vector newton_solve(const std::function<Vector(const Vector&)>& F,
                           const std::function<Matrix(const Vector&)>& J, const Vector& target, Vector x,
                           const Domain& dom, const NewtonOptions& opt = {}) {
    auto residual = [&](const Vector& z, Vector& r) -> bool {
        try {
            r = F(z) - target;
        } catch (const NumericalError&) {
            return false;
        }
        return r.allFinite();
    };
    auto scale = 1.0 + target.cwiseAbs().maxCoeff();
    Vector r;
    if (!residual(x, r)) throw ConvergenceError("Newton start point is not evaluable", kInf);
    double rn = r.cwiseAbs().maxCoeff();
    for (int it = 0; it < opt.max_iter && rn > opt.tol * scale; ++it) {
        Matrix Jx = J ? J(x) : fd_jacobian(F, x);
        Vector step = Jx.fullPivLu().solve(-r);
        if (!step.allFinite()) break;
        double damp = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls, damp *= 0.5) {
            Vector xn = x + damp * step;
            bool inside = true;
            for (int i = 0; i < xn.size(); ++i)
                if (xn[i] < dom.lower()[i] || xn[i] > dom.upper()[i]) inside = false;
            if (!inside) continue;
            Vector rnext;
            if (!residual(xn, rnext)) continue;
            const double rnn = rnext.cwiseAbs().maxCoeff();
            if (rnn < rn || rnn <= opt.tol * scale) {
                x = xn;
                r = rnext;
                rn = rnn;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
    }
    if (rn <= opt.tol * scale) return x;

    if (x.size() == 1 && std::isfinite(dom.lower()[0]) && std::isfinite(dom.upper()[0])) {
        // Monotone 1-D fallback.
        double lo = dom.lower()[0], hi = dom.upper()[0];
        auto eval = [&](double z) {
            Vector zz(1);
            zz[0] = z;
            Vector rr;
            if (!residual(zz, rr)) return std::numeric_limits<double>::quiet_NaN();
            return rr[0];
        };
        // Pull the endpoints inside until they evaluate.
        double flo = eval(lo), fhi = eval(hi);
        for (int k = 0; k < 200 && std::isnan(flo); ++k) flo = eval(lo = lo + (hi - lo) * 1e-3);
        for (int k = 0; k < 200 && std::isnan(fhi); ++k) fhi = eval(hi = hi - (hi - lo) * 1e-3);
        if (!std::isnan(flo) && !std::isnan(fhi) && flo * fhi <= 0.0) {
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                const double fm = eval(mid);
                if (std::isnan(fm)) break;
                if ((fm <= 0.0) == (flo <= 0.0)) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
                if (std::abs(fm) <= opt.tol * scale) {
                    lo = hi = mid;
                    break;
                }
            }
            Vector out(1);
            out[0] = 0.5 * (lo + hi);
            Vector rr;
            if (residual(out, rr) && std::abs(rr[0]) <= opt.tol * scale * 1e3) return out;
            rn = std::abs(rr.size() ? rr[0] : rn);
        }
    }
    throw ConvergenceError("Newton inverse failed to converge", rn);
}

inline double clamp_divergence(double value, double magnitude, const char* what) {
    if (value >= 0.0) return value;
    if (value >= -1e-12 * (1.0 + magnitude)) return 0.0;
    throw ConvexityError(std::string(what) + ": negative divergence " + std::to_string(value) +
                         " (generator not convex here?)");
}

inline int first_nonfinite(const Vector& v) {
    for (int i = 0; i < v.size(); ++i)
        if (!std::isfinite(v[i])) return i;
    return -1;
}

}  // namespace detail

inline Matrix Generator::hessian_at(const Vector& u) const {
    if (hessian) return hessian(u);
    Matrix H = detail::fd_jacobian(gradient, u);
    return 0.5 * (H + H.transpose());
}

inline Matrix Mapping::jacobian_at(const Vector& y) const {
    if (identity) return Matrix::Identity(y.size(), y.size());
    if (jacobian) return jacobian(y);
    return detail::fd_jacobian(forward, y);
}

/// Dual pair {B, f} of {A, g} derived numerically: f = grad A o g, with f^-1 and
/// B obtained by Newton-solving grad A(u) = v.
inline std::pair<Generator, Mapping> derive_dual(const Generator& A, const Mapping& g, const Domain& domain) {
    const Vector u0 = g.forward(detail::interior_point(domain));
    auto solve_u = [A, u0](const Vector& v) -> Vector {
        auto hess = [A](const Vector& u) { return A.hessian_at(u); };
        return detail::newton_solve(A.gradient, hess, v, u0, A.domain);
    };

    Mapping f;
    f.name = "grad(" + g.name + ")";
    f.newton_inverse = true;
    f.forward = [A, g](const Vector& y) { return A.gradient(g.forward(y)); };
    f.inverse = [g, solve_u](const Vector& v) { return g.inverse(solve_u(v)); };
    f.jacobian = [A, g](const Vector& y) { return Matrix(A.hessian_at(g.forward(y)) * g.jacobian_at(y)); };

    Generator B;
    B.domain = Domain::unbounded(domain.dim());
    B.value = [A, solve_u](const Vector& v) {
        const Vector u = solve_u(v);
        return u.dot(v) - A.value(u);
    };
    B.gradient = [solve_u](const Vector& v) { return solve_u(v); };
    B.hessian = [A, solve_u](const Vector& v) {
        const Matrix H = A.hessian_at(solve_u(v));
        return Matrix(H.inverse());
    };
    return {std::move(B), std::move(f)};
}

// ---------------------------------------------------------------------------

class GBregmanDivergence {
public:
    GBregmanDivergence() = default;

    GBregmanDivergence(std::string name, Generator A, Mapping g, Generator B, Mapping f, Domain domain)
        : name_(std::move(name)),
          A_(std::move(A)),
          g_(std::move(g)),
          B_(std::move(B)),
          f_(std::move(f)),
          domain_(std::move(domain)) {
        if (domain_.dim() < 1) throw ValidationError("divergence domain must have dimension >= 1");
    }

    /// Builds the divergence from {A, g} alone; the dual pair is derived numerically.
    static GBregmanDivergence from_generator(std::string name, Generator A, Mapping g, Domain domain) {
        auto [B, f] = derive_dual(A, g, domain);
        return GBregmanDivergence(std::move(name), std::move(A), std::move(g), std::move(B), std::move(f),
                                  std::move(domain));
    }

    const std::string& name() const { return name_; }
    const Generator& generator() const { return A_; }
    const Mapping& mapping() const { return g_; }
    const Generator& dual_generator() const { return B_; }
    const Mapping& dual_mapping() const { return f_; }
    const Domain& domain() const { return domain_; }
    int dim() const { return domain_.dim(); }
    bool dual_is_newton() const { return f_.newton_inverse || g_.newton_inverse; }

    const std::map<std::string, double>& params() const { return params_; }
    double param(const std::string& key) const {
        auto it = params_.find(key);
        if (it == params_.end()) throw ValidationError("divergence '" + name_ + "' has no parameter " + key);
        return it->second;
    }
    GBregmanDivergence& set_param(const std::string& key, double v) {
        params_[key] = v;
        return *this;
    }

    GBregmanDivergence with_domain(Domain d) const {
        if (d.dim() != dim()) throw ValidationError("domain dimension does not match divergence");
        GBregmanDivergence out = *this;
        out.domain_ = std::move(d);
        return out;
    }

    /// Points must satisfy the bounds (and grid); equality constraints are not
    /// needed for the formula to be defined.
    void require_feasible(const Point& p, const char* which) const {
        if (!domain_.without_equality().contains(p))
            throw ValidationError(std::string("infeasible ") + which + " point for divergence " + name_);
    }

    /// (g(y) - g(t))' grad A(g(y)) - A(g(y)) + A(g(t)).
    double eval(const Point& t, const Point& y) const {
        require_feasible(t, "label");
        require_feasible(y, "prediction");
        const Vector gt = g_.forward(t);
        const Vector gy = g_.forward(y);
        if (int i = detail::first_nonfinite(gt); i >= 0) throw BoundaryError("g(t) not finite", i);
        if (int i = detail::first_nonfinite(gy); i >= 0) throw BoundaryError("g(y) not finite", i);
        const Vector grad = A_.gradient(gy);
        if (int i = detail::first_nonfinite(grad); i >= 0) throw BoundaryError("grad A(g(y)) not finite", i);
        const double lin = (gy - gt).dot(grad);
        const double Ay = A_.value(gy);
        const double At = A_.value(gt);
        const double v = lin - Ay + At;
        if (!std::isfinite(v)) throw BoundaryError("divergence not finite", 0);
        return detail::clamp_divergence(v, std::abs(lin) + std::abs(Ay) + std::abs(At), name_.c_str());
    }

    /// A(g(t)) - f(y)' g(t) + B(f(y)).
    double eval_concise(const Point& t, const Point& y) const {
        require_feasible(t, "label");
        require_feasible(y, "prediction");
        const Vector gt = g_.forward(t);
        const Vector fy = f_.forward(y);
        if (int i = detail::first_nonfinite(gt); i >= 0) throw BoundaryError("g(t) not finite", i);
        if (int i = detail::first_nonfinite(fy); i >= 0) throw BoundaryError("f(y) not finite", i);
        const double At = A_.value(gt);
        const double cross = fy.dot(gt);
        const double By = B_.value(fy);
        const double v = At - cross + By;
        if (!std::isfinite(v)) throw BoundaryError("divergence not finite", 0);
        return detail::clamp_divergence(v, std::abs(At) + std::abs(cross) + std::abs(By), name_.c_str());
    }

    double operator()(const Point& t, const Point& y) const { return eval(t, y); }

    /// D_B^f: reversed(div).eval(y, t) == div.eval(t, y).
    GBregmanDivergence reversed() const {
        static const std::string prefix = "reverse(";
        std::string n;
        if (name_.rfind(prefix, 0) == 0 && name_.back() == ')')
            n = name_.substr(prefix.size(), name_.size() - prefix.size() - 1);
        else
            n = prefix + name_ + ")";
        GBregmanDivergence out(n, B_, f_, A_, g_, domain_);
        out.params_ = params_;
        return out;
    }

    LossFunction as_loss() const {
        LossFunction L;
        L.name = name_;
        L.dim = dim();
        L.domain = domain_;
        L.eval = [self = std::make_shared<GBregmanDivergence>(*this)](const Point& t, const Point& y) {
            return self->eval(t, y);
        };
        return L;
    }

private:
    std::string name_;
    Generator A_;
    Mapping g_;
    Generator B_;
    Mapping f_;
    Domain domain_;
    std::map<std::string, double> params_;
};

inline std::pair<Generator, Mapping> dual_pair(const GBregmanDivergence& div) {
    return {div.dual_generator(), div.dual_mapping()};
}

inline GBregmanDivergence reverse(const GBregmanDivergence& div) { return div.reversed(); }

}  // namespace bvd
