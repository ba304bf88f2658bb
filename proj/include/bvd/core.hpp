#pragma once
// Shared domain types: points, weighted ensembles, feasible domains and the
// generic loss-function interface.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bvd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Point = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Errors. ValidationError is a caller mistake; everything else derived from
// NumericalError is a failure of the computation itself.

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

/// Evaluation hit a coordinate where a log/power form is undefined.
class BoundaryError : public NumericalError {
public:
    BoundaryError(const std::string& what, int coordinate)
        : NumericalError(what + " (coordinate " + std::to_string(coordinate) + ")"),
          coordinate_(coordinate) {}
    int coordinate() const { return coordinate_; }

private:
    int coordinate_;
};

class ConvexityError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class ConvergenceError : public NumericalError {
public:
    ConvergenceError(const std::string& what, double residual)
        : NumericalError(what + " (last residual " + std::to_string(residual) + ")"),
          residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

/// A centroid left the feasible set; the caller should use a constrained solver.
class InfeasibleError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

inline constexpr double kFeasibilityTol = 1e-10;
inline constexpr double kWeightSumTol = 1e-12;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline bool all_finite(const Vector& v) { return v.allFinite(); }

// ---------------------------------------------------------------------------

/// Feasible set: per-coordinate bounds intersected with W y = b, optionally
/// restricted to a finite grid of levels per coordinate.
class Domain {
public:
    Domain() = default;

    static Domain unbounded(int dim) {
        if (dim < 1) throw ValidationError("domain dimension must be >= 1");
        Domain d;
        d.dim_ = dim;
        d.lower_ = Vector::Constant(dim, -std::numeric_limits<double>::infinity());
        d.upper_ = Vector::Constant(dim, std::numeric_limits<double>::infinity());
        d.eq_lhs_ = Matrix(0, dim);
        d.eq_rhs_ = Vector(0);
        return d;
    }

    static Domain box(const Vector& lower, const Vector& upper) {
        if (lower.size() != upper.size()) throw ValidationError("box bounds differ in length");
        Domain d = unbounded(static_cast<int>(lower.size()));
        for (int i = 0; i < lower.size(); ++i) {
            if (std::isnan(lower[i]) || std::isnan(upper[i]) || lower[i] > upper[i])
                throw ValidationError("invalid box bounds at coordinate " + std::to_string(i));
        }
        d.lower_ = lower;
        d.upper_ = upper;
        return d;
    }

    static Domain box(int dim, double lo, double hi) {
        return box(Vector::Constant(dim, lo), Vector::Constant(dim, hi));
    }

    /// [0,1]^d with one row of ones, rhs 1.
    static Domain simplex(int dim) {
        return box(dim, 0.0, 1.0).with_equality(Matrix::Ones(1, dim), Vector::Ones(1));
    }

    Domain with_equality(const Matrix& W, const Vector& b) const {
        if (W.cols() != dim_) throw ValidationError("equality matrix has wrong column count");
        if (W.rows() != b.size()) throw ValidationError("equality rhs has wrong length");
        if (W.rows() > dim_) throw ValidationError("more equality rows than dimensions");
        if (!W.allFinite() || !b.allFinite()) throw ValidationError("non-finite equality constraint");
        if (W.rows() > 0) {
            Eigen::FullPivLU<Matrix> lu(W);
            if (lu.rank() != W.rows()) throw ValidationError("equality matrix must have full row rank");
        }
        Domain d = *this;
        d.eq_lhs_ = W;
        d.eq_rhs_ = b;
        return d;
    }

    Domain with_grid(std::vector<double> levels) const {
        if (levels.empty()) throw ValidationError("grid needs at least one level");
        std::sort(levels.begin(), levels.end());
        Domain d = *this;
        d.grid_ = std::move(levels);
        return d;
    }

    Domain without_equality() const {
        Domain d = *this;
        d.eq_lhs_ = Matrix(0, dim_);
        d.eq_rhs_ = Vector(0);
        return d;
    }

    int dim() const { return dim_; }
    const Vector& lower() const { return lower_; }
    const Vector& upper() const { return upper_; }
    const Matrix& eq_lhs() const { return eq_lhs_; }
    const Vector& eq_rhs() const { return eq_rhs_; }
    int kappa() const { return static_cast<int>(eq_lhs_.rows()); }
    bool has_equality() const { return eq_lhs_.rows() > 0; }
    bool bounded() const { return lower_.allFinite() && upper_.allFinite(); }
    const std::optional<std::vector<double>>& grid() const { return grid_; }
    bool discrete() const { return grid_.has_value(); }

    bool has_lower() const {
        return std::any_of(lower_.data(), lower_.data() + dim_, [](double v) { return std::isfinite(v); });
    }
    bool has_upper() const {
        return std::any_of(upper_.data(), upper_.data() + dim_, [](double v) { return std::isfinite(v); });
    }

    double equality_residual(const Vector& y) const {
        if (!has_equality()) return 0.0;
        return (eq_lhs_ * y - eq_rhs_).cwiseAbs().maxCoeff();
    }

    bool contains(const Vector& y) const {
        if (y.size() != dim_ || !y.allFinite()) return false;
        for (int i = 0; i < dim_; ++i) {
            if (y[i] < lower_[i] || y[i] > upper_[i]) return false;
            if (grid_ && !std::binary_search(grid_->begin(), grid_->end(), y[i])) return false;
        }
        return equality_residual(y) <= kFeasibilityTol;
    }

    friend bool operator==(const Domain& a, const Domain& b) {
        auto same = [](const Vector& x, const Vector& y) {
            if (x.size() != y.size()) return false;
            for (int i = 0; i < x.size(); ++i)
                if (!(x[i] == y[i])) return false;
            return true;
        };
        return a.dim_ == b.dim_ && same(a.lower_, b.lower_) && same(a.upper_, b.upper_) &&
               a.eq_lhs_.rows() == b.eq_lhs_.rows() && a.eq_lhs_ == b.eq_lhs_ &&
               same(a.eq_rhs_, b.eq_rhs_) && a.grid_ == b.grid_;
    }

private:
    int dim_ = 0;
    Vector lower_;
    Vector upper_;
    Matrix eq_lhs_;
    Vector eq_rhs_;
    std::optional<std::vector<double>> grid_;
};

// ---------------------------------------------------------------------------

/// Finite discrete distribution over points; weights always sum to one.
class WeightedEnsemble {
public:
    WeightedEnsemble() = default;

    std::size_t size() const { return points_.size(); }
    int dim() const { return points_.empty() ? 0 : static_cast<int>(points_.front().size()); }
    const Point& point(std::size_t k) const { return points_[k]; }
    double weight(std::size_t k) const { return weights_[k]; }
    const std::vector<Point>& points() const { return points_; }
    const std::vector<double>& weights() const { return weights_; }

    bool within(const Domain& domain) const {
        return std::all_of(points_.begin(), points_.end(), [&](const Point& p) { return domain.contains(p); });
    }

    /// Sum_k w_k fn(p_k), accumulated in support order.
    template <class Fn>
    Vector expectation(Fn&& fn) const {
        Vector acc;
        for (std::size_t k = 0; k < points_.size(); ++k) {
            Vector v = fn(points_[k]);
            if (!v.allFinite())
                throw NumericalError("non-finite value at support point " + std::to_string(k));
            if (k == 0) acc = Vector::Zero(v.size());
            if (v.size() != acc.size()) throw ValidationError("expectation: inconsistent output size");
            acc += weights_[k] * v;
        }
        return acc;
    }

    template <class Fn>
    double expectation_scalar(Fn&& fn) const {
        double acc = 0.0;
        for (std::size_t k = 0; k < points_.size(); ++k) {
            const double v = fn(points_[k]);
            if (!std::isfinite(v))
                throw NumericalError("non-finite value at support point " + std::to_string(k));
            acc += weights_[k] * v;
        }
        return acc;
    }

    Vector mean() const {
        return expectation([](const Point& p) { return p; });
    }

    friend bool operator==(const WeightedEnsemble& a, const WeightedEnsemble& b) {
        if (a.size() != b.size() || a.weights_ != b.weights_) return false;
        for (std::size_t k = 0; k < a.size(); ++k)
            if (a.points_[k].size() != b.points_[k].size() || a.points_[k] != b.points_[k]) return false;
        return true;
    }

    friend WeightedEnsemble make_ensemble(std::vector<Point> points, std::vector<double> weights);

private:
    std::vector<Point> points_;
    std::vector<double> weights_;
};

inline WeightedEnsemble make_ensemble(std::vector<Point> points, std::vector<double> weights) {
    if (points.empty()) throw ValidationError("ensemble needs at least one point");
    if (points.size() != weights.size()) throw ValidationError("points and weights differ in length");
    const auto d = points.front().size();
    if (d < 1) throw ValidationError("points must have dimension >= 1");
    double total = 0.0;
    for (std::size_t k = 0; k < points.size(); ++k) {
        if (points[k].size() != d) throw ValidationError("dimension mismatch at point " + std::to_string(k));
        if (!points[k].allFinite()) throw ValidationError("non-finite coordinate at point " + std::to_string(k));
        if (!std::isfinite(weights[k]) || weights[k] < 0.0)
            throw ValidationError("invalid weight at index " + std::to_string(k));
        total += weights[k];
    }
    if (total <= 0.0) throw ValidationError("weights are all zero");
    // Already-normalized weights are kept bit-for-bit so serialization round-trips.
    const double slack = 4.0 * std::numeric_limits<double>::epsilon() * static_cast<double>(weights.size());
    if (std::abs(total - 1.0) > slack)
        for (double& w : weights) w /= total;
    WeightedEnsemble e;
    e.points_ = std::move(points);
    e.weights_ = std::move(weights);
    return e;
}

/// Uniform weights over the given points.
inline WeightedEnsemble make_ensemble(std::vector<Point> points) {
    std::vector<double> w(points.size(), 1.0);
    return make_ensemble(std::move(points), std::move(w));
}

inline Point point(std::initializer_list<double> xs) {
    Point p(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) p[i++] = x;
    return p;
}

// ---------------------------------------------------------------------------

/// Black-box loss L(t, y): label first, prediction second.
struct LossFunction {
    std::string name;
    int dim = 0;
    std::function<double(const Point&, const Point&)> eval;
    Domain domain;
    /// False for losses without a meaningful mixed second derivative (0-1 loss).
    bool smooth = true;

    double operator()(const Point& t, const Point& y) const { return eval(t, y); }
};

/// Checks nonnegativity and identity of indiscernibles on the given pairs.
/// Returns the index of the first violating pair, or -1.
inline int check_loss_axioms(const LossFunction& loss, const std::vector<std::pair<Point, Point>>& pairs,
                             double tol = 1e-12) {
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto& [t, y] = pairs[k];
        if (std::abs(loss(t, t)) > tol) return static_cast<int>(k);
        if (loss(t, y) < -tol) return static_cast<int>(k);
    }
    return -1;
}

}  // namespace bvd
