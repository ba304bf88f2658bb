#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace bvd;

namespace {

struct Entry {
    std::string label;
    GBregmanDivergence div;
    std::function<double(const Vector&, const Vector&)> reference;
    std::function<Point(std::mt19937_64&)> sample;
};

std::vector<Entry> gbregman_entries(int d) {
    std::mt19937_64 rng(99);
    const Matrix K = oracle::random_spd(rng, d);
    auto box = [d](double lo, double hi) {
        return [d, lo, hi](std::mt19937_64& r) { return oracle::random_point(r, d, lo, hi); };
    };
    std::vector<Entry> out{
        {"sq_euclidean", catalog::sq_euclidean(d), [K](auto& t, auto& y) { return (t - y).squaredNorm(); }, box(-3, 3)},
        {"mahalanobis", catalog::mahalanobis(K), [K](auto& t, auto& y) { return oracle::mahalanobis(K, t, y); },
         box(-3, 3)},
        {"g_mahalanobis_log", catalog::g_mahalanobis("log", K, Domain::box(d, 0, 10)),
         [K](auto& t, auto& y) {
             return oracle::mahalanobis(K, Vector(t.array().log()), Vector(y.array().log()));
         },
         box(0.05, 5)},
        {"kl", catalog::kl(d), oracle::kl, box(0.01, 1)},
        {"reverse_kl", catalog::reverse_kl(d), oracle::reverse_kl, box(0.01, 1)},
        {"alpha_0.3", catalog::alpha(0.3, d), [](auto& t, auto& y) { return oracle::alpha(0.3, t, y); }, box(0.01, 1)},
        {"alpha_0.5", catalog::alpha(0.5, d), [](auto& t, auto& y) { return oracle::alpha(0.5, t, y); }, box(0.01, 1)},
        {"alpha_0.7", catalog::alpha(0.7, d), [](auto& t, auto& y) { return oracle::alpha(0.7, t, y); }, box(0.01, 1)},
        {"bernoulli_kl", catalog::bernoulli_kl(d), oracle::bernoulli, box(0.01, 0.99)},
    };
    if (d == 2)
        out.push_back({"gaussian_canonical", catalog::gaussian_canonical(), oracle::gaussian, [](std::mt19937_64& r) {
                           std::uniform_real_distribution<double> m(-2, 2), s(0.2, 3);
                           return point({m(r), s(r)});
                       }});
    return out;
}

}  // namespace

TEST(Eval, Fixtures) {
    EXPECT_DOUBLE_EQ(catalog::sq_euclidean(2)(point({0, 0}), point({3, 4})), 25.0);
    EXPECT_DOUBLE_EQ(catalog::kl(2)(point({0.5, 0.5}), point({0.5, 0.5})), 0.0);
    EXPECT_NEAR(catalog::kl(2)(point({1, 0}), point({0.5, 0.5})), std::log(2.0), 1e-15);
}

TEST(Eval, BoundaryNamesCoordinate) {
    try {
        catalog::kl(2)(point({0.5, 0.5}), point({0.5, 0.0}));
        FAIL() << "expected BoundaryError";
    } catch (const BoundaryError& e) {
        EXPECT_EQ(e.coordinate(), 1);
    }
}

TEST(Eval, InfeasiblePointRejected) {
    EXPECT_THROW(catalog::kl(2)(point({1.5, 0.5}), point({0.5, 0.5})), ValidationError);
    EXPECT_THROW(catalog::kl(2)(point({0.5, 0.5}), point({0.5, 0.5, 0.1})), ValidationError);
}

TEST(Concise, Fixtures) {
    EXPECT_DOUBLE_EQ(catalog::sq_euclidean(1).eval_concise(point({0}), point({2})), 4.0);
    EXPECT_NEAR(catalog::kl(2).eval_concise(point({0.3, 0.7}), point({0.3, 0.7})), 0.0, 1e-15);
    const auto rkl = catalog::reverse_kl(2);
    const double direct = 0.25 * std::log(0.25 / 0.5) + 0.75 * std::log(0.75 / 0.5);
    EXPECT_NEAR(direct, 0.130812, 1e-6);
    EXPECT_NEAR(rkl.eval(point({0.5, 0.5}), point({0.25, 0.75})), direct, 1e-12);
    EXPECT_NEAR(rkl.eval_concise(point({0.5, 0.5}), point({0.25, 0.75})), direct, 1e-12);
}

TEST(DualPair, ClosedForms) {
    {
        auto [B, f] = dual_pair(catalog::sq_euclidean(2));
        const Point y = point({1.5, -2});
        EXPECT_LT((f(y) - 2 * y).norm(), 1e-14);
        EXPECT_NEAR(B(point({2, 4})), 20.0 / 4, 1e-14);
    }
    {
        auto [B, f] = dual_pair(catalog::kl(2));
        const Point y = point({0.3, 0.6});
        EXPECT_NEAR(f(y)[0], std::log(0.3), 1e-15);
        EXPECT_NEAR(f(y)[1], std::log(0.6), 1e-15);
        EXPECT_NEAR(B(point({0.1, -0.4})), std::exp(0.1) + std::exp(-0.4), 1e-15);
    }
    {
        const auto rkl = catalog::reverse_kl(2);
        const Point y = point({0.3, 0.6});
        EXPECT_NEAR(rkl.mapping()(y)[0], std::log(0.3), 1e-15);
        EXPECT_NEAR(rkl.generator()(point({0.1, -0.4})), std::exp(0.1) + std::exp(-0.4), 1e-15);
        auto [B, f] = dual_pair(rkl);
        EXPECT_TRUE(f.identity);
        EXPECT_NEAR(B(y), 0.3 * std::log(0.3) + 0.6 * std::log(0.6) - 0.9, 1e-15);
    }
}

TEST(Reverse, Fixtures) {
    const auto kl = catalog::kl(2);
    const auto r = reverse(kl);
    EXPECT_NEAR(r.eval(point({0.25, 0.75}), point({0.5, 0.5})), 0.143841, 1e-6);
    EXPECT_NEAR(r.eval(point({0.25, 0.75}), point({0.5, 0.5})), oracle::kl(point({0.5, 0.5}), point({0.25, 0.75})),
                1e-14);

    const auto sq = catalog::sq_euclidean(2);
    const auto rsq = reverse(sq);
    std::mt19937_64 rng(1);
    for (int k = 0; k < 100; ++k) {
        const Point t = oracle::random_point(rng, 2, -3, 3), y = oracle::random_point(rng, 2, -3, 3);
        EXPECT_NEAR(rsq(t, y), sq(t, y), 1e-12);
        EXPECT_NEAR(reverse(reverse(kl))(t.cwiseAbs() / 3, y.cwiseAbs() / 3 + Vector::Constant(2, 0.01)),
                    kl(t.cwiseAbs() / 3, y.cwiseAbs() / 3 + Vector::Constant(2, 0.01)), 1e-9);
    }
}

class CatalogProperties : public ::testing::TestWithParam<int> {};

TEST_P(CatalogProperties, MatchReferenceAndAxioms) {
    const int d = GetParam();
    std::mt19937_64 rng(1000 + d);
    for (const auto& e : gbregman_entries(d)) {
        SCOPED_TRACE(e.label);
        const auto rev = reverse(e.div);
        for (int k = 0; k < 1000; ++k) {
            const Point t = e.sample(rng), y = e.sample(rng);
            const double v = e.div(t, y);
            ASSERT_GE(v, 0.0);
            ASSERT_NEAR(e.div(t, t), 0.0, 1e-12);
            ASSERT_NEAR(v, e.reference(t, y), 1e-9 * (1 + std::abs(v)));
            ASSERT_NEAR(e.div.eval_concise(t, y), v, 1e-9 * (1 + std::abs(v)));
            ASSERT_NEAR(rev.eval(y, t), v, 1e-9 * (1 + std::abs(v)));
        }
    }
}

TEST_P(CatalogProperties, DualityRoundTrips) {
    const int d = GetParam();
    std::mt19937_64 rng(2000 + d);
    for (const auto& e : gbregman_entries(d)) {
        SCOPED_TRACE(e.label);
        const auto& A = e.div.generator();
        const auto& B = e.div.dual_generator();
        const auto& g = e.div.mapping();
        const auto& f = e.div.dual_mapping();
        for (int k = 0; k < 100; ++k) {
            const Point y = e.sample(rng);
            const Vector gy = g(y), fy = f(y);
            ASSERT_LT((g.inverse(gy) - y).cwiseAbs().maxCoeff(), 1e-10 * (1 + y.cwiseAbs().maxCoeff()));
            ASSERT_LT((f.inverse(fy) - y).cwiseAbs().maxCoeff(), 1e-9 * (1 + y.cwiseAbs().maxCoeff()));
            ASSERT_LT((A.gradient(gy) - fy).cwiseAbs().maxCoeff(), 1e-8 * (1 + fy.cwiseAbs().maxCoeff()));
            ASSERT_LT((B.gradient(fy) - gy).cwiseAbs().maxCoeff(), 1e-8 * (1 + gy.cwiseAbs().maxCoeff()));
            // Fenchel-Young equality at the dual point.
            ASSERT_NEAR(A(gy) + B(fy), gy.dot(fy), 1e-9 * (1 + std::abs(gy.dot(fy))));

            // Gradient against central differences.
            const double h = 1e-6 * (1 + gy.cwiseAbs().maxCoeff());
            for (int i = 0; i < d; ++i) {
                Vector up = gy, dn = gy;
                up[i] += h;
                dn[i] -= h;
                const double fd = (A(up) - A(dn)) / (2 * h);
                ASSERT_NEAR(fd, A.gradient(gy)[i], 1e-6 * (1 + std::abs(fd)));
            }
            // Strict convexity along a random chord.
            const Vector gz = g(e.sample(rng));
            if ((gz - gy).norm() > 1e-6) ASSERT_LT(A(0.5 * (gy + gz)), 0.5 * A(gy) + 0.5 * A(gz) - 1e-14);
        }
    }
}

INSTANTIATE_TEST_SUITE_P(Dims, CatalogProperties, ::testing::Values(1, 2, 3));

TEST(Catalog, Fixtures) {
    EXPECT_DOUBLE_EQ(std::get<GBregmanDivergence>(catalog::make("mahalanobis"))(point({0, 0}), point({3, 4})), 25.0);
    EXPECT_NEAR(catalog::alpha(0.5, 2)(point({0.5, 0.5}), point({0.5, 0.5})), 0.0, 1e-15);
    EXPECT_NEAR(catalog::gaussian_canonical()(point({0, 1}), point({1, 1})), 0.5, 1e-14);
}

TEST(Catalog, Errors) {
    Matrix notpd(2, 2);
    notpd << 1, 2, 2, 1;
    EXPECT_THROW(catalog::mahalanobis(notpd), ValidationError);
    EXPECT_THROW(catalog::alpha(0.0, 2), ValidationError);
    EXPECT_THROW(catalog::alpha(1.0, 2), ValidationError);
    EXPECT_THROW(catalog::make("hinge"), ValidationError);
    EXPECT_THROW(catalog::minkowski(2.5, 1), ValidationError);
    EXPECT_THROW(catalog::minkowski(0.0, 1), ValidationError);
}

TEST(Catalog, NonBregmanEntriesArePlainLosses) {
    EXPECT_TRUE(std::holds_alternative<LossFunction>(catalog::make("l1")));
    catalog::Params p;
    p.epsilon = 1.5;
    EXPECT_TRUE(std::holds_alternative<LossFunction>(catalog::make("minkowski", p)));
    p.epsilon = 2.0;
    EXPECT_TRUE(std::holds_alternative<GBregmanDivergence>(catalog::make("minkowski", p)));
    const auto zo = catalog::zero_one_grid(1, {0, 1, 2});
    EXPECT_FALSE(zo.smooth);
    EXPECT_EQ(zo(point({1}), point({1})), 0.0);
    EXPECT_EQ(zo(point({1}), point({2})), 1.0);
    for (const auto& name : catalog::names()) EXPECT_NO_THROW(catalog::make(name)) << name;
}

TEST(Gaussian, CanonicalMatchesMomentForm) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> m(-2, 2), s(0.2, 3);
    const auto div = catalog::gaussian_canonical();
    for (int k = 0; k < 500; ++k) {
        const Point t = point({m(rng), s(rng)}), y = point({m(rng), s(rng)});
        const double moment = catalog::gaussian_kl_moment(t, y);
        const double canonical =
            catalog::gaussian_kl_canonical(catalog::gaussian_to_canonical(t), catalog::gaussian_to_canonical(y));
        ASSERT_NEAR(moment, canonical, 1e-9 * (1 + moment));
        ASSERT_NEAR(div(t, y), moment, 1e-9 * (1 + moment));
        ASSERT_GE(moment, 0.0);
    }
}

TEST(Alpha, Limits) {
    const std::vector<std::pair<Point, Point>> probes{{point({0.3, 0.7}), point({0.6, 0.4})},
                                                      {point({0.1, 0.9}), point({0.5, 0.5})},
                                                      {point({0.8, 0.25}), point({0.2, 0.6})}};
    const auto near_kl = catalog::alpha(1 - 1e-4, 2);
    const auto near_rkl = catalog::alpha(1e-4, 2);
    for (const auto& [t, y] : probes) {
        EXPECT_NEAR(near_kl(t, y), oracle::kl(t, y), 1e-3);
        EXPECT_NEAR(near_rkl(t, y), oracle::reverse_kl(t, y), 1e-3);
    }
}

namespace {

// A(u) = sum u^4/4 + u^2/2 has no closed-form gradient inverse.
GBregmanDivergence quartic() {
    Generator A;
    A.domain = Domain::unbounded(1);
    A.value = [](const Vector& u) { return (u.array().pow(4) / 4 + u.array().square() / 2).sum(); };
    A.gradient = [](const Vector& u) { return Vector(u.array().pow(3) + u.array()); };
    A.hessian = [](const Vector& u) { return Matrix((3 * u.array().square() + 1).matrix().asDiagonal()); };
    Mapping g;
    g.name = "identity";
    g.identity = true;
    g.forward = [](const Vector& y) { return y; };
    g.inverse = [](const Vector& v) { return v; };
    return GBregmanDivergence::from_generator("quartic", A, g, Domain::box(1, -5, 5));
}

}  // namespace

TEST(NewtonDual, InverseAndConjugacy) {
    const auto div = quartic();
    EXPECT_TRUE(div.dual_is_newton());
    const auto& f = div.dual_mapping();
    const auto& B = div.dual_generator();
    const auto& A = div.generator();
    for (double y : {-3.0, -0.5, 0.0, 0.7, 2.5}) {
        const Point p = point({y});
        EXPECT_NEAR(f.inverse(f(p))[0], y, 1e-10);
        // B(v) = sup_u (u v - A(u)), evaluated by a 1-D search.
        const double v = f(p)[0];
        const double u = oracle::golden([&](double x) { return -(x * v - A(point({x}))); }, -10, 10);
        EXPECT_NEAR(B(point({v})), u * v - A(point({u})), 1e-9 * (1 + std::abs(v)));
    }
    const auto rev = reverse(div);
    EXPECT_NEAR(rev(point({0.3}), point({-1.2})), div(point({-1.2}), point({0.3})), 1e-9);
}

TEST(NewtonDual, NonConvergenceReportsResidual) {
    // grad A = tanh is bounded, so grad A(u) = 2 has no solution.
    Generator A;
    A.domain = Domain::box(1, -20, 20);
    A.value = [](const Vector& u) { return std::log(std::cosh(u[0])); };
    A.gradient = [](const Vector& u) { return Vector(u.array().tanh()); };
    Mapping g;
    g.name = "identity";
    g.identity = true;
    g.forward = [](const Vector& y) { return y; };
    g.inverse = [](const Vector& v) { return v; };
    const auto div = GBregmanDivergence::from_generator("logcosh", A, g, Domain::box(1, -20, 20));
    try {
        div.dual_mapping().inverse(point({2.0}));
        FAIL() << "expected ConvergenceError";
    } catch (const ConvergenceError& e) {
        EXPECT_GT(e.residual(), 0.5);
    }
}
