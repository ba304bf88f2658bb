#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace bvd;

TEST(Generic, SquaredErrorSymmetricPredictions) {
    const auto sq = catalog::sq_euclidean(1, Domain::box(1, -3, 3));
    const auto r = decompose_generic(sq.as_loss(), make_ensemble({point({0})}), make_ensemble({point({-1}), point({1})}),
                                     sq.domain());
    EXPECT_NEAR(r.intrinsic_noise, 0.0, 1e-12);
    EXPECT_NEAR(r.bias, 0.0, 1e-12);
    EXPECT_NEAR(r.variance, 1.0, 1e-12);
    EXPECT_NEAR(r.gap, 0.0, 1e-12);
}

TEST(Generic, L1Witness) {
    const auto l1 = catalog::l1(1, Domain::box(1, 0, 1));
    const auto r = decompose_generic(l1, make_ensemble({point({0})}), make_ensemble({point({0}), point({1})}, {1, 2}),
                                     l1.domain);
    EXPECT_NEAR(r.expected_loss, 2.0 / 3, 1e-12);
    EXPECT_NEAR(r.central_prediction[0], 1.0, 1e-12);
    EXPECT_NEAR(r.bias, 1.0, 1e-12);
    EXPECT_NEAR(r.variance, 1.0 / 3, 1e-12);
    EXPECT_NEAR(r.gap, -2.0 / 3, 1e-12);
}

TEST(Generic, DegenerateEnsemblesGiveZeros) {
    const auto m = catalog::minkowski_loss(1.5, 2, Domain::box(2, 0, 1));
    const auto t = make_ensemble({point({0.3, 0.4})});
    const auto r = decompose_generic(m, t, t, m.domain);
    for (double v : {r.expected_loss, r.intrinsic_noise, r.bias, r.variance, r.gap}) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Closed, SquaredEuclideanFixture) {
    const auto r = decompose_gbregman(catalog::sq_euclidean(2), make_ensemble({point({0, 0}), point({2, 2})}),
                                      make_ensemble({point({1, 1}), point({3, 3})}));
    // E||T - (1,1)||^2 = 2, ||(1,1) - (2,2)||^2 = 2, E||(2,2) - Y||^2 = 2; expected loss (2 + 18 + 2 + 2) / 4 = 6.
    EXPECT_NEAR(r.expected_loss, 6.0, 1e-12);
    EXPECT_NEAR(r.intrinsic_noise, 2.0, 1e-12);
    EXPECT_NEAR(r.bias, 2.0, 1e-12);
    EXPECT_NEAR(r.variance, 2.0, 1e-12);
    EXPECT_NEAR(r.gap, 0.0, 1e-12);
    EXPECT_EQ(r.method, "closed_form");
}

TEST(Closed, KLBoxFixture) {
    const auto kl = catalog::kl(2);
    const auto labels = make_ensemble({point({0.5, 0.5})});
    const auto preds = make_ensemble({point({0.2, 0.8}), point({0.8, 0.2})});
    const auto r = decompose_gbregman(kl, labels, preds);
    const Point ybar = point({0.4, 0.4});
    EXPECT_NEAR(r.intrinsic_noise, 0.0, 1e-15);
    EXPECT_NEAR(r.bias, oracle::kl(point({0.5, 0.5}), ybar), 1e-12);
    EXPECT_NEAR(r.variance, 0.5 * (oracle::kl(ybar, point({0.2, 0.8})) + oracle::kl(ybar, point({0.8, 0.2}))), 1e-12);
    EXPECT_LT(std::abs(r.gap), 1e-9);

    const auto g = decompose_generic(kl.as_loss(), labels, preds, kl.domain());
    EXPECT_NEAR(g.bias, r.bias, 1e-5);
    EXPECT_NEAR(g.variance, r.variance, 1e-5);
}

TEST(Closed, RejectsEqualityConstraints) {
    EXPECT_THROW(decompose_gbregman(catalog::kl(2).with_domain(Domain::simplex(2)), make_ensemble({point({0.5, 0.5})}),
                                    make_ensemble({point({0.5, 0.5})})),
                 ValidationError);
}

TEST(Constrained, KLSimplexFixture) {
    const auto r = decompose_constrained_bregman(catalog::kl(2), make_ensemble({point({0.5, 0.5})}),
                                                 make_ensemble({point({0.2, 0.8}), point({0.8, 0.2})}),
                                                 Domain::simplex(2));
    const double direct = 0.5 * (oracle::kl(point({0.5, 0.5}), point({0.2, 0.8})) +
                                 oracle::kl(point({0.5, 0.5}), point({0.8, 0.2})));
    EXPECT_NEAR(direct, -std::log(0.8), 1e-15);
    EXPECT_NEAR(r.central_prediction[0], 0.5, 1e-10);
    EXPECT_NEAR(r.intrinsic_noise, 0.0, 1e-15);
    EXPECT_NEAR(r.bias, 0.0, 1e-12);
    EXPECT_NEAR(r.variance, -std::log(0.8), 1e-9);
    EXPECT_NEAR(r.expected_loss, direct, 1e-15);
    EXPECT_LT(std::abs(r.gap), 1e-12);
    ASSERT_TRUE(r.multipliers.has_value());
    EXPECT_NEAR((*r.multipliers)[0], -std::log(0.8), 1e-12);
    EXPECT_EQ(r.method, "lagrange");
}

TEST(Constrained, SinglePrediction) {
    const auto r = decompose_constrained_bregman(catalog::kl(2), make_ensemble({point({0.5, 0.5})}),
                                                 make_ensemble({point({0.3, 0.7})}), Domain::simplex(2));
    EXPECT_NEAR(r.variance, 0.0, 1e-12);
    EXPECT_NEAR((*r.multipliers)[0], 0.0, 1e-12);
}

TEST(Constrained, ReverseKLMirror) {
    const auto r = decompose_constrained_bregman(catalog::reverse_kl(2),
                                                 make_ensemble({point({0.2, 0.8}), point({0.8, 0.2})}),
                                                 make_ensemble({point({0.5, 0.5})}), Domain::simplex(2));
    EXPECT_EQ(r.method, "lagrange_label");
    EXPECT_NEAR(r.intrinsic_noise, -std::log(0.8), 1e-9);
    EXPECT_NEAR(r.bias, 0.0, 1e-12);
    EXPECT_NEAR(r.variance, 0.0, 1e-12);
    EXPECT_LT(std::abs(r.gap), 1e-12);
}

TEST(Constrained, RandomAdditivity) {
    std::mt19937_64 rng(13);
    for (int d : {2, 3, 4}) {
        const auto simplex = Domain::simplex(d);
        for (int k = 0; k < 50; ++k) {
            auto draw = [&](int n) {
                std::vector<Point> pts;
                for (int j = 0; j < n; ++j) {
                    Point p = oracle::random_point(rng, d, 0.01, 1);
                    pts.push_back(p / p.sum());
                }
                std::vector<double> w;
                for (int j = 0; j < n; ++j) w.push_back(0.1 + j);
                return make_ensemble(pts, w);
            };
            const auto labels = draw(1 + k % 4), preds = draw(1 + (k + 2) % 5);
            for (const auto& div : {catalog::kl(d), catalog::reverse_kl(d)}) {
                const auto r = decompose_constrained_bregman(div, labels, preds, simplex);
                ASSERT_LE(std::abs(r.gap), 1e-9 * (1 + std::abs(r.expected_loss))) << div.name();
                ASSERT_GE(r.intrinsic_noise, -1e-10);
                ASSERT_GE(r.bias, -1e-10);
                ASSERT_GE(r.variance, -1e-10);
            }
        }
    }
}

TEST(Dispatch, RoutesByDomain) {
    const auto preds = make_ensemble({point({0.2, 0.8}), point({0.8, 0.2})});
    const auto labels = make_ensemble({point({0.5, 0.5})});
    EXPECT_EQ(decompose(catalog::kl(2), labels, preds).method, "closed_form");
    EXPECT_EQ(decompose(catalog::kl(2), labels, preds, Domain::simplex(2)).method, "lagrange");
    const auto alpha = decompose(catalog::alpha(0.5, 2), labels, preds, Domain::simplex(2));
    EXPECT_EQ(alpha.method, "brute_force");
    EXPECT_FALSE(alpha.warnings.empty());
    EXPECT_EQ(decompose(catalog::make("l1", {.d = 2, .domain = Domain::box(2, 0, 1)}), labels, preds).method,
              "brute_force");
}

TEST(Ordering, SwapsBreakAdditivityForKL) {
    const auto kl = catalog::kl(2);
    const auto labels = make_ensemble({point({0.3, 0.7})});
    const auto preds = make_ensemble({point({0.2, 0.8}), point({0.6, 0.4})});
    EXPECT_GT(std::abs(ordering_violation_gap(kl, labels, preds, {.bias = true})), 1e-6);
    EXPECT_LT(std::abs(ordering_violation_gap(kl, labels, preds, {})), 1e-9);
    EXPECT_NEAR(ordering_violation_gap(kl, labels, preds, {}), decompose_gbregman(kl, labels, preds).gap, 1e-15);
}

TEST(Ordering, SymmetricLossesUnaffected) {
    std::mt19937_64 rng(17);
    const auto sq = catalog::sq_euclidean(2);
    const auto mah = catalog::mahalanobis(oracle::random_spd(rng, 2));
    for (int k = 0; k < 20; ++k) {
        const auto labels = oracle::random_ensemble(rng, 2, 3, -2, 2);
        const auto preds = oracle::random_ensemble(rng, 2, 4, -2, 2);
        for (int mask = 0; mask < 8; ++mask) {
            const OrderingSwap s{(mask & 1) != 0, (mask & 2) != 0, (mask & 4) != 0};
            ASSERT_LT(std::abs(ordering_violation_gap(sq, labels, preds, s)), 1e-12);
            ASSERT_LT(std::abs(ordering_violation_gap(mah, labels, preds, s)), 1e-12);
        }
    }
}

TEST(LogLikelihood, Fixtures) {
    const auto fam = gaussian_family();
    const auto z0 = point({0});
    const auto single = exp_family_loglik_decompose(fam, z0, make_ensemble({catalog::gaussian_to_canonical(point({0, 1}))}));
    EXPECT_NEAR(single.variance, 0.0, 1e-15);
    EXPECT_NEAR(single.bias, 0.5 * std::log(2 * std::numbers::pi), 1e-12);
    EXPECT_NEAR(single.bias, 0.918939, 1e-6);

    const auto two = make_ensemble({catalog::gaussian_to_canonical(point({-1, 1})),
                                    catalog::gaussian_to_canonical(point({1, 1}))});
    const auto r = exp_family_loglik_decompose(fam, z0, two);
    auto nll = [](double z, double m, double s) { return 0.5 * std::log(2 * std::numbers::pi * s) + (z - m) * (z - m) / (2 * s); };
    EXPECT_NEAR(r.expected_loss, nll(0, -1, 1), 1e-12);
    EXPECT_LT(std::abs(r.gap), 1e-9);
    EXPECT_NEAR(r.bias + r.variance, r.expected_loss, 1e-9);
    EXPECT_GE(r.variance, 0.0);
}

TEST(LogLikelihood, CanonicalAveragingIsRequiredAwayFromZero) {
    const auto fam = gaussian_family();
    const auto moments = std::vector<Point>{point({-1, 1}), point({1, 1.5}), point({0.3, 0.4})};
    std::vector<Point> canon;
    for (const auto& p : moments) canon.push_back(catalog::gaussian_to_canonical(p));
    const auto preds = make_ensemble(canon, {1, 2, 1});
    const auto& B = fam.log_partition;
    for (double z : {0.0, 0.7, -2.5}) {
        const auto r = exp_family_loglik_decompose(fam, point({z}), preds);
        ASSERT_LT(std::abs(r.gap), 1e-9 * (1 + std::abs(r.expected_loss)));

        // Same terms with the moment-averaged parameter instead.
        const Vector mean = make_ensemble(moments, {1, 2, 1})
                                .expectation([](const Point& p) { return point({p[0], p[0] * p[0] + p[1]}); });
        const Vector theta = catalog::gaussian_to_canonical(point({mean[0], mean[1] - mean[0] * mean[0]}));
        const double bias = fam.neg_log_likelihood(point({z}), theta);
        const double variance = preds.expectation_scalar([&](const Point& th) { return B(th); }) - B(theta);
        const double gap = r.expected_loss - bias - variance;
        if (z != 0.0) EXPECT_GT(std::abs(gap), 1e-3) << "z=" << z;
    }
}

TEST(Properties, CleanAdditivityAcrossCatalog) {
    std::mt19937_64 rng(23);
    for (int k = 0; k < 100; ++k) {
        const int d = 1 + k % 4;
        const int nl = 1 + k % 8, np = 1 + (k * 3) % 8;
        std::vector<GBregmanDivergence> divs{catalog::sq_euclidean(d), catalog::mahalanobis(oracle::random_spd(rng, d)),
                                             catalog::kl(d), catalog::reverse_kl(d), catalog::alpha(0.3, d),
                                             catalog::alpha(0.7, d), catalog::bernoulli_kl(d)};
        const auto labels = oracle::random_ensemble(rng, d, nl, 0.02, 0.98);
        const auto preds = oracle::random_ensemble(rng, d, np, 0.02, 0.98);
        for (const auto& div : divs) {
            const auto r = decompose_gbregman(div, labels, preds);
            ASSERT_LE(std::abs(r.gap), 1e-9 * (1 + r.expected_loss)) << div.name() << " d=" << d;
            ASSERT_GE(r.intrinsic_noise, -1e-10);
            ASSERT_GE(r.bias, -1e-10);
            ASSERT_GE(r.variance, -1e-10);
        }
        const auto g = decompose_gbregman(catalog::gaussian_canonical(), oracle::random_gaussians(rng, nl),
                                          oracle::random_gaussians(rng, np));
        ASSERT_LE(std::abs(g.gap), 1e-9 * (1 + g.expected_loss));
    }
}

TEST(Properties, NoiseIsALowerBound) {
    std::mt19937_64 rng(29);
    for (int k = 0; k < 50; ++k) {
        const auto kl = catalog::kl(2);
        const auto labels = oracle::random_ensemble(rng, 2, 4, 0.05, 0.95);
        const auto t = g_mean_label(kl, labels).point;
        const auto r = decompose_gbregman(kl, labels, make_ensemble({t}));
        ASSERT_LE(r.intrinsic_noise, r.expected_loss + 1e-12);
        const auto other = decompose_gbregman(kl, labels, make_ensemble({oracle::random_point(rng, 2, 0.05, 0.95)}));
        ASSERT_LE(r.expected_loss, other.expected_loss + 1e-12);
    }
}

TEST(Properties, GenericAgreesWithClosedForm) {
    std::mt19937_64 rng(31);
    for (int k = 0; k < 12; ++k) {
        const int d = 1 + k % 2;
        for (const auto& div : {catalog::kl(d), catalog::alpha(0.5, d), catalog::reverse_kl(d)}) {
            const auto labels = oracle::random_ensemble(rng, d, 3, 0.05, 0.95);
            const auto preds = oracle::random_ensemble(rng, d, 3, 0.05, 0.95);
            const auto c = decompose_gbregman(div, labels, preds);
            const auto g = decompose_generic(div.as_loss(), labels, preds, div.domain());
            ASSERT_NEAR(g.intrinsic_noise, c.intrinsic_noise, 1e-5);
            ASSERT_NEAR(g.bias, c.bias, 1e-5);
            ASSERT_NEAR(g.variance, c.variance, 1e-5);
            ASSERT_NEAR(g.expected_loss, c.expected_loss, 1e-12);
        }
    }
}

// Witness ensembles frozen after a seeded random search.
TEST(Witnesses, NonDecomposableLosses) {
    const auto l1 = catalog::l1(1, Domain::box(1, 0, 1));
    EXPECT_NEAR(decompose_generic(l1, make_ensemble({point({0})}), make_ensemble({point({0}), point({1})}, {1, 2}), l1.domain)
                    .gap,
                -2.0 / 3, 1e-12);

    const auto zo = catalog::zero_one_grid(1, {0, 1, 2});
    const auto zr = decompose_generic(zo, make_ensemble({point({0}), point({1})}, {0.6, 0.4}), make_ensemble({point({1})}),
                                      zo.domain);
    EXPECT_NEAR(zr.gap, -0.8, 1e-12);

    const auto mk = catalog::minkowski_loss(1.5, 1, Domain::box(1, 0, 1));
    const auto mr = decompose_generic(mk, make_ensemble({point({0})}), make_ensemble({point({0}), point({1})}, {1, 2}),
                                      mk.domain);
    // y* = 0.8 solves sqrt(y) = 2 sqrt(1 - y).
    EXPECT_NEAR(mr.central_prediction[0], 0.8, 1e-7);
    const double mgap = 2.0 / 3 - std::pow(0.8, 1.5) - (std::pow(0.8, 1.5) / 3 + 2 * std::pow(0.2, 1.5) / 3);
    EXPECT_NEAR(mr.gap, mgap, 1e-8);
    EXPECT_GT(std::abs(mr.gap), 1e-3);

    const auto a = catalog::alpha(0.5, 2, Domain::simplex(2));
    const auto labels = make_ensemble({point({0.9, 0.1})});
    const auto preds = make_ensemble({point({0.1, 0.9}), point({0.9, 0.1})});
    const auto t = power_mean_centroids(a, labels, Side::second_arg);
    const auto y = power_mean_centroids(a, preds, Side::first_arg);
    const auto ar = decompose_with_centroids(a, a.name(), labels, preds, t.point, y.point);
    const double h = std::pow(std::sqrt(0.9) - std::sqrt(0.5), 2) + std::pow(std::sqrt(0.1) - std::sqrt(0.5), 2);
    EXPECT_NEAR(ar.gap, 0.8 - 4 * h, 1e-12);
    EXPECT_GT(std::abs(ar.gap), 1e-3);
}
