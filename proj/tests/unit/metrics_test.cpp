// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "maven/metrics.hpp"

using namespace maven;

namespace {

GaussianStats stats(std::vector<double> mean, std::vector<std::vector<double>> cov) {
    GaussianStats s;
    const auto d = static_cast<Eigen::Index>(mean.size());
    s.mean = Eigen::Map<Eigen::VectorXd>(mean.data(), d);
    s.covariance.resize(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) s.covariance(i, j) = cov[i][j];
    return s;
}

GaussianStats random_stats(std::size_t d, Rng& rng) {
    Eigen::MatrixXd a(d, d);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
    GaussianStats s;
    s.mean = Eigen::VectorXd(d);
    for (std::size_t i = 0; i < d; ++i) s.mean[static_cast<Eigen::Index>(i)] = rng.normal();
    s.covariance = a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(d, d);
    return s;
}

MomentSummary summary(double m1, double m2, double m3, double m4) {
    MomentSummary s;
    s.m1 = m1;
    s.m2 = m2;
    s.m3 = m3;
    s.m4 = m4;
    return s;
}

}  // namespace

TEST(GaussianStats, TwoPointExample) {
    const auto s = compute_gaussian_stats(Tensor(Shape{2, 2}, std::vector<double>{0, 0, 2, 0}));
    EXPECT_NEAR(s.mean[0], 1.0, 1e-15);
    EXPECT_NEAR(s.mean[1], 0.0, 1e-15);
    EXPECT_NEAR(s.covariance(0, 0), 2.0, 1e-15);
    EXPECT_NEAR(s.covariance(0, 1), 0.0, 1e-15);
    EXPECT_NEAR(s.covariance(1, 1), 0.0, 1e-15);
}

TEST(GaussianStats, IdenticalSamplesHaveZeroCovariance) {
    const auto s = compute_gaussian_stats(Tensor(Shape{5, 3}, 0.7));
    EXPECT_EQ(s.covariance.norm(), 0.0);
}

TEST(GaussianStats, MonteCarloStandardNormal) {
    Rng rng(1);
    const auto s = compute_gaussian_stats(rng.normal_tensor({100000, 2}));
    for (int i = 0; i < 2; ++i) {
        EXPECT_NEAR(s.mean[i], 0.0, 0.02);
        for (int j = 0; j < 2; ++j) EXPECT_NEAR(s.covariance(i, j), i == j ? 1.0 : 0.0, 0.02);
    }
}

TEST(GaussianStats, NeedsTwoSamples) {
    EXPECT_THROW(compute_gaussian_stats(Tensor(Shape{1, 3})), MetricError);
}

TEST(Fid, ClosedForms) {
    const auto a = stats({0}, {{1}});
    EXPECT_NEAR(compute_fid(a, a), 0.0, 1e-6);
    EXPECT_NEAR(compute_fid(stats({0}, {{1}}), stats({1}, {{1}})), 1.0, 1e-9);
    EXPECT_NEAR(compute_fid(stats({0}, {{4}}), stats({0}, {{1}})), 1.0, 1e-9);
}

TEST(Fid, DiagonalCovariancesMatchPerAxisSum) {
    // Commuting covariances: FID = |dmu|^2 + sum (sqrt(a_i) - sqrt(b_i))^2.
    const auto r = stats({1, 2, 3}, {{4, 0, 0}, {0, 9, 0}, {0, 0, 0.25}});
    const auto f = stats({0, 2, 5}, {{1, 0, 0}, {0, 16, 0}, {0, 0, 1}});
    const double expect = 1 + 0 + 4 + 1 + 1 + 0.25;
    EXPECT_NEAR(compute_fid(r, f), expect, 1e-9);
}

TEST(Fid, Properties) {
    Rng rng(2);
    for (int t = 0; t < 20; ++t) {
        const auto a = random_stats(4, rng), b = random_stats(4, rng);
        const double ab = compute_fid(a, b);
        EXPECT_GE(ab, 0.0);
        EXPECT_NEAR(ab, compute_fid(b, a), 1e-8 * (1.0 + ab));
        EXPECT_NEAR(compute_fid(a, a), 0.0, 1e-8);
        // A common shift of both means changes nothing.
        auto as = a, bs = b;
        as.mean.array() += 3.0;
        bs.mean.array() += 3.0;
        EXPECT_NEAR(compute_fid(as, bs), ab, 1e-8 * (1.0 + ab));
    }
}

TEST(Fid, DimensionMismatchThrows) {
    EXPECT_THROW(compute_fid(stats({0}, {{1}}), stats({0, 0}, {{1, 0}, {0, 1}})), MetricError);
}

TEST(Moments, SymmetricTwoPoint) {
    std::vector<double> x;
    for (int i = 0; i < 50; ++i) {
        x.push_back(-1.0);
        x.push_back(1.0);
    }
    const auto s = compute_moment_summary(x);
    EXPECT_NEAR(s.m1, 0.0, 1e-15);
    EXPECT_NEAR(s.m3, 0.0, 1e-15);
    // Population kurtosis of a two-point symmetric law is 1, so excess is -2.
    EXPECT_NEAR(s.m4, -2.0, 1e-12);
    EXPECT_NEAR(s.m2, 100.0 / 99.0, 1e-12);
}

TEST(Moments, MonteCarloStandardNormal) {
    Rng rng(3);
    std::vector<double> x(1000000);
    for (auto& v : x) v = rng.normal();
    const auto s = compute_moment_summary(x);
    EXPECT_NEAR(s.m1, 0.0, 0.02);
    EXPECT_NEAR(s.m2, 1.0, 0.02);
    EXPECT_NEAR(s.m3, 0.0, 0.02);
    EXPECT_NEAR(s.m4, 0.0, 0.02);
}

TEST(Moments, ConstantSamplesAreDegenerate) {
    const std::vector<double> x(10, 3.0);
    try {
        compute_moment_summary(x);
        FAIL();
    } catch (const MetricError& e) {
        EXPECT_NE(std::string(e.what()).find("degenerate distribution"), std::string::npos);
    }
}

TEST(Ddd, Examples) {
    const auto a = summary(0.2, 1.0, -0.3, 0.5);
    EXPECT_EQ(compute_ddd(a, a), 0.0);
    // |delta_i| = 0.1 after normalization by |m_i| + 1 with m = 0.
    const auto zero = summary(0, 0, 0, 0);
    const auto off = summary(0.1, 0.1, -0.1, 0.1);
    EXPECT_NEAR(compute_ddd(zero, off, {0.25, 0.25, 0.25, 0.25}), 0.5545, 1e-4);
    EXPECT_NEAR(compute_ddd(zero, summary(0.1, 0, 0, 0)), 0.0916, 1e-4);
}

TEST(Ddd, MonotoneInEachDeviation) {
    const auto real = summary(0.3, 1.2, 0.1, -0.4);
    for (int i = 0; i < 4; ++i) {
        double prev = -1.0;
        for (double d = 0.0; d <= 2.0; d += 0.25) {
            auto m = real.moments();
            m[static_cast<std::size_t>(i)] += d;
            const double v = compute_ddd(real, summary(m[0], m[1], m[2], m[3]));
            EXPECT_GT(v, prev);
            prev = v;
        }
    }
}

TEST(Ddd, WeightValidation) {
    const auto a = summary(0, 1, 0, 0);
    EXPECT_THROW(compute_ddd(a, a, {0.5, 0.5, 0.0, 0.0}), MetricError);
    EXPECT_THROW(compute_ddd(a, a, {0.4, 0.4, 0.4, 0.4}), MetricError);
}

TEST(Confusion, Examples) {
    const std::vector<std::size_t> same{0, 1, 1, 0};
    const auto c0 = confusion_counts(same, same, 2);
    for (std::size_t c = 0; c < 2; ++c) {
        EXPECT_EQ(c0.fp[c], 0u);
        EXPECT_EQ(c0.fn[c], 0u);
    }
    const std::vector<std::size_t> pred{0, 0, 1}, lab{0, 1, 1};
    const auto c = confusion_counts(pred, lab, 2);
    EXPECT_EQ(c.tp, (std::vector<std::size_t>{1, 1}));
    EXPECT_EQ(c.fp, (std::vector<std::size_t>{1, 0}));
    EXPECT_EQ(c.fn, (std::vector<std::size_t>{0, 1}));
    const auto e = confusion_counts({}, {}, 3);
    EXPECT_EQ(e.tp, (std::vector<std::size_t>{0, 0, 0}));
    EXPECT_EQ(e.total, 0u);
    const std::vector<std::size_t> bad{3};
    EXPECT_THROW(confusion_counts(bad, std::vector<std::size_t>{0}, 3), MetricError);
}

TEST(Confusion, CountsPartitionTheItems) {
    Rng rng(4);
    std::vector<std::size_t> p(300), y(300);
    for (std::size_t i = 0; i < 300; ++i) {
        p[i] = rng.index(5);
        y[i] = rng.index(5);
    }
    const auto c = confusion_counts(p, y, 5);
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t k = 0; k < 5; ++k) {
        EXPECT_EQ(c.tp[k] + c.fp[k] + c.fn[k] + c.tn(k), 300u);
        tp += c.tp[k];
        fp += c.fp[k];
        fn += c.fn[k];
    }
    EXPECT_EQ(tp + fp, 300u);
    EXPECT_EQ(tp + fn, 300u);
}

TEST(F1, Examples) {
    ConfusionCounts c;
    c.n_classes = 3;
    c.tp = {1, 8, 0};
    c.fp = {1, 2, 0};
    c.fn = {1, 4, 5};
    c.total = 30;
    const auto f = f1_per_class(c);
    EXPECT_NEAR(f[0], 0.5, 1e-12);
    EXPECT_NEAR(f[1], 0.7273, 1e-4);
    EXPECT_EQ(f[2], 0.0);
}

TEST(F1, BoundedAndPerfectOnExactPredictions) {
    Rng rng(5);
    std::vector<std::size_t> p(100), y(100);
    for (std::size_t i = 0; i < 100; ++i) {
        y[i] = rng.index(4);
        p[i] = rng.uniform() < 0.6 ? y[i] : rng.index(4);
    }
    for (double v : f1_per_class(confusion_counts(p, y, 4))) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    for (double v : f1_per_class(confusion_counts(y, y, 4))) EXPECT_EQ(v, 1.0);
}

TEST(Accuracy, Examples) {
    const std::vector<std::size_t> y{0, 1, 1};
    EXPECT_EQ(accuracy(y, y), 1.0);
    EXPECT_NEAR(accuracy(std::vector<std::size_t>{0, 0, 1}, y), 2.0 / 3.0, 1e-9);
    try {
        accuracy({}, {});
        FAIL();
    } catch (const MetricError& e) {
        EXPECT_NE(std::string(e.what()).find("no items"), std::string::npos);
    }
}

TEST(Embedder, DeterministicAndShaped) {
    Rng rng(6);
    const Tensor x = rng.normal_tensor({5, 16, 16, 3});
    RandomConvEmbedder a({16, 16, 3}), b({16, 16, 3});
    const Tensor fa = a.embed(x);
    EXPECT_EQ(fa.shape(), (Shape{5, 64}));
    EXPECT_EQ(fa.storage(), b.embed(x).storage());
    EXPECT_EQ(embed_all(a, x, 2).storage(), fa.storage());
    RandomConvEmbedder other({16, 16, 3}, 7);
    EXPECT_NE(other.embed(x).storage(), fa.storage());
}

TEST(Embedder, TinyImagesPassThrough) {
    RandomConvEmbedder e({1, 1, 2});
    const Tensor x(Shape{3, 1, 1, 2}, std::vector<double>{1, 2, 3, 4, 5, 6});
    EXPECT_EQ(e.dim(), 2u);
    EXPECT_EQ(e.embed(x).storage(), x.storage());
}

TEST(Embedder, FunctionAdapterChecksShape) {
    FunctionEmbedder good(2, [](const Tensor& x) { return Tensor(Shape{x.dim(0), 2}); });
    EXPECT_EQ(good.embed(Tensor(Shape{4, 1, 1, 1})).shape(), (Shape{4, 2}));
    FunctionEmbedder bad(2, [](const Tensor& x) { return Tensor(Shape{x.dim(0), 3}); });
    EXPECT_THROW(bad.embed(Tensor(Shape{4, 1, 1, 1})), MetricError);
}
