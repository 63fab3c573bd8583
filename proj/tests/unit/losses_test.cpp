// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "maven/losses.hpp"
#include "test_support.hpp"

using namespace maven;

namespace {

// Rows of (p_1..p_n, p_fake).
Tensor probs(std::vector<std::vector<double>> rows) {
    Tensor t(Shape{rows.size(), rows.front().size()});
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) t.at(r, c) = rows[r][c];
    return t;
}

Tensor random_logits(std::size_t rows, std::size_t cols, Rng& rng) {
    Tensor t(Shape{rows, cols});
    for (auto& v : t.storage()) v = rng.normal();
    return t;
}

}  // namespace

TEST(SupervisedLoss, Examples) {
    const std::vector<std::size_t> zero{0};
    EXPECT_NEAR(d_supervised_loss(probs({{1.0, 0.0, 0.0}}), zero), 0.0, 1e-12);
    EXPECT_NEAR(d_supervised_loss(probs({{0.25, 0.5, 0.25}}), zero), 1.3863, 1e-4);
    const std::vector<std::size_t> two{0, 1};
    EXPECT_NEAR(d_supervised_loss(probs({{1.0, 0.0, 0.0}, {0.5, 0.25, 0.25}}), two), 0.6931, 1e-4);
}

TEST(SupervisedLoss, FakeLabelRejected) {
    const std::vector<std::size_t> fake{2};
    EXPECT_THROW(d_supervised_loss(probs({{0.2, 0.3, 0.5}}), fake), std::invalid_argument);
    const std::vector<std::size_t> two{0, 1};
    EXPECT_THROW(d_supervised_loss(probs({{0.2, 0.3, 0.5}}), two), std::invalid_argument);
}

TEST(SupervisedLoss, DecreasesInTrueClassProbability) {
    const std::vector<std::size_t> y{0};
    double prev = INFINITY;
    for (double p = 0.05; p <= 1.0; p += 0.05) {
        const double v = d_supervised_loss(probs({{p, 1.0 - p, 0.0}}), y);
        EXPECT_LT(v, prev);
        prev = v;
    }
}

TEST(RealLoss, Examples) {
    EXPECT_NEAR(d_real_loss(probs({{1.0, 0.0}})), 0.0, 1e-12);
    EXPECT_NEAR(d_real_loss(probs({{0.5, 0.5}})), 0.6931, 1e-4);
    EXPECT_NEAR(d_real_loss(probs({{0.0, 1.0}})), 27.63, 1e-2);
    EXPECT_NEAR(d_real_loss(probs({{0.0, 1.0}})), -std::log(kProbabilityFloor), 1e-9);
}

TEST(FakeLoss, Examples) {
    EXPECT_NEAR(d_fake_loss(probs({{0.0, 1.0}})), 0.0, 1e-12);
    EXPECT_NEAR(d_fake_loss(probs({{0.5, 0.5}})), 0.6931, 1e-4);
    EXPECT_NEAR(d_fake_loss(probs({{0.0, 1.0}, {0.5, 0.5}})), 0.3466, 1e-4);
}

TEST(UnsupervisedLoss, Composition) {
    EXPECT_EQ(d_unsupervised_loss(0, 0, 0), 0.0);
    EXPECT_NEAR(d_unsupervised_loss(0.5, 0.25, 0.25), 1.0, 1e-15);
    const double real = d_real_loss(probs({{0.5, 0.5}}));
    const double fake1 = d_fake_loss(probs({{0.0, 1.0}}));
    const double fake2 = d_fake_loss(probs({{0.0, 1.0}, {0.5, 0.5}}));
    EXPECT_NEAR(d_unsupervised_loss(real, fake1, fake2), 1.0397, 1e-4);
}

TEST(AdversarialLosses, PermutationInvariantOverBatch) {
    const Tensor a = probs({{0.1, 0.9}, {0.6, 0.4}, {0.7, 0.3}});
    const Tensor b = probs({{0.7, 0.3}, {0.1, 0.9}, {0.6, 0.4}});
    EXPECT_NEAR(d_real_loss(a), d_real_loss(b), 1e-15);
    EXPECT_NEAR(d_fake_loss(a), d_fake_loss(b), 1e-15);
}

TEST(AdversarialLosses, BoundedByClamp) {
    const double bound = -std::log(kProbabilityFloor);
    for (double p : {0.0, 1e-300, 1e-13, 0.5, 1.0}) {
        EXPECT_LE(d_real_loss(probs({{1.0 - p, p}})), bound + 1e-12);
        EXPECT_LE(d_fake_loss(probs({{1.0 - p, p}})), bound + 1e-12);
        EXPECT_GE(d_fake_loss(probs({{1.0 - p, p}})), 0.0);
    }
}

TEST(AdversarialLosses, NonFiniteInputThrows) {
    EXPECT_THROW(d_real_loss(probs({{NAN, 0.5}})), std::domain_error);
}

TEST(GeneratorLoss, Examples) {
    EXPECT_NEAR(g_adversarial_loss(probs({{1.0, 0.0}})), 0.0, 1e-12);
    EXPECT_NEAR(g_adversarial_loss(probs({{0.5, 0.5}})), 0.6931, 1e-4);
    EXPECT_NEAR(5.0 + g_adversarial_loss(probs({{0.5, 0.5}})) + 0.0, 5.6931, 1e-4);
}

TEST(FeatureMatching, Examples) {
    const Tensor same(Shape{2, 2}, std::vector<double>{1, 2, 3, 4});
    EXPECT_NEAR(feature_matching_loss(same, same), 0.0, 1e-15);
    const Tensor real(Shape{2, 2}, std::vector<double>{0, 1, 2, 3});  // mean (1, 2)
    const Tensor fake(Shape{3, 2}, std::vector<double>{-1, 1, 1, -1, 0, 0});  // mean (0, 0)
    EXPECT_NEAR(feature_matching_loss(real, fake), 5.0, 1e-12);
    EXPECT_THROW(feature_matching_loss(real, Tensor(Shape{2, 3})), ShapeError);
}

TEST(KlLoss, Examples) {
    EXPECT_EQ(kl_loss({Tensor(Shape{1, 1}, 0.0), Tensor(Shape{1, 1}, 0.0)}), 0.0);
    EXPECT_NEAR(kl_loss({Tensor(Shape{1, 1}, 1.0), Tensor(Shape{1, 1}, 0.0)}), 0.5, 1e-15);
}

TEST(KlLoss, NonNegative) {
    Rng rng(1);
    for (int t = 0; t < 200; ++t) {
        EncoderOutput e{random_logits(3, 4, rng), random_logits(3, 4, rng)};
        for (auto& v : e.log_sigma_sq.storage()) v *= 3.0;
        EXPECT_GE(kl_loss(e), 0.0);
    }
}

TEST(EncoderLoss, Composition) {
    EXPECT_EQ(e_total_loss(0, 0), 0.0);
    EXPECT_NEAR(e_total_loss(0.5, 5.0), 5.5, 1e-15);
    const double kl = kl_loss({Tensor(Shape{1, 1}, 1.0), Tensor(Shape{1, 1}, 0.0)});
    const Tensor real(Shape{1, 2}, std::vector<double>{1, 2});
    const Tensor fake(Shape{1, 2}, 0.0);
    EXPECT_NEAR(e_total_loss(kl, feature_matching_loss(real, fake)), 5.5, 1e-12);
}

// Each *_grad value agrees with the probability-domain loss, and its gradient with central differences.
TEST(LossGradients, MatchFiniteDifferences) {
    Rng rng(2);
    Tensor logits = random_logits(5, 4, rng);
    const std::vector<std::size_t> labels{0, 2, 1, 1, 0};
    struct Case {
        const char* name;
        std::function<LossGrad(const Tensor&)> grad;
        std::function<double(const Tensor&)> value;
    };
    const std::vector<Case> cases{
        {"supervised", [&](const Tensor& l) { return d_supervised_loss_grad(l, labels); },
         [&](const Tensor& l) { return d_supervised_loss(class_probabilities(l), labels); }},
        {"real", [](const Tensor& l) { return d_real_loss_grad(l); },
         [](const Tensor& l) { return d_real_loss(class_probabilities(l)); }},
        {"fake", [](const Tensor& l) { return d_fake_loss_grad(l); },
         [](const Tensor& l) { return d_fake_loss(class_probabilities(l)); }},
    };
    for (const auto& c : cases) {
        const LossGrad g = c.grad(logits);
        EXPECT_NEAR(g.value, c.value(logits), 1e-12) << c.name;
        const auto check = maven::testing::check_tensor_gradient(logits, g.grad, [&]() { return c.value(logits); }, 1e-5);
        EXPECT_LT(check.max_rel_error, 1e-6) << c.name;
    }
}

TEST(LossGradients, EnsembleMatchesFiniteDifferences) {
    Rng rng(3);
    std::vector<Tensor> logits{random_logits(4, 3, rng), random_logits(4, 3, rng), random_logits(4, 3, rng)};
    const std::vector<double> w{0.5, 1.0, 1.5};
    auto value = [&]() {
        // Independent evaluation: D_mu from the probabilities, then -mean log(1 - D_mu).
        double s = 0.0;
        std::vector<Tensor> p;
        for (const auto& l : logits) p.push_back(class_probabilities(l));
        for (std::size_t r = 0; r < 4; ++r) {
            double d = 0.0;
            for (std::size_t k = 0; k < 3; ++k) d += w[k] * p[k].at(r, 2);
            s += -std::log(1.0 - d / 3.0);
        }
        return s / 4.0;
    };
    const auto g = ensemble_adversarial_loss_grad(logits, w);
    EXPECT_NEAR(g.value, value(), 1e-12);
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_LT(maven::testing::check_tensor_gradient(logits[k], g.grads[k], value, 1e-5).max_rel_error, 1e-6);
    }
}

TEST(LossGradients, SingleMemberEnsembleIsGeneratorLoss) {
    Rng rng(4);
    const std::vector<Tensor> logits{random_logits(6, 5, rng)};
    const std::vector<double> w{1.0};
    const auto e = ensemble_adversarial_loss_grad(logits, w);
    const auto g = g_adversarial_loss_grad(logits[0]);
    EXPECT_NEAR(e.value, g.value, 1e-14);
    for (std::size_t i = 0; i < g.grad.size(); ++i) EXPECT_NEAR(e.grads[0][i], g.grad[i], 1e-14);
}

TEST(LossGradients, FeatureAndKl) {
    Rng rng(5);
    Tensor real = random_logits(4, 3, rng), fake = random_logits(6, 3, rng);
    const auto fg = feature_matching_loss_grad(real, fake);
    auto fm = [&]() { return feature_matching_loss(real, fake); };
    EXPECT_NEAR(fg.value, fm(), 1e-14);
    EXPECT_LT(maven::testing::check_tensor_gradient(real, fg.grad_real, fm, 1e-5).max_rel_error, 1e-6);
    EXPECT_LT(maven::testing::check_tensor_gradient(fake, fg.grad_fake, fm, 1e-5).max_rel_error, 1e-6);

    EncoderOutput enc{random_logits(3, 2, rng), random_logits(3, 2, rng)};
    const auto kg = kl_loss_grad(enc);
    auto kl = [&]() { return kl_loss(enc); };
    EXPECT_NEAR(kg.value, kl(), 1e-14);
    EXPECT_LT(maven::testing::check_tensor_gradient(enc.mu, kg.grad.mu, kl, 1e-5).max_rel_error, 1e-6);
    EXPECT_LT(maven::testing::check_tensor_gradient(enc.log_sigma_sq, kg.grad.log_sigma_sq, kl, 1e-5).max_rel_error, 1e-6);
}

TEST(LossBreakdown, TotalsAndColumns) {
    LossBreakdown b;
    b.d_supervised = 1;
    b.d_real = 2;
    b.d_fake1 = 3;
    b.d_fake2 = 4;
    b.g_feature = 5;
    b.g_fake1 = 6;
    b.g_fake2 = 7;
    b.e_kl = 8;
    b.e_feature = 9;
    EXPECT_EQ(b.d_total(), 10.0);
    EXPECT_EQ(b.g_total(), 18.0);
    EXPECT_EQ(b.e_total(), 17.0);
    EXPECT_EQ(LossBreakdown::column_names().size(), b.column_values().size());
    EXPECT_TRUE(b.first_non_finite().empty());
    b.g_fake2 = NAN;
    EXPECT_EQ(b.first_non_finite(), "g_fake2");
}
