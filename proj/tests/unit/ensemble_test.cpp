// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>

#include "maven/ensemble.hpp"

using namespace maven;

TEST(Ensemble, UniformMeanOfThree) {
    const std::vector<std::vector<double>> out{{0.2}, {0.4}, {0.6}};
    const std::vector<double> w{1, 1, 1};
    const auto fb = aggregate_mean(out, w);
    EXPECT_NEAR(fb.value[0], 0.4, 1e-12);
    EXPECT_FALSE(fb.source.has_value());
}

TEST(Ensemble, WeightTwoZeroSelectsFirst) {
    const std::vector<std::vector<double>> out{{0.13, 0.9}, {0.77, 0.1}};
    const std::vector<double> w{2, 0};
    const auto fb = aggregate_mean(out, w);
    EXPECT_NEAR(fb.value[0], 0.13, 1e-15);
    EXPECT_NEAR(fb.value[1], 0.9, 1e-15);
}

TEST(Ensemble, LinearInOutputs) {
    Rng rng(1);
    const std::vector<double> w{0.5, 1.0, 1.5};
    std::vector<std::vector<double>> a(3, std::vector<double>(4)), b = a, mix = a;
    const double alpha = 0.3, beta = 1.7;
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t i = 0; i < 4; ++i) {
            a[k][i] = rng.uniform();
            b[k][i] = rng.uniform();
            mix[k][i] = alpha * a[k][i] + beta * b[k][i];
        }
    const auto fa = aggregate_mean(a, w), fb = aggregate_mean(b, w), fm = aggregate_mean(mix, w);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(fm.value[i], alpha * fa.value[i] + beta * fb.value[i], 1e-12);
}

TEST(Ensemble, PermutationInvariant) {
    std::vector<std::vector<double>> out{{0.1, 0.2}, {0.5, 0.6}, {0.9, 0.3}};
    std::vector<double> w{0.2, 1.0, 3.0};
    const auto base = aggregate_mean(out, w);
    std::vector<std::size_t> perm{0, 1, 2};
    while (std::next_permutation(perm.begin(), perm.end())) {
        std::vector<std::vector<double>> po;
        std::vector<double> pw;
        for (std::size_t p : perm) {
            po.push_back(out[p]);
            pw.push_back(w[p]);
        }
        const auto f = aggregate_mean(po, pw);
        for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(f.value[i], base.value[i], 1e-12);
    }
}

TEST(Ensemble, RandomModeForwardsOneOutputUnchanged) {
    const std::vector<std::vector<double>> out{{0.1, 0.2}, {0.5, 0.6}, {0.9, 0.3}};
    Rng rng(2);
    for (int t = 0; t < 50; ++t) {
        const auto fb = select_random(out, rng);
        ASSERT_TRUE(fb.source.has_value());
        EXPECT_EQ(fb.value, out[*fb.source]);
    }
}

TEST(Ensemble, RandomModeIsUniform) {
    Rng rng(3);
    std::vector<std::size_t> hits(3, 0);
    const std::size_t draws = 30000;
    for (std::size_t t = 0; t < draws; ++t) ++hits[draw_discriminator(3, rng)];
    for (std::size_t h : hits) {
        const double f = static_cast<double>(h) / static_cast<double>(draws);
        EXPECT_GE(f, 0.323);
        EXPECT_LE(f, 0.344);
    }
}

TEST(Ensemble, ConfigValidation) {
    EXPECT_NO_THROW(EnsembleConfig::uniform(3, EnsembleMode::mean).validate());
    EnsembleConfig c = EnsembleConfig::uniform(3, EnsembleMode::mean);
    c.weights = {1, 1};
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c.weights = {1, -1, 1};
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c.weights = {0, 0, 0};
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = EnsembleConfig::uniform(1, EnsembleMode::mean);
    c.k = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    EXPECT_EQ(ensemble_mode_from_string("random"), EnsembleMode::random);
    EXPECT_THROW(ensemble_mode_from_string("median"), std::invalid_argument);
}

TEST(Ensemble, MismatchedInputsThrow) {
    const std::vector<std::vector<double>> out{{0.1, 0.2}, {0.5}};
    const std::vector<double> w{1, 1};
    EXPECT_THROW(aggregate_mean(out, w), std::invalid_argument);
    const std::vector<double> w1{1};
    const std::vector<std::vector<double>> ok{{0.1}, {0.2}};
    EXPECT_THROW(aggregate_mean(ok, w1), std::invalid_argument);
}
