// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "maven/networks.hpp"

using namespace maven;
namespace fs = std::filesystem;

namespace {

NetworkConfig conv_config() {
    NetworkConfig c;
    c.latent_dim = 6;
    c.image_shape = {16, 16, 1};
    c.n_classes = 4;
    c.widths = {4, 8};
    return c;
}

NetworkConfig dense_config() {
    NetworkConfig c;
    c.latent_dim = 3;
    c.image_shape = {1, 1, 2};
    c.n_classes = 3;
    c.widths = {8, 8};
    return c;
}

EncoderOutput single(double mu, double log_var) {
    return {Tensor(Shape{1, 1}, mu), Tensor(Shape{1, 1}, log_var)};
}

}  // namespace

TEST(Reparameterize, ZeroNoiseGivesMean) {
    EXPECT_DOUBLE_EQ(reparameterize(single(0.5, std::log(4.0)), Tensor(Shape{1, 1}, 0.0))[0], 0.5);
}

TEST(Reparameterize, UnitNoiseAddsSigma) {
    EXPECT_NEAR(reparameterize(single(0.5, std::log(4.0)), Tensor(Shape{1, 1}, 1.0))[0], 2.5, 1e-12);
}

TEST(Reparameterize, AffineInNoise) {
    // z(eps) - mu is linear in eps with slope sigma.
    const auto enc = single(-1.25, 0.7);
    const double sigma = std::exp(0.35);
    for (double eps : {-3.0, -0.5, 0.25, 2.0}) {
        EXPECT_NEAR(reparameterize(enc, Tensor(Shape{1, 1}, eps))[0], -1.25 + sigma * eps, 1e-12);
    }
}

TEST(Reparameterize, ShapeMismatchThrows) {
    EncoderOutput enc{Tensor(Shape{2, 3}), Tensor(Shape{2, 3})};
    EXPECT_THROW(reparameterize(enc, Tensor(Shape{2, 2})), ShapeError);
    enc.log_sigma_sq = Tensor(Shape{3, 2});
    EXPECT_THROW(reparameterize(enc, Tensor(Shape{2, 3})), ShapeError);
}

TEST(ClassProbabilities, MatchesHandSoftmax) {
    const Tensor p = class_probabilities(Tensor(Shape{1, 3}, std::vector<double>{1, 2, 3}));
    EXPECT_NEAR(p[0], 0.0900, 1e-4);
    EXPECT_NEAR(p[1], 0.2447, 1e-4);
    EXPECT_NEAR(p[2], 0.6652, 1e-4);
}

TEST(ClassProbabilities, LargeLogitsStayFinite) {
    const Tensor p = class_probabilities(Tensor(Shape{1, 2}, std::vector<double>{1000, 0}));
    EXPECT_NEAR(p[0], 1.0, 1e-12);
    EXPECT_NEAR(p[1], 0.0, 1e-12);
}

TEST(ClassProbabilities, RowsSumToOneAndShiftInvariant) {
    Rng rng(1);
    Tensor l(Shape{20, 5});
    for (auto& v : l.storage()) v = 10.0 * rng.normal();
    const Tensor p = class_probabilities(l);
    Tensor shifted = l;
    for (std::size_t r = 0; r < 20; ++r)
        for (std::size_t c = 0; c < 5; ++c) shifted.at(r, c) += static_cast<double>(r) * 7.0;
    const Tensor q = class_probabilities(shifted);
    for (std::size_t r = 0; r < 20; ++r) {
        double s = 0.0;
        for (double v : p.row(r)) s += v;
        EXPECT_NEAR(s, 1.0, 1e-12);
        for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(p.at(r, c), q.at(r, c), 1e-12);
    }
}

TEST(ClassProbabilities, NonFiniteThrows) {
    EXPECT_THROW(class_probabilities(Tensor(Shape{1, 2}, std::vector<double>{NAN, 0})), std::domain_error);
    EXPECT_THROW(class_probabilities(Tensor(Shape{1, 2}, std::vector<double>{INFINITY, 0})), std::domain_error);
}

TEST(PredictClass, IgnoresFakeEntry) {
    const std::vector<double> p{0.2, 0.3, 0.5};
    EXPECT_EQ(predict_class(p), 1u);
}

TEST(PredictClass, TiesGoToLowestIndex) {
    const std::vector<double> p{0.3, 0.3, 0.1, 0.3};
    EXPECT_EQ(predict_class(p), 0u);
}

TEST(NetworkConfig, RejectsBadShapes) {
    NetworkConfig c = conv_config();
    c.image_shape = {24, 24, 1};
    EXPECT_THROW(c.validate(), ConfigError);
    c = conv_config();
    c.n_classes = 1;
    EXPECT_THROW(c.validate(), ConfigError);
    c = conv_config();
    c.dropout_rate = 1.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = conv_config();
    c.widths = {4, 4, 4, 4, 4};
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_EQ(dense_config().architecture(), Architecture::dense);
}

TEST(Networks, ShapesForConvAndDense) {
    for (const NetworkConfig& cfg : {conv_config(), dense_config()}) {
        Rng init(2), rng(3);
        Encoder e(cfg, init);
        Generator g(cfg, init);
        Discriminator d(cfg, init);
        const Tensor x = rng.normal_tensor(cfg.image_shape.batch(5));
        const auto enc = e.encode(x, PassContext::inference());
        EXPECT_EQ(enc.mu.shape(), (Shape{5, cfg.latent_dim}));
        EXPECT_EQ(enc.log_sigma_sq.shape(), (Shape{5, cfg.latent_dim}));
        const Tensor img = g.generate(rng.normal_tensor({5, cfg.latent_dim}), PassContext::inference());
        EXPECT_EQ(img.shape(), cfg.image_shape.batch(5));
        const auto out = d.discriminate(img, PassContext::inference());
        EXPECT_EQ(out.logits.shape(), (Shape{5, cfg.n_classes + 1}));
        EXPECT_EQ(out.features.shape(), (Shape{5, d.feature_dim()}));
    }
}

TEST(Networks, GeneratorOutputIsBounded) {
    Rng init(4), rng(5);
    Generator g(conv_config(), init);
    Tensor z = rng.normal_tensor({8, 6});
    for (auto& v : z.storage()) v *= 50.0;
    for (double v : g.generate(z, PassContext::inference()).storage()) {
        EXPECT_GE(v, -1.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Networks, ZeroHeadGivesZeroLogits) {
    Rng init(6), rng(7);
    Discriminator d(conv_config(), init);
    d.zero_head();
    const auto out = d.discriminate(rng.normal_tensor({3, 16, 16, 1}), PassContext::inference());
    for (double v : out.logits.storage()) EXPECT_EQ(v, 0.0);
    const Tensor p = class_probabilities(out.logits);
    for (double v : p.storage()) EXPECT_NEAR(v, 1.0 / 5.0, 1e-15);
}

TEST(Networks, ZeroedEncoderOutputsAreZero) {
    Rng init(8), rng(9);
    Encoder e(dense_config(), init);
    e.zero_output_layer();
    const auto enc = e.encode(rng.normal_tensor({4, 1, 1, 2}), PassContext::inference());
    for (double v : enc.mu.storage()) EXPECT_EQ(v, 0.0);
    for (double v : enc.log_sigma_sq.storage()) EXPECT_EQ(v, 0.0);
}

TEST(Networks, SameSeedSameWeightsAndOutputs) {
    Rng a(10), b(10), x(11);
    Discriminator d1(conv_config(), a), d2(conv_config(), b);
    const Tensor in = x.normal_tensor({2, 16, 16, 1});
    EXPECT_EQ(d1.discriminate(in, PassContext::inference()).logits.storage(),
              d2.discriminate(in, PassContext::inference()).logits.storage());
}

TEST(Networks, WrongInputShapeThrows) {
    Rng init(12);
    NetworkConfig cfg = conv_config();
    Encoder e(cfg, init);
    Generator g(cfg, init);
    Discriminator d(cfg, init);
    EXPECT_THROW(e.encode(Tensor(Shape{2, 8, 8, 1}), PassContext::inference()), ShapeError);
    EXPECT_THROW(g.generate(Tensor(Shape{2, 5}), PassContext::inference()), ShapeError);
    EXPECT_THROW(d.discriminate(Tensor(Shape{2, 16, 16}), PassContext::inference()), ShapeError);
    EXPECT_THROW(d.discriminate(Tensor(Shape{2, 16, 16, 3}), PassContext::inference()), ShapeError);
}

TEST(Checkpoint, RoundTripRestoresOutputs) {
    const fs::path dir = fs::temp_directory_path() / "maven_unit_ckpt";
    fs::remove_all(dir);
    fs::create_directories(dir);
    Rng a(13), b(14), x(15);
    const NetworkConfig cfg = conv_config();
    Discriminator src(cfg, a), dst(cfg, b);
    save_tensors(dir / "d", "discriminator", cfg, src.layer_names(), tensor_refs(src.params(), src.buffers()));
    load_tensors(dir / "d", "discriminator", tensor_refs(dst.params(), dst.buffers()));
    const NetworkConfig echo = read_manifest_config(dir / "d");
    EXPECT_EQ(echo.image_shape, cfg.image_shape);
    EXPECT_EQ(echo.widths, cfg.widths);
    EXPECT_EQ(echo.latent_dim, cfg.latent_dim);
    const Tensor in = x.normal_tensor({2, 16, 16, 1});
    const Tensor l1 = src.discriminate(in, PassContext::inference()).logits;
    const Tensor l2 = dst.discriminate(in, PassContext::inference()).logits;
    // Values travel as float32.
    for (std::size_t i = 0; i < l1.size(); ++i) EXPECT_NEAR(l1[i], l2[i], 1e-4 * (1.0 + std::abs(l1[i])));
    EXPECT_THROW(load_tensors(dir / "d", "generator", tensor_refs(dst.params(), dst.buffers())), CheckpointError);
    Rng c(16);
    NetworkConfig other = cfg;
    other.widths = {4, 16};
    Discriminator wrong(other, c);
    EXPECT_THROW(load_tensors(dir / "d", "discriminator", tensor_refs(wrong.params(), wrong.buffers())),
                 CheckpointError);
    fs::remove_all(dir);
}
