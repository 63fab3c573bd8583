// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "maven/layers.hpp"
#include "test_support.hpp"

using namespace maven;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.storage()) v = rng.normal();
    return t;
}

double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Runs forward, backpropagates a fixed random projection r and compares parameter and input
// gradients of sum(r * y) with central differences.
void expect_layer_gradients(Layer& layer, Tensor x, bool training, double tol = 1e-6) {
    Rng rng(99);
    Rng mask_rng(5);
    auto ctx = [&]() {
        mask_rng = Rng(5);
        return training ? PassContext::train(mask_rng, false) : PassContext::inference();
    };
    const Tensor y = layer.forward(x, ctx());
    const Tensor r = random_tensor(y.shape(), rng);
    for (Param* p : layer.params()) p->grad.fill(0.0);
    layer.forward(x, ctx());
    const Tensor dx = layer.backward(r, true);
    auto loss = [&]() { return dot(layer.forward(x, ctx()), r); };
    const auto pg = maven::testing::check_param_gradients(layer.params(), loss, 1e-5);
    EXPECT_LT(pg.max_rel_error, tol) << layer.kind();
    const auto xg = maven::testing::check_tensor_gradient(x, dx, loss, 1e-5);
    EXPECT_LT(xg.max_rel_error, tol) << layer.kind();
}

}  // namespace

TEST(Tensor, ShapeAndIndexing) {
    Tensor t(Shape{2, 3}, 1.5);
    EXPECT_EQ(t.size(), 6u);
    EXPECT_EQ(t.rows(), 2u);
    EXPECT_EQ(t.row_size(), 3u);
    t.at(1, 2) = 4.0;
    EXPECT_EQ(t[5], 4.0);
    EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
    EXPECT_THROW(t.reshaped({4}), ShapeError);
    EXPECT_EQ(t.reshaped({3, 2}).dim(0), 3u);
}

TEST(Tensor, SliceGatherConcat) {
    Tensor t(Shape{4, 2}, std::vector<double>{0, 1, 2, 3, 4, 5, 6, 7});
    const Tensor s = t.slice_rows(1, 3);
    EXPECT_EQ(s.shape(), (Shape{2, 2}));
    EXPECT_EQ(s[0], 2.0);
    const std::vector<std::size_t> idx{3, 0};
    const Tensor g = t.gather_rows(idx);
    EXPECT_EQ(g[0], 6.0);
    EXPECT_EQ(g[3], 1.0);
    const std::vector<Tensor> parts{t.slice_rows(0, 2), t.slice_rows(2, 4)};
    EXPECT_EQ(concat_rows(parts).storage(), t.storage());
}

TEST(Tensor, FiniteCheck) {
    Tensor t(Shape{3}, 0.0);
    EXPECT_TRUE(t.all_finite());
    t[1] = std::nan("");
    EXPECT_FALSE(t.all_finite());
}

TEST(Layers, DenseMatchesMatrixProduct) {
    Rng init(1);
    Dense d(3, 2, init, 1.0);
    const Tensor x(Shape{1, 3}, std::vector<double>{1.0, -2.0, 0.5});
    const Tensor y = d.forward(x, PassContext::inference());
    auto ps = d.params();
    const Tensor& w = ps[0]->value;
    const Tensor& b = ps[1]->value;
    for (std::size_t o = 0; o < 2; ++o) {
        double expect = b[o];
        for (std::size_t i = 0; i < 3; ++i) expect += x[i] * w.at(i, o);
        EXPECT_NEAR(y[o], expect, 1e-12);
    }
}

TEST(Layers, ConvMatchesDirectSum) {
    Rng init(2), rng(3);
    const ConvGeometry g{4, 2, 1};
    Conv2d conv(2, 3, g, init, 0.5);
    const Tensor x = random_tensor({2, 8, 8, 2}, rng);
    const Tensor y = conv.forward(x, PassContext::inference());
    ASSERT_EQ(y.shape(), (Shape{2, 4, 4, 3}));
    auto ps = conv.params();
    const Tensor& w = ps[0]->value;  // ((ky * k + kx) * in + c, out)
    const Tensor& b = ps[1]->value;
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t oy = 0; oy < 4; ++oy)
            for (std::size_t ox = 0; ox < 4; ++ox)
                for (std::size_t o = 0; o < 3; ++o) {
                    double s = b[o];
                    for (std::size_t ky = 0; ky < 4; ++ky)
                        for (std::size_t kx = 0; kx < 4; ++kx) {
                            const long iy = static_cast<long>(oy * 2 + ky) - 1, ix = static_cast<long>(ox * 2 + kx) - 1;
                            if (iy < 0 || ix < 0 || iy >= 8 || ix >= 8) continue;
                            for (std::size_t c = 0; c < 2; ++c) {
                                s += x[((n * 8 + iy) * 8 + ix) * 2 + c] * w.at((ky * 4 + kx) * 2 + c, o);
                            }
                        }
                    EXPECT_NEAR(y[((n * 4 + oy) * 4 + ox) * 3 + o], s, 1e-12);
                }
}

TEST(Layers, ConvTransposeMatchesScatter) {
    Rng init(4), rng(5);
    const ConvGeometry g{4, 2, 1};
    ConvTranspose2d deconv(2, 3, g, init, 0.5);
    const Tensor x = random_tensor({1, 3, 3, 2}, rng);
    const Tensor y = deconv.forward(x, PassContext::inference());
    ASSERT_EQ(y.shape(), (Shape{1, 6, 6, 3}));
    auto ps = deconv.params();
    const Tensor& w = ps[0]->value;  // (in, (ky * k + kx) * out + o)
    const Tensor& b = ps[1]->value;
    Tensor expect(Shape{1, 6, 6, 3});
    for (std::size_t iy = 0; iy < 3; ++iy)
        for (std::size_t ix = 0; ix < 3; ++ix)
            for (std::size_t ky = 0; ky < 4; ++ky)
                for (std::size_t kx = 0; kx < 4; ++kx) {
                    const long oy = static_cast<long>(iy * 2 + ky) - 1, ox = static_cast<long>(ix * 2 + kx) - 1;
                    if (oy < 0 || ox < 0 || oy >= 6 || ox >= 6) continue;
                    for (std::size_t c = 0; c < 2; ++c)
                        for (std::size_t o = 0; o < 3; ++o)
                            expect[(oy * 6 + ox) * 3 + o] += x[(iy * 3 + ix) * 2 + c] * w.at(c, (ky * 4 + kx) * 3 + o);
                }
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(y[i], expect[i] + b[i % 3], 1e-12);
}

TEST(Layers, GradientsMatchFiniteDifferences) {
    Rng init(6), rng(7);
    {
        Dense d(4, 3, init, 0.5);
        expect_layer_gradients(d, random_tensor({5, 4}, rng), false);
    }
    {
        Conv2d c(2, 3, ConvGeometry{}, init, 0.3);
        expect_layer_gradients(c, random_tensor({2, 4, 4, 2}, rng), false);
    }
    {
        ConvTranspose2d c(3, 2, ConvGeometry{}, init, 0.3);
        expect_layer_gradients(c, random_tensor({2, 2, 2, 3}, rng), false);
    }
    {
        BatchNorm bn(3);
        expect_layer_gradients(bn, random_tensor({6, 3}, rng), true);
    }
    {
        BatchNorm bn(2);
        expect_layer_gradients(bn, random_tensor({2, 3, 3, 2}, rng), true);
    }
    {
        LeakyRelu a(0.2);
        expect_layer_gradients(a, random_tensor({4, 5}, rng), false);
    }
    {
        Tanh t;
        expect_layer_gradients(t, random_tensor({4, 5}, rng), false);
    }
    {
        Dropout dr(0.4);
        expect_layer_gradients(dr, random_tensor({4, 5}, rng), true);
    }
}

TEST(Layers, BatchNormRunningStatsOnlyMoveWhenAsked) {
    Rng rng(8);
    BatchNorm bn(2);
    const Tensor x = random_tensor({16, 2}, rng);
    const auto before = bn.buffers()[0]->value.storage();
    bn.forward(x, PassContext::train(rng, false));
    EXPECT_EQ(bn.buffers()[0]->value.storage(), before);
    bn.forward(x, PassContext::train(rng, true));
    EXPECT_NE(bn.buffers()[0]->value.storage(), before);
}

TEST(Layers, BatchNormNormalizesInTraining) {
    Rng rng(9);
    BatchNorm bn(1);
    Tensor x = random_tensor({200, 1}, rng);
    for (auto& v : x.storage()) v = 3.0 * v + 5.0;
    const Tensor y = bn.forward(x, PassContext::train(rng));
    double mean = 0.0, var = 0.0;
    for (double v : y.storage()) mean += v;
    mean /= 200.0;
    for (double v : y.storage()) var += (v - mean) * (v - mean);
    var /= 200.0;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-3);
}

TEST(Layers, DropoutIsIdentityAtInference) {
    Rng rng(10);
    Dropout d(0.5);
    const Tensor x = random_tensor({3, 4}, rng);
    EXPECT_EQ(d.forward(x, PassContext::inference()).storage(), x.storage());
}

TEST(Layers, DropoutKeepsExpectation) {
    Rng rng(11);
    Dropout d(0.4);
    const Tensor x(Shape{1, 200000}, 1.0);
    const Tensor y = d.forward(x, PassContext::train(rng));
    double mean = 0.0;
    for (double v : y.storage()) mean += v;
    mean /= static_cast<double>(y.size());
    // Each entry is 0 or 1/0.6; the standard error of the mean is about 0.0018.
    EXPECT_NEAR(mean, 1.0, 0.01);
}

TEST(Layers, SequentialCloneIsDeep) {
    Rng init(12);
    Sequential s;
    s.add("fc", std::make_unique<Dense>(2, 2, init, 1.0));
    Sequential c = s;
    c.params()[0]->value[0] += 1.0;
    EXPECT_NE(c.params()[0]->value[0], s.params()[0]->value[0]);
    EXPECT_EQ(s.params()[0]->name, "fc.weight");
    EXPECT_EQ(s.parameter_count(), 6u);
}
