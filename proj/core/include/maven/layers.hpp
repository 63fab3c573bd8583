// SPDX-License-Identifier: Apache-2.0
//
// Layers with hand-written backward passes. Each layer caches what it needs from its
// most recent forward call, so a backward call always refers to the latest forward.
#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "maven/random.hpp"
#include "maven/tensor.hpp"

namespace maven {

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
};

struct Buffer {
    std::string name;
    Tensor value;
};

/// How a forward pass behaves. Training mode uses batch statistics and dropout;
/// running statistics only move when update_stats is also set.
struct PassContext {
    bool training = false;
    bool update_stats = false;
    Rng* rng = nullptr;

    static PassContext inference() { return {}; }
    static PassContext train(Rng& rng, bool update_stats = true) { return {true, update_stats, &rng}; }
};

class Layer {
public:
    virtual ~Layer() = default;

    virtual std::string kind() const = 0;
    virtual Tensor forward(const Tensor& x, const PassContext& ctx) = 0;
    /// Returns d(loss)/d(input). Parameter gradients are accumulated when param_grads is set.
    virtual Tensor backward(const Tensor& grad_out, bool param_grads) = 0;
    virtual std::vector<Param*> params() { return {}; }
    virtual std::vector<Buffer*> buffers() { return {}; }
    virtual std::unique_ptr<Layer> clone() const = 0;
};

class Dense final : public Layer {
public:
    Dense(std::size_t in, std::size_t out, Rng& init, double init_std);
    std::string kind() const override { return "dense"; }
    Tensor forward(const Tensor& x, const PassContext& ctx) override;
    Tensor backward(const Tensor& grad_out, bool param_grads) override;
    std::vector<Param*> params() override { return {&weight_, &bias_}; }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }

private:
    std::size_t in_, out_;
    Param weight_, bias_;
    Tensor input_;
};

struct ConvGeometry {
    std::size_t kernel = 4;
    std::size_t stride = 2;
    std::size_t pad = 1;
};

/// NHWC convolution via im2col and a dense product.
class Conv2d final : public Layer {
public:
    Conv2d(std::size_t in_ch, std::size_t out_ch, ConvGeometry geom, Rng& init, double init_std);
    std::string kind() const override { return "conv2d"; }
    Tensor forward(const Tensor& x, const PassContext& ctx) override;
    Tensor backward(const Tensor& grad_out, bool param_grads) override;
    std::vector<Param*> params() override { return {&weight_, &bias_}; }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }

private:
    std::size_t in_ch_, out_ch_;
    ConvGeometry geom_;
    Param weight_, bias_;  // weight: (k*k*in, out)
    Tensor cols_;
    Shape in_shape_;
};

/// Fractionally strided convolution; output spatial size (in - 1) * stride - 2 * pad + kernel.
class ConvTranspose2d final : public Layer {
public:
    ConvTranspose2d(std::size_t in_ch, std::size_t out_ch, ConvGeometry geom, Rng& init, double init_std);
    std::string kind() const override { return "conv_transpose2d"; }
    Tensor forward(const Tensor& x, const PassContext& ctx) override;
    Tensor backward(const Tensor& grad_out, bool param_grads) override;
    std::vector<Param*> params() override { return {&weight_, &bias_}; }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<ConvTranspose2d>(*this); }

private:
    std::size_t in_ch_, out_ch_;
    ConvGeometry geom_;
    Param weight_, bias_;  // weight: (in, k*k*out)
    Tensor input_;
    Shape out_shape_;
};

/// Normalizes over every axis but the last (channels).
class BatchNorm final : public Layer {
public:
    explicit BatchNorm(std::size_t channels, double momentum = 0.1, double eps = 1e-5);
    std::string kind() const override { return "batch_norm"; }
    Tensor forward(const Tensor& x, const PassContext& ctx) override;
    Tensor backward(const Tensor& grad_out, bool param_grads) override;
    std::vector<Param*> params() override { return {&gamma_, &beta_}; }
    std::vector<Buffer*> buffers() override { return {&running_mean_, &running_var_}; }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm>(*this); }

private:
    std::size_t channels_;
    double momentum_, eps_;
    Param gamma_, beta_;
    Buffer running_mean_, running_var_;
    Tensor xhat_;
    std::vector<double> inv_std_;
    bool used_batch_stats_ = false;
};

class LeakyRelu final : public Layer {
public:
    explicit LeakyRelu(double alpha) : alpha_(alpha) {}
    std::string kind() const override { return "leaky_relu"; }
    Tensor forward(const Tensor& x, const PassContext& ctx) override;
    Tensor backward(const Tensor& grad_out, bool param_grads) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<LeakyRelu>(*this); }

private:
    double alpha_;
    Tensor input_;
};

class Tanh final : public Layer {
public:
    std::string kind() const override { return "tanh"; }
    Tensor forward(const Tensor& x, const PassContext& ctx) override;
    Tensor backward(const Tensor& grad_out, bool param_grads) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Tanh>(*this); }

private:
    Tensor output_;
};

/// Inverted dropout; identity outside training mode. The mask comes from ctx.rng.
class Dropout final : public Layer {
public:
    explicit Dropout(double rate) : rate_(rate) {}
    std::string kind() const override { return "dropout"; }
    Tensor forward(const Tensor& x, const PassContext& ctx) override;
    Tensor backward(const Tensor& grad_out, bool param_grads) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Dropout>(*this); }

private:
    double rate_;
    std::vector<double> mask_;
};

/// Reshapes each item to item_shape (batch axis preserved).
class Reshape final : public Layer {
public:
    explicit Reshape(Shape item_shape) : item_shape_(std::move(item_shape)) {}
    std::string kind() const override { return "reshape"; }
    Tensor forward(const Tensor& x, const PassContext& ctx) override;
    Tensor backward(const Tensor& grad_out, bool param_grads) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Reshape>(*this); }

private:
    Shape item_shape_;
    Shape in_shape_;
};

class Sequential {
public:
    Sequential() = default;
    Sequential(const Sequential& other);
    Sequential& operator=(const Sequential& other);
    Sequential(Sequential&&) noexcept = default;
    Sequential& operator=(Sequential&&) noexcept = default;

    void add(std::string name, std::unique_ptr<Layer> layer);

    Tensor forward(const Tensor& x, const PassContext& ctx);
    Tensor backward(const Tensor& grad_out, bool param_grads);

    /// Parameters named "<layer>.<param>", in layer order.
    std::vector<Param*> params();
    std::vector<Buffer*> buffers();
    std::vector<std::string> layer_names() const;
    std::size_t num_layers() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_.at(i).second; }

    void zero_grad();
    std::size_t parameter_count();

private:
    std::vector<std::pair<std::string, std::unique_ptr<Layer>>> layers_;
};

}  // namespace maven
