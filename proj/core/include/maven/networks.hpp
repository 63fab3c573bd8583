// SPDX-License-Identifier: Apache-2.0
//
// The three networks of the model: encoder E, generator G and the (n+1)-way
// discriminator D with a feature tap, plus latent sampling and class readout.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "maven/layers.hpp"
#include "maven/random.hpp"
#include "maven/tensor.hpp"

namespace maven {

struct ImageShape {
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t channels = 3;

    bool operator==(const ImageShape&) const = default;
    Shape batch(std::size_t n) const { return {n, height, width, channels}; }
    std::size_t numel() const { return height * width * channels; }
};

enum class Architecture {
    conv,   // strided convolutions; H and W powers of two >= 16
    dense,  // 1x1 "images" (toy data): fully connected stacks
};

struct NetworkConfig {
    std::size_t latent_dim = 100;
    ImageShape image_shape{};
    std::size_t n_classes = 10;
    /// Conv: channels per stride-2 block of D and E (G mirrors them). Dense: hidden widths.
    std::vector<std::size_t> widths{32, 64, 128};
    double leaky_relu_alpha = 0.2;
    double dropout_rate = 0.4;

    Architecture architecture() const;
    /// Throws ConfigError describing the first violated invariant.
    void validate() const;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct EncoderOutput {
    Tensor mu;            // (batch, latent_dim)
    Tensor log_sigma_sq;  // (batch, latent_dim)
};

struct DiscriminatorOutput {
    Tensor logits;    // (batch, n + 1); the last column is the fake class
    Tensor features;  // (batch, feature_dim)
};

/// z = mu + exp(0.5 * log_sigma_sq) * epsilon, elementwise.
Tensor reparameterize(const EncoderOutput& enc, const Tensor& epsilon);

/// Gradients of a scalar loss with respect to mu and log_sigma_sq, given dL/dz.
EncoderOutput reparameterize_backward(const EncoderOutput& enc, const Tensor& epsilon, const Tensor& grad_z);

/// Row-wise softmax with max subtraction. Throws std::domain_error on non-finite logits.
Tensor class_probabilities(const Tensor& logits);

/// Argmax over the first n entries of a probability row (the fake entry is ignored).
/// Ties go to the lowest index. Class indices are zero-based.
std::size_t predict_class(std::span<const double> probs);
std::vector<std::size_t> predict_classes(const Tensor& probs);

/// A network is a Sequential body plus the bookkeeping to save and restore it.
class Network {
public:
    std::vector<Param*> params() { return body_.params(); }
    std::vector<Buffer*> buffers() { return body_.buffers(); }
    void zero_grad() { body_.zero_grad(); }
    std::size_t parameter_count() { return body_.parameter_count(); }
    std::vector<std::string> layer_names() const { return body_.layer_names(); }

protected:
    Sequential body_;
};

class Encoder final : public Network {
public:
    Encoder(const NetworkConfig& cfg, Rng& init);

    EncoderOutput encode(const Tensor& x, const PassContext& ctx);
    /// Backpropagates from (dL/dmu, dL/dlog_sigma_sq) to the input images.
    Tensor backward(const EncoderOutput& grad, bool param_grads);

    /// Zeroes the final affine layer so both outputs start at exactly zero.
    void zero_output_layer();

private:
    NetworkConfig cfg_;
};

class Generator final : public Network {
public:
    Generator(const NetworkConfig& cfg, Rng& init);

    Tensor generate(const Tensor& z, const PassContext& ctx);
    Tensor backward(const Tensor& grad_images, bool param_grads);

private:
    NetworkConfig cfg_;
};

class Discriminator final : public Network {
public:
    Discriminator(const NetworkConfig& cfg, Rng& init);

    DiscriminatorOutput discriminate(const Tensor& x, const PassContext& ctx);
    /// grad_features may be empty when only the logits carry loss.
    Tensor backward(const Tensor& grad_logits, const Tensor& grad_features, bool param_grads);

    std::size_t feature_dim() const { return feature_dim_; }
    std::size_t n_outputs() const { return cfg_.n_classes + 1; }
    void zero_head();

    std::vector<Param*> params();
    std::vector<Buffer*> buffers();
    void zero_grad();
    std::size_t parameter_count();
    std::vector<std::string> layer_names() const;

private:
    NetworkConfig cfg_;
    Sequential head_;
    std::size_t feature_dim_ = 0;
};

// ---------------------------------------------------------------- checkpoints

/// Named tensors of one network (parameters then buffers) in a fixed order.
struct TensorRef {
    std::string name;
    Tensor* tensor;
    std::string kind;  // "param" | "buffer" | other labels for optimizer state
};

std::vector<TensorRef> tensor_refs(std::vector<Param*> params, std::vector<Buffer*> buffers);

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Writes <stem>.json (manifest: network name, config echo, layer names, tensor names,
/// shapes, dtype) and <stem>.bin (little-endian float32 values, manifest order).
void save_tensors(const std::filesystem::path& stem, const std::string& network, const NetworkConfig& cfg,
                  const std::vector<std::string>& layer_names, const std::vector<TensorRef>& tensors);

/// Loads values into the given tensors, validating names and shapes against the manifest.
void load_tensors(const std::filesystem::path& stem, const std::string& network,
                  const std::vector<TensorRef>& tensors);

/// Reads only the config echo from a manifest.
NetworkConfig read_manifest_config(const std::filesystem::path& stem);

}  // namespace maven
