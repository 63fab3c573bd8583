// SPDX-License-Identifier: Apache-2.0
#include "maven/networks.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

namespace maven {

namespace {

constexpr double kConvInitStd = 0.02;

double dense_init_std(std::size_t fan_in) { return std::sqrt(1.0 / static_cast<double>(fan_in)); }

bool is_pow2(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

std::size_t bottom_size(std::size_t side, std::size_t blocks) { return side >> blocks; }

}  // namespace

Architecture NetworkConfig::architecture() const {
    return image_shape.height == 1 && image_shape.width == 1 ? Architecture::dense : Architecture::conv;
}

void NetworkConfig::validate() const {
    if (latent_dim == 0) throw ConfigError("network: latent_dim must be positive");
    if (n_classes < 2) throw ConfigError("network: n_classes must be >= 2, got " + std::to_string(n_classes));
    if (image_shape.channels == 0) throw ConfigError("network: image channels must be positive");
    if (widths.empty() || std::find(widths.begin(), widths.end(), 0u) != widths.end()) {
        throw ConfigError("network: widths must be a non-empty list of positive integers");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("network: dropout_rate must lie in [0, 1)");
    if (architecture() == Architecture::conv) {
        const auto h = image_shape.height, w = image_shape.width;
        if (!is_pow2(h) || !is_pow2(w) || h < 16 || w < 16) {
            throw ConfigError("network: image height and width must be powers of two >= 16, got " +
                              std::to_string(h) + "x" + std::to_string(w));
        }
        if (bottom_size(h, widths.size()) == 0 || bottom_size(w, widths.size()) == 0) {
            throw ConfigError("network: " + std::to_string(widths.size()) + " stride-2 blocks do not fit a " +
                              std::to_string(h) + "x" + std::to_string(w) + " image");
        }
    }
}

// ---------------------------------------------------------------- latent sampling

Tensor reparameterize(const EncoderOutput& enc, const Tensor& epsilon) {
    if (!enc.mu.same_shape(enc.log_sigma_sq)) {
        throw ShapeError("reparameterize: mu " + shape_to_string(enc.mu.shape()) + " vs log_sigma_sq " +
                         shape_to_string(enc.log_sigma_sq.shape()));
    }
    require_shape(epsilon, enc.mu.shape(), "reparameterize: epsilon");
    Tensor z(enc.mu.shape());
    for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = enc.mu[i] + std::exp(0.5 * enc.log_sigma_sq[i]) * epsilon[i];
    }
    return z;
}

EncoderOutput reparameterize_backward(const EncoderOutput& enc, const Tensor& epsilon, const Tensor& grad_z) {
    EncoderOutput g{grad_z, Tensor(grad_z.shape())};
    for (std::size_t i = 0; i < grad_z.size(); ++i) {
        g.log_sigma_sq[i] = grad_z[i] * 0.5 * std::exp(0.5 * enc.log_sigma_sq[i]) * epsilon[i];
    }
    return g;
}

// ---------------------------------------------------------------- class readout

Tensor class_probabilities(const Tensor& logits) {
    if (logits.rank() != 2) throw ShapeError("class_probabilities: expected (batch, n+1) logits");
    if (!logits.all_finite()) throw std::domain_error("class_probabilities: non-finite logits");
    Tensor p(logits.shape());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto in = logits.row(r);
        auto out = p.row(r);
        const double mx = *std::max_element(in.begin(), in.end());
        double sum = 0.0;
        for (std::size_t j = 0; j < in.size(); ++j) sum += out[j] = std::exp(in[j] - mx);
        for (auto& v : out) v /= sum;
    }
    return p;
}

std::size_t predict_class(std::span<const double> probs) {
    if (probs.size() < 2) throw std::invalid_argument("predict_class: need at least one real class plus fake");
    const auto real = probs.first(probs.size() - 1);
    return static_cast<std::size_t>(std::max_element(real.begin(), real.end()) - real.begin());
}

std::vector<std::size_t> predict_classes(const Tensor& probs) {
    std::vector<std::size_t> out(probs.rows());
    for (std::size_t r = 0; r < probs.rows(); ++r) out[r] = predict_class(probs.row(r));
    return out;
}

// ---------------------------------------------------------------- encoder

Encoder::Encoder(const NetworkConfig& cfg, Rng& init) : cfg_(cfg) {
    cfg_.validate();
    const auto& s = cfg_.image_shape;
    const double a = cfg_.leaky_relu_alpha;
    if (cfg_.architecture() == Architecture::conv) {
        std::size_t in = s.channels;
        for (std::size_t i = 0; i < cfg_.widths.size(); ++i) {
            const auto tag = std::to_string(i + 1);
            body_.add("conv" + tag, std::make_unique<Conv2d>(in, cfg_.widths[i], ConvGeometry{}, init, kConvInitStd));
            body_.add("bn" + tag, std::make_unique<BatchNorm>(cfg_.widths[i]));
            body_.add("act" + tag, std::make_unique<LeakyRelu>(a));
            in = cfg_.widths[i];
        }
        const std::size_t flat =
            bottom_size(s.height, cfg_.widths.size()) * bottom_size(s.width, cfg_.widths.size()) * in;
        body_.add("flatten", std::make_unique<Reshape>(Shape{flat}));
        body_.add("out", std::make_unique<Dense>(flat, 2 * cfg_.latent_dim, init, kConvInitStd));
    } else {
        std::size_t in = s.channels;
        body_.add("flatten", std::make_unique<Reshape>(Shape{in}));
        for (std::size_t i = 0; i < cfg_.widths.size(); ++i) {
            const auto tag = std::to_string(i + 1);
            body_.add("fc" + tag, std::make_unique<Dense>(in, cfg_.widths[i], init, dense_init_std(in)));
            body_.add("bn" + tag, std::make_unique<BatchNorm>(cfg_.widths[i]));
            body_.add("act" + tag, std::make_unique<LeakyRelu>(a));
            in = cfg_.widths[i];
        }
        body_.add("out", std::make_unique<Dense>(in, 2 * cfg_.latent_dim, init, dense_init_std(in)));
    }
}

EncoderOutput Encoder::encode(const Tensor& x, const PassContext& ctx) {
    if (x.rank() != 4) throw ShapeError("encode: expected NHWC images, got " + shape_to_string(x.shape()));
    require_shape(x, cfg_.image_shape.batch(x.dim(0)), "encode: input");
    const Tensor out = body_.forward(x, ctx);
    const std::size_t n = x.dim(0), d = cfg_.latent_dim;
    EncoderOutput enc{Tensor(Shape{n, d}), Tensor(Shape{n, d})};
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < d; ++j) {
            enc.mu.at(r, j) = out.at(r, j);
            enc.log_sigma_sq.at(r, j) = out.at(r, d + j);
        }
    }
    return enc;
}

Tensor Encoder::backward(const EncoderOutput& grad, bool param_grads) {
    const std::size_t n = grad.mu.dim(0), d = cfg_.latent_dim;
    Tensor g(Shape{n, 2 * d});
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < d; ++j) {
            g.at(r, j) = grad.mu.at(r, j);
            g.at(r, d + j) = grad.log_sigma_sq.at(r, j);
        }
    }
    return body_.backward(g, param_grads);
}

void Encoder::zero_output_layer() {
    for (Param* p : body_.layer(body_.num_layers() - 1).params()) p->value.fill(0.0);
}

// ---------------------------------------------------------------- generator

Generator::Generator(const NetworkConfig& cfg, Rng& init) : cfg_(cfg) {
    cfg_.validate();
    const auto& s = cfg_.image_shape;
    const double a = cfg_.leaky_relu_alpha;
    const auto& w = cfg_.widths;
    if (cfg_.architecture() == Architecture::conv) {
        const std::size_t blocks = w.size();
        const std::size_t h0 = bottom_size(s.height, blocks), w0 = bottom_size(s.width, blocks);
        const std::size_t c0 = w.back();
        body_.add("project", std::make_unique<Dense>(cfg_.latent_dim, h0 * w0 * c0, init, kConvInitStd));
        body_.add("unflatten", std::make_unique<Reshape>(Shape{h0, w0, c0}));
        body_.add("bn0", std::make_unique<BatchNorm>(c0));
        body_.add("act0", std::make_unique<LeakyRelu>(a));
        std::size_t in = c0;
        for (std::size_t i = blocks; i-- > 1;) {
            const auto tag = std::to_string(blocks - i);
            body_.add("deconv" + tag, std::make_unique<ConvTranspose2d>(in, w[i - 1], ConvGeometry{}, init, kConvInitStd));
            body_.add("bn" + tag, std::make_unique<BatchNorm>(w[i - 1]));
            body_.add("act" + tag, std::make_unique<LeakyRelu>(a));
            in = w[i - 1];
        }
        body_.add("deconv_out", std::make_unique<ConvTranspose2d>(in, s.channels, ConvGeometry{}, init, kConvInitStd));
    } else {
        std::size_t in = cfg_.latent_dim;
        for (std::size_t i = w.size(); i-- > 0;) {
            const auto tag = std::to_string(w.size() - i);
            body_.add("fc" + tag, std::make_unique<Dense>(in, w[i], init, dense_init_std(in)));
            body_.add("bn" + tag, std::make_unique<BatchNorm>(w[i]));
            body_.add("act" + tag, std::make_unique<LeakyRelu>(a));
            in = w[i];
        }
        body_.add("out", std::make_unique<Dense>(in, s.channels, init, dense_init_std(in)));
        body_.add("unflatten", std::make_unique<Reshape>(Shape{1, 1, s.channels}));
    }
    body_.add("tanh", std::make_unique<Tanh>());
}

Tensor Generator::generate(const Tensor& z, const PassContext& ctx) {
    if (z.rank() != 2 || z.dim(1) != cfg_.latent_dim) {
        throw ShapeError("generate: expected latent codes (batch, " + std::to_string(cfg_.latent_dim) + "), got " +
                         shape_to_string(z.shape()));
    }
    return body_.forward(z, ctx);
}

Tensor Generator::backward(const Tensor& grad_images, bool param_grads) {
    return body_.backward(grad_images, param_grads);
}

// ---------------------------------------------------------------- discriminator

Discriminator::Discriminator(const NetworkConfig& cfg, Rng& init) : cfg_(cfg) {
    cfg_.validate();
    const auto& s = cfg_.image_shape;
    const double a = cfg_.leaky_relu_alpha;
    const auto& w = cfg_.widths;
    std::size_t in = s.channels;
    if (cfg_.architecture() == Architecture::conv) {
        for (std::size_t i = 0; i < w.size(); ++i) {
            const auto tag = std::to_string(i + 1);
            body_.add("conv" + tag, std::make_unique<Conv2d>(in, w[i], ConvGeometry{}, init, kConvInitStd));
            if (i > 0) body_.add("bn" + tag, std::make_unique<BatchNorm>(w[i]));
            body_.add("act" + tag, std::make_unique<LeakyRelu>(a));
            body_.add("drop" + tag, std::make_unique<Dropout>(cfg_.dropout_rate));
            in = w[i];
        }
        feature_dim_ = bottom_size(s.height, w.size()) * bottom_size(s.width, w.size()) * in;
        body_.add("flatten", std::make_unique<Reshape>(Shape{feature_dim_}));
        head_.add("head", std::make_unique<Dense>(feature_dim_, cfg_.n_classes + 1, init, kConvInitStd));
    } else {
        body_.add("flatten", std::make_unique<Reshape>(Shape{in}));
        for (std::size_t i = 0; i < w.size(); ++i) {
            const auto tag = std::to_string(i + 1);
            body_.add("fc" + tag, std::make_unique<Dense>(in, w[i], init, dense_init_std(in)));
            body_.add("act" + tag, std::make_unique<LeakyRelu>(a));
            body_.add("drop" + tag, std::make_unique<Dropout>(cfg_.dropout_rate));
            in = w[i];
        }
        feature_dim_ = in;
        head_.add("head", std::make_unique<Dense>(in, cfg_.n_classes + 1, init, dense_init_std(in)));
    }
}

DiscriminatorOutput Discriminator::discriminate(const Tensor& x, const PassContext& ctx) {
    if (x.rank() != 4) throw ShapeError("discriminate: expected NHWC images, got " + shape_to_string(x.shape()));
    require_shape(x, cfg_.image_shape.batch(x.dim(0)), "discriminate: input");
    DiscriminatorOutput out;
    out.features = body_.forward(x, ctx);
    out.logits = head_.forward(out.features, ctx);
    return out;
}

Tensor Discriminator::backward(const Tensor& grad_logits, const Tensor& grad_features, bool param_grads) {
    Tensor g = head_.backward(grad_logits, param_grads);
    if (!grad_features.empty()) g += grad_features;
    return body_.backward(g, param_grads);
}

void Discriminator::zero_head() {
    for (Param* p : head_.params()) p->value.fill(0.0);
}

std::vector<Param*> Discriminator::params() {
    auto p = body_.params();
    for (Param* h : head_.params()) p.push_back(h);
    return p;
}

std::vector<Buffer*> Discriminator::buffers() { return body_.buffers(); }

void Discriminator::zero_grad() {
    body_.zero_grad();
    head_.zero_grad();
}

std::size_t Discriminator::parameter_count() { return body_.parameter_count() + head_.parameter_count(); }

std::vector<std::string> Discriminator::layer_names() const {
    auto names = body_.layer_names();
    for (auto& n : head_.layer_names()) names.push_back(n);
    return names;
}

// ---------------------------------------------------------------- checkpoints

std::vector<TensorRef> tensor_refs(std::vector<Param*> params, std::vector<Buffer*> buffers) {
    std::vector<TensorRef> refs;
    for (Param* p : params) refs.push_back({p->name, &p->value, "param"});
    for (Buffer* b : buffers) refs.push_back({b->name, &b->value, "buffer"});
    return refs;
}

namespace {

using nlohmann::json;

json config_to_json(const NetworkConfig& cfg) {
    return json{{"latent_dim", cfg.latent_dim},
                {"image_shape", {cfg.image_shape.height, cfg.image_shape.width, cfg.image_shape.channels}},
                {"n_classes", cfg.n_classes},
                {"widths", cfg.widths},
                {"leaky_relu_alpha", cfg.leaky_relu_alpha},
                {"dropout_rate", cfg.dropout_rate}};
}

NetworkConfig config_from_json(const json& j) {
    NetworkConfig cfg;
    cfg.latent_dim = j.at("latent_dim").get<std::size_t>();
    const auto shape = j.at("image_shape").get<std::vector<std::size_t>>();
    if (shape.size() != 3) throw CheckpointError("manifest: image_shape must have 3 entries");
    cfg.image_shape = {shape[0], shape[1], shape[2]};
    cfg.n_classes = j.at("n_classes").get<std::size_t>();
    cfg.widths = j.at("widths").get<std::vector<std::size_t>>();
    cfg.leaky_relu_alpha = j.at("leaky_relu_alpha").get<double>();
    cfg.dropout_rate = j.at("dropout_rate").get<double>();
    return cfg;
}

void put_f32_le(std::ostream& os, float v) {
    static_assert(sizeof(float) == 4);
    auto bits = std::bit_cast<std::uint32_t>(v);
    const unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

float get_f32_le(const unsigned char* b) {
    const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    return std::bit_cast<float>(bits);
}

std::filesystem::path with_ext(const std::filesystem::path& stem, const char* ext) {
    return std::filesystem::path(stem.string() + ext);
}

json read_manifest(const std::filesystem::path& stem) {
    std::ifstream in(with_ext(stem, ".json"));
    if (!in) throw CheckpointError("cannot open manifest " + with_ext(stem, ".json").string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw CheckpointError("malformed manifest " + with_ext(stem, ".json").string() + ": " + e.what());
    }
}

}  // namespace

void save_tensors(const std::filesystem::path& stem, const std::string& network, const NetworkConfig& cfg,
                  const std::vector<std::string>& layer_names, const std::vector<TensorRef>& tensors) {
    json manifest{{"format", "maven-checkpoint-v1"},
                  {"network", network},
                  {"dtype", "float32"},
                  {"byte_order", "little"},
                  {"config", config_to_json(cfg)},
                  {"layers", layer_names}};
    json entries = json::array();
    std::size_t offset = 0;
    for (const auto& t : tensors) {
        entries.push_back({{"name", t.name}, {"kind", t.kind}, {"shape", t.tensor->shape()}, {"offset", offset}});
        offset += t.tensor->size();
    }
    manifest["tensors"] = entries;
    manifest["total_values"] = offset;

    std::ofstream bin(with_ext(stem, ".bin"), std::ios::binary);
    if (!bin) throw CheckpointError("cannot write " + with_ext(stem, ".bin").string());
    for (const auto& t : tensors) {
        for (double v : t.tensor->storage()) put_f32_le(bin, static_cast<float>(v));
    }
    bin.close();
    if (!bin) throw CheckpointError("write failed for " + with_ext(stem, ".bin").string());

    std::ofstream js(with_ext(stem, ".json"));
    if (!js) throw CheckpointError("cannot write " + with_ext(stem, ".json").string());
    js << manifest.dump(2) << '\n';
    if (!js) throw CheckpointError("write failed for " + with_ext(stem, ".json").string());
}

void load_tensors(const std::filesystem::path& stem, const std::string& network,
                  const std::vector<TensorRef>& tensors) {
    const json manifest = read_manifest(stem);
    if (manifest.value("network", "") != network) {
        throw CheckpointError("checkpoint " + stem.string() + " holds network '" + manifest.value("network", "") +
                              "', expected '" + network + "'");
    }
    if (manifest.value("dtype", "") != "float32") throw CheckpointError("checkpoint dtype must be float32");
    const auto& entries = manifest.at("tensors");
    if (entries.size() != tensors.size()) {
        throw CheckpointError("checkpoint " + stem.string() + " has " + std::to_string(entries.size()) +
                              " tensors, model expects " + std::to_string(tensors.size()));
    }
    std::ifstream bin(with_ext(stem, ".bin"), std::ios::binary);
    if (!bin) throw CheckpointError("cannot open " + with_ext(stem, ".bin").string());
    std::vector<unsigned char> raw((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
    const std::size_t total = manifest.at("total_values").get<std::size_t>();
    if (raw.size() != 4 * total) throw CheckpointError("checkpoint " + stem.string() + ": payload size mismatch");

    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const auto& e = entries[i];
        const auto& t = tensors[i];
        const auto name = e.at("name").get<std::string>();
        const auto shape = e.at("shape").get<Shape>();
        if (name != t.name) throw CheckpointError("checkpoint tensor " + std::to_string(i) + " is '" + name + "', expected '" + t.name + "'");
        if (shape != t.tensor->shape()) {
            throw CheckpointError("checkpoint tensor '" + name + "' has shape " + shape_to_string(shape) +
                                  ", model expects " + shape_to_string(t.tensor->shape()));
        }
        const std::size_t off = e.at("offset").get<std::size_t>();
        if (off + t.tensor->size() > total) throw CheckpointError("checkpoint tensor '" + name + "' overruns payload");
        for (std::size_t k = 0; k < t.tensor->size(); ++k) {
            (*t.tensor)[k] = static_cast<double>(get_f32_le(raw.data() + 4 * (off + k)));
        }
    }
}

NetworkConfig read_manifest_config(const std::filesystem::path& stem) {
    return config_from_json(read_manifest(stem).at("config"));
}

}  // namespace maven
