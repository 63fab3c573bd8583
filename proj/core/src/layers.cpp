// SPDX-License-Identifier: Apache-2.0
#include "maven/layers.hpp"

#include <Eigen/Core>
#include <cmath>

namespace maven {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::RowVectorXd>;

MatMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
    return {t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}
ConstMatMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
    return {t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

Param make_param(std::string name, Shape shape, Rng* init, double std) {
    Param p{std::move(name), Tensor(shape), Tensor(shape)};
    if (init) {
        for (auto& v : p.value.storage()) v = std * init->normal();
    }
    return p;
}

struct Spatial {
    std::size_t n, h, w, c;
};

Spatial spatial_of(const Tensor& x, const char* who) {
    if (x.rank() != 4) throw ShapeError(std::string(who) + ": expected rank-4 NHWC input, got " + shape_to_string(x.shape()));
    return {x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
}

// cols[(n, oy, ox), (ky, kx, c)] = x[n, oy*s - p + ky, ox*s - p + kx, c]
Tensor im2col(const Tensor& x, Spatial in, const ConvGeometry& g, std::size_t ho, std::size_t wo) {
    const std::size_t k = g.kernel;
    Tensor cols(Shape{in.n * ho * wo, k * k * in.c});
    double* out = cols.data();
    const double* src = x.data();
    for (std::size_t n = 0; n < in.n; ++n) {
        for (std::size_t oy = 0; oy < ho; ++oy) {
            for (std::size_t ox = 0; ox < wo; ++ox) {
                for (std::size_t ky = 0; ky < k; ++ky) {
                    const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                        if (iy >= 0 && ix >= 0 && iy < static_cast<long>(in.h) && ix < static_cast<long>(in.w)) {
                            const double* px = src + ((n * in.h + static_cast<std::size_t>(iy)) * in.w +
                                                      static_cast<std::size_t>(ix)) * in.c;
                            std::copy_n(px, in.c, out);
                        }
                        out += in.c;
                    }
                }
            }
        }
    }
    return cols;
}

// Adjoint of im2col: scatter-add columns back onto an NHWC image.
void col2im(const Tensor& cols, Spatial in, const ConvGeometry& g, std::size_t ho, std::size_t wo, Tensor& x) {
    const std::size_t k = g.kernel;
    const double* src = cols.data();
    double* dst = x.data();
    for (std::size_t n = 0; n < in.n; ++n) {
        for (std::size_t oy = 0; oy < ho; ++oy) {
            for (std::size_t ox = 0; ox < wo; ++ox) {
                for (std::size_t ky = 0; ky < k; ++ky) {
                    const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                        if (iy >= 0 && ix >= 0 && iy < static_cast<long>(in.h) && ix < static_cast<long>(in.w)) {
                            double* px = dst + ((n * in.h + static_cast<std::size_t>(iy)) * in.w +
                                                static_cast<std::size_t>(ix)) * in.c;
                            for (std::size_t c = 0; c < in.c; ++c) px[c] += src[c];
                        }
                        src += in.c;
                    }
                }
            }
        }
    }
}

void add_bias_grad(const Tensor& grad_out, std::size_t channels, Tensor& bias_grad) {
    const std::size_t rows = grad_out.size() / channels;
    as_matrix(bias_grad, 1, channels) += as_matrix(grad_out, rows, channels).colwise().sum();
}

}  // namespace

// ---------------------------------------------------------------- Dense

Dense::Dense(std::size_t in, std::size_t out, Rng& init, double init_std)
    : in_(in), out_(out), weight_(make_param("weight", {in, out}, &init, init_std)),
      bias_(make_param("bias", {out}, nullptr, 0.0)) {}

Tensor Dense::forward(const Tensor& x, const PassContext&) {
    if (x.rank() != 2 || x.dim(1) != in_) {
        throw ShapeError("dense: expected (batch, " + std::to_string(in_) + "), got " + shape_to_string(x.shape()));
    }
    input_ = x;
    const std::size_t n = x.dim(0);
    Tensor y(Shape{n, out_});
    auto ym = as_matrix(y, n, out_);
    ym.noalias() = as_matrix(x, n, in_) * as_matrix(weight_.value, in_, out_);
    ym.rowwise() += as_matrix(bias_.value, 1, out_).row(0);
    return y;
}

Tensor Dense::backward(const Tensor& grad_out, bool param_grads) {
    const std::size_t n = input_.dim(0);
    auto g = as_matrix(grad_out, n, out_);
    if (param_grads) {
        as_matrix(weight_.grad, in_, out_).noalias() += as_matrix(input_, n, in_).transpose() * g;
        add_bias_grad(grad_out, out_, bias_.grad);
    }
    Tensor dx(Shape{n, in_});
    as_matrix(dx, n, in_).noalias() = g * as_matrix(weight_.value, in_, out_).transpose();
    return dx;
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::size_t in_ch, std::size_t out_ch, ConvGeometry geom, Rng& init, double init_std)
    : in_ch_(in_ch), out_ch_(out_ch), geom_(geom),
      weight_(make_param("weight", {geom.kernel * geom.kernel * in_ch, out_ch}, &init, init_std)),
      bias_(make_param("bias", {out_ch}, nullptr, 0.0)) {}

Tensor Conv2d::forward(const Tensor& x, const PassContext&) {
    const Spatial in = spatial_of(x, "conv2d");
    if (in.c != in_ch_) throw ShapeError("conv2d: expected " + std::to_string(in_ch_) + " input channels, got " + shape_to_string(x.shape()));
    const std::size_t ho = (in.h + 2 * geom_.pad - geom_.kernel) / geom_.stride + 1;
    const std::size_t wo = (in.w + 2 * geom_.pad - geom_.kernel) / geom_.stride + 1;
    in_shape_ = x.shape();
    cols_ = im2col(x, in, geom_, ho, wo);
    const std::size_t rows = in.n * ho * wo;
    const std::size_t kk = geom_.kernel * geom_.kernel * in_ch_;
    Tensor y(Shape{in.n, ho, wo, out_ch_});
    auto ym = as_matrix(y, rows, out_ch_);
    ym.noalias() = as_matrix(cols_, rows, kk) * as_matrix(weight_.value, kk, out_ch_);
    ym.rowwise() += as_matrix(bias_.value, 1, out_ch_).row(0);
    return y;
}

Tensor Conv2d::backward(const Tensor& grad_out, bool param_grads) {
    const Spatial in{in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]};
    const std::size_t ho = grad_out.dim(1), wo = grad_out.dim(2);
    const std::size_t rows = in.n * ho * wo;
    const std::size_t kk = geom_.kernel * geom_.kernel * in_ch_;
    auto g = as_matrix(grad_out, rows, out_ch_);
    if (param_grads) {
        as_matrix(weight_.grad, kk, out_ch_).noalias() += as_matrix(cols_, rows, kk).transpose() * g;
        add_bias_grad(grad_out, out_ch_, bias_.grad);
    }
    Tensor dcols(Shape{rows, kk});
    as_matrix(dcols, rows, kk).noalias() = g * as_matrix(weight_.value, kk, out_ch_).transpose();
    Tensor dx(in_shape_);
    col2im(dcols, in, geom_, ho, wo, dx);
    return dx;
}

// ---------------------------------------------------------------- ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(std::size_t in_ch, std::size_t out_ch, ConvGeometry geom, Rng& init,
                                 double init_std)
    : in_ch_(in_ch), out_ch_(out_ch), geom_(geom),
      weight_(make_param("weight", {in_ch, geom.kernel * geom.kernel * out_ch}, &init, init_std)),
      bias_(make_param("bias", {out_ch}, nullptr, 0.0)) {}

Tensor ConvTranspose2d::forward(const Tensor& x, const PassContext&) {
    const Spatial in = spatial_of(x, "conv_transpose2d");
    if (in.c != in_ch_) throw ShapeError("conv_transpose2d: expected " + std::to_string(in_ch_) + " input channels, got " + shape_to_string(x.shape()));
    const std::size_t ho = (in.h - 1) * geom_.stride + geom_.kernel - 2 * geom_.pad;
    const std::size_t wo = (in.w - 1) * geom_.stride + geom_.kernel - 2 * geom_.pad;
    input_ = x;
    out_shape_ = {in.n, ho, wo, out_ch_};
    const std::size_t rows = in.n * in.h * in.w;
    const std::size_t kk = geom_.kernel * geom_.kernel * out_ch_;
    Tensor cols(Shape{rows, kk});
    as_matrix(cols, rows, kk).noalias() = as_matrix(x, rows, in_ch_) * as_matrix(weight_.value, in_ch_, kk);
    Tensor y(out_shape_);
    // The output grid plays the role of a convolution input whose im2col grid is the input grid.
    col2im(cols, Spatial{in.n, ho, wo, out_ch_}, geom_, in.h, in.w, y);
    as_matrix(y, in.n * ho * wo, out_ch_).rowwise() += as_matrix(bias_.value, 1, out_ch_).row(0);
    return y;
}

Tensor ConvTranspose2d::backward(const Tensor& grad_out, bool param_grads) {
    const std::size_t n = input_.dim(0), hi = input_.dim(1), wi = input_.dim(2);
    const std::size_t rows = n * hi * wi;
    const std::size_t kk = geom_.kernel * geom_.kernel * out_ch_;
    const Spatial out{n, out_shape_[1], out_shape_[2], out_ch_};
    Tensor dcols = im2col(grad_out, out, geom_, hi, wi);
    auto dc = as_matrix(dcols, rows, kk);
    if (param_grads) {
        as_matrix(weight_.grad, in_ch_, kk).noalias() += as_matrix(input_, rows, in_ch_).transpose() * dc;
        add_bias_grad(grad_out, out_ch_, bias_.grad);
    }
    Tensor dx(input_.shape());
    as_matrix(dx, rows, in_ch_).noalias() = dc * as_matrix(weight_.value, in_ch_, kk).transpose();
    return dx;
}

// ---------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(std::size_t channels, double momentum, double eps)
    : channels_(channels), momentum_(momentum), eps_(eps),
      gamma_{"gamma", Tensor(Shape{channels}, 1.0), Tensor(Shape{channels})},
      beta_{"beta", Tensor(Shape{channels}), Tensor(Shape{channels})},
      running_mean_{"running_mean", Tensor(Shape{channels})},
      running_var_{"running_var", Tensor(Shape{channels}, 1.0)} {}

Tensor BatchNorm::forward(const Tensor& x, const PassContext& ctx) {
    if (x.rank() < 2 || x.shape().back() != channels_) {
        throw ShapeError("batch_norm: expected trailing dimension " + std::to_string(channels_) + ", got " +
                         shape_to_string(x.shape()));
    }
    const std::size_t rows = x.size() / channels_;
    auto xm = as_matrix(x, rows, channels_);
    Eigen::RowVectorXd mean(channels_), var(channels_);
    used_batch_stats_ = ctx.training;
    if (ctx.training) {
        mean = xm.colwise().mean();
        var = (xm.rowwise() - mean).array().square().colwise().mean();
        if (ctx.update_stats) {
            const double unbiased = rows > 1 ? static_cast<double>(rows) / static_cast<double>(rows - 1) : 1.0;
            for (std::size_t c = 0; c < channels_; ++c) {
                running_mean_.value[c] = (1 - momentum_) * running_mean_.value[c] + momentum_ * mean[static_cast<Eigen::Index>(c)];
                running_var_.value[c] = (1 - momentum_) * running_var_.value[c] + momentum_ * unbiased * var[static_cast<Eigen::Index>(c)];
            }
        }
    } else {
        for (std::size_t c = 0; c < channels_; ++c) {
            mean[static_cast<Eigen::Index>(c)] = running_mean_.value[c];
            var[static_cast<Eigen::Index>(c)] = running_var_.value[c];
        }
    }
    inv_std_.resize(channels_);
    for (std::size_t c = 0; c < channels_; ++c) inv_std_[c] = 1.0 / std::sqrt(var[static_cast<Eigen::Index>(c)] + eps_);
    Eigen::Map<const Eigen::RowVectorXd> inv(inv_std_.data(), static_cast<Eigen::Index>(channels_));

    xhat_ = Tensor(x.shape());
    auto xh = as_matrix(xhat_, rows, channels_);
    xh = ((xm.rowwise() - mean).array().rowwise() * inv.array()).matrix();
    Tensor y(x.shape());
    auto ym = as_matrix(y, rows, channels_);
    ym = (xh.array().rowwise() * as_matrix(gamma_.value, 1, channels_).row(0).array()).matrix();
    ym.rowwise() += as_matrix(beta_.value, 1, channels_).row(0);
    return y;
}

Tensor BatchNorm::backward(const Tensor& grad_out, bool param_grads) {
    const std::size_t rows = grad_out.size() / channels_;
    auto g = as_matrix(grad_out, rows, channels_);
    auto xh = as_matrix(xhat_, rows, channels_);
    if (param_grads) {
        as_matrix(gamma_.grad, 1, channels_) += (g.array() * xh.array()).colwise().sum().matrix();
        as_matrix(beta_.grad, 1, channels_) += g.colwise().sum();
    }
    Eigen::Map<const Eigen::RowVectorXd> inv(inv_std_.data(), static_cast<Eigen::Index>(channels_));
    const Eigen::RowVectorXd gamma = as_matrix(gamma_.value, 1, channels_).row(0);
    RowMat dxhat = (g.array().rowwise() * gamma.array()).matrix();
    Tensor dx(grad_out.shape());
    auto dxm = as_matrix(dx, rows, channels_);
    if (used_batch_stats_) {
        const double m = static_cast<double>(rows);
        const Eigen::RowVectorXd sum_d = dxhat.colwise().sum();
        const Eigen::RowVectorXd sum_dx = (dxhat.array() * xh.array()).colwise().sum().matrix();
        RowMat t = (m * dxhat).rowwise() - sum_d;
        t -= (xh.array().rowwise() * sum_dx.array()).matrix();
        dxm = ((t.array().rowwise() * inv.array()) / m).matrix();
    } else {
        dxm = (dxhat.array().rowwise() * inv.array()).matrix();
    }
    return dx;
}

// ---------------------------------------------------------------- pointwise

Tensor LeakyRelu::forward(const Tensor& x, const PassContext&) {
    input_ = x;
    Tensor y = x;
    for (auto& v : y.storage()) v = v > 0 ? v : alpha_ * v;
    return y;
}

Tensor LeakyRelu::backward(const Tensor& grad_out, bool) {
    Tensor dx = grad_out;
    for (std::size_t i = 0; i < dx.size(); ++i) {
        if (input_[i] <= 0) dx[i] *= alpha_;
    }
    return dx;
}

Tensor Tanh::forward(const Tensor& x, const PassContext&) {
    output_ = x;
    for (auto& v : output_.storage()) v = std::tanh(v);
    return output_;
}

Tensor Tanh::backward(const Tensor& grad_out, bool) {
    Tensor dx = grad_out;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= 1.0 - output_[i] * output_[i];
    return dx;
}

Tensor Dropout::forward(const Tensor& x, const PassContext& ctx) {
    if (!ctx.training || rate_ <= 0.0) {
        mask_.clear();
        return x;
    }
    if (!ctx.rng) throw std::invalid_argument("dropout: training pass requires an rng");
    const double keep = 1.0 - rate_;
    mask_.resize(x.size());
    Tensor y = x;
    for (std::size_t i = 0; i < y.size(); ++i) {
        mask_[i] = ctx.rng->uniform() < keep ? 1.0 / keep : 0.0;
        y[i] *= mask_[i];
    }
    return y;
}

Tensor Dropout::backward(const Tensor& grad_out, bool) {
    if (mask_.empty()) return grad_out;
    Tensor dx = grad_out;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= mask_[i];
    return dx;
}

Tensor Reshape::forward(const Tensor& x, const PassContext&) {
    in_shape_ = x.shape();
    Shape s{x.dim(0)};
    s.insert(s.end(), item_shape_.begin(), item_shape_.end());
    return x.reshaped(std::move(s));
}

Tensor Reshape::backward(const Tensor& grad_out, bool) { return grad_out.reshaped(in_shape_); }

// ---------------------------------------------------------------- Sequential

Sequential::Sequential(const Sequential& other) {
    for (const auto& [name, layer] : other.layers_) layers_.emplace_back(name, layer->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
    if (this != &other) {
        Sequential copy(other);
        layers_ = std::move(copy.layers_);
    }
    return *this;
}

void Sequential::add(std::string name, std::unique_ptr<Layer> layer) {
    for (Param* p : layer->params()) p->name = name + "." + p->name;
    for (Buffer* b : layer->buffers()) b->name = name + "." + b->name;
    layers_.emplace_back(std::move(name), std::move(layer));
}

Tensor Sequential::forward(const Tensor& x, const PassContext& ctx) {
    Tensor h = x;
    for (auto& [name, layer] : layers_) h = layer->forward(h, ctx);
    return h;
}

Tensor Sequential::backward(const Tensor& grad_out, bool param_grads) {
    Tensor g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->second->backward(g, param_grads);
    return g;
}

std::vector<Param*> Sequential::params() {
    std::vector<Param*> out;
    for (auto& [name, layer] : layers_) {
        for (Param* p : layer->params()) out.push_back(p);
    }
    return out;
}

std::vector<Buffer*> Sequential::buffers() {
    std::vector<Buffer*> out;
    for (auto& [name, layer] : layers_) {
        for (Buffer* b : layer->buffers()) out.push_back(b);
    }
    return out;
}

std::vector<std::string> Sequential::layer_names() const {
    std::vector<std::string> out;
    for (const auto& [name, layer] : layers_) out.push_back(name);
    return out;
}

void Sequential::zero_grad() {
    for (Param* p : params()) p->grad.fill(0.0);
}

std::size_t Sequential::parameter_count() {
    std::size_t n = 0;
    for (Param* p : params()) n += p->value.size();
    return n;
}

}  // namespace maven
