// SPDX-License-Identifier: Apache-2.0
#include "maven/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

namespace maven {

namespace {

constexpr double kNegativeEigenTolerance = 1e-6;

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
    const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw MetricError(std::string("fid: eigensolver did not converge on ") + what);
    Eigen::VectorXd ev = es.eigenvalues();
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev[i] < -kNegativeEigenTolerance * std::max(1.0, ev.cwiseAbs().maxCoeff())) {
            throw MetricError(std::string("fid: ") + what + " is not positive semi-definite");
        }
        ev[i] = std::sqrt(std::max(0.0, ev[i]));
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

GaussianStats compute_gaussian_stats(const Tensor& features) {
    if (features.rank() != 2) throw MetricError("gaussian stats: expected (N, d) features");
    const auto n = static_cast<Eigen::Index>(features.dim(0));
    const auto d = static_cast<Eigen::Index>(features.dim(1));
    if (n < 2) throw MetricError("gaussian stats: need at least 2 samples");
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(features.data(), n, d);
    GaussianStats s;
    s.mean = x.colwise().mean().transpose();
    const Eigen::MatrixXd centered = x.rowwise() - s.mean.transpose();
    s.covariance = (centered.transpose() * centered) / static_cast<double>(n - 1);
    return s;
}

double compute_fid(const GaussianStats& real, const GaussianStats& fake) {
    if (real.dim() != fake.dim() || real.covariance.rows() != fake.covariance.rows()) {
        throw MetricError("fid: dimension mismatch (" + std::to_string(real.dim()) + " vs " +
                          std::to_string(fake.dim()) + ")");
    }
    // Tr (S_r S_f)^{1/2} = Tr (S_r^{1/2} S_f S_r^{1/2})^{1/2}, and the inner product is symmetric.
    const Eigen::MatrixXd sr = psd_sqrt(real.covariance, "real covariance");
    const Eigen::MatrixXd inner = sr * fake.covariance * sr;
    const double tr_sqrt = psd_sqrt(inner, "covariance product").trace();
    const double mean_term = (real.mean - fake.mean).squaredNorm();
    const double fid = mean_term + real.covariance.trace() + fake.covariance.trace() - 2.0 * tr_sqrt;
    return std::max(0.0, fid);
}

MomentSummary compute_moment_summary(std::span<const double> samples) {
    const std::size_t n = samples.size();
    if (n < 4) throw MetricError("moment summary: need at least 4 samples, got " + std::to_string(n));
    double mean = 0.0;
    for (double x : samples) mean += x;
    mean /= static_cast<double>(n);
    double c2 = 0.0, c3 = 0.0, c4 = 0.0;
    for (double x : samples) {
        const double d = x - mean;
        const double d2 = d * d;
        c2 += d2;
        c3 += d2 * d;
        c4 += d2 * d2;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    const double pop_var = c2 * inv_n;
    if (!(pop_var > 0.0)) throw MetricError("moment summary: degenerate distribution (zero variance)");
    MomentSummary s;
    s.count = n;
    s.m1 = mean;
    s.m2 = c2 / static_cast<double>(n - 1);
    s.m3 = (c3 * inv_n) / std::pow(pop_var, 1.5);
    s.m4 = (c4 * inv_n) / (pop_var * pop_var) - 3.0;
    return s;
}

double compute_ddd(const MomentSummary& real, const MomentSummary& fake, const std::array<double, 4>& weights) {
    double wsum = 0.0;
    for (double w : weights) {
        if (!(w > 0.0 && w < 1.0)) throw MetricError("ddd: every weight must lie in (0, 1)");
        wsum += w;
    }
    if (std::abs(wsum - 1.0) > 1e-9) throw MetricError("ddd: weights must sum to 1");
    const auto md = real.moments();
    const auto mf = fake.moments();
    double ddd = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        const double delta = (md[i] - mf[i]) / (std::abs(md[i]) + 1.0);
        ddd += -std::log(weights[i]) * std::abs(delta);
    }
    return ddd;
}

ConfusionCounts confusion_counts(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                                 std::size_t n_classes) {
    if (predictions.size() != labels.size()) throw MetricError("confusion: predictions and labels differ in length");
    ConfusionCounts c;
    c.n_classes = n_classes;
    c.tp.assign(n_classes, 0);
    c.fp.assign(n_classes, 0);
    c.fn.assign(n_classes, 0);
    c.total = labels.size();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const std::size_t p = predictions[i], y = labels[i];
        if (p >= n_classes || y >= n_classes) {
            throw MetricError("confusion: class index out of range at item " + std::to_string(i));
        }
        if (p == y) {
            ++c.tp[y];
        } else {
            ++c.fp[p];
            ++c.fn[y];
        }
    }
    return c;
}

std::vector<double> f1_per_class(const ConfusionCounts& counts) {
    std::vector<double> f1(counts.n_classes, 0.0);
    for (std::size_t c = 0; c < counts.n_classes; ++c) {
        const double tp = static_cast<double>(counts.tp[c]);
        if (counts.tp[c] + counts.fp[c] == 0 || counts.tp[c] + counts.fn[c] == 0) continue;
        const double precision = tp / static_cast<double>(counts.tp[c] + counts.fp[c]);
        const double recall = tp / static_cast<double>(counts.tp[c] + counts.fn[c]);
        if (precision + recall == 0.0) continue;
        f1[c] = 2.0 * precision * recall / (precision + recall);
    }
    return f1;
}

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels) {
    if (predictions.size() != labels.size()) throw MetricError("accuracy: predictions and labels differ in length");
    if (labels.empty()) throw MetricError("accuracy: no items");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

// ---------------------------------------------------------------- embedders

namespace {

bool conv_friendly(const ImageShape& s) {
    auto pow2 = [](std::size_t v) { return v >= 16 && (v & (v - 1)) == 0; };
    return pow2(s.height) && pow2(s.width);
}

}  // namespace

RandomConvEmbedder::RandomConvEmbedder(const ImageShape& shape, std::uint64_t seed, std::vector<std::size_t> widths)
    : shape_(shape) {
    if (!conv_friendly(shape)) {
        passthrough_ = true;
        dim_ = shape.numel();
        return;
    }
    Rng init(seed);
    std::size_t in = shape.channels;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        const double std = std::sqrt(2.0 / static_cast<double>(16 * in));
        body_.add("conv" + std::to_string(i), std::make_unique<Conv2d>(in, widths[i], ConvGeometry{}, init, std));
        body_.add("act" + std::to_string(i), std::make_unique<LeakyRelu>(0.2));
        in = widths[i];
    }
    dim_ = in;
}

Tensor RandomConvEmbedder::embed(const Tensor& images) {
    require_shape(images, shape_.batch(images.dim(0)), "embedder input");
    const std::size_t n = images.dim(0);
    if (passthrough_) return images.reshaped({n, dim_});
    const Tensor maps = body_.forward(images, PassContext::inference());
    const std::size_t spatial = maps.dim(1) * maps.dim(2);
    Tensor out(Shape{n, dim_});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < spatial; ++p) {
            for (std::size_t c = 0; c < dim_; ++c) out.at(i, c) += maps[(i * spatial + p) * dim_ + c];
        }
        for (std::size_t c = 0; c < dim_; ++c) out.at(i, c) /= static_cast<double>(spatial);
    }
    return out;
}

Tensor FunctionEmbedder::embed(const Tensor& images) {
    Tensor f = fn_(images);
    if (f.rank() != 2 || f.dim(0) != images.dim(0) || f.dim(1) != dim_) {
        throw MetricError("external embedding returned " + shape_to_string(f.shape()) + ", expected (N, " +
                          std::to_string(dim_) + ")");
    }
    return f;
}

Tensor embed_all(FeatureEmbedder& embedder, const Tensor& images, std::size_t chunk) {
    std::vector<Tensor> parts;
    for (std::size_t b = 0; b < images.rows(); b += chunk) {
        parts.push_back(embedder.embed(images.slice_rows(b, std::min(images.rows(), b + chunk))));
    }
    if (parts.empty()) return Tensor(Shape{0, embedder.dim()});
    return concat_rows(parts);
}

}  // namespace maven
