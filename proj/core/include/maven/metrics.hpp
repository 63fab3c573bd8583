// SPDX-License-Identifier: Apache-2.0
//
// Evaluation: Frechet distance between Gaussian fits of embedded samples, the
// descriptive distribution distance over four moments, accuracy and per-class F1.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "maven/layers.hpp"
#include "maven/networks.hpp"
#include "maven/tensor.hpp"

namespace maven {

class MetricError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct GaussianStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;

    std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

/// Sample mean and unbiased covariance of the rows of `features` (N, d). Needs N >= 2.
GaussianStats compute_gaussian_stats(const Tensor& features);

/// ||mu_r - mu_f||^2 + Tr(S_r + S_f - 2 (S_r S_f)^{1/2}), clamped at 0.
double compute_fid(const GaussianStats& real, const GaussianStats& fake);

struct MomentSummary {
    double m1 = 0.0;  // mean
    double m2 = 0.0;  // unbiased variance
    double m3 = 0.0;  // skewness
    double m4 = 0.0;  // excess kurtosis
    std::size_t count = 0;

    std::array<double, 4> moments() const { return {m1, m2, m3, m4}; }
};

/// Throws MetricError("degenerate distribution") when the variance is zero.
MomentSummary compute_moment_summary(std::span<const double> samples);

inline constexpr std::array<double, 4> kDefaultDddWeights{0.4, 0.3, 0.2, 0.1};

/// sum_i -ln(w_i) |m_i^data - m_i^fake| / (|m_i^data| + 1)
double compute_ddd(const MomentSummary& real, const MomentSummary& fake,
                   const std::array<double, 4>& weights = kDefaultDddWeights);

struct ConfusionCounts {
    std::size_t n_classes = 0;
    std::vector<std::size_t> tp, fp, fn;
    std::size_t total = 0;

    std::size_t tn(std::size_t c) const { return total - tp[c] - fp[c] - fn[c]; }
};

/// One-vs-rest counts; classes are 0..n_classes-1.
ConfusionCounts confusion_counts(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                                 std::size_t n_classes);

/// F1 per class, 0 whenever precision or recall is undefined or both are zero.
std::vector<double> f1_per_class(const ConfusionCounts& counts);

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels);

// ---------------------------------------------------------------- embeddings

class FeatureEmbedder {
public:
    virtual ~FeatureEmbedder() = default;
    virtual std::size_t dim() const = 0;
    /// (N, H, W, C) images -> (N, dim) features.
    virtual Tensor embed(const Tensor& images) = 0;
};

/// Fixed-seed randomly initialized conv stack with global average pooling. Deterministic,
/// cheap, and not comparable to Inception-based scores. Inputs smaller than 16x16 (or not
/// powers of two) are passed through flattened.
class RandomConvEmbedder final : public FeatureEmbedder {
public:
    RandomConvEmbedder(const ImageShape& shape, std::uint64_t seed = 2024, std::vector<std::size_t> widths = {16, 32, 64});
    std::size_t dim() const override { return dim_; }
    Tensor embed(const Tensor& images) override;

private:
    ImageShape shape_;
    Sequential body_;
    std::size_t dim_ = 0;
    bool passthrough_ = false;
};

/// Adapter for an external embedding (e.g. activations exported from another framework).
class FunctionEmbedder final : public FeatureEmbedder {
public:
    using Fn = std::function<Tensor(const Tensor&)>;
    FunctionEmbedder(std::size_t dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {}
    std::size_t dim() const override { return dim_; }
    Tensor embed(const Tensor& images) override;

private:
    std::size_t dim_;
    Fn fn_;
};

/// Embeds in chunks to bound memory.
Tensor embed_all(FeatureEmbedder& embedder, const Tensor& images, std::size_t chunk = 256);

}  // namespace maven
