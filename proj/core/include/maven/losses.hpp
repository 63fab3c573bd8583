// SPDX-License-Identifier: Apache-2.0
//
// Training objectives. Every term is a batch mean. Probability-domain terms clamp the
// probability inside the logarithm at kProbabilityFloor, so each term is finite and
// bounded by -ln(kProbabilityFloor).
//
// The *_grad variants take logits (or encoder outputs / features) and return the loss
// value together with its gradient with respect to that input.
#pragma once

#include <span>
#include <string>
#include <vector>

#include "maven/networks.hpp"
#include "maven/tensor.hpp"

namespace maven {

inline constexpr double kProbabilityFloor = 1e-12;

struct LossGrad {
    double value = 0.0;
    Tensor grad;
};

/// Mean of -log p(y = label | x). Labels are zero-based real classes; the fake index is rejected.
double d_supervised_loss(const Tensor& probs, std::span<const std::size_t> labels);
LossGrad d_supervised_loss_grad(const Tensor& logits, std::span<const std::size_t> labels);

/// Mean of -log(1 - p(fake | x)). Also the generator's adversarial term.
double d_real_loss(const Tensor& probs);
LossGrad d_real_loss_grad(const Tensor& logits);

/// Mean of -log p(fake | x); used for both fake1 (G(z)) and fake2 (G(E(x))) batches.
double d_fake_loss(const Tensor& probs);
LossGrad d_fake_loss_grad(const Tensor& logits);

inline double d_unsupervised_loss(double real, double fake1, double fake2) { return real + fake1 + fake2; }

/// Generator form -log(1 - p(fake)); same functional form as d_real_loss.
inline double g_adversarial_loss(const Tensor& probs) { return d_real_loss(probs); }
inline LossGrad g_adversarial_loss_grad(const Tensor& logits) { return d_real_loss_grad(logits); }

/// -mean log(1 - D_mu) with D_mu = (1/K) sum_k w_k p_k(fake). Returns the value and
/// dL/dlogits for each discriminator.
struct EnsembleLossGrad {
    double value = 0.0;
    std::vector<Tensor> grads;
};
EnsembleLossGrad ensemble_adversarial_loss_grad(std::span<const Tensor> logits, std::span<const double> weights);

/// ||mean(f_real) - mean(f_fake)||^2.
double feature_matching_loss(const Tensor& f_real, const Tensor& f_fake);
struct FeatureLossGrad {
    double value = 0.0;
    Tensor grad_real;
    Tensor grad_fake;
};
FeatureLossGrad feature_matching_loss_grad(const Tensor& f_real, const Tensor& f_fake);

/// Mean over items of KL[N(mu, sigma^2) || N(0, I)] = 0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2).
double kl_loss(const EncoderOutput& enc);
struct KlGrad {
    double value = 0.0;
    EncoderOutput grad;
};
KlGrad kl_loss_grad(const EncoderOutput& enc);

inline double e_total_loss(double kl, double e_feature) { return kl + e_feature; }

struct LossBreakdown {
    double d_supervised = 0.0;
    double d_real = 0.0;
    double d_fake1 = 0.0;
    double d_fake2 = 0.0;
    double g_feature = 0.0;
    double g_fake1 = 0.0;
    double g_fake2 = 0.0;
    double e_kl = 0.0;
    double e_feature = 0.0;

    double d_total() const { return d_supervised + d_unsupervised_loss(d_real, d_fake1, d_fake2); }
    double g_total() const { return g_feature + g_fake1 + g_fake2; }
    double e_total() const { return e_total_loss(e_kl, e_feature); }

    /// Component names in CSV order, followed by the three totals.
    static const std::vector<std::string>& column_names();
    std::vector<double> column_values() const;
    /// First component (by name) that is not finite, or empty.
    std::string first_non_finite() const;
};

}  // namespace maven
