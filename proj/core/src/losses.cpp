// SPDX-License-Identifier: Apache-2.0
#include "maven/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace maven {

namespace {

const double kMaxTerm = -std::log(kProbabilityFloor);

void require_finite(const Tensor& t, const char* who) {
    if (!t.all_finite()) throw std::domain_error(std::string(who) + ": non-finite input");
}

void require_probs(const Tensor& probs, const char* who) {
    if (probs.rank() != 2 || probs.dim(1) < 2) throw ShapeError(std::string(who) + ": expected (batch, n+1) probabilities");
    require_finite(probs, who);
}

double batch_scale(std::size_t n) { return n == 0 ? 0.0 : 1.0 / static_cast<double>(n); }

double neg_log_clamped(double p) { return p < kProbabilityFloor ? kMaxTerm : -std::log(p); }

std::size_t fake_index(const Tensor& t) { return t.dim(1) - 1; }

}  // namespace

// ---------------------------------------------------------------- supervised

double d_supervised_loss(const Tensor& probs, std::span<const std::size_t> labels) {
    require_probs(probs, "d_supervised_loss");
    if (labels.size() != probs.rows()) throw std::invalid_argument("d_supervised_loss: label count mismatch");
    double sum = 0.0;
    for (std::size_t r = 0; r < labels.size(); ++r) {
        if (labels[r] >= fake_index(probs)) {
            throw std::invalid_argument("d_supervised_loss: label " + std::to_string(labels[r]) +
                                        " is the fake class or out of range");
        }
        sum += neg_log_clamped(probs.at(r, labels[r]));
    }
    return sum * batch_scale(labels.size());
}

LossGrad d_supervised_loss_grad(const Tensor& logits, std::span<const std::size_t> labels) {
    const Tensor p = class_probabilities(logits);
    LossGrad out{d_supervised_loss(p, labels), Tensor(logits.shape())};
    const double s = batch_scale(labels.size());
    for (std::size_t r = 0; r < labels.size(); ++r) {
        if (p.at(r, labels[r]) < kProbabilityFloor) continue;
        for (std::size_t j = 0; j < p.dim(1); ++j) {
            out.grad.at(r, j) = s * (p.at(r, j) - (j == labels[r] ? 1.0 : 0.0));
        }
    }
    return out;
}

// ---------------------------------------------------------------- unsupervised

double d_real_loss(const Tensor& probs) {
    require_probs(probs, "d_real_loss");
    double sum = 0.0;
    for (std::size_t r = 0; r < probs.rows(); ++r) sum += neg_log_clamped(1.0 - probs.at(r, fake_index(probs)));
    return sum * batch_scale(probs.rows());
}

LossGrad d_real_loss_grad(const Tensor& logits) {
    const Tensor p = class_probabilities(logits);
    LossGrad out{d_real_loss(p), Tensor(logits.shape())};
    const double s = batch_scale(p.rows());
    const std::size_t f = fake_index(p);
    for (std::size_t r = 0; r < p.rows(); ++r) {
        const double pf = p.at(r, f);
        const double real_mass = 1.0 - pf;
        if (real_mass < kProbabilityFloor) continue;
        for (std::size_t j = 0; j < f; ++j) out.grad.at(r, j) = -s * pf * p.at(r, j) / real_mass;
        out.grad.at(r, f) = s * pf;
    }
    return out;
}

double d_fake_loss(const Tensor& probs) {
    require_probs(probs, "d_fake_loss");
    double sum = 0.0;
    for (std::size_t r = 0; r < probs.rows(); ++r) sum += neg_log_clamped(probs.at(r, fake_index(probs)));
    return sum * batch_scale(probs.rows());
}

LossGrad d_fake_loss_grad(const Tensor& logits) {
    const Tensor p = class_probabilities(logits);
    LossGrad out{d_fake_loss(p), Tensor(logits.shape())};
    const double s = batch_scale(p.rows());
    const std::size_t f = fake_index(p);
    for (std::size_t r = 0; r < p.rows(); ++r) {
        if (p.at(r, f) < kProbabilityFloor) continue;
        for (std::size_t j = 0; j < p.dim(1); ++j) out.grad.at(r, j) = s * (p.at(r, j) - (j == f ? 1.0 : 0.0));
    }
    return out;
}

EnsembleLossGrad ensemble_adversarial_loss_grad(std::span<const Tensor> logits, std::span<const double> weights) {
    if (logits.empty() || logits.size() != weights.size()) {
        throw std::invalid_argument("ensemble_adversarial_loss: need one weight per discriminator");
    }
    std::vector<Tensor> probs;
    for (const auto& l : logits) probs.push_back(class_probabilities(l));
    const std::size_t n = probs.front().rows();
    const std::size_t f = fake_index(probs.front());
    const double inv_k = 1.0 / static_cast<double>(logits.size());
    const double s = batch_scale(n);

    EnsembleLossGrad out;
    for (const auto& l : logits) out.grads.emplace_back(l.shape());
    double sum = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        double d_mu = 0.0;
        for (std::size_t k = 0; k < probs.size(); ++k) d_mu += weights[k] * probs[k].at(r, f);
        d_mu *= inv_k;
        const double real_mass = 1.0 - d_mu;
        sum += neg_log_clamped(real_mass);
        if (real_mass < kProbabilityFloor) continue;
        for (std::size_t k = 0; k < probs.size(); ++k) {
            // dL/dp_k(fake) followed by the softmax Jacobian column of the fake entry.
            const double g = s * inv_k * weights[k] / real_mass;
            const double pf = probs[k].at(r, f);
            for (std::size_t j = 0; j < probs[k].dim(1); ++j) {
                out.grads[k].at(r, j) = g * pf * ((j == f ? 1.0 : 0.0) - probs[k].at(r, j));
            }
        }
    }
    out.value = sum * s;
    return out;
}

// ---------------------------------------------------------------- feature matching

namespace {

std::vector<double> column_mean(const Tensor& f) {
    std::vector<double> m(f.dim(1), 0.0);
    for (std::size_t r = 0; r < f.rows(); ++r) {
        for (std::size_t j = 0; j < m.size(); ++j) m[j] += f.at(r, j);
    }
    for (auto& v : m) v *= batch_scale(f.rows());
    return m;
}

void check_features(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
        throw ShapeError("feature_matching_loss: feature dimensions differ: " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
    }
    if (a.rows() == 0 || b.rows() == 0) throw std::invalid_argument("feature_matching_loss: empty batch");
    require_finite(a, "feature_matching_loss");
    require_finite(b, "feature_matching_loss");
}

}  // namespace

double feature_matching_loss(const Tensor& f_real, const Tensor& f_fake) {
    check_features(f_real, f_fake);
    const auto mr = column_mean(f_real), mf = column_mean(f_fake);
    double sum = 0.0;
    for (std::size_t j = 0; j < mr.size(); ++j) sum += (mr[j] - mf[j]) * (mr[j] - mf[j]);
    return sum;
}

FeatureLossGrad feature_matching_loss_grad(const Tensor& f_real, const Tensor& f_fake) {
    check_features(f_real, f_fake);
    const auto mr = column_mean(f_real), mf = column_mean(f_fake);
    FeatureLossGrad out{0.0, Tensor(f_real.shape()), Tensor(f_fake.shape())};
    for (std::size_t j = 0; j < mr.size(); ++j) out.value += (mr[j] - mf[j]) * (mr[j] - mf[j]);
    const double sr = 2.0 * batch_scale(f_real.rows()), sf = 2.0 * batch_scale(f_fake.rows());
    for (std::size_t r = 0; r < f_real.rows(); ++r) {
        for (std::size_t j = 0; j < mr.size(); ++j) out.grad_real.at(r, j) = sr * (mr[j] - mf[j]);
    }
    for (std::size_t r = 0; r < f_fake.rows(); ++r) {
        for (std::size_t j = 0; j < mr.size(); ++j) out.grad_fake.at(r, j) = sf * (mf[j] - mr[j]);
    }
    return out;
}

// ---------------------------------------------------------------- KL

double kl_loss(const EncoderOutput& enc) {
    if (!enc.mu.same_shape(enc.log_sigma_sq) || enc.mu.rank() != 2) throw ShapeError("kl_loss: mismatched encoder outputs");
    require_finite(enc.mu, "kl_loss");
    require_finite(enc.log_sigma_sq, "kl_loss");
    double sum = 0.0;
    for (std::size_t i = 0; i < enc.mu.size(); ++i) {
        const double lv = enc.log_sigma_sq[i];
        sum += 0.5 * (enc.mu[i] * enc.mu[i] + std::exp(lv) - 1.0 - lv);
    }
    return std::max(0.0, sum * batch_scale(enc.mu.rows()));
}

KlGrad kl_loss_grad(const EncoderOutput& enc) {
    KlGrad out{kl_loss(enc), {Tensor(enc.mu.shape()), Tensor(enc.mu.shape())}};
    const double s = batch_scale(enc.mu.rows());
    for (std::size_t i = 0; i < enc.mu.size(); ++i) {
        out.grad.mu[i] = s * enc.mu[i];
        out.grad.log_sigma_sq[i] = s * 0.5 * (std::exp(enc.log_sigma_sq[i]) - 1.0);
    }
    return out;
}

// ---------------------------------------------------------------- breakdown

const std::vector<std::string>& LossBreakdown::column_names() {
    static const std::vector<std::string> names{"d_supervised", "d_real", "d_fake1", "d_fake2", "g_feature",
                                                "g_fake1",      "g_fake2", "e_kl",   "e_feature", "L_D",
                                                "L_G",          "L_E"};
    return names;
}

std::vector<double> LossBreakdown::column_values() const {
    return {d_supervised, d_real, d_fake1, d_fake2, g_feature, g_fake1, g_fake2,
            e_kl,         e_feature, d_total(), g_total(), e_total()};
}

std::string LossBreakdown::first_non_finite() const {
    const auto values = column_values();
    const auto& names = column_names();
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) return names[i];
    }
    return {};
}

}  // namespace maven
