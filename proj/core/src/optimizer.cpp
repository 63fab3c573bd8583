// SPDX-License-Identifier: Apache-2.0
#include "maven/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace maven {

Adam::Adam(std::vector<Param*> params, AdamSettings settings) : params_(std::move(params)), settings_(settings) {
    for (Param* p : params_) {
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
    }
}

void Adam::step() {
    ++t_;
    const auto& s = settings_;
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Param& p = *params_[i];
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const double g = p.grad[j];
            m[j] = s.beta1 * m[j] + (1.0 - s.beta1) * g;
            v[j] = s.beta2 * v[j] + (1.0 - s.beta2) * g * g;
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            p.value[j] -= s.lr * m_hat / (std::sqrt(v_hat) + s.eps);
        }
    }
}

void Adam::zero_grad() {
    for (Param* p : params_) p->grad.fill(0.0);
}

void Adam::rebind(std::vector<Param*> params) {
    if (params.size() != params_.size()) throw std::invalid_argument("adam: rebind with a different parameter count");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->value.shape() != m_[i].shape()) throw std::invalid_argument("adam: rebind shape mismatch");
    }
    params_ = std::move(params);
}

Adam build_optimizer(std::vector<Param*> params, double lr, double beta1) {
    if (!(lr > 0.0)) throw std::invalid_argument("optimizer: learning rate must be positive");
    return Adam(std::move(params), AdamSettings{lr, beta1, 0.999, 1e-8});
}

}  // namespace maven
