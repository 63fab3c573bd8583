// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "maven/layers.hpp"

namespace maven {

struct AdamSettings {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Moments are held per parameter, in the order the
/// parameter list was given at construction.
class Adam {
public:
    Adam(std::vector<Param*> params, AdamSettings settings);

    void step();
    void zero_grad();

    const AdamSettings& settings() const noexcept { return settings_; }
    std::uint64_t steps_taken() const noexcept { return t_; }
    void set_steps_taken(std::uint64_t t) noexcept { t_ = t; }
    std::vector<Tensor>& first_moments() noexcept { return m_; }
    std::vector<Tensor>& second_moments() noexcept { return v_; }

    /// Rebinds to a parameter list with identical shapes (used after copying a model).
    void rebind(std::vector<Param*> params);

private:
    std::vector<Param*> params_;
    AdamSettings settings_;
    std::vector<Tensor> m_, v_;
    std::uint64_t t_ = 0;
};

/// Throws std::invalid_argument when lr <= 0.
Adam build_optimizer(std::vector<Param*> params, double lr, double beta1);

}  // namespace maven
