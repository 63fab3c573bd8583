// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maven/random.hpp"

namespace maven {

enum class EnsembleMode { mean, random };

std::string to_string(EnsembleMode mode);
EnsembleMode ensemble_mode_from_string(const std::string& s);

struct EnsembleConfig {
    std::size_t k = 1;
    std::vector<double> weights{1.0};
    EnsembleMode mode = EnsembleMode::mean;

    static EnsembleConfig uniform(std::size_t k, EnsembleMode mode);
    void validate() const;
};

struct EnsembleFeedback {
    std::vector<double> value;           // one aggregated scalar per item
    std::optional<std::size_t> source;   // selected discriminator (zero-based) in random mode
};

/// value_i = (1/K) * sum_k w_k * outputs[k][i].
EnsembleFeedback aggregate_mean(std::span<const std::vector<double>> outputs, std::span<const double> weights);

/// Picks one discriminator uniformly and forwards its outputs unchanged.
EnsembleFeedback select_random(std::span<const std::vector<double>> outputs, Rng& rng);

/// Index draw used by select_random, exposed so training can pick before running any forward pass.
std::size_t draw_discriminator(std::size_t k, Rng& rng);

}  // namespace maven
