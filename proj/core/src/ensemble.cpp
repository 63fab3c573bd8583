// SPDX-License-Identifier: Apache-2.0
#include "maven/ensemble.hpp"

#include <algorithm>
#include <stdexcept>

namespace maven {

std::string to_string(EnsembleMode mode) { return mode == EnsembleMode::mean ? "mean" : "random"; }

EnsembleMode ensemble_mode_from_string(const std::string& s) {
    if (s == "mean") return EnsembleMode::mean;
    if (s == "random" || s == "rand") return EnsembleMode::random;
    throw std::invalid_argument("ensemble mode must be 'mean' or 'random', got '" + s + "'");
}

EnsembleConfig EnsembleConfig::uniform(std::size_t k, EnsembleMode mode) {
    return EnsembleConfig{k, std::vector<double>(k, 1.0), mode};
}

void EnsembleConfig::validate() const {
    if (k < 1) throw std::invalid_argument("ensemble: k must be >= 1");
    if (weights.size() != k) {
        throw std::invalid_argument("ensemble: " + std::to_string(weights.size()) + " weights for k = " + std::to_string(k));
    }
    if (std::any_of(weights.begin(), weights.end(), [](double w) { return !(w >= 0.0); })) {
        throw std::invalid_argument("ensemble: weights must be non-negative");
    }
    if (std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; })) {
        throw std::invalid_argument("ensemble: at least one weight must be positive");
    }
}

EnsembleFeedback aggregate_mean(std::span<const std::vector<double>> outputs, std::span<const double> weights) {
    if (outputs.empty()) throw std::invalid_argument("aggregate_mean: no discriminator outputs");
    if (weights.size() != outputs.size()) {
        throw std::invalid_argument("aggregate_mean: " + std::to_string(weights.size()) + " weights for " +
                                    std::to_string(outputs.size()) + " outputs");
    }
    if (std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; })) {
        throw std::invalid_argument("aggregate_mean: all weights are zero");
    }
    const std::size_t n = outputs.front().size();
    for (const auto& o : outputs) {
        if (o.size() != n) throw std::invalid_argument("aggregate_mean: outputs differ in length");
    }
    const double inv_k = 1.0 / static_cast<double>(outputs.size());
    EnsembleFeedback fb{std::vector<double>(n, 0.0), std::nullopt};
    for (std::size_t k = 0; k < outputs.size(); ++k) {
        for (std::size_t i = 0; i < n; ++i) fb.value[i] += weights[k] * outputs[k][i];
    }
    for (auto& v : fb.value) v *= inv_k;
    return fb;
}

std::size_t draw_discriminator(std::size_t k, Rng& rng) {
    if (k == 0) throw std::invalid_argument("select_random: no discriminators");
    return rng.index(k);
}

EnsembleFeedback select_random(std::span<const std::vector<double>> outputs, Rng& rng) {
    const std::size_t k = draw_discriminator(outputs.size(), rng);
    return {outputs[k], k};
}

}  // namespace maven
