// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "maven/tensor.hpp"

namespace maven {

/// Explicitly passed random stream. All stochastic operations (noise, dropout masks,
/// shuffles, ensemble selection) take one of these; nothing draws from global state.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
    std::uint64_t next_seed() { return engine_(); }

    Tensor normal_tensor(Shape shape);

    std::mt19937_64& engine() noexcept { return engine_; }

    std::string serialize() const;
    void deserialize(const std::string& state);

    bool operator==(const Rng& other) const { return engine_ == other.engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace maven
