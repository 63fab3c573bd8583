// SPDX-License-Identifier: Apache-2.0
// Shared helpers for unit and acceptance tests: finite differences and toy-ring mode counting.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "maven/data.hpp"
#include "maven/layers.hpp"
#include "maven/training.hpp"

namespace maven::testing {

/// |a - n| / max(|a|, |n|, floor). The floor keeps near-zero gradients from dominating.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

/// Compares the accumulated .grad of every parameter with central differences of `loss`,
/// which must recompute the forward pass from the current parameter values.
inline GradCheck check_param_gradients(const std::vector<Param*>& params, const std::function<double()>& loss,
                                       double step) {
    GradCheck out;
    for (Param* p : params) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double saved = p->value[i];
            p->value[i] = saved + step;
            const double up = loss();
            p->value[i] = saved - step;
            const double down = loss();
            p->value[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            out.max_rel_error = std::max(out.max_rel_error, relative_error(p->grad[i], numeric));
            ++out.checked;
        }
    }
    return out;
}

/// Same, for the entries of a plain tensor.
inline GradCheck check_tensor_gradient(Tensor& x, const Tensor& analytic, const std::function<double()>& loss,
                                       double step) {
    GradCheck out;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + step;
        const double up = loss();
        x[i] = saved - step;
        const double down = loss();
        x[i] = saved;
        out.max_rel_error = std::max(out.max_rel_error, relative_error(analytic[i], (up - down) / (2.0 * step)));
        ++out.checked;
    }
    return out;
}

inline void zero_grads(const std::vector<Param*>& params) {
    for (Param* p : params) p->grad.fill(0.0);
}

/// Counts ring modes that hold at least `min_mass` of the points within `radius / 4` of their
/// center. Points are raw ring coordinates (N, 1, 1, 2).
inline std::size_t count_modes(const Tensor& points, std::size_t modes, double radius, double min_mass = 0.02) {
    const auto centers = ring_centers(modes, radius);
    std::vector<std::size_t> hits(modes, 0);
    const std::size_t n = points.dim(0);
    const double r2 = (radius / 4.0) * (radius / 4.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = points[2 * i], y = points[2 * i + 1];
        for (std::size_t k = 0; k < modes; ++k) {
            const double dx = x - centers[k][0], dy = y - centers[k][1];
            if (dx * dx + dy * dy <= r2) ++hits[k];
        }
    }
    std::size_t covered = 0;
    for (std::size_t h : hits) covered += static_cast<double>(h) >= min_mass * static_cast<double>(n) ? 1 : 0;
    return covered;
}

}  // namespace maven::testing
