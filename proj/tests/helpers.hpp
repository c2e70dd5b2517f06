// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "camo/tensor.hpp"

namespace camo::testing {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
};

inline double rel_err(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / denom;
}

/// Central finite-difference check of d(loss)/d(leaf) for every listed leaf.
/// loss_fn must rebuild the graph from the leaves' current values on each
/// call. When max_coords_per_leaf > 0, a deterministic stride subsample of
/// coordinates is checked instead of all of them.
inline GradCheckResult gradcheck(const std::function<Tensor()>& loss_fn,
                                 std::vector<Tensor> leaves, double eps = 1e-5,
                                 std::size_t max_coords_per_leaf = 0) {
    for (auto& leaf : leaves) leaf.zero_grad();
    Tensor loss = loss_fn();
    backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (const auto& leaf : leaves) analytic.push_back(leaf.grad());

    GradCheckResult result;
    NoGradGuard guard;
    for (std::size_t l = 0; l < leaves.size(); ++l) {
        auto& buf = leaves[l].value_buffer();
        std::size_t stride = 1;
        if (max_coords_per_leaf > 0 && buf.size() > max_coords_per_leaf) {
            stride = (buf.size() + max_coords_per_leaf - 1) / max_coords_per_leaf;
        }
        for (std::size_t i = 0; i < buf.size(); i += stride) {
            const double saved = buf[i];
            buf[i] = saved + eps;
            const double up = loss_fn().item();
            buf[i] = saved - eps;
            const double down = loss_fn().item();
            buf[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            result.max_rel_err = std::max(result.max_rel_err, rel_err(analytic[l][i], numeric));
            ++result.checked;
        }
    }
    return result;
}

inline Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true, double lo = -2.0,
                            double hi = 2.0) {
    std::vector<double> data(detail::shape_numel(shape));
    for (double& v : data) v = rng.uniform(lo, hi);
    return Tensor(std::move(shape), std::move(data), requires_grad);
}

}  // namespace camo::testing
