// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#include "splatir/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace splatir {

void AdamState::step(double* params, const double* grads, std::size_t n,
                     const std::vector<double>& lr_cycle, const AdamConfig& config) {
    if (m_.size() != n || v_.size() != n)
        throw ContractError("AdamState: moment shape " + std::to_string(m_.size()) +
                            " does not match parameter count " + std::to_string(n));
    if (lr_cycle.empty()) throw ContractError("AdamState: empty learning-rate cycle");
    ++t_;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t_));
    const std::size_t cycle = lr_cycle.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grads[i];
        m_[i] = config.beta1 * m_[i] + (1.0 - config.beta1) * g;
        v_[i] = config.beta2 * v_[i] + (1.0 - config.beta2) * g * g;
        const double m_hat = m_[i] / bc1;
        const double v_hat = v_[i] / bc2;
        params[i] -= lr_cycle[i % cycle] * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
}

void SplatOptimizerState::reset(std::size_t splat_count) {
    adam = AdamState(splat_count * kParamsPerGaussian);
    grad_accum.assign(splat_count, 0.0);
    grad_count.assign(splat_count, 0);
}

void SplatOptimizerState::accumulate(const std::vector<double>& grad_raw) {
    const std::size_t count = grad_raw.size() / kParamsPerGaussian;
    if (count != grad_accum.size())
        throw ContractError("SplatOptimizerState: gradient block does not match statistics");
    for (std::size_t i = 0; i < count; ++i) {
        const double* g = grad_raw.data() + i * kParamsPerGaussian + param::kPosition;
        grad_accum[i] += std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
        ++grad_count[i];
    }
}

void SplatOptimizerState::check_shapes(const SplatScene& scene) const {
    if (adam.size() != scene.raw_block().size() || grad_accum.size() != scene.size() ||
        grad_count.size() != scene.size())
        throw ContractError("SplatOptimizerState: shapes drifted from the scene block");
}

DensifyStats densify_and_prune(SplatScene& scene, SplatOptimizerState& state,
                               const DensifyConfig& config, Rng& rng) {
    state.check_shapes(scene);
    const std::size_t count = scene.size();
    DensifyStats stats;

    std::vector<double> new_raw;
    std::vector<double> new_m, new_v;
    new_raw.reserve(scene.raw_block().size());
    auto keep_row = [&](std::size_t i) {
        const double* row = scene.raw(i);
        new_raw.insert(new_raw.end(), row, row + kParamsPerGaussian);
        const double* m = state.adam.m().data() + i * kParamsPerGaussian;
        const double* v = state.adam.v().data() + i * kParamsPerGaussian;
        new_m.insert(new_m.end(), m, m + kParamsPerGaussian);
        new_v.insert(new_v.end(), v, v + kParamsPerGaussian);
    };
    auto fresh_row = [&](const double* row) {
        new_raw.insert(new_raw.end(), row, row + kParamsPerGaussian);
        new_m.insert(new_m.end(), kParamsPerGaussian, 0.0);
        new_v.insert(new_v.end(), kParamsPerGaussian, 0.0);
    };

    for (std::size_t i = 0; i < count; ++i) {
        const Gaussian2D g = activate_parameters(scene.raw(i));
        if (g.opacity < config.prune_opacity ||
            std::max(g.s_u, g.s_v) > config.prune_scale) {
            ++stats.pruned;
            continue;
        }
        const double mean_grad =
            state.grad_count[i] > 0 ? state.grad_accum[i] / state.grad_count[i] : 0.0;
        if (mean_grad <= config.grad_threshold) {
            keep_row(i);
            continue;
        }
        if (std::max(g.s_u, g.s_v) < config.clone_scale) {
            // Clone: duplicate in place; the pair then drifts apart under its
            // own gradients.
            keep_row(i);
            fresh_row(scene.raw(i));
            ++stats.cloned;
        } else {
            // Split: two children along the dominant tangent axis, shrunk.
            Gaussian2D child = g;
            child.s_u = g.s_u / config.split_shrink;
            child.s_v = g.s_v / config.split_shrink;
            const Vec3 axis = (g.s_u >= g.s_v ? g.t_u : g.t_v);
            const double spread = 0.5 * std::max(g.s_u, g.s_v);
            double row[kParamsPerGaussian];
            for (int c = 0; c < 2; ++c) {
                const double offset = (c == 0 ? -1.0 : 1.0) * spread * (0.5 + 0.5 * rng.uniform());
                child.position = g.position + offset * axis;
                deactivate_parameters(child, row);
                // Children keep the parent's SH tail verbatim.
                std::copy(scene.raw(i) + param::kSh, scene.raw(i) + param::kSh + kShCoeffs,
                          row + param::kSh);
                fresh_row(row);
            }
            ++stats.split;
        }
    }

    scene.raw_block() = std::move(new_raw);
    const std::size_t new_count = scene.size();
    AdamState next(new_count * kParamsPerGaussian);
    next.m() = std::move(new_m);
    next.v() = std::move(new_v);
    next.set_steps(state.adam.steps());  // bias correction stays warm
    state.adam = std::move(next);
    state.grad_accum.assign(new_count, 0.0);
    state.grad_count.assign(new_count, 0);
    state.check_shapes(scene);
    return stats;
}

}  // namespace splatir
