// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "splatir/rng.hpp"
#include "splatir/scene.hpp"

namespace splatir {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-15;
};

/// First/second-moment storage for one flat parameter vector.
class AdamState {
  public:
    AdamState() = default;
    explicit AdamState(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}

    std::size_t size() const { return m_.size(); }
    std::int64_t steps() const { return t_; }
    void set_steps(std::int64_t t) { t_ = t; }
    std::vector<double>& m() { return m_; }
    std::vector<double>& v() { return v_; }

    /// One bias-corrected Adam update in place. `lr_cycle` supplies the
    /// learning rate for index i as lr_cycle[i % lr_cycle.size()], which maps
    /// a per-attribute rate table onto the per-splat parameter rows (use a
    /// single-entry cycle for uniform rates). Throws ContractError when the
    /// moment shapes do not match `n`.
    void step(double* params, const double* grads, std::size_t n,
              const std::vector<double>& lr_cycle, const AdamConfig& config = {});

  private:
    std::vector<double> m_, v_;
    std::int64_t t_ = 0;
};

/// Densification / pruning control. Thresholds operate on the mean absolute
/// positional gradient accumulated since the last event.
struct DensifyConfig {
    double grad_threshold = 5e-5;   // mean |dL/dposition| that triggers growth
    double clone_scale = 0.02;      // world scale below which splats clone
    double split_shrink = 1.6;      // scale divisor for split children
    double prune_opacity = 0.005;
    double prune_scale = 1e9;       // world-scale cap (set from the scene extent)
};

/// Positional-gradient statistics plus the Adam moments, kept aligned with
/// the splat parameter block across every topology change.
struct SplatOptimizerState {
    AdamState adam;
    std::vector<double> grad_accum;  // per splat, summed |dL/dposition|
    std::vector<int> grad_count;

    void reset(std::size_t splat_count);
    void accumulate(const std::vector<double>& grad_raw);
    /// Consistency check; throws ContractError on any shape drift.
    void check_shapes(const SplatScene& scene) const;
};

struct DensifyStats {
    int cloned = 0, split = 0, pruned = 0;
};

/// Grows over-stressed splats (clone when small, split when large) and drops
/// transparent or oversized ones. Adam moments move with their splats; new
/// splats start with zero moments. Gradient statistics reset afterwards.
DensifyStats densify_and_prune(SplatScene& scene, SplatOptimizerState& state,
                               const DensifyConfig& config, Rng& rng);

}  // namespace splatir
