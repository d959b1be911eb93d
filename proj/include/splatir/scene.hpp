// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "splatir/common.hpp"

namespace splatir {

// Raw (unconstrained) per-splat parameter block layout. One splat is kParamsPerGaussian
// doubles in this order; the checkpoint file stores exactly these rows.
inline constexpr int kShBasis = 16;  // degree-3 spherical harmonics
inline constexpr int kShCoeffs = kShBasis * 3;

namespace param {
inline constexpr int kPosition = 0;      // 3: world position
inline constexpr int kTangentU = 3;      // 3: raw t_u (orthonormalized on activation)
inline constexpr int kTangentV = 6;      // 3: raw t_v
inline constexpr int kLogScale = 9;      // 2: log s_u, log s_v
inline constexpr int kOpacity = 11;      // 1: opacity logit
inline constexpr int kSh = 12;           // 48: SH coefficients, basis-major (k*3 + channel)
inline constexpr int kAlbedo = 60;       // 3: albedo logits
inline constexpr int kMetallic = 63;     // 1: metallic logit
inline constexpr int kRoughness = 64;    // 1: roughness logit
}  // namespace param
inline constexpr int kParamsPerGaussian = 65;

/// One oriented surfel with activated (constrained) attributes.
struct Gaussian2D {
    Vec3 position = Vec3::Zero();
    Vec3 t_u = Vec3::UnitX();
    Vec3 t_v = Vec3::UnitY();
    double s_u = 1.0, s_v = 1.0;
    double opacity = 1.0;
    std::array<double, kShCoeffs> sh{};  // Stage I view-dependent color
    Vec3 albedo = Vec3::Constant(0.5);
    double metallic = 0.0;
    double roughness = 0.5;
};

struct DirectionalLight {
    Vec3 direction = Vec3::UnitZ();  // world frame, surface toward light, unit
    Vec3 intensity = Vec3::Ones();

    void validate() const {
        if (std::abs(direction.norm() - 1.0) > 1e-3)
            throw InputError("DirectionalLight: direction must be unit length");
        if ((intensity.array() < 0).any())
            throw InputError("DirectionalLight: intensity must be nonnegative");
    }
};

struct SplatNormalResult {
    Vec3 normal;           // unit, oriented toward the querying camera
    bool flipped = false;  // true when the raw cross product pointed away
};

/// Normal of the surfel disk, sign-flipped so it faces the camera at cam_position.
SplatNormalResult splat_normal(const Gaussian2D& g, const Vec3& cam_position);

/// Flat raw parameter storage for a whole scene, kParamsPerGaussian doubles per splat.
class SplatScene {
  public:
    SplatScene() = default;
    explicit SplatScene(std::size_t count) : raw_(count * kParamsPerGaussian, 0.0) {}

    std::size_t size() const { return raw_.size() / kParamsPerGaussian; }
    bool empty() const { return raw_.empty(); }

    double* raw(std::size_t i) { return raw_.data() + i * kParamsPerGaussian; }
    const double* raw(std::size_t i) const { return raw_.data() + i * kParamsPerGaussian; }
    std::vector<double>& raw_block() { return raw_; }
    const std::vector<double>& raw_block() const { return raw_; }

    void push_back(const double* row) { raw_.insert(raw_.end(), row, row + kParamsPerGaussian); }
    void resize(std::size_t count) { raw_.resize(count * kParamsPerGaussian, 0.0); }

    /// Projects every splat's raw tangents back to an orthonormal pair and
    /// renormalizes; called after each optimizer step.
    void reorthonormalize_tangents();

  private:
    std::vector<double> raw_;
};

/// Maps one raw parameter row to activated attributes. Throws NumericError on
/// non-finite raw values and ContractError on degenerate tangents.
Gaussian2D activate_parameters(const double* raw);

/// Inverse of activate_parameters for values strictly inside their ranges.
/// Saturated sigmoids are clamped to [1e-7, 1-1e-7] before the logit.
void deactivate_parameters(const Gaussian2D& g, double* raw_out);

/// Chain rule from gradients on activated attributes back to the raw row.
/// `grad_act` uses the same layout as the raw row but holds gradients w.r.t.
/// activated values (positions/sh already identical in both spaces).
void activation_backward(const double* raw, const double* grad_act, double* grad_raw_out);

// Degree-3 real spherical harmonics. `basis` gets the 16 basis values at unit
// direction d; `dbasis` (16x3, optional) the derivative w.r.t. d.
void sh_basis(const Vec3& d, double* basis, double* dbasis = nullptr);

/// Stage I view color: 0.5 + sum_k sh_k * basis_k(dir), clamped at 0 per channel.
Vec3 sh_color(const std::array<double, kShCoeffs>& sh, const Vec3& dir);

}  // namespace splatir
