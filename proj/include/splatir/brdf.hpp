// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "splatir/common.hpp"

namespace splatir {

/// Simplified Disney BRDF evaluation at one surface point: a Lambertian
/// diffuse lobe scaled by (1 - metallic) and a GGX microfacet specular lobe
/// with height-correlated Smith shadowing and Schlick Fresnel.
struct BRDFSample {
    Vec3 diffuse = Vec3::Zero();   // f_d per channel, 1/sr
    Vec3 specular = Vec3::Zero();  // f_s per channel, 1/sr
    double cos_i = 0.0;            // clamped incident cosine (n . omega_i)
};

struct ShadePoint {
    Vec3 position = Vec3::Zero();  // world-space surface point
    Vec3 normal = Vec3::UnitZ();   // unit
    Vec3 omega_o = Vec3::UnitZ();  // unit, toward the camera
    Vec3 albedo = Vec3::Constant(0.5);
    double metallic = 0.0;
    double roughness = 0.5;
};

/// Gradients of a scalar objective through eval_brdf, given upstream gradients
/// on (diffuse, specular, cos_i). omega_i is treated as a constant (lights are
/// calibrated inputs).
struct BRDFGrads {
    Vec3 d_albedo = Vec3::Zero();
    double d_metallic = 0.0;
    double d_roughness = 0.0;
    Vec3 d_normal = Vec3::Zero();
    Vec3 d_omega_o = Vec3::Zero();
};

inline constexpr double kRoughnessFloor = 0.04;  // GGX alpha = max(r, floor)^2
inline constexpr double kSpecularDenomClamp = 1e-6;
inline constexpr double kDielectricF0 = 0.04;

/// Evaluates the BRDF for a unit incident direction. Back-lit points
/// (omega_i . n <= 0) yield an all-zero sample rather than an error.
BRDFSample eval_brdf(const ShadePoint& point, const Vec3& omega_i);

BRDFGrads eval_brdf_backward(const ShadePoint& point, const Vec3& omega_i, const Vec3& up_diffuse,
                             const Vec3& up_specular, double up_cos);

}  // namespace splatir
