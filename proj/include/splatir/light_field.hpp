// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "splatir/camera.hpp"
#include "splatir/raster.hpp"
#include "splatir/scene.hpp"
#include "splatir/shading.hpp"

namespace splatir {

inline constexpr int kFourierBands = 6;
inline constexpr int kEncodedPosDim = 3 + 6 * kFourierBands;  // 39
/// Column layout: encoded position, t_u, t_v, (s_u, s_v), normal, w_in, w_out.
inline constexpr int kMlpInputDim = kEncodedPosDim + 3 + 3 + 2 + 3 + 3 + 3;  // 56
inline constexpr int kMlpHiddenDim = 128;
inline constexpr int kMlpHiddenLayers = 4;
inline constexpr int kMlpOutputDim = 3;

/// Octave positional encoding: out holds x itself, then per band k the three
/// components of sin(2^k pi x) followed by cos(2^k pi x). kEncodedPosDim values.
void fourier_encode(const Vec3& x, double* out);

/// Pulls a gradient on the encoded vector back onto x and adds it to g_x.
void fourier_encode_backward(const Vec3& x, const double* g_encoded, Vec3& g_x);

/// One shading point in network input form.
struct MlpPoint {
    Vec3 position = Vec3::Zero();
    Vec3 tangent_u = Vec3::Zero();
    Vec3 tangent_v = Vec3::Zero();
    Vec2 scale = Vec2::Zero();
    Vec3 normal = Vec3::Zero();
    Vec3 omega_in = Vec3::Zero();
    Vec3 omega_out = Vec3::Zero();
};

/// Writes the kMlpInputDim-entry network input column for one point.
void encode_mlp_point(const MlpPoint& p, double* column);

/// Pulls a gradient on one input column back onto the raw point quantities.
MlpPoint decode_mlp_point_grad(const MlpPoint& p, const double* column_grad);

/// Activations cached by a forward pass, consumed by the backward pass.
struct MlpCache {
    MatX input;                                  // kMlpInputDim x n
    std::array<MatX, kMlpHiddenLayers> hidden;   // post-ReLU, kMlpHiddenDim x n
    MatX preout;                                 // kMlpOutputDim x n, pre-softplus
};

/// Fully connected light-transport field: four 128-wide ReLU layers and a
/// softplus output head mapping a shading point to an RGB transport factor.
/// Parameters live in one flat vector (column-major weights, then bias, per
/// layer in order) so optimizers and checkpoints can treat them uniformly.
class LightMLP {
  public:
    LightMLP();  // all-zero parameters: constant transport softplus(0) = ln 2

    /// He fan-in normal weights for the hidden stack; the output layer starts
    /// at zero so training begins from a flat transport field.
    static LightMLP seeded(std::uint64_t seed);

    static std::size_t param_count();
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    /// Batched evaluation, one point per column. Returns kMlpOutputDim x n
    /// transport values; fills `cache` when given.
    MatX forward(const MatX& input, MlpCache* cache = nullptr) const;

    /// Backpropagates `upstream` (same shape as the forward output) through a
    /// cached evaluation: adds parameter gradients into `grad_params` (flat,
    /// param_count entries) and returns the gradient on the input columns.
    MatX backward(const MlpCache& cache, const MatX& upstream,
                  std::vector<double>& grad_params) const;

  private:
    std::vector<double> params_;
};

/// Forward transport evaluation over a frame plus the state its backward needs.
struct TransportEval {
    Image transport;           // w x h x 3; background pixels hold 1
    std::vector<int> pixels;   // foreground pixel indices, y * width + x
    std::vector<MlpPoint> points;  // raw (pre-encoding) network inputs per pixel
    MlpCache cache;
};

/// Evaluates the transport field at every foreground pixel of a deferred
/// G-buffer for one incoming light direction. Inputs are the blended G-buffer
/// maps; the outgoing direction is the pixel's view ray.
TransportEval transport_forward(const LightMLP& mlp, const GBuffer& gbuffer, const Camera& camera,
                                const DirectionalLight& light, const ShadeConfig& config = {});

/// Gradients of a scalar objective through transport_forward. Adds network
/// parameter gradients into `grad_params` and returns per-map G-buffer
/// gradients (normal, tangents, scale, and depth via the position input).
GBufferGrads transport_backward(const LightMLP& mlp, const TransportEval& eval,
                                const Camera& camera, const Image& upstream,
                                std::vector<double>& grad_params);

}  // namespace splatir
