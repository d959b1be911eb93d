// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#include "splatir/light_field.hpp"

#include <cstddef>

#include "splatir/rng.hpp"

namespace splatir {

namespace {

struct LayerSpec {
    int in = 0, out = 0;
    std::size_t w_off = 0, b_off = 0;
};

using LayerSpecs = std::array<LayerSpec, kMlpHiddenLayers + 1>;

LayerSpecs layer_specs() {
    LayerSpecs specs{};
    int in = kMlpInputDim;
    std::size_t off = 0;
    for (int l = 0; l <= kMlpHiddenLayers; ++l) {
        const int out = (l == kMlpHiddenLayers) ? kMlpOutputDim : kMlpHiddenDim;
        specs[l].in = in;
        specs[l].out = out;
        specs[l].w_off = off;
        specs[l].b_off = off + static_cast<std::size_t>(in) * out;
        off = specs[l].b_off + out;
        in = out;
    }
    return specs;
}

using ConstMatMap = Eigen::Map<const MatX>;
using ConstVecMap = Eigen::Map<const VecX>;
using MatMap = Eigen::Map<MatX>;
using VecMap = Eigen::Map<VecX>;

}  // namespace

void fourier_encode(const Vec3& x, double* out) {
    out[0] = x.x();
    out[1] = x.y();
    out[2] = x.z();
    int at = 3;
    double freq = kPi;
    for (int k = 0; k < kFourierBands; ++k, freq *= 2.0) {
        for (int c = 0; c < 3; ++c) out[at + c] = std::sin(freq * x[c]);
        for (int c = 0; c < 3; ++c) out[at + 3 + c] = std::cos(freq * x[c]);
        at += 6;
    }
}

void fourier_encode_backward(const Vec3& x, const double* g, Vec3& g_x) {
    for (int c = 0; c < 3; ++c) g_x[c] += g[c];
    int at = 3;
    double freq = kPi;
    for (int k = 0; k < kFourierBands; ++k, freq *= 2.0) {
        for (int c = 0; c < 3; ++c) {
            const double arg = freq * x[c];
            g_x[c] += freq * (std::cos(arg) * g[at + c] - std::sin(arg) * g[at + 3 + c]);
        }
        at += 6;
    }
}

void encode_mlp_point(const MlpPoint& p, double* col) {
    fourier_encode(p.position, col);
    int at = kEncodedPosDim;
    for (int c = 0; c < 3; ++c) col[at++] = p.tangent_u[c];
    for (int c = 0; c < 3; ++c) col[at++] = p.tangent_v[c];
    col[at++] = p.scale[0];
    col[at++] = p.scale[1];
    for (int c = 0; c < 3; ++c) col[at++] = p.normal[c];
    for (int c = 0; c < 3; ++c) col[at++] = p.omega_in[c];
    for (int c = 0; c < 3; ++c) col[at++] = p.omega_out[c];
}

MlpPoint decode_mlp_point_grad(const MlpPoint& p, const double* g) {
    MlpPoint out;
    fourier_encode_backward(p.position, g, out.position);
    int at = kEncodedPosDim;
    for (int c = 0; c < 3; ++c) out.tangent_u[c] = g[at++];
    for (int c = 0; c < 3; ++c) out.tangent_v[c] = g[at++];
    out.scale[0] = g[at++];
    out.scale[1] = g[at++];
    for (int c = 0; c < 3; ++c) out.normal[c] = g[at++];
    for (int c = 0; c < 3; ++c) out.omega_in[c] = g[at++];
    for (int c = 0; c < 3; ++c) out.omega_out[c] = g[at++];
    return out;
}

LightMLP::LightMLP() : params_(param_count(), 0.0) {}

std::size_t LightMLP::param_count() {
    const LayerSpecs specs = layer_specs();
    const LayerSpec& last = specs.back();
    return last.b_off + last.out;
}

LightMLP LightMLP::seeded(std::uint64_t seed) {
    LightMLP mlp;
    Rng rng(seed);
    const LayerSpecs specs = layer_specs();
    // Hidden weights only: biases and the output layer stay zero, so a fresh
    // network is the constant field softplus(0) regardless of its inputs.
    for (int l = 0; l < kMlpHiddenLayers; ++l) {
        const LayerSpec& s = specs[l];
        const double stddev = std::sqrt(2.0 / s.in);
        double* w = mlp.params_.data() + s.w_off;
        const std::size_t count = static_cast<std::size_t>(s.in) * s.out;
        for (std::size_t i = 0; i < count; ++i) w[i] = stddev * rng.normal();
    }
    return mlp;
}

MatX LightMLP::forward(const MatX& input, MlpCache* cache) const {
    if (input.rows() != kMlpInputDim)
        throw ContractError("LightMLP::forward: input must have kMlpInputDim rows");
    const LayerSpecs specs = layer_specs();
    if (cache) cache->input = input;
    // Copy each layer's slice of the flat buffer into Eigen-owned storage
    // before multiplying: the product kernels choose their lane splits from
    // operand alignment, and the flat buffer's placement depends on allocator
    // history, so mapping it directly would let the reduction order (and the
    // low bits of the result) vary between otherwise identical runs.
    MatX a = input;
    MatX W;
    VecX b;
    for (int l = 0; l < kMlpHiddenLayers; ++l) {
        const LayerSpec& s = specs[l];
        W = ConstMatMap(params_.data() + s.w_off, s.out, s.in);
        b = ConstVecMap(params_.data() + s.b_off, s.out);
        a = ((W * a).colwise() + b).cwiseMax(0.0);
        if (cache) cache->hidden[l] = a;
    }
    const LayerSpec& s = specs.back();
    W = ConstMatMap(params_.data() + s.w_off, s.out, s.in);
    b = ConstVecMap(params_.data() + s.b_off, s.out);
    MatX z = (W * a).colwise() + b;
    if (cache) cache->preout = z;
    return z.unaryExpr([](double v) { return softplus(v); });
}

MatX LightMLP::backward(const MlpCache& cache, const MatX& upstream,
                        std::vector<double>& grad_params) const {
    if (grad_params.size() != param_count())
        throw ContractError("LightMLP::backward: grad buffer has the wrong size");
    if (upstream.rows() != kMlpOutputDim || upstream.cols() != cache.preout.cols())
        throw ContractError("LightMLP::backward: upstream shape mismatch");
    const LayerSpecs specs = layer_specs();
    MatX dz =
        upstream.cwiseProduct(cache.preout.unaryExpr([](double v) { return sigmoid(v); }));
    // Same staging discipline as forward(): products read from and write to
    // Eigen-owned scratch, and only element-wise (order-free) copies touch the
    // flat buffers, so result bits do not depend on how those buffers happen
    // to be aligned.
    MatX W, Wg;
    VecX bg;
    for (int l = kMlpHiddenLayers; l >= 0; --l) {
        const LayerSpec& s = specs[l];
        const MatX& a_prev = (l == 0) ? cache.input : cache.hidden[l - 1];
        Wg.noalias() = dz * a_prev.transpose();
        bg.noalias() = dz.rowwise().sum();
        MatMap(grad_params.data() + s.w_off, s.out, s.in) += Wg;
        VecMap(grad_params.data() + s.b_off, s.out) += bg;
        W = ConstMatMap(params_.data() + s.w_off, s.out, s.in);
        MatX da = W.transpose() * dz;
        if (l == 0) return da;
        // ReLU mask: the cached activation is max(z, 0), so positive entries
        // mark the pass-through units.
        dz = da.cwiseProduct(
            (a_prev.array() > 0.0).cast<double>().matrix());
    }
    return {};
}

TransportEval transport_forward(const LightMLP& mlp, const GBuffer& gb, const Camera& cam,
                                const DirectionalLight& light, const ShadeConfig& cfg) {
    if (gb.tangent_u.empty() || gb.scale.empty())
        throw ContractError("transport_forward: G-buffer lacks frame maps (render in Deferred mode)");
    light.validate();
    const int w = cam.width, h = cam.height;
    TransportEval ev;
    ev.transport = Image(w, h, 3, 1.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!shade_foreground(gb, x, y, cfg)) continue;
            MlpPoint pt;
            pt.position = cam.unproject(x + 0.5, y + 0.5, gb.depth.at(x, y, 0));
            pt.tangent_u = gb.tangent_u.rgb(x, y);
            pt.tangent_v = gb.tangent_v.rgb(x, y);
            pt.scale = Vec2(gb.scale.at(x, y, 0), gb.scale.at(x, y, 1));
            pt.normal = gb.normal.rgb(x, y);
            pt.omega_in = light.direction;
            pt.omega_out = (cam.position() - pt.position).normalized();
            ev.pixels.push_back(y * w + x);
            ev.points.push_back(pt);
        }
    }
    const int n = static_cast<int>(ev.pixels.size());
    MatX input(kMlpInputDim, n);
    for (int i = 0; i < n; ++i) encode_mlp_point(ev.points[i], input.col(i).data());
    const MatX out = mlp.forward(input, &ev.cache);
    for (int i = 0; i < n; ++i) {
        const int px = ev.pixels[i];
        ev.transport.set_rgb(px % w, px / w, out.col(i));
    }
    return ev;
}

GBufferGrads transport_backward(const LightMLP& mlp, const TransportEval& ev, const Camera& cam,
                                const Image& upstream, std::vector<double>& grad_params) {
    const int w = ev.transport.width(), h = ev.transport.height();
    if (!upstream.same_shape(ev.transport))
        throw ContractError("transport_backward: upstream shape mismatch");
    const int n = static_cast<int>(ev.pixels.size());
    MatX up(kMlpOutputDim, n);
    for (int i = 0; i < n; ++i) up.col(i) = upstream.rgb(ev.pixels[i] % w, ev.pixels[i] / w);
    const MatX g_input = mlp.backward(ev.cache, up, grad_params);

    GBufferGrads gg;
    gg.normal = Image(w, h, 3);
    gg.tangent_u = Image(w, h, 3);
    gg.tangent_v = Image(w, h, 3);
    gg.scale = Image(w, h, 2);
    gg.depth = Image(w, h, 1);
    const Vec3 origin = cam.position();
    for (int i = 0; i < n; ++i) {
        const int x = ev.pixels[i] % w, y = ev.pixels[i] / w;
        const MlpPoint g = decode_mlp_point_grad(ev.points[i], g_input.col(i).data());
        gg.normal.set_rgb(x, y, g.normal);
        gg.tangent_u.set_rgb(x, y, g.tangent_u);
        gg.tangent_v.set_rgb(x, y, g.tangent_v);
        gg.scale.at(x, y, 0) = g.scale[0];
        gg.scale.at(x, y, 1) = g.scale[1];
        // The position input is origin + depth * ray, so its gradient projects
        // onto the ray; the view direction is depth-independent and the light
        // direction is fixed, so their slots stop here.
        const Vec3 ray = cam.unproject(x + 0.5, y + 0.5, 1.0) - origin;
        gg.depth.at(x, y, 0) = ray.dot(g.position);
    }
    return gg;
}

}  // namespace splatir
