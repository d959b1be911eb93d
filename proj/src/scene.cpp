// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#include "splatir/scene.hpp"

#include <algorithm>

namespace splatir {

SplatNormalResult splat_normal(const Gaussian2D& g, const Vec3& cam_position) {
    Vec3 n = g.t_u.cross(g.t_v);
    double len = n.norm();
    if (len < 1e-12) throw ContractError("splat_normal: degenerate tangents");
    n /= len;
    // view direction points from camera to splat; normal must oppose it
    const bool flip = n.dot(g.position - cam_position) > 0.0;
    if (flip) n = -n;
    return SplatNormalResult{n, flip};
}

namespace {

void orthonormalize(const Vec3& raw_u, const Vec3& raw_v, Vec3& t_u, Vec3& t_v) {
    double nu = raw_u.norm();
    if (nu < 1e-12) throw ContractError("activate_parameters: zero-length t_u");
    t_u = raw_u / nu;
    Vec3 w = raw_v - t_u.dot(raw_v) * t_u;
    double nw = w.norm();
    if (nw < 1e-12) throw ContractError("activate_parameters: t_v parallel to t_u");
    t_v = w / nw;
}

}  // namespace

Gaussian2D activate_parameters(const double* raw) {
    for (int i = 0; i < kParamsPerGaussian; ++i)
        if (!std::isfinite(raw[i]))
            throw NumericError("activate_parameters: non-finite raw parameter at index " +
                               std::to_string(i));

    Gaussian2D g;
    g.position = Vec3(raw[param::kPosition], raw[param::kPosition + 1], raw[param::kPosition + 2]);
    Vec3 raw_u(raw[param::kTangentU], raw[param::kTangentU + 1], raw[param::kTangentU + 2]);
    Vec3 raw_v(raw[param::kTangentV], raw[param::kTangentV + 1], raw[param::kTangentV + 2]);
    orthonormalize(raw_u, raw_v, g.t_u, g.t_v);
    g.s_u = std::exp(raw[param::kLogScale]);
    g.s_v = std::exp(raw[param::kLogScale + 1]);
    g.opacity = sigmoid(raw[param::kOpacity]);
    std::copy(raw + param::kSh, raw + param::kSh + kShCoeffs, g.sh.begin());
    for (int c = 0; c < 3; ++c) g.albedo[c] = sigmoid(raw[param::kAlbedo + c]);
    g.metallic = sigmoid(raw[param::kMetallic]);
    g.roughness = sigmoid(raw[param::kRoughness]);
    return g;
}

namespace {
double safe_logit(double y) { return logit(std::clamp(y, 1e-7, 1.0 - 1e-7)); }
}  // namespace

void deactivate_parameters(const Gaussian2D& g, double* raw) {
    raw[param::kPosition] = g.position.x();
    raw[param::kPosition + 1] = g.position.y();
    raw[param::kPosition + 2] = g.position.z();
    for (int i = 0; i < 3; ++i) {
        raw[param::kTangentU + i] = g.t_u[i];
        raw[param::kTangentV + i] = g.t_v[i];
    }
    raw[param::kLogScale] = std::log(g.s_u);
    raw[param::kLogScale + 1] = std::log(g.s_v);
    raw[param::kOpacity] = safe_logit(g.opacity);
    std::copy(g.sh.begin(), g.sh.end(), raw + param::kSh);
    for (int c = 0; c < 3; ++c) raw[param::kAlbedo + c] = safe_logit(g.albedo[c]);
    raw[param::kMetallic] = safe_logit(g.metallic);
    raw[param::kRoughness] = safe_logit(g.roughness);
}

void activation_backward(const double* raw, const double* grad_act, double* grad_raw) {
    // position and SH pass through unchanged
    for (int i = 0; i < 3; ++i) grad_raw[param::kPosition + i] = grad_act[param::kPosition + i];
    for (int i = 0; i < kShCoeffs; ++i) grad_raw[param::kSh + i] = grad_act[param::kSh + i];

    // Gram-Schmidt backward. Forward: u = a/|a|; w = b - (u.b)u; v = w/|w|.
    Vec3 a(raw[param::kTangentU], raw[param::kTangentU + 1], raw[param::kTangentU + 2]);
    Vec3 b(raw[param::kTangentV], raw[param::kTangentV + 1], raw[param::kTangentV + 2]);
    double na = a.norm();
    Vec3 u = a / na;
    double d = u.dot(b);
    Vec3 w = b - d * u;
    double nw = w.norm();
    Vec3 v = w / nw;

    Vec3 gu(grad_act[param::kTangentU], grad_act[param::kTangentU + 1],
            grad_act[param::kTangentU + 2]);
    Vec3 gv(grad_act[param::kTangentV], grad_act[param::kTangentV + 1],
            grad_act[param::kTangentV + 2]);

    // v = w/|w|: gw = (I - v v^T)/|w| * gv
    Vec3 gw = (gv - v * v.dot(gv)) / nw;
    // w = b - (u.b)u: gb += gw - u (u.gw); gu_total += -(u.b) gw - b (u.gw)
    Vec3 gb = gw - u * u.dot(gw);
    Vec3 gu_total = gu - d * gw - b * u.dot(gw);
    // u = a/|a|: ga = (I - u u^T)/|a| * gu_total
    Vec3 ga = (gu_total - u * u.dot(gu_total)) / na;

    for (int i = 0; i < 3; ++i) {
        grad_raw[param::kTangentU + i] = ga[i];
        grad_raw[param::kTangentV + i] = gb[i];
    }

    // s = exp(log_s): ds/dlog_s = s
    grad_raw[param::kLogScale] = grad_act[param::kLogScale] * std::exp(raw[param::kLogScale]);
    grad_raw[param::kLogScale + 1] =
        grad_act[param::kLogScale + 1] * std::exp(raw[param::kLogScale + 1]);

    auto sig_chain = [&](int idx) {
        double y = sigmoid(raw[idx]);
        grad_raw[idx] = grad_act[idx] * sigmoid_grad(y);
    };
    sig_chain(param::kOpacity);
    for (int c = 0; c < 3; ++c) sig_chain(param::kAlbedo + c);
    sig_chain(param::kMetallic);
    sig_chain(param::kRoughness);
}

void SplatScene::reorthonormalize_tangents() {
    for (std::size_t i = 0; i < size(); ++i) {
        double* r = raw(i);
        Vec3 a(r[param::kTangentU], r[param::kTangentU + 1], r[param::kTangentU + 2]);
        Vec3 b(r[param::kTangentV], r[param::kTangentV + 1], r[param::kTangentV + 2]);
        Vec3 u, v;
        orthonormalize(a, b, u, v);
        for (int k = 0; k < 3; ++k) {
            r[param::kTangentU + k] = u[k];
            r[param::kTangentV + k] = v[k];
        }
    }
}

// Real SH basis constants, degree 0..3.
namespace {
constexpr double C0 = 0.28209479177387814;
constexpr double C1 = 0.4886025119029199;
constexpr double C2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                          -1.0925484305920792, 0.5462742152960396};
constexpr double C3[7] = {-0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
                          0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                          -0.5900435899266435};
}  // namespace

void sh_basis(const Vec3& d, double* b, double* db) {
    const double x = d.x(), y = d.y(), z = d.z();
    const double xx = x * x, yy = y * y, zz = z * z;
    const double xy = x * y, yz = y * z, xz = x * z;

    b[0] = C0;
    b[1] = -C1 * y;
    b[2] = C1 * z;
    b[3] = -C1 * x;
    b[4] = C2[0] * xy;
    b[5] = C2[1] * yz;
    b[6] = C2[2] * (2.0 * zz - xx - yy);
    b[7] = C2[3] * xz;
    b[8] = C2[4] * (xx - yy);
    b[9] = C3[0] * y * (3.0 * xx - yy);
    b[10] = C3[1] * xy * z;
    b[11] = C3[2] * y * (4.0 * zz - xx - yy);
    b[12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    b[13] = C3[4] * x * (4.0 * zz - xx - yy);
    b[14] = C3[5] * z * (xx - yy);
    b[15] = C3[6] * x * (xx - 3.0 * yy);

    if (!db) return;
    auto set = [&](int k, double gx, double gy, double gz) {
        db[k * 3] = gx;
        db[k * 3 + 1] = gy;
        db[k * 3 + 2] = gz;
    };
    set(0, 0, 0, 0);
    set(1, 0, -C1, 0);
    set(2, 0, 0, C1);
    set(3, -C1, 0, 0);
    set(4, C2[0] * y, C2[0] * x, 0);
    set(5, 0, C2[1] * z, C2[1] * y);
    set(6, -2.0 * C2[2] * x, -2.0 * C2[2] * y, 4.0 * C2[2] * z);
    set(7, C2[3] * z, 0, C2[3] * x);
    set(8, 2.0 * C2[4] * x, -2.0 * C2[4] * y, 0);
    set(9, C3[0] * 6.0 * xy, C3[0] * (3.0 * xx - 3.0 * yy), 0);
    set(10, C3[1] * yz, C3[1] * xz, C3[1] * xy);
    set(11, -2.0 * C3[2] * xy, C3[2] * (4.0 * zz - xx - 3.0 * yy), C3[2] * 8.0 * yz);
    set(12, -6.0 * C3[3] * xz, -6.0 * C3[3] * yz, C3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy));
    set(13, C3[4] * (4.0 * zz - 3.0 * xx - yy), -2.0 * C3[4] * xy, C3[4] * 8.0 * xz);
    set(14, 2.0 * C3[5] * xz, -2.0 * C3[5] * yz, C3[5] * (xx - yy));
    set(15, C3[6] * (3.0 * xx - 3.0 * yy), -6.0 * C3[6] * xy, 0);
}

Vec3 sh_color(const std::array<double, kShCoeffs>& sh, const Vec3& dir) {
    double b[kShBasis];
    sh_basis(dir, b);
    Vec3 c = Vec3::Constant(0.5);
    for (int k = 0; k < kShBasis; ++k)
        for (int ch = 0; ch < 3; ++ch) c[ch] += sh[k * 3 + ch] * b[k];
    return c.cwiseMax(0.0);
}

}  // namespace splatir
