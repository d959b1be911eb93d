// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#include "splatir/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace splatir {
namespace {

constexpr int kSsimRadius = 5;  // 11x11 window
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

const std::array<double, 2 * kSsimRadius + 1>& ssim_kernel() {
    static const auto kernel = [] {
        std::array<double, 2 * kSsimRadius + 1> k{};
        double sum = 0.0;
        for (int i = -kSsimRadius; i <= kSsimRadius; ++i) {
            k[i + kSsimRadius] = std::exp(-0.5 * i * i / (kSsimSigma * kSsimSigma));
            sum += k[i + kSsimRadius];
        }
        for (double& v : k) v /= sum;
        return k;
    }();
    return kernel;
}

/// Separable Gaussian blur with clamp-to-edge windows.
Image blur(const Image& src) {
    const auto& k = ssim_kernel();
    const int w = src.width(), h = src.height(), ch = src.channels();
    Image tmp(w, h, ch), out(w, h, ch);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (int t = -kSsimRadius; t <= kSsimRadius; ++t)
                    acc += k[t + kSsimRadius] * src.at(std::clamp(x + t, 0, w - 1), y, c);
                tmp.at(x, y, c) = acc;
            }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (int t = -kSsimRadius; t <= kSsimRadius; ++t)
                    acc += k[t + kSsimRadius] * tmp.at(x, std::clamp(y + t, 0, h - 1), c);
                out.at(x, y, c) = acc;
            }
    return out;
}

/// Adjoint of blur: scatters each output gradient back through the clamped
/// window (vertical stage first, mirroring the forward composition).
Image blur_adjoint(const Image& grad_out) {
    const auto& k = ssim_kernel();
    const int w = grad_out.width(), h = grad_out.height(), ch = grad_out.channels();
    Image gtmp(w, h, ch), gsrc(w, h, ch);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c) {
                const double g = grad_out.at(x, y, c);
                if (g == 0.0) continue;
                for (int t = -kSsimRadius; t <= kSsimRadius; ++t)
                    gtmp.at(x, std::clamp(y + t, 0, h - 1), c) += k[t + kSsimRadius] * g;
            }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c) {
                const double g = gtmp.at(x, y, c);
                if (g == 0.0) continue;
                for (int t = -kSsimRadius; t <= kSsimRadius; ++t)
                    gsrc.at(std::clamp(x + t, 0, w - 1), y, c) += k[t + kSsimRadius] * g;
            }
    return gsrc;
}

Image hadamard(const Image& a, const Image& b) {
    Image out(a.width(), a.height(), a.channels());
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    return out;
}

void require_same_shape(const Image& a, const Image& b, const char* who) {
    if (!a.same_shape(b))
        throw InputError(std::string(who) + ": image shapes differ (" +
                         std::to_string(a.width()) + "x" + std::to_string(a.height()) + "x" +
                         std::to_string(a.channels()) + " vs " + std::to_string(b.width()) + "x" +
                         std::to_string(b.height()) + "x" + std::to_string(b.channels()) + ")");
}

}  // namespace

double loss_l1(const Image& a, const Image& b, Image* grad_a) {
    require_same_shape(a, b, "loss_l1");
    const double inv = 1.0 / static_cast<double>(a.size());
    if (grad_a) *grad_a = Image(a.width(), a.height(), a.channels());
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        sum += std::abs(d);
        if (grad_a) grad_a->data()[i] = (d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0));
    }
    return sum * inv;
}

double loss_ssim(const Image& a, const Image& b, Image* grad_a) {
    require_same_shape(a, b, "loss_ssim");
    const int w = a.width(), h = a.height(), ch = a.channels();
    const Image mu_x = blur(a), mu_y = blur(b);
    const Image s_xx = blur(hadamard(a, a)), s_yy = blur(hadamard(b, b));
    const Image s_xy = blur(hadamard(a, b));

    const double inv = 1.0 / static_cast<double>(a.size());
    Image g_mu_x, g_sxx, g_sxy;
    if (grad_a) {
        g_mu_x = Image(w, h, ch);
        g_sxx = Image(w, h, ch);
        g_sxy = Image(w, h, ch);
    }

    double mean = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double mx = mu_x.data()[i], my = mu_y.data()[i];
        const double var_x = s_xx.data()[i] - mx * mx;
        const double var_y = s_yy.data()[i] - my * my;
        const double cov = s_xy.data()[i] - mx * my;
        const double A = 2.0 * mx * my + kSsimC1;
        const double B = 2.0 * cov + kSsimC2;
        const double C = mx * mx + my * my + kSsimC1;
        const double D = var_x + var_y + kSsimC2;
        const double S = (A * B) / (C * D);
        mean += S;
        if (!grad_a) continue;
        const double gA = B / (C * D), gB = A / (C * D);
        const double gC = -S / C, gD = -S / D;
        g_mu_x.data()[i] = 2.0 * inv * (gA * my + gC * mx - gB * my - gD * mx);
        g_sxy.data()[i] = 2.0 * inv * gB;
        g_sxx.data()[i] = inv * gD;
    }
    mean *= inv;

    if (grad_a) {
        const Image adj_mu = blur_adjoint(g_mu_x);
        const Image adj_sxx = blur_adjoint(g_sxx);
        const Image adj_sxy = blur_adjoint(g_sxy);
        *grad_a = Image(w, h, ch);
        for (std::size_t i = 0; i < grad_a->size(); ++i)
            grad_a->data()[i] = adj_mu.data()[i] + 2.0 * a.data()[i] * adj_sxx.data()[i] +
                                b.data()[i] * adj_sxy.data()[i];
    }
    return mean;
}

double loss_rgb(const Image& rendered, const Image& target, Image* grad_rendered) {
    Image g_l1, g_ssim;
    const double l1 = loss_l1(rendered, target, grad_rendered ? &g_l1 : nullptr);
    const double ssim = loss_ssim(rendered, target, grad_rendered ? &g_ssim : nullptr);
    if (grad_rendered) {
        *grad_rendered = Image(rendered.width(), rendered.height(), rendered.channels());
        for (std::size_t i = 0; i < grad_rendered->size(); ++i)
            grad_rendered->data()[i] = 0.8 * g_l1.data()[i] - 0.2 * g_ssim.data()[i];
    }
    return 0.8 * l1 + 0.2 * (1.0 - ssim);
}

NormalConsistencyResult loss_normal_consistency(const GBuffer& gbuffer, const Camera& camera,
                                                const ShadeConfig& config) {
    const int w = gbuffer.width(), h = gbuffer.height();
    NormalConsistencyResult res;
    res.grad_normal = Image(w, h, 3);
    res.grad_depth = Image(w, h, 1);
    const Image points = unproject_map(gbuffer, camera, config);
    const Vec3 cam_pos = camera.position();

    // First pass: count contributing pixels so the mean's scale is known.
    std::vector<std::uint8_t> fg(static_cast<std::size_t>(w) * h, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            fg[y * w + x] = shade_foreground(gbuffer, x, y, config) ? 1 : 0;
    auto usable = [&](int x, int y) {
        return fg[y * w + x] && fg[y * w + x - 1] && fg[y * w + x + 1] && fg[(y - 1) * w + x] &&
               fg[(y + 1) * w + x];
    };
    for (int y = 1; y < h - 1; ++y)
        for (int x = 1; x < w - 1; ++x)
            if (usable(x, y)) ++res.pixels;
    if (res.pixels == 0) return res;

    const double inv = 1.0 / static_cast<double>(res.pixels);
    double sum = 0.0;
    for (int y = 1; y < h - 1; ++y) {
        for (int x = 1; x < w - 1; ++x) {
            if (!usable(x, y)) continue;
            const Vec3 du = points.rgb(x + 1, y) - points.rgb(x - 1, y);
            const Vec3 dv = points.rgb(x, y + 1) - points.rgb(x, y - 1);
            const Vec3 c = du.cross(dv);
            const double c_norm = c.norm();
            if (c_norm < 1e-14) continue;  // degenerate stencil contributes nothing
            const double flip = (c.dot(cam_pos - points.rgb(x, y)) < 0.0) ? -1.0 : 1.0;
            const Vec3 nd = flip * c / c_norm;
            const Vec3 n_raw = gbuffer.normal.rgb(x, y);
            const double n_norm = n_raw.norm();
            if (n_norm < 1e-14) continue;
            const Vec3 n = n_raw / n_norm;
            sum += 1.0 - n.dot(nd);

            // Backward: d(1 - n.nd) routed through both normalizations, the
            // cross product, and the depth-scaled pixel rays.
            const Vec3 g_n_hat = -inv * nd;
            const Vec3 g_nd_hat = -inv * n;
            const Vec3 g_n = (g_n_hat - n * n.dot(g_n_hat)) / n_norm;
            res.grad_normal.set_rgb(x, y, res.grad_normal.rgb(x, y) + g_n);
            const Vec3 g_c = flip * (g_nd_hat - nd * flip * nd.dot(flip * g_nd_hat)) / c_norm;
            const Vec3 g_du = dv.cross(g_c);
            const Vec3 g_dv = g_c.cross(du);
            const auto add_depth = [&](int px, int py, const Vec3& g_point) {
                res.grad_depth.at(px, py, 0) +=
                    camera.ray_direction(px + 0.5, py + 0.5).dot(g_point);
            };
            add_depth(x + 1, y, g_du);
            add_depth(x - 1, y, -g_du);
            add_depth(x, y + 1, g_dv);
            add_depth(x, y - 1, -g_dv);
        }
    }
    res.value = sum * inv;
    return res;
}

double loss_normal_reg(const Image& rendered_normal, const Image& guidance_cam,
                       const Camera& camera, const Image& mask, Image* grad_normal,
                       NormalRegPenalty penalty) {
    require_same_shape(rendered_normal, guidance_cam, "loss_normal_reg");
    if (mask.width() != rendered_normal.width() || mask.height() != rendered_normal.height())
        throw InputError("loss_normal_reg: mask resolution mismatch");
    const int w = rendered_normal.width(), h = rendered_normal.height();
    if (grad_normal) *grad_normal = Image(w, h, 3);

    const Mat3 R_t = camera.rotation().transpose();
    int count = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (mask.at(x, y, 0) > 0.5) ++count;
    if (count == 0) return 0.0;
    const double inv = 1.0 / static_cast<double>(count);

    double sum = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (mask.at(x, y, 0) <= 0.5) continue;
            const Vec3 target = R_t * guidance_cam.rgb(x, y);
            const Vec3 n = rendered_normal.rgb(x, y);
            if (penalty == NormalRegPenalty::L1) {
                const Vec3 d = n - target;
                sum += d.cwiseAbs().sum();
                if (grad_normal)
                    grad_normal->set_rgb(x, y, inv * d.cwiseSign());
            } else if (penalty == NormalRegPenalty::L2) {
                const Vec3 d = n - target;
                sum += d.squaredNorm();
                if (grad_normal) grad_normal->set_rgb(x, y, 2.0 * inv * d);
            } else {  // Cosine: 1 - n_hat . target
                const double n_norm = n.norm();
                if (n_norm < 1e-14) {
                    sum += 1.0;
                    continue;
                }
                const Vec3 n_hat = n / n_norm;
                sum += 1.0 - n_hat.dot(target);
                if (grad_normal) {
                    const Vec3 g_hat = -inv * target;
                    grad_normal->set_rgb(x, y, (g_hat - n_hat * n_hat.dot(g_hat)) / n_norm);
                }
            }
        }
    }
    return sum * inv;
}

double loss_mask(const Image& opacity, const Image& mask, Image* grad_opacity) {
    require_same_shape(opacity, mask, "loss_mask");
    if (grad_opacity) *grad_opacity = Image(opacity.width(), opacity.height(), opacity.channels());
    const double inv = 1.0 / static_cast<double>(opacity.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < opacity.size(); ++i) {
        const double o_raw = opacity.data()[i];
        const double o = std::clamp(o_raw, 1e-6, 1.0 - 1e-6);
        const double m = mask.data()[i];
        sum += -m * std::log(o) - (1.0 - m) * std::log(1.0 - o);
        if (!grad_opacity) continue;
        // The clamp zeroes the gradient outside its range.
        if (o_raw > 1e-6 && o_raw < 1.0 - 1e-6)
            grad_opacity->data()[i] = inv * (-m / o + (1.0 - m) / (1.0 - o));
    }
    return sum * inv;
}

double loss_incident(const Image& transport, const Image& visibility, const Image& mask,
                     Image* grad_transport) {
    if (transport.channels() != 3) throw InputError("loss_incident: transport must be RGB");
    if (visibility.empty())
        throw InputError(
            "loss_incident: no traced visibility map; run the trace-visibility pass first");
    if (visibility.width() != transport.width() || visibility.height() != transport.height())
        throw InputError("loss_incident: visibility resolution mismatch");
    if (mask.width() != transport.width() || mask.height() != transport.height())
        throw InputError("loss_incident: mask resolution mismatch");
    const int w = transport.width(), h = transport.height();
    if (grad_transport) *grad_transport = Image(w, h, 3);

    int count = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (mask.at(x, y, 0) > 0.5) ++count;
    if (count == 0) return 0.0;
    const double inv = 1.0 / (3.0 * count);

    double sum = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (mask.at(x, y, 0) <= 0.5) continue;
            const double v = visibility.at(x, y, 0);
            for (int c = 0; c < 3; ++c) {
                const double d = transport.at(x, y, c) - v;
                sum += std::abs(d);
                if (grad_transport)
                    grad_transport->at(x, y, c) = inv * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
            }
        }
    }
    return sum * inv;
}

}  // namespace splatir
