// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
//
// Internals shared by the tiled and reference rasterizer paths. Both paths run
// exactly the same per-pixel arithmetic so their outputs match bit for bit;
// they differ only in candidate gathering and loop scheduling.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "splatir/camera.hpp"
#include "splatir/raster.hpp"
#include "splatir/scene.hpp"

namespace splatir::detail {

// Payload channel layout used by the blend and its backward sweep.
inline constexpr int kChColor = 0;     // 3
inline constexpr int kChAlbedo = 3;    // 3
inline constexpr int kChMetallic = 6;  // 1
inline constexpr int kChRoughness = 7; // 1
inline constexpr int kChNormal = 8;    // 3
inline constexpr int kChTangentU = 11; // 3
inline constexpr int kChTangentV = 14; // 3
inline constexpr int kChScale = 17;    // 2
inline constexpr int kChDepth = 19;    // 1, per-hit rather than per-splat
inline constexpr int kChannels = 20;

/// Per-view activated splat data, computed once per forward or backward call.
struct SplatView {
    Gaussian2D g;
    Vec3 a, b;          // s_u * t_u, s_v * t_v
    Vec3 normal;        // camera-facing unit normal
    double flip;        // +1/-1 orientation sign applied to the raw cross product
    Vec3 color;         // SH color toward this camera (Color mode only)
    Vec3 center_cam;    // splat center in camera coordinates
    Vec2 center_px;     // projected center
    bool center_front;  // center is beyond the near plane
};

/// One accepted splat contribution at a pixel before compaction into the cache.
struct LocalHit {
    std::int32_t splat;
    double u, v, z, alpha;
    std::uint8_t screen_branch, plane_valid;
};

inline SplatView make_splat_view(const double* raw, const Camera& cam, RenderMode mode,
                                 double near_plane) {
    SplatView sv;
    sv.g = activate_parameters(raw);
    sv.a = sv.g.s_u * sv.g.t_u;
    sv.b = sv.g.s_v * sv.g.t_v;
    const Vec3 cam_pos = cam.position();
    const SplatNormalResult nr = splat_normal(sv.g, cam_pos);
    sv.normal = nr.normal;
    sv.flip = nr.flipped ? -1.0 : 1.0;
    if (mode == RenderMode::Color) {
        Vec3 dir = sv.g.position - cam_pos;
        const double len = dir.norm();
        dir = len > 0.0 ? Vec3(dir / len) : Vec3(0.0, 0.0, 1.0);
        sv.color = sh_color(sv.g.sh, dir);
    } else {
        sv.color = Vec3::Zero();
    }
    sv.center_cam = cam.to_camera(sv.g.position);
    sv.center_front = sv.center_cam.z() > near_plane;
    if (sv.center_cam.z() > 0.0) {
        sv.center_px.x() = cam.fx() * sv.center_cam.x() / sv.center_cam.z() + cam.cx();
        sv.center_px.y() = cam.fy() * sv.center_cam.y() / sv.center_cam.z() + cam.cy();
    } else {
        sv.center_px.setZero();
    }
    return sv;
}

inline std::vector<SplatView> build_splat_views(const SplatScene& scene, const Camera& cam,
                                                RenderMode mode, const RasterConfig& cfg) {
    std::vector<SplatView> views(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        views[i] = make_splat_view(scene.raw(i), cam, mode, cfg.near_plane);
    }
    return views;
}

/// Tangent-plane intersection via Cramer's rule on [a  b  -d] (u,v,s)^T = o - p.
/// Returns false when the ray is near-parallel to the splat plane.
inline bool solve_plane(const Vec3& a, const Vec3& b, const Vec3& position, const Vec3& origin,
                        const Vec3& dir, double& u, double& v, double& s) {
    const Vec3 c2 = -dir;
    const Vec3 rhs = origin - position;
    const Vec3 bxc = b.cross(c2);
    const double det = a.dot(bxc);
    if (std::abs(det) < 1e-12) return false;
    u = rhs.dot(bxc) / det;
    v = a.dot(rhs.cross(c2)) / det;
    s = a.dot(b.cross(rhs)) / det;
    return true;
}

inline bool solve_plane(const SplatView& sv, const Vec3& origin, const Vec3& dir, double& u,
                        double& v, double& s) {
    return solve_plane(sv.a, sv.b, sv.g.position, origin, dir, u, v, s);
}

/// Full per-pixel acceptance test: tangent-plane weight, screen-space low-pass
/// weight, branch selection, cutoff, and depth source.
inline bool test_pixel_splat(const SplatView& sv, std::int32_t idx, const Vec3& origin,
                             const Vec3& dir, double pcx, double pcy, const RasterConfig& cfg,
                             LocalHit& out) {
    double u = 0.0, v = 0.0, s = 0.0, g_uv = 0.0;
    bool plane_valid = solve_plane(sv, origin, dir, u, v, s);
    plane_valid = plane_valid && s > cfg.near_plane;
    if (plane_valid) g_uv = std::exp(-0.5 * (u * u + v * v));

    double g_px = 0.0;
    if (cfg.lowpass_sigma_px > 0.0 && sv.center_front) {
        const double dx = pcx - sv.center_px.x();
        const double dy = pcy - sv.center_px.y();
        g_px = std::exp(-(dx * dx + dy * dy) /
                        (2.0 * cfg.lowpass_sigma_px * cfg.lowpass_sigma_px));
    }

    const bool screen_branch = g_px > g_uv;
    const double weight = screen_branch ? g_px : g_uv;
    if (weight < cfg.gaussian_cutoff) return false;

    out.splat = idx;
    out.u = u;
    out.v = v;
    out.z = plane_valid ? s : sv.center_cam.z();
    out.alpha = sv.g.opacity * weight;
    out.screen_branch = screen_branch ? 1 : 0;
    out.plane_valid = plane_valid ? 1 : 0;
    return true;
}

inline void sort_hits(std::vector<LocalHit>& hits) {
    std::sort(hits.begin(), hits.end(), [](const LocalHit& l, const LocalHit& r) {
        if (l.z != r.z) return l.z < r.z;
        return l.splat < r.splat;
    });
}

/// Front-to-back alpha blend over sorted hits. Returns the number of blended
/// hits (the prefix kept in the cache) and fills the payload numerators.
inline int blend_pixel(const std::vector<LocalHit>& hits, const std::vector<SplatView>& views,
                       const RasterConfig& cfg, double* numerators, double& opacity_out) {
    std::fill(numerators, numerators + kChannels, 0.0);
    double T = 1.0;
    double O = 0.0;
    int blended = 0;
    for (const LocalHit& h : hits) {
        if (T < cfg.transmittance_min) break;
        const SplatView& sv = views[static_cast<std::size_t>(h.splat)];
        const double w = h.alpha * T;
        const double* c = sv.color.data();
        numerators[kChColor + 0] += w * c[0];
        numerators[kChColor + 1] += w * c[1];
        numerators[kChColor + 2] += w * c[2];
        numerators[kChAlbedo + 0] += w * sv.g.albedo.x();
        numerators[kChAlbedo + 1] += w * sv.g.albedo.y();
        numerators[kChAlbedo + 2] += w * sv.g.albedo.z();
        numerators[kChMetallic] += w * sv.g.metallic;
        numerators[kChRoughness] += w * sv.g.roughness;
        numerators[kChNormal + 0] += w * sv.normal.x();
        numerators[kChNormal + 1] += w * sv.normal.y();
        numerators[kChNormal + 2] += w * sv.normal.z();
        numerators[kChTangentU + 0] += w * sv.g.t_u.x();
        numerators[kChTangentU + 1] += w * sv.g.t_u.y();
        numerators[kChTangentU + 2] += w * sv.g.t_u.z();
        numerators[kChTangentV + 0] += w * sv.g.t_v.x();
        numerators[kChTangentV + 1] += w * sv.g.t_v.y();
        numerators[kChTangentV + 2] += w * sv.g.t_v.z();
        numerators[kChScale + 0] += w * sv.g.s_u;
        numerators[kChScale + 1] += w * sv.g.s_v;
        numerators[kChDepth] += w * h.z;
        O += w;
        T *= 1.0 - h.alpha;
        ++blended;
    }
    opacity_out = O;
    return blended;
}

/// Writes one pixel of the G-buffer from blended numerators.
inline void write_pixel(GBuffer& gb, int x, int y, RenderMode mode, const RasterConfig& cfg,
                        const double* num, double O) {
    gb.opacity.at(x, y, 0) = O;
    const double inv_o = O > 0.0 ? 1.0 / O : 0.0;
    gb.depth.at(x, y, 0) = cfg.normalize_depth ? num[kChDepth] * inv_o : num[kChDepth];
    const Vec3 n_num(num[kChNormal], num[kChNormal + 1], num[kChNormal + 2]);
    const double n_len = n_num.norm();
    gb.normal.set_rgb(x, y, n_len > 1e-12 ? Vec3(n_num / n_len) : Vec3::Zero());
    if (mode == RenderMode::Color) {
        gb.color.set_rgb(x, y, Vec3(num[kChColor], num[kChColor + 1], num[kChColor + 2]));
    } else {
        const double fs = cfg.normalize_features ? inv_o : 1.0;
        gb.albedo.set_rgb(
            x, y, Vec3(num[kChAlbedo] * fs, num[kChAlbedo + 1] * fs, num[kChAlbedo + 2] * fs));
        gb.metallic.at(x, y, 0) = num[kChMetallic] * fs;
        gb.roughness.at(x, y, 0) = num[kChRoughness] * fs;
        gb.tangent_u.set_rgb(
            x, y, Vec3(num[kChTangentU] * fs, num[kChTangentU + 1] * fs, num[kChTangentU + 2] * fs));
        gb.tangent_v.set_rgb(
            x, y, Vec3(num[kChTangentV] * fs, num[kChTangentV + 1] * fs, num[kChTangentV + 2] * fs));
        gb.scale.at(x, y, 0) = num[kChScale] * fs;
        gb.scale.at(x, y, 1) = num[kChScale + 1] * fs;
    }
}

inline GBuffer make_gbuffer(int w, int h, RenderMode mode) {
    GBuffer gb;
    gb.normal = Image(w, h, 3);
    gb.depth = Image(w, h, 1);
    gb.opacity = Image(w, h, 1);
    if (mode == RenderMode::Color) {
        gb.color = Image(w, h, 3);
    } else {
        gb.albedo = Image(w, h, 3);
        gb.metallic = Image(w, h, 1);
        gb.roughness = Image(w, h, 1);
        gb.tangent_u = Image(w, h, 3);
        gb.tangent_v = Image(w, h, 3);
        gb.scale = Image(w, h, 2);
    }
    return gb;
}

/// Conservative pixel bounding box of a splat: the projected convex hull of the
/// world-space box enclosing the weight-cutoff ellipse, unioned with the
/// screen-space low-pass footprint around the projected center.
struct PixelBBox {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open
    bool empty() const { return x0 >= x1 || y0 >= y1; }
};

inline PixelBBox splat_pixel_bbox(const SplatView& sv, const Camera& cam,
                                  const RasterConfig& cfg) {
    const double rho = std::sqrt(std::max(0.0, -2.0 * std::log(cfg.gaussian_cutoff)));
    double minx = 0.0, maxx = -1.0, miny = 0.0, maxy = -1.0;
    bool any = false, full = false;

    const Vec3 ext(rho * std::hypot(sv.a.x(), sv.b.x()), rho * std::hypot(sv.a.y(), sv.b.y()),
                   rho * std::hypot(sv.a.z(), sv.b.z()));
    bool all_behind = true, any_behind = false;
    double pminx = 1e300, pmaxx = -1e300, pminy = 1e300, pmaxy = -1e300;
    for (int corner = 0; corner < 8; ++corner) {
        const Vec3 offs((corner & 1) ? ext.x() : -ext.x(), (corner & 2) ? ext.y() : -ext.y(),
                        (corner & 4) ? ext.z() : -ext.z());
        const Vec3 c = cam.to_camera(sv.g.position + offs);
        if (c.z() <= cfg.near_plane) {
            any_behind = true;
            continue;
        }
        all_behind = false;
        pminx = std::min(pminx, cam.fx() * c.x() / c.z() + cam.cx());
        pmaxx = std::max(pmaxx, cam.fx() * c.x() / c.z() + cam.cx());
        pminy = std::min(pminy, cam.fy() * c.y() / c.z() + cam.cy());
        pmaxy = std::max(pmaxy, cam.fy() * c.y() / c.z() + cam.cy());
    }
    if (!all_behind) {
        if (any_behind) {
            full = true;  // straddles the near plane; fall back to the whole image
        } else {
            any = true;
            minx = pminx;
            maxx = pmaxx;
            miny = pminy;
            maxy = pmaxy;
        }
    }

    if (cfg.lowpass_sigma_px > 0.0 && sv.center_front) {
        const double r = rho * cfg.lowpass_sigma_px;
        const double sx0 = sv.center_px.x() - r, sx1 = sv.center_px.x() + r;
        const double sy0 = sv.center_px.y() - r, sy1 = sv.center_px.y() + r;
        if (!any) {
            minx = sx0, maxx = sx1, miny = sy0, maxy = sy1;
            any = true;
        } else {
            minx = std::min(minx, sx0);
            maxx = std::max(maxx, sx1);
            miny = std::min(miny, sy0);
            maxy = std::max(maxy, sy1);
        }
    }

    PixelBBox box;
    if (full) {
        box.x0 = 0, box.y0 = 0, box.x1 = cam.width, box.y1 = cam.height;
        return box;
    }
    if (!any) return box;  // nothing visible
    box.x0 = std::max(0, static_cast<int>(std::floor(minx - 0.5)) - 1);
    box.y0 = std::max(0, static_cast<int>(std::floor(miny - 0.5)) - 1);
    box.x1 = std::min(cam.width, static_cast<int>(std::ceil(maxx + 0.5)) + 1);
    box.y1 = std::min(cam.height, static_cast<int>(std::ceil(maxy + 0.5)) + 1);
    return box;
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

/// Per-call scratch for one thread's share of the backward pass.
struct BackwardAccum {
    std::vector<double> act;       // n * kParamsPerGaussian, activated-space grads
    std::vector<double> color;     // n * 3, grads on the per-view SH color
    std::vector<double> normal;    // n * 3, grads on the camera-facing normal
    std::vector<LocalHit> replay;  // per-pixel scratch
    std::vector<double> trans;     // per-pixel transmittance prefix

    explicit BackwardAccum(std::size_t n)
        : act(n * kParamsPerGaussian, 0.0), color(n * 3, 0.0), normal(n * 3, 0.0) {}

    void add(const BackwardAccum& o) {
        for (std::size_t i = 0; i < act.size(); ++i) act[i] += o.act[i];
        for (std::size_t i = 0; i < color.size(); ++i) color[i] += o.color[i];
        for (std::size_t i = 0; i < normal.size(); ++i) normal[i] += o.normal[i];
    }
};

inline double up_at(const Image& img, int x, int y, int c) {
    return img.empty() ? 0.0 : img.at(x, y, c);
}

/// Backward for one pixel: replays the blend over the cached hit prefix, turns
/// map-space upstream gradients into numerator-space ones, runs the suffix-sum
/// alpha sweep, and routes per-hit alpha/depth gradients through the
/// intersection geometry. Accumulates activated-space splat gradients.
inline void pixel_backward(int x, int y, const HitRecord* hits, int count,
                           const std::vector<SplatView>& views, const Camera& cam,
                           const RasterConfig& cfg, RenderMode mode, const GBufferGrads& up,
                           BackwardAccum& acc) {
    if (count == 0) return;
    const double pcx = x + 0.5, pcy = y + 0.5;
    const Vec3 origin = cam.position();
    const Vec3 dir = cam.ray_direction(pcx, pcy);
    const Mat3 R = cam.rotation();

    // Replay the blend to recover numerators and per-hit transmittances.
    double num[kChannels];
    std::fill(num, num + kChannels, 0.0);
    acc.trans.assign(static_cast<std::size_t>(count), 0.0);
    double T = 1.0, O = 0.0;
    for (int j = 0; j < count; ++j) {
        const HitRecord& h = hits[j];
        const SplatView& sv = views[static_cast<std::size_t>(h.splat)];
        acc.trans[static_cast<std::size_t>(j)] = T;
        const double w = h.alpha * T;
        const double* c = sv.color.data();
        num[kChColor + 0] += w * c[0];
        num[kChColor + 1] += w * c[1];
        num[kChColor + 2] += w * c[2];
        num[kChAlbedo + 0] += w * sv.g.albedo.x();
        num[kChAlbedo + 1] += w * sv.g.albedo.y();
        num[kChAlbedo + 2] += w * sv.g.albedo.z();
        num[kChMetallic] += w * sv.g.metallic;
        num[kChRoughness] += w * sv.g.roughness;
        num[kChNormal + 0] += w * sv.normal.x();
        num[kChNormal + 1] += w * sv.normal.y();
        num[kChNormal + 2] += w * sv.normal.z();
        num[kChTangentU + 0] += w * sv.g.t_u.x();
        num[kChTangentU + 1] += w * sv.g.t_u.y();
        num[kChTangentU + 2] += w * sv.g.t_u.z();
        num[kChTangentV + 0] += w * sv.g.t_v.x();
        num[kChTangentV + 1] += w * sv.g.t_v.y();
        num[kChTangentV + 2] += w * sv.g.t_v.z();
        num[kChScale + 0] += w * sv.g.s_u;
        num[kChScale + 1] += w * sv.g.s_v;
        num[kChDepth] += w * h.z;
        O += w;
        T *= 1.0 - h.alpha;
    }

    // Upstream gradients in numerator space.
    double gnum[kChannels];
    std::fill(gnum, gnum + kChannels, 0.0);
    double g_opacity = up_at(up.opacity, x, y, 0);
    const double inv_o = O > 1e-12 ? 1.0 / O : 0.0;

    if (mode == RenderMode::Color) {
        for (int c = 0; c < 3; ++c) gnum[kChColor + c] = up_at(up.color, x, y, c);
    } else {
        const Image* feats[5] = {&up.albedo, &up.metallic, &up.roughness, &up.tangent_u,
                                 &up.tangent_v};
        const int base[5] = {kChAlbedo, kChMetallic, kChRoughness, kChTangentU, kChTangentV};
        const int nch[5] = {3, 1, 1, 3, 3};
        for (int f = 0; f < 5; ++f) {
            for (int c = 0; c < nch[f]; ++c) {
                const double g = up_at(*feats[f], x, y, c);
                if (cfg.normalize_features) {
                    gnum[base[f] + c] = g * inv_o;
                    g_opacity -= g * num[base[f] + c] * inv_o * inv_o;
                } else {
                    gnum[base[f] + c] = g;
                }
            }
        }
        for (int c = 0; c < 2; ++c) {
            const double g = up_at(up.scale, x, y, c);
            if (cfg.normalize_features) {
                gnum[kChScale + c] = g * inv_o;
                g_opacity -= g * num[kChScale + c] * inv_o * inv_o;
            } else {
                gnum[kChScale + c] = g;
            }
        }
    }
    {
        const double g = up_at(up.depth, x, y, 0);
        if (cfg.normalize_depth) {
            gnum[kChDepth] = g * inv_o;
            g_opacity -= g * num[kChDepth] * inv_o * inv_o;
        } else {
            gnum[kChDepth] = g;
        }
    }
    {
        const Vec3 gn(up_at(up.normal, x, y, 0), up_at(up.normal, x, y, 1),
                      up_at(up.normal, x, y, 2));
        const Vec3 n_num(num[kChNormal], num[kChNormal + 1], num[kChNormal + 2]);
        const double len = n_num.norm();
        if (len > 1e-12) {
            const Vec3 nh = n_num / len;
            const Vec3 g = (gn - nh * nh.dot(gn)) / len;
            gnum[kChNormal + 0] = g.x();
            gnum[kChNormal + 1] = g.y();
            gnum[kChNormal + 2] = g.z();
        }
    }

    bool any_grad = g_opacity != 0.0;
    for (int c = 0; c < kChannels && !any_grad; ++c) any_grad = gnum[c] != 0.0;
    if (!any_grad) return;

    // Back-to-front sweep with suffix sums: d/dalpha_j of each numerator is
    // T_j * y_j - (suffix over later hits) / (1 - alpha_j).
    double suffix[kChannels];
    std::fill(suffix, suffix + kChannels, 0.0);
    double suffix_o = 0.0;
    for (int j = count - 1; j >= 0; --j) {
        const HitRecord& h = hits[j];
        const SplatView& sv = views[static_cast<std::size_t>(h.splat)];
        const double Tj = acc.trans[static_cast<std::size_t>(j)];
        const double w = h.alpha * Tj;

        double y[kChannels];
        const double* c = sv.color.data();
        y[kChColor + 0] = c[0];
        y[kChColor + 1] = c[1];
        y[kChColor + 2] = c[2];
        y[kChAlbedo + 0] = sv.g.albedo.x();
        y[kChAlbedo + 1] = sv.g.albedo.y();
        y[kChAlbedo + 2] = sv.g.albedo.z();
        y[kChMetallic] = sv.g.metallic;
        y[kChRoughness] = sv.g.roughness;
        y[kChNormal + 0] = sv.normal.x();
        y[kChNormal + 1] = sv.normal.y();
        y[kChNormal + 2] = sv.normal.z();
        y[kChTangentU + 0] = sv.g.t_u.x();
        y[kChTangentU + 1] = sv.g.t_u.y();
        y[kChTangentU + 2] = sv.g.t_u.z();
        y[kChTangentV + 0] = sv.g.t_v.x();
        y[kChTangentV + 1] = sv.g.t_v.y();
        y[kChTangentV + 2] = sv.g.t_v.z();
        y[kChScale + 0] = sv.g.s_u;
        y[kChScale + 1] = sv.g.s_v;
        y[kChDepth] = h.z;

        // Gradient w.r.t. alpha_j, guarding the saturated alpha -> 1 case where
        // the suffix is identically zero.
        const double om = 1.0 - h.alpha;
        const double inv_om = std::abs(om) > 1e-12 ? 1.0 / om : 0.0;
        double d_alpha = g_opacity * (Tj - suffix_o * inv_om);
        for (int ch = 0; ch < kChannels; ++ch) {
            d_alpha += gnum[ch] * (Tj * y[ch] - suffix[ch] * inv_om);
        }

        // Per-splat constant payloads: weighted upstream goes straight to the
        // activated attribute (or to the per-view color/normal staging buffers).
        double* act = acc.act.data() + static_cast<std::size_t>(h.splat) * kParamsPerGaussian;
        double* gcol = acc.color.data() + static_cast<std::size_t>(h.splat) * 3;
        double* gnrm = acc.normal.data() + static_cast<std::size_t>(h.splat) * 3;
        for (int ch = 0; ch < 3; ++ch) {
            gcol[ch] += w * gnum[kChColor + ch];
            gnrm[ch] += w * gnum[kChNormal + ch];
            act[param::kAlbedo + ch] += w * gnum[kChAlbedo + ch];
            act[param::kTangentU + ch] += w * gnum[kChTangentU + ch];
            act[param::kTangentV + ch] += w * gnum[kChTangentV + ch];
        }
        act[param::kMetallic] += w * gnum[kChMetallic];
        act[param::kRoughness] += w * gnum[kChRoughness];
        act[param::kLogScale + 0] += w * gnum[kChScale + 0];
        act[param::kLogScale + 1] += w * gnum[kChScale + 1];

        const double g_z = w * gnum[kChDepth];

        // Recover tangent coordinates in full precision (the cache keeps them
        // only as diagnostics) before chaining through the geometry.
        double hu = h.u, hv = h.v, hs = h.z;
        if (h.plane_valid) detail::solve_plane(sv, origin, dir, hu, hv, hs);

        // alpha = opacity * weight, weight = max(G_uv, G_px).
        const double g_uv = std::exp(-0.5 * (hu * hu + hv * hv));
        double g_px = 0.0;
        if (cfg.lowpass_sigma_px > 0.0 && sv.center_front) {
            const double dx = pcx - sv.center_px.x();
            const double dy = pcy - sv.center_px.y();
            g_px = std::exp(-(dx * dx + dy * dy) /
                            (2.0 * cfg.lowpass_sigma_px * cfg.lowpass_sigma_px));
        }
        const double weight = h.screen_branch ? g_px : g_uv;
        act[param::kOpacity] += d_alpha * weight;
        const double g_weight = d_alpha * sv.g.opacity;

        Vec3 grad_p = Vec3::Zero();

        double gu = 0.0, gv = 0.0, gs = 0.0;
        if (!h.screen_branch) {
            gu = -hu * g_uv * g_weight;
            gv = -hv * g_uv * g_weight;
        }
        if (h.plane_valid) {
            gs = g_z;
        } else {
            grad_p += g_z * R.row(2).transpose();  // depth taken at the splat center
        }

        if (h.plane_valid && (gu != 0.0 || gv != 0.0 || gs != 0.0)) {
            // Implicit differentiation of [a b -d] (u,v,s)^T = o - p.
            Mat3 M;
            M.col(0) = sv.a;
            M.col(1) = sv.b;
            M.col(2) = -dir;
            const Vec3 gvec = M.transpose().inverse() * Vec3(gu, gv, gs);
            grad_p += -gvec;
            const Vec3 grad_a = -hu * gvec;
            const Vec3 grad_b = -hv * gvec;
            act[param::kTangentU + 0] += sv.g.s_u * grad_a.x();
            act[param::kTangentU + 1] += sv.g.s_u * grad_a.y();
            act[param::kTangentU + 2] += sv.g.s_u * grad_a.z();
            act[param::kTangentV + 0] += sv.g.s_v * grad_b.x();
            act[param::kTangentV + 1] += sv.g.s_v * grad_b.y();
            act[param::kTangentV + 2] += sv.g.s_v * grad_b.z();
            act[param::kLogScale + 0] += grad_a.dot(sv.g.t_u);
            act[param::kLogScale + 1] += grad_b.dot(sv.g.t_v);
        }

        if (h.screen_branch && g_weight != 0.0 && g_px > 0.0) {
            // Chain through the projected center of the low-pass footprint.
            const double s2 = cfg.lowpass_sigma_px * cfg.lowpass_sigma_px;
            const double gpx_x = g_weight * g_px * (pcx - sv.center_px.x()) / s2;
            const double gpx_y = g_weight * g_px * (pcy - sv.center_px.y()) / s2;
            const double X = sv.center_cam.x(), Y = sv.center_cam.y(), Z = sv.center_cam.z();
            Vec3 g_cam(cam.fx() / Z * gpx_x, cam.fy() / Z * gpx_y,
                       -(cam.fx() * X * gpx_x + cam.fy() * Y * gpx_y) / (Z * Z));
            grad_p += R.transpose() * g_cam;
        }

        act[param::kPosition + 0] += grad_p.x();
        act[param::kPosition + 1] += grad_p.y();
        act[param::kPosition + 2] += grad_p.z();

        for (int ch = 0; ch < kChannels; ++ch) suffix[ch] += w * y[ch];
        suffix_o += w;
    }
}

/// Folds the per-view color and normal gradients into the activated rows and
/// applies the activation chain to produce raw-parameter gradients.
inline std::vector<double> finalize_grads(const SplatScene& scene,
                                          const std::vector<SplatView>& views, const Camera& cam,
                                          RenderMode mode, BackwardAccum& acc) {
    const std::size_t n = scene.size();
    std::vector<double> raw_grads(n * kParamsPerGaussian, 0.0);
    const Vec3 cam_pos = cam.position();
    double basis[kShBasis];
    double dbasis[kShBasis * 3];
    for (std::size_t i = 0; i < n; ++i) {
        double* act = acc.act.data() + i * kParamsPerGaussian;
        const SplatView& sv = views[i];

        // Normal chain: n = flip * cross(t_u, t_v) / |cross|.
        const Vec3 gn(acc.normal[i * 3], acc.normal[i * 3 + 1], acc.normal[i * 3 + 2]);
        if (!gn.isZero()) {
            const Vec3 cr = sv.g.t_u.cross(sv.g.t_v);
            const double len = cr.norm();
            if (len > 1e-12) {
                const Vec3 n0 = cr / len;
                const Vec3 g_cr = (sv.flip / len) * (gn - n0 * n0.dot(gn));
                const Vec3 g_tu = sv.g.t_v.cross(g_cr);
                const Vec3 g_tv = g_cr.cross(sv.g.t_u);
                for (int c = 0; c < 3; ++c) {
                    act[param::kTangentU + c] += g_tu[c];
                    act[param::kTangentV + c] += g_tv[c];
                }
            }
        }

        // Color chain: c = max(0, 0.5 + SH(dir)), dir = (p - cam) / |p - cam|.
        if (mode == RenderMode::Color) {
            const Vec3 gc(acc.color[i * 3], acc.color[i * 3 + 1], acc.color[i * 3 + 2]);
            if (!gc.isZero()) {
                Vec3 d = sv.g.position - cam_pos;
                const double len = d.norm();
                if (len > 1e-12) {
                    const Vec3 dir = d / len;
                    sh_basis(dir, basis, dbasis);
                    Vec3 g_dir = Vec3::Zero();
                    for (int ch = 0; ch < 3; ++ch) {
                        double pre = 0.5;
                        for (int k = 0; k < kShBasis; ++k) pre += sv.g.sh[k * 3 + ch] * basis[k];
                        if (pre <= 0.0 || gc[ch] == 0.0) continue;
                        for (int k = 0; k < kShBasis; ++k) {
                            act[param::kSh + k * 3 + ch] += gc[ch] * basis[k];
                            g_dir += gc[ch] * sv.g.sh[k * 3 + ch] *
                                     Vec3(dbasis[k * 3], dbasis[k * 3 + 1], dbasis[k * 3 + 2]);
                        }
                    }
                    const Vec3 g_p = (g_dir - dir * dir.dot(g_dir)) / len;
                    for (int c = 0; c < 3; ++c) act[param::kPosition + c] += g_p[c];
                }
            }
        }

        activation_backward(scene.raw(i), act, raw_grads.data() + i * kParamsPerGaussian);
    }
    return raw_grads;
}

}  // namespace splatir::detail
