// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#include "splatir/shading.hpp"

#include <omp.h>

namespace splatir {

bool shade_foreground(const GBuffer& gb, int x, int y, const ShadeConfig& cfg) {
    return gb.opacity.at(x, y, 0) > cfg.opacity_threshold &&
           gb.depth.at(x, y, 0) > cfg.min_depth && gb.normal.rgb(x, y).squaredNorm() > 0.25;
}

namespace {

ShadePoint make_point(const GBuffer& gb, const Camera& cam, int x, int y) {
    ShadePoint p;
    p.position = cam.unproject(x + 0.5, y + 0.5, gb.depth.at(x, y, 0));
    p.normal = gb.normal.rgb(x, y);  // unit by construction of the raster
    p.omega_o = (cam.position() - p.position).normalized();
    p.albedo = gb.albedo.rgb(x, y);
    p.metallic = gb.metallic.at(x, y, 0);
    p.roughness = gb.roughness.at(x, y, 0);
    return p;
}

void check_inputs(const GBuffer& gb, const Camera& cam, const Image& incident) {
    if (gb.albedo.empty())
        throw ContractError("shade_sdl: G-buffer lacks material maps (render in Deferred mode)");
    if (incident.width() != cam.width || incident.height() != cam.height ||
        incident.channels() != 3)
        throw ContractError("shade_sdl: incident map resolution mismatch");
}

}  // namespace

Image shade_sdl(const GBuffer& gb, const Camera& cam, const DirectionalLight& light,
                const Image& incident, const ShadeConfig& cfg) {
    check_inputs(gb, cam, incident);
    light.validate();
    const int w = cam.width, h = cam.height;
    Image out(w, h, 3);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!shade_foreground(gb, x, y, cfg)) continue;
            const ShadePoint p = make_point(gb, cam, x, y);
            const BRDFSample s = eval_brdf(p, light.direction);
            const Vec3 L =
                incident.rgb(x, y).cwiseProduct((s.diffuse + s.specular) * s.cos_i);
            out.set_rgb(x, y, L);
        }
    }
    return out;
}

ShadeGrads shade_sdl_backward(const GBuffer& gb, const Camera& cam, const DirectionalLight& light,
                              const Image& incident, const Image& upstream,
                              const ShadeConfig& cfg) {
    check_inputs(gb, cam, incident);
    if (!upstream.same_shape(incident))
        throw ContractError("shade_sdl_backward: upstream shape mismatch");
    const int w = cam.width, h = cam.height;
    ShadeGrads g;
    g.gbuffer.albedo = Image(w, h, 3);
    g.gbuffer.metallic = Image(w, h, 1);
    g.gbuffer.roughness = Image(w, h, 1);
    g.gbuffer.normal = Image(w, h, 3);
    g.incident = Image(w, h, 3);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!shade_foreground(gb, x, y, cfg)) continue;
            const ShadePoint p = make_point(gb, cam, x, y);
            const BRDFSample s = eval_brdf(p, light.direction);
            const Vec3 up = upstream.rgb(x, y);
            const Vec3 Lin = incident.rgb(x, y);

            // L = Lin * (f_d + f_s) * cos: product rule per channel.
            g.incident.set_rgb(x, y, up.cwiseProduct((s.diffuse + s.specular) * s.cos_i));
            const Vec3 up_f = up.cwiseProduct(Lin) * s.cos_i;  // through f_d and f_s alike
            const double up_cos = up.cwiseProduct(Lin).dot(s.diffuse + s.specular);
            const BRDFGrads bg =
                eval_brdf_backward(p, light.direction, up_f, up_f, up_cos);
            g.gbuffer.albedo.set_rgb(x, y, bg.d_albedo);
            g.gbuffer.metallic.at(x, y, 0) = bg.d_metallic;
            g.gbuffer.roughness.at(x, y, 0) = bg.d_roughness;
            g.gbuffer.normal.set_rgb(x, y, bg.d_normal);
            // omega_o is fixed by the pixel ray direction, so its gradient
            // stops here by construction (unproject scales depth along the ray).
        }
    }
    return g;
}

Image shade_multi_light(const GBuffer& gb, const Camera& cam,
                        const std::vector<DirectionalLight>& lights, const ShadeConfig& cfg) {
    if (lights.empty()) throw InputError("shade_multi_light: empty light list");
    Image sum(cam.width, cam.height, 3);
    Image incident(cam.width, cam.height, 3);
    for (const DirectionalLight& light : lights) {
        for (int y = 0; y < cam.height; ++y)
            for (int x = 0; x < cam.width; ++x) incident.set_rgb(x, y, light.intensity);
        const Image one = shade_sdl(gb, cam, light, incident, cfg);
        for (std::size_t i = 0; i < sum.size(); ++i) sum.data()[i] += one.data()[i];
    }
    return sum;
}

Image unproject_map(const GBuffer& gb, const Camera& cam, const ShadeConfig& cfg) {
    const int w = cam.width, h = cam.height;
    Image out(w, h, 3);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double d = gb.depth.at(x, y, 0);
            if (gb.opacity.at(x, y, 0) <= cfg.opacity_threshold || d <= cfg.min_depth) continue;
            out.set_rgb(x, y, cam.unproject(x + 0.5, y + 0.5, d));
        }
    }
    return out;
}

}  // namespace splatir
