// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#include "splatir/raster.hpp"

#include <omp.h>

#include <numeric>

#include "raster_detail.hpp"

namespace splatir {

using detail::BackwardAccum;
using detail::LocalHit;
using detail::SplatView;

std::optional<RaySplatHit> intersect(const Gaussian2D& g, const Camera& camera, const Vec2& pixel,
                                     const RasterConfig& config) {
    SplatView sv;
    sv.g = g;
    sv.a = g.s_u * g.t_u;
    sv.b = g.s_v * g.t_v;
    const Vec3 origin = camera.position();
    const Vec3 dir = camera.ray_direction(pixel.x(), pixel.y());
    double u = 0.0, v = 0.0, s = 0.0;
    if (!detail::solve_plane(sv, origin, dir, u, v, s)) return std::nullopt;
    if (s <= config.near_plane) return std::nullopt;
    const double w = std::exp(-0.5 * (u * u + v * v));
    if (w < config.gaussian_cutoff) return std::nullopt;
    return RaySplatHit{u, v, s, w};
}

namespace {

constexpr int kTile = 16;

struct TileGrid {
    int tx = 0, ty = 0;
    std::vector<std::vector<std::int32_t>> splats;  // candidate splats per tile, ascending
};

TileGrid build_tiles(const std::vector<SplatView>& views, const Camera& cam,
                     const RasterConfig& cfg) {
    TileGrid grid;
    grid.tx = (cam.width + kTile - 1) / kTile;
    grid.ty = (cam.height + kTile - 1) / kTile;
    grid.splats.resize(static_cast<std::size_t>(grid.tx) * grid.ty);
    for (std::size_t i = 0; i < views.size(); ++i) {
        const detail::PixelBBox box = detail::splat_pixel_bbox(views[i], cam, cfg);
        if (box.empty()) continue;
        const int tx0 = box.x0 / kTile, tx1 = (box.x1 - 1) / kTile;
        const int ty0 = box.y0 / kTile, ty1 = (box.y1 - 1) / kTile;
        for (int ty = ty0; ty <= ty1; ++ty)
            for (int tx = tx0; tx <= tx1; ++tx)
                grid.splats[static_cast<std::size_t>(ty) * grid.tx + tx].push_back(
                    static_cast<std::int32_t>(i));
    }
    return grid;
}

int clamp_threads(int requested) {
    if (requested <= 0) return omp_get_max_threads();
    return requested;
}

}  // namespace

RenderResult rasterize(const SplatScene& scene, const Camera& camera, RenderMode mode,
                       const RasterConfig& config) {
    camera.validate();
    const int w = camera.width, h = camera.height;
    RenderResult res;
    res.mode = mode;
    res.config = config;
    res.gbuffer = detail::make_gbuffer(w, h, mode);
    res.pixel_offsets.assign(static_cast<std::size_t>(w) * h + 1, 0);
    res.has_cache = true;
    if (scene.empty() || w == 0 || h == 0) return res;

    const std::vector<SplatView> views = detail::build_splat_views(scene, camera, mode, config);
    const TileGrid grid = build_tiles(views, camera, config);
    const int tiles = grid.tx * grid.ty;
    const Vec3 origin = camera.position();

    // Per-tile hit buffers; pixels are independent so the forward pass is
    // bit-identical for any thread count.
    std::vector<std::vector<HitRecord>> tile_hits(static_cast<std::size_t>(tiles));
    std::vector<int> counts(static_cast<std::size_t>(w) * h, 0);

    const int nthreads = clamp_threads(config.threads);
#pragma omp parallel num_threads(nthreads)
    {
        std::vector<LocalHit> hits;
        double num[detail::kChannels];
#pragma omp for schedule(static)
        for (int t = 0; t < tiles; ++t) {
            const auto& cand = grid.splats[static_cast<std::size_t>(t)];
            if (cand.empty()) continue;
            const int px0 = (t % grid.tx) * kTile, py0 = (t / grid.tx) * kTile;
            const int px1 = std::min(px0 + kTile, w), py1 = std::min(py0 + kTile, h);
            auto& out = tile_hits[static_cast<std::size_t>(t)];
            for (int y = py0; y < py1; ++y) {
                for (int x = px0; x < px1; ++x) {
                    const double pcx = x + 0.5, pcy = y + 0.5;
                    const Vec3 dir = camera.ray_direction(pcx, pcy);
                    hits.clear();
                    LocalHit hit;
                    for (std::int32_t idx : cand) {
                        if (detail::test_pixel_splat(views[static_cast<std::size_t>(idx)], idx,
                                                     origin, dir, pcx, pcy, config, hit))
                            hits.push_back(hit);
                    }
                    detail::sort_hits(hits);
                    double O = 0.0;
                    const int blended = detail::blend_pixel(hits, views, config, num, O);
                    detail::write_pixel(res.gbuffer, x, y, mode, config, num, O);
                    counts[static_cast<std::size_t>(y) * w + x] = blended;
                    for (int j = 0; j < blended; ++j) {
                        const LocalHit& lh = hits[static_cast<std::size_t>(j)];
                        out.push_back(HitRecord{lh.splat, static_cast<float>(lh.u),
                                                static_cast<float>(lh.v), lh.z, lh.alpha,
                                                lh.screen_branch, lh.plane_valid});
                    }
                }
            }
        }
    }

    // Compact per-tile buffers into the row-major pixel cache.
    for (std::size_t p = 0; p < counts.size(); ++p)
        res.pixel_offsets[p + 1] = res.pixel_offsets[p] + counts[p];
    res.hits.resize(static_cast<std::size_t>(res.pixel_offsets.back()));
    std::vector<std::int64_t> tile_cursor(static_cast<std::size_t>(tiles), 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int t = (y / kTile) * grid.tx + (x / kTile);
            const int n = counts[static_cast<std::size_t>(y) * w + x];
            if (n == 0) continue;
            auto& cursor = tile_cursor[static_cast<std::size_t>(t)];
            std::copy_n(tile_hits[static_cast<std::size_t>(t)].begin() + cursor, n,
                        res.hits.begin() + res.pixel_offsets[static_cast<std::size_t>(y) * w + x]);
            cursor += n;
        }
    }
    return res;
}

std::vector<double> rasterize_backward(const SplatScene& scene, const Camera& camera,
                                       const RenderResult& forward, const GBufferGrads& upstream) {
    if (!forward.has_cache)
        throw ContractError("rasterize_backward: forward result has no hit cache");
    const RasterConfig& cfg = forward.config;
    const int w = camera.width, h = camera.height;
    const std::size_t n = scene.size();
    if (n == 0) return {};

    const std::vector<SplatView> views =
        detail::build_splat_views(scene, camera, forward.mode, cfg);
    const int nthreads = clamp_threads(cfg.threads);
    const int tx = (w + kTile - 1) / kTile, ty = (h + kTile - 1) / kTile;
    const int tiles = tx * ty;

    std::vector<BackwardAccum> partial;
    partial.reserve(static_cast<std::size_t>(nthreads));
    for (int t = 0; t < nthreads; ++t) partial.emplace_back(n);

    // Deterministic mode pins tiles to threads with a static schedule and merges
    // the per-thread buffers in thread order, so gradients are bit-identical run
    // to run for a fixed thread count. Non-deterministic mode lets tiles land on
    // whichever thread is free, which reorders the floating-point accumulation.
#pragma omp parallel num_threads(nthreads)
    {
        BackwardAccum& acc = partial[static_cast<std::size_t>(omp_get_thread_num())];
        auto run_tile = [&](int t) {
            const int px0 = (t % tx) * kTile, py0 = (t / tx) * kTile;
            const int px1 = std::min(px0 + kTile, w), py1 = std::min(py0 + kTile, h);
            for (int y = py0; y < py1; ++y) {
                for (int x = px0; x < px1; ++x) {
                    const std::size_t p = static_cast<std::size_t>(y) * w + x;
                    const std::int64_t o0 = forward.pixel_offsets[p];
                    const int count = static_cast<int>(forward.pixel_offsets[p + 1] - o0);
                    detail::pixel_backward(x, y, forward.hits.data() + o0, count, views, camera,
                                           cfg, forward.mode, upstream, acc);
                }
            }
        };
        if (cfg.deterministic) {
#pragma omp for schedule(static)
            for (int t = 0; t < tiles; ++t) run_tile(t);
        } else {
#pragma omp for schedule(dynamic)
            for (int t = 0; t < tiles; ++t) run_tile(t);
        }
    }

    BackwardAccum& total = partial[0];
    for (int t = 1; t < nthreads; ++t) total.add(partial[static_cast<std::size_t>(t)]);
    return detail::finalize_grads(scene, views, camera, forward.mode, total);
}

}  // namespace splatir
