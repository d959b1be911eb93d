// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#include "splatir/raytracer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <omp.h>

#include "raster_detail.hpp"
#include "splatir/image_io.hpp"

namespace splatir {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string hex_string(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

struct TraceHit {
    double t = 0.0;
    double alpha = 0.0;
    std::int32_t splat = 0;
};

/// Ray-splat test shared by the BVH and brute-force paths: reuses the
/// rasterizer's plane solve, keeps hits past the exclusion distance whose
/// tangent-plane radius is inside the footprint.
inline void test_splat(const Gaussian2D& g, std::int32_t idx, const Vec3& origin, const Vec3& dir,
                       double exclude_radius, double sigma, std::vector<TraceHit>& out) {
    double u = 0.0, v = 0.0, s = 0.0;
    if (!detail::solve_plane(g.s_u * g.t_u, g.s_v * g.t_v, g.position, origin, dir, u, v,
                                    s))
        return;
    if (s <= exclude_radius) return;
    const double r2 = u * u + v * v;
    if (r2 > sigma * sigma) return;
    out.push_back({s, g.opacity * std::exp(-0.5 * r2), idx});
}

/// Sorted front-to-back product of (1 - alpha) with the early exit. Shared so
/// both traversals agree bit for bit.
inline double accumulate(std::vector<TraceHit>& hits, double min_transmittance) {
    std::sort(hits.begin(), hits.end(), [](const TraceHit& a, const TraceHit& b) {
        return a.t != b.t ? a.t < b.t : a.splat < b.splat;
    });
    double v = 1.0;
    for (const TraceHit& h : hits) {
        v *= 1.0 - h.alpha;
        if (v < min_transmittance) break;
    }
    return v;
}

inline bool ray_hits_box(const Vec3& lo, const Vec3& hi, const Vec3& origin, const Vec3& dir,
                         double t_min) {
    double t0 = t_min, t1 = kInf;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(dir[a]) < 1e-18) {
            if (origin[a] < lo[a] || origin[a] > hi[a]) return false;
            continue;
        }
        double ta = (lo[a] - origin[a]) / dir[a];
        double tb = (hi[a] - origin[a]) / dir[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) return false;
    }
    return true;
}

}  // namespace

void splat_aabb(const Gaussian2D& g, double sigma, Vec3& lo, Vec3& hi) {
    const Vec3 a = g.s_u * g.t_u;
    const Vec3 b = g.s_v * g.t_v;
    // Per-axis support of the sigma-scaled ellipse p + sigma (a cos + b sin).
    Vec3 ext;
    for (int i = 0; i < 3; ++i) ext[i] = sigma * std::sqrt(a[i] * a[i] + b[i] * b[i]);
    // A whisker of padding so boundary hits can't be lost to rounding in the
    // box test.
    ext += Vec3::Constant(1e-9) + 1e-12 * g.position.cwiseAbs();
    lo = g.position - ext;
    hi = g.position + ext;
}

SplatBVH SplatBVH::build(const SplatScene& scene, const TracerConfig& cfg) {
    if (scene.empty()) throw InputError("SplatBVH::build: empty scene");
    SplatBVH bvh;
    bvh.sigma_ = cfg.footprint_sigma;
    bvh.geometry_hash_ =
        fnv1a64(scene.raw_block().data(), scene.raw_block().size() * sizeof(double));

    const std::size_t n = scene.size();
    bvh.splats_.reserve(n);
    std::vector<Vec3> lo(n), hi(n);
    std::vector<double> extents;
    extents.reserve(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        bvh.splats_.push_back(activate_parameters(scene.raw(i)));
        splat_aabb(bvh.splats_[i], cfg.footprint_sigma, lo[i], hi[i]);
        extents.push_back(bvh.splats_[i].s_u);
        extents.push_back(bvh.splats_[i].s_v);
    }
    std::sort(extents.begin(), extents.end());
    bvh.median_scale_ = extents[extents.size() / 2];

    bvh.order_.resize(n);
    for (std::size_t i = 0; i < n; ++i) bvh.order_[i] = static_cast<std::int32_t>(i);

    struct Task {
        std::int32_t begin, end, node;
    };
    bvh.nodes_.reserve(2 * n);
    bvh.nodes_.emplace_back();
    std::vector<Task> stack{{0, static_cast<std::int32_t>(n), 0}};
    while (!stack.empty()) {
        const Task task = stack.back();
        stack.pop_back();
        Node& node = bvh.nodes_[task.node];
        node.lo = Vec3::Constant(kInf);
        node.hi = Vec3::Constant(-kInf);
        for (std::int32_t k = task.begin; k < task.end; ++k) {
            node.lo = node.lo.cwiseMin(lo[bvh.order_[k]]);
            node.hi = node.hi.cwiseMax(hi[bvh.order_[k]]);
        }
        if (task.end - task.begin <= cfg.leaf_size) {
            node.begin = task.begin;
            node.end = task.end;
            continue;
        }
        // Median split along the widest centroid axis; index breaks ties so
        // the layout is reproducible.
        Vec3 clo = Vec3::Constant(kInf), chi = Vec3::Constant(-kInf);
        for (std::int32_t k = task.begin; k < task.end; ++k) {
            const Vec3 c = bvh.splats_[bvh.order_[k]].position;
            clo = clo.cwiseMin(c);
            chi = chi.cwiseMax(c);
        }
        int axis = 0;
        (chi - clo).maxCoeff(&axis);
        const std::int32_t mid = (task.begin + task.end) / 2;
        std::nth_element(bvh.order_.begin() + task.begin, bvh.order_.begin() + mid,
                         bvh.order_.begin() + task.end,
                         [&](std::int32_t ia, std::int32_t ib) {
                             const double ca = bvh.splats_[ia].position[axis];
                             const double cb = bvh.splats_[ib].position[axis];
                             return ca != cb ? ca < cb : ia < ib;
                         });
        node.left = static_cast<std::int32_t>(bvh.nodes_.size());
        node.right = node.left + 1;
        bvh.nodes_.emplace_back();
        bvh.nodes_.emplace_back();
        const std::int32_t left = bvh.nodes_[task.node].left;  // emplace may move `node`
        stack.push_back({task.begin, mid, left});
        stack.push_back({mid, task.end, left + 1});
    }
    return bvh;
}

void SplatBVH::collect_candidates(const Vec3& origin, const Vec3& dir, double t_min,
                                  std::vector<std::int32_t>& out) const {
    std::vector<std::int32_t> stack{0};
    while (!stack.empty()) {
        const Node& node = nodes_[stack.back()];
        stack.pop_back();
        if (!ray_hits_box(node.lo, node.hi, origin, dir, t_min)) continue;
        if (node.left < 0) {
            for (std::int32_t k = node.begin; k < node.end; ++k) out.push_back(order_[k]);
        } else {
            stack.push_back(node.left);
            stack.push_back(node.right);
        }
    }
}

double trace_visibility(const SplatBVH& bvh, const Vec3& origin, const Vec3& omega_in,
                        double exclude_radius, const TracerConfig& cfg) {
    std::vector<std::int32_t> candidates;
    bvh.collect_candidates(origin, omega_in, exclude_radius, candidates);
    std::vector<TraceHit> hits;
    hits.reserve(candidates.size());
    for (const std::int32_t idx : candidates)
        test_splat(bvh.splats()[idx], idx, origin, omega_in, exclude_radius,
                   bvh.footprint_sigma(), hits);
    return accumulate(hits, cfg.min_transmittance);
}

double trace_visibility_brute(const std::vector<Gaussian2D>& splats, const Vec3& origin,
                              const Vec3& omega_in, double exclude_radius,
                              const TracerConfig& cfg) {
    std::vector<TraceHit> hits;
    for (std::size_t i = 0; i < splats.size(); ++i)
        test_splat(splats[i], static_cast<std::int32_t>(i), origin, omega_in, exclude_radius,
                   cfg.footprint_sigma, hits);
    return accumulate(hits, cfg.min_transmittance);
}

Image visibility_map(const SplatBVH& bvh, const GBuffer& gb, const Camera& cam,
                     const DirectionalLight& light, const ShadeConfig& shade_cfg,
                     const TracerConfig& cfg) {
    light.validate();
    const int w = cam.width, h = cam.height;
    Image out(w, h, 1, 1.0);
    const double exclude = 3.0 * bvh.median_scale();
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!shade_foreground(gb, x, y, shade_cfg)) continue;
            const Vec3 p = cam.unproject(x + 0.5, y + 0.5, gb.depth.at(x, y, 0));
            const Vec3 n = gb.normal.rgb(x, y).normalized();
            out.at(x, y, 0) = trace_visibility(bvh, p + exclude * n, light.direction, exclude, cfg);
        }
    }
    return out;
}

VisibilityCache::VisibilityCache(std::filesystem::path directory, std::uint64_t geometry_hash)
    : dir_(std::move(directory)), hash_(geometry_hash) {
    namespace fs = std::filesystem;
    fs::create_directories(dir_);
    const fs::path manifest = dir_ / "manifest.json";
    bool stale = true;
    if (fs::exists(manifest)) {
        std::ifstream in(manifest);
        try {
            nlohmann::json j;
            in >> j;
            stale = j.value("geometry_hash", std::string()) != hex_string(hash_);
        } catch (const nlohmann::json::exception&) {
            stale = true;
        }
    }
    if (stale) {
        for (const auto& entry : fs::directory_iterator(dir_)) {
            if (entry.path().extension() == ".fmp") fs::remove(entry.path());
        }
        write_manifest();
    }
}

std::filesystem::path VisibilityCache::map_path(int view, int light) const {
    char name[48];
    std::snprintf(name, sizeof(name), "vis_v%03d_l%03d.fmp", view, light);
    return dir_ / name;
}

void VisibilityCache::write_manifest() const {
    nlohmann::json j;
    j["format"] = "splatir-visibility-cache";
    j["geometry_hash"] = hex_string(hash_);
    const std::filesystem::path tmp = dir_ / "manifest.json.tmp";
    {
        std::ofstream out(tmp);
        out << j.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, dir_ / "manifest.json");
}

bool VisibilityCache::contains(int view, int light) const {
    return std::filesystem::exists(map_path(view, light));
}

Image VisibilityCache::load_or_trace(int view, int light_index, const SplatBVH& bvh,
                                     const GBuffer& gb, const Camera& cam,
                                     const DirectionalLight& light,
                                     const ShadeConfig& shade_cfg, const TracerConfig& cfg) {
    if (bvh.geometry_hash() != hash_)
        throw ContractError("VisibilityCache: BVH geometry does not match the cache fingerprint");
    const std::filesystem::path path = map_path(view, light_index);
    if (std::filesystem::exists(path)) return read_float_map(path);
    const Image vis = visibility_map(bvh, gb, cam, light, shade_cfg, cfg);
    const std::filesystem::path tmp = path.native() + ".tmp";
    write_float_map(tmp, vis);
    std::filesystem::rename(tmp, path);
    // Serve the float32 round trip so hits and misses return identical bits.
    return read_float_map(path);
}

}  // namespace splatir
