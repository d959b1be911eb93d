// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "splatir/camera.hpp"
#include "splatir/image.hpp"
#include "splatir/scene.hpp"

namespace splatir {

/// One calibrated illumination condition and the photograph captured under it.
/// Images are stored linear in memory regardless of the on-disk encoding.
struct LightImage {
    DirectionalLight light;
    Image image;  // width x height x 3, linear radiance in [0, 1]
};

/// One posed view: camera, foreground mask, the per-light image stack, and
/// optional normal maps. Normal maps are camera-frame unit vectors decoded to
/// [-1, 1] per channel; `guidance_normals` holds the (possibly noisy) prior
/// used by the normal regularizer, `gt_normals` the reference normals that
/// synthetic scenes provide for evaluation. Either may be empty.
struct View {
    Camera camera;
    Image mask;  // width x height x 1 in [0, 1]
    Image guidance_normals;
    Image gt_normals;
    std::vector<LightImage> lights;
};

/// A multi-view photometric-stereo capture.
///
/// On-disk layout under a root directory:
///   cameras.json              intrinsics / world_to_cam / width / height per
///                             view, plus "srgb_encoded" and optional
///                             "train_views" / "test_views" split arrays
///   lights.json               {"views": [[{"direction", "intensity"}, ...]]}
///   view_NNN/light_MMM.png    16-bit RGB, linear (or sRGB when flagged)
///   view_NNN/mask.png         8-bit gray
///   view_NNN/normal_ups.png   optional 16-bit RGB, (n + 1) / 2 encoded
///   view_NNN/normal_gt.png    optional, same encoding
struct MVPSDataset {
    std::vector<View> views;
    bool srgb_encoded = false;  // on-disk PNG transfer curve; memory is linear
    std::vector<int> train_views;  // empty means "no manifest split"
    std::vector<int> test_views;
};

/// Reads a dataset from `root`. Malformed inputs (missing files, resolution
/// mismatches, non-unit light directions, negative intensities, truncated
/// manifests) raise InputError naming the offending file or index.
MVPSDataset load_dataset(const std::filesystem::path& root);

/// Writes the canonical layout. Values already on the quantization lattice
/// (everything produced by load_dataset or generate_synthetic) round-trip
/// bit-exactly; poses round-trip exactly through shortest-form JSON doubles.
void save_dataset(const MVPSDataset& dataset, const std::filesystem::path& root);

/// Per-pixel mean of a view's light stack in linear space. Summation happens
/// in value-sorted order per pixel, so any permutation of the light list
/// produces the bit-identical image. Throws InputError on an empty stack.
Image light_average(const View& view);

/// Train/test view indices: the manifest split when present, otherwise a
/// deterministic 80/20 rule (every fifth view index, starting at 4, is a test
/// view; if that leaves no test view the last view is used).
void resolve_split(const MVPSDataset& dataset, std::vector<int>& train_out,
                   std::vector<int>& test_out);

enum class SyntheticKind {
    Sphere,     // analytic sphere, closed-form normals / depth / shading
    PlanePair,  // ground plane plus a floating plate casting an exact shadow
    SplatList,  // renders a caller-supplied splat scene with the full pipeline
};

/// Recipe for a synthetic capture with exact ground truth.
struct SyntheticSpec {
    SyntheticKind kind = SyntheticKind::Sphere;
    int view_count = 8;
    int light_count = 8;
    int resolution = 64;
    std::uint64_t seed = 7;

    // Guidance normals are the ground truth rotated per pixel by an angle
    // drawn from N(0, sigma) around a random tangent axis; 0 disables noise.
    double guidance_noise_deg = 0.0;

    // Uniform material of the analytic surfaces.
    Vec3 albedo = Vec3(0.75, 0.45, 0.30);
    double metallic = 0.0;
    double roughness = 0.6;
    // Scales the specular lobe of the analytic shading; 0 gives a pure
    // Lambertian reference.
    double specular_scale = 1.0;

    // Sphere: radius, centered at the origin, cameras orbit at `orbit_radius`.
    double sphere_radius = 1.0;
    double orbit_radius = 3.2;

    // PlanePair: receiver square |x|,|y| <= receiver_half at z = 0 (normal
    // +z), occluder plate at z = plate_z spanning [plate_min, plate_max].
    double receiver_half = 1.2;
    double plate_z = 0.6;
    Vec2 plate_min = Vec2(-0.7, -0.45);
    Vec2 plate_max = Vec2(-0.1, 0.45);

    // SplatList: the scene to render.
    SplatScene scene;
};

/// Camera and per-view light rig used by generate_synthetic, exposed so tests
/// and evaluation can reproduce the exact geometry. Lights tilt around the
/// view axis; a single-light rig points exactly along it.
Camera synthetic_camera(const SyntheticSpec& spec, int view_index);
std::vector<DirectionalLight> synthetic_lights(const SyntheticSpec& spec, int view_index);

/// First analytic surface hit along origin + t * dir (Sphere / PlanePair
/// kinds). Returns false for a miss; otherwise fills the world position and
/// outward unit normal.
bool synthetic_trace(const SyntheticSpec& spec, const Vec3& origin, const Vec3& dir,
                     Vec3* position_out, Vec3* normal_out);

/// Hard analytic shadow test at a surface point: 1 when the path toward the
/// light is clear, 0 when the plate occludes it. Spheres are convex, so there
/// the cosine clamp already covers self-shadowing and this returns 1.
double synthetic_visibility(const SyntheticSpec& spec, const Vec3& position, const Vec3& omega_i);

/// Mask of foreground pixels whose analytic surface point is shadowed under
/// `light` (width x height x 1, values 0 or 1). Used by the shadow-recovery
/// ablation to score albedo error inside the shadow region.
Image synthetic_shadow_mask(const SyntheticSpec& spec, const Camera& camera,
                            const DirectionalLight& light);

/// Analytic radiance for one view under one light, on the 16-bit lattice.
Image synthetic_render(const SyntheticSpec& spec, const Camera& camera,
                       const DirectionalLight& light);

/// Splat approximation of the spec's sphere: `count` surfels on a Fibonacci
/// lattice, oriented tangent to the surface, sized to overlap their
/// neighbors, carrying the spec's uniform material. Used to check the
/// rasterize + shade path against the closed-form image.
SplatScene make_sphere_splats(const SyntheticSpec& spec, int count);

/// Builds the capture in memory: analytic renders (or full-pipeline renders
/// for SplatList), masks, ground-truth and noise-perturbed guidance normals.
/// All pixel data is pre-quantized to the on-disk lattice so a save / load
/// round trip is bit-exact.
MVPSDataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace splatir
