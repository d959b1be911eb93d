// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#include "splatir/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "splatir/brdf.hpp"
#include "splatir/image_io.hpp"
#include "splatir/raster.hpp"
#include "splatir/raytracer.hpp"
#include "splatir/rng.hpp"
#include "splatir/shading.hpp"

namespace splatir {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string view_dir_name(int view) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "view_%03d", view);
    return buf;
}

std::string light_file_name(int light) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "light_%03d.png", light);
    return buf;
}

json parse_json_file(const fs::path& path) {
    if (!fs::exists(path)) throw InputError("dataset manifest not found: " + path.string());
    std::ifstream in(path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

json mat_to_json(const double* data, int rows, int cols) {
    json arr = json::array();
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) arr.push_back(data[r * cols + c]);  // row-major on disk
    return arr;
}

void mat_from_json(const json& arr, const std::string& what, double* out, int rows, int cols) {
    if (!arr.is_array() || static_cast<int>(arr.size()) != rows * cols)
        throw InputError(what + ": expected a flat array of " + std::to_string(rows * cols) +
                         " numbers");
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out[r * cols + c] = arr[r * cols + c].get<double>();
}

Vec3 vec3_from_json(const json& arr, const std::string& what) {
    if (!arr.is_array() || arr.size() != 3)
        throw InputError(what + ": expected an array of 3 numbers");
    return Vec3(arr[0].get<double>(), arr[1].get<double>(), arr[2].get<double>());
}

void check_shape(const Image& img, const Camera& cam, const std::string& what) {
    if (img.width() != cam.width || img.height() != cam.height)
        throw InputError(what + ": image is " + std::to_string(img.width()) + "x" +
                         std::to_string(img.height()) + ", camera expects " +
                         std::to_string(cam.width) + "x" + std::to_string(cam.height));
}

/// Collapses whatever channel layout a PNG decoded to into `channels`
/// (gray replicates, extra channels such as alpha are dropped).
Image to_channels(const Image& img, int channels) {
    if (img.channels() == channels) return img;
    Image out(img.width(), img.height(), channels);
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < channels; ++c)
                out.at(x, y, c) = img.at(x, y, std::min(c, img.channels() - 1));
    return out;
}

Image decode_normal_map(const fs::path& path, const Camera& cam, const std::string& what) {
    Image enc = to_channels(read_png(path), 3);
    check_shape(enc, cam, what);
    Image out(enc.width(), enc.height(), 3);
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = enc.data()[i] * 2.0 - 1.0;
    return out;
}

void write_normal_map(const fs::path& path, const Image& normals) {
    Image enc(normals.width(), normals.height(), 3);
    for (std::size_t i = 0; i < enc.size(); ++i) enc.data()[i] = (normals.data()[i] + 1.0) * 0.5;
    write_png(path, enc, PngDepth::Bits16);
}

/// Right-handed camera basis looking from `eye` toward `target` (x right,
/// y down, z forward).
Camera look_at_camera(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                      int resolution) {
    const Vec3 z = (target - eye).normalized();
    const Vec3 x = up.cross(z).normalized();
    const Vec3 y = z.cross(x);
    Camera cam;
    cam.width = cam.height = resolution;
    cam.intrinsics = Mat3::Identity();
    cam.intrinsics(0, 0) = cam.intrinsics(1, 1) = focal;
    cam.intrinsics(0, 2) = cam.intrinsics(1, 2) = resolution / 2.0;
    cam.world_to_cam = Mat4::Identity();
    cam.world_to_cam.row(0).head<3>() = x.transpose();
    cam.world_to_cam.row(1).head<3>() = y.transpose();
    cam.world_to_cam.row(2).head<3>() = z.transpose();
    cam.world_to_cam.topRightCorner<3, 1>() = -cam.world_to_cam.topLeftCorner<3, 3>() * eye;
    return cam;
}

Vec3 synthetic_albedo_radiance(const SyntheticSpec& spec, const ShadePoint& pt,
                               const DirectionalLight& light, double visibility) {
    const BRDFSample s = eval_brdf(pt, light.direction);
    const Vec3 f = s.diffuse + spec.specular_scale * s.specular;
    return (light.intensity.array() * f.array()).matrix() * s.cos_i * visibility;
}

/// Per-pixel normal perturbation: rotate by angle ~ N(0, sigma) around a
/// uniformly random axis in the tangent plane. sigma == 0 leaves the input
/// untouched bit for bit (and draws nothing from the stream).
Vec3 perturb_normal(const Vec3& n, double sigma_rad, Rng& rng) {
    if (sigma_rad <= 0.0) return n;
    const Vec3 helper = std::abs(n.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
    const Vec3 e1 = helper.cross(n).normalized();
    const Vec3 e2 = n.cross(e1);
    const double phi = 2.0 * kPi * rng.uniform();
    const double theta = sigma_rad * rng.normal();
    const Vec3 axis = std::cos(phi) * e1 + std::sin(phi) * e2;
    return std::cos(theta) * n + std::sin(theta) * axis.cross(n);
}

std::uint64_t view_seed(std::uint64_t seed, int view) {
    // Distinct stream per view so one view's pixel count cannot shift another's noise.
    return seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(view + 1));
}

void quantize_image(Image& img, int maxv) {
    for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = quantize_unit(img.data()[i], maxv);
}

Image encode_camera_normals(const Image& world_normals, const Camera& cam, const Image& mask) {
    Image out(world_normals.width(), world_normals.height(), 3);
    const Mat3 R = cam.rotation();
    for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) {
            if (mask.at(x, y, 0) <= 0.5) continue;
            const Vec3 n_cam = R * world_normals.rgb(x, y);
            out.set_rgb(x, y, n_cam);
        }
    }
    return out;
}

/// Quantizes a camera-frame normal map in its on-disk encoding.
void quantize_normals(Image& normals) {
    for (std::size_t i = 0; i < normals.size(); ++i) {
        const double enc = quantize_unit((normals.data()[i] + 1.0) * 0.5, 65535);
        normals.data()[i] = enc * 2.0 - 1.0;
    }
}

Image perturb_normal_map(const Image& normals, const Image& mask, double sigma_deg, Rng& rng) {
    Image out = normals;
    if (sigma_deg <= 0.0) return out;
    const double sigma_rad = sigma_deg * kPi / 180.0;
    for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) {
            if (mask.at(x, y, 0) <= 0.5) continue;
            out.set_rgb(x, y, perturb_normal(normals.rgb(x, y), sigma_rad, rng));
        }
    }
    return out;
}

View render_splat_list_view(const SyntheticSpec& spec, const SplatBVH& bvh, int view_index) {
    View view;
    view.camera = synthetic_camera(spec, view_index);
    const GBuffer gb = rasterize(spec.scene, view.camera, RenderMode::Deferred).gbuffer;
    const int w = view.camera.width, h = view.camera.height;

    view.mask = Image(w, h, 1);
    Image world_normals(w, h, 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            view.mask.at(x, y, 0) = gb.opacity.at(x, y, 0);
            if (shade_foreground(gb, x, y)) world_normals.set_rgb(x, y, gb.normal.rgb(x, y));
        }
    }
    quantize_image(view.mask, 255);

    view.gt_normals = encode_camera_normals(world_normals, view.camera, view.mask);
    quantize_normals(view.gt_normals);
    Rng rng(view_seed(spec.seed, view_index));
    view.guidance_normals =
        perturb_normal_map(view.gt_normals, view.mask, spec.guidance_noise_deg, rng);
    quantize_normals(view.guidance_normals);

    for (const DirectionalLight& light : synthetic_lights(spec, view_index)) {
        const Image vis = visibility_map(bvh, gb, view.camera, light);
        Image incident(w, h, 3);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                incident.set_rgb(x, y, vis.at(x, y, 0) * light.intensity);
        Image img = shade_sdl(gb, view.camera, light, incident);
        quantize_image(img, 65535);
        view.lights.push_back({light, std::move(img)});
    }
    return view;
}

View render_analytic_view(const SyntheticSpec& spec, int view_index) {
    View view;
    view.camera = synthetic_camera(spec, view_index);
    const int w = view.camera.width, h = view.camera.height;
    const Vec3 origin = view.camera.position();

    view.mask = Image(w, h, 1);
    Image world_normals(w, h, 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            Vec3 p, n;
            if (!synthetic_trace(spec, origin, view.camera.ray_direction(x + 0.5, y + 0.5), &p, &n))
                continue;
            view.mask.at(x, y, 0) = 1.0;
            world_normals.set_rgb(x, y, n);
        }
    }

    view.gt_normals = encode_camera_normals(world_normals, view.camera, view.mask);
    quantize_normals(view.gt_normals);
    Rng rng(view_seed(spec.seed, view_index));
    view.guidance_normals =
        perturb_normal_map(view.gt_normals, view.mask, spec.guidance_noise_deg, rng);
    quantize_normals(view.guidance_normals);

    for (const DirectionalLight& light : synthetic_lights(spec, view_index))
        view.lights.push_back({light, synthetic_render(spec, view.camera, light)});
    return view;
}

}  // namespace

MVPSDataset load_dataset(const std::filesystem::path& root) {
    if (!fs::is_directory(root)) throw InputError("dataset root not found: " + root.string());
    const json cams = parse_json_file(root / "cameras.json");
    const json lights = parse_json_file(root / "lights.json");
    if (!cams.contains("views") || !cams["views"].is_array())
        throw InputError("cameras.json: missing \"views\" array");
    if (!lights.contains("views") || !lights["views"].is_array())
        throw InputError("lights.json: missing \"views\" array");
    if (cams["views"].size() != lights["views"].size())
        throw InputError("cameras.json lists " + std::to_string(cams["views"].size()) +
                         " views but lights.json lists " + std::to_string(lights["views"].size()));

    MVPSDataset dataset;
    dataset.srgb_encoded = cams.value("srgb_encoded", false);
    if (cams.contains("train_views")) dataset.train_views = cams["train_views"].get<std::vector<int>>();
    if (cams.contains("test_views")) dataset.test_views = cams["test_views"].get<std::vector<int>>();

    const int n_views = static_cast<int>(cams["views"].size());
    for (int v = 0; v < n_views; ++v) {
        const std::string view_tag = "cameras.json view " + std::to_string(v);
        const json& jc = cams["views"][v];
        View view;
        view.camera.width = jc.value("width", 0);
        view.camera.height = jc.value("height", 0);
        if (view.camera.width <= 0 || view.camera.height <= 0)
            throw InputError(view_tag + ": width/height must be positive");
        // Eigen stores column-major; go through a row-major staging buffer.
        double m9[9], m16[16];
        mat_from_json(jc.at("intrinsics"), view_tag + " intrinsics", m9, 3, 3);
        mat_from_json(jc.at("world_to_cam"), view_tag + " world_to_cam", m16, 4, 4);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) view.camera.intrinsics(r, c) = m9[r * 3 + c];
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) view.camera.world_to_cam(r, c) = m16[r * 4 + c];
        try {
            view.camera.validate();
        } catch (const InputError& e) {
            throw InputError(view_tag + ": " + e.what());
        }

        const json& jl = lights["views"][v];
        if (!jl.is_array() || jl.empty())
            throw InputError("lights.json view " + std::to_string(v) + ": no light entries");

        const fs::path dir = root / view_dir_name(v);
        if (!fs::is_directory(dir)) throw InputError("missing view directory: " + dir.string());

        const fs::path mask_path = dir / "mask.png";
        if (!fs::exists(mask_path)) throw InputError("missing mask: " + mask_path.string());
        view.mask = to_channels(read_png(mask_path), 1);
        check_shape(view.mask, view.camera, mask_path.string());

        for (int j = 0; j < static_cast<int>(jl.size()); ++j) {
            const std::string light_tag =
                "lights.json view " + std::to_string(v) + " light " + std::to_string(j);
            LightImage li;
            li.light.direction = vec3_from_json(jl[j].at("direction"), light_tag + " direction");
            li.light.intensity = vec3_from_json(jl[j].at("intensity"), light_tag + " intensity");
            const double norm = li.light.direction.norm();
            if (std::abs(norm - 1.0) > 1e-3) {
                char msg[160];
                std::snprintf(msg, sizeof(msg), "%s: direction norm %.6f is not unit length",
                              light_tag.c_str(), norm);
                throw InputError(msg);
            }
            if ((li.light.intensity.array() < 0).any())
                throw InputError(light_tag + ": negative intensity");

            const fs::path img_path = dir / light_file_name(j);
            if (!fs::exists(img_path)) throw InputError("missing image: " + img_path.string());
            li.image = to_channels(read_png(img_path), 3);
            check_shape(li.image, view.camera, img_path.string());
            if (dataset.srgb_encoded)
                for (std::size_t i = 0; i < li.image.size(); ++i)
                    li.image.data()[i] = srgb_decode(li.image.data()[i]);
            view.lights.push_back(std::move(li));
        }

        const fs::path ups_path = dir / "normal_ups.png";
        if (fs::exists(ups_path))
            view.guidance_normals = decode_normal_map(ups_path, view.camera, ups_path.string());
        const fs::path gt_path = dir / "normal_gt.png";
        if (fs::exists(gt_path))
            view.gt_normals = decode_normal_map(gt_path, view.camera, gt_path.string());

        dataset.views.push_back(std::move(view));
    }
    return dataset;
}

void save_dataset(const MVPSDataset& dataset, const std::filesystem::path& root) {
    fs::create_directories(root);
    json cams, lights;
    cams["format"] = "splatir-dataset";
    cams["srgb_encoded"] = dataset.srgb_encoded;
    if (!dataset.train_views.empty()) cams["train_views"] = dataset.train_views;
    if (!dataset.test_views.empty()) cams["test_views"] = dataset.test_views;
    cams["views"] = json::array();
    lights["views"] = json::array();

    for (int v = 0; v < static_cast<int>(dataset.views.size()); ++v) {
        const View& view = dataset.views[v];
        json jc;
        jc["width"] = view.camera.width;
        jc["height"] = view.camera.height;
        Mat3 K = view.camera.intrinsics;
        Mat4 W = view.camera.world_to_cam;
        double m9[9], m16[16];
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) m9[r * 3 + c] = K(r, c);
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) m16[r * 4 + c] = W(r, c);
        jc["intrinsics"] = mat_to_json(m9, 3, 3);
        jc["world_to_cam"] = mat_to_json(m16, 4, 4);
        cams["views"].push_back(jc);

        json jl = json::array();
        const fs::path dir = root / view_dir_name(v);
        fs::create_directories(dir);
        write_png(dir / "mask.png", view.mask, PngDepth::Bits8);
        if (!view.guidance_normals.empty())
            write_normal_map(dir / "normal_ups.png", view.guidance_normals);
        if (!view.gt_normals.empty()) write_normal_map(dir / "normal_gt.png", view.gt_normals);
        for (int j = 0; j < static_cast<int>(view.lights.size()); ++j) {
            const LightImage& li = view.lights[j];
            json e;
            e["direction"] = {li.light.direction.x(), li.light.direction.y(),
                              li.light.direction.z()};
            e["intensity"] = {li.light.intensity.x(), li.light.intensity.y(),
                              li.light.intensity.z()};
            jl.push_back(e);
            write_png(dir / light_file_name(j), li.image, PngDepth::Bits16,
                      dataset.srgb_encoded);
        }
        lights["views"].push_back(jl);
    }

    std::ofstream(root / "cameras.json") << cams.dump(2) << '\n';
    std::ofstream(root / "lights.json") << lights.dump(2) << '\n';
}

Image light_average(const View& view) {
    if (view.lights.empty()) throw InputError("light_average: view has no light images");
    const Image& first = view.lights.front().image;
    Image out(first.width(), first.height(), first.channels());
    std::vector<double> vals(view.lights.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (std::size_t j = 0; j < view.lights.size(); ++j)
            vals[j] = view.lights[j].image.data()[i];
        // Value-sorted accumulation: the mean is bit-identical under any
        // permutation of the light stack.
        std::sort(vals.begin(), vals.end());
        double sum = 0.0;
        for (double v : vals) sum += v;
        out.data()[i] = sum / static_cast<double>(vals.size());
    }
    return out;
}

void resolve_split(const MVPSDataset& dataset, std::vector<int>& train_out,
                   std::vector<int>& test_out) {
    const int n = static_cast<int>(dataset.views.size());
    if (n == 0) throw InputError("resolve_split: dataset has no views");
    train_out.clear();
    test_out.clear();
    if (!dataset.train_views.empty() || !dataset.test_views.empty()) {
        auto in_range = [&](int v) {
            if (v < 0 || v >= n)
                throw InputError("split: view index " + std::to_string(v) + " out of range");
            return v;
        };
        for (int v : dataset.train_views) train_out.push_back(in_range(v));
        for (int v : dataset.test_views) test_out.push_back(in_range(v));
        if (train_out.empty())
            for (int v = 0; v < n; ++v)
                if (std::find(test_out.begin(), test_out.end(), v) == test_out.end())
                    train_out.push_back(v);
        if (test_out.empty())
            for (int v = 0; v < n; ++v)
                if (std::find(train_out.begin(), train_out.end(), v) == train_out.end())
                    test_out.push_back(v);
        return;
    }
    if (n == 1) {  // degenerate capture: reuse the single view for both roles
        train_out = {0};
        test_out = {0};
        return;
    }
    for (int v = 0; v < n; ++v)
        (v % 5 == 4 ? test_out : train_out).push_back(v);
    if (test_out.empty()) {
        test_out.push_back(n - 1);
        train_out.pop_back();
    }
}

Camera synthetic_camera(const SyntheticSpec& spec, int view_index) {
    if (spec.resolution <= 0) throw InputError("synthetic_camera: resolution must be positive");
    if (view_index < 0 || view_index >= spec.view_count)
        throw InputError("synthetic_camera: view index out of range");
    const double az = 2.0 * kPi * view_index / std::max(1, spec.view_count);
    if (spec.kind == SyntheticKind::PlanePair) {
        const Vec3 eye(0.9 * std::cos(az), 0.9 * std::sin(az), 3.1);
        return look_at_camera(eye, Vec3::Zero(), Vec3::UnitY(), 0.8 * spec.resolution,
                              spec.resolution);
    }
    const double el = (view_index % 2 == 0) ? 0.35 : -0.3;
    const Vec3 eye = spec.orbit_radius *
                     Vec3(std::cos(az) * std::cos(el), std::sin(az) * std::cos(el), std::sin(el));
    return look_at_camera(eye, Vec3::Zero(), Vec3::UnitZ(), 1.1 * spec.resolution,
                          spec.resolution);
}

std::vector<DirectionalLight> synthetic_lights(const SyntheticSpec& spec, int view_index) {
    if (spec.light_count <= 0) throw InputError("synthetic_lights: need at least one light");
    const Camera cam = synthetic_camera(spec, view_index);
    const Vec3 base = cam.position().normalized();
    std::vector<DirectionalLight> lights;
    if (spec.light_count == 1) {
        lights.push_back({base, Vec3::Ones()});
        return lights;
    }
    const Vec3 helper = std::abs(base.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
    const Vec3 e1 = helper.cross(base).normalized();
    const Vec3 e2 = base.cross(e1);
    for (int j = 0; j < spec.light_count; ++j) {
        const double tilt = 0.25 + 0.2 * (j % 2);
        const double phi = 2.0 * kPi * j / spec.light_count + 0.39 * view_index;
        const Vec3 dir =
            (base + tilt * (std::cos(phi) * e1 + std::sin(phi) * e2)).normalized();
        lights.push_back({dir, Vec3::Ones()});
    }
    return lights;
}

bool synthetic_trace(const SyntheticSpec& spec, const Vec3& origin, const Vec3& dir,
                     Vec3* position_out, Vec3* normal_out) {
    const Vec3 d = dir.normalized();
    if (spec.kind == SyntheticKind::Sphere) {
        const double b = origin.dot(d);
        const double c = origin.squaredNorm() - spec.sphere_radius * spec.sphere_radius;
        const double disc = b * b - c;
        if (disc < 0.0) return false;
        const double sq = std::sqrt(disc);
        double t = -b - sq;
        if (t <= 1e-9) t = -b + sq;
        if (t <= 1e-9) return false;
        const Vec3 p = origin + t * d;
        if (position_out) *position_out = p;
        if (normal_out) *normal_out = p / spec.sphere_radius;
        return true;
    }
    if (spec.kind == SyntheticKind::PlanePair) {
        if (std::abs(d.z()) < 1e-12) return false;
        double best_t = -1.0;
        const double t_plate = (spec.plate_z - origin.z()) / d.z();
        if (t_plate > 1e-9) {
            const Vec3 q = origin + t_plate * d;
            if (q.x() >= spec.plate_min.x() && q.x() <= spec.plate_max.x() &&
                q.y() >= spec.plate_min.y() && q.y() <= spec.plate_max.y())
                best_t = t_plate;
        }
        const double t_floor = (0.0 - origin.z()) / d.z();
        if (t_floor > 1e-9 && (best_t < 0.0 || t_floor < best_t)) {
            const Vec3 q = origin + t_floor * d;
            if (std::abs(q.x()) <= spec.receiver_half && std::abs(q.y()) <= spec.receiver_half)
                best_t = t_floor;
        }
        if (best_t < 0.0) return false;
        if (position_out) *position_out = origin + best_t * d;
        if (normal_out) *normal_out = Vec3::UnitZ();
        return true;
    }
    throw ContractError("synthetic_trace: no analytic surface for SplatList scenes");
}

double synthetic_visibility(const SyntheticSpec& spec, const Vec3& position,
                            const Vec3& omega_i) {
    if (spec.kind != SyntheticKind::PlanePair) return 1.0;
    if (position.z() >= spec.plate_z - 1e-9) return 1.0;  // on or above the plate
    if (omega_i.z() <= 1e-12) return 1.0;  // grazing paths never reach the plate plane
    const double t = (spec.plate_z - position.z()) / omega_i.z();
    const Vec3 q = position + t * omega_i;
    const bool blocked = q.x() >= spec.plate_min.x() && q.x() <= spec.plate_max.x() &&
                         q.y() >= spec.plate_min.y() && q.y() <= spec.plate_max.y();
    return blocked ? 0.0 : 1.0;
}

Image synthetic_shadow_mask(const SyntheticSpec& spec, const Camera& camera,
                            const DirectionalLight& light) {
    light.validate();
    Image mask(camera.width, camera.height, 1);
    const Vec3 origin = camera.position();
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            Vec3 p, n;
            if (!synthetic_trace(spec, origin, camera.ray_direction(x + 0.5, y + 0.5), &p, &n))
                continue;
            if (synthetic_visibility(spec, p, light.direction) == 0.0) mask.at(x, y, 0) = 1.0;
        }
    }
    return mask;
}

Image synthetic_render(const SyntheticSpec& spec, const Camera& camera,
                       const DirectionalLight& light) {
    light.validate();
    Image img(camera.width, camera.height, 3);
    const Vec3 origin = camera.position();
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            Vec3 p, n;
            if (!synthetic_trace(spec, origin, camera.ray_direction(x + 0.5, y + 0.5), &p, &n))
                continue;
            ShadePoint pt;
            pt.position = p;
            pt.normal = n;
            pt.omega_o = (origin - p).normalized();
            pt.albedo = spec.albedo;
            pt.metallic = spec.metallic;
            pt.roughness = spec.roughness;
            const double vis = synthetic_visibility(spec, p, light.direction);
            img.set_rgb(x, y, synthetic_albedo_radiance(spec, pt, light, vis));
        }
    }
    quantize_image(img, 65535);
    return img;
}

SplatScene make_sphere_splats(const SyntheticSpec& spec, int count) {
    if (count <= 0) throw InputError("make_sphere_splats: count must be positive");
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    const double spacing = std::sqrt(4.0 * kPi / count) * spec.sphere_radius;
    constexpr double kShDc = 0.28209479177387814;  // degree-0 basis value
    SplatScene scene(count);
    for (int i = 0; i < count; ++i) {
        const double z = 1.0 - 2.0 * (i + 0.5) / count;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden * i;
        const Vec3 n(r * std::cos(phi), r * std::sin(phi), z);
        Gaussian2D g;
        g.position = spec.sphere_radius * n;
        const Vec3 helper = std::abs(n.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
        g.t_u = helper.cross(n).normalized();
        g.t_v = n.cross(g.t_u);
        g.s_u = g.s_v = 0.7 * spacing;
        g.opacity = 0.995;
        g.albedo = spec.albedo;
        g.metallic = spec.metallic;
        g.roughness = spec.roughness;
        g.sh.fill(0.0);
        for (int c = 0; c < 3; ++c) g.sh[c] = (spec.albedo[c] - 0.5) / kShDc;
        deactivate_parameters(g, scene.raw(i));
    }
    return scene;
}

MVPSDataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.view_count <= 0) throw InputError("generate_synthetic: need at least one view");
    MVPSDataset dataset;
    dataset.srgb_encoded = false;
    if (spec.kind == SyntheticKind::SplatList) {
        if (spec.scene.empty())
            throw InputError("generate_synthetic: SplatList spec carries an empty scene");
        const SplatBVH bvh = SplatBVH::build(spec.scene);
        for (int v = 0; v < spec.view_count; ++v)
            dataset.views.push_back(render_splat_list_view(spec, bvh, v));
        return dataset;
    }
    for (int v = 0; v < spec.view_count; ++v)
        dataset.views.push_back(render_analytic_view(spec, v));
    return dataset;
}

}  // namespace splatir
