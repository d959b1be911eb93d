// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
//
// Command-line surface. Verbs: synth, train, render, relight, trace-visibility,
// edit, eval, docs. Every option can also be supplied through an environment
// variable named SPLATIR_<VERB>_<OPTION> (dashes become underscores); `splatir
// docs` regenerates the full flag reference. Errors print a single
// machine-parsable line `splatir: error: <kind>: <message>` and exit 2 for bad
// input or 3 for numeric failures.

#include <CLI11.hpp>
#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "splatir/checkpoint.hpp"
#include "splatir/dataset.hpp"
#include "splatir/edit.hpp"
#include "splatir/eval.hpp"
#include "splatir/image_io.hpp"
#include "splatir/raytracer.hpp"
#include "splatir/trainer.hpp"

namespace {

using namespace splatir;

constexpr const char* kVersion = "splatir 0.1.0";

Vec3 to_vec3(const std::vector<double>& v) { return Vec3(v[0], v[1], v[2]); }

DirectionalLight make_light(const std::vector<double>& dir, const std::vector<double>& intensity) {
    const Vec3 d = to_vec3(dir);
    if (d.norm() < 1e-12) throw InputError("light direction must be nonzero");
    DirectionalLight light;
    light.direction = d.normalized();
    light.intensity = to_vec3(intensity);
    light.validate();
    return light;
}

const View& dataset_view(const MVPSDataset& dataset, int view) {
    if (view < 0 || view >= static_cast<int>(dataset.views.size()))
        throw InputError("view index " + std::to_string(view) + " is out of range (dataset has " +
                         std::to_string(dataset.views.size()) + " views)");
    return dataset.views[static_cast<std::size_t>(view)];
}

// ---------------------------------------------------------------------------
// synth

struct SynthOpts {
    std::string kind = "sphere";
    int views = 8, lights = 8, resolution = 64;
    std::uint64_t seed = 7;
    double guidance_noise_deg = 0.0;
    double specular_scale = 1.0;
    std::vector<double> albedo{0.75, 0.45, 0.30};
    double metallic = 0.0, roughness = 0.6;
    std::string out;
};

void run_synth(const SynthOpts& o) {
    SyntheticSpec spec;
    spec.kind = (o.kind == "sphere") ? SyntheticKind::Sphere : SyntheticKind::PlanePair;
    spec.view_count = o.views;
    spec.light_count = o.lights;
    spec.resolution = o.resolution;
    spec.seed = o.seed;
    spec.guidance_noise_deg = o.guidance_noise_deg;
    spec.specular_scale = o.specular_scale;
    spec.albedo = to_vec3(o.albedo);
    spec.metallic = o.metallic;
    spec.roughness = o.roughness;
    const MVPSDataset dataset = generate_synthetic(spec);
    save_dataset(dataset, o.out);
    std::printf("wrote %s capture: %d views x %d lights at %dx%d -> %s\n", o.kind.c_str(),
                o.views, o.lights, o.resolution, o.resolution, o.out.c_str());
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
    std::string dataset, workdir, config;
    int stage1_iters = 0, stage2_iters = 0, init_splats = 0;
    std::uint64_t seed = 0;
    int threads = 0, metrics_interval = 0, checkpoint_interval = 0;
};

void run_train(const TrainOpts& o, const CLI::App& sub) {
    TrainConfig config;
    if (!o.config.empty()) config = load_train_config(o.config);
    if (sub.count("--stage1-iters")) config.stage1_iterations = o.stage1_iters;
    if (sub.count("--stage2-iters")) config.stage2_iterations = o.stage2_iters;
    if (sub.count("--init-splats")) config.init_splats = o.init_splats;
    if (sub.count("--seed")) config.seed = o.seed;
    if (sub.count("--threads")) config.raster.threads = o.threads;
    if (sub.count("--metrics-interval")) config.metrics_interval = o.metrics_interval;
    if (sub.count("--checkpoint-interval")) config.checkpoint_interval = o.checkpoint_interval;
    const MVPSDataset dataset = load_dataset(o.dataset);
    const TrainArtifacts artifacts = train(dataset, config, o.workdir);
    std::printf("stage 1: %d iterations, final loss %.6g -> %s\n", config.stage1_iterations,
                artifacts.stage1_totals.empty() ? 0.0 : artifacts.stage1_totals.back(),
                artifacts.stage1_path.string().c_str());
    if (config.stage2_iterations > 0)
        std::printf("stage 2: %d iterations, final loss %.6g -> %s\n", config.stage2_iterations,
                    artifacts.stage2_totals.empty() ? 0.0 : artifacts.stage2_totals.back(),
                    artifacts.stage2_path.string().c_str());
    std::printf("metrics: %s\n", artifacts.metrics_path.string().c_str());
}

// ---------------------------------------------------------------------------
// render / relight

struct RenderOpts {
    std::string checkpoint, dataset, out, normals_out;
    int view = 0, light = 0;
    bool srgb = false;
    int bits = 16;
    int threads = 0;
};

PngDepth bits_to_depth(int bits) {
    if (bits == 8) return PngDepth::Bits8;
    if (bits == 16) return PngDepth::Bits16;
    throw InputError("--bits must be 8 or 16");
}

void run_render(const RenderOpts& o) {
    const Checkpoint ckpt = load_checkpoint(o.checkpoint);
    const MVPSDataset dataset = load_dataset(o.dataset);
    const View& view = dataset_view(dataset, o.view);
    RasterConfig raster;
    raster.threads = o.threads;
    Image rendered;
    if (ckpt.has_mlp) {
        if (o.light < 0 || o.light >= static_cast<int>(view.lights.size()))
            throw InputError("light index " + std::to_string(o.light) +
                             " is out of range (view has " +
                             std::to_string(view.lights.size()) + " lights)");
        rendered = render_stage2(ckpt.scene, ckpt.mlp, view.camera,
                                 view.lights[static_cast<std::size_t>(o.light)].light, raster);
    } else {
        rendered = rasterize(ckpt.scene, view.camera, RenderMode::Color, raster).gbuffer.color;
    }
    write_png(o.out, rendered, bits_to_depth(o.bits), o.srgb);
    std::printf("wrote %s\n", o.out.c_str());
    if (!o.normals_out.empty()) {
        const RenderResult fw = rasterize(ckpt.scene, view.camera, RenderMode::Deferred, raster);
        Image encoded(fw.gbuffer.normal.width(), fw.gbuffer.normal.height(), 3);
        for (std::size_t i = 0; i < encoded.size(); ++i)
            encoded.data()[i] = 0.5 * (fw.gbuffer.normal.data()[i] + 1.0);
        write_png(o.normals_out, encoded, PngDepth::Bits16, false);
        std::printf("wrote %s\n", o.normals_out.c_str());
    }
}

struct RelightOpts {
    std::string checkpoint, dataset, out;
    int view = 0;
    std::vector<double> light_dir;
    std::vector<double> intensity{1.0, 1.0, 1.0};
    std::string shadows = "learned";
    bool srgb = false;
    int bits = 16;
    int threads = 0;
};

void run_relight(const RelightOpts& o) {
    const Checkpoint ckpt = load_checkpoint(o.checkpoint);
    const MVPSDataset dataset = load_dataset(o.dataset);
    const View& view = dataset_view(dataset, o.view);
    RasterConfig raster;
    raster.threads = o.threads;
    const DirectionalLight light = make_light(o.light_dir, o.intensity);
    const ShadowMode mode =
        (o.shadows == "traced") ? ShadowMode::Traced : ShadowMode::Learned;
    const Image rendered = relight(ckpt, view.camera, light, mode, raster);
    write_png(o.out, rendered, bits_to_depth(o.bits), o.srgb);
    std::printf("wrote %s\n", o.out.c_str());
}

// ---------------------------------------------------------------------------
// trace-visibility

struct TraceOpts {
    std::string checkpoint, dataset, out;
    std::string split = "train";
    int threads = 0;
};

void run_trace(const TraceOpts& o) {
    const Checkpoint ckpt = load_checkpoint(o.checkpoint);
    const MVPSDataset dataset = load_dataset(o.dataset);
    std::vector<int> train_idx, test_idx, selected;
    resolve_split(dataset, train_idx, test_idx);
    if (o.split == "train") {
        selected = train_idx;
    } else if (o.split == "test") {
        selected = test_idx;
    } else {
        selected = train_idx;
        selected.insert(selected.end(), test_idx.begin(), test_idx.end());
        std::sort(selected.begin(), selected.end());
    }
    RasterConfig raster;
    raster.threads = o.threads;
    const SplatBVH bvh = SplatBVH::build(ckpt.scene);
    VisibilityCache cache(o.out, bvh.geometry_hash());
    int traced = 0;
    for (int v : selected) {
        const View& view = dataset.views[static_cast<std::size_t>(v)];
        const RenderResult fw = rasterize(ckpt.scene, view.camera, RenderMode::Deferred, raster);
        for (std::size_t l = 0; l < view.lights.size(); ++l) {
            cache.load_or_trace(v, static_cast<int>(l), bvh, fw.gbuffer, view.camera,
                                view.lights[l].light);
            ++traced;
        }
    }
    std::printf("traced %d visibility maps (%s views) -> %s\n", traced, o.split.c_str(),
                o.out.c_str());
}

// ---------------------------------------------------------------------------
// edit

struct EditOpts {
    std::string in, out;
    std::vector<double> sphere, box;
    std::vector<double> set_albedo;
    double set_metallic = 0.0, set_roughness = 0.0, scale_specular = 1.0;
    bool remove = false;
};

void run_edit(const EditOpts& o, const CLI::App& sub) {
    Checkpoint ckpt = load_checkpoint(o.in);
    if (!ckpt.has_mlp)
        throw InputError(
            "edit: stage-1 checkpoint has no trained material parameters; train stage 2 first");
    Region region;
    if (!o.sphere.empty()) {
        region.kind = Region::Kind::Sphere;
        region.center = Vec3(o.sphere[0], o.sphere[1], o.sphere[2]);
        region.radius = o.sphere[3];
        if (region.radius < 0) throw InputError("edit: --sphere radius must be nonnegative");
    } else if (!o.box.empty()) {
        region.kind = Region::Kind::Box;
        region.lo = Vec3(o.box[0], o.box[1], o.box[2]);
        region.hi = Vec3(o.box[3], o.box[4], o.box[5]);
        if ((region.lo.array() > region.hi.array()).any())
            throw InputError("edit: --box corners must satisfy lo <= hi per axis");
    }
    const bool has_set = sub.count("--set-albedo") || sub.count("--set-metallic") ||
                         sub.count("--set-roughness");
    const bool has_scale = sub.count("--scale-specular") != 0;
    if (!has_set && !has_scale && !o.remove)
        throw InputError(
            "edit: nothing to do; give --set-albedo/--set-metallic/--set-roughness, "
            "--scale-specular, or --remove");
    if (o.remove && region.kind == Region::Kind::All)
        throw InputError("edit: --remove needs a --sphere or --box region");

    std::size_t touched = 0;
    if (has_set) {
        std::optional<Vec3> albedo;
        if (sub.count("--set-albedo")) albedo = to_vec3(o.set_albedo);
        std::optional<double> metallic, roughness;
        if (sub.count("--set-metallic")) metallic = o.set_metallic;
        if (sub.count("--set-roughness")) roughness = o.set_roughness;
        touched = std::max(touched,
                           edit_set_material(ckpt.scene, region, albedo, metallic, roughness));
    }
    if (has_scale)
        touched = std::max(touched, edit_scale_specular(ckpt.scene, region, o.scale_specular));
    if (o.remove) touched = std::max(touched, edit_remove_region(ckpt.scene, region));
    if (touched == 0)
        std::fprintf(stderr,
                     "splatir: warning: edit selection matched no splats; checkpoint copied "
                     "unchanged\n");
    save_checkpoint(o.out, ckpt);
    std::printf("edited %zu splats -> %s (%zu remain)\n", touched, o.out.c_str(),
                ckpt.scene.size());
}

// ---------------------------------------------------------------------------
// eval

struct EvalOpts {
    std::string checkpoint, dataset, json_out;
    bool include_train = false;
    int threads = 0;
};

void run_eval(const EvalOpts& o) {
    const Checkpoint ckpt = load_checkpoint(o.checkpoint);
    const MVPSDataset dataset = load_dataset(o.dataset);
    EvalOptions options;
    options.include_train = o.include_train;
    options.raster.threads = o.threads;
    const EvalReport report = evaluate_checkpoint(ckpt, dataset, options);
    std::fputs(report.to_table().c_str(), stdout);
    if (!o.json_out.empty()) {
        const std::string json = report.to_json();
        FILE* f = std::fopen(o.json_out.c_str(), "wb");
        if (!f) throw InputError("eval: cannot open " + o.json_out + " for writing");
        std::fwrite(json.data(), 1, json.size(), f);
        std::fclose(f);
        std::printf("report: %s\n", o.json_out.c_str());
    }
}

// ---------------------------------------------------------------------------
// docs

std::string option_row(const CLI::Option* opt) {
    std::string name = opt->get_name();
    std::string row = "| `" + name + "` | ";
    row += opt->get_required() ? "required" : "optional";
    const std::string def = opt->get_default_str();
    if (!def.empty()) row += ", default `" + def + "`";
    row += " | ";
    if (!opt->get_envname().empty()) row += "`" + opt->get_envname() + "`";
    row += " | " + opt->get_description() + " |\n";
    return row;
}

std::string generate_docs(const CLI::App& app) {
    std::string md = "# splatir command reference\n\n";
    md += "Generated by `splatir docs`; do not edit by hand. ";
    md += "Every option may also be set through the listed environment variable; ";
    md += "command-line flags win over the environment.\n";
    for (const CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; })) {
        md += "\n## splatir " + sub->get_name() + "\n\n" + sub->get_description() + "\n\n";
        md += "| option | requirement | environment | description |\n";
        md += "| --- | --- | --- | --- |\n";
        for (const CLI::Option* opt : sub->get_options()) {
            if (opt->get_name() == "--help") continue;
            md += option_row(opt);
        }
    }
    return md;
}

/// SPLATIR_<VERB>_<OPTION> fallback for every option of every verb.
void attach_env_names(CLI::App& app) {
    for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; })) {
        std::string verb = sub->get_name();
        for (CLI::Option* opt : sub->get_options()) {
            std::string lname = opt->get_lnames().empty() ? "" : opt->get_lnames()[0];
            if (lname.empty() || lname == "help") continue;
            std::string env = "SPLATIR_" + verb + "_" + lname;
            for (char& c : env) {
                c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
                if (c == '-') c = '_';
            }
            opt->envname(env);
        }
    }
}

std::string single_line(std::string msg) {
    std::replace(msg.begin(), msg.end(), '\n', ';');
    return msg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"splatir: differentiable 2D Gaussian surfel renderer for "
                 "multi-view photometric stereo"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    SynthOpts synth;
    CLI::App* synth_cmd =
        app.add_subcommand("synth", "Generate a synthetic capture with exact ground truth");
    synth_cmd->add_option("--kind", synth.kind, "Scene family")
        ->check(CLI::IsMember({"sphere", "plane-pair"}))
        ->capture_default_str();
    synth_cmd->add_option("--views", synth.views, "Number of views")->capture_default_str();
    synth_cmd->add_option("--lights", synth.lights, "Lights per view")->capture_default_str();
    synth_cmd->add_option("--resolution", synth.resolution, "Image side in pixels")
        ->capture_default_str();
    synth_cmd->add_option("--seed", synth.seed, "Light-rig / noise seed")->capture_default_str();
    synth_cmd
        ->add_option("--guidance-noise-deg", synth.guidance_noise_deg,
                     "Stddev of the angular noise on guidance normals")
        ->capture_default_str();
    synth_cmd
        ->add_option("--specular-scale", synth.specular_scale,
                     "Specular lobe scale; 0 gives a pure Lambertian capture")
        ->capture_default_str();
    synth_cmd->add_option("--albedo", synth.albedo, "Uniform albedo (three values)")
        ->expected(3);
    synth_cmd->add_option("--metallic", synth.metallic, "Uniform metallic")
        ->capture_default_str();
    synth_cmd->add_option("--roughness", synth.roughness, "Uniform roughness")
        ->capture_default_str();
    synth_cmd->add_option("--out", synth.out, "Output dataset directory")->required();
    synth_cmd->callback([&] { run_synth(synth); });

    TrainOpts traino;
    CLI::App* train_cmd = app.add_subcommand("train", "Run the two-stage optimization");
    train_cmd->add_option("--dataset", traino.dataset, "Dataset directory")->required();
    train_cmd->add_option("--workdir", traino.workdir, "Checkpoint / metrics directory")
        ->required();
    train_cmd->add_option("--config", traino.config, "JSON training config (README: schema)");
    train_cmd->add_option("--stage1-iters", traino.stage1_iters, "Override stage-1 iterations");
    train_cmd->add_option("--stage2-iters", traino.stage2_iters, "Override stage-2 iterations");
    train_cmd->add_option("--init-splats", traino.init_splats, "Override initial splat count");
    train_cmd->add_option("--seed", traino.seed, "Override the training seed");
    train_cmd->add_option("--threads", traino.threads, "Rasterizer threads (0 = OpenMP default)");
    train_cmd->add_option("--metrics-interval", traino.metrics_interval, "CSV row cadence");
    train_cmd->add_option("--checkpoint-interval", traino.checkpoint_interval,
                          "Extra periodic checkpoints (0 = final only)");
    train_cmd->callback([&] { run_train(traino, *train_cmd); });

    RenderOpts render;
    CLI::App* render_cmd =
        app.add_subcommand("render", "Render a dataset view from a checkpoint");
    render_cmd->add_option("--checkpoint", render.checkpoint, "Checkpoint file")->required();
    render_cmd->add_option("--dataset", render.dataset, "Dataset directory (camera source)")
        ->required();
    render_cmd->add_option("--view", render.view, "View index")->capture_default_str();
    render_cmd
        ->add_option("--light", render.light,
                     "Light index within the view (stage-2 checkpoints)")
        ->capture_default_str();
    render_cmd->add_option("--out", render.out, "Output PNG")->required();
    render_cmd->add_option("--normals", render.normals_out,
                           "Also write the rendered normal map here");
    render_cmd->add_flag("--srgb", render.srgb, "Encode with the sRGB transfer curve");
    render_cmd->add_option("--bits", render.bits, "PNG bit depth (8 or 16)")
        ->capture_default_str();
    render_cmd->add_option("--threads", render.threads, "Rasterizer threads");
    render_cmd->callback([&] { run_render(render); });

    RelightOpts relighto;
    CLI::App* relight_cmd =
        app.add_subcommand("relight", "Render under a novel directional light");
    relight_cmd->add_option("--checkpoint", relighto.checkpoint, "Stage-2 checkpoint file")
        ->required();
    relight_cmd->add_option("--dataset", relighto.dataset, "Dataset directory (camera source)")
        ->required();
    relight_cmd->add_option("--view", relighto.view, "View index")->capture_default_str();
    relight_cmd
        ->add_option("--light-dir", relighto.light_dir,
                     "Light direction x y z (surface toward light; normalized internally)")
        ->expected(3)
        ->required();
    relight_cmd->add_option("--intensity", relighto.intensity, "Light intensity r g b")
        ->expected(3);
    relight_cmd
        ->add_option("--shadows", relighto.shadows,
                     "learned: network transport; traced: ray-traced visibility")
        ->check(CLI::IsMember({"learned", "traced"}))
        ->capture_default_str();
    relight_cmd->add_option("--out", relighto.out, "Output PNG")->required();
    relight_cmd->add_flag("--srgb", relighto.srgb, "Encode with the sRGB transfer curve");
    relight_cmd->add_option("--bits", relighto.bits, "PNG bit depth (8 or 16)")
        ->capture_default_str();
    relight_cmd->add_option("--threads", relighto.threads, "Rasterizer threads");
    relight_cmd->callback([&] { run_relight(relighto); });

    TraceOpts trace;
    CLI::App* trace_cmd = app.add_subcommand(
        "trace-visibility", "Ray-trace per-light visibility maps into a cache directory");
    trace_cmd->add_option("--checkpoint", trace.checkpoint, "Checkpoint file")->required();
    trace_cmd->add_option("--dataset", trace.dataset, "Dataset directory")->required();
    trace_cmd->add_option("--out", trace.out, "Cache directory")->required();
    trace_cmd->add_option("--split", trace.split, "Views to trace")
        ->check(CLI::IsMember({"train", "test", "all"}))
        ->capture_default_str();
    trace_cmd->add_option("--threads", trace.threads, "Rasterizer threads");
    trace_cmd->callback([&] { run_trace(trace); });

    EditOpts edit;
    CLI::App* edit_cmd =
        app.add_subcommand("edit", "Rewrite materials or delete splats in a checkpoint");
    edit_cmd->add_option("--in", edit.in, "Input checkpoint")->required();
    edit_cmd->add_option("--out", edit.out, "Output checkpoint")->required();
    CLI::Option* sphere_opt =
        edit_cmd->add_option("--sphere", edit.sphere, "Selection sphere: cx cy cz radius")
            ->expected(4);
    CLI::Option* box_opt =
        edit_cmd->add_option("--box", edit.box, "Selection box: x0 y0 z0 x1 y1 z1")->expected(6);
    sphere_opt->excludes(box_opt);
    edit_cmd->add_option("--set-albedo", edit.set_albedo, "Replace albedo with r g b")
        ->expected(3);
    edit_cmd->add_option("--set-metallic", edit.set_metallic, "Replace metallic");
    edit_cmd->add_option("--set-roughness", edit.set_roughness, "Replace roughness");
    edit_cmd->add_option("--scale-specular", edit.scale_specular,
                         "Scale the specular contribution (1 = identity)");
    edit_cmd->add_flag("--remove", edit.remove, "Delete the splats inside the region");
    edit_cmd->callback([&] { run_edit(edit, *edit_cmd); });

    EvalOpts evalo;
    CLI::App* eval_cmd =
        app.add_subcommand("eval", "Score a checkpoint on the dataset's held-out views");
    eval_cmd->add_option("--checkpoint", evalo.checkpoint, "Checkpoint file")->required();
    eval_cmd->add_option("--dataset", evalo.dataset, "Dataset directory")->required();
    eval_cmd->add_option("--json", evalo.json_out, "Also write the report as JSON here");
    eval_cmd->add_flag("--include-train", evalo.include_train,
                       "Evaluate all views, not just the held-out split");
    eval_cmd->add_option("--threads", evalo.threads, "Rasterizer threads");
    eval_cmd->callback([&] { run_eval(evalo); });

    std::string docs_out = "-";
    CLI::App* docs_cmd =
        app.add_subcommand("docs", "Write the generated command reference (markdown)");
    docs_cmd->add_option("--out", docs_out, "Output file, or - for stdout")
        ->capture_default_str();
    docs_cmd->callback([&] {
        const std::string md = generate_docs(app);
        if (docs_out == "-") {
            std::fputs(md.c_str(), stdout);
            return;
        }
        FILE* f = std::fopen(docs_out.c_str(), "wb");
        if (!f) throw InputError("docs: cannot open " + docs_out + " for writing");
        std::fwrite(md.data(), 1, md.size(), f);
        std::fclose(f);
        std::printf("wrote %s\n", docs_out.c_str());
    });

    attach_env_names(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
        std::fprintf(stderr, "splatir: error: usage: %s\n", single_line(e.what()).c_str());
        return 2;
    } catch (const InputError& e) {
        std::fprintf(stderr, "splatir: error: input: %s\n", single_line(e.what()).c_str());
        return 2;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "splatir: error: numeric: %s\n", single_line(e.what()).c_str());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "splatir: error: internal: %s\n", single_line(e.what()).c_str());
        return 3;
    }
    return 0;
}
