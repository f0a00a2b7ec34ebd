// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

// Command-line driver: orbit, dataset, reconstruct, diffuse and eval.
//
// Every subcommand option can also be given in a JSON config file under a
// section named after the subcommand, with the flag name as key:
//   {"version": "orbitforge-config/1", "seed": 0, "orbit": {"kind": "sine", "k": 21}}
// Flags given on the command line win over config values. The effective
// settings are written next to the outputs.

#include "orbitforge/diffusion.hpp"
#include "orbitforge/image.hpp"
#include "orbitforge/metrics.hpp"
#include "orbitforge/recon.hpp"
#include "orbitforge/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

using namespace orbitforge;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char *kConfigVersion = "orbitforge-config/1";

enum ExitCode { kOk = 0, kUsage = 1, kValidation = 2, kNumerical = 3 };

// Options of one subcommand, addressable by their long flag name so that
// config values can be applied and the effective settings echoed.
class Options {
  public:
    explicit Options(CLI::App *app) : app_(app) {}

    template <class T> CLI::Option *add(const std::string &name, T &value, const std::string &help) {
        CLI::Option *opt = app_->add_option("--" + name, value, help)->capture_default_str();
        entries_.push_back({name, opt, [&value](const json &j) { value = j.get<T>(); },
                            [&value] { return json(value); }});
        return opt;
    }

    CLI::Option *flag(const std::string &name, bool &value, const std::string &help) {
        CLI::Option *opt = app_->add_flag("--" + name, value, help);
        entries_.push_back({name, opt, [&value](const json &j) { value = j.get<bool>(); },
                            [&value] { return json(value); }});
        return opt;
    }

    // Config values for options not set on the command line. Unknown keys
    // are rejected.
    void apply(const json &section) const {
        for (const auto &[key, value] : section.items()) {
            auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry &e) { return e.name == key; });
            if (it == entries_.end()) {
                throw DomainError("unknown config key '" + key + "' for '" + app_->get_name() + "'");
            }
            if (it->option->count() == 0) {
                try {
                    it->set(value);
                } catch (const json::exception &e) {
                    throw DomainError("config key '" + key + "' has the wrong type: " + e.what());
                }
            }
        }
    }

    json effective() const {
        json j = json::object();
        for (const Entry &e : entries_) {
            j[e.name] = e.get();
        }
        return j;
    }

  private:
    struct Entry {
        std::string name;
        CLI::Option *option;
        std::function<void(const json &)> set;
        std::function<json()> get;
    };
    CLI::App *app_;
    std::vector<Entry> entries_;
};

void write_text(const fs::path &path, const std::string &text) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot write " + path.string());
    }
    f << text;
    if (!f) {
        throw IoError("failed writing " + path.string());
    }
}

json read_json(const std::string &path) {
    std::ifstream f(path);
    if (!f) {
        throw IoError("cannot read " + path);
    }
    try {
        return json::parse(f);
    } catch (const json::exception &e) {
        throw IoError("malformed JSON in " + path + ": " + e.what());
    }
}

void write_sidecar(const fs::path &path, const std::string &command, std::uint64_t seed, const json &settings,
                   const json &extra = json::object()) {
    json j{{"version", kConfigVersion}, {"command", command}, {"seed", seed}, {command, settings}};
    for (const auto &[k, v] : extra.items()) {
        j[k] = v;
    }
    write_text(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------- orbit

struct OrbitArgs {
    std::string kind = "static";
    int k = 21;
    double elevation = 0.0;
    double azimuth = 0.0;
    double amplitude = 30.0;
    std::string out = "orbit.txt";
};

int run_orbit(const OrbitArgs &a, const Options &opts, std::uint64_t seed) {
    orbit::Orbit o;
    const orbit::CameraPose cond = orbit::CameraPose::normalized(a.elevation, a.azimuth);
    if (a.kind == "static") {
        o = orbit::static_orbit(a.k, a.elevation, cond.azimuth_deg);
    } else if (a.kind == "sine") {
        o = orbit::sine_elevation_orbit(a.k, cond, a.amplitude);
    } else if (a.kind != "dynamic") {
        throw DomainError("unknown orbit kind '" + a.kind + "'");
    } else {
        Rng rng(derive_seed(seed, "orbit"));
        o = orbit::dynamic_orbit(rng, a.k, cond, {});
    }
    std::ostringstream text;
    orbit::write_orbit(text, o);
    write_text(a.out, text.str());
    write_sidecar(a.out + ".json", "orbit", seed, opts.effective());
    return kOk;
}

// -------------------------------------------------------------- dataset

struct DatasetArgs {
    std::string scene;
    std::string out = "dataset";
    int frames = 84;
    int res = 64;
    int grid = 128;
    int spp = 256;
    int envmap = 0;
    double elevation = 10.0;
    std::string orbit_file;
    double fov = orbit::kDefaultFovDeg;
    double distance = 0.0;
};

int run_dataset(const DatasetArgs &a, const Options &opts, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "scene"));
    const synth::ProceduralScene scene = synth::load_scene(a.scene, rng);
    const orbit::Orbit o = a.orbit_file.empty() ? orbit::static_orbit(a.frames, a.elevation)
                                                : orbit::load_orbit(a.orbit_file);
    synth::DatasetOptions d;
    d.width = a.res;
    d.height = a.res;
    d.grid_resolution = a.grid;
    d.samples_per_ray = a.spp;
    d.fov_deg = a.fov;
    d.distance = a.distance;
    d.seed = derive_seed(seed, "dataset");
    synth::render_dataset(scene, synth::library_envmap(a.envmap), o, d, a.out);
    write_sidecar(fs::path(a.out) / "run.json", "dataset", seed, opts.effective());
    return kOk;
}

// ---------------------------------------------------------- reconstruct

struct ReconArgs {
    std::string manifest;
    std::string out = "recon";
    std::string variant = "white";
    std::string orbit_kind = "sine-30";
    recon::ReconConfig cfg;
    bool no_sds = false;
    bool unmasked_sds = false;
    bool fixed_envmap = false;
    int eval_grid = 128;
    int iou_res = 64;
    int chamfer_samples = 10000;
};

void add_recon_options(Options &o, ReconArgs &a) {
    recon::ReconConfig &c = a.cfg;
    o.add("manifest", a.manifest, "Dataset manifest.json")->required();
    o.add("out", a.out, "Output directory");
    o.add("variant", a.variant, "Background variant to train on: white, random or all");
    o.add("orbit-kind", a.orbit_kind, "Training orbit kind recorded with the run: static, sine-30, sine-50, dynamic");
    o.add("coarse-iters", c.coarse_iters, "Coarse stage iterations");
    o.add("fine-iters", c.fine_iters, "Fine stage iterations");
    o.add("sds-window", c.sds_window, "SDS is applied in this many final fine iterations");
    o.add("lr", c.adam.lr, "Adam learning rate");
    o.add("coarse-res", c.coarse_resolution, "Final coarse grid resolution");
    o.add("coarse-levels", c.coarse_levels, "Coarse resolution levels");
    o.add("fine-res", c.fine_resolution, "Fine grid resolution");
    o.add("coarse-factor", c.coarse_image_factor, "Image downsampling in the coarse stage");
    o.add("fine-factor", c.fine_image_factor, "Image downsampling in the fine stage");
    o.add("coarse-samples", c.coarse_samples, "Samples per ray in the coarse stage");
    o.add("fine-samples", c.fine_samples, "Samples per ray in the fine stage");
    o.add("seen-transmittance", c.seen_transmittance, "Handoff carving threshold");
    o.add("w-mse", c.weights.mse, "Photometric weight");
    o.add("w-mask", c.weights.mask, "Mask weight");
    o.add("w-normal", c.weights.normal, "Normal weight");
    o.add("w-depth", c.weights.depth, "Depth smoothness weight");
    o.add("w-bilateral", c.weights.bilateral, "Bilateral normal smoothness weight");
    o.add("w-albedo", c.weights.albedo, "Albedo smoothness weight");
    o.add("w-illum", c.weights.illum, "Illumination weight");
    o.add("w-sds", c.weights.sds, "SDS weight");
    o.flag("no-sds", a.no_sds, "Photometric-only run without SDS");
    o.flag("unmasked-sds", a.unmasked_sds, "Apply SDS without the visibility mask");
    o.flag("fixed-envmap", a.fixed_envmap, "Keep the initial envmap fixed");
    o.add("eval-grid", a.eval_grid, "Resolution of the ground-truth mesh used for 3D metrics");
    o.add("iou-res", a.iou_res, "Voxel resolution of the 3D IoU");
    o.add("chamfer-samples", a.chamfer_samples, "Surface samples per mesh for Chamfer distance");
}

int run_reconstruct(ReconArgs a, const Options &opts, std::uint64_t seed) {
    const synth::Dataset ds = synth::load_dataset(a.manifest);
    const std::vector<recon::View> views = synth::recon_views(ds, a.variant == "all" ? "" : a.variant);
    if (views.empty()) {
        throw DomainError("no views of variant '" + a.variant + "' in " + a.manifest);
    }
    a.cfg.orbit_kind = recon::parse_orbit_kind(a.orbit_kind);
    a.cfg.masked_sds = !a.unmasked_sds;
    a.cfg.learn_envmap = !a.fixed_envmap;
    a.cfg.seed = derive_seed(seed, "reconstruct");
    if (a.no_sds) {
        a.cfg.weights.sds = 0.0;
    }

    Rng scene_rng(derive_seed(seed, "scene"));
    const synth::ProceduralScene scene = synth::make_scene(ds.scene, scene_rng);
    const render::SceneGrid truth = synth::bake_grid(scene, ds.options.grid_resolution);
    // Oracle guidance: the noise that leads back to the true render.
    recon::TargetGuidance oracle([&](const orbit::Camera &cam) {
        render::RenderOptions o;
        o.samples_per_ray = ds.options.samples_per_ray;
        return render::render(truth, ds.envmap, cam, o).rgb;
    });

    const recon::ReconResult r = recon::reconstruct(views, a.cfg, a.no_sds ? nullptr : &oracle);

    const fs::path out(a.out);
    fs::create_directories(out);
    mesh::save_obj((out / "mesh.obj").string(), r.mesh);
    sg::save_envmap((out / "envmap.txt").string(), r.envmap);
    std::ostringstream losses;
    recon::write_loss_csv(losses, r.losses);
    write_text(out / "losses.csv", losses.str());

    std::vector<metrics::MetricRow> rows;
    const mesh::TriMesh gt = mesh::extract_surface(synth::bake_grid(scene, a.eval_grid), 0.0, true);
    if (!r.mesh.empty()) {
        rows.push_back({"chamfer", "mesh", metrics::chamfer_distance(gt, r.mesh, a.chamfer_samples, seed)});
        rows.push_back({"iou3d", "mesh", metrics::iou_3d(gt, r.mesh, a.iou_res)});
    }
    for (std::size_t i = 0; i < views.size(); ++i) {
        const recon::View &v = views[i];
        render::RenderOptions o;
        o.samples_per_ray = a.cfg.fine_samples;
        o.background = v.background;
        const render::ImageBundle img = render::render(r.grid, r.envmap, v.camera, o);
        const std::string key = "view" + std::to_string(i);
        rows.push_back({"psnr", key, metrics::psnr(img.rgb, v.rgb)});
        rows.push_back({"ssim", key, metrics::ssim(img.rgb, v.rgb, img.width, img.height, 3)});
        rows.push_back({"mse", key, metrics::mse_metric(img.rgb, v.rgb)});
    }
    std::ostringstream m;
    metrics::write_metrics_csv(m, rows);
    write_text(out / "metrics.csv", m.str());
    write_sidecar(out / "run.json", "reconstruct", seed, opts.effective(),
                  {{"chamfer_convention", "symmetric mean nearest distance, halved"},
                   {"lpips", nullptr},
                   {"clip_score", nullptr}});
    return kOk;
}

// -------------------------------------------------------------- diffuse

struct DiffuseArgs {
    std::string mixture;
    std::string out = "samples.csv";
    int n = 100;
    int steps = 50;
    int frames = 21;
    double sigma_max = 80.0;
    double sigma_min = 0.002;
    double rho = 7.0;
    std::string guidance = "constant";
    double w = 1.0;
    double wmin = 1.0;
    double wmax = 2.5;
};

diffusion::GaussianMixture parse_mixture(const json &j) {
    diffusion::GaussianMixture m;
    for (const json &c : j.at("components")) {
        m.components.push_back({c.at("weight").get<double>(), c.at("mean").get<Vector>(), c.at("variance").get<double>()});
    }
    m.validate();
    return m;
}

int run_diffuse(const DiffuseArgs &a, const Options &opts, std::uint64_t seed) {
    const json spec = read_json(a.mixture);
    diffusion::GaussianMixture uncond;
    std::map<diffusion::CondToken, diffusion::GaussianMixture> cond;
    try {
        // Either a bare mixture, or {"unconditional": ..., "conditional": ...}.
        if (spec.contains("unconditional")) {
            uncond = parse_mixture(spec.at("unconditional"));
            cond["cond"] = parse_mixture(spec.at("conditional"));
        } else {
            uncond = parse_mixture(spec);
            cond["cond"] = uncond;
        }
    } catch (const json::exception &e) {
        throw DomainError("malformed mixture in " + a.mixture + ": " + e.what());
    }
    if (a.n < 1 || a.frames < 1) {
        throw DomainError("--n and --frames must be positive");
    }
    const diffusion::GuidanceKind kind = diffusion::parse_guidance_kind(a.guidance);
    diffusion::Guidance g;
    if (kind == diffusion::GuidanceKind::kConstant) {
        g.frame_weights.assign(static_cast<std::size_t>(a.frames), a.w);
    } else {
        g.frame_weights = diffusion::guidance_weights(kind, a.frames, a.wmin, a.wmax);
    }
    const diffusion::MixtureDenoiser denoiser(uncond, cond);
    const diffusion::SigmaSchedule schedule = diffusion::make_sigma_schedule(a.sigma_max, a.sigma_min, a.steps, a.rho);
    const std::size_t dim = uncond.dim() * static_cast<std::size_t>(a.frames);
    Rng rng(derive_seed(seed, "diffuse"));
    std::string text;
    char buf[32];
    for (int s = 0; s < a.n; ++s) {
        const Vector x0 = diffusion::draw_initial_state(dim, schedule.sigmas.front(), rng);
        const Vector x = diffusion::ddim_sample(denoiser, schedule, "cond", g, x0);
        for (std::size_t i = 0; i < x.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", x[i]);
            text += (i ? "," : "");
            text += buf;
        }
        text += "\n";
    }
    write_text(a.out, text);
    write_sidecar(a.out + ".json", "diffuse", seed, opts.effective());
    return kOk;
}

// ----------------------------------------------------------------- eval

struct EvalArgs {
    std::string images_a;
    std::string images_b;
    std::string mesh_a;
    std::string mesh_b;
    std::string matches;
    std::string out = "eval";
    int shuffles = 1000;
    int iou_res = 64;
    int chamfer_samples = 10000;
};

std::vector<fs::path> pfm_files(const std::string &dir) {
    std::vector<fs::path> files;
    std::error_code ec;
    for (const auto &e : fs::directory_iterator(dir, ec)) {
        if (e.path().extension() == ".pfm") {
            files.push_back(e.path());
        }
    }
    if (ec) {
        throw IoError("cannot list " + dir);
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::vector<metrics::MatchRecord> read_matches(const std::string &path) {
    std::ifstream f(path);
    if (!f) {
        throw IoError("cannot read " + path);
    }
    std::vector<metrics::MatchRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty() || (lineno == 1 && line.rfind("player_a", 0) == 0)) {
            continue;
        }
        std::stringstream ss(line);
        metrics::MatchRecord m;
        std::string outcome;
        if (!std::getline(ss, m.player_a, ',') || !std::getline(ss, m.player_b, ',') || !std::getline(ss, outcome)) {
            throw IoError("malformed match record at " + path + ":" + std::to_string(lineno));
        }
        m.outcome = outcome == "1" ? 1 : outcome == "0" ? 0 : -1;
        out.push_back(m);
    }
    return out;
}

int run_eval(const EvalArgs &a, const Options &opts, std::uint64_t seed) {
    std::vector<metrics::MetricRow> rows;
    if (!a.images_a.empty() || !a.images_b.empty()) {
        const auto fa = pfm_files(a.images_a);
        const auto fb = pfm_files(a.images_b);
        if (fa.size() != fb.size()) {
            throw DomainError("image directories hold " + std::to_string(fa.size()) + " and " +
                              std::to_string(fb.size()) + " views");
        }
        for (std::size_t i = 0; i < fa.size(); ++i) {
            const image::Image x = image::read_pfm(fa[i].string());
            const image::Image y = image::read_pfm(fb[i].string());
            if (x.width != y.width || x.height != y.height || x.channels != y.channels) {
                throw DomainError("image sizes differ for " + fa[i].filename().string());
            }
            const std::string key = fa[i].filename().string() + ":" + fb[i].filename().string();
            rows.push_back({"psnr", key, metrics::psnr(x.data, y.data)});
            rows.push_back({"ssim", key, metrics::ssim(x.data, y.data, x.width, x.height, x.channels)});
            rows.push_back({"mse", key, metrics::mse_metric(x.data, y.data)});
        }
    }
    if (!a.mesh_a.empty() || !a.mesh_b.empty()) {
        const mesh::TriMesh ma = mesh::load_obj(a.mesh_a);
        const mesh::TriMesh mb = mesh::load_obj(a.mesh_b);
        std::string warning;
        rows.push_back({"chamfer", "mesh", metrics::chamfer_distance(ma, mb, a.chamfer_samples, seed)});
        rows.push_back({"iou3d", "mesh", metrics::iou_3d(ma, mb, a.iou_res, &warning)});
        if (!warning.empty()) {
            std::cerr << "warning: " << warning << "\n";
        }
    }
    const fs::path out(a.out);
    fs::create_directories(out);
    std::ostringstream m;
    metrics::write_metrics_csv(m, rows);
    write_text(out / "metrics.csv", m.str());
    if (!a.matches.empty()) {
        const auto matches = read_matches(a.matches);
        if (matches.empty()) {
            throw DomainError("no matches in " + a.matches);
        }
        Rng rng(derive_seed(seed, "elo"));
        std::ostringstream e;
        metrics::write_elo_csv(e, metrics::elo_bootstrap_ranking(matches, a.shuffles, rng));
        write_text(out / "elo.csv", e.str());
    }
    write_sidecar(out / "run.json", "eval", seed, opts.effective(),
                  {{"chamfer_convention", "symmetric mean nearest distance, halved"}});
    return kOk;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"orbitforge: orbits, synthetic datasets, reconstruction, diffusion sampling and metrics"};
    app.require_subcommand(1);
    app.fallthrough();
    std::uint64_t seed = 0;
    std::string config_path;
    app.add_option("--seed", seed, "Root seed for all randomness")->capture_default_str();
    app.add_option("--config", config_path, "JSON config file");

    CLI::App *orbit_cmd = app.add_subcommand("orbit", "Write a camera orbit file");
    OrbitArgs oa;
    Options oo(orbit_cmd);
    oo.add("kind", oa.kind, "Orbit kind")->check(CLI::IsMember({"static", "dynamic", "sine"}));
    oo.add("k", oa.k, "Number of views");
    oo.add("elevation", oa.elevation, "Elevation of the conditioning view (degrees)");
    oo.add("azimuth", oa.azimuth, "Azimuth of the conditioning view (degrees)");
    oo.add("amplitude", oa.amplitude, "Elevation amplitude of the sine orbit (degrees)");
    oo.add("out", oa.out, "Output orbit file");

    CLI::App *dataset_cmd = app.add_subcommand("dataset", "Render a synthetic multi-view dataset");
    DatasetArgs da;
    Options dso(dataset_cmd);
    dso.add("scene", da.scene, "Scene description JSON")->required();
    dso.add("out", da.out, "Output directory");
    dso.add("frames", da.frames, "Frames of the static orbit");
    dso.add("res", da.res, "Image width and height");
    dso.add("grid", da.grid, "Resolution of the baked scene grid");
    dso.add("spp", da.spp, "Samples per ray");
    dso.add("envmap", da.envmap, "Library envmap index (0-7)");
    dso.add("elevation", da.elevation, "Elevation of the static orbit (degrees)");
    dso.add("orbit", da.orbit_file, "Orbit file to render instead of the static orbit");
    dso.add("fov", da.fov, "Field of view (degrees)");
    dso.add("distance", da.distance, "Camera distance, 0 for adaptive");

    CLI::App *recon_cmd = app.add_subcommand("reconstruct", "Two-stage reconstruction from a dataset");
    ReconArgs ra;
    Options ro(recon_cmd);
    add_recon_options(ro, ra);

    CLI::App *diffuse_cmd = app.add_subcommand("diffuse", "Sample a Gaussian mixture with the deterministic sampler");
    DiffuseArgs fa;
    Options fo(diffuse_cmd);
    fo.add("mixture", fa.mixture, "Mixture JSON")->required();
    fo.add("out", fa.out, "Output CSV, one sample per line");
    fo.add("n", fa.n, "Number of samples");
    fo.add("steps", fa.steps, "Sampler steps");
    fo.add("frames", fa.frames, "Frames per sample (each of the mixture dimension)");
    fo.add("sigma-max", fa.sigma_max, "Largest noise level");
    fo.add("sigma-min", fa.sigma_min, "Smallest non-zero noise level");
    fo.add("rho", fa.rho, "Schedule exponent");
    fo.add("guidance", fa.guidance, "Guidance schedule")->check(CLI::IsMember({"constant", "linear", "triangular"}));
    fo.add("w", fa.w, "Scale of the constant schedule");
    fo.add("wmin", fa.wmin, "Smallest scale of linear and triangular schedules");
    fo.add("wmax", fa.wmax, "Largest scale of linear and triangular schedules");

    CLI::App *eval_cmd = app.add_subcommand("eval", "Image, mesh and Elo metrics");
    EvalArgs ea;
    Options eo(eval_cmd);
    eo.add("images-a", ea.images_a, "Directory of PFM images");
    eo.add("images-b", ea.images_b, "Directory of PFM images to compare, matched by sorted name");
    eo.add("mesh-a", ea.mesh_a, "OBJ mesh");
    eo.add("mesh-b", ea.mesh_b, "OBJ mesh to compare");
    eo.add("matches", ea.matches, "Match CSV: player_a,player_b,outcome");
    eo.add("out", ea.out, "Output directory");
    eo.add("shuffles", ea.shuffles, "Elo bootstrap shuffles");
    eo.add("iou-res", ea.iou_res, "Voxel resolution of the 3D IoU");
    eo.add("chamfer-samples", ea.chamfer_samples, "Surface samples per mesh for Chamfer distance");

    // A required option may be supplied by the config file instead.
    json config = json::object();
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") {
            config_path = argv[i + 1];
        }
    }
    try {
        if (!config_path.empty()) {
            config = read_json(config_path);
            if (config.value("version", std::string(kConfigVersion)) != kConfigVersion) {
                throw DomainError("unsupported config version in " + config_path);
            }
            for (const auto &[key, value] : config.items()) {
                if (key != "version" && key != "seed" && !app.get_subcommand_no_throw(key)) {
                    throw DomainError("unknown config section '" + key + "' in " + config_path);
                }
            }
            for (CLI::App *sub : {orbit_cmd, dataset_cmd, recon_cmd, diffuse_cmd, eval_cmd}) {
                if (config.contains(sub->get_name())) {
                    for (CLI::Option *opt : sub->get_options()) {
                        if (opt->get_required() && config[sub->get_name()].contains(opt->get_name().substr(2))) {
                            opt->required(false);
                        }
                    }
                }
            }
        }
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (app.get_option("--seed")->count() == 0 && config.contains("seed")) {
            seed = config.at("seed").get<std::uint64_t>();
        }
        auto section = [&](const char *name) { return config.contains(name) ? config.at(name) : json::object(); };
        if (*orbit_cmd) {
            oo.apply(section("orbit"));
            return run_orbit(oa, oo, seed);
        }
        if (*dataset_cmd) {
            dso.apply(section("dataset"));
            return run_dataset(da, dso, seed);
        }
        if (*recon_cmd) {
            ro.apply(section("reconstruct"));
            return run_reconstruct(ra, ro, seed);
        }
        if (*diffuse_cmd) {
            fo.apply(section("diffuse"));
            return run_diffuse(fa, fo, seed);
        }
        if (*eval_cmd) {
            eo.apply(section("eval"));
            return run_eval(ea, eo, seed);
        }
    } catch (const NumericalError &e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    }
    return kUsage;
}
