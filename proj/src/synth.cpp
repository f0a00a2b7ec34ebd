// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

#include "orbitforge/synth.hpp"

#include "orbitforge/image.hpp"
#include "orbitforge/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace orbitforge::synth {

namespace {

double sign_of(double v) { return v < 0.0 ? -1.0 : 1.0; }

const char *kind_name(PrimitiveKind k) {
    switch (k) {
    case PrimitiveKind::kSphere:
        return "sphere";
    case PrimitiveKind::kBox:
        return "box";
    case PrimitiveKind::kTorus:
        return "torus";
    }
    return "sphere";
}

// Axis-aligned bounds of a primitive's surface.
void primitive_bounds(const Primitive &p, Vec3 &lo, Vec3 &hi) {
    Vec3 half;
    switch (p.kind) {
    case PrimitiveKind::kSphere:
        half = Vec3::Constant(p.size.x());
        break;
    case PrimitiveKind::kBox:
        half = p.size;
        break;
    case PrimitiveKind::kTorus:
        half = Vec3(p.size.x() + p.size.y(), p.size.x() + p.size.y(), p.size.y());
        break;
    }
    lo = p.center - half;
    hi = p.center + half;
}

// Surface point of `p` furthest along +-axis.
Vec3 primitive_extreme(const Primitive &p, int axis, double s) {
    Vec3 x = p.center;
    switch (p.kind) {
    case PrimitiveKind::kSphere:
        x[axis] += s * p.size.x();
        break;
    case PrimitiveKind::kBox:
        x[axis] += s * p.size[axis];
        break;
    case PrimitiveKind::kTorus:
        if (axis == 2) {
            x.x() += p.size.x();
            x[axis] += s * p.size.y();
        } else {
            x[axis] += s * (p.size.x() + p.size.y());
        }
        break;
    }
    return x;
}

Vec3 read_vec3(const nlohmann::json &j, const char *key) {
    if (!j.contains(key) || !j[key].is_array() || j[key].size() != 3) {
        throw DomainError(std::string("scene primitive needs a 3-vector '") + key + "'");
    }
    return Vec3(j[key][0].get<double>(), j[key][1].get<double>(), j[key][2].get<double>());
}

nlohmann::json vec_json(const Vec3 &v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

} // namespace

double smooth_min(double a, double b, double k, double *h) {
    if (k <= 0.0) {
        if (h) {
            *h = a <= b ? 1.0 : 0.0;
        }
        return std::min(a, b);
    }
    const double w = std::clamp(0.5 + 0.5 * (b - a) / k, 0.0, 1.0);
    if (h) {
        *h = w;
    }
    return b + w * (a - b) - k * w * (1.0 - w);
}

double Primitive::sdf(const Vec3 &p) const {
    const Vec3 d = p - center;
    switch (kind) {
    case PrimitiveKind::kSphere:
        return d.norm() - size.x();
    case PrimitiveKind::kBox: {
        const Vec3 q = d.cwiseAbs() - size;
        return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
    }
    case PrimitiveKind::kTorus: {
        const double len = std::hypot(d.x(), d.y());
        return std::hypot(len - size.x(), d.z()) - size.y();
    }
    }
    return 0.0;
}

Vec3 Primitive::gradient(const Vec3 &p) const {
    const Vec3 d = p - center;
    switch (kind) {
    case PrimitiveKind::kSphere: {
        const double len = d.norm();
        return len > 0.0 ? Vec3(d / len) : Vec3(0.0, 0.0, 1.0);
    }
    case PrimitiveKind::kBox: {
        const Vec3 q = d.cwiseAbs() - size;
        const Vec3 s(sign_of(d.x()), sign_of(d.y()), sign_of(d.z()));
        if (q.maxCoeff() > 0.0) {
            const Vec3 m = q.cwiseMax(0.0);
            return s.cwiseProduct(m) / m.norm();
        }
        int a = 0;
        q.maxCoeff(&a);
        Vec3 g = Vec3::Zero();
        g[a] = s[a];
        return g;
    }
    case PrimitiveKind::kTorus: {
        const double len = std::hypot(d.x(), d.y());
        const double qx = len - size.x();
        const double ql = std::hypot(qx, d.z());
        if (ql == 0.0) {
            return Vec3(0.0, 0.0, 1.0);
        }
        const double cx = len > 0.0 ? d.x() / len : 1.0;
        const double cy = len > 0.0 ? d.y() / len : 0.0;
        return Vec3(qx * cx, qx * cy, d.z()) / ql;
    }
    }
    return Vec3::Zero();
}

ProceduralScene::ProceduralScene(std::string id, std::vector<Primitive> primitives, double smoothness)
    : id_(std::move(id)), primitives_(std::move(primitives)), smoothness_(smoothness) {
    if (primitives_.empty()) {
        throw DomainError("a scene needs at least one primitive");
    }
    if (!(smoothness_ >= 0.0)) {
        throw DomainError("scene smoothness must be non-negative");
    }
    // Raw-frame bounds: exact for a hard union, refined by constrained
    // ascent from every primitive's extreme point when blended.
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const Primitive &p : primitives_) {
        Vec3 a, b;
        primitive_bounds(p, a, b);
        lo = lo.cwiseMin(a);
        hi = hi.cwiseMax(b);
    }
    if (smoothness_ > 0.0) {
        for (int axis = 0; axis < 3; ++axis) {
            for (double s : {-1.0, 1.0}) {
                double best = s > 0 ? hi[axis] : -lo[axis];
                for (const Primitive &p : primitives_) {
                    Vec3 x = primitive_extreme(p, axis, s);
                    double step = 0.05;
                    for (int it = 0; it < 4000 && step > 1e-12; ++it) {
                        // Newton projection onto the surface.
                        for (int k = 0; k < 20; ++k) {
                            const SdfSample f = raw(x);
                            const double g2 = f.gradient.squaredNorm();
                            if (g2 < 1e-18 || std::abs(f.value) < 1e-14) {
                                break;
                            }
                            x -= f.value * f.gradient / g2;
                        }
                        const Vec3 n = raw(x).gradient.normalized();
                        Vec3 dir = Vec3::Zero();
                        dir[axis] = s;
                        const Vec3 tangent = dir - dir.dot(n) * n;
                        if (tangent.norm() < 1e-13) {
                            break;
                        }
                        Vec3 y = x + step * tangent;
                        for (int k = 0; k < 20; ++k) {
                            const SdfSample f = raw(y);
                            const double g2 = f.gradient.squaredNorm();
                            if (g2 < 1e-18 || std::abs(f.value) < 1e-14) {
                                break;
                            }
                            y -= f.value * f.gradient / g2;
                        }
                        if (s * y[axis] > s * x[axis]) {
                            x = y;
                            step *= 1.2;
                        } else {
                            step *= 0.5;
                        }
                    }
                    best = std::max(best, s * x[axis]);
                }
                if (s > 0) {
                    hi[axis] = best;
                } else {
                    lo[axis] = -best;
                }
            }
        }
    }
    const double extent = (hi - lo).maxCoeff();
    if (!(extent > 0.0)) {
        throw DomainError("scene has zero extent");
    }
    scale_ = 1.0 / extent;
    offset_ = 0.5 * (lo + hi);
    bmin_ = (lo - offset_) * scale_;
    bmax_ = (hi - offset_) * scale_;
}

SdfSample ProceduralScene::raw(const Vec3 &q) const {
    SdfSample s;
    s.value = primitives_[0].sdf(q);
    s.gradient = primitives_[0].gradient(q);
    s.albedo = primitives_[0].albedo;
    for (std::size_t i = 1; i < primitives_.size(); ++i) {
        const Primitive &p = primitives_[i];
        double h = 0.0;
        s.value = smooth_min(s.value, p.sdf(q), smoothness_, &h);
        s.gradient = h * s.gradient + (1.0 - h) * p.gradient(q);
        s.albedo = h * s.albedo + (1.0 - h) * p.albedo;
    }
    return s;
}

SdfSample ProceduralScene::sample(const Vec3 &p) const {
    SdfSample s = raw(p / scale_ + offset_);
    s.value *= scale_;
    return s;
}

Vec3 ProceduralScene::normal(const Vec3 &p) const {
    const Vec3 g = sample(p).gradient;
    const double len = g.norm();
    return len > 0.0 ? Vec3(g / len) : Vec3(0.0, 0.0, 1.0);
}

nlohmann::json ProceduralScene::to_json() const {
    nlohmann::json prims = nlohmann::json::array();
    for (const Primitive &p : primitives_) {
        nlohmann::json j;
        j["type"] = kind_name(p.kind);
        j["center"] = vec_json(p.center);
        switch (p.kind) {
        case PrimitiveKind::kSphere:
            j["radius"] = p.size.x();
            break;
        case PrimitiveKind::kBox:
            j["half_extents"] = vec_json(p.size);
            break;
        case PrimitiveKind::kTorus:
            j["major_radius"] = p.size.x();
            j["minor_radius"] = p.size.y();
            break;
        }
        j["albedo"] = vec_json(p.albedo);
        prims.push_back(j);
    }
    return nlohmann::json{{"id", id_}, {"smoothness", smoothness_}, {"primitives", prims}};
}

ProceduralScene make_scene(const nlohmann::json &spec, Rng &rng) {
    if (!spec.is_object() || !spec.contains("primitives") || !spec["primitives"].is_array() ||
        spec["primitives"].empty()) {
        throw DomainError("scene spec needs a non-empty 'primitives' list");
    }
    std::vector<Primitive> prims;
    for (const nlohmann::json &j : spec["primitives"]) {
        Primitive p;
        const std::string type = j.value("type", "");
        p.center = j.contains("center") ? read_vec3(j, "center") : Vec3::Zero();
        if (type == "sphere") {
            p.kind = PrimitiveKind::kSphere;
            p.size = Vec3(j.value("radius", 0.0), 0.0, 0.0);
            if (!(p.size.x() > 0.0)) {
                throw DomainError("sphere radius must be positive");
            }
        } else if (type == "box") {
            p.kind = PrimitiveKind::kBox;
            p.size = read_vec3(j, "half_extents");
            if (!(p.size.minCoeff() > 0.0)) {
                throw DomainError("box half extents must be positive");
            }
        } else if (type == "torus") {
            p.kind = PrimitiveKind::kTorus;
            p.size = Vec3(j.value("major_radius", 0.0), j.value("minor_radius", 0.0), 0.0);
            if (!(p.size.y() > 0.0) || !(p.size.x() > p.size.y())) {
                throw DomainError("torus needs major radius > minor radius > 0");
            }
        } else {
            throw DomainError("unknown primitive type '" + type + "'");
        }
        if (j.contains("albedo")) {
            p.albedo = read_vec3(j, "albedo");
        } else {
            p.albedo = Vec3(uniform(rng, 0.2, 0.9), uniform(rng, 0.2, 0.9), uniform(rng, 0.2, 0.9));
        }
        if (p.albedo.minCoeff() < 0.0 || p.albedo.maxCoeff() > 1.0) {
            throw DomainError("albedo must lie in [0, 1]");
        }
        prims.push_back(p);
    }
    return ProceduralScene(spec.value("id", "scene"), std::move(prims), spec.value("smoothness", 0.0));
}

ProceduralScene load_scene(const std::string &path, Rng &rng) {
    std::ifstream f(path);
    if (!f) {
        throw IoError("cannot read scene " + path);
    }
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception &e) {
        throw IoError("malformed scene " + path + ": " + e.what());
    }
    return make_scene(j, rng);
}

nlohmann::json sphere_box_spec() {
    return nlohmann::json::parse(R"({
      "id": "sphere_box",
      "smoothness": 0.05,
      "primitives": [
        {"type": "box", "center": [0.0, 0.0, -0.18], "half_extents": [0.5, 0.5, 0.07], "albedo": [0.9, 0.8, 0.4]},
        {"type": "box", "center": [0.43, 0.0, -0.13], "half_extents": [0.07, 0.5, 0.12], "albedo": [0.85, 0.35, 0.25]},
        {"type": "box", "center": [-0.43, 0.0, -0.13], "half_extents": [0.07, 0.5, 0.12], "albedo": [0.85, 0.35, 0.25]},
        {"type": "box", "center": [0.0, 0.43, -0.13], "half_extents": [0.36, 0.07, 0.12], "albedo": [0.85, 0.35, 0.25]},
        {"type": "box", "center": [0.0, -0.43, -0.13], "half_extents": [0.36, 0.07, 0.12], "albedo": [0.85, 0.35, 0.25]},
        {"type": "sphere", "center": [0.0, 0.0, 0.03], "radius": 0.15, "albedo": [0.25, 0.55, 0.85]}
      ]
    })");
}

render::SceneGrid bake_grid(const ProceduralScene &scene, int n) {
    if (n < 8) {
        throw DomainError("bake_grid needs a resolution of at least 8");
    }
    render::SceneGrid g = render::SceneGrid::make(n, render::FieldKind::kSdf, 0.0, Vec3::Zero());
    g.sdf_beta = 0.5 / static_cast<double>(n);
    g.sdf_alpha = 4.0 / g.sdf_beta;
    for (int k = 0; k < n; ++k) {
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                const std::size_t v = g.index(i, j, k);
                const SdfSample s = scene.sample(g.voxel_center(i, j, k));
                g.field[v] = s.value;
                for (int c = 0; c < 3; ++c) {
                    g.albedo[3 * v + static_cast<std::size_t>(c)] = std::clamp(s.albedo[c], 0.0, 1.0);
                }
            }
        }
    }
    return g;
}

sg::Envmap library_envmap(int index) {
    if (index < 0 || index >= 8) {
        throw DomainError("envmap library index must be in [0, 8)");
    }
    Rng rng(derive_seed(static_cast<std::uint64_t>(index), "envmap-library"));
    sg::Envmap env = sg::fibonacci_envmap(sg::kDefaultLobeCount, 4.0, 1.0);
    const Eigen::Quaterniond rot =
        Eigen::Quaterniond(standard_normal(rng), standard_normal(rng), standard_normal(rng), standard_normal(rng))
            .normalized();
    for (sg::SphericalGaussian &g : env.lobes) {
        g.axis = (rot * g.axis).normalized();
        g.sharpness = uniform(rng, 2.0, 12.0);
        g.amplitude = uniform(rng, 0.2, 1.0);
    }
    // A brighter key light over the upper hemisphere.
    std::size_t key = 0;
    for (std::size_t i = 1; i < env.lobes.size(); ++i) {
        if (env.lobes[i].axis.z() > env.lobes[key].axis.z()) {
            key = i;
        }
    }
    env.lobes[key].amplitude *= 4.0;
    // Scale to the power of a unit uniform environment.
    double power = 0.0;
    for (const sg::SphericalGaussian &g : env.lobes) {
        power += 2.0 * kPi * g.amplitude / g.sharpness * (1.0 - std::exp(-2.0 * g.sharpness));
    }
    for (sg::SphericalGaussian &g : env.lobes) {
        g.amplitude *= 4.0 * kPi / power;
    }
    return env;
}

double dataset_distance(const DatasetOptions &options) {
    return options.distance > 0.0 ? options.distance : orbit::adaptive_distance(0.5, options.fov_deg);
}

Dataset render_views(const ProceduralScene &scene, const sg::Envmap &envmap, const orbit::Orbit &orbit,
                     const DatasetOptions &options) {
    if (orbit.poses.empty()) {
        throw DomainError("dataset orbit is empty");
    }
    if (options.width < 1 || options.height < 1 || options.samples_per_ray < 2) {
        throw DomainError("invalid dataset image settings");
    }
    Dataset ds;
    ds.scene_id = scene.id();
    ds.scene = scene.to_json();
    ds.envmap = envmap;
    ds.orbit = orbit;
    ds.options = options;
    const render::SceneGrid grid = bake_grid(scene, options.grid_resolution);
    Rng rng(derive_seed(options.seed, "backgrounds"));
    for (std::size_t f = 0; f < orbit.poses.size(); ++f) {
        orbit::Camera cam;
        cam.pose = orbit.poses[f];
        cam.distance = dataset_distance(options);
        cam.fov_deg = options.fov_deg;
        cam.width = options.width;
        cam.height = options.height;
        const Vec3 random_bg(uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0));
        for (const auto &[variant, bg] : {std::pair<const char *, Vec3>{"white", Vec3(1.0, 1.0, 1.0)},
                                          std::pair<const char *, Vec3>{"random", random_bg}}) {
            render::RenderOptions opts;
            opts.samples_per_ray = options.samples_per_ray;
            opts.background = bg;
            opts.jitter_seed = derive_seed(options.seed, "frame-" + std::to_string(f));
            render::ImageBundle img = render::render(grid, envmap, cam, opts);
            DatasetView v;
            v.frame = static_cast<int>(f);
            v.variant = variant;
            v.view.camera = cam;
            v.view.background = bg;
            v.view.rgb = std::move(img.rgb);
            v.view.mask = std::move(img.mask);
            v.view.normal = std::move(img.normal);
            v.depth = std::move(img.depth);
            ds.views.push_back(std::move(v));
        }
    }
    return ds;
}

namespace {

std::string view_stem(const DatasetView &v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "frame_%03d_%s", v.frame, v.variant.c_str());
    return buf;
}

} // namespace

nlohmann::json dataset_manifest(const Dataset &ds) {
    nlohmann::json views = nlohmann::json::array();
    for (const DatasetView &v : ds.views) {
        const std::string stem = view_stem(v);
        views.push_back({{"frame", v.frame},
                         {"variant", v.variant},
                         {"image", stem + "_rgb.pfm"},
                         {"preview", stem + ".ppm"},
                         {"mask", stem + "_mask.pfm"},
                         {"depth", stem + "_depth.pfm"},
                         {"normal", stem + "_normal.pfm"},
                         {"elevation", v.view.camera.pose.elevation_deg},
                         {"azimuth", v.view.camera.pose.azimuth_deg},
                         {"distance", v.view.camera.distance},
                         {"background", vec_json(v.view.background)}});
    }
    return nlohmann::json{{"version", "orbitforge-dataset/1"},
                          {"scene_id", ds.scene_id},
                          {"scene", ds.scene},
                          {"envmap", "envmap.txt"},
                          {"orbit", "orbit.txt"},
                          {"frame_count", ds.orbit.poses.size()},
                          {"width", ds.options.width},
                          {"height", ds.options.height},
                          {"fov_deg", ds.options.fov_deg},
                          {"grid_resolution", ds.options.grid_resolution},
                          {"samples_per_ray", ds.options.samples_per_ray},
                          {"seed", ds.options.seed},
                          {"views", views}};
}

nlohmann::json write_dataset(const Dataset &ds, const std::string &dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create dataset directory " + dir);
    }
    const fs::path root(dir);
    const std::size_t np = static_cast<std::size_t>(ds.options.width) * static_cast<std::size_t>(ds.options.height);
    for (const DatasetView &v : ds.views) {
        const std::string stem = view_stem(v);
        const int w = v.view.camera.width;
        const int h = v.view.camera.height;
        if (v.view.mask.size() != np || v.depth.size() != np) {
            throw ContractError("dataset view buffers do not match the dataset resolution");
        }
        image::write_pfm((root / (stem + "_rgb.pfm")).string(), image::Image{w, h, 3, v.view.rgb});
        image::write_ppm((root / (stem + ".ppm")).string(), image::Image{w, h, 3, v.view.rgb});
        image::write_pfm((root / (stem + "_mask.pfm")).string(), image::Image{w, h, 1, v.view.mask});
        image::write_pfm((root / (stem + "_depth.pfm")).string(), image::Image{w, h, 1, v.depth});
        image::write_pfm((root / (stem + "_normal.pfm")).string(), image::Image{w, h, 3, v.view.normal});
    }
    orbit::save_orbit((root / "orbit.txt").string(), ds.orbit);
    sg::save_envmap((root / "envmap.txt").string(), ds.envmap);
    const nlohmann::json manifest = dataset_manifest(ds);
    const std::string path = (root / "manifest.json").string();
    std::ofstream f(path);
    if (!f) {
        throw IoError("cannot write manifest " + path);
    }
    f << manifest.dump(2) << "\n";
    if (!f) {
        throw IoError("failed writing manifest " + path);
    }
    return manifest;
}

Dataset render_dataset(const ProceduralScene &scene, const sg::Envmap &envmap, const orbit::Orbit &orbit,
                       const DatasetOptions &options, const std::string &dir) {
    Dataset ds = render_views(scene, envmap, orbit, options);
    write_dataset(ds, dir);
    return ds;
}

Dataset load_dataset(const std::string &manifest_path) {
    namespace fs = std::filesystem;
    std::ifstream f(manifest_path);
    if (!f) {
        throw IoError("cannot read manifest " + manifest_path);
    }
    nlohmann::json m;
    try {
        f >> m;
    } catch (const nlohmann::json::exception &e) {
        throw IoError("malformed manifest " + manifest_path + ": " + e.what());
    }
    const fs::path root = fs::path(manifest_path).parent_path();
    Dataset ds;
    try {
        if (m.at("version").get<std::string>() != "orbitforge-dataset/1") {
            throw IoError("unsupported manifest version in " + manifest_path);
        }
        ds.scene_id = m.at("scene_id").get<std::string>();
        ds.scene = m.at("scene");
        ds.options.width = m.at("width").get<int>();
        ds.options.height = m.at("height").get<int>();
        ds.options.fov_deg = m.at("fov_deg").get<double>();
        ds.options.grid_resolution = m.at("grid_resolution").get<int>();
        ds.options.samples_per_ray = m.at("samples_per_ray").get<int>();
        ds.options.seed = m.at("seed").get<std::uint64_t>();
        ds.envmap = sg::load_envmap((root / m.at("envmap").get<std::string>()).string());
        ds.orbit = orbit::load_orbit((root / m.at("orbit").get<std::string>()).string());
        if (m.at("frame_count").get<std::size_t>() != ds.orbit.poses.size()) {
            throw IoError("frame count in " + manifest_path + " does not match the orbit file");
        }
        const int w = ds.options.width;
        const int h = ds.options.height;
        auto load = [&](const nlohmann::json &v, const char *key, int channels) {
            const std::string path = (root / v.at(key).get<std::string>()).string();
            image::Image img = image::read_pfm(path);
            if (img.width != w || img.height != h || img.channels != channels) {
                throw IoError("image " + path + " does not match the manifest resolution");
            }
            return std::move(img.data);
        };
        for (const nlohmann::json &v : m.at("views")) {
            DatasetView dv;
            dv.frame = v.at("frame").get<int>();
            dv.variant = v.at("variant").get<std::string>();
            if (dv.frame < 0 || static_cast<std::size_t>(dv.frame) >= ds.orbit.poses.size()) {
                throw IoError("view frame out of range in " + manifest_path);
            }
            const orbit::CameraPose &pose = ds.orbit.poses[static_cast<std::size_t>(dv.frame)];
            const double elev = v.at("elevation").get<double>();
            const double azim = v.at("azimuth").get<double>();
            if (std::abs(elev - pose.elevation_deg) > 1e-9 * std::max(1.0, std::abs(elev)) ||
                std::abs(azim - pose.azimuth_deg) > 1e-9 * std::max(1.0, std::abs(azim))) {
                throw IoError("view angles in " + manifest_path + " do not match the orbit file");
            }
            dv.view.camera.pose = pose;
            dv.view.camera.distance = v.at("distance").get<double>();
            dv.view.camera.fov_deg = ds.options.fov_deg;
            dv.view.camera.width = w;
            dv.view.camera.height = h;
            const auto &bg = v.at("background");
            dv.view.background = Vec3(bg.at(0).get<double>(), bg.at(1).get<double>(), bg.at(2).get<double>());
            dv.view.rgb = load(v, "image", 3);
            dv.view.mask = load(v, "mask", 1);
            dv.depth = load(v, "depth", 1);
            dv.view.normal = load(v, "normal", 3);
            ds.views.push_back(std::move(dv));
        }
        if (!ds.views.empty()) {
            ds.options.distance = ds.views.front().view.camera.distance;
        }
    } catch (const nlohmann::json::exception &e) {
        throw IoError("malformed manifest " + manifest_path + ": " + e.what());
    }
    return ds;
}

std::vector<recon::View> recon_views(const Dataset &dataset, const std::string &variant) {
    std::vector<recon::View> out;
    for (const DatasetView &v : dataset.views) {
        if (variant.empty() || v.variant == variant) {
            out.push_back(v.view);
        }
    }
    return out;
}

} // namespace orbitforge::synth
