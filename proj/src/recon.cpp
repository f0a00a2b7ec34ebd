// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

#include "orbitforge/recon.hpp"

#include "orbitforge/image.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace orbitforge::recon {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState &state,
               const AdamOptions &options) {
    if (grads.size() != params.size()) {
        throw ContractError("adam: gradient and parameter sizes differ");
    }
    if (state.m.empty() && state.v.empty() && state.step == 0) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ContractError("adam: state does not match the parameters");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(options.beta1, t);
    const double c2 = 1.0 - std::pow(options.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = options.beta1 * state.m[i] + (1.0 - options.beta1) * grads[i];
        state.v[i] = options.beta2 * state.v[i] + (1.0 - options.beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        params[i] -= options.lr * mhat / (std::sqrt(vhat) + options.eps);
    }
}

void LossWeights::validate() const {
    for (double w : {mse, mask, normal, depth, bilateral, albedo, illum, sds}) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw DomainError("loss weights must be finite and non-negative");
        }
    }
}

std::string orbit_kind_name(OrbitKind kind) {
    switch (kind) {
    case OrbitKind::kStatic:
        return "static";
    case OrbitKind::kSine30:
        return "sine-30";
    case OrbitKind::kSine50:
        return "sine-50";
    case OrbitKind::kDynamic:
        return "dynamic";
    }
    return "static";
}

OrbitKind parse_orbit_kind(const std::string &name) {
    for (OrbitKind k : {OrbitKind::kStatic, OrbitKind::kSine30, OrbitKind::kSine50, OrbitKind::kDynamic}) {
        if (orbit_kind_name(k) == name) {
            return k;
        }
    }
    throw DomainError("unknown orbit kind '" + name + "'");
}

orbit::Orbit training_orbit(OrbitKind kind, int k, double elevation_deg, Rng &rng) {
    const orbit::CameraPose cond{elevation_deg, 0.0};
    switch (kind) {
    case OrbitKind::kSine30:
        return orbit::sine_elevation_orbit(k, cond, 30.0);
    case OrbitKind::kSine50:
        return orbit::sine_elevation_orbit(k, cond, 50.0);
    case OrbitKind::kDynamic:
        return orbit::dynamic_orbit(rng, k, cond, {});
    case OrbitKind::kStatic:
        break;
    }
    return orbit::static_orbit(k, elevation_deg);
}

void View::validate() const {
    const std::size_t np =
        static_cast<std::size_t>(camera.width) * static_cast<std::size_t>(camera.height);
    if (rgb.size() != 3 * np || mask.size() != np || normal.size() != 3 * np) {
        throw ContractError("view buffers do not match the camera resolution");
    }
}

View downsample_view(const View &view, int factor) {
    view.validate();
    if (factor == 1) {
        return view;
    }
    auto shrink = [&](const Vector &data, int channels) {
        image::Image img{view.camera.width, view.camera.height, channels, data};
        return image::downsample(img, factor).data;
    };
    View out = view;
    out.camera.width = view.camera.width / factor;
    out.camera.height = view.camera.height / factor;
    out.rgb = shrink(view.rgb, 3);
    out.mask = shrink(view.mask, 1);
    out.normal = shrink(view.normal, 3);
    for (std::size_t p = 0; p < out.mask.size(); ++p) {
        Vec3 n(out.normal[3 * p], out.normal[3 * p + 1], out.normal[3 * p + 2]);
        const double len = n.norm();
        if (len > 0.0) {
            n /= len;
        }
        for (int c = 0; c < 3; ++c) {
            out.normal[3 * p + static_cast<std::size_t>(c)] = n[c];
        }
    }
    return out;
}

void ReconConfig::validate() const {
    if (coarse_iters < 0 || fine_iters < 0 || sds_window < 0 || sds_window > fine_iters) {
        throw DomainError("iteration counts must be non-negative with sds_window <= fine_iters");
    }
    if (!(adam.lr > 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
        !(adam.eps > 0.0)) {
        throw DomainError("invalid Adam hyperparameters");
    }
    weights.validate();
    if (coarse_resolution < 2 || fine_resolution < 2 || coarse_image_factor < 1 || fine_image_factor < 1 ||
        coarse_samples < 2 || fine_samples < 2) {
        throw DomainError("invalid grid, image or sample settings");
    }
    if (coarse_levels < 1 || coarse_levels > 8 || (coarse_resolution >> (coarse_levels - 1)) < 2) {
        throw DomainError("coarse levels must leave a starting resolution of at least 2");
    }
    if (!(density_scale > 0.0) || !(initial_density > 0.0) || !(sdf_scale > 0.0) || !(sdf_truncation > 0.0) ||
        beta_halvings < 0 || albedo_probes < 1 || envmap_lobes < 1 ||
        !(seen_transmittance > 0.0 && seen_transmittance < 1.0)) {
        throw DomainError("invalid parameterization settings");
    }
    if (!(sds_sigma_min > 0.0) || !(sds_sigma_max >= sds_sigma_min)) {
        throw DomainError("invalid sds noise range");
    }
}

LossBreakdown view_loss(const render::SceneGrid &grid, const sg::Envmap &env, const View &view,
                        const LossWeights &weights, std::span<const AlbedoProbe> probes,
                        const render::RenderOptions &options, render::RenderGradient *grad) {
    view.validate();
    render::RenderOptions opts = options;
    opts.background = view.background;
    render::RenderCache cache;
    const render::ImageBundle img = render::render(grid, env, view.camera, opts, &cache);
    const int w = img.width;
    const int h = img.height;
    const std::size_t np = img.pixel_count();
    const bool want = grad != nullptr;

    Vector d_rgb(want ? 3 * np : 0, 0.0);
    Vector d_mask(want ? np : 0, 0.0);
    Vector d_depth(want ? np : 0, 0.0);
    Vector d_normal(want ? 3 * np : 0, 0.0);
    Vector d_illum(want ? np : 0, 0.0);

    std::vector<unsigned char> surface(np, 0);
    for (std::size_t p = 0; p < np; ++p) {
        const bool defined = img.mask[p] >= render::kMaskThreshold &&
                             (img.normal[3 * p] != 0.0 || img.normal[3 * p + 1] != 0.0 || img.normal[3 * p + 2] != 0.0);
        surface[p] = view.mask[p] >= 0.5 && defined;
    }

    LossBreakdown lb;
    lb.mse = mse_loss(img.rgb, view.rgb, d_rgb, weights.mse);
    lb.mask = mask_loss(img.mask, view.mask, d_mask, weights.mask);
    lb.normal = normal_loss(img.normal, view.normal, surface, d_normal, weights.normal);
    lb.depth = depth_smooth_loss(img.depth, w, h, d_depth, weights.depth);
    lb.bilateral = bilateral_normal_loss(view.rgb, img.normal, surface, w, h, d_normal, weights.bilateral);
    Vector illum_grad(want ? np : 0, 0.0);
    lb.illum = sg::illum_loss(view.rgb, img.illum, view.mask, illum_grad);
    for (std::size_t p = 0; p < d_illum.size(); ++p) {
        d_illum[p] = weights.illum * illum_grad[p];
    }
    if (want) {
        render::RenderUpstream up{d_rgb, d_mask, d_depth, d_normal, d_illum};
        *grad = render::render_backward(grid, env, view.camera, opts, cache, up);
        lb.albedo = albedo_smooth_loss(grid, probes, grad->albedo, weights.albedo);
    } else {
        lb.albedo = albedo_smooth_loss(grid, probes);
    }
    lb.total = weights.mse * lb.mse + weights.mask * lb.mask + weights.normal * lb.normal +
               weights.depth * lb.depth + weights.bilateral * lb.bilateral + weights.albedo * lb.albedo +
               weights.illum * lb.illum;
    return lb;
}

render::SceneGrid initial_coarse_grid(const ReconConfig &config) {
    config.validate();
    return render::SceneGrid::make(config.coarse_resolution, render::FieldKind::kDensity, config.initial_density,
                                   Vec3(0.5, 0.5, 0.5));
}

sg::Envmap initial_envmap(const ReconConfig &config) {
    // Amplitude chosen so the lobes integrate to a uniform unit radiance.
    const double s = 4.0;
    const double lobe_integral = 2.0 * kPi / s * (1.0 - std::exp(-2.0 * s));
    const double a = 4.0 * kPi / (static_cast<double>(config.envmap_lobes) * lobe_integral);
    return sg::fibonacci_envmap(config.envmap_lobes, s, a);
}

namespace {

// Closest distance from p to triangle abc.
double point_triangle_distance(const Vec3 &p, const Vec3 &a, const Vec3 &b, const Vec3 &c) {
    const Vec3 ab = b - a;
    const Vec3 ac = c - a;
    const Vec3 ap = p - a;
    const double d1 = ab.dot(ap);
    const double d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) {
        return ap.norm();
    }
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp);
    const double d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) {
        return bp.norm();
    }
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        return (p - (a + v * ab)).norm();
    }
    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp);
    const double d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) {
        return cp.norm();
    }
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        const double w = d2 / (d2 - d6);
        return (p - (a + w * ac)).norm();
    }
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + w * (c - b))).norm();
    }
    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom;
    const double w = vc * denom;
    return (p - (a + ab * v + ac * w)).norm();
}

// Uniform buckets over the unit cube with cell size >= the query radius, so
// every triangle within that radius sits in one of the 27 neighbouring cells.
class TriangleBuckets {
  public:
    TriangleBuckets(const mesh::TriMesh &m, double radius) : mesh_(m) {
        cells_ = std::max(1, static_cast<int>(std::floor(1.0 / radius)));
        buckets_.resize(static_cast<std::size_t>(cells_) * static_cast<std::size_t>(cells_) *
                        static_cast<std::size_t>(cells_));
        for (std::size_t t = 0; t < m.triangles.size(); ++t) {
            Vec3 lo = m.vertices[static_cast<std::size_t>(m.triangles[t][0])];
            Vec3 hi = lo;
            for (int c = 1; c < 3; ++c) {
                const Vec3 &v = m.vertices[static_cast<std::size_t>(m.triangles[t][static_cast<std::size_t>(c)])];
                lo = lo.cwiseMin(v);
                hi = hi.cwiseMax(v);
            }
            const auto a = cell_of(lo);
            const auto b = cell_of(hi);
            for (int k = a[2]; k <= b[2]; ++k) {
                for (int j = a[1]; j <= b[1]; ++j) {
                    for (int i = a[0]; i <= b[0]; ++i) {
                        buckets_[flat(i, j, k)].push_back(t);
                    }
                }
            }
        }
    }

    double distance(const Vec3 &p, double cap) const {
        double best = cap;
        const auto c = cell_of(p);
        for (int k = std::max(0, c[2] - 1); k <= std::min(cells_ - 1, c[2] + 1); ++k) {
            for (int j = std::max(0, c[1] - 1); j <= std::min(cells_ - 1, c[1] + 1); ++j) {
                for (int i = std::max(0, c[0] - 1); i <= std::min(cells_ - 1, c[0] + 1); ++i) {
                    for (std::size_t t : buckets_[flat(i, j, k)]) {
                        const auto &tri = mesh_.triangles[t];
                        best = std::min(best, point_triangle_distance(p, mesh_.vertices[static_cast<std::size_t>(tri[0])],
                                                                      mesh_.vertices[static_cast<std::size_t>(tri[1])],
                                                                      mesh_.vertices[static_cast<std::size_t>(tri[2])]));
                    }
                }
            }
        }
        return best;
    }

  private:
    std::array<int, 3> cell_of(const Vec3 &p) const {
        std::array<int, 3> c{};
        for (int a = 0; a < 3; ++a) {
            c[static_cast<std::size_t>(a)] =
                std::clamp(static_cast<int>(std::floor((p[a] + 0.5) * cells_)), 0, cells_ - 1);
        }
        return c;
    }
    std::size_t flat(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * static_cast<std::size_t>(cells_) + static_cast<std::size_t>(j)) *
                   static_cast<std::size_t>(cells_) +
               static_cast<std::size_t>(i);
    }

    const mesh::TriMesh &mesh_;
    int cells_ = 1;
    std::vector<std::vector<std::size_t>> buckets_;
};

double initial_beta(const ReconConfig &config) { return 0.5 / static_cast<double>(config.fine_resolution); }

void set_beta(render::SceneGrid &grid, double beta) {
    grid.sdf_beta = beta;
    grid.sdf_alpha = 4.0 / beta;
}

// Envmap parameters per lobe: axis (3), log sharpness, log amplitude.
Vector pack_envmap(const sg::Envmap &env) {
    Vector p;
    p.reserve(5 * env.lobes.size());
    for (const sg::SphericalGaussian &g : env.lobes) {
        p.insert(p.end(), {g.axis.x(), g.axis.y(), g.axis.z(), std::log(g.sharpness), std::log(std::max(g.amplitude, 1e-9))});
    }
    return p;
}

void unpack_envmap(std::span<double> p, sg::Envmap &env) {
    for (std::size_t i = 0; i < env.lobes.size(); ++i) {
        Vec3 axis(p[5 * i], p[5 * i + 1], p[5 * i + 2]);
        const double len = axis.norm();
        axis = len > 1e-12 ? Vec3(axis / len) : Vec3(0.0, 0.0, 1.0);
        p[5 * i] = axis.x();
        p[5 * i + 1] = axis.y();
        p[5 * i + 2] = axis.z();
        p[5 * i + 3] = std::clamp(p[5 * i + 3], std::log(0.05), std::log(500.0));
        p[5 * i + 4] = std::clamp(p[5 * i + 4], -20.0, 5.0);
        env.lobes[i].axis = axis;
        env.lobes[i].sharpness = std::exp(p[5 * i + 3]);
        env.lobes[i].amplitude = std::exp(p[5 * i + 4]);
    }
}

Vector envmap_param_grad(const sg::Envmap &env, std::span<const sg::LobeGrad> lobes) {
    Vector g(5 * env.lobes.size(), 0.0);
    for (std::size_t i = 0; i < lobes.size(); ++i) {
        g[5 * i] = lobes[i].d_axis.x();
        g[5 * i + 1] = lobes[i].d_axis.y();
        g[5 * i + 2] = lobes[i].d_axis.z();
        g[5 * i + 3] = env.lobes[i].sharpness * lobes[i].d_sharpness;
        g[5 * i + 4] = env.lobes[i].amplitude * lobes[i].d_amplitude;
    }
    return g;
}

void add_gradient(render::RenderGradient &into, const render::RenderGradient &g) {
    for (std::size_t i = 0; i < into.field.size(); ++i) {
        into.field[i] += g.field[i];
    }
    for (std::size_t i = 0; i < into.albedo.size(); ++i) {
        into.albedo[i] += g.albedo[i];
    }
    for (std::size_t i = 0; i < into.lobes.size(); ++i) {
        into.lobes[i].d_axis += g.lobes[i].d_axis;
        into.lobes[i].d_sharpness += g.lobes[i].d_sharpness;
        into.lobes[i].d_amplitude += g.lobes[i].d_amplitude;
    }
}

void require_finite(double v, const std::string &term, int iter) {
    if (!std::isfinite(v)) {
        throw NumericalError("loss term '" + term + "' is not finite at iteration " + std::to_string(iter));
    }
}

orbit::Camera random_camera(Rng &rng, const orbit::Camera &like) {
    // Uniform direction on the sphere, elevation kept off the poles.
    const double z = uniform(rng, -1.0, 1.0);
    const double elev = std::clamp(rad_to_deg(std::asin(z)), -85.0, 85.0);
    orbit::Camera cam = like;
    cam.pose = orbit::CameraPose::normalized(elev, uniform(rng, 0.0, 360.0));
    return cam;
}

struct StageSetup {
    std::vector<View> views;
    int samples = 64;
    int iters = 0;
    int iter_offset = 0;
};

} // namespace

namespace {

// Bilinear lookup of a view mask at the projection of x; 0 behind the camera.
double projected_mask(const orbit::CameraGeometry &g, const View &view, const Vec3 &x) {
    const Vec3 c = g.rotation * (x - g.center);
    if (c.z() <= 1e-9) {
        return 0.0;
    }
    const int w = view.camera.width;
    const int h = view.camera.height;
    const double px = g.intrinsics(0, 0) * c.x() / c.z() + g.intrinsics(0, 2) - 0.5;
    const double py = g.intrinsics(1, 1) * c.y() / c.z() + g.intrinsics(1, 2) - 0.5;
    const int x0 = static_cast<int>(std::floor(px));
    const int y0 = static_cast<int>(std::floor(py));
    const double fx = px - x0;
    const double fy = py - y0;
    double acc = 0.0;
    for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
            const int xx = std::clamp(x0 + dx, 0, w - 1);
            const int yy = std::clamp(y0 + dy, 0, h - 1);
            acc += (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy) *
                   view.mask[static_cast<std::size_t>(yy) * static_cast<std::size_t>(w) + static_cast<std::size_t>(xx)];
        }
    }
    return acc;
}

// Largest transmittance from any camera center to x through the coarse density.
double max_transmittance(const render::SceneGrid &coarse, std::span<const orbit::CameraGeometry> cams, const Vec3 &x) {
    const double step = 0.5 / static_cast<double>(coarse.resolution);
    const double cap = 6.0;
    double best = 0.0;
    for (const orbit::CameraGeometry &g : cams) {
        // Only the part of the segment inside the unit cube carries density.
        const Vec3 d = x - g.center;
        double t0 = 0.0;
        for (int a = 0; a < 3; ++a) {
            if (std::abs(d[a]) > 1e-12) {
                t0 = std::max(t0, ((d[a] > 0.0 ? -0.5 : 0.5) - g.center[a]) / d[a]);
            }
        }
        const Vec3 dir = d.normalized();
        const double len = (1.0 - t0) * d.norm();
        const int m = std::max(1, static_cast<int>(std::ceil(len / step)));
        const double dt = len / m;
        double depth = 0.0;
        for (int q = 0; q < m && depth < cap; ++q) {
            const Vec3 p = x - dir * ((q + 0.5) * dt);
            depth += dt * render::interpolate(coarse.field, render::trilinear_stencil(coarse.resolution, p));
        }
        best = std::max(best, std::exp(-std::min(depth, cap)));
        if (best > 0.999) {
            break;
        }
    }
    return best;
}

} // namespace

Vector coarse_solidity(const render::SceneGrid &coarse, int resolution, std::span<const View> views,
                       double seen_transmittance) {
    if (coarse.kind != render::FieldKind::kDensity) {
        throw ContractError("coarse_solidity expects a density grid");
    }
    if (resolution < 2) {
        throw DomainError("coarse_solidity: resolution must be at least 2");
    }
    if (views.empty()) {
        throw DomainError("coarse_solidity needs views");
    }
    if (!(seen_transmittance > 0.0 && seen_transmittance < 1.0)) {
        throw DomainError("coarse_solidity: transmittance threshold must be in (0, 1)");
    }
    const double gain = 0.5 / (1.0 - seen_transmittance);
    std::vector<orbit::CameraGeometry> cams;
    for (const View &v : views) {
        cams.push_back(orbit::camera_matrix(v.camera));
    }
    const std::size_t r = static_cast<std::size_t>(resolution);
    Vector out(r * r * r, 0.0);
    for (int k = 0; k < resolution; ++k) {
        for (int j = 0; j < resolution; ++j) {
            for (int i = 0; i < resolution; ++i) {
                const Vec3 x((i + 0.5) / resolution - 0.5, (j + 0.5) / resolution - 0.5, (k + 0.5) / resolution - 0.5);
                double hull = 1.0;
                for (std::size_t v = 0; v < views.size() && hull > 0.0; ++v) {
                    hull = std::min(hull, projected_mask(cams[v], views[v], x));
                }
                double s = 0.0;
                if (hull > 0.0) {
                    s = std::min(hull, std::clamp(gain * (1.0 - max_transmittance(coarse, cams, x)), 0.0, 1.0));
                }
                out[(static_cast<std::size_t>(k) * r + static_cast<std::size_t>(j)) * r + static_cast<std::size_t>(i)] = s;
            }
        }
    }
    return out;
}

render::SceneGrid coarse_to_fine(const render::SceneGrid &coarse, const ReconConfig &config,
                                 std::span<const View> views) {
    config.validate();
    const int n = config.fine_resolution;
    render::SceneGrid fine = render::resample(coarse, n);
    fine.kind = render::FieldKind::kSdf;
    set_beta(fine, initial_beta(config));
    render::SceneGrid solid = fine;
    solid.kind = render::FieldKind::kDensity;
    solid.field = coarse_solidity(coarse, n, views, config.seen_transmittance);
    const mesh::TriMesh surface = mesh::extract_surface(solid, 0.5, true);
    const double trunc = config.sdf_truncation;
    if (surface.empty()) {
        for (int k = 0; k < n; ++k) {
            for (int j = 0; j < n; ++j) {
                for (int i = 0; i < n; ++i) {
                    const double d = fine.voxel_center(i, j, k).norm() - 0.3;
                    fine.field[fine.index(i, j, k)] = std::clamp(d, -trunc, trunc);
                }
            }
        }
        return fine;
    }
    const TriangleBuckets buckets(surface, trunc);
    for (int k = 0; k < n; ++k) {
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                const std::size_t v = fine.index(i, j, k);
                const double d = buckets.distance(fine.voxel_center(i, j, k), trunc);
                fine.field[v] = solid.field[v] > 0.5 ? -d : d;
            }
        }
    }
    return fine;
}

ReconResult reconstruct(std::span<const View> views, const ReconConfig &config, SdsGuidance *guidance,
                        const sg::Envmap *envmap) {
    config.validate();
    if (views.empty()) {
        throw DomainError("reconstruction needs at least one view");
    }
    for (const View &v : views) {
        v.validate();
    }
    ReconResult result;
    result.envmap = envmap ? *envmap : initial_envmap(config);
    for (const sg::SphericalGaussian &g : result.envmap.lobes) {
        g.validate();
    }
    Rng rng(derive_seed(config.seed, "reconstruct"));

    std::vector<Vec3> reference_centers;
    for (const View &v : views) {
        reference_centers.push_back(orbit::camera_matrix(v.camera).center);
    }

    Vector env_params = pack_envmap(result.envmap);
    AdamState env_state;

    auto make_stage = [&](int factor, int samples, int iters, int offset) {
        StageSetup s;
        for (const View &v : views) {
            s.views.push_back(downsample_view(v, factor));
        }
        s.samples = samples;
        s.iters = iters;
        s.iter_offset = offset;
        return s;
    };

    // Runs one stage. `to_field` maps parameters to the stored field and
    // `dfield` gives d field / d theta at the current parameters.
    auto run_stage = [&](render::SceneGrid &grid, Vector &theta, const StageSetup &stage, auto to_field,
                         auto dfield, auto on_iter) {
        AdamState field_state;
        AdamState albedo_state;
        std::uniform_int_distribution<std::size_t> pick(0, stage.views.size() - 1);
        for (int it = 0; it < stage.iters; ++it) {
            const int global = stage.iter_offset + it;
            on_iter(it, grid);
            const View &view = stage.views[pick(rng)];
            const std::vector<AlbedoProbe> probes = sample_albedo_probes(grid, config.albedo_probes, rng);
            render::RenderOptions opts;
            opts.samples_per_ray = stage.samples;
            opts.jitter_seed = derive_seed(config.seed, "jitter-" + std::to_string(global));
            render::RenderGradient grad;
            const LossBreakdown lb = view_loss(grid, result.envmap, view, config.weights, probes, opts, &grad);
            const std::pair<const char *, double> terms[] = {
                {"mse", lb.mse},       {"mask", lb.mask},           {"normal", lb.normal}, {"depth", lb.depth},
                {"bilateral", lb.bilateral}, {"albedo", lb.albedo}, {"illum", lb.illum},   {"total", lb.total}};
            for (const auto &[name, value] : terms) {
                require_finite(value, name, global);
                result.losses.push_back({global, name, value});
            }

            const bool sds_active = guidance != nullptr && grid.kind == render::FieldKind::kSdf &&
                                    config.weights.sds > 0.0 && it >= stage.iters - config.sds_window;
            if (sds_active) {
                const orbit::Camera cam = random_camera(rng, view.camera);
                render::RenderOptions sopts = opts;
                sopts.background = Vec3(1.0, 1.0, 1.0);
                sopts.jitter_seed = derive_seed(config.seed, "sds-jitter-" + std::to_string(global));
                render::RenderCache cache;
                const render::ImageBundle img = render::render(grid, result.envmap, cam, sopts, &cache);
                Vector mask;
                if (config.masked_sds) {
                    const auto pts = render::surface_points_and_normals(grid, cam, stage.samples);
                    mask = visibility_mask(pts, reference_centers, img.pixel_count());
                }
                const double sigma =
                    std::exp(uniform(rng, std::log(config.sds_sigma_min), std::log(config.sds_sigma_max)));
                Vector g = sds_gradient(*guidance, img.rgb, cam, sigma, rng, mask);
                double sq = 0.0;
                for (double &x : g) {
                    sq += x * x;
                    x *= config.weights.sds;
                }
                const double sds_value = sq / static_cast<double>(g.size());
                require_finite(sds_value, "sds", global);
                result.losses.push_back({global, "sds", sds_value});
                render::RenderUpstream up;
                up.rgb = g;
                add_gradient(grad, render::render_backward(grid, result.envmap, cam, sopts, cache, up));
            }

            Vector dtheta(theta.size());
            for (std::size_t i = 0; i < theta.size(); ++i) {
                dtheta[i] = grad.field[i] * dfield(theta[i]);
            }
            adam_step(theta, dtheta, field_state, config.adam);
            for (std::size_t i = 0; i < theta.size(); ++i) {
                grid.field[i] = to_field(theta[i]);
            }
            adam_step(grid.albedo, grad.albedo, albedo_state, config.adam);
            for (double &a : grid.albedo) {
                a = std::clamp(a, 0.0, 1.0);
            }
            if (config.learn_envmap) {
                adam_step(env_params, envmap_param_grad(result.envmap, grad.lobes), env_state, config.adam);
                unpack_envmap(env_params, result.envmap);
            }
        }
    };

    // Coarse stage: density = exp(kappa * theta), on grids that double in
    // resolution up to the coarse resolution.
    const double kappa = config.density_scale;
    render::SceneGrid coarse = initial_coarse_grid(config);
    Vector theta;
    int done = 0;
    for (int level = 0; level < config.coarse_levels; ++level) {
        const int res = config.coarse_resolution >> (config.coarse_levels - 1 - level);
        if (level == 0) {
            coarse = render::resample(coarse, res);
            theta.assign(coarse.field.size(), std::log(config.initial_density) / kappa);
        } else {
            render::SceneGrid params = coarse;
            params.field = theta;
            params = render::resample(params, res);
            theta = params.field;
            coarse = render::resample(coarse, res);
            coarse.albedo = params.albedo;
        }
        for (std::size_t i = 0; i < theta.size(); ++i) {
            coarse.field[i] = std::exp(kappa * theta[i]);
        }
        const int end = static_cast<int>(static_cast<long>(config.coarse_iters) * (level + 1) / config.coarse_levels);
        const StageSetup level_stage =
            make_stage(config.coarse_image_factor, config.coarse_samples, end - done, done);
        run_stage(
            coarse, theta, level_stage, [&](double t) { return std::exp(kappa * t); },
            [&](double t) { return kappa * std::exp(kappa * t); }, [](int, render::SceneGrid &) {});
        done = end;
    }
    result.coarse = coarse;

    // Fine stage: sdf = scale * theta, beta halved at evenly spaced points.
    render::SceneGrid fine = coarse_to_fine(coarse, config, views);
    const double scale = config.sdf_scale;
    Vector phi(fine.field.size());
    for (std::size_t i = 0; i < phi.size(); ++i) {
        phi[i] = fine.field[i] / scale;
    }
    const StageSetup fine_stage =
        make_stage(config.fine_image_factor, config.fine_samples, config.fine_iters, config.coarse_iters);
    const double beta0 = initial_beta(config);
    const int phases = config.beta_halvings + 1;
    run_stage(
        fine, phi, fine_stage, [&](double t) { return scale * t; }, [&](double) { return scale; },
        [&](int it, render::SceneGrid &g) {
            const int k = std::min(config.beta_halvings, it * phases / std::max(1, config.fine_iters));
            set_beta(g, beta0 / std::pow(2.0, k));
        });
    result.grid = fine;
    result.mesh = mesh::extract_surface(fine, 0.0, true);
    return result;
}

void write_loss_csv(std::ostream &out, std::span<const LossRecord> records) {
    out << "iter,term,value\n";
    out.precision(17);
    for (const LossRecord &r : records) {
        out << r.iter << ',' << r.term << ',' << r.value << '\n';
    }
}

} // namespace orbitforge::recon
