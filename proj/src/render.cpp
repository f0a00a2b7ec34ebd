// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

#include "orbitforge/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace orbitforge::render {

namespace {

// Samples with weight at or below this are composited for opacity but not shaded.
constexpr double kShadeWeight = 1e-10;
// Rays stop once transmittance falls below this.
constexpr double kMinTransmittance = 1e-10;
constexpr double kMinGradientNorm = 1e-9;

struct Sample {
    Trilinear tri;
    double t = 0.0;
    double rho = 0.0;
    double drho_dfield = 0.0;
    double alpha = 0.0;
    double transmittance = 0.0;
    double weight = 0.0;
    bool shaded = false;
    Vec3 albedo = Vec3::Zero();
    Vec3 grad = Vec3::Zero();
    double grad_norm = 0.0;
    Vec3 normal = Vec3::Zero();
    double irradiance = 0.0;
};

struct Ray {
    Vec3 origin;
    Vec3 dir;
    double dt = 0.0;
    std::vector<Sample> samples;
};

struct PixelResult {
    Vec3 rgb = Vec3::Zero();
    double mask = 0.0;
    double depth_sum = 0.0;
    Vec3 normal_sum = Vec3::Zero();
    double illum = 0.0;
};

double pixel_jitter(std::uint64_t seed, std::size_t pixel) {
    return hash_to_unit(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(pixel) + 1)));
}

double normal_sign(FieldKind kind) { return kind == FieldKind::kDensity ? -1.0 : 1.0; }

// Marches one ray, filling `ray.samples`. Shared by forward and backward so
// both see identical samples.
PixelResult march(const SceneGrid &grid, std::span<const double> gradient_grid, const sg::Envmap *env, int samples,
                  std::uint64_t seed, std::size_t pixel, Ray &ray) {
    PixelResult r;
    ray.samples.clear();
    double t0 = 0.0;
    double t1 = 0.0;
    if (!intersect_unit_box(ray.origin, ray.dir, t0, t1)) {
        return r;
    }
    ray.dt = (t1 - t0) / static_cast<double>(samples);
    const double u = pixel_jitter(seed, pixel);
    const double sign = normal_sign(grid.kind);
    double transmittance = 1.0;
    for (int j = 0; j < samples; ++j) {
        Sample s;
        s.t = t0 + (static_cast<double>(j) + u) * ray.dt;
        const Vec3 x = ray.origin + s.t * ray.dir;
        s.tri = trilinear_stencil(grid.resolution, x);
        const double f = interpolate(grid.field, s.tri);
        if (grid.kind == FieldKind::kDensity) {
            s.rho = std::max(f, 0.0);
            s.drho_dfield = f > 0.0 ? 1.0 : 0.0;
        } else {
            s.rho = sdf_to_density(f, grid.sdf_alpha, grid.sdf_beta);
            s.drho_dfield = sdf_to_density_derivative(f, grid.sdf_alpha, grid.sdf_beta);
        }
        s.alpha = -std::expm1(-s.rho * ray.dt);
        s.transmittance = transmittance;
        s.weight = transmittance * s.alpha;
        if (s.weight > kShadeWeight) {
            s.shaded = true;
            s.albedo = interpolate3(grid.albedo, s.tri);
            s.grad = interpolate3(gradient_grid, s.tri);
            s.grad_norm = s.grad.norm();
            s.normal = s.grad_norm >= kMinGradientNorm ? Vec3(sign * s.grad / s.grad_norm) : Vec3(-ray.dir);
            s.irradiance = env ? sg::irradiance(*env, s.normal) : 0.0;
            r.rgb += s.weight * s.irradiance * s.albedo;
            r.normal_sum += s.weight * s.normal;
            r.illum += s.weight * s.irradiance;
        }
        r.mask += s.weight;
        r.depth_sum += s.weight * s.t;
        transmittance *= 1.0 - s.alpha;
        ray.samples.push_back(s);
        if (transmittance < kMinTransmittance) {
            break;
        }
    }
    return r;
}

void check_inputs(const SceneGrid &grid, const orbit::Camera &camera, const RenderOptions &options) {
    grid.validate();
    if (options.samples_per_ray < 2) {
        throw DomainError("samples_per_ray must be at least 2");
    }
    if (camera.width < 1 || camera.height < 1) {
        throw DomainError("image size must be positive");
    }
    if (grid.kind == FieldKind::kSdf && !(grid.sdf_beta > 0.0 && grid.sdf_alpha > 0.0)) {
        throw DomainError("sdf grid needs alpha > 0 and beta > 0");
    }
}

double span_at(std::span<const double> s, std::size_t i) { return s.empty() ? 0.0 : s[i]; }

} // namespace

bool intersect_unit_box(const Vec3 &origin, const Vec3 &dir, double &t0, double &t1) {
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (std::abs(dir[a]) < 1e-15) {
            if (origin[a] < -0.5 || origin[a] > 0.5) {
                return false;
            }
            continue;
        }
        double ta = (-0.5 - origin[a]) / dir[a];
        double tb = (0.5 - origin[a]) / dir[a];
        if (ta > tb) {
            std::swap(ta, tb);
        }
        lo = std::max(lo, ta);
        hi = std::min(hi, tb);
    }
    if (!(hi > lo)) {
        return false;
    }
    t0 = lo;
    t1 = hi;
    return true;
}

ImageBundle render(const SceneGrid &grid, const sg::Envmap &env, const orbit::Camera &camera,
                   const RenderOptions &options, RenderCache *cache) {
    check_inputs(grid, camera, options);
    const orbit::CameraGeometry geom = orbit::camera_matrix(camera);
    Vector gradient_grid = field_gradient(grid.resolution, grid.field);

    ImageBundle out;
    out.width = camera.width;
    out.height = camera.height;
    const std::size_t np = out.pixel_count();
    out.rgb.assign(3 * np, 0.0);
    out.mask.assign(np, 0.0);
    out.depth.assign(np, std::numeric_limits<double>::infinity());
    out.normal.assign(3 * np, 0.0);
    out.illum.assign(np, 0.0);

    Ray ray;
    ray.origin = geom.center;
    for (int py = 0; py < camera.height; ++py) {
        for (int px = 0; px < camera.width; ++px) {
            const std::size_t p = static_cast<std::size_t>(py) * static_cast<std::size_t>(camera.width) +
                                  static_cast<std::size_t>(px);
            ray.dir = orbit::pixel_ray(geom, px, py);
            const PixelResult r =
                march(grid, gradient_grid, &env, options.samples_per_ray, options.jitter_seed, p, ray);
            const double mask = std::clamp(r.mask, 0.0, 1.0);
            const Vec3 rgb = r.rgb + (1.0 - r.mask) * options.background;
            for (int c = 0; c < 3; ++c) {
                out.rgb[3 * p + static_cast<std::size_t>(c)] = rgb[c];
            }
            out.mask[p] = mask;
            out.illum[p] = r.illum;
            if (r.mask >= kMaskThreshold) {
                out.depth[p] = r.depth_sum / r.mask;
                const double nn = r.normal_sum.norm();
                if (nn > 0.0) {
                    const Vec3 n = r.normal_sum / nn;
                    for (int c = 0; c < 3; ++c) {
                        out.normal[3 * p + static_cast<std::size_t>(c)] = n[c];
                    }
                }
            }
        }
    }
    if (cache) {
        cache->valid = true;
        cache->resolution = grid.resolution;
        cache->width = camera.width;
        cache->height = camera.height;
        cache->samples = options.samples_per_ray;
        cache->field_gradient = std::move(gradient_grid);
    }
    return out;
}

RenderGradient render_backward(const SceneGrid &grid, const sg::Envmap &env, const orbit::Camera &camera,
                               const RenderOptions &options, const RenderCache &cache,
                               const RenderUpstream &upstream) {
    if (!cache.valid) {
        throw ContractError("render_backward called without a forward render cache");
    }
    check_inputs(grid, camera, options);
    if (cache.resolution != grid.resolution || cache.width != camera.width || cache.height != camera.height ||
        cache.samples != options.samples_per_ray) {
        throw ContractError("render cache does not match the backward inputs");
    }
    const std::size_t np = static_cast<std::size_t>(camera.width) * static_cast<std::size_t>(camera.height);
    auto check = [&](std::span<const double> s, std::size_t n, const char *name) {
        if (!s.empty() && s.size() != n) {
            throw ContractError(std::string("upstream gradient for ") + name + " has the wrong size");
        }
    };
    check(upstream.rgb, 3 * np, "rgb");
    check(upstream.mask, np, "mask");
    check(upstream.depth, np, "depth");
    check(upstream.normal, 3 * np, "normal");
    check(upstream.illum, np, "illum");

    const orbit::CameraGeometry geom = orbit::camera_matrix(camera);
    const std::span<const double> gradient_grid = cache.field_gradient;
    const double sign = normal_sign(grid.kind);

    RenderGradient out;
    out.field.assign(grid.voxel_count(), 0.0);
    out.albedo.assign(3 * grid.voxel_count(), 0.0);
    out.lobes.assign(env.lobes.size(), sg::LobeGrad{});
    Vector d_gradient_grid(3 * grid.voxel_count(), 0.0);
    bool any_normal_grad = false;

    Ray ray;
    ray.origin = geom.center;
    std::vector<double> g;
    for (int py = 0; py < camera.height; ++py) {
        for (int px = 0; px < camera.width; ++px) {
            const std::size_t p = static_cast<std::size_t>(py) * static_cast<std::size_t>(camera.width) +
                                  static_cast<std::size_t>(px);
            const Vec3 g_rgb(span_at(upstream.rgb, 3 * p), span_at(upstream.rgb, 3 * p + 1),
                             span_at(upstream.rgb, 3 * p + 2));
            const double g_mask = span_at(upstream.mask, p);
            double g_depth = span_at(upstream.depth, p);
            Vec3 g_normal(span_at(upstream.normal, 3 * p), span_at(upstream.normal, 3 * p + 1),
                          span_at(upstream.normal, 3 * p + 2));
            const double g_illum = span_at(upstream.illum, p);
            if (g_rgb.isZero(0.0) && g_mask == 0.0 && g_depth == 0.0 && g_normal.isZero(0.0) && g_illum == 0.0) {
                continue;
            }
            ray.dir = orbit::pixel_ray(geom, px, py);
            const PixelResult r =
                march(grid, gradient_grid, &env, options.samples_per_ray, options.jitter_seed, p, ray);
            if (ray.samples.empty()) {
                continue;
            }

            // Gradients of the normalized buffers with respect to their raw sums.
            double depth = 0.0;
            Vec3 g_normal_sum = Vec3::Zero();
            if (r.mask >= kMaskThreshold) {
                depth = r.depth_sum / r.mask;
                g_depth /= r.mask;
                const double nn = r.normal_sum.norm();
                if (nn > 0.0) {
                    const Vec3 n = r.normal_sum / nn;
                    g_normal_sum = (g_normal - n * n.dot(g_normal)) / nn;
                }
            } else {
                g_depth = 0.0;
                g_normal.setZero();
            }
            // The mask is clamped to [0, 1] on output; the sum of weights is at
            // most 1 - T_end, so the clamp is inactive and passes through.

            // G_j = dLoss/dw_j with all per-sample quantities held fixed.
            const std::size_t m = ray.samples.size();
            g.assign(m, 0.0);
            for (std::size_t j = 0; j < m; ++j) {
                const Sample &s = ray.samples[j];
                double gj = g_mask - g_rgb.dot(options.background) + g_depth * (s.t - depth);
                if (s.shaded) {
                    gj += g_rgb.dot(s.irradiance * s.albedo) + g_normal_sum.dot(s.normal) + g_illum * s.irradiance;
                }
                g[j] = gj;
            }

            double suffix = 0.0; // sum_{k > j} w_k G_k
            for (std::size_t jj = m; jj-- > 0;) {
                const Sample &s = ray.samples[jj];
                const double d_rho = ray.dt * (s.transmittance * (1.0 - s.alpha) * g[jj] - suffix);
                suffix += s.weight * g[jj];
                const double d_field = d_rho * s.drho_dfield;

                if (s.shaded) {
                    // albedo
                    const Vec3 d_albedo = s.weight * s.irradiance * g_rgb;
                    // irradiance -> lobes and normal
                    const double d_irr = s.weight * (g_rgb.dot(s.albedo) + g_illum);
                    Vec3 d_n = s.weight * g_normal_sum;
                    if (d_irr != 0.0) {
                        sg::irradiance_accumulate(env, s.normal, d_irr, out.lobes, &d_n);
                    }
                    Vec3 d_grad = Vec3::Zero();
                    if (s.grad_norm >= kMinGradientNorm && !d_n.isZero(0.0)) {
                        d_grad = sign * (d_n - s.normal * s.normal.dot(d_n)) / s.grad_norm;
                        any_normal_grad = true;
                    }
                    for (int c = 0; c < 8; ++c) {
                        const std::size_t v = s.tri.index[static_cast<std::size_t>(c)];
                        const double wt = s.tri.weight[static_cast<std::size_t>(c)];
                        for (int a = 0; a < 3; ++a) {
                            out.albedo[3 * v + static_cast<std::size_t>(a)] += wt * d_albedo[a];
                            d_gradient_grid[3 * v + static_cast<std::size_t>(a)] += wt * d_grad[a];
                        }
                    }
                }
                if (d_field != 0.0) {
                    for (int c = 0; c < 8; ++c) {
                        out.field[s.tri.index[static_cast<std::size_t>(c)]] +=
                            s.tri.weight[static_cast<std::size_t>(c)] * d_field;
                    }
                }
            }
        }
    }
    if (any_normal_grad) {
        field_gradient_adjoint(grid.resolution, d_gradient_grid, out.field);
    }
    return out;
}

std::vector<SurfacePoint> surface_points_and_normals(const SceneGrid &grid, const orbit::Camera &camera,
                                                     int samples_per_ray) {
    RenderOptions options;
    options.samples_per_ray = samples_per_ray;
    check_inputs(grid, camera, options);
    const orbit::CameraGeometry geom = orbit::camera_matrix(camera);
    const Vector gradient_grid = field_gradient(grid.resolution, grid.field);
    const double sign = normal_sign(grid.kind);
    std::vector<SurfacePoint> out;
    Ray ray;
    ray.origin = geom.center;
    for (int py = 0; py < camera.height; ++py) {
        for (int px = 0; px < camera.width; ++px) {
            const std::size_t p = static_cast<std::size_t>(py) * static_cast<std::size_t>(camera.width) +
                                  static_cast<std::size_t>(px);
            ray.dir = orbit::pixel_ray(geom, px, py);
            const PixelResult r = march(grid, gradient_grid, nullptr, samples_per_ray, options.jitter_seed, p, ray);
            if (r.mask < kMaskThreshold) {
                continue;
            }
            SurfacePoint sp;
            sp.pixel = static_cast<int>(p);
            sp.point = ray.origin + (r.depth_sum / r.mask) * ray.dir;
            const Vec3 grad = interpolate3(gradient_grid, trilinear_stencil(grid.resolution, sp.point));
            const double gn = grad.norm();
            if (gn >= kMinGradientNorm) {
                sp.normal = sign * grad / gn;
            } else {
                const double nn = r.normal_sum.norm();
                sp.normal = nn > 0.0 ? Vec3(r.normal_sum / nn) : Vec3(-ray.dir);
            }
            out.push_back(sp);
        }
    }
    return out;
}

} // namespace orbitforge::render
