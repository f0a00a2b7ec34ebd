// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

#include "orbitforge/losses.hpp"

#include "orbitforge/image.hpp"

#include <algorithm>
#include <cmath>

namespace orbitforge::recon {

namespace {

void require_size(std::span<const double> a, std::size_t n, const char *what) {
    if (a.size() != n) {
        throw ContractError(std::string(what) + " has the wrong size");
    }
}

void require_grad(std::span<double> g, std::size_t n, const char *what) {
    if (!g.empty() && g.size() != n) {
        throw ContractError(std::string("gradient buffer for ") + what + " has the wrong size");
    }
}

} // namespace

double mse_loss(std::span<const double> a, std::span<const double> b, std::span<double> grad_a, double scale) {
    require_size(b, a.size(), "mse target");
    require_grad(grad_a, a.size(), "mse");
    if (a.empty()) {
        return 0.0;
    }
    const double inv = 1.0 / static_cast<double>(a.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
        if (!grad_a.empty()) {
            grad_a[i] += scale * 2.0 * d * inv;
        }
    }
    return s * inv;
}

double mask_loss(std::span<const double> predicted, std::span<const double> target, std::span<double> grad,
                 double scale) {
    return mse_loss(predicted, target, grad, scale);
}

double normal_loss(std::span<const double> n, std::span<const double> n_ref, std::span<const unsigned char> surface,
                   std::span<double> grad, double scale) {
    const std::size_t np = surface.size();
    require_size(n, 3 * np, "normal buffer");
    require_size(n_ref, 3 * np, "reference normal buffer");
    require_grad(grad, 3 * np, "normal");
    std::size_t count = 0;
    for (unsigned char s : surface) {
        count += s ? 1 : 0;
    }
    if (count == 0) {
        return 0.0;
    }
    const double inv = 1.0 / static_cast<double>(count);
    double total = 0.0;
    for (std::size_t p = 0; p < np; ++p) {
        if (!surface[p]) {
            continue;
        }
        double dot = 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
            dot += n[3 * p + c] * n_ref[3 * p + c];
        }
        total += 1.0 - dot;
        if (!grad.empty()) {
            for (std::size_t c = 0; c < 3; ++c) {
                grad[3 * p + c] -= scale * inv * n_ref[3 * p + c];
            }
        }
    }
    return total * inv;
}

double depth_smooth_loss(std::span<const double> depth, int width, int height, std::span<double> grad,
                         double scale) {
    const std::size_t np = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    require_size(depth, np, "depth buffer");
    require_grad(grad, np, "depth");
    // Two passes: count the valid pairs, then accumulate.
    std::size_t pairs = 0;
    double total = 0.0;
    auto visit = [&](auto &&fn) {
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                                      static_cast<std::size_t>(x);
                if (!std::isfinite(depth[p])) {
                    continue;
                }
                if (x + 1 < width && std::isfinite(depth[p + 1])) {
                    fn(p, p + 1);
                }
                if (y + 1 < height && std::isfinite(depth[p + static_cast<std::size_t>(width)])) {
                    fn(p, p + static_cast<std::size_t>(width));
                }
            }
        }
    };
    visit([&](std::size_t p, std::size_t q) {
        const double d = depth[p] - depth[q];
        total += d * d;
        ++pairs;
    });
    if (pairs == 0) {
        return 0.0;
    }
    const double inv = 1.0 / static_cast<double>(pairs);
    if (!grad.empty()) {
        visit([&](std::size_t p, std::size_t q) {
            const double g = scale * 2.0 * (depth[p] - depth[q]) * inv;
            grad[p] += g;
            grad[q] -= g;
        });
    }
    return total * inv;
}

double bilateral_normal_loss(std::span<const double> image, std::span<const double> n,
                             std::span<const unsigned char> surface, int width, int height, std::span<double> grad,
                             double scale) {
    const std::size_t np = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    require_size(image, 3 * np, "bilateral guide image");
    require_size(n, 3 * np, "normal buffer");
    if (surface.size() != np) {
        throw ContractError("surface mask has the wrong size");
    }
    require_grad(grad, 3 * np, "bilateral");

    Vector luma(np);
    for (std::size_t p = 0; p < np; ++p) {
        luma[p] = image::luma(image[3 * p], image[3 * p + 1], image[3 * p + 2]);
    }
    std::size_t count = 0;
    for (unsigned char s : surface) {
        count += s ? 1 : 0;
    }
    if (count == 0) {
        return 0.0;
    }
    const double inv = 1.0 / static_cast<double>(count);
    constexpr double kEps = 1e-6;
    double total = 0.0;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const std::size_t p = static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                                  static_cast<std::size_t>(x);
            if (!surface[p]) {
                continue;
            }
            double ix = 0.0;
            double iy = 0.0;
            Vec3 nx = Vec3::Zero();
            Vec3 ny = Vec3::Zero();
            std::size_t taps[3][3];
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int xi = std::clamp(x + dx, 0, width - 1);
                    const int yi = std::clamp(y + dy, 0, height - 1);
                    const std::size_t qi = static_cast<std::size_t>(yi) * static_cast<std::size_t>(width) +
                                           static_cast<std::size_t>(xi);
                    const double kx = dx * (2 - std::abs(dy)) / 8.0;
                    const double ky = dy * (2 - std::abs(dx)) / 8.0;
                    ix += kx * luma[qi];
                    iy += ky * luma[qi];
                    const bool inside = x + dx >= 0 && x + dx < width && y + dy >= 0 && y + dy < height;
                    const std::size_t q = inside && surface[qi] ? qi : p;
                    taps[dy + 1][dx + 1] = q;
                    const Vec3 nq(n[3 * q], n[3 * q + 1], n[3 * q + 2]);
                    nx += kx * nq;
                    ny += ky * nq;
                }
            }
            const double edge = std::exp(-3.0 * std::sqrt(ix * ix + iy * iy));
            const double m = std::sqrt(nx.squaredNorm() + ny.squaredNorm() + kEps);
            const double root = std::sqrt(1.0 + m);
            total += edge * root;
            if (!grad.empty()) {
                // d/dF of edge * sqrt(1 + sqrt(F + eps))
                const double d_f = scale * inv * edge / (2.0 * root) / (2.0 * m);
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const double kx = dx * (2 - std::abs(dy)) / 8.0;
                        const double ky = dy * (2 - std::abs(dx)) / 8.0;
                        const std::size_t q = taps[dy + 1][dx + 1];
                        const Vec3 g = d_f * 2.0 * (kx * nx + ky * ny);
                        for (int c = 0; c < 3; ++c) {
                            grad[3 * q + static_cast<std::size_t>(c)] += g[c];
                        }
                    }
                }
            }
        }
    }
    return total * inv;
}

std::vector<AlbedoProbe> sample_albedo_probes(const render::SceneGrid &grid, int n, Rng &rng, double sigma) {
    if (n < 1) {
        throw DomainError("albedo smoothness needs at least one probe");
    }
    grid.validate();
    std::vector<std::size_t> candidates;
    const double h = grid.voxel_size();
    double top = 0.0;
    if (grid.kind == render::FieldKind::kDensity) {
        top = *std::max_element(grid.field.begin(), grid.field.end());
    }
    for (std::size_t v = 0; v < grid.voxel_count(); ++v) {
        const double f = grid.field[v];
        const bool near = grid.kind == render::FieldKind::kSdf ? std::abs(f) <= 2.0 * h
                                                                : (top > 0.0 && f >= 0.05 * top && f <= 0.95 * top);
        if (near) {
            candidates.push_back(v);
        }
    }
    const std::size_t pool = candidates.empty() ? grid.voxel_count() : candidates.size();
    std::uniform_int_distribution<std::size_t> pick(0, pool - 1);
    const int r = grid.resolution;
    std::vector<AlbedoProbe> probes;
    probes.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const std::size_t idx = pick(rng);
        const std::size_t v = candidates.empty() ? idx : candidates[idx];
        const int vi = static_cast<int>(v % static_cast<std::size_t>(r));
        const int vj = static_cast<int>((v / static_cast<std::size_t>(r)) % static_cast<std::size_t>(r));
        const int vk = static_cast<int>(v / (static_cast<std::size_t>(r) * static_cast<std::size_t>(r)));
        AlbedoProbe p;
        p.x = grid.voxel_center(vi, vj, vk);
        for (int a = 0; a < 3; ++a) {
            p.x[a] += uniform(rng, -0.5 * h, 0.5 * h);
        }
        for (int a = 0; a < 3; ++a) {
            p.offset[a] = sigma * standard_normal(rng);
        }
        probes.push_back(p);
    }
    return probes;
}

double albedo_smooth_loss(const render::SceneGrid &grid, std::span<const AlbedoProbe> probes,
                          std::span<double> grad_albedo, double scale) {
    require_grad(grad_albedo, grid.albedo.size(), "albedo");
    if (probes.empty()) {
        return 0.0;
    }
    const double inv = 1.0 / static_cast<double>(probes.size());
    double total = 0.0;
    for (const AlbedoProbe &p : probes) {
        const render::Trilinear ta = render::trilinear_stencil(grid.resolution, p.x);
        const render::Trilinear tb = render::trilinear_stencil(grid.resolution, p.x + p.offset);
        const Vec3 d = render::interpolate3(grid.albedo, ta) - render::interpolate3(grid.albedo, tb);
        total += d.squaredNorm();
        if (!grad_albedo.empty()) {
            const Vec3 g = scale * inv * 2.0 * d;
            for (std::size_t s = 0; s < 8; ++s) {
                for (std::size_t c = 0; c < 3; ++c) {
                    grad_albedo[3 * ta.index[s] + c] += ta.weight[s] * g[static_cast<int>(c)];
                    grad_albedo[3 * tb.index[s] + c] -= tb.weight[s] * g[static_cast<int>(c)];
                }
            }
        }
    }
    return total * inv;
}

double smoothstep(double v, double f0, double f1) {
    if (f0 == f1) {
        throw DomainError("smoothstep needs f0 != f1");
    }
    const double x = std::clamp((v - f0) / (f1 - f0), 0.0, 1.0);
    return x * x * (3.0 - 2.0 * x);
}

double visibility_weight(const Vec3 &point, const Vec3 &normal, std::span<const Vec3> reference_centers) {
    if (reference_centers.empty()) {
        throw DomainError("visibility mask needs at least one reference camera");
    }
    double best = -std::numeric_limits<double>::infinity();
    for (const Vec3 &c : reference_centers) {
        const double d = (c - point).normalized().dot(normal);
        if (d > best) {
            best = d;
        }
    }
    return 1.0 - smoothstep(best, 0.0, 0.5);
}

Vector visibility_mask(std::span<const render::SurfacePoint> points, std::span<const Vec3> reference_centers,
                       std::size_t pixel_count) {
    Vector m(pixel_count, 0.0);
    for (const render::SurfacePoint &sp : points) {
        if (sp.pixel < 0 || static_cast<std::size_t>(sp.pixel) >= pixel_count) {
            throw ContractError("surface point pixel index out of range");
        }
        m[static_cast<std::size_t>(sp.pixel)] = visibility_weight(sp.point, sp.normal, reference_centers);
    }
    return m;
}

Vector sds_gradient(SdsGuidance &guidance, std::span<const double> render, const orbit::Camera &camera, double sigma,
                    Rng &rng, std::span<const double> mask) {
    if (!(sigma > 0.0)) {
        throw DomainError("sds noise level must be positive");
    }
    const std::size_t np = render.size() / 3;
    if (render.size() != 3 * np || (!mask.empty() && mask.size() != np)) {
        throw ContractError("sds render and mask sizes do not match");
    }
    Vector eps(render.size());
    Vector z(render.size());
    for (std::size_t i = 0; i < render.size(); ++i) {
        eps[i] = standard_normal(rng);
        z[i] = render[i] + sigma * eps[i];
    }
    const Vector eps_hat = guidance.predict_noise(z, camera, sigma);
    if (eps_hat.size() != z.size()) {
        throw ContractError("guidance returned a noise prediction of the wrong size");
    }
    const double w = guidance.weight(sigma);
    Vector g(render.size());
    for (std::size_t i = 0; i < render.size(); ++i) {
        const double m = mask.empty() ? 1.0 : mask[i / 3];
        g[i] = m * w * (eps_hat[i] - eps[i]);
    }
    return g;
}

Vector TargetGuidance::predict_noise(std::span<const double> z_t, const orbit::Camera &camera, double sigma) {
    const Vector target = target_(camera);
    if (target.size() != z_t.size()) {
        throw ContractError("guidance target image has the wrong size");
    }
    Vector e(z_t.size());
    for (std::size_t i = 0; i < z_t.size(); ++i) {
        e[i] = (z_t[i] - target[i]) / sigma;
    }
    return e;
}

} // namespace orbitforge::recon
