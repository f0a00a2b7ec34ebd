// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

#include "orbitforge/render.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

using namespace orbitforge;
using namespace orbitforge::fixtures;
using render::FieldKind;
using render::SceneGrid;

TEST(SdfToDensity, ClosedFormValues) {
    EXPECT_DOUBLE_EQ(render::sdf_to_density(0.0, 7.0, 0.1), 3.5);
    EXPECT_NEAR(render::sdf_to_density(50.0, 7.0, 0.1), 0.0, 1e-12);
    EXPECT_NEAR(render::sdf_to_density(-50.0, 7.0, 0.1), 7.0, 1e-12);
    EXPECT_THROW(render::sdf_to_density(0.0, 1.0, 0.0), DomainError);
    double prev = std::numeric_limits<double>::infinity();
    for (double s = -1.0; s <= 1.0; s += 0.01) {
        const double d = render::sdf_to_density(s, 2.0, 0.05);
        EXPECT_LE(d, prev);
        prev = d;
    }
}

TEST(SdfToDensity, DerivativeMatchesDifference) {
    for (double s : {-0.2, -0.01, 0.0, 0.03, 0.15}) {
        const double h = 1e-6;
        const double fd = (render::sdf_to_density(s + h, 3.0, 0.05) - render::sdf_to_density(s - h, 3.0, 0.05)) / (2 * h);
        EXPECT_NEAR(render::sdf_to_density_derivative(s, 3.0, 0.05), fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
}

TEST(Grid, TrilinearReproducesLinearField) {
    const int n = 6;
    SceneGrid g = SceneGrid::make(n, FieldKind::kDensity, 0.0, Vec3::Zero());
    const Vec3 a(0.3, -1.2, 2.0);
    for (int k = 0; k < n; ++k) {
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                g.field[g.index(i, j, k)] = 1.0 + a.dot(g.voxel_center(i, j, k));
            }
        }
    }
    Rng rng(3);
    const double lim = 0.5 - 0.5 / n;
    for (int t = 0; t < 50; ++t) {
        const Vec3 p(uniform(rng, -lim, lim), uniform(rng, -lim, lim), uniform(rng, -lim, lim));
        EXPECT_NEAR(render::interpolate(g.field, render::trilinear_stencil(n, p)), 1.0 + a.dot(p), 1e-12);
    }
    // Gradient of a linear field is exact everywhere, including faces.
    const Vector grad = render::field_gradient(n, g.field);
    for (std::size_t v = 0; v < g.voxel_count(); ++v) {
        EXPECT_NEAR(grad[3 * v], a.x(), 1e-9);
        EXPECT_NEAR(grad[3 * v + 1], a.y(), 1e-9);
        EXPECT_NEAR(grad[3 * v + 2], a.z(), 1e-9);
    }
}

TEST(Grid, GradientAdjointIsTranspose) {
    const int n = 5;
    Rng rng(11);
    Vector f(125), u(375);
    for (double &x : f) {
        x = standard_normal(rng);
    }
    for (double &x : u) {
        x = standard_normal(rng);
    }
    const Vector gf = render::field_gradient(n, f);
    double lhs = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        lhs += u[i] * gf[i];
    }
    Vector adj(125, 0.0);
    render::field_gradient_adjoint(n, u, adj);
    double rhs = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        rhs += f[i] * adj[i];
    }
    EXPECT_NEAR(lhs, rhs, 1e-9 * std::abs(lhs));
}

TEST(Render, EmptyGridShowsBackground) {
    const SceneGrid g = SceneGrid::make(8, FieldKind::kDensity, 0.0, Vec3(1, 1, 1));
    render::RenderOptions opt;
    opt.background = Vec3(0.2, 0.5, 0.9);
    const render::ImageBundle b = render::render(g, sg::fibonacci_envmap(8, 2.0, 1.0), make_camera(10, 30, 2, 9, 7), opt);
    for (std::size_t p = 0; p < b.pixel_count(); ++p) {
        EXPECT_EQ(b.mask[p], 0.0);
        EXPECT_TRUE(std::isinf(b.depth[p]));
        for (int c = 0; c < 3; ++c) {
            EXPECT_DOUBLE_EQ(b.rgb[3 * p + static_cast<std::size_t>(c)], opt.background[c]);
        }
    }
}

TEST(Render, HomogeneousSlabFollowsBeerLambert) {
    // Constant density over the whole cube. The centre pixel ray is the x axis
    // and crosses the cube over a length of exactly 1.
    for (double sigma : {0.5, 2.0, 5.0}) {
        const SceneGrid g = SceneGrid::make(4, FieldKind::kDensity, sigma, Vec3(1, 1, 1));
        render::RenderOptions opt;
        opt.samples_per_ray = 256;
        const orbit::Camera cam = make_camera(0, 0, 3, 5, 5);
        const render::ImageBundle b = render::render(g, sg::fibonacci_envmap(8, 2.0, 1.0), cam, opt);
        EXPECT_NEAR(b.mask[12], 1.0 - std::exp(-sigma * 1.0), 1e-3) << "sigma " << sigma;
    }
}

TEST(Render, RgbIsLinearInEnvmapScale) {
    const SceneGrid g = fixtures::sphere_sdf_grid(16, 0.3, Vec3(1, 1, 1));
    sg::Envmap env = fixtures::uneven_envmap(12, 5);
    render::RenderOptions opt;
    opt.background = Vec3::Zero();
    const orbit::Camera cam = make_camera(20, 45, 2, 12, 12);
    const render::ImageBundle b1 = render::render(g, env, cam, opt);
    for (sg::SphericalGaussian &l : env.lobes) {
        l.amplitude *= 3.0;
    }
    const render::ImageBundle b3 = render::render(g, env, cam, opt);
    for (std::size_t i = 0; i < b1.rgb.size(); ++i) {
        EXPECT_NEAR(b3.rgb[i], 3.0 * b1.rgb[i], 1e-12 * std::max(1.0, b3.rgb[i]));
    }
}

TEST(Render, MaskStaysInUnitInterval) {
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        SceneGrid g = random_density_grid(6, rng);
        for (double &f : g.field) {
            f *= uniform(rng, 0.0, 200.0);
        }
        const render::ImageBundle b = render::render(g, sg::fibonacci_envmap(6, 2.0, 1.0), random_camera(rng, 8, 8));
        for (double m : b.mask) {
            EXPECT_GE(m, 0.0);
            EXPECT_LE(m, 1.0);
        }
        for (std::size_t p = 0; p < b.pixel_count(); ++p) {
            if (b.mask[p] >= render::kMaskThreshold) {
                const Vec3 n(b.normal[3 * p], b.normal[3 * p + 1], b.normal[3 * p + 2]);
                EXPECT_NEAR(n.norm(), 1.0, 1e-9);
            }
        }
    }
}

TEST(Render, DeterministicForSameSeed) {
    Rng rng(4);
    const SceneGrid g = random_sdf_grid(10, rng);
    const sg::Envmap env = fixtures::uneven_envmap(8, 1);
    const orbit::Camera cam = make_camera(15, 100, 2, 10, 10);
    render::RenderOptions opt;
    opt.jitter_seed = 77;
    const render::ImageBundle a = render::render(g, env, cam, opt);
    const render::ImageBundle b = render::render(g, env, cam, opt);
    EXPECT_EQ(a.rgb, b.rgb);
    EXPECT_EQ(a.mask, b.mask);
    opt.jitter_seed = 78;
    const render::ImageBundle c = render::render(g, env, cam, opt);
    EXPECT_NE(a.rgb, c.rgb);
}

TEST(Render, SampleDoublingConverges) {
    // Smooth scene: a soft sphere. The 256-sample render is the reference;
    // 128 and 64 samples must approach it.
    SceneGrid g = fixtures::sphere_sdf_grid(24, 0.3, Vec3(0.7, 0.7, 0.7));
    g.sdf_alpha = 20.0;
    g.sdf_beta = 0.04;
    const sg::Envmap env = fixtures::uneven_envmap(12, 2);
    const orbit::Camera cam = make_camera(10, 20, 2, 16, 16);
    auto rgb_at = [&](int n) {
        render::RenderOptions opt;
        opt.samples_per_ray = n;
        return render::render(g, env, cam, opt).rgb;
    };
    const Vector ref = rgb_at(1024);
    auto max_diff = [&](const Vector &v) {
        double m = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            m = std::max(m, std::abs(v[i] - ref[i]));
        }
        return m;
    };
    const double e128 = max_diff(rgb_at(128));
    const double e256 = max_diff(rgb_at(256));
    EXPECT_LT(e256, 1e-2);
    EXPECT_LE(e256, 2.0 * e128 + 1e-12);
}

TEST(RenderBackward, RequiresForwardCache) {
    const SceneGrid g = SceneGrid::make(4, FieldKind::kDensity, 1.0, Vec3(1, 1, 1));
    render::RenderCache cache;
    EXPECT_THROW(render::render_backward(g, sg::fibonacci_envmap(4, 2, 1), make_camera(0, 0, 2, 4, 4), {}, cache, {}),
                 ContractError);
}

TEST(RenderBackward, ZeroUpstreamGivesZeroGradient) {
    Rng rng(8);
    const SceneGrid g = random_density_grid(6, rng);
    const sg::Envmap env = fixtures::uneven_envmap(6, 3);
    const orbit::Camera cam = make_camera(20, 10, 2, 6, 6);
    render::RenderCache cache;
    render::render(g, env, cam, {}, &cache);
    const Vector zeros(36 * 3, 0.0);
    const render::RenderGradient grad = render::render_backward(g, env, cam, {}, cache, {zeros, {}, {}, {}, {}});
    for (double x : grad.field) {
        EXPECT_EQ(x, 0.0);
    }
    for (double x : grad.albedo) {
        EXPECT_EQ(x, 0.0);
    }
}

TEST(RenderBackward, OccludedAlbedoHasNoGradient) {
    // Opaque sphere: voxels deep inside are never reached by any ray.
    const SceneGrid g = fixtures::sphere_density_grid(16, 0.35, 500.0);
    const sg::Envmap env = fixtures::uneven_envmap(6, 3);
    const orbit::Camera cam = make_camera(0, 0, 2, 12, 12);
    render::RenderCache cache;
    render::render(g, env, cam, {}, &cache);
    Vector up(12 * 12 * 3, 1.0);
    const render::RenderGradient grad = render::render_backward(g, env, cam, {}, cache, {up, {}, {}, {}, {}});
    // Voxel at the centre, far behind the front surface.
    const std::size_t centre = g.index(8, 8, 8);
    for (int c = 0; c < 3; ++c) {
        EXPECT_EQ(grad.albedo[3 * centre + static_cast<std::size_t>(c)], 0.0);
    }
}

TEST(RenderBackward, DensityGradientMatchesFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(1000 + seed);
        const SceneGrid g = random_density_grid(8, rng);
        const sg::Envmap env = fixtures::uneven_envmap(6, seed);
        const orbit::Camera cam = random_camera(rng, 6, 6);
        render::RenderOptions opt;
        opt.samples_per_ray = 24;
        opt.jitter_seed = seed;
        const FdReport field = check_field_gradient(g, env, cam, opt, seed, 100, false);
        EXPECT_LE(field.worst, 1e-3) << "seed " << seed;
        const FdReport albedo = check_field_gradient(g, env, cam, opt, seed + 1, 100, true);
        EXPECT_LE(albedo.worst, 1e-3) << "seed " << seed;
    }
}

TEST(RenderBackward, SdfGradientMatchesFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(2000 + seed);
        const SceneGrid g = random_sdf_grid(8, rng);
        const sg::Envmap env = fixtures::uneven_envmap(6, seed + 50);
        const orbit::Camera cam = random_camera(rng, 6, 6);
        render::RenderOptions opt;
        opt.samples_per_ray = 24;
        opt.jitter_seed = seed;
        const FdReport field = check_field_gradient(g, env, cam, opt, seed, 100, false);
        EXPECT_LE(field.worst, 1e-3) << "seed " << seed;
    }
}

TEST(RenderBackward, LobeGradientMatchesFiniteDifferences) {
    Rng rng(5);
    const SceneGrid g = random_sdf_grid(8, rng);
    sg::Envmap env = fixtures::uneven_envmap(4, 9);
    const orbit::Camera cam = make_camera(25, 60, 2, 6, 6);
    LinearLoss loss(36, rng);
    render::RenderCache cache;
    render::render(g, env, cam, {}, &cache);
    const render::RenderGradient grad = render::render_backward(g, env, cam, {}, cache, loss.upstream());
    const double h = 1e-6;
    for (std::size_t l = 0; l < env.lobes.size(); ++l) {
        auto fd = [&](double &param) {
            const double orig = param;
            param = orig + h;
            const double lp = loss(render::render(g, env, cam));
            param = orig - h;
            const double lm = loss(render::render(g, env, cam));
            param = orig;
            return (lp - lm) / (2 * h);
        };
        const double da = fd(env.lobes[l].amplitude);
        EXPECT_NEAR(grad.lobes[l].d_amplitude, da, 1e-5 * std::max(1.0, std::abs(da)));
        const double ds = fd(env.lobes[l].sharpness);
        EXPECT_NEAR(grad.lobes[l].d_sharpness, ds, 1e-5 * std::max(1.0, std::abs(ds)));
    }
}

TEST(SurfacePoints, SphereHitFromPositiveX) {
    SceneGrid g = fixtures::sphere_sdf_grid(64, 0.3);
    g.sdf_beta = 0.005;
    g.sdf_alpha = 400.0;
    const orbit::Camera cam = make_camera(0, 0, 2, 33, 33);
    const std::vector<render::SurfacePoint> pts = render::surface_points_and_normals(g, cam, 256);
    ASSERT_FALSE(pts.empty());
    const int centre = 16 * 33 + 16;
    const auto it = std::find_if(pts.begin(), pts.end(), [&](const render::SurfacePoint &s) { return s.pixel == centre; });
    ASSERT_NE(it, pts.end());
    EXPECT_LE((it->point - Vec3(0.3, 0, 0)).norm(), 0.02);
    EXPECT_LE((it->normal - Vec3(1, 0, 0)).norm(), 0.02);
    for (const render::SurfacePoint &s : pts) {
        EXPECT_NEAR(s.normal.norm(), 1.0, 1e-6);
    }
}

TEST(SurfacePoints, EmptySceneHasNone) {
    const SceneGrid g = SceneGrid::make(8, FieldKind::kDensity, 0.0, Vec3(1, 1, 1));
    EXPECT_TRUE(render::surface_points_and_normals(g, make_camera(0, 0, 2, 8, 8)).empty());
}
