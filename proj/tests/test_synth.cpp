// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

#include "orbitforge/synth.hpp"

#include "orbitforge/mesh.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace orbitforge;
using namespace orbitforge::synth;
namespace fs = std::filesystem;

namespace {

nlohmann::json sphere_spec(double radius) {
    return {{"id", "ball"},
            {"smoothness", 0.0},
            {"primitives", {{{"type", "sphere"}, {"center", {0.3, -0.2, 0.1}}, {"radius", radius}, {"albedo", {0.5, 0.5, 0.5}}}}}};
}

std::string read_file(const fs::path &p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string &name) {
    const fs::path d = fs::temp_directory_path() / name;
    fs::remove_all(d);
    return d;
}

} // namespace

TEST(Scene, NormalizedExtentAndCentered) {
    Rng rng(1);
    const ProceduralScene s = make_scene(sphere_spec(0.5), rng);
    const Vec3 ext = s.bounds_max() - s.bounds_min();
    EXPECT_NEAR(ext.maxCoeff(), 1.0, 1e-6);
    EXPECT_NEAR((s.bounds_max() + s.bounds_min()).norm(), 0.0, 1e-6);
    EXPECT_NEAR(s.sdf(Vec3(0.5, 0.0, 0.0)), 0.0, 1e-9);
    EXPECT_NEAR(s.sdf(Vec3::Zero()), -0.5, 1e-9);
    EXPECT_NEAR((s.normal(Vec3(0.0, 0.5, 0.0)) - Vec3(0.0, 1.0, 0.0)).norm(), 0.0, 1e-9);

    Rng r2(2);
    const ProceduralScene box = make_scene(sphere_box_spec(), r2);
    EXPECT_NEAR((box.bounds_max() - box.bounds_min()).maxCoeff(), 1.0, 1e-6);
}

TEST(Scene, SmoothUnionBelowMinimum) {
    Rng rng(3);
    for (int t = 0; t < 1000; ++t) {
        const double a = uniform(rng, -1.0, 1.0);
        const double b = uniform(rng, -1.0, 1.0);
        const double k = uniform(rng, 0.0, 0.3);
        EXPECT_LE(smooth_min(a, b, k), std::min(a, b) + 1e-15);
    }
    EXPECT_EQ(smooth_min(0.2, -0.4, 0.0), -0.4);
}

TEST(Scene, AnalyticGradientMatchesFiniteDifferences) {
    Rng rng(4);
    const ProceduralScene s = make_scene(sphere_box_spec(), rng);
    for (int t = 0; t < 200; ++t) {
        const Vec3 p(uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5));
        const SdfSample smp = s.sample(p);
        const double h = 1e-6;
        for (int c = 0; c < 3; ++c) {
            Vec3 dp = Vec3::Zero();
            dp[c] = h;
            const double fd = (s.sdf(p + dp) - s.sdf(p - dp)) / (2 * h);
            EXPECT_NEAR(smp.gradient[c], fd, 1e-5);
        }
    }
}

TEST(Scene, JsonRoundTripAndErrors) {
    Rng rng(5);
    const ProceduralScene s = make_scene(sphere_box_spec(), rng);
    Rng other(99);
    const ProceduralScene r = make_scene(s.to_json(), other);
    for (int t = 0; t < 50; ++t) {
        const Vec3 p(uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5));
        EXPECT_NEAR(s.sdf(p), r.sdf(p), 1e-12);
        EXPECT_NEAR((s.albedo(p) - r.albedo(p)).norm(), 0.0, 1e-12);
    }
    nlohmann::json empty = sphere_spec(0.5);
    empty["primitives"] = nlohmann::json::array();
    EXPECT_THROW(make_scene(empty, rng), DomainError);
    EXPECT_THROW(make_scene(sphere_spec(-1.0), rng), DomainError);
    EXPECT_THROW(load_scene("/nonexistent/scene.json", rng), IoError);
}

TEST(Bake, SphereValuesAndArea) {
    Rng rng(6);
    const ProceduralScene s = make_scene(sphere_spec(0.5), rng);
    const render::SceneGrid g = bake_grid(s, 64);
    // Centre voxel nearest the origin.
    EXPECT_NEAR(g.field[g.index(32, 32, 32)], -0.5, g.voxel_size());
    for (double a : g.albedo) {
        EXPECT_GE(a, 0.0);
        EXPECT_LE(a, 1.0);
    }
    const mesh::TriMesh m = mesh::extract_surface(g, 0.0, true);
    const double exact = 4.0 * kPi * 0.25;
    EXPECT_NEAR(m.area(), exact, 0.02 * exact);
    EXPECT_THROW(bake_grid(s, 7), DomainError);
}

TEST(Bake, GridNormalsMatchAnalytic) {
    Rng rng(7);
    const ProceduralScene s = make_scene(sphere_box_spec(), rng);
    const render::SceneGrid g = bake_grid(s, 128);
    const Vector grad = render::field_gradient(128, g.field);
    int checked = 0;
    int bad = 0;
    while (checked < 1000) {
        Vec3 p(uniform(rng, -0.45, 0.45), uniform(rng, -0.45, 0.45), uniform(rng, -0.45, 0.45));
        // Project onto the surface along the analytic gradient.
        for (int it = 0; it < 20; ++it) {
            const SdfSample smp = s.sample(p);
            p -= smp.value * smp.gradient / std::max(1e-12, smp.gradient.squaredNorm());
        }
        if (std::abs(s.sdf(p)) > 1e-9 || (p.array().abs() > 0.49).any()) {
            continue;
        }
        // Skip points within two voxels of a crease (box edges, medial axes,
        // blend seams), where a sampled field cannot carry the analytic normal.
        const Vec3 n = s.normal(p);
        bool smooth = true;
        const double h = 1.0 / 128.0;
        for (int c = 0; c < 27 && smooth; ++c) {
            const Vec3 off(2 * h * (c % 3 - 1), 2 * h * (c / 3 % 3 - 1), 2 * h * (c / 9 - 1));
            smooth = s.sample(p + off).gradient.normalized().dot(n) > std::cos(1.0 * kPi / 180.0);
        }
        if (!smooth) {
            continue;
        }
        ++checked;
        const Vec3 gn = render::interpolate3(grad, render::trilinear_stencil(128, p));
        if (gn.normalized().dot(n) < std::cos(3.0 * kPi / 180.0)) {
            ++bad;
        }
    }
    EXPECT_EQ(bad, 0) << bad << " of 1000 surface points exceed 3 degrees";
}

TEST(Bake, SphereGridNormalsWithinThreeDegrees) {
    Rng rng(8);
    const ProceduralScene s = make_scene(sphere_spec(0.5), rng);
    const render::SceneGrid g = bake_grid(s, 128);
    const Vector grad = render::field_gradient(128, g.field);
    for (int t = 0; t < 1000; ++t) {
        Vec3 d(standard_normal(rng), standard_normal(rng), standard_normal(rng));
        d.normalize();
        const Vec3 p = 0.5 * d;
        const Vec3 gn = render::interpolate3(grad, render::trilinear_stencil(128, p));
        EXPECT_GT(gn.normalized().dot(s.normal(p)), std::cos(3.0 * kPi / 180.0));
    }
}

TEST(Library, EnvmapsAreValidAndDistinct) {
    for (int i = 0; i < 8; ++i) {
        const sg::Envmap e = library_envmap(i);
        ASSERT_EQ(e.lobes.size(), 24u);
        for (const auto &l : e.lobes) {
            EXPECT_NO_THROW(l.validate());
        }
    }
    EXPECT_NE(library_envmap(0).lobes[0].amplitude, library_envmap(1).lobes[0].amplitude);
    EXPECT_THROW(library_envmap(8), DomainError);
}

class DatasetTest : public ::testing::Test {
  protected:
    void SetUp() override {
        Rng rng(9);
        scene_ = std::make_unique<ProceduralScene>(make_scene(sphere_box_spec(), rng));
        options_.width = 24;
        options_.height = 24;
        options_.grid_resolution = 32;
        options_.samples_per_ray = 48;
        options_.seed = 5;
        orbit_ = orbit::static_orbit(4, 10.0);
    }

    std::unique_ptr<ProceduralScene> scene_;
    DatasetOptions options_;
    orbit::Orbit orbit_;
};

TEST_F(DatasetTest, BackgroundIndependence) {
    const Dataset ds = render_views(*scene_, library_envmap(0), orbit_, options_);
    ASSERT_EQ(ds.views.size(), 8u);
    for (std::size_t i = 0; i < ds.views.size(); i += 2) {
        const DatasetView &w = ds.views[i];
        const DatasetView &r = ds.views[i + 1];
        EXPECT_EQ(w.variant, "white");
        EXPECT_EQ(r.variant, "random");
        EXPECT_EQ(w.frame, r.frame);
        EXPECT_EQ(w.view.mask, r.view.mask);
        EXPECT_EQ(w.depth, r.depth);
        EXPECT_EQ(w.view.normal, r.view.normal);
    }
}

TEST_F(DatasetTest, DeterministicRerender) {
    const Dataset a = render_views(*scene_, library_envmap(1), orbit_, options_);
    const Dataset b = render_views(*scene_, library_envmap(1), orbit_, options_);
    for (std::size_t i = 0; i < a.views.size(); ++i) {
        EXPECT_EQ(a.views[i].view.rgb, b.views[i].view.rgb);
        EXPECT_EQ(a.views[i].view.background, b.views[i].view.background);
    }
}

TEST_F(DatasetTest, EmptySceneHasZeroMask) {
    render::SceneGrid g = bake_grid(*scene_, 16);
    for (double &v : g.field) {
        v = 1.0;
    }
    orbit::Camera cam;
    cam.width = 16;
    cam.height = 16;
    const render::ImageBundle b = render::render(g, library_envmap(0), cam, {});
    for (double m : b.mask) {
        EXPECT_LT(m, 1e-6);
    }
}

TEST_F(DatasetTest, SaveLoadRoundTrip) {
    const fs::path dir = fresh_dir("orbitforge_dataset_test");
    const Dataset ds = render_dataset(*scene_, library_envmap(2), orbit_, options_, dir.string());
    const std::string manifest = read_file(dir / "manifest.json");
    const Dataset back = load_dataset((dir / "manifest.json").string());
    EXPECT_EQ(back.views.size(), ds.views.size());
    EXPECT_EQ(back.orbit.size(), 4u);
    for (std::size_t i = 0; i < ds.views.size(); ++i) {
        const auto &a = ds.views[i].view;
        const auto &b = back.views[i].view;
        ASSERT_EQ(a.rgb.size(), b.rgb.size());
        for (std::size_t p = 0; p < a.rgb.size(); ++p) {
            EXPECT_EQ(static_cast<float>(a.rgb[p]), static_cast<float>(b.rgb[p]));
        }
        EXPECT_NEAR(a.camera.pose.azimuth_deg, b.camera.pose.azimuth_deg, 1e-6);
    }
    const fs::path dir2 = fresh_dir("orbitforge_dataset_test2");
    write_dataset(back, dir2.string());
    EXPECT_EQ(read_file(dir2 / "manifest.json"), manifest);
    // The reloaded buffers are already float-exact, so the files repeat too.
    EXPECT_EQ(read_file(dir2 / "frame_000_white_rgb.pfm"), read_file(dir / "frame_000_white_rgb.pfm"));

    fs::remove(dir / "frame_001_white_rgb.pfm");
    try {
        load_dataset((dir / "manifest.json").string());
        FAIL();
    } catch (const IoError &e) {
        EXPECT_NE(std::string(e.what()).find("frame_001_white_rgb.pfm"), std::string::npos);
    }
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_F(DatasetTest, ReconViewsFilterVariant) {
    const Dataset ds = render_views(*scene_, library_envmap(0), orbit_, options_);
    EXPECT_EQ(recon_views(ds).size(), 8u);
    const auto white = recon_views(ds, "white");
    ASSERT_EQ(white.size(), 4u);
    for (const auto &v : white) {
        EXPECT_EQ(v.background, Vec3(1.0, 1.0, 1.0));
    }
}
