// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orbitforge/grid.hpp"
#include "orbitforge/orbit.hpp"
#include "orbitforge/recon.hpp"
#include "orbitforge/sg_light.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace orbitforge::synth {

enum class PrimitiveKind { kSphere, kBox, kTorus };

/// Analytic primitive. `size` is (radius, -, -) for spheres, half extents for
/// boxes and (major radius, minor radius, -) for tori around the z axis.
struct Primitive {
    PrimitiveKind kind = PrimitiveKind::kSphere;
    Vec3 center = Vec3::Zero();
    Vec3 size = Vec3(0.5, 0.0, 0.0);
    Vec3 albedo = Vec3(0.8, 0.8, 0.8);

    double sdf(const Vec3 &p) const;
    Vec3 gradient(const Vec3 &p) const;
};

struct SdfSample {
    double value = 0.0;
    Vec3 gradient = Vec3::Zero();
    Vec3 albedo = Vec3::Zero();
};

/// Smooth union of primitives, scaled and shifted so the bounding box of the
/// surface is centered at the origin with largest extent 1. Coordinates
/// passed to the query functions are in that normalized frame.
class ProceduralScene {
  public:
    ProceduralScene(std::string id, std::vector<Primitive> primitives, double smoothness);

    const std::string &id() const { return id_; }
    const std::vector<Primitive> &primitives() const { return primitives_; }
    double smoothness() const { return smoothness_; }

    SdfSample sample(const Vec3 &p) const;
    double sdf(const Vec3 &p) const { return sample(p).value; }
    /// Unit outward normal (normalized sdf gradient).
    Vec3 normal(const Vec3 &p) const;
    Vec3 albedo(const Vec3 &p) const { return sample(p).albedo; }

    /// Bounding box of the surface in the normalized frame.
    Vec3 bounds_min() const { return bmin_; }
    Vec3 bounds_max() const { return bmax_; }

    /// Scene description that make_scene turns back into this scene.
    nlohmann::json to_json() const;

  private:
    SdfSample raw(const Vec3 &q) const;

    std::string id_;
    std::vector<Primitive> primitives_;
    double smoothness_ = 0.0;
    double scale_ = 1.0;
    Vec3 offset_ = Vec3::Zero();
    Vec3 bmin_ = Vec3::Zero();
    Vec3 bmax_ = Vec3::Zero();
};

/// Polynomial smooth minimum and the weight h of `a` in its gradient:
/// d/da = h, d/db = 1 - h. k = 0 is the hard minimum.
double smooth_min(double a, double b, double k, double *h = nullptr);

/// Scene from a JSON description:
/// {"id": ..., "smoothness": k, "primitives": [{"type": "sphere"|"box"|"torus",
///  "center": [x,y,z], "radius" | "half_extents" | "major_radius"+"minor_radius",
///  "albedo": [r,g,b]}]}. Missing albedos are drawn from `rng`. Throws
/// DomainError for an empty primitive list or invalid sizes.
ProceduralScene make_scene(const nlohmann::json &spec, Rng &rng);
ProceduralScene load_scene(const std::string &path, Rng &rng);

/// Built-in test scene: a sphere resting in an open box (floor plus four
/// walls), so part of the floor is visible only from above.
nlohmann::json sphere_box_spec();

/// SDF grid sampling the scene at voxel centers, with beta of half a voxel.
/// Throws DomainError for n < 8.
render::SceneGrid bake_grid(const ProceduralScene &scene, int n);

/// One of 8 procedural 24-lobe environment maps.
sg::Envmap library_envmap(int index);

struct DatasetOptions {
    int width = 64;
    int height = 64;
    int grid_resolution = 128;
    int samples_per_ray = 256;
    double fov_deg = orbit::kDefaultFovDeg;
    /// Camera distance; 0 selects the adaptive distance for a unit box.
    double distance = 0.0;
    std::uint64_t seed = 0;
};

double dataset_distance(const DatasetOptions &options);

/// One rendered frame variant.
struct DatasetView {
    int frame = 0;
    std::string variant; // "white" or "random"
    recon::View view;
    Vector depth;
};

struct Dataset {
    std::string scene_id;
    nlohmann::json scene;
    sg::Envmap envmap;
    orbit::Orbit orbit;
    DatasetOptions options;
    std::vector<DatasetView> views;
};

/// Renders every orbit frame over a white and a random background. Buffers
/// come from the renderer on the baked grid; masks and depths do not depend
/// on the background.
Dataset render_views(const ProceduralScene &scene, const sg::Envmap &envmap, const orbit::Orbit &orbit,
                     const DatasetOptions &options);

/// Writes PFM buffers, PPM previews, orbit and envmap files and the manifest
/// `manifest.json` (version `orbitforge-dataset/1`) under `dir`. Returns the
/// manifest.
nlohmann::json write_dataset(const Dataset &dataset, const std::string &dir);

Dataset render_dataset(const ProceduralScene &scene, const sg::Envmap &envmap, const orbit::Orbit &orbit,
                       const DatasetOptions &options, const std::string &dir);

/// Reads a dataset back; throws IoError naming the offending path.
Dataset load_dataset(const std::string &manifest_path);

/// The manifest that write_dataset produces for this dataset.
nlohmann::json dataset_manifest(const Dataset &dataset);

/// Recon views of a dataset, optionally restricted to one variant.
std::vector<recon::View> recon_views(const Dataset &dataset, const std::string &variant = "");

} // namespace orbitforge::synth
