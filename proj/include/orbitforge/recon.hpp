// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orbitforge/grid.hpp"
#include "orbitforge/losses.hpp"
#include "orbitforge/mesh.hpp"
#include "orbitforge/render.hpp"
#include "orbitforge/sg_light.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace orbitforge::recon {

struct AdamOptions {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Vector m;
    Vector v;
    long step = 0;
};

/// Bias-corrected Adam. An empty state is sized on first use. Throws
/// ContractError if the shapes disagree.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState &state,
               const AdamOptions &options = {});

struct LossWeights {
    double mse = 1.0;
    double mask = 0.5;
    double normal = 0.1;
    double depth = 0.05;
    double bilateral = 0.05;
    double albedo = 0.01;
    double illum = 0.1;
    double sds = 0.01;

    void validate() const;
};

enum class OrbitKind { kStatic, kSine30, kSine50, kDynamic };

std::string orbit_kind_name(OrbitKind kind);
OrbitKind parse_orbit_kind(const std::string &name);

/// K-view training orbit of the given kind conditioned at (elevation, 0).
/// Only the dynamic kind draws from `rng`.
orbit::Orbit training_orbit(OrbitKind kind, int k, double elevation_deg, Rng &rng);

/// One ground-truth observation. `normal` holds the pseudo ground-truth
/// normals (zero off the object); all buffers are row-major, x fastest.
struct View {
    orbit::Camera camera;
    Vec3 background = Vec3(1.0, 1.0, 1.0);
    Vector rgb;
    Vector mask;
    Vector normal;

    void validate() const;
};

/// Box-downsampled copy of a view. Normals are renormalized where non-zero.
View downsample_view(const View &view, int factor);

struct ReconConfig {
    int coarse_iters = 600;
    int fine_iters = 1000;
    int sds_window = 200;
    AdamOptions adam;
    /// Orbit the training views were taken on; recorded with the run.
    OrbitKind orbit_kind = OrbitKind::kSine30;
    LossWeights weights;

    int coarse_resolution = 32;
    /// The coarse grid starts at coarse_resolution / 2^(levels - 1) and
    /// doubles after each equal share of the coarse iterations.
    int coarse_levels = 3;
    int fine_resolution = 48;
    int coarse_image_factor = 2;
    int fine_image_factor = 1;
    int coarse_samples = 64;
    int fine_samples = 128;
    /// Coarse density is exp(density_scale * theta).
    double density_scale = 10.0;
    double initial_density = 0.5;
    /// Fine sdf is sdf_scale * theta.
    double sdf_scale = 0.1;
    double sdf_truncation = 0.15;
    /// At the handoff a voxel counts as empty if some view sees it with
    /// transmittance above this.
    double seen_transmittance = 0.7;
    /// beta starts at half a fine voxel and is halved this many times, at
    /// evenly spaced points of the fine stage.
    int beta_halvings = 1;
    int albedo_probes = 256;
    int envmap_lobes = 24;
    bool learn_envmap = true;
    bool masked_sds = true;
    double sds_sigma_min = 0.02;
    double sds_sigma_max = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
};

struct LossRecord {
    int iter = 0;
    std::string term;
    double value = 0.0;
};

struct ReconResult {
    mesh::TriMesh mesh;
    render::SceneGrid coarse;
    render::SceneGrid grid;
    sg::Envmap envmap;
    std::vector<LossRecord> losses;
};

/// Per-term loss values of one view, unweighted, plus the weighted total.
struct LossBreakdown {
    double mse = 0.0;
    double mask = 0.0;
    double normal = 0.0;
    double depth = 0.0;
    double bilateral = 0.0;
    double albedo = 0.0;
    double illum = 0.0;
    double total = 0.0;
};

/// Weighted loss of rendering `grid` against `view`. The albedo term uses the
/// given probes. When `grad` is non-null it receives the gradient of the
/// total with respect to the grid field, albedo and envmap lobes. Surface
/// terms (normal, bilateral) use pixels with ground-truth mask >= 0.5 whose
/// rendered normal is defined; illumination uses ground-truth mask > 0.5.
LossBreakdown view_loss(const render::SceneGrid &grid, const sg::Envmap &env, const View &view,
                        const LossWeights &weights, std::span<const AlbedoProbe> probes,
                        const render::RenderOptions &options, render::RenderGradient *grad = nullptr);

/// Coarse density grid before optimization.
render::SceneGrid initial_coarse_grid(const ReconConfig &config);

/// Per-voxel solidity on an N^3 lattice over the unit cube: the smaller of
/// the visual hull value (least projected view mask, bilinear) and
/// clamp((1 - T) / (2 (1 - t)), 0, 1), where T is the largest transmittance
/// from any view center to the voxel through the coarse density and t is
/// `seen_transmittance`. A voxel is solid above 1/2: inside every silhouette
/// and seen by no camera with transmittance above t.
Vector coarse_solidity(const render::SceneGrid &coarse, int resolution, std::span<const View> views,
                       double seen_transmittance);

/// Fine sdf grid from a coarse density grid: truncated signed distance to the
/// marching cubes surface of the solidity at 1/2, negative where solid. Falls
/// back to a sphere of radius 0.3 when nothing is solid. Albedo is resampled.
render::SceneGrid coarse_to_fine(const render::SceneGrid &coarse, const ReconConfig &config,
                                 std::span<const View> views);

/// Initial envmap: a Fibonacci set of unit-amplitude lobes.
sg::Envmap initial_envmap(const ReconConfig &config);

/// Two-stage reconstruction. Reference camera centers for the SDS mask are
/// the training view positions. With zero iterations in both stages the
/// result is coarse_to_fine(initial_coarse_grid(config), config, views) and
/// the initial envmap. Throws NumericalError naming the term and iteration if a loss
/// becomes non-finite.
ReconResult reconstruct(std::span<const View> views, const ReconConfig &config, SdsGuidance *guidance = nullptr,
                        const sg::Envmap *envmap = nullptr);

/// `iter,term,value` with a header line.
void write_loss_csv(std::ostream &out, std::span<const LossRecord> records);

} // namespace orbitforge::recon
