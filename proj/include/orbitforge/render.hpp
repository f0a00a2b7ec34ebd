// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orbitforge/grid.hpp"
#include "orbitforge/orbit.hpp"
#include "orbitforge/sg_light.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace orbitforge::render {

/// Rendered buffers, row-major with x fastest. `depth` is the distance along
/// the camera ray (+inf where mask < 0.01). `normal` is zero where mask < 0.01.
/// `illum` is the composited irradiance L before multiplying by albedo.
struct ImageBundle {
    int width = 0;
    int height = 0;
    Vector rgb;
    Vector mask;
    Vector depth;
    Vector normal;
    Vector illum;

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
};

inline constexpr double kMaskThreshold = 0.01;

struct RenderOptions {
    int samples_per_ray = 64;
    Vec3 background = Vec3(1.0, 1.0, 1.0);
    std::uint64_t jitter_seed = 0;
};

/// State kept by `render` for a later `render_backward` on the same inputs.
/// The backward pass recomputes per-ray samples from the same jitter, so only
/// the derived gradient grid and the call signature are stored.
struct RenderCache {
    bool valid = false;
    int resolution = 0;
    int width = 0;
    int height = 0;
    int samples = 0;
    Vector field_gradient;
};

/// Emission-absorption rendering of the grid. Pixel rays are clipped to the
/// unit cube and sampled at `samples_per_ray` equally spaced points shifted by
/// a per-pixel hash of `jitter_seed`. A camera inside occupied space is not
/// special-cased; sampling starts at the camera.
ImageBundle render(const SceneGrid &grid, const sg::Envmap &env, const orbit::Camera &camera,
                   const RenderOptions &options = {}, RenderCache *cache = nullptr);

/// dLoss/d(buffer) for each rendered buffer. Empty spans mean zero.
/// Gradients on depth and normal are ignored where the forward value was
/// undefined (mask < 0.01).
struct RenderUpstream {
    std::span<const double> rgb;
    std::span<const double> mask;
    std::span<const double> depth;
    std::span<const double> normal;
    std::span<const double> illum;
};

struct RenderGradient {
    Vector field;  // w.r.t. the grid's stored field (density or sdf)
    Vector albedo; // 3 * N^3
    std::vector<sg::LobeGrad> lobes;
};

/// Exact reverse-mode derivative of `render`, including the dependence of
/// shading and normal buffers on the field through the interpolated gradient
/// grid. Throws ContractError if `cache` was not filled by a matching
/// `render` call.
RenderGradient render_backward(const SceneGrid &grid, const sg::Envmap &env, const orbit::Camera &camera,
                               const RenderOptions &options, const RenderCache &cache,
                               const RenderUpstream &upstream);

struct SurfacePoint {
    Vec3 point;
    Vec3 normal;
    int pixel = 0;
};

/// Expected-depth surface point and field-gradient normal for each pixel with
/// mask >= 0.01.
std::vector<SurfacePoint> surface_points_and_normals(const SceneGrid &grid, const orbit::Camera &camera,
                                                     int samples_per_ray = 128);

/// Clip a ray to the unit cube; returns false on a miss. t0 is clamped to 0.
bool intersect_unit_box(const Vec3 &origin, const Vec3 &dir, double &t0, double &t1);

} // namespace orbitforge::render
