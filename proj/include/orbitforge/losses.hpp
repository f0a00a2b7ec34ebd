// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orbitforge/grid.hpp"
#include "orbitforge/orbit.hpp"
#include "orbitforge/render.hpp"

#include <functional>
#include <span>

/// Reconstruction losses. Each takes an optional gradient buffer that, when
/// non-empty, is *accumulated into* with `scale` times the derivative of the
/// loss with respect to the differentiable input.
namespace orbitforge::recon {

/// Mean of (a - b)^2 over all elements. Gradient is with respect to `a`.
double mse_loss(std::span<const double> a, std::span<const double> b, std::span<double> grad_a = {},
                double scale = 1.0);

/// Same as mse_loss on single-channel masks.
double mask_loss(std::span<const double> predicted, std::span<const double> target, std::span<double> grad = {},
                 double scale = 1.0);

/// Mean over pixels with surface[p] != 0 of 1 - n . n_ref. Zero if there are
/// no surface pixels. Gradient is with respect to `n`.
double normal_loss(std::span<const double> n, std::span<const double> n_ref, std::span<const unsigned char> surface,
                   std::span<double> grad = {}, double scale = 1.0);

/// Mean over horizontally and vertically adjacent pixel pairs with finite
/// depth of the squared depth difference.
double depth_smooth_loss(std::span<const double> depth, int width, int height, std::span<double> grad = {},
                         double scale = 1.0);

/// Mean over surface pixels of exp(-3 |grad I|) * sqrt(1 + |grad n|). Image
/// gradients use a 3x3 Sobel filter (divided by 8) on Rec. 601 luma; |grad n|
/// is the Frobenius norm of the per-channel Sobel responses, smoothed as
/// sqrt(x + 1e-6) so that it is differentiable at zero. Neighbours outside
/// the surface or the image take the centre pixel's normal. The image acts as
/// a fixed edge guide; the gradient is with respect to `n`.
double bilateral_normal_loss(std::span<const double> image, std::span<const double> n,
                             std::span<const unsigned char> surface, int width, int height,
                             std::span<double> grad = {}, double scale = 1.0);

/// Point pairs (x, x + eps) at which albedo smoothness is probed.
struct AlbedoProbe {
    Vec3 x;
    Vec3 offset;
};

/// n probes at random points near the current surface: voxels whose sdf is
/// within two voxels of zero (sdf grids) or whose density lies between 5% and
/// 95% of the maximum (density grids), jittered inside the voxel, each paired
/// with an offset drawn from N(0, sigma^2 I). Falls back to all voxels when no
/// voxel qualifies. Throws DomainError for n < 1.
std::vector<AlbedoProbe> sample_albedo_probes(const render::SceneGrid &grid, int n, Rng &rng, double sigma = 0.01);

/// Mean over probes of |c(x) - c(x + eps)|^2 with trilinear albedo lookups.
/// Gradient is with respect to the albedo grid.
double albedo_smooth_loss(const render::SceneGrid &grid, std::span<const AlbedoProbe> probes,
                          std::span<double> grad_albedo = {}, double scale = 1.0);

/// x^2 (3 - 2x) with x = clamp((v - f0) / (f1 - f0), 0, 1).
/// Throws DomainError if f0 == f1.
double smoothstep(double v, double f0, double f1);

/// Soft visibility mask for surface points seen from a new view:
/// M = 1 - smoothstep(v_c . n, 0, 0.5) where v_c is the unit direction to the
/// reference camera that maximizes v_i . n (first index on ties).
double visibility_weight(const Vec3 &point, const Vec3 &normal, std::span<const Vec3> reference_centers);

/// Per-pixel visibility mask for an image of `pixel_count` pixels. Pixels
/// without a surface point get 0.
Vector visibility_mask(std::span<const render::SurfacePoint> points, std::span<const Vec3> reference_centers,
                       std::size_t pixel_count);

/// Noise-prediction model queried by score distillation.
class SdsGuidance {
  public:
    virtual ~SdsGuidance() = default;
    /// Predicted noise for z_t = render + sigma * eps, seen from `camera`.
    /// Must return a buffer of the same size as z_t.
    virtual Vector predict_noise(std::span<const double> z_t, const orbit::Camera &camera, double sigma) = 0;
    /// Weight w(t); sigma^2 by default.
    virtual double weight(double sigma) const { return sigma * sigma; }
};

/// Upstream gradient on the rendered image:
/// w(sigma) * (eps_hat - eps), multiplied per pixel by `mask` when non-empty.
/// `render` is interleaved rgb, `mask` per pixel. Throws ContractError if the
/// guidance returns the wrong size or the mask size does not match.
Vector sds_gradient(SdsGuidance &guidance, std::span<const double> render, const orbit::Camera &camera, double sigma,
                    Rng &rng, std::span<const double> mask = {});

/// Guidance whose noise prediction is exact for a known target image:
/// eps_hat = (z_t - T) / sigma, where T comes from `target(camera)`.
class TargetGuidance : public SdsGuidance {
  public:
    using TargetFn = std::function<Vector(const orbit::Camera &)>;
    explicit TargetGuidance(TargetFn target) : target_(std::move(target)) {}
    Vector predict_noise(std::span<const double> z_t, const orbit::Camera &camera, double sigma) override;

  private:
    TargetFn target_;
};

} // namespace orbitforge::recon
