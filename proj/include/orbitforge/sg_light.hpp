// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orbitforge/common.hpp"

#include <functional>
#include <iosfwd>
#include <span>

/// White-light environment illumination as a sum of spherical Gaussians with
/// Lambertian shading through an SG approximation of the clamped cosine.
namespace orbitforge::sg {

/// G(x) = amplitude * exp(sharpness * (axis . x - 1)).
struct SphericalGaussian {
    Vec3 axis = Vec3(0.0, 0.0, 1.0);
    double sharpness = 1.0;
    double amplitude = 1.0;

    /// Throws DomainError unless |axis| = 1 (1e-9), sharpness > 0, amplitude >= 0.
    void validate() const;
};

struct Envmap {
    std::vector<SphericalGaussian> lobes;
};

inline constexpr int kDefaultLobeCount = 24;
inline constexpr double kCosineLobeSharpness = 2.133;
inline constexpr double kCosineLobeAmplitude = 1.17;

/// Throws DomainError if |x| differs from 1 by more than 1e-6.
double sg_eval(const SphericalGaussian &g, const Vec3 &x);

/// Integral over the sphere of G1 * G2:
///   4 pi a1 a2 exp(-(s1 + s2)) sinh(d) / d,  d = |s1 mu1 + s2 mu2|,
/// which is 2 pi a1 a2 / d * exp(d - (s1 + s2)) * (1 - exp(-2 d)) written so
/// that it stays finite as d -> 0.
double sg_inner_product(const SphericalGaussian &g1, const SphericalGaussian &g2);

/// Partial derivatives of the inner product with respect to the parameters of
/// the first lobe and the axis of the second (axes treated as free vectors).
struct InnerProductGrad {
    double value = 0.0;
    Vec3 d_axis1 = Vec3::Zero();
    double d_sharpness1 = 0.0;
    double d_amplitude1 = 0.0;
    Vec3 d_axis2 = Vec3::Zero();
};
InnerProductGrad sg_inner_product_grad(const SphericalGaussian &g1, const SphericalGaussian &g2);

/// Clamped-cosine kernel around the normal. Throws DomainError for non-unit n.
SphericalGaussian cosine_lobe(const Vec3 &n);

/// L(n) = sum_i max(<G_i, G_cos(n)>, 0) / pi.
double irradiance(const Envmap &env, const Vec3 &n);

/// Gradient of irradiance with respect to each lobe and to n.
struct LobeGrad {
    Vec3 d_axis = Vec3::Zero();
    double d_sharpness = 0.0;
    double d_amplitude = 0.0;
};

/// Returns L(n). Adds scale * dL/d(lobe) into `lobe_grads` (if non-empty, sized
/// like env.lobes) and scale * dL/dn into `d_normal` (if non-null).
double irradiance_accumulate(const Envmap &env, const Vec3 &n, double scale, std::span<LobeGrad> lobe_grads,
                             Vec3 *d_normal);

/// Albedo times irradiance, per channel, unclamped.
Vec3 shade(const Vec3 &albedo, double irradiance);

/// max(r, g, b).
double hsv_value(const Vec3 &rgb);

/// Mean over foreground pixels of (V(I_p) - L_p)^2. `image` is W*H*3,
/// `illum` and `foreground` (weights in [0,1], > 0.5 counts) are W*H.
/// Empty `foreground` means all pixels. Throws ContractError on size mismatch.
/// If `d_illum` is non-empty it receives the gradient with respect to `illum`.
double illum_loss(std::span<const double> image, std::span<const double> illum, std::span<const double> foreground,
                  std::span<double> d_illum = {});

/// n axes on a Fibonacci sphere, all with the same sharpness and amplitude.
Envmap fibonacci_envmap(int n, double sharpness, double amplitude);

/// One shading observation: the pixel color under known geometry and albedo.
struct ShadingSample {
    Vec3 normal;
    Vec3 albedo;
    Vec3 color;
};

struct FitOptions {
    int iterations = 200;
    double step_size = 0.1;
    double fd_step = 1e-5;
    double min_sharpness = 0.05;
    double max_sharpness = 500.0;
    int divergence_window = 50;
};

struct FitResult {
    Envmap envmap;
    Vector loss_history; // loss of each accepted iterate, starting with the initial one
    bool converged = true;
    std::string failure;
};

/// Mean squared shading error of an envmap over the samples.
double shading_loss(const Envmap &env, std::span<const ShadingSample> samples);

/// Analytic d(shading_loss)/d(amplitude_i); the loss is quadratic in amplitudes.
Vector shading_loss_amplitude_grad(const Envmap &env, std::span<const ShadingSample> samples);

/// Projected gradient descent with backtracking on the lobe parameters.
/// Amplitude gradients are analytic, axis and sharpness gradients use central
/// differences. Amplitudes are projected to >= 0 and axes renormalized after
/// each step. Reports a failure if the loss rises for `divergence_window`
/// consecutive iterations.
FitResult fit_envmap(std::span<const ShadingSample> samples, Envmap init, const FitOptions &options = {});

/// (4 pi / n) sum f(x_i) over points uniformly distributed on the unit sphere.
/// Points are drawn by jittered stratification over equal-area cells in
/// (z, phi), so each point is marginally uniform while the estimate has far
/// lower variance than i.i.d. sampling.
double mc_sphere_integral(const std::function<double(const Vec3 &)> &f, std::size_t n_samples, Rng &rng);

/// Text format: one lobe per line `mx my mz s a`, %.9g.
void write_envmap(std::ostream &out, const Envmap &env);
Envmap read_envmap(std::istream &in);
void save_envmap(const std::string &path, const Envmap &env);
Envmap load_envmap(const std::string &path);

} // namespace orbitforge::sg
