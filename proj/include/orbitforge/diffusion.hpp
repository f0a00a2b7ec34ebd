// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orbitforge/common.hpp"

#include <functional>
#include <map>
#include <span>
#include <string>

/// EDM-style diffusion machinery: denoiser preconditioning, the denoising
/// score matching objective, a deterministic sampler for the probability-flow
/// ODE and classifier-free guidance. Gaussian mixtures stand in for the data
/// distribution so that every quantity has a closed form to test against.
namespace orbitforge::diffusion {

enum class PrecondVariant { kSd21Discrete, kEdmUnitSigma };

struct PrecondCoefficients {
    double c_skip = 0.0;
    double c_out = 0.0;
    double c_in = 0.0;
    double c_noise = 0.0;
};

/// Preconditioning functions c_skip/c_out/c_in/c_noise of sigma.
///
/// `kEdmUnitSigma` is the sigma_data = 1 EDM parameterization. `kSd21Discrete`
/// maps sigma to the index of the nearest entry of a caller-supplied ascending
/// sigma table for c_noise (the original table is not reproduced here).
class Preconditioner {
  public:
    static Preconditioner edm_unit_sigma();
    static Preconditioner sd21_discrete(Vector sigma_table);

    PrecondVariant variant() const { return variant_; }
    PrecondCoefficients operator()(double sigma) const;

  private:
    PrecondVariant variant_ = PrecondVariant::kEdmUnitSigma;
    Vector sigma_table_;
};

/// Throws DomainError for sigma <= 0.
PrecondCoefficients precondition(const Preconditioner &precond, double sigma);

/// Conditioning signal for the toy denoisers: an opaque token. The
/// unconditional path is selected with `kNullToken`.
using CondToken = std::string;
inline const CondToken kNullToken = "<null>";

/// D(x; sigma, cond) -> estimate of the clean sample, same shape as x.
class Denoiser {
  public:
    virtual ~Denoiser() = default;
    virtual Vector denoise(std::span<const double> x, double sigma, const CondToken &cond) const = 0;
};

/// Raw network F(c_in * x; c_noise, cond).
using RawNet = std::function<Vector(std::span<const double> scaled_x, double c_noise, const CondToken &cond)>;

/// D = c_skip * x + c_out * F(c_in * x; c_noise, cond). Throws ContractError if
/// F returns a vector of a different length.
Vector denoise(const Preconditioner &precond, const RawNet &net, std::span<const double> x, double sigma,
               const CondToken &cond);

/// Denoiser wrapping a raw network with preconditioning.
class PreconditionedDenoiser final : public Denoiser {
  public:
    PreconditionedDenoiser(Preconditioner precond, RawNet net) : precond_(std::move(precond)), net_(std::move(net)) {}
    Vector denoise(std::span<const double> x, double sigma, const CondToken &cond) const override;

  private:
    Preconditioner precond_;
    RawNet net_;
};

/// (D - x) / sigma^2. Throws DomainError for sigma <= 0.
Vector score_from_denoiser(std::span<const double> denoised, std::span<const double> x, double sigma);

/// Isotropic Gaussian mixture. Weights must sum to one within 1e-12.
struct GaussianMixture {
    struct Component {
        double weight = 1.0;
        Vector mean;
        double variance = 0.0;
    };
    std::vector<Component> components;

    std::size_t dim() const { return components.empty() ? 0 : components.front().mean.size(); }
    /// Throws DomainError on empty mixture, negative weight/variance, ragged
    /// means or weights not summing to one.
    void validate() const;
    /// Draw x0 from the mixture.
    Vector sample(Rng &rng) const;
};

/// Posterior mean E[x0 | x0 + n = x], n ~ N(0, sigma^2 I). Exact.
Vector analytic_gm_denoiser(const GaussianMixture &mixture, std::span<const double> x, double sigma);

/// ln p(x; sigma) of the mixture convolved with N(0, sigma^2 I).
double mixture_log_density(const GaussianMixture &mixture, std::span<const double> x, double sigma);

/// Analytic denoiser with one mixture per conditioning token. The state vector
/// is treated as consecutive frames of the mixture dimension, each denoised
/// independently (the mixture is the per-frame marginal).
class MixtureDenoiser final : public Denoiser {
  public:
    MixtureDenoiser(GaussianMixture unconditional, std::map<CondToken, GaussianMixture> conditional = {});
    Vector denoise(std::span<const double> x, double sigma, const CondToken &cond) const override;
    const GaussianMixture &mixture_for(const CondToken &cond) const;

  private:
    GaussianMixture unconditional_;
    std::map<CondToken, GaussianMixture> conditional_;
};

/// log sigma ~ N(p_mean, p_std^2).
struct NoiseLevelDistribution {
    double p_mean = -1.2;
    double p_std = 1.0;

    static NoiseLevelDistribution image_finetune() { return {-1.2, 1.0}; }
    static NoiseLevelDistribution video_pretrain_highres() { return {0.0, 1.0}; }
    static NoiseLevelDistribution text_to_video_hq() { return {0.5, 1.4}; }
    static NoiseLevelDistribution image_to_video_base() { return {0.7, 1.6}; }
    static NoiseLevelDistribution image_to_video_hq() { return {1.0, 1.6}; }
};

double sample_sigma(const NoiseLevelDistribution &dist, Rng &rng);

/// lambda(sigma) = (1 + sigma^2) / sigma^2.
double edm_loss_weight(double sigma);

struct DsmEstimate {
    double mean = 0.0;
    double std_error = 0.0;
};

using DataSampler = std::function<Vector(Rng &)>;
using LossWeight = std::function<double(double sigma)>;

/// Monte-Carlo estimate of E[lambda(sigma) * ||D(x0 + n; sigma) - x0||^2].
/// Each draw consumes: one x0 from `data`, one sigma, then dim normals.
DsmEstimate dsm_loss(const Denoiser &denoiser, const DataSampler &data, const NoiseLevelDistribution &noise,
                     const LossWeight &weight, Rng &rng, std::size_t n_draws, const CondToken &cond = kNullToken);

/// Descending sigma levels sigma_0 = sigma_max > ... > sigma_{N-1} = sigma_min, then 0.
struct SigmaSchedule {
    Vector sigmas;
    std::size_t steps() const { return sigmas.empty() ? 0 : sigmas.size() - 1; }
};

/// rho-power spacing between sigma_max and sigma_min with N levels plus the
/// terminal zero. Throws DomainError unless sigma_max > sigma_min > 0, N >= 1, rho > 0.
SigmaSchedule make_sigma_schedule(double sigma_max, double sigma_min, int n, double rho = 7.0);

/// w * D_cond - (w - 1) * D_uncond. Throws ContractError on length mismatch.
Vector cfg_combine(std::span<const double> d_cond, std::span<const double> d_uncond, double w);

enum class GuidanceKind { kConstant, kLinear, kTriangular };

/// Per-frame guidance scale. Constant yields w_max; linear ramps from w_min at
/// frame 0 to w_max at frame K-1; triangular is the tent over u = i/K that
/// starts at w_min, peaks at w_max at u = 0.5 and would return to w_min at i = K.
double guidance_schedule(GuidanceKind kind, int k, double w_min, double w_max, int frame);
Vector guidance_weights(GuidanceKind kind, int k, double w_min, double w_max);
GuidanceKind parse_guidance_kind(const std::string &name);

/// Guidance applied to a state made of `frame_weights.size()` equal frames.
/// An empty weight list means plain conditional sampling (w = 1).
struct Guidance {
    Vector frame_weights;
};

/// x_init ~ N(0, sigma_0^2 I).
Vector draw_initial_state(std::size_t dim, double sigma0, Rng &rng);

/// Deterministic sampler: Euler integration of the probability-flow ODE,
///   x_{i+1} = x_i + (sigma_{i+1} - sigma_i) * (x_i - D^w(x_i; sigma_i)) / sigma_i,
/// which coincides with deterministic DDIM in the variance-exploding setting.
/// Pure in its arguments.
Vector ddim_sample(const Denoiser &denoiser, const SigmaSchedule &schedule, const CondToken &cond,
                   const Guidance &guidance, std::span<const double> x_init);

} // namespace orbitforge::diffusion
