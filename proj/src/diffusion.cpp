// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

#include "orbitforge/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace orbitforge::diffusion {

Preconditioner Preconditioner::edm_unit_sigma() { return Preconditioner{}; }

Preconditioner Preconditioner::sd21_discrete(Vector sigma_table) {
    if (sigma_table.empty()) {
        throw DomainError("sd21 preconditioner needs a non-empty sigma table");
    }
    if (!std::is_sorted(sigma_table.begin(), sigma_table.end())) {
        throw DomainError("sd21 sigma table must be ascending");
    }
    Preconditioner p;
    p.variant_ = PrecondVariant::kSd21Discrete;
    p.sigma_table_ = std::move(sigma_table);
    return p;
}

PrecondCoefficients Preconditioner::operator()(double sigma) const {
    if (!(sigma > 0.0)) {
        throw DomainError("preconditioning requires sigma > 0");
    }
    const double s2p1 = sigma * sigma + 1.0;
    PrecondCoefficients c;
    c.c_in = 1.0 / std::sqrt(s2p1);
    if (variant_ == PrecondVariant::kEdmUnitSigma) {
        c.c_skip = 1.0 / s2p1;
        c.c_out = -sigma / std::sqrt(s2p1);
        c.c_noise = 0.25 * std::log(sigma);
    } else {
        c.c_skip = 1.0;
        c.c_out = -sigma;
        std::size_t best = 0;
        for (std::size_t j = 1; j < sigma_table_.size(); ++j) {
            if (std::abs(sigma - sigma_table_[j]) < std::abs(sigma - sigma_table_[best])) {
                best = j;
            }
        }
        c.c_noise = static_cast<double>(best);
    }
    return c;
}

PrecondCoefficients precondition(const Preconditioner &precond, double sigma) { return precond(sigma); }

Vector denoise(const Preconditioner &precond, const RawNet &net, std::span<const double> x, double sigma,
               const CondToken &cond) {
    const PrecondCoefficients c = precond(sigma);
    Vector scaled(x.begin(), x.end());
    for (double &v : scaled) {
        v *= c.c_in;
    }
    const Vector f = net(scaled, c.c_noise, cond);
    if (f.size() != x.size()) {
        throw ContractError("raw network output length " + std::to_string(f.size()) + " != input length " +
                            std::to_string(x.size()));
    }
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = c.c_skip * x[i] + c.c_out * f[i];
    }
    return out;
}

Vector PreconditionedDenoiser::denoise(std::span<const double> x, double sigma, const CondToken &cond) const {
    return diffusion::denoise(precond_, net_, x, sigma, cond);
}

Vector score_from_denoiser(std::span<const double> denoised, std::span<const double> x, double sigma) {
    if (!(sigma > 0.0)) {
        throw DomainError("score requires sigma > 0");
    }
    if (denoised.size() != x.size()) {
        throw ContractError("score: denoised and x lengths differ");
    }
    Vector s(x.size());
    const double inv = 1.0 / (sigma * sigma);
    for (std::size_t i = 0; i < x.size(); ++i) {
        s[i] = (denoised[i] - x[i]) * inv;
    }
    return s;
}

void GaussianMixture::validate() const {
    if (components.empty()) {
        throw DomainError("gaussian mixture has no components");
    }
    const std::size_t d = components.front().mean.size();
    double total = 0.0;
    for (const Component &c : components) {
        if (c.mean.size() != d) {
            throw DomainError("gaussian mixture components have different dimensions");
        }
        if (c.weight < 0.0 || c.variance < 0.0) {
            throw DomainError("gaussian mixture weight and variance must be >= 0");
        }
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw DomainError("gaussian mixture weights sum to " + std::to_string(total));
    }
}

Vector GaussianMixture::sample(Rng &rng) const {
    const double u = uniform(rng, 0.0, 1.0);
    std::size_t k = 0;
    double acc = components[0].weight;
    while (u >= acc && k + 1 < components.size()) {
        ++k;
        acc += components[k].weight;
    }
    const Component &c = components[k];
    const double sd = std::sqrt(c.variance);
    Vector x(c.mean.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = c.mean[i] + sd * standard_normal(rng);
    }
    return x;
}

namespace {

// log of w_k * N(x; mu_k, var I), or -inf for zero weight / degenerate point mass.
double log_component(const GaussianMixture::Component &c, std::span<const double> x, double var) {
    if (c.weight <= 0.0) {
        return -std::numeric_limits<double>::infinity();
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - c.mean[i];
        sq += d * d;
    }
    if (var <= 0.0) {
        return sq == 0.0 ? std::log(c.weight) : -std::numeric_limits<double>::infinity();
    }
    const double dim = static_cast<double>(x.size());
    return std::log(c.weight) - 0.5 * dim * std::log(2.0 * kPi * var) - 0.5 * sq / var;
}

} // namespace

Vector analytic_gm_denoiser(const GaussianMixture &mixture, std::span<const double> x, double sigma) {
    if (mixture.components.empty()) {
        throw DomainError("analytic denoiser: empty mixture");
    }
    if (sigma < 0.0) {
        throw DomainError("analytic denoiser: sigma must be >= 0");
    }
    if (x.size() != mixture.dim()) {
        throw ContractError("analytic denoiser: x has wrong dimension");
    }
    if (sigma == 0.0) {
        return Vector(x.begin(), x.end());
    }
    const double s2 = sigma * sigma;
    const std::size_t n = mixture.components.size();
    Vector logr(n);
    double max_log = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
        const auto &c = mixture.components[k];
        logr[k] = log_component(c, x, c.variance + s2);
        max_log = std::max(max_log, logr[k]);
    }
    double norm = 0.0;
    for (double &l : logr) {
        l = std::exp(l - max_log);
        norm += l;
    }
    Vector out(x.size(), 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const auto &c = mixture.components[k];
        const double r = logr[k] / norm;
        if (r == 0.0) {
            continue;
        }
        const double gain = c.variance / (c.variance + s2);
        for (std::size_t i = 0; i < x.size(); ++i) {
            out[i] += r * (c.mean[i] + gain * (x[i] - c.mean[i]));
        }
    }
    return out;
}

double mixture_log_density(const GaussianMixture &mixture, std::span<const double> x, double sigma) {
    mixture.validate();
    const double s2 = sigma * sigma;
    double max_log = -std::numeric_limits<double>::infinity();
    Vector logs;
    for (const auto &c : mixture.components) {
        logs.push_back(log_component(c, x, c.variance + s2));
        max_log = std::max(max_log, logs.back());
    }
    double acc = 0.0;
    for (double l : logs) {
        acc += std::exp(l - max_log);
    }
    return max_log + std::log(acc);
}

MixtureDenoiser::MixtureDenoiser(GaussianMixture unconditional, std::map<CondToken, GaussianMixture> conditional)
    : unconditional_(std::move(unconditional)), conditional_(std::move(conditional)) {
    unconditional_.validate();
    for (const auto &[token, m] : conditional_) {
        m.validate();
        if (m.dim() != unconditional_.dim()) {
            throw DomainError("conditional mixture '" + token + "' has a different dimension");
        }
    }
}

const GaussianMixture &MixtureDenoiser::mixture_for(const CondToken &cond) const {
    if (cond == kNullToken) {
        return unconditional_;
    }
    const auto it = conditional_.find(cond);
    if (it == conditional_.end()) {
        throw DomainError("unknown conditioning token '" + cond + "'");
    }
    return it->second;
}

Vector MixtureDenoiser::denoise(std::span<const double> x, double sigma, const CondToken &cond) const {
    const GaussianMixture &m = mixture_for(cond);
    const std::size_t d = m.dim();
    if (x.size() % d != 0) {
        throw ContractError("state length is not a multiple of the mixture dimension");
    }
    Vector out(x.size());
    for (std::size_t f = 0; f < x.size(); f += d) {
        const Vector frame = analytic_gm_denoiser(m, x.subspan(f, d), sigma);
        std::copy(frame.begin(), frame.end(), out.begin() + static_cast<std::ptrdiff_t>(f));
    }
    return out;
}

double sample_sigma(const NoiseLevelDistribution &dist, Rng &rng) {
    return std::exp(dist.p_mean + dist.p_std * standard_normal(rng));
}

double edm_loss_weight(double sigma) { return (1.0 + sigma * sigma) / (sigma * sigma); }

DsmEstimate dsm_loss(const Denoiser &denoiser, const DataSampler &data, const NoiseLevelDistribution &noise,
                     const LossWeight &weight, Rng &rng, std::size_t n_draws, const CondToken &cond) {
    if (n_draws < 1) {
        throw DomainError("dsm_loss needs at least one draw");
    }
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t k = 0; k < n_draws; ++k) {
        const Vector x0 = data(rng);
        const double sigma = sample_sigma(noise, rng);
        Vector noisy(x0.size());
        for (std::size_t i = 0; i < x0.size(); ++i) {
            noisy[i] = x0[i] + sigma * standard_normal(rng);
        }
        const Vector d = denoiser.denoise(noisy, sigma, cond);
        double err = 0.0;
        for (std::size_t i = 0; i < x0.size(); ++i) {
            err += (d[i] - x0[i]) * (d[i] - x0[i]);
        }
        const double term = weight(sigma) * err;
        sum += term;
        sum_sq += term * term;
    }
    const double n = static_cast<double>(n_draws);
    DsmEstimate est;
    est.mean = sum / n;
    if (n_draws > 1) {
        const double var = std::max(0.0, (sum_sq - n * est.mean * est.mean) / (n - 1.0));
        est.std_error = std::sqrt(var / n);
    }
    return est;
}

SigmaSchedule make_sigma_schedule(double sigma_max, double sigma_min, int n, double rho) {
    if (!(sigma_min > 0.0) || !(sigma_max > sigma_min)) {
        throw DomainError("sigma schedule needs sigma_max > sigma_min > 0");
    }
    if (n < 1 || !(rho > 0.0)) {
        throw DomainError("sigma schedule needs N >= 1 and rho > 0");
    }
    SigmaSchedule s;
    s.sigmas.reserve(static_cast<std::size_t>(n) + 1);
    if (n == 1) {
        s.sigmas.push_back(sigma_max);
    } else {
        const double hi = std::pow(sigma_max, 1.0 / rho);
        const double lo = std::pow(sigma_min, 1.0 / rho);
        for (int i = 0; i < n; ++i) {
            if (i == 0) {
                s.sigmas.push_back(sigma_max);
            } else if (i == n - 1) {
                s.sigmas.push_back(sigma_min);
            } else {
                const double u = static_cast<double>(i) / static_cast<double>(n - 1);
                s.sigmas.push_back(std::pow(hi + u * (lo - hi), rho));
            }
        }
    }
    s.sigmas.push_back(0.0);
    return s;
}

Vector cfg_combine(std::span<const double> d_cond, std::span<const double> d_uncond, double w) {
    if (d_cond.size() != d_uncond.size()) {
        throw ContractError("cfg_combine: prediction lengths differ");
    }
    Vector out(d_cond.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = w * d_cond[i] - (w - 1.0) * d_uncond[i];
    }
    return out;
}

double guidance_schedule(GuidanceKind kind, int k, double w_min, double w_max, int frame) {
    if (k < 1 || frame < 0 || frame >= k) {
        throw DomainError("guidance frame " + std::to_string(frame) + " out of range for K=" + std::to_string(k));
    }
    switch (kind) {
    case GuidanceKind::kConstant:
        return w_max;
    case GuidanceKind::kLinear:
        if (k == 1) {
            return w_min;
        }
        return w_min + (w_max - w_min) * static_cast<double>(frame) / static_cast<double>(k - 1);
    case GuidanceKind::kTriangular: {
        const double u = static_cast<double>(frame) / static_cast<double>(k);
        return w_min + (w_max - w_min) * (1.0 - std::abs(2.0 * u - 1.0));
    }
    }
    throw DomainError("unknown guidance kind");
}

Vector guidance_weights(GuidanceKind kind, int k, double w_min, double w_max) {
    Vector w(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        w[static_cast<std::size_t>(i)] = guidance_schedule(kind, k, w_min, w_max, i);
    }
    return w;
}

GuidanceKind parse_guidance_kind(const std::string &name) {
    if (name == "constant") {
        return GuidanceKind::kConstant;
    }
    if (name == "linear") {
        return GuidanceKind::kLinear;
    }
    if (name == "triangular") {
        return GuidanceKind::kTriangular;
    }
    throw DomainError("unknown guidance kind '" + name + "'");
}

Vector draw_initial_state(std::size_t dim, double sigma0, Rng &rng) {
    Vector x(dim);
    for (double &v : x) {
        v = sigma0 * standard_normal(rng);
    }
    return x;
}

namespace {

Vector guided_prediction(const Denoiser &denoiser, std::span<const double> x, double sigma, const CondToken &cond,
                         const Guidance &guidance) {
    Vector d_cond = denoiser.denoise(x, sigma, cond);
    if (d_cond.size() != x.size()) {
        throw ContractError("denoiser changed the state length");
    }
    const auto &w = guidance.frame_weights;
    const bool all_unit = std::all_of(w.begin(), w.end(), [](double v) { return v == 1.0; });
    if (all_unit) {
        return d_cond;
    }
    if (x.size() % w.size() != 0) {
        throw ContractError("state length is not divisible by the number of guidance frames");
    }
    const Vector d_uncond = denoiser.denoise(x, sigma, kNullToken);
    const std::size_t frame = x.size() / w.size();
    Vector out(x.size());
    for (std::size_t f = 0; f < w.size(); ++f) {
        const auto off = f * frame;
        const Vector mixed = cfg_combine(std::span<const double>(d_cond).subspan(off, frame),
                                         std::span<const double>(d_uncond).subspan(off, frame), w[f]);
        std::copy(mixed.begin(), mixed.end(), out.begin() + static_cast<std::ptrdiff_t>(off));
    }
    return out;
}

} // namespace

Vector ddim_sample(const Denoiser &denoiser, const SigmaSchedule &schedule, const CondToken &cond,
                   const Guidance &guidance, std::span<const double> x_init) {
    const Vector &s = schedule.sigmas;
    if (s.size() < 2 || s.back() != 0.0) {
        throw DomainError("sigma schedule must have at least one step and end at 0");
    }
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        if (!(s[i] > s[i + 1])) {
            throw DomainError("sigma schedule must be strictly decreasing");
        }
    }
    Vector x(x_init.begin(), x_init.end());
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        const Vector d = guided_prediction(denoiser, x, s[i], cond, guidance);
        const double ratio = (s[i + 1] - s[i]) / s[i];
        for (std::size_t j = 0; j < x.size(); ++j) {
            x[j] += ratio * (x[j] - d[j]);
        }
    }
    return x;
}

} // namespace orbitforge::diffusion
