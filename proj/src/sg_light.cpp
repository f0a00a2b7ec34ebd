// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

#include "orbitforge/sg_light.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace orbitforge::sg {

void SphericalGaussian::validate() const {
    if (std::abs(axis.norm() - 1.0) > 1e-9) {
        throw DomainError("spherical gaussian axis must be unit length");
    }
    if (!(sharpness > 0.0)) {
        throw DomainError("spherical gaussian sharpness must be positive");
    }
    if (amplitude < 0.0) {
        throw DomainError("spherical gaussian amplitude must be non-negative");
    }
}

namespace {

void require_unit(const Vec3 &x, const char *what) {
    if (std::abs(x.norm() - 1.0) > 1e-6) {
        throw DomainError(std::string(what) + " must be a unit vector");
    }
}

// E = exp(-S) sinh(d) / d and Q = exp(-S) h'(d) / d with h(d) = sinh(d) / d.
struct ProductKernel {
    double e = 0.0;
    double q = 0.0;
};

ProductKernel product_kernel(double d, double s_sum) {
    ProductKernel k;
    if (d < 1e-2) {
        const double base = std::exp(-s_sum);
        const double d2 = d * d;
        k.e = base * (1.0 + d2 / 6.0 + d2 * d2 / 120.0);
        k.q = base * (1.0 / 3.0 + d2 / 30.0 + d2 * d2 / 840.0);
    } else {
        const double ep = std::exp(d - s_sum);
        const double em = ep * std::exp(-2.0 * d);
        k.e = (ep - em) / (2.0 * d);
        k.q = ((ep + em) / (2.0 * d) - k.e / d) / d;
    }
    return k;
}

SphericalGaussian cosine_lobe_unchecked(const Vec3 &n) {
    return SphericalGaussian{n, kCosineLobeSharpness, kCosineLobeAmplitude};
}

} // namespace

double sg_eval(const SphericalGaussian &g, const Vec3 &x) {
    require_unit(x, "sg_eval direction");
    return g.amplitude * std::exp(g.sharpness * (g.axis.dot(x) - 1.0));
}

double sg_inner_product(const SphericalGaussian &g1, const SphericalGaussian &g2) {
    const double d = (g1.sharpness * g1.axis + g2.sharpness * g2.axis).norm();
    const ProductKernel k = product_kernel(d, g1.sharpness + g2.sharpness);
    return 4.0 * kPi * g1.amplitude * g2.amplitude * k.e;
}

InnerProductGrad sg_inner_product_grad(const SphericalGaussian &g1, const SphericalGaussian &g2) {
    const Vec3 v = g1.sharpness * g1.axis + g2.sharpness * g2.axis;
    const double d = v.norm();
    const ProductKernel k = product_kernel(d, g1.sharpness + g2.sharpness);
    const double scale = 4.0 * kPi * g1.amplitude * g2.amplitude;
    InnerProductGrad r;
    r.value = scale * k.e;
    r.d_amplitude1 = 4.0 * kPi * g2.amplitude * k.e;
    r.d_sharpness1 = scale * (-k.e + k.q * g1.axis.dot(v));
    r.d_axis1 = scale * k.q * g1.sharpness * v;
    r.d_axis2 = scale * k.q * g2.sharpness * v;
    return r;
}

SphericalGaussian cosine_lobe(const Vec3 &n) {
    require_unit(n, "cosine lobe normal");
    return cosine_lobe_unchecked(n);
}

double irradiance(const Envmap &env, const Vec3 &n) {
    const SphericalGaussian c = cosine_lobe_unchecked(n);
    double l = 0.0;
    for (const SphericalGaussian &g : env.lobes) {
        l += std::max(sg_inner_product(g, c), 0.0);
    }
    return l / kPi;
}

double irradiance_accumulate(const Envmap &env, const Vec3 &n, double scale, std::span<LobeGrad> lobe_grads,
                             Vec3 *d_normal) {
    const SphericalGaussian c = cosine_lobe_unchecked(n);
    const bool want_lobes = !lobe_grads.empty();
    if (want_lobes && lobe_grads.size() != env.lobes.size()) {
        throw ContractError("irradiance gradient buffer has the wrong number of lobes");
    }
    double l = 0.0;
    const double s = scale / kPi;
    for (std::size_t i = 0; i < env.lobes.size(); ++i) {
        const InnerProductGrad ip = sg_inner_product_grad(env.lobes[i], c);
        if (ip.value <= 0.0) {
            continue;
        }
        l += ip.value;
        if (want_lobes) {
            lobe_grads[i].d_axis += s * ip.d_axis1;
            lobe_grads[i].d_sharpness += s * ip.d_sharpness1;
            lobe_grads[i].d_amplitude += s * ip.d_amplitude1;
        }
        if (d_normal != nullptr) {
            *d_normal += s * ip.d_axis2;
        }
    }
    return l / kPi;
}

Vec3 shade(const Vec3 &albedo, double irradiance) { return albedo * irradiance; }

double hsv_value(const Vec3 &rgb) { return rgb.maxCoeff(); }

double illum_loss(std::span<const double> image, std::span<const double> illum, std::span<const double> foreground,
                  std::span<double> d_illum) {
    const std::size_t n = illum.size();
    if (image.size() != 3 * n || (!foreground.empty() && foreground.size() != n) ||
        (!d_illum.empty() && d_illum.size() != n)) {
        throw ContractError("illum_loss: image, illumination and mask resolutions differ");
    }
    std::size_t count = 0;
    double sum = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        if (!foreground.empty() && !(foreground[p] > 0.5)) {
            continue;
        }
        const double v = std::max({image[3 * p], image[3 * p + 1], image[3 * p + 2]});
        const double r = v - illum[p];
        sum += r * r;
        ++count;
    }
    if (count == 0) {
        return 0.0;
    }
    if (!d_illum.empty()) {
        const double inv = 1.0 / static_cast<double>(count);
        for (std::size_t p = 0; p < n; ++p) {
            if (!foreground.empty() && !(foreground[p] > 0.5)) {
                continue;
            }
            const double v = std::max({image[3 * p], image[3 * p + 1], image[3 * p + 2]});
            d_illum[p] += -2.0 * (v - illum[p]) * inv;
        }
    }
    return sum / static_cast<double>(count);
}

Envmap fibonacci_envmap(int n, double sharpness, double amplitude) {
    Envmap env;
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
        const double z = 1.0 - (2.0 * i + 1.0) / static_cast<double>(n);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden * i;
        env.lobes.push_back(SphericalGaussian{Vec3(r * std::cos(phi), r * std::sin(phi), z), sharpness, amplitude});
    }
    return env;
}

double shading_loss(const Envmap &env, std::span<const ShadingSample> samples) {
    if (samples.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (const ShadingSample &s : samples) {
        const Vec3 pred = shade(s.albedo, irradiance(env, s.normal));
        sum += (pred - s.color).squaredNorm();
    }
    return sum / (3.0 * static_cast<double>(samples.size()));
}

Vector shading_loss_amplitude_grad(const Envmap &env, std::span<const ShadingSample> samples) {
    Vector grad(env.lobes.size(), 0.0);
    if (samples.empty()) {
        return grad;
    }
    std::vector<LobeGrad> lg(env.lobes.size());
    const double norm = 1.0 / (3.0 * static_cast<double>(samples.size()));
    for (const ShadingSample &s : samples) {
        const double l = irradiance(env, s.normal);
        const Vec3 resid = shade(s.albedo, l) - s.color;
        const double dl = 2.0 * norm * resid.dot(s.albedo);
        irradiance_accumulate(env, s.normal, dl, lg, nullptr);
    }
    for (std::size_t i = 0; i < grad.size(); ++i) {
        grad[i] = lg[i].d_amplitude;
    }
    return grad;
}

namespace {

// Parameter vector layout per lobe: amplitude, log sharpness, axis xyz.
constexpr std::size_t kParamsPerLobe = 5;

Vector pack(const Envmap &env) {
    Vector p;
    for (const SphericalGaussian &g : env.lobes) {
        p.push_back(g.amplitude);
        p.push_back(std::log(g.sharpness));
        p.push_back(g.axis.x());
        p.push_back(g.axis.y());
        p.push_back(g.axis.z());
    }
    return p;
}

Envmap unpack(const Vector &p, const FitOptions &opt) {
    Envmap env;
    for (std::size_t i = 0; i + kParamsPerLobe <= p.size(); i += kParamsPerLobe) {
        SphericalGaussian g;
        g.amplitude = std::max(0.0, p[i]);
        g.sharpness = std::clamp(std::exp(p[i + 1]), opt.min_sharpness, opt.max_sharpness);
        Vec3 axis(p[i + 2], p[i + 3], p[i + 4]);
        const double len = axis.norm();
        g.axis = len > 0.0 ? Vec3(axis / len) : Vec3(0.0, 0.0, 1.0);
        env.lobes.push_back(g);
    }
    return env;
}

} // namespace

FitResult fit_envmap(std::span<const ShadingSample> samples, Envmap init, const FitOptions &options) {
    if (samples.empty()) {
        throw DomainError("fit_envmap needs at least one observation");
    }
    FitResult result;
    Vector params = pack(init);
    Envmap current = unpack(params, options);
    double loss = shading_loss(current, samples);
    result.loss_history.push_back(loss);
    double step = options.step_size;
    int rising = 0;
    for (int it = 0; it < options.iterations; ++it) {
        if (loss == 0.0) {
            break;
        }
        Vector grad(params.size(), 0.0);
        const Vector amp_grad = shading_loss_amplitude_grad(current, samples);
        for (std::size_t l = 0; l < current.lobes.size(); ++l) {
            grad[l * kParamsPerLobe] = amp_grad[l];
            for (std::size_t k = 1; k < kParamsPerLobe; ++k) {
                const std::size_t idx = l * kParamsPerLobe + k;
                Vector plus = params;
                Vector minus = params;
                plus[idx] += options.fd_step;
                minus[idx] -= options.fd_step;
                grad[idx] = (shading_loss(unpack(plus, options), samples) -
                             shading_loss(unpack(minus, options), samples)) /
                            (2.0 * options.fd_step);
            }
        }
        bool accepted = false;
        bool first_trial = true;
        for (int halving = 0; halving < 40; ++halving) {
            Vector trial = params;
            for (std::size_t i = 0; i < trial.size(); ++i) {
                trial[i] -= step * grad[i];
            }
            Envmap cand = unpack(trial, options);
            const double cand_loss = shading_loss(cand, samples);
            if (!std::isfinite(cand_loss)) {
                result.converged = false;
                result.failure = "non-finite loss at iteration " + std::to_string(it);
                result.envmap = current;
                return result;
            }
            if (first_trial) {
                rising = cand_loss > loss ? rising + 1 : 0;
                first_trial = false;
            }
            if (cand_loss < loss) {
                params = pack(cand);
                current = std::move(cand);
                loss = cand_loss;
                accepted = true;
                step *= 1.5;
                break;
            }
            step *= 0.5;
        }
        if (rising >= options.divergence_window) {
            result.converged = false;
            result.failure = "loss increased for " + std::to_string(rising) + " consecutive steps";
            break;
        }
        if (!accepted) {
            break;
        }
        result.loss_history.push_back(loss);
    }
    result.envmap = current;
    return result;
}

double mc_sphere_integral(const std::function<double(const Vec3 &)> &f, std::size_t n_samples, Rng &rng) {
    if (n_samples < 1) {
        throw DomainError("mc_sphere_integral needs at least one sample");
    }
    const auto nz = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(n_samples) / kPi)));
    const std::size_t nphi = n_samples / nz;
    const std::size_t stratified = nz * nphi;
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    auto point = [](double z, double phi) {
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        return Vec3(r * std::cos(phi), r * std::sin(phi), z);
    };
    double sum = 0.0;
    for (std::size_t i = 0; i < nz; ++i) {
        for (std::size_t j = 0; j < nphi; ++j) {
            const double z = -1.0 + 2.0 * (static_cast<double>(i) + uni(rng)) / static_cast<double>(nz);
            const double phi = 2.0 * kPi * (static_cast<double>(j) + uni(rng)) / static_cast<double>(nphi);
            sum += f(point(z, phi));
        }
    }
    for (std::size_t r = stratified; r < n_samples; ++r) {
        sum += f(point(-1.0 + 2.0 * uni(rng), 2.0 * kPi * uni(rng)));
    }
    return 4.0 * kPi * sum / static_cast<double>(n_samples);
}

void write_envmap(std::ostream &out, const Envmap &env) {
    char line[160];
    for (const SphericalGaussian &g : env.lobes) {
        std::snprintf(line, sizeof(line), "%.9g %.9g %.9g %.9g %.9g\n", g.axis.x(), g.axis.y(), g.axis.z(),
                      g.sharpness, g.amplitude);
        out << line;
    }
}

Envmap read_envmap(std::istream &in) {
    Envmap env;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        std::istringstream ss(line);
        SphericalGaussian g;
        double x = 0, y = 0, z = 0;
        if (!(ss >> x >> y >> z >> g.sharpness >> g.amplitude)) {
            throw IoError("envmap line " + std::to_string(lineno) + " is not `mx my mz s a`");
        }
        g.axis = Vec3(x, y, z);
        env.lobes.push_back(g);
    }
    return env;
}

void save_envmap(const std::string &path, const Envmap &env) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot write envmap file " + path);
    }
    write_envmap(f, env);
}

Envmap load_envmap(const std::string &path) {
    std::ifstream f(path);
    if (!f) {
        throw IoError("cannot read envmap file " + path);
    }
    try {
        return read_envmap(f);
    } catch (const IoError &e) {
        throw IoError(path + ": " + e.what());
    }
}

} // namespace orbitforge::sg
