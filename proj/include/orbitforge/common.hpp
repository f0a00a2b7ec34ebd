// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace orbitforge {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Vector = std::vector<double>;

/// The single random engine used throughout. All randomness is derived from
/// one root seed via `derive_seed` so that subsystems get independent streams.
using Rng = std::mt19937_64;

/// Precondition violated on a numeric argument (negative sigma, bad range, ...).
class DomainError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

/// Caller broke an interface contract (shape mismatch, missing cache, ...).
class ContractError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

/// A computation produced a non-finite value.
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// File could not be read, written or parsed. The message names the path.
class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kPi = std::numbers::pi;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// SplitMix64 finalizer; also used as a stateless hash.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for a named subsystem stream split off a root seed.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view tag) {
    std::uint64_t h = splitmix64(root);
    for (unsigned char c : tag) {
        h = splitmix64(h ^ c);
    }
    return h;
}

/// Uniform double in [0, 1) from a 64-bit hash.
inline double hash_to_unit(std::uint64_t h) {
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

/// Standard normal draw. std::normal_distribution caches its second value,
/// which makes call sequences depend on distribution lifetime; this does not.
inline double standard_normal(Rng &rng) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    double u1 = uni(rng);
    while (u1 <= 0.0) {
        u1 = uni(rng);
    }
    const double u2 = uni(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

inline double uniform(Rng &rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    return dist(rng);
}

} // namespace orbitforge
