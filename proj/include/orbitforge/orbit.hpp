// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orbitforge/common.hpp"

#include <iosfwd>
#include <span>

/// Camera trajectories around an object at the origin and the pinhole camera
/// geometry used by the renderer.
///
/// Axis conventions: world up is +z, azimuth is measured counter-clockwise
/// from +x in the xy-plane, elevation is measured from the xy-plane towards +z.
/// Camera frames are right-handed with +x right, +y down and +z forward.
namespace orbitforge::orbit {

struct CameraPose {
    double elevation_deg = 0.0;
    double azimuth_deg = 0.0;

    /// Elevation clamped to [-90, 90], azimuth wrapped into [0, 360).
    static CameraPose normalized(double elevation_deg, double azimuth_deg);
};

struct Orbit {
    std::vector<CameraPose> poses;
    std::size_t conditioning_index = 0;

    std::size_t size() const { return poses.size(); }
};

inline constexpr double kDefaultFovDeg = 33.8;
inline constexpr double kMaxElevationDeg = 89.0;
/// Elevation range used when sampling static training orbits.
inline constexpr double kStaticElevationMinDeg = -5.0;
inline constexpr double kStaticElevationMaxDeg = 30.0;

struct DynamicOrbitParams {
    int n_sinusoids = 3;
    int period_min = 1;
    int period_max = 5;
    double amplitude_min_deg = 0.5;
    double amplitude_max_deg = 10.0;
    double azimuth_noise_std_deg = 2.0;
    int smoothing_half_width = 1;
    double max_elevation_deg = kMaxElevationDeg;
};

/// Regularly spaced azimuths at a fixed elevation. Throws DomainError for K < 2
/// or |elevation| > 89.
Orbit static_orbit(int k, double elevation_deg, double start_azimuth_deg = 0.0);

/// The random choices behind one dynamic orbit. `elevation(i)` and
/// `azimuth(i)` are defined for any integer i and are K-periodic, which is
/// what makes the loop close at i = K.
struct DynamicOrbitPlan {
    struct Sinusoid {
        int period = 1;
        double amplitude_deg = 0.0;
        double phase_rad = 0.0;
    };

    int k = 0;
    CameraPose cond;
    std::vector<Sinusoid> sinusoids;
    Vector azimuth_noise_deg; // length K, entry 0 is exactly 0
    int smoothing_half_width = 1;
    double max_elevation_deg = kMaxElevationDeg;

    double raw_elevation_offset(int i) const;
    double smoothed_elevation_offset(int i) const;
    double elevation(int i) const;
    /// Unwrapped azimuth (not reduced modulo 360).
    double azimuth(int i) const;
    Orbit realize() const;
};

DynamicOrbitPlan plan_dynamic_orbit(Rng &rng, int k, CameraPose cond, const DynamicOrbitParams &params);
Orbit dynamic_orbit(Rng &rng, int k, CameraPose cond, const DynamicOrbitParams &params);

/// Elevation follows cond_e + amplitude * sin(2 pi i / K) with regular azimuths.
/// Throws DomainError if |cond_e| + amplitude > 89.
Orbit sine_elevation_orbit(int k, CameraPose cond, double amplitude_deg);

/// Circular box filter of the given half-width. Linear and shift-equivariant.
Vector circular_box_smooth(std::span<const double> values, int half_width);

/// Interleaved (sin, cos) pairs of the angle at frequencies base_freq * 2^j.
/// Integer base frequencies make the embedding 360-degree periodic. Throws
/// DomainError for odd `dim`.
Vector pose_embedding(double angle_deg, int dim, double base_freq);

/// Distance at which the bounding sphere of a cube with the given half extent
/// fits the field of view: margin * extent * sqrt(3) / tan(fov / 2).
double adaptive_distance(double bbox_half_extent, double fov_deg, double margin = 1.1);

struct Camera {
    CameraPose pose;
    double distance = 2.0;
    double fov_deg = kDefaultFovDeg;
    int width = 64;
    int height = 64;
};

struct CameraGeometry {
    Mat4 world_to_camera = Mat4::Identity();
    Mat3 intrinsics = Mat3::Identity();
    Vec3 center = Vec3::Zero();
    Mat3 rotation = Mat3::Identity(); // rows: right, down, forward in world coordinates
};

Vec3 camera_center(const CameraPose &pose, double distance);

/// Look-at construction towards the origin with world-up +z. At exactly +-90
/// degrees elevation the up vector falls back to the horizontal direction
/// pointing away from the azimuth, -(cos a, sin a, 0) * sign(e).
/// Throws DomainError for distance <= 0.
CameraGeometry camera_matrix(const Camera &camera);

/// Unit direction in world coordinates through the center of pixel (px, py).
Vec3 pixel_ray(const CameraGeometry &geom, double px, double py);

/// Frames start, start + 4, ... (mod 84) of an 84-frame orbit.
Orbit subsample_orbit(const Orbit &full, int start_index);

/// Text format: one `elevation azimuth` pair per line in degrees, %.9g.
void write_orbit(std::ostream &out, const Orbit &orbit);
Orbit read_orbit(std::istream &in);
void save_orbit(const std::string &path, const Orbit &orbit);
Orbit load_orbit(const std::string &path);

} // namespace orbitforge::orbit
