// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

#include "orbitforge/orbit.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace orbitforge::orbit {

CameraPose CameraPose::normalized(double elevation_deg, double azimuth_deg) {
    CameraPose p;
    p.elevation_deg = std::clamp(elevation_deg, -90.0, 90.0);
    double a = std::fmod(azimuth_deg, 360.0);
    if (a < 0.0) {
        a += 360.0;
    }
    if (a >= 360.0) {
        a = 0.0;
    }
    p.azimuth_deg = a;
    return p;
}

Orbit static_orbit(int k, double elevation_deg, double start_azimuth_deg) {
    if (k < 2) {
        throw DomainError("orbit needs at least 2 frames");
    }
    if (std::abs(elevation_deg) > kMaxElevationDeg) {
        throw DomainError("static orbit elevation must be within +-89 degrees");
    }
    Orbit o;
    const double step = 360.0 / static_cast<double>(k);
    for (int i = 0; i < k; ++i) {
        o.poses.push_back(CameraPose::normalized(elevation_deg, start_azimuth_deg + step * i));
    }
    return o;
}

double DynamicOrbitPlan::raw_elevation_offset(int i) const {
    double s = 0.0;
    for (const Sinusoid &w : sinusoids) {
        s += w.amplitude_deg *
             std::sin(2.0 * kPi * static_cast<double>(w.period) * static_cast<double>(i) / static_cast<double>(k) +
                      w.phase_rad);
    }
    return s;
}

double DynamicOrbitPlan::smoothed_elevation_offset(int i) const {
    // The raw offset is K-periodic, so evaluating neighbours directly is the
    // same as a circular convolution.
    double s = 0.0;
    for (int j = -smoothing_half_width; j <= smoothing_half_width; ++j) {
        s += raw_elevation_offset(i + j);
    }
    return s / static_cast<double>(2 * smoothing_half_width + 1);
}

double DynamicOrbitPlan::elevation(int i) const {
    const double e = cond.elevation_deg + smoothed_elevation_offset(i) - smoothed_elevation_offset(0);
    return std::clamp(e, -max_elevation_deg, max_elevation_deg);
}

double DynamicOrbitPlan::azimuth(int i) const {
    const int wrapped = ((i % k) + k) % k;
    const double step = 360.0 / static_cast<double>(k);
    return cond.azimuth_deg + step * static_cast<double>(i) + azimuth_noise_deg[static_cast<std::size_t>(wrapped)];
}

Orbit DynamicOrbitPlan::realize() const {
    Orbit o;
    for (int i = 0; i < k; ++i) {
        o.poses.push_back(CameraPose::normalized(elevation(i), azimuth(i)));
    }
    o.poses[0] = cond;
    return o;
}

DynamicOrbitPlan plan_dynamic_orbit(Rng &rng, int k, CameraPose cond, const DynamicOrbitParams &params) {
    if (k < 2) {
        throw DomainError("orbit needs at least 2 frames");
    }
    if (params.n_sinusoids < 1 || params.period_min < 1 || params.period_max < params.period_min ||
        params.amplitude_min_deg < 0.0 || params.amplitude_max_deg < params.amplitude_min_deg ||
        params.smoothing_half_width < 0) {
        throw DomainError("invalid dynamic orbit parameters");
    }
    DynamicOrbitPlan plan;
    plan.k = k;
    plan.cond = CameraPose::normalized(std::clamp(cond.elevation_deg, -params.max_elevation_deg, params.max_elevation_deg),
                                       cond.azimuth_deg);
    plan.smoothing_half_width = params.smoothing_half_width;
    plan.max_elevation_deg = params.max_elevation_deg;
    std::uniform_int_distribution<int> period(params.period_min, params.period_max);
    for (int s = 0; s < params.n_sinusoids; ++s) {
        DynamicOrbitPlan::Sinusoid w;
        w.period = period(rng);
        w.amplitude_deg = uniform(rng, params.amplitude_min_deg, params.amplitude_max_deg);
        w.phase_rad = uniform(rng, 0.0, 2.0 * kPi);
        plan.sinusoids.push_back(w);
    }
    // Noise is clamped to under half a step so consecutive azimuths stay ordered
    // after re-centring on frame 0.
    const double step = 360.0 / static_cast<double>(k);
    const double limit = 0.45 * step;
    plan.azimuth_noise_deg.resize(static_cast<std::size_t>(k));
    for (double &n : plan.azimuth_noise_deg) {
        n = std::clamp(params.azimuth_noise_std_deg * standard_normal(rng), -limit, limit);
    }
    const double first = plan.azimuth_noise_deg[0];
    for (double &n : plan.azimuth_noise_deg) {
        n -= first;
    }
    return plan;
}

Orbit dynamic_orbit(Rng &rng, int k, CameraPose cond, const DynamicOrbitParams &params) {
    return plan_dynamic_orbit(rng, k, cond, params).realize();
}

Orbit sine_elevation_orbit(int k, CameraPose cond, double amplitude_deg) {
    if (k < 2) {
        throw DomainError("orbit needs at least 2 frames");
    }
    if (std::abs(cond.elevation_deg) + std::abs(amplitude_deg) > kMaxElevationDeg) {
        throw DomainError("sine orbit exceeds the 89 degree elevation limit");
    }
    Orbit o;
    const double step = 360.0 / static_cast<double>(k);
    for (int i = 0; i < k; ++i) {
        const double e =
            cond.elevation_deg + amplitude_deg * std::sin(2.0 * kPi * static_cast<double>(i) / static_cast<double>(k));
        o.poses.push_back(CameraPose::normalized(e, cond.azimuth_deg + step * i));
    }
    o.poses[0] = CameraPose::normalized(cond.elevation_deg, cond.azimuth_deg);
    return o;
}

Vector circular_box_smooth(std::span<const double> values, int half_width) {
    const int n = static_cast<int>(values.size());
    Vector out(values.size(), 0.0);
    if (n == 0) {
        return out;
    }
    const double norm = 1.0 / static_cast<double>(2 * half_width + 1);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = -half_width; j <= half_width; ++j) {
            s += values[static_cast<std::size_t>(((i + j) % n + n) % n)];
        }
        out[static_cast<std::size_t>(i)] = s * norm;
    }
    return out;
}

Vector pose_embedding(double angle_deg, int dim, double base_freq) {
    if (dim <= 0 || dim % 2 != 0) {
        throw DomainError("pose embedding dimension must be positive and even");
    }
    const double theta = deg_to_rad(angle_deg);
    Vector e(static_cast<std::size_t>(dim));
    double freq = base_freq;
    for (int j = 0; j < dim / 2; ++j) {
        e[static_cast<std::size_t>(2 * j)] = std::sin(freq * theta);
        e[static_cast<std::size_t>(2 * j + 1)] = std::cos(freq * theta);
        freq *= 2.0;
    }
    return e;
}

double adaptive_distance(double bbox_half_extent, double fov_deg, double margin) {
    if (!(bbox_half_extent > 0.0) || !(fov_deg > 0.0 && fov_deg < 180.0)) {
        throw DomainError("adaptive distance needs extent > 0 and 0 < fov < 180");
    }
    return margin * bbox_half_extent * std::sqrt(3.0) / std::tan(deg_to_rad(fov_deg) / 2.0);
}

Vec3 camera_center(const CameraPose &pose, double distance) {
    const double e = deg_to_rad(pose.elevation_deg);
    const double a = deg_to_rad(pose.azimuth_deg);
    return distance * Vec3(std::cos(e) * std::cos(a), std::cos(e) * std::sin(a), std::sin(e));
}

CameraGeometry camera_matrix(const Camera &camera) {
    if (!(camera.distance > 0.0)) {
        throw DomainError("camera distance must be positive");
    }
    const CameraPose pose = CameraPose::normalized(camera.pose.elevation_deg, camera.pose.azimuth_deg);
    CameraGeometry g;
    g.center = camera_center(pose, camera.distance);
    const Vec3 forward = (-g.center).normalized();
    Vec3 up(0.0, 0.0, 1.0);
    if (std::abs(pose.elevation_deg) >= 90.0) {
        const double a = deg_to_rad(pose.azimuth_deg);
        const double sign = pose.elevation_deg > 0.0 ? 1.0 : -1.0;
        up = -sign * Vec3(std::cos(a), std::sin(a), 0.0);
    }
    const Vec3 right = forward.cross(up).normalized();
    const Vec3 down = forward.cross(right);
    g.rotation.row(0) = right.transpose();
    g.rotation.row(1) = down.transpose();
    g.rotation.row(2) = forward.transpose();
    g.world_to_camera.setIdentity();
    g.world_to_camera.block<3, 3>(0, 0) = g.rotation;
    g.world_to_camera.block<3, 1>(0, 3) = -g.rotation * g.center;
    const double focal = 0.5 * static_cast<double>(camera.width) / std::tan(deg_to_rad(camera.fov_deg) / 2.0);
    g.intrinsics << focal, 0.0, 0.5 * camera.width, 0.0, focal, 0.5 * camera.height, 0.0, 0.0, 1.0;
    return g;
}

Vec3 pixel_ray(const CameraGeometry &geom, double px, double py) {
    const double fx = geom.intrinsics(0, 0);
    const double fy = geom.intrinsics(1, 1);
    const Vec3 cam((px + 0.5 - geom.intrinsics(0, 2)) / fx, (py + 0.5 - geom.intrinsics(1, 2)) / fy, 1.0);
    return (geom.rotation.transpose() * cam).normalized();
}

Orbit subsample_orbit(const Orbit &full, int start_index) {
    if (full.size() != 84) {
        throw DomainError("subsample_orbit expects an 84-frame orbit, got " + std::to_string(full.size()));
    }
    if (start_index < 0 || start_index >= 84) {
        throw DomainError("subsample start index out of range");
    }
    Orbit o;
    for (int i = 0; i < 21; ++i) {
        o.poses.push_back(full.poses[static_cast<std::size_t>((start_index + 4 * i) % 84)]);
    }
    return o;
}

void write_orbit(std::ostream &out, const Orbit &orbit) {
    char line[96];
    for (const CameraPose &p : orbit.poses) {
        std::snprintf(line, sizeof(line), "%.9g %.9g\n", p.elevation_deg, p.azimuth_deg);
        out << line;
    }
}

Orbit read_orbit(std::istream &in) {
    Orbit o;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        std::istringstream ss(line);
        CameraPose p;
        if (!(ss >> p.elevation_deg >> p.azimuth_deg)) {
            throw IoError("orbit line " + std::to_string(lineno) + " is not an `elevation azimuth` pair");
        }
        o.poses.push_back(p);
    }
    return o;
}

void save_orbit(const std::string &path, const Orbit &orbit) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot write orbit file " + path);
    }
    write_orbit(f, orbit);
    if (!f) {
        throw IoError("failed writing orbit file " + path);
    }
}

Orbit load_orbit(const std::string &path) {
    std::ifstream f(path);
    if (!f) {
        throw IoError("cannot read orbit file " + path);
    }
    try {
        return read_orbit(f);
    } catch (const IoError &e) {
        throw IoError(path + ": " + e.what());
    }
}

} // namespace orbitforge::orbit
