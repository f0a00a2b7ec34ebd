// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

#include "orbitforge/grid.hpp"

#include <algorithm>
#include <cmath>

namespace orbitforge::render {

SceneGrid SceneGrid::make(int resolution, FieldKind kind, double field_value, const Vec3 &albedo) {
    if (resolution < 2) {
        throw DomainError("grid resolution must be at least 2");
    }
    SceneGrid g;
    g.resolution = resolution;
    g.kind = kind;
    g.field.assign(g.voxel_count(), field_value);
    g.albedo.resize(3 * g.voxel_count());
    for (std::size_t v = 0; v < g.voxel_count(); ++v) {
        g.albedo[3 * v] = albedo.x();
        g.albedo[3 * v + 1] = albedo.y();
        g.albedo[3 * v + 2] = albedo.z();
    }
    return g;
}

Vec3 SceneGrid::voxel_center(int i, int j, int k) const {
    const double h = voxel_size();
    return Vec3(-0.5 + (i + 0.5) * h, -0.5 + (j + 0.5) * h, -0.5 + (k + 0.5) * h);
}

void SceneGrid::validate() const {
    if (resolution < 2 || field.size() != voxel_count() || albedo.size() != 3 * voxel_count()) {
        throw ContractError("scene grid buffers do not match its resolution");
    }
}

Trilinear trilinear_stencil(int resolution, const Vec3 &p) {
    const double n = static_cast<double>(resolution);
    int base[3];
    double frac[3];
    for (int a = 0; a < 3; ++a) {
        // continuous voxel coordinate, centres at integers
        const double c = std::clamp((p[a] + 0.5) * n - 0.5, 0.0, n - 1.0);
        int i0 = static_cast<int>(std::floor(c));
        if (i0 >= resolution - 1) {
            i0 = resolution - 2;
        }
        base[a] = i0;
        frac[a] = c - i0;
    }
    Trilinear t;
    const auto r = static_cast<std::size_t>(resolution);
    int slot = 0;
    for (int dz = 0; dz < 2; ++dz) {
        for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
                const std::size_t i = static_cast<std::size_t>(base[0] + dx);
                const std::size_t j = static_cast<std::size_t>(base[1] + dy);
                const std::size_t k = static_cast<std::size_t>(base[2] + dz);
                t.index[slot] = (k * r + j) * r + i;
                t.weight[slot] = (dx ? frac[0] : 1.0 - frac[0]) * (dy ? frac[1] : 1.0 - frac[1]) *
                                 (dz ? frac[2] : 1.0 - frac[2]);
                ++slot;
            }
        }
    }
    return t;
}

double interpolate(std::span<const double> values, const Trilinear &t) {
    double v = 0.0;
    for (int s = 0; s < 8; ++s) {
        v += t.weight[s] * values[t.index[s]];
    }
    return v;
}

Vec3 interpolate3(std::span<const double> values, const Trilinear &t) {
    Vec3 v = Vec3::Zero();
    for (int s = 0; s < 8; ++s) {
        const std::size_t b = 3 * t.index[s];
        v += t.weight[s] * Vec3(values[b], values[b + 1], values[b + 2]);
    }
    return v;
}

double sdf_to_density(double sdf, double alpha, double beta) {
    if (!(beta > 0.0)) {
        throw DomainError("sdf_to_density requires beta > 0");
    }
    const double z = -sdf / beta;
    // numerically stable logistic
    if (z >= 0.0) {
        return alpha / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return alpha * e / (1.0 + e);
}

double sdf_to_density_derivative(double sdf, double alpha, double beta) {
    const double s = sdf_to_density(sdf, 1.0, beta);
    return -alpha * s * (1.0 - s) / beta;
}

namespace {

struct AxisStencil {
    std::size_t lo;
    std::size_t hi;
    double inv;
};

// Neighbour indices and scale for the derivative along one axis at coordinate c.
AxisStencil axis_stencil(int c, int n, std::size_t idx, std::size_t stride, double h) {
    if (c == 0) {
        return {idx, idx + stride, 1.0 / h};
    }
    if (c == n - 1) {
        return {idx - stride, idx, 1.0 / h};
    }
    return {idx - stride, idx + stride, 0.5 / h};
}

} // namespace

Vector field_gradient(int resolution, std::span<const double> field) {
    const int n = resolution;
    const auto r = static_cast<std::size_t>(n);
    const double h = 1.0 / static_cast<double>(n);
    Vector g(3 * field.size());
    const std::size_t strides[3] = {1, r, r * r};
    for (int k = 0; k < n; ++k) {
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                const std::size_t idx = (static_cast<std::size_t>(k) * r + static_cast<std::size_t>(j)) * r +
                                        static_cast<std::size_t>(i);
                const int coord[3] = {i, j, k};
                for (int a = 0; a < 3; ++a) {
                    const AxisStencil s = axis_stencil(coord[a], n, idx, strides[a], h);
                    g[3 * idx + static_cast<std::size_t>(a)] = (field[s.hi] - field[s.lo]) * s.inv;
                }
            }
        }
    }
    return g;
}

void field_gradient_adjoint(int resolution, std::span<const double> d_gradient, std::span<double> d_field) {
    const int n = resolution;
    const auto r = static_cast<std::size_t>(n);
    const double h = 1.0 / static_cast<double>(n);
    const std::size_t strides[3] = {1, r, r * r};
    for (int k = 0; k < n; ++k) {
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                const std::size_t idx = (static_cast<std::size_t>(k) * r + static_cast<std::size_t>(j)) * r +
                                        static_cast<std::size_t>(i);
                const int coord[3] = {i, j, k};
                for (int a = 0; a < 3; ++a) {
                    const double dg = d_gradient[3 * idx + static_cast<std::size_t>(a)];
                    if (dg == 0.0) {
                        continue;
                    }
                    const AxisStencil s = axis_stencil(coord[a], n, idx, strides[a], h);
                    d_field[s.hi] += dg * s.inv;
                    d_field[s.lo] -= dg * s.inv;
                }
            }
        }
    }
}

SceneGrid resample(const SceneGrid &grid, int resolution) {
    grid.validate();
    SceneGrid out = SceneGrid::make(resolution, grid.kind, 0.0, Vec3::Zero());
    out.sdf_alpha = grid.sdf_alpha;
    out.sdf_beta = grid.sdf_beta;
    for (int k = 0; k < resolution; ++k) {
        for (int j = 0; j < resolution; ++j) {
            for (int i = 0; i < resolution; ++i) {
                const std::size_t v = out.index(i, j, k);
                const Trilinear t = trilinear_stencil(grid.resolution, out.voxel_center(i, j, k));
                out.field[v] = interpolate(grid.field, t);
                const Vec3 a = interpolate3(grid.albedo, t);
                out.albedo[3 * v] = a.x();
                out.albedo[3 * v + 1] = a.y();
                out.albedo[3 * v + 2] = a.z();
            }
        }
    }
    return out;
}

} // namespace orbitforge::render
