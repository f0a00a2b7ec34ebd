// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orbitforge/common.hpp"

#include <array>
#include <span>

namespace orbitforge::render {

enum class FieldKind { kDensity, kSdf };

/// Dense N^3 voxel grid over the unit cube [-0.5, 0.5]^3 centred at the
/// origin. Samples sit at voxel centres; lookups between centres are
/// trilinear and clamp to the edge values outside the outermost centres.
///
/// For `kDensity` the field is a non-negative density. For `kSdf` it is a
/// signed distance converted to density as alpha * sigmoid(-sdf / beta).
struct SceneGrid {
    int resolution = 0;
    FieldKind kind = FieldKind::kDensity;
    Vector field;  // N^3, x fastest
    Vector albedo; // 3 * N^3, interleaved rgb
    double sdf_alpha = 400.0;
    double sdf_beta = 0.01;

    static SceneGrid make(int resolution, FieldKind kind, double field_value, const Vec3 &albedo);

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(resolution) * static_cast<std::size_t>(resolution) *
               static_cast<std::size_t>(resolution);
    }
    double voxel_size() const { return 1.0 / static_cast<double>(resolution); }
    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * static_cast<std::size_t>(resolution) + static_cast<std::size_t>(j)) *
                   static_cast<std::size_t>(resolution) +
               static_cast<std::size_t>(i);
    }
    Vec3 voxel_center(int i, int j, int k) const;
    Vec3 albedo_at(std::size_t voxel) const {
        return Vec3(albedo[3 * voxel], albedo[3 * voxel + 1], albedo[3 * voxel + 2]);
    }

    /// Throws ContractError if buffer sizes do not match the resolution.
    void validate() const;
};

/// Eight voxel indices and weights for trilinear interpolation at a point.
struct Trilinear {
    std::array<std::size_t, 8> index{};
    std::array<double, 8> weight{};
};

Trilinear trilinear_stencil(int resolution, const Vec3 &p);

double interpolate(std::span<const double> values, const Trilinear &t);
Vec3 interpolate3(std::span<const double> values, const Trilinear &t);

/// alpha * sigmoid(-sdf / beta). Throws DomainError for beta <= 0.
double sdf_to_density(double sdf, double alpha, double beta);
/// d density / d sdf.
double sdf_to_density_derivative(double sdf, double alpha, double beta);

/// Per-voxel spatial gradient of a scalar field (3 * N^3, interleaved):
/// central differences inside, one-sided differences at the faces.
Vector field_gradient(int resolution, std::span<const double> field);

/// Adjoint of `field_gradient`: accumulates J^T * d_gradient into d_field.
void field_gradient_adjoint(int resolution, std::span<const double> d_gradient, std::span<double> d_field);

/// Trilinear resampling of a grid onto a new resolution (field and albedo).
SceneGrid resample(const SceneGrid &grid, int resolution);

} // namespace orbitforge::render
