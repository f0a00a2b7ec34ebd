// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orbitforge/common.hpp"
#include "orbitforge/grid.hpp"

#include <array>
#include <iosfwd>
#include <span>

namespace orbitforge::mesh {

struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;

    bool empty() const { return triangles.empty(); }
    double area() const;
    /// Signed volume via the divergence theorem; positive for outward-facing closed meshes.
    double signed_volume() const;
    /// Every directed edge is matched by exactly one opposite edge.
    bool is_watertight() const;
    /// Throws ContractError on out-of-range indices.
    void validate() const;
};

/// Iso-surface of a scalar field sampled on an n^3 lattice at
/// origin + spacing * (i, j, k), x fastest. Triangles face towards increasing
/// field values. Vertices on shared lattice edges are welded. Faces with two
/// crossings per side pair are resolved with the asymptotic decider, so
/// adjacent cells always agree and the result is watertight away from the
/// lattice boundary. With `close_boundary`, the lattice is padded with one
/// layer above the iso level so that surfaces cut by the boundary are capped.
TriMesh marching_cubes(int n, std::span<const double> values, double iso, const Vec3 &origin, double spacing,
                       bool close_boundary = false);

/// Extracts the surface of a scene grid with outward normals: the iso level
/// of the signed distance for sdf grids, the density level set for density
/// grids (with the field negated so that normals point out of dense regions).
TriMesh extract_surface(const render::SceneGrid &grid, double iso, bool close_boundary = false);

/// ASCII OBJ with `v` and `f` records only.
void write_obj(std::ostream &out, const TriMesh &mesh);
TriMesh read_obj(std::istream &in);
void save_obj(const std::string &path, const TriMesh &mesh);
TriMesh load_obj(const std::string &path);

} // namespace orbitforge::mesh
