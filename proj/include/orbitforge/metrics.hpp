// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orbitforge/common.hpp"
#include "orbitforge/mesh.hpp"

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace orbitforge::metrics {

double mse_metric(std::span<const double> a, std::span<const double> b);

/// 10 log10(1 / MSE) for images in [0, 1]; +inf for identical images.
double psnr(std::span<const double> a, std::span<const double> b);

/// Mean SSIM over all valid 11x11 windows (Gaussian, sigma 1.5) of the
/// Rec. 601 luma. `channels` is 1 or 3. Throws DomainError if the image is
/// smaller than the window and ContractError on size mismatch.
double ssim(std::span<const double> a, std::span<const double> b, int width, int height, int channels);

/// Area-weighted uniform surface samples, deterministic for a given rng state.
std::vector<Vec3> sample_surface(const mesh::TriMesh &m, std::size_t n, Rng &rng);

/// Symmetric Chamfer distance: mean nearest-sample distance a->b plus b->a,
/// halved. Each mesh is sampled with a fresh generator seeded by `seed`.
/// Throws DomainError for empty meshes or n_samples < 1.
double chamfer_distance(const mesh::TriMesh &a, const mesh::TriMesh &b, std::size_t n_samples,
                        std::uint64_t seed = 0);

/// Occupancy of a res^3 lattice over [lo, hi] by parity counting along +x
/// rays through voxel centers. Open meshes get a best-effort fill.
std::vector<unsigned char> voxelize(const mesh::TriMesh &m, int res, const Vec3 &lo, const Vec3 &hi);

/// Volume IoU of two meshes voxelized over their union bounding box.
/// Writes a warning to `warning` (when non-null) if a mesh is not watertight.
double iou_3d(const mesh::TriMesh &a, const mesh::TriMesh &b, int voxel_res, std::string *warning = nullptr);

struct MatchRecord {
    std::string player_a;
    std::string player_b;
    int outcome = 1; // 1 = a wins, 0 = b wins
};

struct EloLeague {
    std::map<std::string, double> ratings;
    double k = 1.0;
    double r_init = 1000.0;
};

/// Expected score of a rating r1 against r2.
double elo_expected(double r1, double r2);

/// Zero-sum update; unknown players are registered at r_init. Throws
/// DomainError for identical ids or an outcome other than 0 or 1.
void elo_update(EloLeague &league, const MatchRecord &match);

/// Mean final rating over n_shuffles replays of the matches in shuffled order,
/// each from fresh initial ratings.
std::map<std::string, double> elo_bootstrap_ranking(std::span<const MatchRecord> matches, int n_shuffles, Rng &rng,
                                                    double k = 1.0, double r_init = 1000.0);

struct MetricRow {
    std::string metric;
    std::string key;
    double value = 0.0;
};

/// CSV `metric,view_or_pair,value`.
void write_metrics_csv(std::ostream &out, std::span<const MetricRow> rows);
/// CSV `player,mean_rating`.
void write_elo_csv(std::ostream &out, const std::map<std::string, double> &ratings);

} // namespace orbitforge::metrics
