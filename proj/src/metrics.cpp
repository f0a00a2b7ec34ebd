// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

#include "orbitforge/metrics.hpp"

#include "orbitforge/image.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace orbitforge::metrics {

double mse_metric(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ContractError("mse: image sizes differ");
    }
    if (a.empty()) {
        return 0.0;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    return s / static_cast<double>(a.size());
}

double psnr(std::span<const double> a, std::span<const double> b) {
    const double m = mse_metric(a, b);
    if (m == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return -10.0 * std::log10(m);
}

double ssim(std::span<const double> a, std::span<const double> b, int width, int height, int channels) {
    if (channels != 1 && channels != 3) {
        throw DomainError("ssim expects 1 or 3 channels");
    }
    const std::size_t np = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (a.size() != np * static_cast<std::size_t>(channels) || b.size() != a.size()) {
        throw ContractError("ssim: image sizes differ");
    }
    constexpr int kWin = 11;
    constexpr double kSigma = 1.5;
    if (width < kWin || height < kWin) {
        throw DomainError("ssim needs images of at least 11x11 pixels");
    }
    auto gray = [&](std::span<const double> img) {
        Vector g(np);
        for (std::size_t p = 0; p < np; ++p) {
            g[p] = channels == 3 ? image::luma(img[3 * p], img[3 * p + 1], img[3 * p + 2]) : img[p];
        }
        return g;
    };
    const Vector x = gray(a);
    const Vector y = gray(b);
    double w[kWin];
    double wsum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - kWin / 2;
        w[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        wsum += w[i];
    }
    for (double &v : w) {
        v /= wsum;
    }
    const double c1 = 0.01 * 0.01;
    const double c2 = 0.03 * 0.03;
    double total = 0.0;
    int windows = 0;
    for (int y0 = 0; y0 + kWin <= height; ++y0) {
        for (int x0 = 0; x0 + kWin <= width; ++x0) {
            double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
            for (int dy = 0; dy < kWin; ++dy) {
                for (int dx = 0; dx < kWin; ++dx) {
                    const double k = w[dy] * w[dx];
                    const std::size_t p = static_cast<std::size_t>(y0 + dy) * static_cast<std::size_t>(width) +
                                          static_cast<std::size_t>(x0 + dx);
                    mx += k * x[p];
                    my += k * y[p];
                    sxx += k * x[p] * x[p];
                    syy += k * y[p] * y[p];
                    sxy += k * x[p] * y[p];
                }
            }
            const double vx = sxx - mx * mx;
            const double vy = syy - my * my;
            const double cxy = sxy - mx * my;
            total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++windows;
        }
    }
    return total / windows;
}

std::vector<Vec3> sample_surface(const mesh::TriMesh &m, std::size_t n, Rng &rng) {
    if (m.empty()) {
        throw DomainError("cannot sample an empty mesh");
    }
    Vector cdf(m.triangles.size());
    double acc = 0.0;
    for (std::size_t t = 0; t < m.triangles.size(); ++t) {
        const auto &tri = m.triangles[t];
        const Vec3 &a = m.vertices[static_cast<std::size_t>(tri[0])];
        acc += 0.5 * (m.vertices[static_cast<std::size_t>(tri[1])] - a)
                         .cross(m.vertices[static_cast<std::size_t>(tri[2])] - a)
                         .norm();
        cdf[t] = acc;
    }
    if (!(acc > 0.0)) {
        throw DomainError("cannot sample a mesh with zero area");
    }
    std::vector<Vec3> pts;
    pts.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = uniform(rng, 0.0, acc);
        const std::size_t t = std::min<std::size_t>(
            static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin()), cdf.size() - 1);
        double r1 = uniform(rng, 0.0, 1.0);
        double r2 = uniform(rng, 0.0, 1.0);
        if (r1 + r2 > 1.0) {
            r1 = 1.0 - r1;
            r2 = 1.0 - r2;
        }
        const auto &tri = m.triangles[t];
        const Vec3 &a = m.vertices[static_cast<std::size_t>(tri[0])];
        pts.push_back(a + r1 * (m.vertices[static_cast<std::size_t>(tri[1])] - a) +
                      r2 * (m.vertices[static_cast<std::size_t>(tri[2])] - a));
    }
    return pts;
}

namespace {

// Uniform-grid nearest neighbour search over a fixed point set.
class PointGrid {
  public:
    explicit PointGrid(const std::vector<Vec3> &pts) : pts_(pts) {
        lo_ = hi_ = pts.front();
        for (const Vec3 &p : pts) {
            lo_ = lo_.cwiseMin(p);
            hi_ = hi_.cwiseMax(p);
        }
        const double extent = std::max((hi_ - lo_).maxCoeff(), 1e-12);
        n_ = std::clamp(static_cast<int>(std::cbrt(static_cast<double>(pts.size()))), 1, 128);
        cell_ = extent / n_ * (1.0 + 1e-9);
        cells_.resize(static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_));
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const auto c = cell_of(pts[i]);
            cells_[flat(c[0], c[1], c[2])].push_back(i);
        }
    }

    double nearest(const Vec3 &q) const {
        const auto c = cell_of(q);
        double best = std::numeric_limits<double>::infinity();
        for (int ring = 0; ring <= n_; ++ring) {
            for (int k = c[2] - ring; k <= c[2] + ring; ++k) {
                for (int j = c[1] - ring; j <= c[1] + ring; ++j) {
                    for (int i = c[0] - ring; i <= c[0] + ring; ++i) {
                        if (std::max({std::abs(i - c[0]), std::abs(j - c[1]), std::abs(k - c[2])}) != ring) {
                            continue;
                        }
                        if (i < 0 || j < 0 || k < 0 || i >= n_ || j >= n_ || k >= n_) {
                            continue;
                        }
                        for (std::size_t idx : cells_[flat(i, j, k)]) {
                            best = std::min(best, (pts_[idx] - q).squaredNorm());
                        }
                    }
                }
            }
            // Everything beyond this ring is at least `ring * cell_` away
            // from the query's cell.
            const double reach = ring * cell_;
            if (std::isfinite(best) && best <= reach * reach) {
                break;
            }
        }
        return std::sqrt(best);
    }

  private:
    std::array<int, 3> cell_of(const Vec3 &p) const {
        std::array<int, 3> c{};
        for (int a = 0; a < 3; ++a) {
            c[static_cast<std::size_t>(a)] =
                std::clamp(static_cast<int>(std::floor((p[a] - lo_[a]) / cell_)), 0, n_ - 1);
        }
        return c;
    }
    std::size_t flat(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(j)) *
                   static_cast<std::size_t>(n_) +
               static_cast<std::size_t>(i);
    }

    const std::vector<Vec3> &pts_;
    Vec3 lo_, hi_;
    int n_ = 1;
    double cell_ = 1.0;
    std::vector<std::vector<std::size_t>> cells_;
};

double mean_nearest(const std::vector<Vec3> &from, const std::vector<Vec3> &to) {
    const PointGrid grid(to);
    double s = 0.0;
    for (const Vec3 &p : from) {
        s += grid.nearest(p);
    }
    return s / static_cast<double>(from.size());
}

} // namespace

double chamfer_distance(const mesh::TriMesh &a, const mesh::TriMesh &b, std::size_t n_samples, std::uint64_t seed) {
    if (a.empty() || b.empty()) {
        throw DomainError("chamfer distance needs non-empty meshes");
    }
    if (n_samples < 1) {
        throw DomainError("chamfer distance needs at least one sample");
    }
    Rng ra(seed);
    Rng rb(seed);
    const std::vector<Vec3> pa = sample_surface(a, n_samples, ra);
    const std::vector<Vec3> pb = sample_surface(b, n_samples, rb);
    return 0.5 * (mean_nearest(pa, pb) + mean_nearest(pb, pa));
}

std::vector<unsigned char> voxelize(const mesh::TriMesh &m, int res, const Vec3 &lo, const Vec3 &hi) {
    if (res < 1) {
        throw DomainError("voxel resolution must be positive");
    }
    const std::size_t r = static_cast<std::size_t>(res);
    std::vector<unsigned char> occ(r * r * r, 0);
    const Vec3 step = (hi - lo) / static_cast<double>(res);
    // Ray offsets well below a voxel keep rays off mesh edges and vertices.
    const double oy = 1e-7 * std::sqrt(2.0) * step.y();
    const double oz = 1e-7 * std::sqrt(3.0) * step.z();
    std::vector<std::vector<double>> hits(r * r);
    for (const auto &t : m.triangles) {
        const Vec3 &a = m.vertices[static_cast<std::size_t>(t[0])];
        const Vec3 &b = m.vertices[static_cast<std::size_t>(t[1])];
        const Vec3 &c = m.vertices[static_cast<std::size_t>(t[2])];
        const double ymin = std::min({a.y(), b.y(), c.y()});
        const double ymax = std::max({a.y(), b.y(), c.y()});
        const double zmin = std::min({a.z(), b.z(), c.z()});
        const double zmax = std::max({a.z(), b.z(), c.z()});
        const int j0 = std::max(0, static_cast<int>(std::floor((ymin - lo.y()) / step.y() - 0.5)));
        const int j1 = std::min(res - 1, static_cast<int>(std::ceil((ymax - lo.y()) / step.y() - 0.5)));
        const int k0 = std::max(0, static_cast<int>(std::floor((zmin - lo.z()) / step.z() - 0.5)));
        const int k1 = std::min(res - 1, static_cast<int>(std::ceil((zmax - lo.z()) / step.z() - 0.5)));
        const double det = (b.y() - a.y()) * (c.z() - a.z()) - (c.y() - a.y()) * (b.z() - a.z());
        if (det == 0.0) {
            continue;
        }
        for (int k = k0; k <= k1; ++k) {
            for (int j = j0; j <= j1; ++j) {
                const double y = lo.y() + (j + 0.5) * step.y() + oy;
                const double z = lo.z() + (k + 0.5) * step.z() + oz;
                const double u = ((y - a.y()) * (c.z() - a.z()) - (c.y() - a.y()) * (z - a.z())) / det;
                const double v = ((b.y() - a.y()) * (z - a.z()) - (y - a.y()) * (b.z() - a.z())) / det;
                if (u < 0.0 || v < 0.0 || u + v > 1.0) {
                    continue;
                }
                hits[static_cast<std::size_t>(k) * r + static_cast<std::size_t>(j)].push_back(
                    a.x() + u * (b.x() - a.x()) + v * (c.x() - a.x()));
            }
        }
    }
    for (std::size_t row = 0; row < hits.size(); ++row) {
        std::vector<double> &h = hits[row];
        if (h.empty()) {
            continue;
        }
        std::sort(h.begin(), h.end());
        std::size_t next = 0;
        for (std::size_t i = 0; i < r; ++i) {
            const double x = lo.x() + (static_cast<double>(i) + 0.5) * step.x();
            while (next < h.size() && h[next] < x) {
                ++next;
            }
            occ[row * r + i] = next % 2 == 1;
        }
    }
    return occ;
}

double iou_3d(const mesh::TriMesh &a, const mesh::TriMesh &b, int voxel_res, std::string *warning) {
    if (voxel_res < 1) {
        throw DomainError("voxel resolution must be positive");
    }
    if (warning) {
        warning->clear();
        if (!a.is_watertight() || !b.is_watertight()) {
            *warning = "mesh is not watertight; parity fill is best effort";
        }
    }
    if (a.empty() && b.empty()) {
        return 1.0;
    }
    if (a.empty() || b.empty()) {
        return 0.0;
    }
    Vec3 lo = a.vertices.front();
    Vec3 hi = lo;
    for (const auto *m : {&a, &b}) {
        for (const Vec3 &v : m->vertices) {
            lo = lo.cwiseMin(v);
            hi = hi.cwiseMax(v);
        }
    }
    const std::vector<unsigned char> va = voxelize(a, voxel_res, lo, hi);
    const std::vector<unsigned char> vb = voxelize(b, voxel_res, lo, hi);
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t i = 0; i < va.size(); ++i) {
        inter += va[i] && vb[i];
        uni += va[i] || vb[i];
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double elo_expected(double r1, double r2) { return 1.0 / (1.0 + std::pow(10.0, (r2 - r1) / 400.0)); }

void elo_update(EloLeague &league, const MatchRecord &match) {
    if (match.player_a == match.player_b) {
        throw DomainError("a match needs two distinct players");
    }
    if (match.outcome != 0 && match.outcome != 1) {
        throw DomainError("match outcome must be 0 or 1");
    }
    double &ra = league.ratings.try_emplace(match.player_a, league.r_init).first->second;
    double &rb = league.ratings.try_emplace(match.player_b, league.r_init).first->second;
    const double ea = elo_expected(ra, rb);
    // The second player's change is the exact negative of the first's, so
    // the rating sum is preserved up to the rounding of each addition.
    const double delta = league.k * (static_cast<double>(match.outcome) - ea);
    ra += delta;
    rb -= delta;
}

std::map<std::string, double> elo_bootstrap_ranking(std::span<const MatchRecord> matches, int n_shuffles, Rng &rng,
                                                    double k, double r_init) {
    if (matches.empty()) {
        throw DomainError("elo ranking needs at least one match");
    }
    if (n_shuffles < 1) {
        throw DomainError("elo ranking needs at least one shuffle");
    }
    std::vector<std::size_t> order(matches.size());
    std::map<std::string, double> sum;
    for (int s = 0; s < n_shuffles; ++s) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        EloLeague league;
        league.k = k;
        league.r_init = r_init;
        for (std::size_t i : order) {
            elo_update(league, matches[i]);
        }
        for (const auto &[id, r] : league.ratings) {
            sum[id] += r;
        }
    }
    for (auto &[id, r] : sum) {
        r /= n_shuffles;
    }
    return sum;
}

void write_metrics_csv(std::ostream &out, std::span<const MetricRow> rows) {
    out << "metric,view_or_pair,value\n";
    out.precision(17);
    for (const MetricRow &r : rows) {
        out << r.metric << ',' << r.key << ',' << r.value << '\n';
    }
}

void write_elo_csv(std::ostream &out, const std::map<std::string, double> &ratings) {
    out << "player,mean_rating\n";
    out.precision(17);
    for (const auto &[id, r] : ratings) {
        out << id << ',' << r << '\n';
    }
}

} // namespace orbitforge::metrics
