// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

#include "orbitforge/mesh.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace orbitforge::mesh {

double TriMesh::area() const {
    double a = 0.0;
    for (const auto &t : triangles) {
        a += 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
    }
    return a;
}

double TriMesh::signed_volume() const {
    double v = 0.0;
    for (const auto &t : triangles) {
        v += vertices[t[0]].dot(vertices[t[1]].cross(vertices[t[2]]));
    }
    return v / 6.0;
}

bool TriMesh::is_watertight() const {
    std::map<std::pair<int, int>, int> directed;
    for (const auto &t : triangles) {
        for (int e = 0; e < 3; ++e) {
            ++directed[{t[e], t[(e + 1) % 3]}];
        }
    }
    for (const auto &[edge, count] : directed) {
        if (count != 1) {
            return false;
        }
        const auto it = directed.find({edge.second, edge.first});
        if (it == directed.end() || it->second != 1) {
            return false;
        }
    }
    return true;
}

void TriMesh::validate() const {
    const int nv = static_cast<int>(vertices.size());
    for (const auto &t : triangles) {
        for (int i : t) {
            if (i < 0 || i >= nv) {
                throw ContractError("triangle index out of range");
            }
        }
    }
}

namespace {

// Cell corners in the usual order: 0 (0,0,0) 1 (1,0,0) 2 (1,1,0) 3 (0,1,0), then the same at z = 1.
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdge[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                              {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};
// Each face as a corner cycle, counter-clockwise seen from outside the cell;
// kFaceEdge[f][i] joins corners i and i+1 of the cycle.
constexpr int kFace[6][4] = {{0, 3, 2, 1}, {4, 5, 6, 7}, {0, 1, 5, 4},
                             {1, 2, 6, 5}, {2, 3, 7, 6}, {3, 0, 4, 7}};
constexpr int kFaceEdge[6][4] = {{3, 2, 1, 0}, {4, 5, 6, 7}, {0, 9, 4, 8},
                                 {1, 10, 5, 9}, {2, 11, 6, 10}, {3, 8, 7, 11}};

struct Lattice {
    int n;
    std::span<const double> values;
    std::size_t at(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)) *
                   static_cast<std::size_t>(n) +
               static_cast<std::size_t>(i);
    }
};

class Extractor {
  public:
    Extractor(const Lattice &lat, double iso, const Vec3 &origin, double spacing)
        : lat_(lat), iso_(iso), origin_(origin), spacing_(spacing),
          edge_vertex_(3 * static_cast<std::size_t>(lat.n) * static_cast<std::size_t>(lat.n) *
                           static_cast<std::size_t>(lat.n),
                       -1) {}

    TriMesh run() {
        const int n = lat_.n;
        for (int k = 0; k + 1 < n; ++k) {
            for (int j = 0; j + 1 < n; ++j) {
                for (int i = 0; i + 1 < n; ++i) {
                    cell(i, j, k);
                }
            }
        }
        return std::move(mesh_);
    }

  private:
    void cell(int i, int j, int k) {
        double g[8];
        bool below[8];
        int n_below = 0;
        for (int c = 0; c < 8; ++c) {
            g[c] = lat_.values[lat_.at(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2])] - iso_;
            below[c] = g[c] < 0.0;
            n_below += below[c] ? 1 : 0;
        }
        if (n_below == 0 || n_below == 8) {
            return;
        }

        // Directed segments on each face. Walking a face counter-clockwise
        // from outside, each segment runs from the edge where the field drops
        // below the iso level to the edge where it rises again; adjacent cells
        // see the shared face reversed, so shared segments get opposite
        // directions and the surface orientation is consistent.
        int next[12];
        std::fill(std::begin(next), std::end(next), -1);
        auto cut_corner = [&](const int *cyc, const int *fe, int c) {
            const int in = fe[(c + 3) % 4];
            const int out = fe[c];
            if (below[cyc[c]]) {
                next[in] = out;
            } else {
                next[out] = in;
            }
        };
        for (int f = 0; f < 6; ++f) {
            const int *cyc = kFace[f];
            const int *fe = kFaceEdge[f];
            int nc = 0;
            int enter = -1;
            int leave = -1;
            for (int s = 0; s < 4; ++s) {
                const bool b0 = below[cyc[s]];
                const bool b1 = below[cyc[(s + 1) % 4]];
                if (b0 != b1) {
                    ++nc;
                    (b1 ? enter : leave) = fe[s];
                }
            }
            if (nc == 2) {
                next[enter] = leave;
            } else if (nc == 4) {
                const double g0 = g[cyc[0]], g1 = g[cyc[1]], g2 = g[cyc[2]], g3 = g[cyc[3]];
                const double saddle = (g0 * g2 - g1 * g3) / (g0 + g2 - g1 - g3);
                if ((saddle < 0.0) == below[cyc[0]]) {
                    // corners 0 and 2 connect through the face centre; cut off 1 and 3
                    cut_corner(cyc, fe, 1);
                    cut_corner(cyc, fe, 3);
                } else {
                    cut_corner(cyc, fe, 0);
                    cut_corner(cyc, fe, 2);
                }
            }
        }

        bool used[12] = {};
        std::vector<int> loop;
        for (int start = 0; start < 12; ++start) {
            if (next[start] < 0 || used[start]) {
                continue;
            }
            loop.clear();
            for (int cur = start; !used[cur]; cur = next[cur]) {
                used[cur] = true;
                loop.push_back(cur);
            }
            emit_loop(i, j, k, loop, g);
        }
    }

    void emit_loop(int i, int j, int k, const std::vector<int> &loop, const double *g) {
        std::vector<int> ids;
        ids.reserve(loop.size());
        for (int e : loop) {
            ids.push_back(vertex(i, j, k, e, g));
        }
        // A fan diagonal between two vertices on the same cell face would lie
        // in that face, where the neighbouring cell may place the same
        // diagonal. Such loops are fanned around an added centroid instead.
        bool face_diagonal = false;
        const std::size_t m = loop.size();
        for (std::size_t a = 0; a < m && !face_diagonal; ++a) {
            for (std::size_t b = a + 2; b < m; ++b) {
                if ((a == 0 && b == m - 1) || !(face_mask(loop[a]) & face_mask(loop[b]))) {
                    continue;
                }
                face_diagonal = true;
                break;
            }
        }
        if (face_diagonal) {
            Vec3 c = Vec3::Zero();
            for (int id : ids) {
                c += mesh_.vertices[static_cast<std::size_t>(id)];
            }
            const int centre = static_cast<int>(mesh_.vertices.size());
            mesh_.vertices.push_back(c / static_cast<double>(m));
            for (std::size_t a = 0; a < m; ++a) {
                add_triangle({centre, ids[a], ids[(a + 1) % m]});
            }
            return;
        }
        for (std::size_t a = 1; a + 1 < m; ++a) {
            add_triangle({ids[0], ids[a], ids[a + 1]});
        }
    }

    static unsigned face_mask(int edge) {
        unsigned mask = 0;
        for (int f = 0; f < 6; ++f) {
            for (int s = 0; s < 4; ++s) {
                if (kFaceEdge[f][s] == edge) {
                    mask |= 1u << f;
                }
            }
        }
        return mask;
    }

    void add_triangle(const std::array<int, 3> &t) {
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
            return;
        }
        const Vec3 &p0 = mesh_.vertices[static_cast<std::size_t>(t[0])];
        const Vec3 &p1 = mesh_.vertices[static_cast<std::size_t>(t[1])];
        const Vec3 &p2 = mesh_.vertices[static_cast<std::size_t>(t[2])];
        if (0.5 * (p1 - p0).cross(p2 - p0).norm() <= 1e-14 * spacing_ * spacing_) {
            return;
        }
        mesh_.triangles.push_back(t);
    }

    int vertex(int i, int j, int k, int edge, const double *g) {
        const int c0 = kEdge[edge][0];
        const int c1 = kEdge[edge][1];
        const int i0 = i + kCorner[c0][0], j0 = j + kCorner[c0][1], k0 = k + kCorner[c0][2];
        const int i1 = i + kCorner[c1][0], j1 = j + kCorner[c1][1], k1 = k + kCorner[c1][2];
        const int axis = i0 != i1 ? 0 : (j0 != j1 ? 1 : 2);
        // key on the lower lattice point of the edge
        const bool forward = (axis == 0 ? i1 > i0 : (axis == 1 ? j1 > j0 : k1 > k0));
        const std::size_t key =
            3 * (forward ? lat_.at(i0, j0, k0) : lat_.at(i1, j1, k1)) + static_cast<std::size_t>(axis);
        int &slot = edge_vertex_[key];
        if (slot >= 0) {
            return slot;
        }
        const double ga = forward ? g[c0] : g[c1];
        const double gb = forward ? g[c1] : g[c0];
        const Vec3 pa = origin_ + spacing_ * Vec3(forward ? i0 : i1, forward ? j0 : j1, forward ? k0 : k1);
        const double t = ga / (ga - gb);
        Vec3 p = pa;
        p[axis] += t * spacing_;
        slot = static_cast<int>(mesh_.vertices.size());
        mesh_.vertices.push_back(p);
        return slot;
    }

    Lattice lat_;
    double iso_;
    Vec3 origin_;
    double spacing_;
    std::vector<int> edge_vertex_;
    TriMesh mesh_;
};

} // namespace

TriMesh marching_cubes(int n, std::span<const double> values, double iso, const Vec3 &origin, double spacing,
                       bool close_boundary) {
    if (n < 2) {
        throw DomainError("marching cubes needs a lattice of at least 2^3");
    }
    const std::size_t count = static_cast<std::size_t>(n) * static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
    if (values.size() != count) {
        throw ContractError("marching cubes value count does not match n^3");
    }
    if (!close_boundary) {
        return Extractor(Lattice{n, values}, iso, origin, spacing).run();
    }
    const int m = n + 2;
    const double top = *std::max_element(values.begin(), values.end());
    const double pad = std::max(top, iso) + spacing;
    Vector padded(static_cast<std::size_t>(m) * static_cast<std::size_t>(m) * static_cast<std::size_t>(m), pad);
    const Lattice src{n, values};
    const Lattice dst{m, padded};
    for (int k = 0; k < n; ++k) {
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                padded[dst.at(i + 1, j + 1, k + 1)] = values[src.at(i, j, k)];
            }
        }
    }
    return Extractor(dst, iso, origin - Vec3::Constant(spacing), spacing).run();
}

TriMesh extract_surface(const render::SceneGrid &grid, double iso, bool close_boundary) {
    grid.validate();
    const double h = grid.voxel_size();
    const Vec3 origin = Vec3::Constant(-0.5 + 0.5 * h);
    if (grid.kind == render::FieldKind::kSdf) {
        return marching_cubes(grid.resolution, grid.field, iso, origin, h, close_boundary);
    }
    Vector negated(grid.field.size());
    std::transform(grid.field.begin(), grid.field.end(), negated.begin(), [](double v) { return -v; });
    return marching_cubes(grid.resolution, negated, -iso, origin, h, close_boundary);
}

void write_obj(std::ostream &out, const TriMesh &mesh) {
    char line[128];
    for (const Vec3 &v : mesh.vertices) {
        std::snprintf(line, sizeof(line), "v %.9g %.9g %.9g\n", v.x(), v.y(), v.z());
        out << line;
    }
    for (const auto &t : mesh.triangles) {
        std::snprintf(line, sizeof(line), "f %d %d %d\n", t[0] + 1, t[1] + 1, t[2] + 1);
        out << line;
    }
}

TriMesh read_obj(std::istream &in) {
    TriMesh mesh;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag) || tag[0] == '#') {
            continue;
        }
        if (tag == "v") {
            Vec3 v;
            if (!(ss >> v.x() >> v.y() >> v.z())) {
                throw IoError("malformed vertex on OBJ line " + std::to_string(lineno));
            }
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string tok;
            while (ss >> tok) {
                const int v = std::stoi(tok.substr(0, tok.find('/')));
                idx.push_back(v < 0 ? static_cast<int>(mesh.vertices.size()) + v : v - 1);
            }
            if (idx.size() < 3) {
                throw IoError("face with fewer than 3 vertices on OBJ line " + std::to_string(lineno));
            }
            for (std::size_t a = 1; a + 1 < idx.size(); ++a) {
                mesh.triangles.push_back({idx[0], idx[a], idx[a + 1]});
            }
        }
    }
    try {
        mesh.validate();
    } catch (const ContractError &) {
        throw IoError("OBJ face references a missing vertex");
    }
    return mesh;
}

void save_obj(const std::string &path, const TriMesh &mesh) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot write mesh file " + path);
    }
    write_obj(f, mesh);
    if (!f) {
        throw IoError("failed writing mesh file " + path);
    }
}

TriMesh load_obj(const std::string &path) {
    std::ifstream f(path);
    if (!f) {
        throw IoError("cannot read mesh file " + path);
    }
    try {
        return read_obj(f);
    } catch (const IoError &e) {
        throw IoError(path + ": " + e.what());
    } catch (const std::exception &e) {
        throw IoError(path + ": malformed OBJ (" + e.what() + ")");
    }
}

} // namespace orbitforge::mesh
