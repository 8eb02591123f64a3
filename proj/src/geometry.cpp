#include "hscat/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <utility>

#include "hscat/parallel.hpp"

namespace hscat::geometry {

namespace {

double triangle_area2(Vec3 a, Vec3 b, Vec3 c) { return length(cross(b - a, c - a)); }

int resolve_index(long raw, std::size_t count, int line) {
    if (raw == 0) throw ParseError("OBJ face index 0 is invalid (indices are 1-based)", line);
    const long idx = raw > 0 ? raw - 1 : long(count) + raw;
    if (idx < 0 || idx >= long(count)) throw ParseError("OBJ face index out of range", line);
    return int(idx);
}

}  // namespace

void TriMesh::validate() const {
    if (vertices.empty() || triangles.empty()) throw ConfigError("mesh is empty");
    for (const auto& t : triangles)
        for (int v : t)
            if (v < 0 || v >= int(vertices.size())) throw ConfigError("triangle index out of range");
}

TriMesh parse_obj(const std::string& text) {
    TriMesh mesh;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            Vec3 p;
            if (!(ls >> p.x >> p.y >> p.z)) throw ParseError("malformed vertex record", line_no);
            if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
                throw ParseError("non-finite vertex", line_no);
            mesh.vertices.push_back(p);
        } else if (tag == "f") {
            std::vector<int> poly;
            std::string tok;
            while (ls >> tok) {
                const std::string head = tok.substr(0, tok.find('/'));
                long raw = 0;
                try {
                    std::size_t used = 0;
                    raw = std::stol(head, &used);
                    if (used != head.size()) throw std::invalid_argument(head);
                } catch (const std::exception&) {
                    throw ParseError("malformed face index '" + tok + "'", line_no);
                }
                poly.push_back(resolve_index(raw, mesh.vertices.size(), line_no));
            }
            if (poly.size() < 3) throw ParseError("face with fewer than 3 vertices", line_no);
            for (std::size_t n = 1; n + 1 < poly.size(); ++n) {
                const std::array<int, 3> t{poly[0], poly[n], poly[n + 1]};
                if (triangle_area2(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]) > 0.0)
                    mesh.triangles.push_back(t);
            }
        }
    }
    if (mesh.vertices.empty() || mesh.triangles.empty()) throw ParseError("OBJ contains no triangles", 0);
    mesh.watertight = is_watertight(mesh);
    return mesh;
}

TriMesh load_mesh(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open mesh " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_obj(ss.str());
}

std::string to_obj(const TriMesh& mesh) {
    std::ostringstream out;
    out.precision(17);
    for (const auto& v : mesh.vertices) out << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
    for (const auto& t : mesh.triangles)
        out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
    return out.str();
}

void save_obj(const TriMesh& mesh, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write mesh " + path.string());
    f << to_obj(mesh);
}

bool is_watertight(const TriMesh& mesh) {
    std::map<std::pair<int, int>, int> directed;
    for (const auto& t : mesh.triangles)
        for (int e = 0; e < 3; ++e) ++directed[{t[e], t[(e + 1) % 3]}];
    for (const auto& [edge, count] : directed) {
        if (count != 1) return false;
        auto twin = directed.find({edge.second, edge.first});
        if (twin == directed.end() || twin->second != 1) return false;
    }
    return !mesh.triangles.empty();
}

TriMesh make_icosphere(double radius, int subdivisions) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    TriMesh m;
    m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                  {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    m.triangles = {{0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                   {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
                   {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
    for (auto& v : m.vertices) v = normalize(v);
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            m.vertices.push_back(normalize(0.5 * (m.vertices[a] + m.vertices[b])));
            const int idx = int(m.vertices.size()) - 1;
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(m.triangles.size() * 4);
        for (const auto& tri : m.triangles) {
            const int ab = mid(tri[0], tri[1]), bc = mid(tri[1], tri[2]), ca = mid(tri[2], tri[0]);
            next.push_back({tri[0], ab, ca});
            next.push_back({tri[1], bc, ab});
            next.push_back({tri[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        m.triangles = std::move(next);
    }
    for (auto& v : m.vertices) v = radius * v;
    m.watertight = is_watertight(m);
    return m;
}

TriMesh make_box(Vec3 h) {
    TriMesh m;
    for (int n = 0; n < 8; ++n)
        m.vertices.push_back({(n & 1) ? h.x : -h.x, (n & 2) ? h.y : -h.y, (n & 4) ? h.z : -h.z});
    // Outward-facing quads split into two triangles each.
    const int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                             {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
    for (const auto& q : quads) {
        m.triangles.push_back({q[0], q[1], q[2]});
        m.triangles.push_back({q[0], q[2], q[3]});
    }
    m.watertight = is_watertight(m);
    return m;
}

TriMesh make_torus(double major_radius, double minor_radius, int nu, int nv) {
    TriMesh m;
    for (int u = 0; u < nu; ++u) {
        const double a = 2.0 * std::numbers::pi * u / nu;
        for (int v = 0; v < nv; ++v) {
            const double b = 2.0 * std::numbers::pi * v / nv;
            const double r = major_radius + minor_radius * std::cos(b);
            m.vertices.push_back({r * std::cos(a), r * std::sin(a), minor_radius * std::sin(b)});
        }
    }
    auto id = [&](int u, int v) { return ((u + nu) % nu) * nv + (v + nv) % nv; };
    for (int u = 0; u < nu; ++u)
        for (int v = 0; v < nv; ++v) {
            m.triangles.push_back({id(u, v), id(u + 1, v), id(u + 1, v + 1)});
            m.triangles.push_back({id(u, v), id(u + 1, v + 1), id(u, v + 1)});
        }
    m.watertight = is_watertight(m);
    return m;
}

TriMesh make_cylinder(double radius, double half_height, int segments) {
    TriMesh m;
    for (int s = 0; s < segments; ++s) {
        const double a = 2.0 * std::numbers::pi * s / segments;
        m.vertices.push_back({radius * std::cos(a), radius * std::sin(a), -half_height});
        m.vertices.push_back({radius * std::cos(a), radius * std::sin(a), half_height});
    }
    const int bottom = int(m.vertices.size());
    m.vertices.push_back({0, 0, -half_height});
    const int top = bottom + 1;
    m.vertices.push_back({0, 0, half_height});
    for (int s = 0; s < segments; ++s) {
        const int n = (s + 1) % segments;
        const int b0 = 2 * s, t0 = 2 * s + 1, b1 = 2 * n, t1 = 2 * n + 1;
        m.triangles.push_back({b0, b1, t1});
        m.triangles.push_back({b0, t1, t0});
        m.triangles.push_back({bottom, b1, b0});
        m.triangles.push_back({top, t0, t1});
    }
    m.watertight = is_watertight(m);
    return m;
}

TriMesh scaled(TriMesh mesh, Vec3 s) {
    for (auto& v : mesh.vertices) v = {v.x * s.x, v.y * s.y, v.z * s.z};
    return mesh;
}

const std::vector<std::string>& builtin_shape_names() {
    static const std::vector<std::string> names{"sphere", "box", "ellipsoid", "torus", "cylinder", "blob"};
    return names;
}

TriMesh builtin_shape(const std::string& name) {
    if (name == "sphere") return make_icosphere(0.2, 3);
    if (name == "box") return make_box({0.16, 0.16, 0.16});
    if (name == "ellipsoid") return scaled(make_icosphere(1.0, 3), {0.22, 0.16, 0.13});
    if (name == "torus") {
        // Stood upright so the hole faces the side cameras; the y/z swap
        // mirrors the mesh, so winding is flipped back.
        TriMesh t = make_torus(0.14, 0.07, 32, 16);
        for (auto& v : t.vertices) v = {v.x, v.z, v.y};
        for (auto& tri : t.triangles) std::swap(tri[1], tri[2]);
        return t;
    }
    if (name == "cylinder") return make_cylinder(0.13, 0.18, 32);
    if (name == "blob") {
        TriMesh m = make_icosphere(1.0, 3);
        for (auto& v : m.vertices) {
            const double r = 0.18 + 0.035 * std::sin(3.0 * v.x + 1.0) * std::cos(2.0 * v.y) +
                             0.025 * std::sin(4.0 * v.z);
            v = r * v;
        }
        return m;
    }
    throw ConfigError("unknown builtin shape '" + name + "'");
}

// Closest point on a triangle (Ericson, Real-Time Collision Detection 5.1.5).
double point_triangle_distance(Vec3 p, Vec3 a, Vec3 b, Vec3 c) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = dot(ab, ap), d2 = dot(ac, ap);
    if (d1 <= 0 && d2 <= 0) return length(ap);
    const Vec3 bp = p - b;
    const double d3 = dot(ab, bp), d4 = dot(ac, bp);
    if (d3 >= 0 && d4 <= d3) return length(bp);
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) return length(p - (a + (d1 / (d1 - d3)) * ab));
    const Vec3 cp = p - c;
    const double d5 = dot(ab, cp), d6 = dot(ac, cp);
    if (d6 >= 0 && d5 <= d6) return length(cp);
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) return length(p - (a + (d2 / (d2 - d6)) * ac));
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return length(p - (b + w * (c - b)));
    }
    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom, w = vc * denom;
    return length(p - (a + v * ab + w * ac));
}

DistanceAccelerator::DistanceAccelerator(const TriMesh& mesh, int cells_per_axis) : mesh_(&mesh) {
    mesh.validate();
    Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
    for (const auto& v : mesh.vertices)
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], v[a]);
            hi[a] = std::max(hi[a], v[a]);
        }
    const double extent = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z, 1e-9});
    if (cells_per_axis <= 0)
        cells_per_axis = std::clamp(int(std::cbrt(double(mesh.triangles.size()))), 1, 64);
    dims_ = cells_per_axis;
    cell_ = extent / dims_ * (1.0 + 1e-9);
    lo_ = lo;
    buckets_.resize(std::size_t(dims_) * dims_ * dims_);
    auto cell_of = [&](double x, int a) {
        return std::clamp(int(std::floor((x - lo_[a]) / cell_)), 0, dims_ - 1);
    };
    for (int t = 0; t < int(mesh.triangles.size()); ++t) {
        int c0[3], c1[3];
        for (int a = 0; a < 3; ++a) {
            double mn = 1e300, mx = -1e300;
            for (int v : mesh.triangles[t]) {
                mn = std::min(mn, mesh.vertices[v][a]);
                mx = std::max(mx, mesh.vertices[v][a]);
            }
            c0[a] = cell_of(mn, a);
            c1[a] = cell_of(mx, a);
        }
        for (int x = c0[0]; x <= c1[0]; ++x)
            for (int y = c0[1]; y <= c1[1]; ++y)
                for (int z = c0[2]; z <= c1[2]; ++z)
                    buckets_[(std::size_t(x) * dims_ + y) * dims_ + z].push_back(t);
    }
}

double DistanceAccelerator::unsigned_distance(Vec3 p) const {
    // Query cell, clamped into the bucket grid; `outside` is the distance from
    // p to the bucket grid box, a lower bound for every bucket.
    int q[3];
    double outside2 = 0.0;
    for (int a = 0; a < 3; ++a) {
        const double rel = (p[a] - lo_[a]) / cell_;
        q[a] = std::clamp(int(std::floor(rel)), 0, dims_ - 1);
        const double below = lo_[a] - p[a];
        const double above = p[a] - (lo_[a] + dims_ * cell_);
        const double d = std::max({below, above, 0.0});
        outside2 += d * d;
    }
    const double outside = std::sqrt(outside2);
    double best = std::numeric_limits<double>::infinity();
    std::vector<char> seen(mesh_->triangles.size(), 0);
    for (int ring = 0; ring < dims_; ++ring) {
        for (int x = q[0] - ring; x <= q[0] + ring; ++x)
            for (int y = q[1] - ring; y <= q[1] + ring; ++y)
                for (int z = q[2] - ring; z <= q[2] + ring; ++z) {
                    if (x < 0 || y < 0 || z < 0 || x >= dims_ || y >= dims_ || z >= dims_) continue;
                    if (std::max({std::abs(x - q[0]), std::abs(y - q[1]), std::abs(z - q[2])}) != ring)
                        continue;
                    for (int t : buckets_[(std::size_t(x) * dims_ + y) * dims_ + z]) {
                        if (seen[t]) continue;
                        seen[t] = 1;
                        const auto& tri = mesh_->triangles[t];
                        best = std::min(best, point_triangle_distance(p, mesh_->vertices[tri[0]],
                                                                      mesh_->vertices[tri[1]],
                                                                      mesh_->vertices[tri[2]]));
                    }
                }
        // Unvisited buckets lie at least `ring * cell_` away from p's cell.
        if (best <= std::max(outside, ring * cell_)) break;
    }
    return best;
}

namespace {

// Moller-Trumbore; counts hits with t > 0.
bool ray_hits(Vec3 o, Vec3 d, Vec3 a, Vec3 b, Vec3 c) {
    const Vec3 e1 = b - a, e2 = c - a;
    const Vec3 pv = cross(d, e2);
    const double det = dot(e1, pv);
    if (std::abs(det) < 1e-14) return false;
    const double inv = 1.0 / det;
    const Vec3 tv = o - a;
    const double u = dot(tv, pv) * inv;
    if (u < 0.0 || u > 1.0) return false;
    const Vec3 qv = cross(tv, e1);
    const double v = dot(d, qv) * inv;
    if (v < 0.0 || u + v > 1.0) return false;
    return dot(e2, qv) * inv > 0.0;
}

}  // namespace

bool inside_ray_parity(const TriMesh& mesh, Vec3 p) {
    // Slightly skewed axes so rays rarely run exactly through shared edges.
    static const Vec3 dirs[3] = {normalize({1.0, 1e-4, 2e-4}), normalize({3e-4, 1.0, 1e-4}),
                                 normalize({2e-4, 3e-4, 1.0})};
    int votes = 0;
    for (const Vec3& d : dirs) {
        int hits = 0;
        for (const auto& t : mesh.triangles)
            hits += ray_hits(p, d, mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
        votes += hits & 1;
    }
    return votes >= 2;
}

DenseGrid grid_sdf(const TriMesh& mesh, const GridSpec& grid) {
    grid.validate();
    mesh.validate();
    if (!is_watertight(mesh)) throw ConfigError("grid_sdf requires a watertight mesh");
    const DistanceAccelerator accel(mesh);
    const int n = grid.resolution;
    DenseGrid sdf(grid.shape());
    parallel_for(std::size_t(n), [&](std::size_t i) {
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                const Vec3 p = grid.voxel_center(int(i), j, k);
                const double d = accel.unsigned_distance(p);
                sdf(int(i), j, k) = inside_ray_parity(mesh, p) ? -d : d;
            }
    });
    return sdf;
}

OccupancyMask occupancy_mask(const DenseGrid& sdf) {
    OccupancyMask mask(sdf.shape());
    for (std::size_t n = 0; n < sdf.size(); ++n) {
        if (!std::isfinite(sdf[n])) throw ConfigError("SDF contains non-finite values");
        mask[n] = sdf[n] <= 0.0 ? 1 : 0;
    }
    return mask;
}

std::size_t occupied_count(const OccupancyMask& mask) {
    return std::size_t(std::count(mask.values().begin(), mask.values().end(), std::uint8_t{1}));
}

}  // namespace hscat::geometry
