#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "hscat/grid.hpp"

namespace hscat::geometry {

struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;
    bool watertight = false;

    void validate() const;
};

// ASCII OBJ subset: `v x y z` and `f a b c ...` (1-based, negative indices
// relative, `a/b/c` forms accepted; polygons are fan-triangulated). Other
// records are ignored. Zero-area triangles are dropped.
TriMesh load_mesh(const std::filesystem::path& path);
TriMesh parse_obj(const std::string& text);
void save_obj(const TriMesh& mesh, const std::filesystem::path& path);
std::string to_obj(const TriMesh& mesh);

// Every undirected edge used by exactly two triangles with opposite winding.
bool is_watertight(const TriMesh& mesh);

// Procedural closed meshes used for the built-in shape set.
TriMesh make_icosphere(double radius, int subdivisions);
TriMesh make_box(Vec3 half_extent);
TriMesh make_torus(double major_radius, double minor_radius, int major_segments,
                   int minor_segments);
TriMesh make_cylinder(double radius, double half_height, int segments);
TriMesh scaled(TriMesh mesh, Vec3 scale);

// Names of the built-in shapes and their meshes, all fitting inside a
// 0.5 m cube centered at the origin.
const std::vector<std::string>& builtin_shape_names();
TriMesh builtin_shape(const std::string& name);

// Exact Euclidean distance from p to triangle (a, b, c).
double point_triangle_distance(Vec3 p, Vec3 a, Vec3 b, Vec3 c);

// Uniform-grid bucketed triangle lookup for nearest-surface queries.
class DistanceAccelerator {
public:
    explicit DistanceAccelerator(const TriMesh& mesh, int cells_per_axis = 0);
    double unsigned_distance(Vec3 p) const;

private:
    const TriMesh* mesh_;
    Vec3 lo_{};
    double cell_ = 1.0;
    int dims_ = 1;
    std::vector<std::vector<int>> buckets_;
};

// Ray-parity inside test along +x, +y and +z with a majority vote.
bool inside_ray_parity(const TriMesh& mesh, Vec3 p);

// Signed distance at every voxel center, negative inside. Rejects open meshes.
DenseGrid grid_sdf(const TriMesh& mesh, const GridSpec& grid);

// 1 where sdf <= 0.
OccupancyMask occupancy_mask(const DenseGrid& sdf);

std::size_t occupied_count(const OccupancyMask& mask);

}  // namespace hscat::geometry
