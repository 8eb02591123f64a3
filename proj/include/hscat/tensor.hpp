#pragma once

#include <cstdint>
#include <vector>

#include "hscat/grid.hpp"

namespace hscat::tensor {

// Rank-R vector-matrix decomposition of an I x J x K tensor:
//   T(i,j,k) = sum_r vx[r][i] * m_yz[r][j,k] + vy[r][j] * m_xz[r][i,k] + vz[r][k] * m_xy[r][i,j]
// Components are stored contiguously per rank: vx is R x I, m_yz is R x J x K, ...
struct VMDecomposition {
    int rank = 0;
    Shape3 shape{};
    std::vector<double> vx, vy, vz;
    std::vector<double> m_yz, m_xz, m_xy;

    VMDecomposition() = default;
    VMDecomposition(int rank, Shape3 shape);

    void validate() const;
    std::size_t parameter_count() const;

    // Rank-concatenated sum with vectors scaled by a and b, so that
    // reconstruct(lincomb(a, x, b, y)) == a * reconstruct(x) + b * reconstruct(y).
    static VMDecomposition lincomb(double a, const VMDecomposition& lhs, double b,
                                   const VMDecomposition& rhs);
    friend bool operator==(const VMDecomposition&, const VMDecomposition&) = default;
};

DenseGrid reconstruct(const VMDecomposition& vm, Shape3 shape);

// Scalars in the decomposition divided by I * J * K.
double compression_ratio(const VMDecomposition& vm, Shape3 shape);
double compression_ratio(int rank, Shape3 shape);

struct FitResult {
    VMDecomposition vm;
    std::vector<double> relative_errors;  // after each sweep
};

// Each sweep replaces the X, Y and Z blocks in turn by the truncated SVD of
// their residual, tries an extrapolated state, then takes one damped
// Gauss-Newton step on all factors. Steps that raise the error are rejected,
// so relative_errors is non-increasing.
FitResult fit_vm(const DenseGrid& grid, int rank, int iters, std::uint64_t seed);

// Frobenius norm of (a - b) over Frobenius norm of a (0 when a is zero and b matches).
double relative_error(const DenseGrid& a, const DenseGrid& b);

// Trilinear interpolation between voxel centers. Points inside the bounds but
// beyond the outermost centers use the edge value; points outside return 0.
double sample_trilinear(const DenseGrid& grid, Vec3 p, const GridSpec& spec);

// Eight voxel weights used by sample_trilinear (for adjoint scatter).
struct TrilinearStencil {
    std::size_t index[8];
    double weight[8];
    bool valid = false;
};
TrilinearStencil trilinear_stencil(Shape3 shape, Vec3 p, const GridSpec& spec);

// Nearest-voxel lookup of a binary mask; 0 outside the bounds.
std::uint8_t sample_nearest(const OccupancyMask& mask, Vec3 p, const GridSpec& spec);

// Density-scale ranges of the two lighting regimes (1/m).
struct DensityRange {
    double lo = 8.0;
    double hi = 80.0;
    double normalize(double s) const { return (s - lo) / (hi - lo); }
    double denormalize(double t) const { return lo + t * (hi - lo); }
    bool contains(double s) const { return s >= lo && s <= hi; }
};
inline constexpr DensityRange kPointDensity{8.0, 80.0};
inline constexpr DensityRange kEnvDensity{30.0, 130.0};

// Extinction is scale * sigma_grid; albedo is sigma_s / sigma_t.
struct ScatterField {
    DenseGrid sigma;
    DenseGrid albedo;
    double scale = 0.0;

    void validate() const;
    void validate(const DensityRange& range) const;
};

}  // namespace hscat::tensor
