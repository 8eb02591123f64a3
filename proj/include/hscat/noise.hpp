#pragma once

#include <array>
#include <cstdint>

#include "hscat/grid.hpp"

namespace hscat::noise {

// Parameters of a fractal Perlin field sampled on an N^3 grid. Octave l uses
// 2^(a + l) lattice cells across the grid.
struct NoiseSpec {
    int grid_size = 32;
    int octaves = 4;
    int base_frequency_exponent = 2;
    std::uint64_t seed = 0;

    void validate() const;
    int frequency(int octave) const { return 1 << (base_frequency_exponent + octave); }
    // Z = sum_l 2^-l = 2 - 2^(1 - L).
    double normalization() const;
    friend bool operator==(const NoiseSpec&, const NoiseSpec&) = default;
};

// Largest admissible octave count (capped at 5) for a grid size and base
// exponent, so the finest lattice is no denser than the voxel grid.
NoiseSpec default_spec(int grid_size, std::uint64_t seed);

// Index into the 12 cube-edge gradients for a lattice node.
int gradient_index(std::int64_t ix, std::int64_t iy, std::int64_t iz, int frequency,
                   std::uint64_t seed);

// Single-octave Perlin noise, p in lattice units, output in [-1, 1].
double perlin3(Vec3 p, int frequency, std::uint64_t seed);

// Same as perlin3 but with lattice hash coordinates shifted by `offset`.
// perlin3(p + offset) == perlin3_shifted(p, offset) for integer offsets.
double perlin3_shifted(Vec3 p, int frequency, std::uint64_t seed,
                       std::array<std::int64_t, 3> offset);

// p in voxel-index units, i.e. [0, N)^3 covers the grid.
double fractal_perlin3(Vec3 p, const NoiseSpec& spec);

// Voxel (i, j, k) is sampled at its center (i + 0.5, j + 0.5, k + 0.5).
Vec3 voxel_sample_point(int i, int j, int k);

// |fractal_perlin3| at every voxel, values in [0, 1].
DenseGrid synth_sigma_field(const NoiseSpec& spec);

// 0.3 + 0.65 * (fractal_perlin3 + 1) / 2 at every voxel, values in [0.3, 0.95].
DenseGrid synth_albedo_field(const NoiseSpec& spec);

inline constexpr double kAlbedoMin = 0.3;
inline constexpr double kAlbedoMax = 0.95;
inline double albedo_from_noise(double n) { return kAlbedoMin + (kAlbedoMax - kAlbedoMin) * 0.5 * (n + 1.0); }

}  // namespace hscat::noise
