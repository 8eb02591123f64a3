#include "hscat/noise.hpp"

#include <cmath>
#include <string>

#include "hscat/parallel.hpp"

namespace hscat::noise {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
// Raw Perlin with unit gradients is bounded by sqrt(3)/2.
constexpr double kRescale = 1.15470053837925152902;  // 2 / sqrt(3)

constexpr double kGradients[12][3] = {
    {1, 1, 0}, {-1, 1, 0}, {1, -1, 0}, {-1, -1, 0},
    {1, 0, 1}, {-1, 0, 1}, {1, 0, -1}, {-1, 0, -1},
    {0, 1, 1}, {0, -1, 1}, {0, 1, -1}, {0, -1, -1},
};

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }
double lerp(double a, double b, double t) { return a + t * (b - a); }

double grad_dot(std::int64_t ix, std::int64_t iy, std::int64_t iz, int frequency,
                std::uint64_t seed, double dx, double dy, double dz) {
    const double* g = kGradients[gradient_index(ix, iy, iz, frequency, seed)];
    return kInvSqrt2 * (g[0] * dx + g[1] * dy + g[2] * dz);
}

}  // namespace

void NoiseSpec::validate() const {
    if (grid_size <= 0) throw ConfigError("noise grid_size must be positive");
    if (octaves <= 0) throw ConfigError("noise octaves must be positive");
    if (base_frequency_exponent < 0) throw ConfigError("noise base frequency exponent must be >= 0");
    if (base_frequency_exponent + octaves - 1 > 30 ||
        (1LL << (base_frequency_exponent + octaves - 1)) > grid_size)
        throw ConfigError("finest noise octave (2^" +
                          std::to_string(base_frequency_exponent + octaves - 1) +
                          ") is denser than the grid (" + std::to_string(grid_size) + ")");
}

double NoiseSpec::normalization() const { return 2.0 - std::ldexp(1.0, 1 - octaves); }

NoiseSpec default_spec(int grid_size, std::uint64_t seed) {
    NoiseSpec spec;
    spec.grid_size = grid_size;
    spec.base_frequency_exponent = 2;
    spec.seed = seed;
    int octaves = 0;
    while (octaves < 5 && (1 << (spec.base_frequency_exponent + octaves)) <= grid_size) ++octaves;
    spec.octaves = octaves;
    spec.validate();
    return spec;
}

int gradient_index(std::int64_t ix, std::int64_t iy, std::int64_t iz, int frequency,
                   std::uint64_t seed) {
    std::uint64_t h = mix64(seed ^ 0x517cc1b727220a95ULL);
    h = mix64(h ^ static_cast<std::uint64_t>(frequency));
    h = mix64(h ^ static_cast<std::uint64_t>(ix));
    h = mix64(h ^ static_cast<std::uint64_t>(iy));
    h = mix64(h ^ static_cast<std::uint64_t>(iz));
    return static_cast<int>(h % 12);
}

double perlin3_shifted(Vec3 p, int frequency, std::uint64_t seed,
                       std::array<std::int64_t, 3> offset) {
    const double fx = std::floor(p.x), fy = std::floor(p.y), fz = std::floor(p.z);
    const auto x0 = static_cast<std::int64_t>(fx) + offset[0];
    const auto y0 = static_cast<std::int64_t>(fy) + offset[1];
    const auto z0 = static_cast<std::int64_t>(fz) + offset[2];
    const double dx = p.x - fx, dy = p.y - fy, dz = p.z - fz;

    const double n000 = grad_dot(x0, y0, z0, frequency, seed, dx, dy, dz);
    const double n100 = grad_dot(x0 + 1, y0, z0, frequency, seed, dx - 1, dy, dz);
    const double n010 = grad_dot(x0, y0 + 1, z0, frequency, seed, dx, dy - 1, dz);
    const double n110 = grad_dot(x0 + 1, y0 + 1, z0, frequency, seed, dx - 1, dy - 1, dz);
    const double n001 = grad_dot(x0, y0, z0 + 1, frequency, seed, dx, dy, dz - 1);
    const double n101 = grad_dot(x0 + 1, y0, z0 + 1, frequency, seed, dx - 1, dy, dz - 1);
    const double n011 = grad_dot(x0, y0 + 1, z0 + 1, frequency, seed, dx, dy - 1, dz - 1);
    const double n111 = grad_dot(x0 + 1, y0 + 1, z0 + 1, frequency, seed, dx - 1, dy - 1, dz - 1);

    const double u = fade(dx), v = fade(dy), w = fade(dz);
    const double nx00 = lerp(n000, n100, u);
    const double nx10 = lerp(n010, n110, u);
    const double nx01 = lerp(n001, n101, u);
    const double nx11 = lerp(n011, n111, u);
    const double nxy0 = lerp(nx00, nx10, v);
    const double nxy1 = lerp(nx01, nx11, v);
    return kRescale * lerp(nxy0, nxy1, w);
}

double perlin3(Vec3 p, int frequency, std::uint64_t seed) {
    return perlin3_shifted(p, frequency, seed, {0, 0, 0});
}

double fractal_perlin3(Vec3 p, const NoiseSpec& spec) {
    spec.validate();
    double sum = 0.0;
    double amplitude = 1.0;
    for (int l = 0; l < spec.octaves; ++l) {
        const int f = spec.frequency(l);
        const double scale = double(f) / spec.grid_size;
        sum += amplitude * perlin3(scale * p, f, spec.seed);
        amplitude *= 0.5;
    }
    return sum / spec.normalization();
}

Vec3 voxel_sample_point(int i, int j, int k) { return {i + 0.5, j + 0.5, k + 0.5}; }

namespace {

template <typename Map>
DenseGrid synth_field(const NoiseSpec& spec, Map map) {
    spec.validate();
    DenseGrid grid(Shape3::cube(spec.grid_size));
    const int n = spec.grid_size;
    parallel_for(std::size_t(n), [&](std::size_t i) {
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                grid(int(i), j, k) = map(fractal_perlin3(voxel_sample_point(int(i), j, k), spec));
    });
    return grid;
}

}  // namespace

DenseGrid synth_sigma_field(const NoiseSpec& spec) {
    return synth_field(spec, [](double v) { return std::abs(v); });
}

DenseGrid synth_albedo_field(const NoiseSpec& spec) {
    return synth_field(spec, albedo_from_noise);
}

}  // namespace hscat::noise
