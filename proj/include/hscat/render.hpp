#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "hscat/grid.hpp"
#include "hscat/image.hpp"
#include "hscat/lighting.hpp"
#include "hscat/tensor.hpp"

namespace hscat::render {

struct Ray {
    Vec3 origin;
    Vec3 dir;  // unit length
};

// Parametric overlap [t0, t1] of a ray with the grid bounds, clipped to
// [0, tmax]. Empty when t1 <= t0.
struct Interval {
    double t0 = 0.0;
    double t1 = 0.0;
    bool empty() const { return !(t1 > t0); }
};
Interval clip_to_bounds(const Ray& ray, const GridSpec& grid, double tmax);

struct Camera {
    Vec3 position;
    Vec3 forward, right, up;
    double tan_half_fov = 0.0;
    int resolution = 0;

    // Ray through the center of pixel (x, y); row 0 is the top of the image.
    Ray primary(int x, int y) const;
    Ray primary(double px, double py) const;
};

// Six cameras on a horizontal circle around the origin (z up), looking at it.
struct CameraRig {
    double radius = 1.0;
    double fov_deg = 45.0;
    int resolution = 64;
    std::array<double, 6> azimuths_deg{0.0, 60.0, 120.0, 180.0, 240.0, 300.0};

    void validate(const GridSpec& grid) const;
    Camera camera(int view) const;
    static constexpr int kViews = 6;
};

struct SceneConfig {
    GridSpec grid;
    CameraRig rig;
    lighting::LightConfig light;
    // Point lights follow their camera (colocated/left/right slots); set
    // false to use PointLight::position verbatim.
    bool light_follows_camera = true;

    void validate() const;
    // The light as seen by `view`, with point-light positions resolved.
    lighting::LightConfig light_for_view(int view) const;
};

struct RenderQuality {
    double steps_per_voxel = 2.0;  // ray-march samples per voxel length
    int env_directions = 32;       // in-scatter quadrature directions for env lighting
    int spp = 64;                  // Monte-Carlo samples per pixel
    std::uint64_t seed = 0;
    int rr_depth = 10;             // Russian roulette starts after this many bounces
};

// Pixel rectangle; defaults to the full image.
struct Window {
    int x0 = 0, y0 = 0, width = -1, height = -1;
};

struct RenderJob {
    const tensor::ScatterField* field = nullptr;
    const OccupancyMask* mask = nullptr;
    SceneConfig scene;
    int view = 0;
    RenderQuality quality;

    void validate() const;
};

// exp(-sum_k scale * sigma(x_k) * M(x_k) * dt) with `steps` midpoint samples over
// the part of [0, tmax] inside the grid bounds.
double transmittance_march(const tensor::ScatterField& field, const OccupancyMask& mask,
                           const GridSpec& grid, const Ray& ray, int steps,
                           double tmax = std::numeric_limits<double>::infinity());

// Deterministic single-scattering ray march with isotropic phase.
Image raymarch_render(const RenderJob& job, Window window = {});

struct FieldGradient {
    DenseGrid sigma;
    DenseGrid albedo;
    double scale = 0.0;
};

// Exact reverse-mode derivative of raymarch_render's discretization given
// dLoss/dImage (same layout as the rendered image).
FieldGradient raymarch_adjoint(const RenderJob& job, const Image& d_image);

// Accumulates into an existing gradient (used when summing over views).
void raymarch_adjoint_accumulate(const RenderJob& job, const Image& d_image, FieldGradient& grad);

struct McResult {
    Image image;
    Image std_error;  // per-pixel standard error of the mean
};

// Delta-tracking volumetric path tracer (multiple scattering, NEE for point
// lights, environment hits on escape). Reproducible for a given seed and spp.
McResult mc_render(const RenderJob& job, Window window = {}, double hg_g = 0.0);

// 1 where the camera ray passes through an occupied voxel.
Image foreground_mask(const OccupancyMask& mask, const SceneConfig& scene, int view);

// Henyey-Greenstein phase function.
double hg_pdf(double g, double cos_theta);
// Samples a direction around `incoming` (the propagation direction).
Vec3 sample_hg(double g, Vec3 incoming, double u1, double u2);

// Counter-based random stream keyed by (seed, pixel, sample).
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t pixel, std::uint64_t sample);
    std::uint64_t next_u64();
    double next();  // uniform in [0, 1)

private:
    std::uint64_t state_;
};

// Fibonacci-sphere directions, used as the env in-scatter quadrature.
std::vector<Vec3> sphere_directions(int count);

// Default step density: two samples per voxel length.
inline constexpr double kDefaultStepsPerVoxel = 2.0;

}  // namespace hscat::render
