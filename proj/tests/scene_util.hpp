#pragma once

#include <array>
#include <string>

#include "hscat/defaults.hpp"
#include "hscat/geometry.hpp"
#include "hscat/noise.hpp"
#include "hscat/render.hpp"

// A small textured scene with its six ray-marched views.
struct SmallScene {
    hscat::render::SceneConfig scene;
    hscat::OccupancyMask mask;
    hscat::tensor::ScatterField field;
    std::array<hscat::Image, 6> views;
};

inline SmallScene make_small_scene(int grid, int image, const std::string& shape, std::uint64_t seed,
                                   double scale = 40.0) {
    using namespace hscat;
    SmallScene s;
    s.scene.grid = GridSpec{grid, defaults::kMiniSide};
    s.scene.rig.resolution = image;
    lighting::PointLight p;
    p.intensity = defaults::kMiniLightIntensity;
    s.scene.light.light = p;
    s.mask = geometry::occupancy_mask(geometry::grid_sdf(geometry::builtin_shape(shape), s.scene.grid));
    const noise::NoiseSpec spec = noise::default_spec(grid, seed);
    s.field = tensor::ScatterField{noise::synth_sigma_field(spec), noise::synth_albedo_field(spec), scale};
    render::RenderJob job{&s.field, &s.mask, s.scene, 0, render::RenderQuality{}};
    for (int v = 0; v < render::CameraRig::kViews; ++v) {
        job.view = v;
        s.views[std::size_t(v)] = render::raymarch_render(job);
    }
    return s;
}
