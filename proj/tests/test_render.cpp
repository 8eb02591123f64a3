#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hscat/gradcheck.hpp"
#include "hscat/noise.hpp"
#include "hscat/render.hpp"

using namespace hscat;
using namespace hscat::render;
using hscat::tensor::ScatterField;

namespace {

constexpr double kPi = std::numbers::pi;

ScatterField homogeneous(int n, double sigma, double albedo, double scale) {
    return {DenseGrid(Shape3::cube(n), sigma), DenseGrid(Shape3::cube(n), albedo), scale};
}

OccupancyMask full_mask(int n) { return OccupancyMask(Shape3::cube(n), 1); }

OccupancyMask ball_mask(const GridSpec& g, double radius) {
    OccupancyMask m(g.shape(), 0);
    for (int i = 0; i < g.resolution; ++i)
        for (int j = 0; j < g.resolution; ++j)
            for (int k = 0; k < g.resolution; ++k) m(i, j, k) = length(g.voxel_center(i, j, k)) <= radius;
    return m;
}

lighting::LightConfig point_light() {
    return {lighting::PointLight{{}, 4.0 * kPi, lighting::PointLightSlot::colocated}};
}

lighting::LightConfig unit_env() {
    lighting::SHCoeffs c{};
    for (auto& row : c.c) row[0] = 1.0 / 0.28209479177387814;
    return {lighting::Environment{c, std::nullopt}};
}

SceneConfig scene(int n, int res, lighting::LightConfig light) {
    SceneConfig s;
    s.grid = GridSpec{n, 0.5};
    s.rig.resolution = res;
    s.light = std::move(light);
    return s;
}

}  // namespace

TEST_CASE("Beer-Lambert along a chord") {
    const int n = 16;
    const ScatterField f = homogeneous(n, 0.5, 0.6, 20.0);  // 10 / m
    const GridSpec g{n, 0.5};
    const Ray ray{{1.0, 0.0, 0.0}, {-1.0, 0.0, 0.0}};
    CHECK(std::abs(transmittance_march(f, full_mask(n), g, ray, 256) - std::exp(-5.0)) <= 1e-4);
    CHECK(std::abs(std::exp(-5.0) - 6.7379e-3) < 1e-7);
    const Ray miss{{1.0, 0.4, 0.0}, {-1.0, 0.0, 0.0}};
    CHECK(transmittance_march(f, full_mask(n), g, miss, 256) == 1.0);
    CHECK_THROWS_AS(transmittance_march(f, full_mask(n), g, ray, 1), ConfigError);
}

TEST_CASE("march error falls with step count on a linear ramp") {
    const int n = 8;
    const GridSpec g{n, 0.5};
    ScatterField f = homogeneous(n, 0.0, 0.5, 8.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) f.sigma(i, j, k) = (i + 0.5) / n;
    // Trilinear interpolation of the ramp is linear between the outermost
    // centers and constant beyond them.
    const double h = g.voxel_size();
    const double c0 = g.lo() + 0.5 * h, c1 = g.hi() - 0.5 * h;
    const double s0 = 0.5 / n, s1 = (n - 0.5) / n;
    auto profile = [&](double x) { return x <= c0 ? s0 : (x >= c1 ? s1 : s0 + (s1 - s0) * (x - c0) / (c1 - c0)); };
    auto antiderivative = [&](double x) {  // from lo to x
        if (x <= c0) return s0 * (x - g.lo());
        const double xm = std::min(x, c1);
        double v = s0 * (c0 - g.lo()) + 0.5 * (s0 + profile(xm)) * (xm - c0);
        if (x > c1) v += s1 * (x - c1);
        return v;
    };
    // Midpoint sampling is exact on the linear part, so the error comes from
    // the two clamp kinks and depends on where they fall inside a step. Average
    // over random rays to measure the order.
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Ray> rays;
    std::vector<double> exact;
    while (rays.size() < 200) {
        const Vec3 dir = normalize({u(rng), u(rng), u(rng)});
        if (std::abs(dir.x) < 0.2) continue;
        const Ray ray{Vec3{0.2 * u(rng), 0.2 * u(rng), 0.2 * u(rng)} - 2.0 * dir, dir};
        const Interval iv = clip_to_bounds(ray, g, 1e9);
        const double xa = ray.origin.x + iv.t0 * dir.x, xb = ray.origin.x + iv.t1 * dir.x;
        rays.push_back(ray);
        exact.push_back(std::exp(-f.scale * std::abs(antiderivative(xb) - antiderivative(xa)) / std::abs(dir.x)));
    }
    double prev = -1.0;
    for (int steps : {4, 8, 16, 32, 64}) {
        double err = 0.0;
        for (std::size_t r = 0; r < rays.size(); ++r)
            err += std::abs(transmittance_march(f, full_mask(n), g, rays[r], steps) - exact[r]);
        err /= double(rays.size());
        CAPTURE(steps);
        if (prev >= 0.0) CHECK(err <= 0.6 * prev);
        prev = err;
    }
    CHECK(prev < 1e-4);
}

TEST_CASE("transmittance never increases with density scale") {
    const int n = 8;
    const GridSpec g{n, 0.5};
    ScatterField f{noise::synth_sigma_field(noise::default_spec(n, 3)), DenseGrid(Shape3::cube(n), 0.5), 1.0};
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int r = 0; r < 100; ++r) {
        const Vec3 dir = normalize({u(rng), u(rng), u(rng)});
        const Ray ray{Vec3{0.1 * u(rng), 0.1 * u(rng), 0.1 * u(rng)} - 1.0 * dir, dir};
        double prev = 1.0;
        for (double s : {0.0, 1.0, 5.0, 20.0, 80.0}) {
            f.scale = s;
            const double t = transmittance_march(f, full_mask(n), g, ray, 32);
            CHECK(t <= prev);
            prev = t;
        }
    }
}

TEST_CASE("vacuum renders the background") {
    const int n = 8;
    const ScatterField f = homogeneous(n, 0.7, 0.8, 0.0);
    const OccupancyMask m = full_mask(n);
    RenderJob job{&f, &m, scene(n, 16, point_light()), 2, {}};
    for (double v : raymarch_render(job).data) CHECK(v == 0.0);

    lighting::LightConfig env{lighting::Environment{lighting::preset_environment(1), std::nullopt}};
    job.scene = scene(n, 16, env);
    const Image img = raymarch_render(job);
    const Camera cam = job.scene.rig.camera(2);
    for (int y = 0; y < 16; y += 3)
        for (int x = 0; x < 16; x += 3) {
            const auto bg = lighting::eval_sh(*std::get<lighting::Environment>(env.light).sh, cam.primary(x, y).dir);
            for (int c = 0; c < 3; ++c) CHECK(img.at(c, y, x) == doctest::Approx(bg[std::size_t(c)]).epsilon(1e-12));
        }
}

TEST_CASE("zero albedo gives a pure attenuation silhouette") {
    const int n = 8;
    const ScatterField f = homogeneous(n, 1.0, 0.0, 6.0);
    const OccupancyMask m = full_mask(n);
    RenderJob job{&f, &m, scene(n, 12, unit_env()), 0, {}};
    const Image img = raymarch_render(job);
    const Camera cam = job.scene.rig.camera(0);
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 12; ++x) {
            const Ray r = cam.primary(x, y);
            const Interval iv = clip_to_bounds(r, job.scene.grid, 1e9);
            const double T = iv.empty() ? 1.0 : std::exp(-6.0 * (iv.t1 - iv.t0));
            CHECK(img.at(0, y, x) == doctest::Approx(T).epsilon(1e-6));
        }
}

TEST_CASE("homogeneous ball under a colocated light renders symmetrically") {
    const int n = 16;
    const GridSpec g{n, 0.5};
    const ScatterField f = homogeneous(n, 1.0, 0.8, 20.0);
    const OccupancyMask m = ball_mask(g, 0.2);
    const int res = 24;
    RenderJob job{&f, &m, scene(n, res, point_light()), 0, {}};
    const Image img = raymarch_render(job);
    double worst = 0.0, peak = 0.0;
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            peak = std::max(peak, img.at(0, y, x));
            worst = std::max(worst, std::abs(img.at(0, y, x) - img.at(0, res - 1 - y, x)));
            worst = std::max(worst, std::abs(img.at(0, y, x) - img.at(0, y, res - 1 - x)));
            worst = std::max(worst, std::abs(img.at(0, y, x) - img.at(0, x, y)));
        }
    CHECK(peak > 0.01);
    CHECK(worst < 1e-5);
}

TEST_CASE("sub-window render equals the crop of the full render") {
    const int n = 8;
    const ScatterField f{noise::synth_sigma_field(noise::default_spec(n, 1)),
                         noise::synth_albedo_field(noise::default_spec(n, 2)), 30.0};
    const OccupancyMask m = full_mask(n);
    for (auto light : {point_light(), lighting::LightConfig{lighting::Environment{lighting::preset_environment(0), std::nullopt}}}) {
        RenderJob job{&f, &m, scene(n, 16, light), 4, {}};
        job.quality.env_directions = 8;
        const Image full = raymarch_render(job);
        const Window w{3, 5, 7, 4};
        const Image part = raymarch_render(job, w);
        REQUIRE(part.width == 7);
        REQUIRE(part.height == 4);
        for (int c = 0; c < part.channels; ++c)
            for (int y = 0; y < 4; ++y)
                for (int x = 0; x < 7; ++x) CHECK(part.at(c, y, x) == full.at(c, y + 5, x + 3));
        CHECK(raymarch_render(job) == full);
        CHECK_THROWS_AS(raymarch_render(job, Window{10, 0, 10, 2}), ConfigError);
    }
}

TEST_CASE("camera rig checks") {
    CameraRig rig;
    CHECK_NOTHROW(rig.validate(GridSpec{8, 0.5}));
    rig.radius = 0.2;
    CHECK_THROWS_AS(rig.validate(GridSpec{8, 0.5}), ConfigError);
    rig = CameraRig{};
    rig.azimuths_deg[3] = 0.0;
    CHECK_THROWS_AS(rig.validate(GridSpec{8, 0.5}), ConfigError);
    rig = CameraRig{};
    for (int v = 0; v < CameraRig::kViews; ++v) {
        const Camera c = rig.camera(v);
        CHECK(length(c.position) == doctest::Approx(1.0));
        // The center ray points at the origin.
        const Ray r = c.primary(0.5 * rig.resolution, 0.5 * rig.resolution);
        CHECK(length(r.origin + 1.0 * r.dir) < 1e-12);
    }
}

TEST_CASE("isotropic HG sampling passes a chi-square test") {
    // 8 equal-area bands in cos(theta) times 4 azimuth sectors.
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int samples = 32000;
    std::array<int, 32> bins{};
    const Vec3 incoming = normalize({0.3, -0.2, 0.9});
    for (int s = 0; s < samples; ++s) {
        const Vec3 d = sample_hg(0.0, incoming, u(rng), u(rng));
        CHECK(std::abs(length(d) - 1.0) < 1e-12);
        const int band = std::min(7, int((d.z + 1.0) * 4.0));
        const double phi = std::atan2(d.y, d.x) + kPi;
        const int sector = std::min(3, int(phi / (0.5 * kPi)));
        ++bins[std::size_t(band * 4 + sector)];
    }
    const double expected = samples / 32.0;
    double chi2 = 0.0;
    for (int b : bins) chi2 += (b - expected) * (b - expected) / expected;
    CHECK(chi2 < 52.19);  // 1% critical value, 31 degrees of freedom
    CHECK(hg_pdf(0.0, 0.3) == doctest::Approx(1.0 / (4.0 * kPi)));
}

TEST_CASE("HG pdf normalization and mean cosine") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double g : {-0.5, 0.3, 0.8}) {
        double integral = 0.0;
        const int m = 20000;
        for (int q = 0; q < m; ++q) {
            const double mu = -1.0 + (q + 0.5) * 2.0 / m;
            integral += hg_pdf(g, mu) * 2.0 * kPi * 2.0 / m;
        }
        CHECK(integral == doctest::Approx(1.0).epsilon(1e-4));
        const Vec3 in{0.0, 1.0, 0.0};
        double mean = 0.0;
        for (int s = 0; s < 40000; ++s) mean += dot(sample_hg(g, in, u(rng), u(rng)), in);
        CHECK(mean / 40000 == doctest::Approx(g).epsilon(0.02).scale(1.0));
    }
}

TEST_CASE("Monte-Carlo transmittance of an absorbing medium") {
    const int n = 8;
    const ScatterField f = homogeneous(n, 1.0, 0.0, 4.0);
    const OccupancyMask m = full_mask(n);
    RenderJob job{&f, &m, scene(n, 8, unit_env()), 1, {}};
    job.quality.spp = 4096;
    job.quality.seed = 11;
    const McResult r = mc_render(job);
    const Camera cam = job.scene.rig.camera(1);
    double mean = 0.0, analytic = 0.0, var = 0.0;
    int within = 0;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            const Interval iv = clip_to_bounds(cam.primary(x, y), job.scene.grid, 1e9);
            const double T = iv.empty() ? 1.0 : std::exp(-4.0 * (iv.t1 - iv.t0));
            const double se = r.std_error.at(0, y, x);
            within += std::abs(r.image.at(0, y, x) - T) <= 3.0 * se + 1e-12;
            mean += r.image.at(0, y, x);
            analytic += T;
            var += se * se;
        }
    CHECK(std::abs(mean - analytic) / 64.0 <= 3.0 * std::sqrt(var) / 64.0);
    CHECK(within >= 60);
}

TEST_CASE("Monte-Carlo renders are reproducible per seed") {
    const int n = 8;
    const ScatterField f{noise::synth_sigma_field(noise::default_spec(n, 4)),
                         noise::synth_albedo_field(noise::default_spec(n, 5)), 20.0};
    const OccupancyMask m = full_mask(n);
    RenderJob job{&f, &m, scene(n, 8, point_light()), 0, {}};
    job.quality.spp = 16;
    job.quality.seed = 3;
    const McResult a = mc_render(job), b = mc_render(job);
    CHECK(a.image == b.image);
    job.quality.seed = 4;
    CHECK_FALSE(mc_render(job).image == a.image);
    // Sub-windows reuse the same per-pixel streams.
    job.quality.seed = 3;
    const McResult w = mc_render(job, Window{2, 1, 3, 3});
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x) CHECK(w.image.at(0, y, x) == a.image.at(0, y + 1, x + 2));
}

TEST_CASE("thin medium: Monte-Carlo agrees with the ray marcher") {
    const int n = 8;
    const ScatterField f{noise::synth_sigma_field(noise::default_spec(n, 6)),
                         noise::synth_albedo_field(noise::default_spec(n, 7)), 0.5};
    const OccupancyMask m = full_mask(n);
    RenderJob job{&f, &m, scene(n, 8, point_light()), 0, {}};
    job.quality.steps_per_voxel = 8.0;
    job.quality.spp = 8192;
    job.quality.seed = 21;
    const Image ref = raymarch_render(job);
    const McResult mc = mc_render(job);
    int within = 0, lit = 0;
    double num = 0.0, den = 0.0;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            const double se = mc.std_error.at(0, y, x);
            if (ref.at(0, y, x) == 0.0 && mc.image.at(0, y, x) == 0.0) continue;
            ++lit;
            within += std::abs(mc.image.at(0, y, x) - ref.at(0, y, x)) <= 3.0 * se;
            num += mc.image.at(0, y, x);
            den += ref.at(0, y, x);
        }
    CHECK(lit > 20);
    CHECK(within >= int(0.95 * lit));
    CHECK(num / den == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("zero majorant with nonzero scale is rejected") {
    const int n = 4;
    const ScatterField f = homogeneous(n, 0.0, 0.5, 10.0);
    const OccupancyMask m = full_mask(n);
    RenderJob job{&f, &m, scene(n, 4, point_light()), 0, {}};
    CHECK_THROWS_AS(mc_render(job), ConfigError);
}

TEST_CASE("foreground mask marks rays through occupied voxels") {
    const GridSpec g{16, 0.5};
    SceneConfig s = scene(16, 16, point_light());
    const Image fg = foreground_mask(ball_mask(g, 0.15), s, 3);
    CHECK(fg.at(0, 8, 8) == 1.0);
    CHECK(fg.at(0, 0, 0) == 0.0);
    for (double v : fg.data) CHECK((v == 0.0 || v == 1.0));
}

TEST_CASE("albedo gradient vanishes behind an opaque wall") {
    const int n = 8;
    const ScatterField f = homogeneous(n, 1.0, 0.6, 1e5);
    const OccupancyMask m = full_mask(n);
    RenderJob job{&f, &m, scene(n, 6, point_light()), 0, {}};
    const Image ones(6, 6, 1, 1.0);
    const FieldGradient grad = raymarch_adjoint(job, ones);
    // Camera 0 sits on +x; the far half of the grid is never reached.
    for (int i = 0; i < n / 2; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) CHECK(grad.albedo(i, j, k) == 0.0);
    CHECK_THROWS_AS(raymarch_adjoint(job, Image(5, 6, 1)), ShapeError);
}

TEST_CASE("adjoint matches finite differences") {
    for (const gradcheck::CheckResult& r : gradcheck::adjoint_suite(5)) {
        CAPTURE(r.name);
        CAPTURE(r.max_rel_error);
        CHECK(r.pass);
        CHECK(r.tolerance == gradcheck::kAdjointTolerance);
    }
}
