#include "hscat/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "hscat/parallel.hpp"

namespace hscat::render {

using lighting::Environment;
using lighting::LightConfig;
using lighting::PointLight;
using tensor::ScatterField;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kInv4Pi = 1.0 / (4.0 * kPi);

std::uint64_t splitmix(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Step count for a segment of length `len` at the configured density.
int steps_for(double len, const GridSpec& grid, double steps_per_voxel) {
    const double dt = grid.voxel_size() / steps_per_voxel;
    return std::max(2, int(std::ceil(len / dt - 1e-9)));
}

// Extinction sample s * sigma(x) * M(x) with its trilinear stencil.
struct ExtinctionSample {
    double sigma = 0.0;  // interpolated sigma (0 when masked out)
    double mask = 0.0;
    tensor::TrilinearStencil stencil{};
};

ExtinctionSample extinction_at(const ScatterField& f, const OccupancyMask& mask,
                               const GridSpec& grid, Vec3 x) {
    ExtinctionSample e;
    e.mask = tensor::sample_nearest(mask, x, grid);
    if (e.mask == 0.0) return e;
    e.stencil = tensor::trilinear_stencil(f.sigma.shape(), x, grid);
    if (!e.stencil.valid) {
        e.mask = 0.0;
        return e;
    }
    for (int c = 0; c < 8; ++c) e.sigma += e.stencil.weight[c] * f.sigma[e.stencil.index[c]];
    return e;
}

double interpolate(const DenseGrid& g, const tensor::TrilinearStencil& st) {
    double v = 0.0;
    for (int c = 0; c < 8; ++c) v += st.weight[c] * g[st.index[c]];
    return v;
}

void scatter(DenseGrid& g, const tensor::TrilinearStencil& st, double v) {
    for (int c = 0; c < 8; ++c) g[st.index[c]] += st.weight[c] * v;
}

// One light path toward an emitter, with radiance already weighted by the
// isotropic phase function and quadrature weight.
struct LightSample {
    Vec3 dir;
    double tmax;
    std::array<double, 3> radiance;
};

class LightSampler {
public:
    LightSampler(const LightConfig& light, int env_directions) : light_(light) {
        if (!light.is_point()) {
            dirs_ = sphere_directions(env_directions);
            const auto& env = std::get<Environment>(light.light);
            for (const Vec3& d : dirs_) {
                auto L = env.radiance(d);
                for (double& v : L) v /= double(dirs_.size());  // (4pi / D) * (1 / 4pi)
                env_radiance_.push_back(L);
            }
        }
    }

    void samples(Vec3 x, std::vector<LightSample>& out) const {
        out.clear();
        if (const auto* p = std::get_if<PointLight>(&light_.light)) {
            const Vec3 to = p->position - x;
            const double d2 = dot(to, to);
            const double d = std::sqrt(d2);
            const double L = p->intensity / d2 * kInv4Pi;
            out.push_back({(1.0 / d) * to, d, {L, L, L}});
            return;
        }
        for (std::size_t n = 0; n < dirs_.size(); ++n)
            out.push_back({dirs_[n], std::numeric_limits<double>::infinity(), env_radiance_[n]});
    }

private:
    const LightConfig& light_;
    std::vector<Vec3> dirs_;
    std::vector<std::array<double, 3>> env_radiance_;
};

std::array<double, 3> background(const LightConfig& light, Vec3 dir) {
    if (const auto* env = std::get_if<Environment>(&light.light)) return env->radiance(dir);
    return {0.0, 0.0, 0.0};
}

// Shadow-ray march returning the optical depth; optionally records samples
// for the adjoint pass.
double shadow_depth(const ScatterField& f, const OccupancyMask& mask, const GridSpec& grid,
                    const Ray& ray, double tmax, double steps_per_voxel,
                    std::vector<ExtinctionSample>* record, double* dt_out) {
    const Interval iv = clip_to_bounds(ray, grid, tmax);
    if (iv.empty()) {
        if (dt_out) *dt_out = 0.0;
        return 0.0;
    }
    const int n = steps_for(iv.t1 - iv.t0, grid, steps_per_voxel);
    const double dt = (iv.t1 - iv.t0) / n;
    if (dt_out) *dt_out = dt;
    double depth = 0.0;
    for (int q = 0; q < n; ++q) {
        const Vec3 x = ray.origin + (iv.t0 + (q + 0.5) * dt) * ray.dir;
        ExtinctionSample e = extinction_at(f, mask, grid, x);
        depth += f.scale * e.sigma * e.mask * dt;
        if (record && e.mask != 0.0) record->push_back(e);
    }
    return depth;
}

// Per-pixel forward and (optionally) adjoint evaluation of the single-scattering
// estimator. Returns the pixel radiance per channel.
struct PixelContext {
    const ScatterField& field;
    const OccupancyMask& mask;
    const GridSpec& grid;
    const LightConfig& light;
    const LightSampler& sampler;
    double steps_per_voxel;
    int channels;
};

std::array<double, 3> march_pixel(const PixelContext& ctx, const Ray& ray,
                                  const std::array<double, 3>* upstream, FieldGradient* grad) {
    const ScatterField& f = ctx.field;
    std::array<double, 3> L{0.0, 0.0, 0.0};
    const auto bg = background(ctx.light, ray.dir);
    const Interval iv = clip_to_bounds(ray, ctx.grid, std::numeric_limits<double>::infinity());
    if (iv.empty()) {
        if (grad == nullptr) return bg;
        return bg;
    }
    const int n = steps_for(iv.t1 - iv.t0, ctx.grid, ctx.steps_per_voxel);
    const double dt = (iv.t1 - iv.t0) / n;

    struct Step {
        ExtinctionSample ext;
        double a = 0.0;        // scale * sigma * mask
        double albedo = 0.0;
        double T = 0.0;        // camera transmittance to the sample midpoint
        std::array<double, 3> E{0.0, 0.0, 0.0};  // in-scattered radiance per channel
        std::vector<double> light_T;              // per light sample transmittance
        std::vector<Vec3> light_dir;
        std::vector<double> light_tmax;
        std::vector<std::array<double, 3>> light_radiance;
    };
    std::vector<Step> steps;
    if (grad) steps.resize(std::size_t(n));

    std::vector<LightSample> ls;
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
        const Vec3 x = ray.origin + (iv.t0 + (k + 0.5) * dt) * ray.dir;
        ExtinctionSample e = extinction_at(f, ctx.mask, ctx.grid, x);
        const double a = f.scale * e.sigma * e.mask;
        const double tau = a * dt;
        const double T = std::exp(-(acc + 0.5 * tau));
        if (a > 0.0) {
            const double alb = interpolate(f.albedo, e.stencil);
            ctx.sampler.samples(x, ls);
            std::array<double, 3> E{0.0, 0.0, 0.0};
            Step* st = grad ? &steps[std::size_t(k)] : nullptr;
            for (const LightSample& s : ls) {
                const double TL =
                    std::exp(-shadow_depth(f, ctx.mask, ctx.grid, {x, s.dir}, s.tmax,
                                           ctx.steps_per_voxel, nullptr, nullptr));
                for (int c = 0; c < 3; ++c) E[c] += s.radiance[c] * TL;
                if (st) {
                    st->light_T.push_back(TL);
                    st->light_dir.push_back(s.dir);
                    st->light_tmax.push_back(s.tmax);
                    st->light_radiance.push_back(s.radiance);
                }
            }
            for (int c = 0; c < 3; ++c) L[c] += T * a * alb * E[c] * dt;
            if (st) {
                st->ext = e;
                st->a = a;
                st->albedo = alb;
                st->T = T;
                st->E = E;
            }
        }
        acc += tau;
    }
    const double T_total = std::exp(-acc);
    for (int c = 0; c < 3; ++c) L[c] += T_total * bg[c];
    if (!grad) return L;

    const auto& g = *upstream;
    auto weighted = [&](const std::array<double, 3>& v) {
        double s = 0.0;
        for (int c = 0; c < ctx.channels; ++c) s += g[c] * v[c];
        return s;
    };
    // w_k: upstream-weighted contribution of sample k.
    std::vector<double> w(std::size_t(n), 0.0);
    for (int k = 0; k < n; ++k) {
        const Step& st = steps[std::size_t(k)];
        if (st.a > 0.0) w[std::size_t(k)] = st.T * st.a * st.albedo * weighted(st.E) * dt;
    }
    const double B = T_total * weighted(bg);
    double suffix = 0.0;  // sum_{j > k} w_j
    std::vector<ExtinctionSample> shadow;
    for (int k = n - 1; k >= 0; --k) {
        const Step& st = steps[std::size_t(k)];
        const double wk = w[std::size_t(k)];
        if (st.a > 0.0) {
            const double dtau = -(suffix + 0.5 * wk + B);
            const double gE = weighted(st.E);
            const double da = st.T * st.albedo * gE * dt + dtau * dt;
            const double dalb = st.T * st.a * gE * dt;
            scatter(grad->sigma, st.ext.stencil, f.scale * st.ext.mask * da);
            grad->scale += st.ext.sigma * st.ext.mask * da;
            scatter(grad->albedo, st.ext.stencil, dalb);
            // Shadow rays: dL/d(shadow optical depth) = -T a albedo dt * radiance * TL.
            const Vec3 x = ray.origin + (iv.t0 + (k + 0.5) * dt) * ray.dir;
            for (std::size_t s = 0; s < st.light_T.size(); ++s) {
                const double u = st.T * st.a * st.albedo * dt * weighted(st.light_radiance[s]) * st.light_T[s];
                if (u == 0.0) continue;
                shadow.clear();
                double sdt = 0.0;
                shadow_depth(f, ctx.mask, ctx.grid, {x, st.light_dir[s]}, st.light_tmax[s],
                             ctx.steps_per_voxel, &shadow, &sdt);
                for (const ExtinctionSample& e : shadow) {
                    const double db = -u * sdt;
                    scatter(grad->sigma, e.stencil, f.scale * e.mask * db);
                    grad->scale += e.sigma * e.mask * db;
                }
            }
        }
        suffix += wk;
    }
    return L;
}

Window resolve_window(const Window& w, int res) {
    Window out = w;
    if (out.width < 0) out.width = res - out.x0;
    if (out.height < 0) out.height = res - out.y0;
    if (out.x0 < 0 || out.y0 < 0 || out.width <= 0 || out.height <= 0 || out.x0 + out.width > res ||
        out.y0 + out.height > res)
        throw ConfigError("render window outside the image");
    return out;
}

}  // namespace

Interval clip_to_bounds(const Ray& ray, const GridSpec& grid, double tmax) {
    double t0 = 0.0, t1 = tmax;
    for (int a = 0; a < 3; ++a) {
        const double o = ray.origin[a], d = ray.dir[a];
        if (std::abs(d) < 1e-300) {
            if (o < grid.lo() || o > grid.hi()) return {0.0, 0.0};
            continue;
        }
        double ta = (grid.lo() - o) / d, tb = (grid.hi() - o) / d;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (!(t1 > t0)) return {0.0, 0.0};
    return {t0, t1};
}

Ray Camera::primary(double px, double py) const {
    const double sx = (2.0 * px / resolution - 1.0) * tan_half_fov;
    const double sy = (1.0 - 2.0 * py / resolution) * tan_half_fov;
    return {position, normalize(forward + sx * right + sy * up)};
}

Ray Camera::primary(int x, int y) const { return primary(x + 0.5, y + 0.5); }

void CameraRig::validate(const GridSpec& grid) const {
    if (resolution <= 0) throw ConfigError("camera resolution must be positive");
    if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw ConfigError("camera FOV must be in (0, 180)");
    if (!(radius > 0.5 * std::sqrt(3.0) * grid.side))
        throw ConfigError("camera radius places the camera inside the volume bounds");
    for (int a = 0; a < kViews; ++a)
        for (int b = a + 1; b < kViews; ++b)
            if (azimuths_deg[a] == azimuths_deg[b]) throw ConfigError("camera azimuths must be distinct");
}

Camera CameraRig::camera(int view) const {
    if (view < 0 || view >= kViews) throw ConfigError("camera view index out of range");
    const double a = azimuths_deg[view] * kPi / 180.0;
    Camera c;
    c.position = {radius * std::cos(a), radius * std::sin(a), 0.0};
    c.forward = normalize(-c.position);
    const Vec3 world_up{0.0, 0.0, 1.0};
    c.right = normalize(cross(c.forward, world_up));
    c.up = cross(c.right, c.forward);
    c.tan_half_fov = std::tan(0.5 * fov_deg * kPi / 180.0);
    c.resolution = resolution;
    return c;
}

void SceneConfig::validate() const {
    grid.validate();
    rig.validate(grid);
    light.validate();
}

LightConfig SceneConfig::light_for_view(int view) const {
    LightConfig out = light;
    if (auto* p = std::get_if<PointLight>(&out.light); p && light_follows_camera)
        *p = lighting::olat_light(p->slot, rig.azimuths_deg[std::size_t(view)], rig.radius, p->intensity);
    return out;
}

void RenderJob::validate() const {
    if (!field || !mask) throw ConfigError("render job needs a field and a mask");
    scene.validate();
    field->validate();
    if (!(field->sigma.shape() == mask->shape())) throw ShapeError("field and mask shapes differ");
    if (!(field->sigma.shape() == scene.grid.shape())) throw ShapeError("field shape differs from the grid spec");
    if (view < 0 || view >= CameraRig::kViews) throw ConfigError("view index out of range");
    if (!(quality.steps_per_voxel > 0.0)) throw ConfigError("steps_per_voxel must be positive");
    if (quality.spp < 1) throw ConfigError("spp must be >= 1");
    if (quality.env_directions < 1) throw ConfigError("env_directions must be >= 1");
}

double transmittance_march(const ScatterField& field, const OccupancyMask& mask, const GridSpec& grid,
                           const Ray& ray, int steps, double tmax) {
    if (steps < 2) throw ConfigError("transmittance_march needs at least 2 steps");
    const Interval iv = clip_to_bounds(ray, grid, tmax);
    if (iv.empty()) return 1.0;
    const double dt = (iv.t1 - iv.t0) / steps;
    double depth = 0.0;
    for (int k = 0; k < steps; ++k) {
        const Vec3 x = ray.origin + (iv.t0 + (k + 0.5) * dt) * ray.dir;
        const ExtinctionSample e = extinction_at(field, mask, grid, x);
        depth += field.scale * e.sigma * e.mask * dt;
    }
    return std::exp(-depth);
}

Image raymarch_render(const RenderJob& job, Window window) {
    job.validate();
    const Camera cam = job.scene.rig.camera(job.view);
    const Window w = resolve_window(window, cam.resolution);
    const LightConfig light = job.scene.light_for_view(job.view);
    const LightSampler sampler(light, job.quality.env_directions);
    const PixelContext ctx{*job.field, *job.mask, job.scene.grid, light, sampler,
                           job.quality.steps_per_voxel, light.channels()};
    Image img(w.width, w.height, light.channels());
    parallel_for(std::size_t(w.height), [&](std::size_t yy) {
        const int y = int(yy);
        for (int x = 0; x < w.width; ++x) {
            const auto L = march_pixel(ctx, cam.primary(w.x0 + x, w.y0 + y), nullptr, nullptr);
            for (int c = 0; c < img.channels; ++c) img.at(c, y, x) = L[std::size_t(c)];
        }
    });
    return img;
}

void raymarch_adjoint_accumulate(const RenderJob& job, const Image& d_image, FieldGradient& grad) {
    job.validate();
    const Camera cam = job.scene.rig.camera(job.view);
    const LightConfig light = job.scene.light_for_view(job.view);
    if (d_image.width != cam.resolution || d_image.height != cam.resolution ||
        d_image.channels != light.channels())
        throw ShapeError("adjoint image does not match the forward render layout");
    const Shape3 shape = job.field->sigma.shape();
    if (!(grad.sigma.shape() == shape) || !(grad.albedo.shape() == shape))
        throw ShapeError("gradient grids do not match the field");
    const LightSampler sampler(light, job.quality.env_directions);
    const PixelContext ctx{*job.field, *job.mask, job.scene.grid, light, sampler,
                           job.quality.steps_per_voxel, light.channels()};

    // Rows are processed into per-worker gradients, then summed in row order
    // so the result does not depend on scheduling.
    const int res = cam.resolution;
    const std::size_t workers = std::min<std::size_t>(thread_count(), std::size_t(res));
    std::vector<FieldGradient> partial(workers, FieldGradient{DenseGrid(shape), DenseGrid(shape), 0.0});
    const std::size_t chunk = (std::size_t(res) + workers - 1) / workers;
    parallel_for(workers, [&](std::size_t wkr) {
        FieldGradient& g = partial[wkr];
        const int y_end = int(std::min<std::size_t>(std::size_t(res), (wkr + 1) * chunk));
        for (int y = int(wkr * chunk); y < y_end; ++y)
            for (int x = 0; x < res; ++x) {
                std::array<double, 3> up{0.0, 0.0, 0.0};
                bool any = false;
                for (int c = 0; c < d_image.channels; ++c) {
                    up[std::size_t(c)] = d_image.at(c, y, x);
                    any = any || up[std::size_t(c)] != 0.0;
                }
                if (!any) continue;
                march_pixel(ctx, cam.primary(x, y), &up, &g);
            }
    });
    for (const FieldGradient& g : partial) {
        for (std::size_t n = 0; n < g.sigma.size(); ++n) {
            grad.sigma[n] += g.sigma[n];
            grad.albedo[n] += g.albedo[n];
        }
        grad.scale += g.scale;
    }
}

FieldGradient raymarch_adjoint(const RenderJob& job, const Image& d_image) {
    job.validate();
    const Shape3 shape = job.field->sigma.shape();
    FieldGradient grad{DenseGrid(shape), DenseGrid(shape), 0.0};
    raymarch_adjoint_accumulate(job, d_image, grad);
    return grad;
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t pixel, std::uint64_t sample) {
    std::uint64_t s = seed;
    std::uint64_t h = splitmix(s);
    s = h ^ pixel;
    h = splitmix(s);
    s = h ^ sample;
    state_ = splitmix(s);
}

std::uint64_t CounterRng::next_u64() { return splitmix(state_); }

double CounterRng::next() { return double(next_u64() >> 11) * 0x1.0p-53; }

double hg_pdf(double g, double cos_theta) {
    const double denom = 1.0 + g * g + 2.0 * g * cos_theta;
    return kInv4Pi * (1.0 - g * g) / (denom * std::sqrt(denom));
}

Vec3 sample_hg(double g, Vec3 incoming, double u1, double u2) {
    double cos_theta;
    if (std::abs(g) < 1e-3) {
        cos_theta = 1.0 - 2.0 * u1;
    } else {
        const double sq = (1.0 - g * g) / (1.0 + g - 2.0 * g * u1);
        cos_theta = (1.0 + g * g - sq * sq) / (2.0 * g);
    }
    cos_theta = std::clamp(cos_theta, -1.0, 1.0);
    const double sin_theta = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
    const double phi = 2.0 * kPi * u2;
    const Vec3 w = normalize(incoming);
    const Vec3 helper = std::abs(w.x) > 0.9 ? Vec3{0, 1, 0} : Vec3{1, 0, 0};
    const Vec3 u = normalize(cross(helper, w));
    const Vec3 v = cross(w, u);
    return normalize(sin_theta * std::cos(phi) * u + sin_theta * std::sin(phi) * v + cos_theta * w);
}

std::vector<Vec3> sphere_directions(int count) {
    std::vector<Vec3> out;
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (int n = 0; n < count; ++n) {
        const double z = 1.0 - (2.0 * n + 1.0) / count;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        out.push_back({r * std::cos(golden * n), r * std::sin(golden * n), z});
    }
    return out;
}

namespace {

double max_sigma(const ScatterField& f) {
    double m = 0.0;
    for (double v : f.sigma.values()) m = std::max(m, v);
    return m;
}

// Ratio-tracking transmittance estimate along [0, tmax].
double ratio_tracking(const ScatterField& f, const OccupancyMask& mask, const GridSpec& grid,
                      const Ray& ray, double tmax, double majorant, CounterRng& rng) {
    const Interval iv = clip_to_bounds(ray, grid, tmax);
    if (iv.empty()) return 1.0;
    double T = 1.0;
    double t = iv.t0;
    while (true) {
        t -= std::log(1.0 - rng.next()) / majorant;
        if (t >= iv.t1) break;
        const ExtinctionSample e = extinction_at(f, mask, grid, ray.origin + t * ray.dir);
        T *= 1.0 - f.scale * e.sigma * e.mask / majorant;
        if (T <= 0.0) return 0.0;
    }
    return T;
}

std::array<double, 3> trace_path(const ScatterField& f, const OccupancyMask& mask, const GridSpec& grid,
                                 const LightConfig& light, Ray ray, double majorant, double g,
                                 int rr_depth, CounterRng& rng) {
    std::array<double, 3> L{0.0, 0.0, 0.0};
    double throughput = 1.0;
    const auto* point = std::get_if<PointLight>(&light.light);
    for (int depth = 0;; ++depth) {
        const Interval iv = majorant > 0.0 ? clip_to_bounds(ray, grid, std::numeric_limits<double>::infinity())
                                           : Interval{};
        bool collided = false;
        Vec3 x{};
        if (!iv.empty()) {
            double t = iv.t0;
            while (true) {
                t -= std::log(1.0 - rng.next()) / majorant;
                if (t >= iv.t1) break;
                x = ray.origin + t * ray.dir;
                const ExtinctionSample e = extinction_at(f, mask, grid, x);
                if (rng.next() * majorant < f.scale * e.sigma * e.mask) {
                    collided = true;
                    break;
                }
            }
        }
        if (!collided) {
            if (!point) {
                const auto bg = background(light, ray.dir);
                for (int c = 0; c < 3; ++c) L[c] += throughput * bg[c];
            }
            return L;
        }
        const double alb = tensor::sample_trilinear(f.albedo, x, grid);
        if (point) {
            const Vec3 to = point->position - x;
            const double d2 = dot(to, to);
            const double d = std::sqrt(d2);
            const Vec3 dir = (1.0 / d) * to;
            const double T = ratio_tracking(f, mask, grid, {x, dir}, d, majorant, rng);
            const double contrib = throughput * alb * hg_pdf(g, dot(ray.dir, dir)) * point->intensity / d2 * T;
            for (int c = 0; c < 3; ++c) L[c] += contrib;
        }
        if (rng.next() >= alb) return L;  // absorbed
        if (depth + 1 > rr_depth) {
            constexpr double survive = 0.9;
            if (rng.next() >= survive) return L;
            throughput /= survive;
        }
        const double u1 = rng.next(), u2 = rng.next();
        ray = {x, sample_hg(g, ray.dir, u1, u2)};
    }
}

}  // namespace

McResult mc_render(const RenderJob& job, Window window, double hg_g) {
    job.validate();
    const ScatterField& f = *job.field;
    const double majorant = f.scale * max_sigma(f);
    if (f.scale > 0.0 && majorant <= 0.0) throw ConfigError("zero majorant with nonzero density scale");
    const Camera cam = job.scene.rig.camera(job.view);
    const Window w = resolve_window(window, cam.resolution);
    const LightConfig light = job.scene.light_for_view(job.view);
    const int channels = light.channels();
    McResult out{Image(w.width, w.height, channels), Image(w.width, w.height, channels)};
    const int spp = job.quality.spp;
    parallel_for(std::size_t(w.height), [&](std::size_t yy) {
        const int y = int(yy);
        for (int x = 0; x < w.width; ++x) {
            const int px = w.x0 + x, py = w.y0 + y;
            const std::uint64_t pixel = std::uint64_t(py) * std::uint64_t(cam.resolution) + std::uint64_t(px);
            std::array<double, 3> sum{}, sum2{};
            for (int s = 0; s < spp; ++s) {
                CounterRng rng(job.quality.seed, pixel, std::uint64_t(s));
                const auto L = trace_path(f, *job.mask, job.scene.grid, light, cam.primary(px, py), majorant,
                                          hg_g, job.quality.rr_depth, rng);
                for (int c = 0; c < 3; ++c) {
                    sum[c] += L[c];
                    sum2[c] += L[c] * L[c];
                }
            }
            for (int c = 0; c < channels; ++c) {
                const double mean = sum[std::size_t(c)] / spp;
                const double var =
                    spp > 1 ? std::max(0.0, (sum2[std::size_t(c)] - spp * mean * mean) / (spp - 1)) : 0.0;
                out.image.at(c, y, x) = mean;
                out.std_error.at(c, y, x) = std::sqrt(var / spp);
            }
        }
    });
    return out;
}

Image foreground_mask(const OccupancyMask& mask, const SceneConfig& scene, int view) {
    scene.validate();
    if (!(mask.shape() == scene.grid.shape())) throw ShapeError("mask shape differs from the grid spec");
    const Camera cam = scene.rig.camera(view);
    Image out(cam.resolution, cam.resolution, 1);
    const double dt = scene.grid.voxel_size() / 4.0;
    for (int y = 0; y < cam.resolution; ++y)
        for (int x = 0; x < cam.resolution; ++x) {
            const Ray r = cam.primary(x, y);
            const Interval iv = clip_to_bounds(r, scene.grid, std::numeric_limits<double>::infinity());
            if (iv.empty()) continue;
            for (double t = iv.t0 + 0.5 * dt; t < iv.t1; t += dt)
                if (tensor::sample_nearest(mask, r.origin + t * r.dir, scene.grid)) {
                    out.at(0, y, x) = 1.0;
                    break;
                }
        }
    return out;
}

}  // namespace hscat::render
