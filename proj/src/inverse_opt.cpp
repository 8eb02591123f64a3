#include "hscat/inverse_opt.hpp"

#include <algorithm>
#include <cmath>

#include "hscat/autodiff.hpp"
#include "hscat/defaults.hpp"
#include "hscat/io.hpp"
#include "hscat/metrics.hpp"

namespace hscat::inverse_opt {

namespace {

constexpr double kAlphaLo = 0.3;
constexpr double kAlphaHi = 0.95;
constexpr double kSigmaInit = 0.5;
constexpr double kAlphaInit = 0.625;
constexpr double kDivergence = 10.0;

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void require_tv_shape(Shape3 s) {
    if (s.i < 2 || s.j < 2 || s.k < 2) throw ConfigError("tv_loss needs at least 2 voxels per axis");
}

}  // namespace

double tv_loss(const DenseGrid& g) {
    const Shape3 s = g.shape();
    require_tv_shape(s);
    double acc = 0.0;
    for (int i = 0; i + 1 < s.i; ++i)
        for (int j = 0; j + 1 < s.j; ++j)
            for (int k = 0; k + 1 < s.k; ++k) {
                const double v = g(i, j, k);
                acc += std::abs(g(i + 1, j, k) - v) + std::abs(g(i, j + 1, k) - v) + std::abs(g(i, j, k + 1) - v);
            }
    return acc / (double(s.i - 1) * (s.j - 1) * (s.k - 1));
}

void tv_gradient(const DenseGrid& g, double weight, DenseGrid& grad) {
    const Shape3 s = g.shape();
    require_tv_shape(s);
    if (!(grad.shape() == s)) throw ShapeError("tv_gradient: shape mismatch");
    const double w = weight / (double(s.i - 1) * (s.j - 1) * (s.k - 1));
    for (int i = 0; i + 1 < s.i; ++i)
        for (int j = 0; j + 1 < s.j; ++j)
            for (int k = 0; k + 1 < s.k; ++k) {
                const double v = g(i, j, k);
                const double dx = w * sgn(g(i + 1, j, k) - v);
                const double dy = w * sgn(g(i, j + 1, k) - v);
                const double dz = w * sgn(g(i, j, k + 1) - v);
                grad(i + 1, j, k) += dx;
                grad(i, j + 1, k) += dy;
                grad(i, j, k + 1) += dz;
                grad(i, j, k) -= dx + dy + dz;
            }
}

tensor::VMDecomposition vm_backward(const tensor::VMDecomposition& vm, const DenseGrid& d_grid) {
    vm.validate();
    const Shape3 s = vm.shape;
    if (!(d_grid.shape() == s)) throw ShapeError("vm_backward: gradient grid shape mismatch");
    const int R = vm.rank, I = s.i, J = s.j, K = s.k;
    tensor::VMDecomposition g(R, s);
    for (int r = 0; r < R; ++r) {
        const double* vx = &vm.vx[std::size_t(r) * I];
        const double* vy = &vm.vy[std::size_t(r) * J];
        const double* vz = &vm.vz[std::size_t(r) * K];
        const double* myz = &vm.m_yz[std::size_t(r) * J * K];
        const double* mxz = &vm.m_xz[std::size_t(r) * I * K];
        const double* mxy = &vm.m_xy[std::size_t(r) * I * J];
        double* gvx = &g.vx[std::size_t(r) * I];
        double* gvy = &g.vy[std::size_t(r) * J];
        double* gvz = &g.vz[std::size_t(r) * K];
        double* gyz = &g.m_yz[std::size_t(r) * J * K];
        double* gxz = &g.m_xz[std::size_t(r) * I * K];
        double* gxy = &g.m_xy[std::size_t(r) * I * J];
        for (int i = 0; i < I; ++i)
            for (int j = 0; j < J; ++j)
                for (int k = 0; k < K; ++k) {
                    const double d = d_grid(i, j, k);
                    if (d == 0.0) continue;
                    gvx[i] += d * myz[j * K + k];
                    gyz[j * K + k] += d * vx[i];
                    gvy[j] += d * mxz[i * K + k];
                    gxz[i * K + k] += d * vy[j];
                    gvz[k] += d * mxy[i * J + j];
                    gxy[i * J + j] += d * vz[k];
                }
    }
    return g;
}

void OptimConfig::validate() const {
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (!(tv_weight >= 0.0) || !std::isfinite(tv_weight)) throw ConfigError("tv_weight must be finite and >= 0");
    if (!std::isfinite(lr)) throw ConfigError("lr must be finite");
    if (param == Parameterization::vm && rank < 1) throw ConfigError("rank must be >= 1");
    if (!(density.hi > density.lo)) throw ConfigError("density range must be increasing");
}

double default_lr(Parameterization p) {
    return p == Parameterization::dense ? defaults::kOptimLearningRateDense : defaults::kOptimLearningRateVm;
}

double OptimConfig::effective_lr() const { return lr > 0.0 ? lr : default_lr(param); }

namespace {

// Flat parameter vector plus the mapping to a clamped field.
class Params {
public:
    Params(const OptimConfig& cfg, Shape3 shape) : cfg_(cfg), shape_(shape) {
        const std::size_t n = shape.size();
        if (cfg.param == Parameterization::dense) {
            sigma_.assign(n, kSigmaInit);
            alpha_.assign(n, kAlphaInit);
        } else {
            DenseGrid cs(shape, kSigmaInit), ca(shape, kAlphaInit);
            vm_sigma_ = tensor::fit_vm(cs, cfg.rank, 4, cfg.seed).vm;
            vm_alpha_ = tensor::fit_vm(ca, cfg.rank, 4, cfg.seed + 1).vm;
        }
        t_ = 0.5;
        flatten_sizes();
    }

    std::size_t size() const { return total_; }

    std::vector<double> pack() const {
        std::vector<double> out;
        out.reserve(total_);
        if (cfg_.param == Parameterization::dense) {
            out.insert(out.end(), sigma_.begin(), sigma_.end());
            out.insert(out.end(), alpha_.begin(), alpha_.end());
        } else {
            for (const auto* vm : {&vm_sigma_, &vm_alpha_})
                for (const auto* v : parts(*vm)) out.insert(out.end(), v->begin(), v->end());
        }
        out.push_back(t_);
        return out;
    }

    void unpack(const std::vector<double>& x) {
        std::size_t o = 0;
        if (cfg_.param == Parameterization::dense) {
            std::copy_n(x.begin() + long(o), sigma_.size(), sigma_.begin());
            o += sigma_.size();
            std::copy_n(x.begin() + long(o), alpha_.size(), alpha_.begin());
            o += alpha_.size();
            for (double& v : sigma_) v = std::clamp(v, 0.0, 1.0);
            for (double& v : alpha_) v = std::clamp(v, kAlphaLo, kAlphaHi);
        } else {
            for (auto* vm : {&vm_sigma_, &vm_alpha_})
                for (auto* v : parts(*vm)) {
                    std::copy_n(x.begin() + long(o), v->size(), v->begin());
                    o += v->size();
                }
        }
        t_ = std::clamp(x[o], 0.0, 1.0);
    }

    // Raw (unclamped) grids; clamping happens in field().
    DenseGrid raw_sigma() const { return raw(sigma_, vm_sigma_); }
    DenseGrid raw_alpha() const { return raw(alpha_, vm_alpha_); }

    tensor::ScatterField field(const DenseGrid& rs, const DenseGrid& ra) const {
        tensor::ScatterField f{DenseGrid(shape_), DenseGrid(shape_), cfg_.density.denormalize(t_)};
        for (std::size_t i = 0; i < rs.size(); ++i) {
            f.sigma[i] = std::clamp(rs[i], 0.0, 1.0);
            f.albedo[i] = std::clamp(ra[i], kAlphaLo, kAlphaHi);
        }
        return f;
    }

    // Gradient with respect to the packed vector. `ds`, `da` are gradients
    // with respect to the clamped grids.
    std::vector<double> pull_back(const DenseGrid& rs, const DenseGrid& ra, DenseGrid ds, DenseGrid da,
                                  double d_scale) const {
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (rs[i] < 0.0 || rs[i] > 1.0) ds[i] = 0.0;
            if (ra[i] < kAlphaLo || ra[i] > kAlphaHi) da[i] = 0.0;
        }
        std::vector<double> g;
        g.reserve(total_);
        if (cfg_.param == Parameterization::dense) {
            g.insert(g.end(), ds.values().begin(), ds.values().end());
            g.insert(g.end(), da.values().begin(), da.values().end());
        } else {
            const auto gs = vm_backward(vm_sigma_, ds);
            const auto ga = vm_backward(vm_alpha_, da);
            for (const auto* vm : {&gs, &ga})
                for (const auto* v : parts(*vm)) g.insert(g.end(), v->begin(), v->end());
        }
        g.push_back(d_scale * (cfg_.density.hi - cfg_.density.lo));
        return g;
    }

private:
    static std::array<const std::vector<double>*, 6> parts(const tensor::VMDecomposition& vm) {
        return {&vm.vx, &vm.vy, &vm.vz, &vm.m_yz, &vm.m_xz, &vm.m_xy};
    }
    static std::array<std::vector<double>*, 6> parts(tensor::VMDecomposition& vm) {
        return {&vm.vx, &vm.vy, &vm.vz, &vm.m_yz, &vm.m_xz, &vm.m_xy};
    }

    DenseGrid raw(const std::vector<double>& dense, const tensor::VMDecomposition& vm) const {
        if (cfg_.param == Parameterization::vm) return tensor::reconstruct(vm, shape_);
        DenseGrid g(shape_);
        g.values() = dense;
        return g;
    }

    void flatten_sizes() { total_ = pack().size(); }

    OptimConfig cfg_;
    Shape3 shape_;
    std::vector<double> sigma_, alpha_;
    tensor::VMDecomposition vm_sigma_, vm_alpha_;
    double t_ = 0.5;  // normalized density scale
    std::size_t total_ = 0;
};

struct Eval {
    double loss = 0.0;
    double mse = 0.0;
    std::array<Image, 6> d_images;
};

Eval image_loss(const tensor::ScatterField& f, const OccupancyMask& mask, const render::SceneConfig& scene,
                const render::RenderQuality& q, const std::array<Image, 6>& targets, ImageLoss kind) {
    Eval e;
    std::size_t count = 0;
    for (const auto& t : targets) count += t.data.size();
    render::RenderJob job{&f, &mask, scene, 0, q};
    for (int v = 0; v < render::CameraRig::kViews; ++v) {
        job.view = v;
        const Image img = render::raymarch_render(job);
        const Image& tgt = targets[std::size_t(v)];
        if (!img.same_layout(tgt)) throw ShapeError("target view " + std::to_string(v) + " does not match the scene");
        Image d(img.width, img.height, img.channels);
        for (std::size_t n = 0; n < img.data.size(); ++n) {
            const double r = img.data[n] - tgt.data[n];
            e.mse += r * r;
            if (kind == ImageLoss::l1) {
                e.loss += std::abs(r);
                d.data[n] = sgn(r) / double(count);
            } else {
                e.loss += r * r;
                d.data[n] = 2.0 * r / double(count);
            }
        }
        e.d_images[std::size_t(v)] = std::move(d);
    }
    e.loss /= double(count);
    e.mse /= double(count);
    return e;
}

}  // namespace

OptimResult optimize_scene(const std::array<Image, 6>& targets, const OccupancyMask& mask,
                           const render::SceneConfig& scene, const OptimConfig& cfg, const StepCallback& on_step) {
    cfg.validate();
    scene.validate();
    const Shape3 shape = scene.grid.shape();
    if (!(mask.shape() == shape)) throw ShapeError("mask does not match the scene grid");

    Params params(cfg, shape);
    std::vector<double> x = params.pack();
    ad::AdamState adam(x.size());
    const ad::AdamConfig acfg{cfg.effective_lr(), 0.9, 0.999, 1e-8};

    OptimResult res;
    double initial_loss = 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (int step = 0; step <= cfg.steps; ++step) {
        const DenseGrid rs = params.raw_sigma();
        const DenseGrid ra = params.raw_alpha();
        const tensor::ScatterField f = params.field(rs, ra);
        const Eval e = image_loss(f, mask, scene, cfg.quality, targets, cfg.loss);
        const double tv = tv_loss(f.sigma) + tv_loss(f.albedo);
        const double objective = e.loss + cfg.tv_weight * tv;
        if (!std::isfinite(objective)) throw NumericalError("non-finite objective at step " + std::to_string(step));
        if (step == 0) {
            initial_loss = e.loss;
            res.initial_mse = e.mse;
        }
        if (e.loss < best) {
            best = e.loss;
            res.field = f;
            res.final_mse = e.mse;
        }
        const TracePoint tp{step, e.loss, e.mse, tv, best};
        res.trace.push_back(tp);
        if (on_step) on_step(tp);
        if (e.loss > kDivergence * initial_loss && initial_loss > 0.0)
            throw Diverged("optimization diverged at step " + std::to_string(step), res.trace);
        if (step == cfg.steps) break;

        render::FieldGradient g{DenseGrid(shape), DenseGrid(shape), 0.0};
        render::RenderJob job{&f, &mask, scene, 0, cfg.quality};
        for (int v = 0; v < render::CameraRig::kViews; ++v) {
            job.view = v;
            render::raymarch_adjoint_accumulate(job, e.d_images[std::size_t(v)], g);
        }
        if (cfg.tv_weight > 0.0) {
            tv_gradient(f.sigma, cfg.tv_weight, g.sigma);
            tv_gradient(f.albedo, cfg.tv_weight, g.albedo);
        }
        std::vector<double> grad = params.pull_back(rs, ra, std::move(g.sigma), std::move(g.albedo), g.scale);
        adam.step(acfg, x.data(), grad.data(), x.size());
        params.unpack(x);
        x = params.pack();  // keep the optimizer state on the clamped iterate
    }
    return res;
}

void write_trace_csv(const std::string& path, const std::vector<TracePoint>& trace) {
    std::string out = "step,image_loss,image_mse,tv,best\n";
    char buf[160];
    for (const auto& t : trace) {
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g\n", t.step, t.image_loss, t.image_mse, t.tv, t.best);
        out += buf;
    }
    io::write_file(path, out);
}

}  // namespace hscat::inverse_opt
