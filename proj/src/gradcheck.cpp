#include "hscat/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "hscat/autodiff.hpp"
#include "hscat/render.hpp"

namespace hscat::gradcheck {

using ad::Tape;
using ad::Tensor;
using ad::Var;

double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
    if (analytic.size() != numeric.size()) throw ShapeError("gradient vectors differ in length");
    double scale = 0.0;
    for (double n : numeric) scale = std::max(scale, std::abs(n));
    const double floor = std::max(1e-3 * scale, 1e-12);
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double den = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / den);
    }
    return worst;
}

namespace {

// Central-difference steps: h = 1e-5 * (1 + |x|) for tape ops, 1e-3 for the adjoint.
constexpr double kStepScale = 1e-5;
constexpr double kAdjointStep = 1e-3;
constexpr int kMaxEntries = 48;  // per input

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

struct Rng {
    std::mt19937_64 gen;
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen); }
    Tensor tensor(std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
        Tensor t(std::move(shape));
        for (double& v : t.data) v = uniform(lo, hi);
        return t;
    }
    // Values bounded away from zero, for ops with a kink there.
    Tensor away_from_zero(std::vector<int> shape) {
        Tensor t(std::move(shape));
        for (double& v : t.data) v = (uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0) * uniform(0.1, 1.0);
        return t;
    }
};

// Scalar probe loss: sum(out * W) for a fixed random W.
double probe(const Builder& f, const std::vector<Tensor>& inputs, const Tensor& w) {
    Tape tape;
    std::vector<Var> vs;
    for (const auto& t : inputs) vs.push_back(tape.constant(t));
    const Var out = f(tape, vs);
    double s = 0.0;
    for (std::size_t i = 0; i < out.value().size(); ++i) s += out.value().data[i] * w.data[i];
    return s;
}

CheckResult check_op(const std::string& name, const Builder& f, std::vector<Tensor> inputs, Rng& rng) {
    // Output shape and probe weights.
    Tensor w;
    {
        Tape tape;
        std::vector<Var> vs;
        for (const auto& t : inputs) vs.push_back(tape.constant(t));
        w = rng.tensor(f(tape, vs).shape());
    }
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
    const Var out = f(tape, leaves);
    const Var loss = ad::sum(ad::mul(out, tape.constant(w)));
    tape.backward(loss);

    std::vector<double> analytic, numeric;
    for (std::size_t a = 0; a < inputs.size(); ++a) {
        const Tensor& g = leaves[a].grad();
        std::vector<std::size_t> idx(inputs[a].size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::shuffle(idx.begin(), idx.end(), rng.gen);
        idx.resize(std::min<std::size_t>(idx.size(), kMaxEntries));
        for (std::size_t i : idx) {
            const double h = kStepScale * (1.0 + std::abs(inputs[a].data[i]));
            auto plus = inputs, minus = inputs;
            plus[a].data[i] += h;
            minus[a].data[i] -= h;
            numeric.push_back((probe(f, plus, w) - probe(f, minus, w)) / (2 * h));
            analytic.push_back(g.data.empty() ? 0.0 : g.data[i]);
        }
    }
    CheckResult r{name, max_relative_error(analytic, numeric), kAutodiffTolerance, int(analytic.size()), false};
    r.pass = r.max_rel_error <= r.tolerance;
    return r;
}

}  // namespace

std::vector<CheckResult> autodiff_suite(std::uint64_t seed) {
    Rng rng{std::mt19937_64(seed)};
    std::vector<CheckResult> out;
    const auto run = [&](const std::string& name, const Builder& f, std::vector<Tensor> in) {
        out.push_back(check_op(name, f, std::move(in), rng));
    };

    for (const auto& [stride, ph, pw] : {std::tuple{1, 1, 1}, std::tuple{2, 1, 1}, std::tuple{1, 0, 1}}) {
        const int kh = ph == 0 ? 1 : 3;
        run("conv2d s" + std::to_string(stride) + " k" + std::to_string(kh) + "x3",
            [=](Tape&, const std::vector<Var>& v) { return ad::conv2d(v[0], v[1], v[2], {stride, ph, pw}); },
            {rng.tensor({3, 6, 7}), rng.tensor({4, 3, kh, 3}), rng.tensor({4})});
    }
    run("relu", [](Tape&, const std::vector<Var>& v) { return ad::relu(v[0]); }, {rng.away_from_zero({2, 3, 4})});
    run("dense", [](Tape&, const std::vector<Var>& v) { return ad::dense(v[0], v[1], v[2]); },
        {rng.tensor({2, 3, 2}), rng.tensor({5, 12}), rng.tensor({5})});
    run("concat", [](Tape&, const std::vector<Var>& v) { return ad::concat({v[0], v[1], v[2]}); },
        {rng.tensor({2, 3, 3}), rng.tensor({1, 3, 3}), rng.tensor({3, 3, 3})});
    run("sum", [](Tape&, const std::vector<Var>& v) { return ad::sum(v[0]); }, {rng.tensor({4, 5})});
    run("mean", [](Tape&, const std::vector<Var>& v) { return ad::mean(v[0]); }, {rng.tensor({4, 5})});
    for (int axis = 0; axis < 3; ++axis)
        run("mean_axis " + std::to_string(axis),
            [=](Tape&, const std::vector<Var>& v) { return ad::mean_axis(v[0], axis); }, {rng.tensor({3, 4, 5})});
    run("add", [](Tape&, const std::vector<Var>& v) { return ad::add(v[0], v[1]); },
        {rng.tensor({3, 4}), rng.tensor({3, 4})});
    run("sub", [](Tape&, const std::vector<Var>& v) { return ad::sub(v[0], v[1]); },
        {rng.tensor({3, 4}), rng.tensor({3, 4})});
    run("mul", [](Tape&, const std::vector<Var>& v) { return ad::mul(v[0], v[1]); },
        {rng.tensor({3, 4}), rng.tensor({3, 4})});
    run("scale", [](Tape&, const std::vector<Var>& v) { return ad::scale(v[0], -1.7); }, {rng.tensor({6})});
    run("reshape", [](Tape&, const std::vector<Var>& v) { return ad::reshape(v[0], {4, 6}); },
        {rng.tensor({2, 3, 4})});
    run("slice", [](Tape&, const std::vector<Var>& v) { return ad::slice(v[0], 1, 3); }, {rng.tensor({4, 2, 3})});
    run("depth_to_space 2x2", [](Tape&, const std::vector<Var>& v) { return ad::depth_to_space(v[0], 2, 2); },
        {rng.tensor({8, 3, 2})});
    run("depth_to_space 1x2", [](Tape&, const std::vector<Var>& v) { return ad::depth_to_space(v[0], 1, 2); },
        {rng.tensor({6, 1, 4})});
    for (int axis = 0; axis < 3; ++axis)
        run("outer3 axis " + std::to_string(axis),
            [=](Tape&, const std::vector<Var>& v) { return ad::outer3(v[0], v[1], axis); },
            {rng.tensor({2, 4}), rng.tensor({2, 3, 5})});
    {
        Tensor target = rng.tensor({3, 4, 2});
        Tensor mask({3, 4, 2});
        for (double& m : mask.data) m = rng.uniform(0.0, 1.0) < 0.6 ? 1.0 : 0.0;
        mask.data[0] = 1.0;
        Tensor pred = target;
        // Keep every residual at least 0.1 from the |.| kink.
        for (double& p : pred.data) p += (rng.uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 0.5);
        run("masked_l1", [=](Tape&, const std::vector<Var>& v) { return ad::masked_l1(v[0], target, mask); }, {pred});
    }
    {
        Tensor target = rng.tensor({5});
        run("mse (constant target)", [=](Tape&, const std::vector<Var>& v) { return ad::mse(v[0], target); },
            {rng.tensor({5})});
    }
    run("mse (two inputs)", [](Tape&, const std::vector<Var>& v) { return ad::mse(v[0], v[1]); },
        {rng.tensor({2, 3}), rng.tensor({2, 3})});
    // A small composite graph mixing most ops.
    run("composite", [](Tape&, const std::vector<Var>& v) {
        Var h = ad::relu(ad::conv2d(v[0], v[1], v[2], {2, 1, 1}));
        h = ad::depth_to_space(h, 2, 2);
        Var p = ad::mean_axis(h, 1);
        return ad::scale(ad::add(ad::sum(ad::mul(h, h)), ad::mean(p)), 0.5);
    }, {rng.tensor({2, 8, 8}), rng.tensor({8, 2, 3, 3}), rng.tensor({8}, 0.1, 0.5)});
    return out;
}

namespace {

struct AdjointCase {
    std::string name;
    lighting::LightConfig light;
};

double probe_image(const render::RenderJob& job, const Image& w) {
    const Image img = render::raymarch_render(job);
    double s = 0.0;
    for (std::size_t i = 0; i < img.data.size(); ++i) s += img.data[i] * w.data[i];
    return s;
}

}  // namespace

std::vector<CheckResult> adjoint_suite(std::uint64_t seed) {
    Rng rng{std::mt19937_64(seed)};
    GridSpec grid;
    grid.resolution = 6;
    grid.side = 0.5;
    const Shape3 shape = grid.shape();

    tensor::ScatterField field{DenseGrid(shape), DenseGrid(shape), 25.0};
    for (double& v : field.sigma.values()) v = rng.uniform(0.1, 0.9);
    for (double& v : field.albedo.values()) v = rng.uniform(0.35, 0.9);
    OccupancyMask mask(shape);
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform(0.0, 1.0) < 0.85 ? 1 : 0;

    std::vector<AdjointCase> cases;
    lighting::PointLight p;
    p.intensity = 12.0;
    cases.push_back({"adjoint point colocated", {p}});
    p.slot = lighting::PointLightSlot::left;
    cases.push_back({"adjoint point side", {p}});
    lighting::Environment env;
    env.sh = lighting::preset_environment(0);
    cases.push_back({"adjoint sh environment", {env}});

    std::vector<CheckResult> out;
    for (const auto& c : cases) {
        render::RenderJob job;
        job.field = &field;
        job.mask = &mask;
        job.scene.grid = grid;
        job.scene.rig.resolution = 8;
        job.scene.light = c.light;
        job.view = 1;
        job.quality.env_directions = 12;
        const Image ref = render::raymarch_render(job);
        Image w(ref.width, ref.height, ref.channels);
        for (double& v : w.data) v = rng.uniform(-1.0, 1.0);
        const render::FieldGradient g = render::raymarch_adjoint(job, w);

        std::vector<double> analytic, numeric;
        const double h = kAdjointStep;
        const auto fd = [&](double& slot) {
            const double keep = slot;
            slot = keep + h;
            const double fp = probe_image(job, w);
            slot = keep - h;
            const double fm = probe_image(job, w);
            slot = keep;
            return (fp - fm) / (2 * h);
        };
        std::vector<std::size_t> idx(shape.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::shuffle(idx.begin(), idx.end(), rng.gen);
        idx.resize(40);
        for (std::size_t i : idx) {
            analytic.push_back(g.sigma[i]);
            numeric.push_back(fd(field.sigma[i]));
            analytic.push_back(g.albedo[i]);
            numeric.push_back(fd(field.albedo[i]));
        }
        analytic.push_back(g.scale);
        numeric.push_back(fd(field.scale));
        CheckResult r{c.name, max_relative_error(analytic, numeric), kAdjointTolerance, int(analytic.size()), false};
        r.pass = r.max_rel_error <= r.tolerance;
        out.push_back(r);
    }
    return out;
}

}  // namespace hscat::gradcheck
