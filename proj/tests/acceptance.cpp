// Acceptance run: one PASS/FAIL line per criterion, with measured values.
// Exit status is non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "hscat/autodiff.hpp"
#include "hscat/dataset.hpp"
#include "hscat/defaults.hpp"
#include "hscat/gradcheck.hpp"
#include "hscat/inverse_opt.hpp"
#include "hscat/metrics.hpp"
#include "hscat/noise.hpp"
#include "hscat/render.hpp"
#include "hscat/tensois.hpp"
#include "hscat/tensor.hpp"
#include "scene_util.hpp"

using namespace hscat;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), f, args...);
    return buf;
}

int failures = 0;

void report(int id, const char* title, double budget_s, const std::function<Outcome()>& body) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = since(t0);
    const bool in_time = secs < budget_s;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("%s %2d %s | %s | %.1f s (budget %.0f s%s)\n", pass ? "PASS" : "FAIL", id, title, o.detail.c_str(), secs,
                budget_s, in_time ? "" : ", exceeded");
    std::fflush(stdout);
}

tensor::VMDecomposition random_vm(int rank, Shape3 s, std::mt19937_64& rng) {
    tensor::VMDecomposition vm(rank, s);
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto* v : {&vm.vx, &vm.vy, &vm.vz, &vm.m_yz, &vm.m_xz, &vm.m_xy})
        for (double& x : *v) x = n(rng);
    return vm;
}

double brute(const tensor::VMDecomposition& vm, int i, int j, int k) {
    const int I = vm.shape.i, J = vm.shape.j, K = vm.shape.k;
    double t = 0.0;
    for (int r = 0; r < vm.rank; ++r) {
        t += vm.vx[std::size_t(r * I + i)] * vm.m_yz[std::size_t((r * J + j) * K + k)];
        t += vm.vy[std::size_t(r * J + j)] * vm.m_xz[std::size_t((r * I + i) * K + k)];
        t += vm.vz[std::size_t(r * K + k)] * vm.m_xy[std::size_t((r * I + i) * J + j)];
    }
    return t;
}

Outcome compression_ratio() {
    const double r = tensor::compression_ratio(10, Shape3::cube(64));
    const double rounded = std::round(r * 1000.0) / 1000.0;
    return {rounded == 0.476 && r == 124800.0 / 262144.0, fmt("ratio %.6f (%.1f%%)", r, 100.0 * r)};
}

Outcome reconstruct_oracle() {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> side(8, 16), rank(1, 12);
    double worst = 0.0;
    for (int n = 0; n < 100; ++n) {
        const Shape3 s{side(rng), side(rng), side(rng)};
        const tensor::VMDecomposition vm = random_vm(rank(rng), s, rng);
        const DenseGrid g = tensor::reconstruct(vm, s);
        double err = 0.0, scale = 0.0;
        for (int i = 0; i < s.i; ++i)
            for (int j = 0; j < s.j; ++j)
                for (int k = 0; k < s.k; ++k) {
                    const double b = brute(vm, i, j, k);
                    err = std::max(err, std::abs(g(i, j, k) - b));
                    scale = std::max(scale, std::abs(b));
                }
        worst = std::max(worst, err / scale);
    }
    return {worst <= 1e-12, fmt("max relative error %.2e over 100 decompositions", worst)};
}

Outcome noise_contract() {
    double lo = 0.0, hi = 0.0;
    bool nodes_zero = true, identical = true;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const noise::NoiseSpec spec{64, 5, 2, seed};
        spec.validate();
        std::mt19937_64 rng(seed + 100);
        std::uniform_real_distribution<double> u(0.0, 64.0);
        std::uint64_t h1 = 1469598103934665603ULL;
        std::vector<Vec3> pts(1000000);
        for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
        for (const auto& p : pts) {
            const double v = noise::fractal_perlin3(p, spec);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            h1 = (h1 ^ bits) * 1099511628211ULL;
        }
        std::uint64_t h2 = 1469598103934665603ULL;
        for (const auto& p : pts) {
            const double v = noise::fractal_perlin3(p, spec);
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            h2 = (h2 ^ bits) * 1099511628211ULL;
        }
        identical = identical && h1 == h2;
        // The coarsest lattice (period 16 voxels) is contained in every finer one.
        for (int i = 0; i <= 64; i += 16)
            for (int j = 0; j <= 64; j += 16)
                for (int k = 0; k <= 64; k += 16)
                    nodes_zero = nodes_zero && noise::fractal_perlin3({double(i), double(j), double(k)}, spec) == 0.0;
    }
    const bool in_range = lo >= -1.0 && hi <= 1.0;
    return {in_range && nodes_zero && identical,
            fmt("range [%.4f, %.4f], shared nodes zero: %s, bit-identical: %s", lo, hi, nodes_zero ? "yes" : "no",
                identical ? "yes" : "no")};
}

Outcome beer_lambert() {
    const int n = 16;
    const tensor::ScatterField f{DenseGrid(Shape3::cube(n), 0.5), DenseGrid(Shape3::cube(n), 0.6), 20.0};
    const OccupancyMask full(Shape3::cube(n), 1);
    const GridSpec g{n, 0.5};
    double march_err = 0.0;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (int r = 0; r < 50; ++r) {
        const double y = u(rng), z = u(rng);
        const render::Ray ray{{1.0, y, z}, {-1.0, 0.0, 0.0}};
        const double exact = std::exp(-20.0 * 0.5 * 0.5);
        march_err = std::max(march_err, std::abs(render::transmittance_march(f, full, g, ray, 256) - exact));
    }

    // Purely absorbing medium under a unit environment: each pixel is T.
    const int m = 8;
    const tensor::ScatterField a{DenseGrid(Shape3::cube(m), 1.0), DenseGrid(Shape3::cube(m), 0.0), 4.0};
    const OccupancyMask am(Shape3::cube(m), 1);
    lighting::SHCoeffs c{};
    for (auto& row : c.c) row[0] = 1.0 / 0.28209479177387814;
    render::RenderJob job;
    job.field = &a;
    job.mask = &am;
    job.scene.grid = GridSpec{m, 0.5};
    job.scene.rig.resolution = 8;
    job.scene.light = {lighting::Environment{c, std::nullopt}};
    job.view = 1;
    job.quality.spp = 4096;
    job.quality.seed = 11;
    const render::McResult r = render::mc_render(job);
    const render::Camera cam = job.scene.rig.camera(1);
    double sum = 0.0, exact = 0.0, var = 0.0;
    int within = 0;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            const render::Interval iv = render::clip_to_bounds(cam.primary(x, y), job.scene.grid, 1e9);
            const double T = iv.empty() ? 1.0 : std::exp(-4.0 * (iv.t1 - iv.t0));
            const double se = r.std_error.at(0, y, x);
            within += std::abs(r.image.at(0, y, x) - T) <= 3.0 * se + 1e-12;
            sum += r.image.at(0, y, x);
            exact += T;
            var += se * se;
        }
    const double mean_dev = std::abs(sum - exact) / std::sqrt(var);
    return {march_err <= 1e-4 && mean_dev <= 3.0,
            fmt("march max error %.2e; mc image mean off by %.2f SE, %d/64 pixels within 3 SE", march_err, mean_dev,
                within)};
}

Outcome gradient_suites() {
    int total = 0, passed = 0;
    double worst_ad = 0.0, worst_adj = 0.0;
    bool tolerances_ok = true;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        for (const auto& r : gradcheck::autodiff_suite(seed)) {
            ++total;
            passed += r.pass;
            worst_ad = std::max(worst_ad, r.max_rel_error);
            tolerances_ok = tolerances_ok && r.tolerance <= 1e-4;
        }
    }
    for (std::uint64_t seed : {5u, 6u}) {
        for (const auto& r : gradcheck::adjoint_suite(seed)) {
            ++total;
            passed += r.pass;
            worst_adj = std::max(worst_adj, r.max_rel_error);
            tolerances_ok = tolerances_ok && r.tolerance <= 1e-3;
        }
    }
    return {passed == total && tolerances_ok,
            fmt("%d/%d checks; worst autodiff %.2e (tol 1e-4), worst adjoint %.2e (tol 1e-3)", passed, total,
                worst_ad, worst_adj)};
}

// Single pair at the default 32^3 / 64^2 desk scale.
Outcome overfit(const fs::path& work) {
    dataset::DatasetConfig c = dataset::mini_preset(77);
    c.preset = "overfit";
    c.shapes = {"blob"};
    c.draws = 1;
    c.scales = {44.0};
    c.holdout_draws.clear();
    const dataset::Manifest m = dataset::generate(c, work / "overfit");
    const std::vector<dataset::PairSample> pairs = dataset::load_pairs(m, work / "overfit");
    const std::vector<const dataset::PairSample*> one{&pairs.at(0)};
    tensois::Model model(tensois::config_for(c, 1));
    const dataset::PairSample& p = pairs.at(0);
    // L_vol on the light the run trains on.
    auto vol = [&] {
        ad::Tape tape;
        return tensois::loss_single(model, tensois::forward(model, tape, p.views[0], p.fg), {&p.field, &p.mask, p.sh[0]})
            .vol;
    };
    const double initial = vol();
    tensois::TrainConfig tc;
    tc.lr = defaults::kDeskLearningRate;
    tc.batch = 1;
    tc.epochs = 500;
    tc.multi_light = false;
    const tensois::TrainResult r = tensois::train(model, one, {}, tc);
    const double after = vol();
    return {r.steps == 500 && after < 0.1 * initial,
            fmt("L_vol %.4f -> %.4f after %ld steps (%.1f%% of initial)", initial, after, r.steps,
                100.0 * after / initial)};
}

struct MiniData {
    dataset::Manifest manifest;
    std::vector<dataset::PairSample> pairs;
    std::vector<const dataset::PairSample*> train, holdout;
    double gen_seconds = 0.0;
};

Outcome mini_training(const fs::path& root, MiniData& data) {
    const auto t0 = Clock::now();
    data.manifest = dataset::generate(dataset::mini_preset(0), root);
    data.gen_seconds = since(t0);
    data.pairs = dataset::load_pairs(data.manifest, root);
    for (const auto& p : data.pairs) (p.holdout ? data.holdout : data.train).push_back(&p);

    const tensois::ModelConfig mc = tensois::config_for(data.manifest.config, 3);
    tensois::Model untrained(mc);
    const tensois::EvalResult base = tensois::evaluate(untrained, data.holdout);

    auto run = [&](double lambda) {
        tensois::Model model(mc);
        tensois::TrainConfig tc;
        tc.lr = defaults::kDeskLearningRate;
        tc.lambda = lambda;
        tc.epochs = 10;
        tc.seed = 1;
        tensois::train(model, data.train, {}, tc);
        return tensois::evaluate(model, data.holdout);
    };
    const tensois::EvalResult reg = run(defaults::kLambdaReg);
    const tensois::EvalResult plain = run(0.0);

    const double ds = 1.0 - reg.sigma_l1 / base.sigma_l1, da = 1.0 - reg.alpha_l1 / base.alpha_l1;
    const double ds0 = 1.0 - plain.sigma_l1 / base.sigma_l1, da0 = 1.0 - plain.alpha_l1 / base.alpha_l1;
    const bool pass = data.manifest.samples.size() == 360 && ds >= 0.3 && da >= 0.3 && reg.vol <= plain.vol;
    return {pass, fmt("%zu samples (generated in %.0f s); held-out sigma L1 %.4f -> %.4f (-%.1f%%), alpha L1 %.4f -> "
                      "%.4f (-%.1f%%); lambda=0 run: -%.1f%% / -%.1f%%; held-out L_vol %.4f with L_reg vs %.4f without",
                      data.manifest.samples.size(), data.gen_seconds, base.sigma_l1, reg.sigma_l1, 100.0 * ds,
                      base.alpha_l1, reg.alpha_l1, 100.0 * da, 100.0 * ds0, 100.0 * da0, reg.vol, plain.vol)};
}

Outcome ambiguity() {
    std::string detail;
    bool pass = true;
    for (int grid : {8, 16}) {
        const SmallScene s = make_small_scene(grid, 32, "blob", 7);
        inverse_opt::OptimConfig cfg;
        cfg.steps = defaults::kOptimSteps;
        int reached = -1;
        double initial = 0.0;
        const inverse_opt::OptimResult r =
            inverse_opt::optimize_scene(s.views, s.mask, s.scene, cfg, [&](const inverse_opt::TracePoint& t) {
                if (t.step == 0) initial = t.image_mse;
                if (reached < 0 && t.image_mse <= 0.01 * initial) reached = t.step;
            });
        const double mae_s = metrics::masked_mae(r.field.sigma, s.field.sigma, s.mask);
        const double mae_a = metrics::masked_mae(r.field.albedo, s.field.albedo, s.mask);
        const bool ok = r.final_mse <= 0.01 * r.initial_mse;
        pass = pass && ok;
        detail += fmt("%s%d^3: image MSE %.2e -> %.2e (%.3f%%, 1%% at step %d), volume MAE sigma %.3f alpha %.3f, "
                      "scale %.1f vs %.1f",
                      detail.empty() ? "" : "; ", grid, r.initial_mse, r.final_mse,
                      100.0 * r.final_mse / r.initial_mse, reached, mae_s, mae_a, r.field.scale, s.field.scale);
    }
    return {pass, detail};
}

Outcome metric_sanity() {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n01(0.0, 1.0);
    double id_err = 0.0, sym_err = 0.0;
    bool decreasing = true;
    for (int trial = 0; trial < 5; ++trial) {
        Image a(64, 64, 3), b(64, 64, 3);
        const double fx = 1.0 + 5.0 * u(rng), fy = 1.0 + 5.0 * u(rng);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 64; ++y)
                for (int x = 0; x < 64; ++x) {
                    a.at(c, y, x) = 0.5 + 0.3 * std::sin(fx * x * 0.1 + c) * std::cos(fy * y * 0.1) + 0.05 * u(rng);
                    b.at(c, y, x) = u(rng);
                }
        id_err = std::max(id_err, std::abs(metrics::ms_ssim(a, a) - 1.0));
        sym_err = std::max(sym_err, std::abs(metrics::ms_ssim(a, b) - metrics::ms_ssim(b, a)));
        double prev = 1.0;
        for (double sigma : {0.01, 0.05, 0.1}) {
            Image noisy = a;
            std::mt19937_64 nrng(100 + trial);
            for (double& v : noisy.data) v += sigma * n01(nrng);
            const double v = metrics::ms_ssim(a, noisy);
            decreasing = decreasing && v < prev;
            prev = v;
        }
    }

    // Pad with unmasked garbage.
    const Shape3 s{6, 5, 4}, big{9, 8, 7};
    DenseGrid p(s), g(s), pb(big, 0.0), gb(big, 0.0);
    OccupancyMask m(s, 0), mb(big, 0);
    for (int i = 0; i < big.i; ++i)
        for (int j = 0; j < big.j; ++j)
            for (int k = 0; k < big.k; ++k) {
                pb(i, j, k) = 10.0 * u(rng);
                gb(i, j, k) = -10.0 * u(rng);
            }
    for (int i = 0; i < s.i; ++i)
        for (int j = 0; j < s.j; ++j)
            for (int k = 0; k < s.k; ++k) {
                p(i, j, k) = pb(i, j, k) = u(rng);
                g(i, j, k) = gb(i, j, k) = u(rng);
                m(i, j, k) = mb(i, j, k) = u(rng) < 0.6;
            }
    const double mae_d = std::abs(metrics::masked_mae(p, g, m) - metrics::masked_mae(pb, gb, mb));
    const double mse_d = std::abs(metrics::masked_mse(p, g, m) - metrics::masked_mse(pb, gb, mb));
    const bool pass = id_err <= 1e-9 && sym_err < 1e-12 && decreasing && mae_d <= 1e-14 && mse_d <= 1e-14;
    return {pass, fmt("|ms_ssim(x,x)-1| %.1e, asymmetry %.1e, strictly decreasing: %s, padding change %.1e / %.1e",
                      id_err, sym_err, decreasing ? "yes" : "no", mae_d, mse_d)};
}

Outcome provenance(const fs::path& root, const MiniData& data) {
    if (data.manifest.samples.empty()) return {false, "mini dataset unavailable"};
    const dataset::Manifest m = dataset::load_manifest(root);
    if (m.hash != data.manifest.hash) return {false, "manifest hash changed on reload"};
    std::mt19937_64 rng(10);
    std::vector<std::size_t> idx(m.samples.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(24);
    int identical = 0;
    for (std::size_t i : idx) identical += dataset::regenerate_sample(m, m.samples[i], root).identical;
    const bool plan_same = dataset::plan(m.config).hash == m.hash;
    return {identical == int(idx.size()) && plan_same,
            fmt("%d/%zu randomly chosen samples regenerated bit-exactly; re-planned manifest hash %s", identical,
                idx.size(), plan_same ? "matches" : "differs")};
}

}  // namespace

int main() {
    const fs::path work = fs::temp_directory_path() / ("hscat_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(work);
    MiniData mini;

    report(1, "compression ratio R=10 at 64^3", 1, compression_ratio);
    report(2, "reconstruct vs triple-loop oracle", 10, reconstruct_oracle);
    report(3, "fractal noise contract", 30, noise_contract);
    report(4, "Beer-Lambert march and MC transmittance", 120, beer_lambert);
    report(5, "autodiff and adjoint gradient suites", 300, gradient_suites);
    report(6, "single-sample overfit at 32^3 / 64^2", 600, [&] { return overfit(work); });
    report(7, "mini-dataset training signal", 7200, [&] { return mini_training(work / "mini", mini); });
    report(8, "image fit vs parameter fit", 900, ambiguity);
    report(9, "metric sanity", 30, metric_sanity);
    report(10, "dataset regeneration is bit-exact", 60, [&] { return provenance(work / "mini", mini); });

    std::error_code ec;
    fs::remove_all(work, ec);
    std::printf("%s: %d of 10 criteria failed\n", failures ? "FAILED" : "ALL PASSED", failures);
    return failures ? 1 : 0;
}
