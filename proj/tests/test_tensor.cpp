#include <doctest.h>

#include <cmath>
#include <random>

#include "hscat/noise.hpp"
#include "hscat/tensor.hpp"

using namespace hscat;
using namespace hscat::tensor;

namespace {

VMDecomposition random_vm(int rank, Shape3 s, std::uint64_t seed) {
    VMDecomposition vm(rank, s);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto* v : {&vm.vx, &vm.vy, &vm.vz, &vm.m_yz, &vm.m_xz, &vm.m_xy})
        for (double& x : *v) x = n(rng);
    return vm;
}

// Triple-loop oracle written directly from the component layout.
double brute(const VMDecomposition& vm, int i, int j, int k) {
    const int I = vm.shape.i, J = vm.shape.j, K = vm.shape.k;
    double t = 0.0;
    for (int r = 0; r < vm.rank; ++r) {
        t += vm.vx[std::size_t(r * I + i)] * vm.m_yz[std::size_t((r * J + j) * K + k)];
        t += vm.vy[std::size_t(r * J + j)] * vm.m_xz[std::size_t((r * I + i) * K + k)];
        t += vm.vz[std::size_t(r * K + k)] * vm.m_xy[std::size_t((r * I + i) * J + j)];
    }
    return t;
}

}  // namespace

TEST_CASE("reconstruct examples") {
    const Shape3 s{4, 3, 5};
    VMDecomposition vm(1, s);
    vm.vx[0] = 1.0;
    std::fill(vm.m_yz.begin(), vm.m_yz.end(), 1.0);
    const DenseGrid g = reconstruct(vm, s);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 5; ++k) CHECK(g(i, j, k) == (i == 0 ? 1.0 : 0.0));

    const DenseGrid z = reconstruct(VMDecomposition(3, s), s);
    for (double v : z.values()) CHECK(v == 0.0);
    CHECK_THROWS_AS(reconstruct(vm, Shape3{4, 3, 4}), ShapeError);
}

TEST_CASE("reconstruct matches the brute-force sum") {
    const Shape3 s{6, 7, 5};
    const VMDecomposition vm = random_vm(4, s, 12);
    const DenseGrid g = reconstruct(vm, s);
    for (int i = 0; i < s.i; ++i)
        for (int j = 0; j < s.j; ++j)
            for (int k = 0; k < s.k; ++k) CHECK(g(i, j, k) == doctest::Approx(brute(vm, i, j, k)).epsilon(1e-13));
}

TEST_CASE("reconstruct is linear") {
    const Shape3 s{5, 5, 5};
    const VMDecomposition a = random_vm(3, s, 1), b = random_vm(3, s, 2);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int n = 0; n < 5; ++n) {
        const double x = u(rng), y = u(rng);
        const DenseGrid lhs = reconstruct(VMDecomposition::lincomb(x, a, y, b), s);
        const DenseGrid ga = reconstruct(a, s), gb = reconstruct(b, s);
        for (std::size_t m = 0; m < lhs.size(); ++m)
            CHECK(lhs[m] == doctest::Approx(x * ga[m] + y * gb[m]).epsilon(1e-12));
    }
}

TEST_CASE("compression ratio") {
    CHECK(compression_ratio(10, Shape3::cube(64)) == doctest::Approx(124800.0 / 262144.0).epsilon(1e-15));
    CHECK(std::round(compression_ratio(10, Shape3::cube(64)) * 1000) / 1000 == 0.476);
    CHECK(compression_ratio(10, Shape3::cube(32)) == doctest::Approx((960.0 + 30720.0) / 32768.0).epsilon(1e-15));
    CHECK(compression_ratio(1, Shape3::cube(2)) == 2.25);
    const VMDecomposition vm(10, Shape3::cube(64));
    CHECK(vm.parameter_count() == 124800);
    CHECK(compression_ratio(vm, Shape3::cube(64)) == compression_ratio(10, Shape3::cube(64)));
}

TEST_CASE("fit recovers planted decompositions") {
    const Shape3 s{8, 8, 8};
    for (int r0 = 1; r0 <= 3; ++r0)
        for (std::uint64_t seed = 0; seed < 4; ++seed) {
            const DenseGrid t = reconstruct(random_vm(r0, s, 300 + seed), s);
            CHECK(fit_vm(t, r0, 50, seed).relative_errors.back() <= 1e-6);
        }
    const DenseGrid target = reconstruct(random_vm(2, s, 21), s);
    const FitResult fit = fit_vm(target, 3, 50, 5);
    CHECK(fit.relative_errors.size() == 50);
    CHECK(fit.relative_errors.back() <= 1e-6);
    CHECK(relative_error(target, reconstruct(fit.vm, s)) <= 1e-6);
}

TEST_CASE("fit error is non-increasing per sweep") {
    const DenseGrid g = noise::synth_sigma_field(noise::default_spec(16, 3));
    const FitResult fit = fit_vm(g, 5, 20, 1);
    for (std::size_t n = 1; n < fit.relative_errors.size(); ++n)
        CHECK(fit.relative_errors[n] <= fit.relative_errors[n - 1] + 1e-12);
}

TEST_CASE("zero grid fits exactly") {
    const DenseGrid z(Shape3::cube(6), 0.0);
    const FitResult fit = fit_vm(z, 2, 10, 0);
    CHECK(fit.relative_errors.front() == 0.0);
    const DenseGrid rec = reconstruct(fit.vm, z.shape());
    for (double v : rec.values()) CHECK(v == 0.0);
}

TEST_CASE("fit error decreases with rank on a Perlin grid") {
    const DenseGrid g = noise::synth_sigma_field(noise::default_spec(16, 8));
    double prev = 1e9;
    for (int r : {1, 5, 10}) {
        const double e = fit_vm(g, r, 25, 2).relative_errors.back();
        CHECK(e <= prev);
        prev = e;
    }
}

TEST_CASE("refitting a fit is a projection") {
    const DenseGrid g = noise::synth_albedo_field(noise::default_spec(12, 4));
    const FitResult first = fit_vm(g, 3, 40, 7);
    const DenseGrid rec = reconstruct(first.vm, g.shape());
    const FitResult second = fit_vm(rec, 3, 40, 7);
    CHECK(second.relative_errors.back() < 1e-6);
    CHECK(std::abs(relative_error(g, reconstruct(second.vm, g.shape())) - first.relative_errors.back()) < 1e-6);
}

TEST_CASE("invalid fit arguments") {
    const DenseGrid g(Shape3::cube(4), 1.0);
    CHECK_THROWS_AS(fit_vm(g, 0, 5, 0), ConfigError);
    CHECK_THROWS_AS(fit_vm(g, 2, 0, 0), ConfigError);
}

TEST_CASE("trilinear sampling") {
    const GridSpec spec{4, 0.5};
    DenseGrid g(spec.shape(), 0.0);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : g.values()) v = u(rng);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 4; ++k) CHECK(sample_trilinear(g, spec.voxel_center(i, j, k), spec) == g(i, j, k));

    DenseGrid h(spec.shape(), 0.0);
    h(2, 1, 1) = 1.0;
    const Vec3 mid = 0.5 * (spec.voxel_center(1, 1, 1) + spec.voxel_center(2, 1, 1));
    CHECK(sample_trilinear(h, mid, spec) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(sample_trilinear(g, {0.3, 0.0, 0.0}, spec) == 0.0);
    CHECK(sample_trilinear(g, {0.0, -0.26, 0.0}, spec) == 0.0);

    // The stencil reproduces the interpolated value.
    for (int n = 0; n < 50; ++n) {
        const Vec3 p{0.5 * u(rng) - 0.25, 0.5 * u(rng) - 0.25, 0.5 * u(rng) - 0.25};
        const TrilinearStencil st = trilinear_stencil(g.shape(), p, spec);
        REQUIRE(st.valid);
        double v = 0.0, w = 0.0;
        for (int c = 0; c < 8; ++c) {
            v += st.weight[c] * g[st.index[c]];
            w += st.weight[c];
        }
        CHECK(w == doctest::Approx(1.0));
        CHECK(v == doctest::Approx(sample_trilinear(g, p, spec)).epsilon(1e-14));
    }
}

TEST_CASE("nearest mask sampling") {
    const GridSpec spec{4, 0.5};
    OccupancyMask m(spec.shape(), 0);
    m(3, 0, 2) = 1;
    CHECK(sample_nearest(m, spec.voxel_center(3, 0, 2), spec) == 1);
    CHECK(sample_nearest(m, spec.voxel_center(2, 0, 2), spec) == 0);
    CHECK(sample_nearest(m, {1.0, 0.0, 0.0}, spec) == 0);
}

TEST_CASE("scatter field validation") {
    ScatterField f{DenseGrid(Shape3::cube(3), 0.5), DenseGrid(Shape3::cube(3), 0.6), 40.0};
    CHECK_NOTHROW(f.validate(kPointDensity));
    f.scale = 100.0;
    CHECK_THROWS_AS(f.validate(kPointDensity), ConfigError);
    CHECK_NOTHROW(f.validate(kEnvDensity));
    f.albedo(0, 0, 0) = 1.2;
    CHECK_THROWS_AS(f.validate(), ConfigError);
    f.albedo = DenseGrid(Shape3::cube(2), 0.6);
    CHECK_THROWS_AS(f.validate(), ConfigError);
    CHECK(kPointDensity.denormalize(kPointDensity.normalize(33.0)) == doctest::Approx(33.0));
}
