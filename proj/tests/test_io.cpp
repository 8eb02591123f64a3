#include <doctest.h>

#include <cstring>
#include <random>

#include "hscat/io.hpp"
#include "hscat/noise.hpp"
#include "support.hpp"

using namespace hscat;
using namespace hscat::io;

namespace {

DenseGrid random_grid(Shape3 s, std::uint64_t seed, bool float_values) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    DenseGrid g(s);
    for (double& v : g.values()) v = float_values ? double(float(u(rng))) : u(rng);
    return g;
}

}  // namespace

TEST_CASE("CRC32 reference value") {
    const char* s = "123456789";
    CHECK(crc32(s, std::strlen(s)) == 0xCBF43926u);
}

TEST_CASE("container round trips are bit exact") {
    const DenseGrid g32 = random_grid(Shape3::cube(32), 1, true);
    const DenseGrid g64 = random_grid(Shape3{3, 4, 5}, 2, false);
    OccupancyMask m(Shape3{3, 4, 5}, 0);
    m(1, 2, 3) = 1;
    Container c;
    c.meta["role"] = "test";
    c.meta["seed"] = 42;
    c.add(grid_array("a", g32));
    c.add(grid_array("b", g64, DType::f64));
    c.add(mask_array("m", m));
    const std::string bytes = encode(c);
    CHECK(bytes.substr(0, 4) == "HSCT");
    const Container back = decode(bytes);
    CHECK(back.meta == c.meta);
    CHECK(array_grid(back.get("a")) == g32);
    CHECK(array_grid(back.get("b")) == g64);
    CHECK(array_mask(back.get("m")) == m);
    CHECK(encode(back) == bytes);
    CHECK_FALSE(back.has("c"));
    CHECK_THROWS_AS(back.get("c"), IoError);
}

TEST_CASE("f32 storage rounds to float") {
    DenseGrid g(Shape3::cube(2), 0.1);
    Container c;
    c.add(grid_array("g", g));
    const DenseGrid back = array_grid(decode(encode(c)).get("g"));
    CHECK(back[0] == double(0.1f));
}

TEST_CASE("corruption and truncation are detected") {
    Container c;
    c.add(grid_array("a", random_grid(Shape3::cube(8), 3, true)));
    const std::string bytes = encode(c);
    std::string bad = bytes;
    bad[bad.size() - 100] ^= 0x01;
    CHECK_THROWS_AS(decode(bad), IoError);
    CHECK_THROWS_AS(decode(bytes.substr(0, bytes.size() - 9)), IoError);
    std::string magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_AS(decode(magic), IoError);
    CHECK_THROWS_AS(decode(""), IoError);
}

TEST_CASE("version compatibility") {
    Container c;
    c.meta["x"] = 1;
    c.add(grid_array("a", random_grid(Shape3::cube(2), 4, true)));
    CHECK(decode(encode(c, 7)).meta["x"] == 1);
    std::string bytes = encode(c);
    // Major version lives in the high half of the little-endian u32 after the magic.
    bytes[6] = 2;
    CHECK_THROWS_AS(decode(bytes), IoError);
}

TEST_CASE("volume files") {
    TempDir dir("vol");
    VolumeFile v;
    v.field = {random_grid(Shape3::cube(6), 5, true), DenseGrid(Shape3::cube(6), 0.5), 33.0};
    for (double& x : v.field.sigma.values()) x = std::abs(x) / 2.0;
    v.mask = OccupancyMask(Shape3::cube(6), 1);
    v.provenance["noise"] = noise_spec_json(noise::default_spec(6, 9));
    write_volume(dir / "sub/v.hsct", v);
    const VolumeFile back = read_volume(dir / "sub/v.hsct");
    CHECK(back.field.sigma == v.field.sigma);
    CHECK(back.field.albedo == v.field.albedo);
    CHECK(back.field.scale == 33.0);
    CHECK(back.mask == v.mask);
    CHECK(noise_spec_from_json(back.provenance["noise"]) == noise::default_spec(6, 9));
    CHECK_THROWS_AS(read_volume(dir / "missing.hsct"), IoError);
}

TEST_CASE("VM and SH containers") {
    tensor::VMDecomposition vm(2, Shape3{3, 4, 5});
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto* p : {&vm.vx, &vm.vy, &vm.vz, &vm.m_yz, &vm.m_xz, &vm.m_xy})
        for (double& x : *p) x = double(float(u(rng)));
    CHECK(container_vm(decode(encode(vm_container(vm, "sigma")))) == vm);

    lighting::SHCoeffs sh = lighting::preset_environment(1);
    CHECK(container_sh(decode(encode(sh_container(sh)))) == sh);
}

TEST_CASE("mask arrays reject non-binary values") {
    Array a{"m", {1, 1, 2}, DType::u8, {0.0, 2.0}};
    CHECK_THROWS_AS(array_mask(a), IoError);
}

TEST_CASE("PFM and PNG images") {
    TempDir dir("img");
    Image img(5, 3, 3);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : img.data) v = double(float(u(rng)));
    write_pfm(dir / "a.pfm", img);
    CHECK(read_pfm(dir / "a.pfm") == img);
    Image gray(4, 4, 1, 0.25);
    gray.at(0, 0, 3) = 2.0;
    write_pfm(dir / "g.pfm", gray);
    CHECK(read_pfm(dir / "g.pfm") == gray);
    // PFM rows run bottom to top, so the top row is stored last.
    const std::string raw = read_file(dir / "g.pfm");
    float first;
    std::memcpy(&first, raw.data() + raw.size() - 4 * 4 + 4 * 3, 4);
    CHECK(first == 2.0f);

    write_png(dir / "a.png", img);
    const Image png = read_png(dir / "a.png");
    CHECK(png.same_layout(img));
    for (std::size_t n = 0; n < img.data.size(); ++n) {
        // One 8-bit code step after gamma encoding.
        const double lo = std::pow(std::max(0.0, std::pow(img.data[n], 1 / 2.2) - 1.0 / 255), 2.2);
        const double hi = std::pow(std::min(1.0, std::pow(img.data[n], 1 / 2.2) + 1.0 / 255), 2.2);
        CHECK(png.data[n] >= lo - 1e-12);
        CHECK(png.data[n] <= hi + 1e-12);
    }
    write_file(dir / "bad.pfm", "P7\n1 1\n-1\n");
    CHECK_THROWS_AS(read_pfm(dir / "bad.pfm"), IoError);
}

TEST_CASE("hash is stable") {
    CHECK(hash_hex("") == "cbf29ce484222325");
    CHECK(hash_hex("a") == "af63dc4c8601ec8c");
    CHECK(hash_hex("abc").size() == 16);
}
