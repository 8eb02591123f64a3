#include <doctest.h>

#include <fstream>
#include <set>

#include "hscat/dataset.hpp"
#include "hscat/error.hpp"
#include "support.hpp"
#include "tiny_data.hpp"

using namespace hscat;
using namespace hscat::dataset;

TEST_CASE("mini preset plan counts") {
    const Manifest m = plan(mini_preset(0));
    CHECK(m.samples.size() == 360);
    CHECK(m.image_count() == 2160);
    std::set<std::string> ids, shapes, lights;
    int holdout = 0;
    for (const auto& s : m.samples) {
        ids.insert(s.id);
        shapes.insert(s.shape);
        lights.insert(s.light);
        holdout += s.holdout;
    }
    CHECK(ids.size() == 360);
    CHECK(shapes.size() == 6);
    CHECK(lights == std::set<std::string>{"colocated", "left", "right"});
    CHECK(holdout == 2 * 6 * 3 * 2);
    for (const auto& s : m.samples) {
        CHECK(s.volume.find("..") == std::string::npos);
        CHECK_FALSE(std::filesystem::path(s.volume).is_absolute());
    }
}

TEST_CASE("empty dataset gives a valid manifest") {
    DatasetConfig c = tiny_config(LightKind::point, 1, 0);
    c.draws = 0;
    c.holdout_draws.clear();
    TempDir dir("empty");
    const Manifest m = generate(c, dir.path());
    CHECK(m.samples.empty());
    const Manifest back = load_manifest(dir.path());
    CHECK(back.samples.empty());
    CHECK(back.hash == m.hash);
}

TEST_CASE("manifest hash is stable and sensitive") {
    const DatasetConfig c = mini_preset(3);
    const Manifest a = plan(c), b = plan(c);
    CHECK(a.hash == b.hash);
    CHECK(manifest_hash(a) == a.hash);
    CHECK(Manifest::from_json(a.to_json()).hash == a.hash);
    CHECK(manifest_hash(Manifest::from_json(a.to_json())) == a.hash);
    CHECK(plan(mini_preset(4)).hash != a.hash);
    DatasetConfig d = c;
    d.scales[0] += 1.0;
    CHECK(plan(d).hash != a.hash);
}

TEST_CASE("config round trip and validation") {
    const DatasetConfig c = tiny_config(LightKind::env, 3, 9);
    CHECK(DatasetConfig::from_json(c.to_json()).to_json() == c.to_json());
    DatasetConfig bad = c;
    bad.shapes = {"no_such_shape"};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.scales = {5.0};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.holdout_draws = {7};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("generation, regeneration and references") {
    TempDir dir("gen");
    const DatasetConfig c = tiny_config(LightKind::env, 2, 11);
    const Manifest m = generate(c, dir.path());
    CHECK(m.samples.size() == 2 * 2 * 2 * 2);
    CHECK_NOTHROW(check_references(m, dir.path()));
    const Manifest loaded = load_manifest(dir.path());
    CHECK(loaded.hash == m.hash);

    TempDir again("gen2");
    CHECK(generate(c, again.path()).hash == m.hash);
    for (const auto& s : m.samples) {
        const RegenReport r = regenerate_sample(m, s, dir.path());
        CAPTURE(s.id);
        CHECK(r.identical);
        CHECK(r.mismatched.empty());
        CHECK(sample_sh(c, s).has_value());
    }

    const std::vector<PairSample> pairs = load_pairs(m, dir.path());
    CHECK(pairs.size() == m.samples.size() / 2);
    for (const auto& p : pairs) {
        CHECK(p.sh[0].has_value());
        CHECK(p.views[0][0].channels == 3);
        CHECK_FALSE(p.views[0][0].data == p.views[1][0].data);
    }

    // Flip one byte of a view: regeneration notices exactly that file.
    const SampleEntry& s = m.samples[1];
    const auto view = dir / s.views[2];
    std::string bytes;
    {
        std::ifstream in(view, std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    bytes[bytes.size() - 3] ^= 0x01;
    std::ofstream(view, std::ios::binary | std::ios::trunc) << bytes;
    const RegenReport r = regenerate_sample(m, s, dir.path());
    CHECK_FALSE(r.identical);
    REQUIRE(r.mismatched.size() == 1);
    CHECK(r.mismatched[0] == s.views[2]);

    std::filesystem::remove(dir / m.samples[0].volume);
    CHECK_THROWS_AS(check_references(m, dir.path()), IoError);
    CHECK_THROWS_AS(load_manifest(dir.path()), IoError);
}

TEST_CASE("point light samples carry no SH") {
    const DatasetConfig c = tiny_config(LightKind::point, 2, 1);
    const Manifest m = plan(c);
    for (const auto& s : m.samples) {
        CHECK_FALSE(sample_sh(c, s).has_value());
        CHECK(scene_for(c, s).light.is_point());
        CHECK(s.light == (s.light_index == 0 ? "colocated" : (s.draw % 2 == 0 ? "left" : "right")));
    }
}
