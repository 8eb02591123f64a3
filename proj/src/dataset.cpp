#include "hscat/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "hscat/defaults.hpp"
#include "hscat/geometry.hpp"
#include "hscat/io.hpp"

namespace hscat::dataset {

namespace fs = std::filesystem;

namespace {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::size_t shape, int draw, int channel) {
    std::uint64_t h = mix64(seed);
    h = mix64(h ^ shape);
    h = mix64(h ^ std::uint64_t(draw));
    return mix64(h ^ std::uint64_t(channel));
}

std::string scale_tag(double s) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", s);
    return buf;
}

const char* kind_name(LightKind k) { return k == LightKind::point ? "point" : "env"; }

LightKind kind_from_name(const std::string& s) {
    if (s == "point") return LightKind::point;
    if (s == "env") return LightKind::env;
    throw ConfigError("unknown light kind '" + s + "'");
}

// The two light configurations of a draw: colocated plus one side light,
// alternating left/right with draw parity; env mode uses the two presets.
std::array<std::string, 2> light_pair(LightKind kind, int draw) {
    if (kind == LightKind::env) return {"env0", "env1"};
    return {"colocated", draw % 2 == 0 ? "left" : "right"};
}

}  // namespace

void DatasetConfig::validate() const {
    const auto& names = geometry::builtin_shape_names();
    for (const auto& s : shapes)
        if (std::find(names.begin(), names.end(), s) == names.end())
            throw ConfigError("unknown shape '" + s + "'");
    if (draws < 0) throw ConfigError("draws must be >= 0");
    for (int d : holdout_draws)
        if (d < 0 || d >= draws) throw ConfigError("holdout draw " + std::to_string(d) + " out of range");
    grid.validate();
    rig.validate(grid);
    if (!(light_intensity > 0.0)) throw ConfigError("light intensity must be positive");
    const auto range = density_range();
    for (double s : scales)
        if (!range.contains(s)) throw ConfigError("density scale " + scale_tag(s) + " outside the light regime's range");
    noise::default_spec(grid.resolution, 0).validate();
}

tensor::DensityRange DatasetConfig::density_range() const {
    return light_kind == LightKind::point ? tensor::kPointDensity : tensor::kEnvDensity;
}

json DatasetConfig::to_json() const {
    return {{"preset", preset},
            {"shapes", shapes},
            {"draws", draws},
            {"scales", scales},
            {"light_kind", kind_name(light_kind)},
            {"grid", {{"resolution", grid.resolution}, {"side", grid.side}}},
            {"rig", {{"radius", rig.radius}, {"fov_deg", rig.fov_deg}, {"resolution", rig.resolution},
                     {"azimuths_deg", rig.azimuths_deg}}},
            {"light_intensity", light_intensity},
            {"quality", {{"steps_per_voxel", quality.steps_per_voxel}, {"env_directions", quality.env_directions}}},
            {"seed", seed},
            {"holdout_draws", holdout_draws}};
}

DatasetConfig DatasetConfig::from_json(const json& j) {
    DatasetConfig c;
    try {
        c.preset = j.at("preset").get<std::string>();
        c.shapes = j.at("shapes").get<std::vector<std::string>>();
        c.draws = j.at("draws").get<int>();
        c.scales = j.at("scales").get<std::vector<double>>();
        c.light_kind = kind_from_name(j.at("light_kind").get<std::string>());
        c.grid.resolution = j.at("grid").at("resolution").get<int>();
        c.grid.side = j.at("grid").at("side").get<double>();
        const json& r = j.at("rig");
        c.rig.radius = r.at("radius").get<double>();
        c.rig.fov_deg = r.at("fov_deg").get<double>();
        c.rig.resolution = r.at("resolution").get<int>();
        c.rig.azimuths_deg = r.at("azimuths_deg").get<std::array<double, 6>>();
        c.light_intensity = j.at("light_intensity").get<double>();
        c.quality.steps_per_voxel = j.at("quality").at("steps_per_voxel").get<double>();
        c.quality.env_directions = j.at("quality").at("env_directions").get<int>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.holdout_draws = j.at("holdout_draws").get<std::vector<int>>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("dataset config: ") + e.what());
    }
    c.validate();
    return c;
}

DatasetConfig mini_preset(std::uint64_t seed) {
    DatasetConfig c;
    c.preset = "mini";
    c.shapes = geometry::builtin_shape_names();
    c.draws = defaults::kMiniDraws;
    c.scales.assign(defaults::kMiniScales.begin(), defaults::kMiniScales.end());
    c.grid.resolution = defaults::kMiniGrid;
    c.grid.side = defaults::kMiniSide;
    c.rig.resolution = defaults::kMiniImage;
    c.light_intensity = defaults::kMiniLightIntensity;
    c.quality.steps_per_voxel = defaults::kMiniStepsPerVoxel;
    c.quality.env_directions = defaults::kMiniEnvDirections;
    c.seed = seed;
    c.holdout_draws.assign(defaults::kMiniHoldoutDraws.begin(), defaults::kMiniHoldoutDraws.end());
    return c;
}

json SampleEntry::to_json() const {
    return {{"id", id},
            {"shape", shape},
            {"draw", draw},
            {"scale", scale},
            {"light", light},
            {"light_index", light_index},
            {"sigma_noise", io::noise_spec_json(sigma_noise)},
            {"alpha_noise", io::noise_spec_json(alpha_noise)},
            {"holdout", holdout},
            {"volume", volume},
            {"views", views},
            {"masks", masks}};
}

SampleEntry SampleEntry::from_json(const json& j) {
    SampleEntry s;
    s.id = j.at("id").get<std::string>();
    s.shape = j.at("shape").get<std::string>();
    s.draw = j.at("draw").get<int>();
    s.scale = j.at("scale").get<double>();
    s.light = j.at("light").get<std::string>();
    s.light_index = j.at("light_index").get<int>();
    s.sigma_noise = io::noise_spec_from_json(j.at("sigma_noise"));
    s.alpha_noise = io::noise_spec_from_json(j.at("alpha_noise"));
    s.holdout = j.at("holdout").get<bool>();
    s.volume = j.at("volume").get<std::string>();
    s.views = j.at("views").get<std::array<std::string, 6>>();
    s.masks = j.at("masks").get<std::array<std::string, 6>>();
    return s;
}

json Manifest::to_json() const {
    json samples_json = json::array();
    for (const auto& s : samples) samples_json.push_back(s.to_json());
    return {{"format", "hscat-manifest"},
            {"version", 1},
            {"defaults_version", defaults::kDefaultsVersion},
            {"config", config.to_json()},
            {"sample_count", samples.size()},
            {"image_count", image_count()},
            {"samples", samples_json},
            {"hash", hash}};
}

Manifest Manifest::from_json(const json& j) {
    if (j.value("format", "") != "hscat-manifest") throw IoError("not a dataset manifest");
    Manifest m;
    m.config = DatasetConfig::from_json(j.at("config"));
    for (const json& s : j.at("samples")) m.samples.push_back(SampleEntry::from_json(s));
    m.hash = j.at("hash").get<std::string>();
    if (manifest_hash(m) != m.hash) throw IoError("manifest hash does not match its contents");
    return m;
}

std::string manifest_hash(const Manifest& m) {
    json body = {{"config", m.config.to_json()}, {"samples", json::array()}};
    for (const auto& s : m.samples) body["samples"].push_back(s.to_json());
    return io::hash_hex(body.dump());
}

Manifest plan(const DatasetConfig& config) {
    config.validate();
    Manifest m;
    m.config = config;
    for (std::size_t si = 0; si < config.shapes.size(); ++si) {
        const std::string& shape = config.shapes[si];
        for (int d = 0; d < config.draws; ++d) {
            const bool holdout = std::find(config.holdout_draws.begin(), config.holdout_draws.end(), d) !=
                                 config.holdout_draws.end();
            const auto lights = light_pair(config.light_kind, d);
            for (double s : config.scales) {
                const std::string base = shape + "_d" + std::to_string(d) + "_s" + scale_tag(s);
                for (int li = 0; li < 2; ++li) {
                    SampleEntry e;
                    e.id = base + "_" + lights[std::size_t(li)];
                    e.shape = shape;
                    e.draw = d;
                    e.scale = s;
                    e.light = lights[std::size_t(li)];
                    e.light_index = li;
                    e.sigma_noise = noise::default_spec(config.grid.resolution, derive_seed(config.seed, si, d, 0));
                    e.alpha_noise = noise::default_spec(config.grid.resolution, derive_seed(config.seed, si, d, 1));
                    e.holdout = holdout;
                    e.volume = "fields/" + base + ".hsct";
                    for (int v = 0; v < render::CameraRig::kViews; ++v) {
                        e.views[std::size_t(v)] = "views/" + e.id + "_v" + std::to_string(v) + ".pfm";
                        e.masks[std::size_t(v)] = "masks/" + shape + "_v" + std::to_string(v) + ".pfm";
                    }
                    m.samples.push_back(std::move(e));
                }
            }
        }
    }
    m.hash = manifest_hash(m);
    return m;
}

lighting::LightConfig light_for(const DatasetConfig& config, const std::string& light) {
    lighting::LightConfig lc;
    if (light == "env0" || light == "env1") {
        lighting::Environment env;
        env.sh = lighting::preset_environment(light == "env0" ? 0 : 1);
        lc.light = env;
    } else {
        lighting::PointLight p;
        p.slot = lighting::slot_from_name(light);
        p.intensity = config.light_intensity;
        lc.light = p;
    }
    return lc;
}

std::optional<lighting::SHCoeffs> sample_sh(const DatasetConfig& config, const SampleEntry& s) {
    const auto lc = light_for(config, s.light);
    if (lc.is_point()) return std::nullopt;
    return std::get<lighting::Environment>(lc.light).sh;
}

render::SceneConfig scene_for(const DatasetConfig& config, const SampleEntry& s) {
    render::SceneConfig scene;
    scene.grid = config.grid;
    scene.rig = config.rig;
    scene.light = light_for(config, s.light);
    return scene;
}

namespace {

struct ShapeAssets {
    OccupancyMask mask;
    std::array<std::string, 6> fg_bytes;
};

ShapeAssets shape_assets(const DatasetConfig& config, const std::string& shape) {
    const auto mesh = geometry::builtin_shape(shape);
    ShapeAssets a{geometry::occupancy_mask(geometry::grid_sdf(mesh, config.grid)), {}};
    render::SceneConfig scene;
    scene.grid = config.grid;
    scene.rig = config.rig;
    scene.light.light = lighting::PointLight{};
    for (int v = 0; v < render::CameraRig::kViews; ++v)
        a.fg_bytes[std::size_t(v)] = io::encode_pfm(render::foreground_mask(a.mask, scene, v));
    return a;
}

tensor::ScatterField sample_field(const SampleEntry& s) {
    tensor::ScatterField f;
    f.sigma = noise::synth_sigma_field(s.sigma_noise);
    f.albedo = noise::synth_albedo_field(s.alpha_noise);
    f.scale = s.scale;
    return f;
}

io::VolumeFile sample_volume(const SampleEntry& s, const OccupancyMask& mask) {
    io::VolumeFile v{sample_field(s), mask, {}};
    v.provenance = {{"shape", s.shape},
                    {"draw", s.draw},
                    {"sigma_noise", io::noise_spec_json(s.sigma_noise)},
                    {"alpha_noise", io::noise_spec_json(s.alpha_noise)},
                    {"defaults_version", defaults::kDefaultsVersion}};
    return v;
}

std::array<std::string, 6> render_views(const DatasetConfig& config, const SampleEntry& s,
                                        const tensor::ScatterField& field, const OccupancyMask& mask) {
    std::array<std::string, 6> out;
    render::RenderJob job;
    job.field = &field;
    job.mask = &mask;
    job.scene = scene_for(config, s);
    job.quality = config.quality;
    for (int v = 0; v < render::CameraRig::kViews; ++v) {
        job.view = v;
        out[std::size_t(v)] = io::encode_pfm(render::raymarch_render(job));
    }
    return out;
}

}  // namespace

Manifest generate(const DatasetConfig& config, const fs::path& root, const Progress& progress) {
    Manifest m = plan(config);
    fs::create_directories(root);
    std::map<std::string, ShapeAssets> assets;
    std::size_t done = 0;
    for (std::size_t n = 0; n < m.samples.size(); ++n) {
        const SampleEntry& s = m.samples[n];
        auto it = assets.find(s.shape);
        if (it == assets.end()) {
            assets.clear();  // samples are grouped by shape
            it = assets.emplace(s.shape, shape_assets(config, s.shape)).first;
            for (int v = 0; v < render::CameraRig::kViews; ++v)
                io::write_file(root / s.masks[std::size_t(v)], it->second.fg_bytes[std::size_t(v)]);
        }
        const io::VolumeFile vol = sample_volume(s, it->second.mask);
        if (s.light_index == 0) io::write_file(root / s.volume, io::encode_volume(vol));
        const auto views = render_views(config, s, vol.field, vol.mask);
        for (int v = 0; v < render::CameraRig::kViews; ++v)
            io::write_file(root / s.views[std::size_t(v)], views[std::size_t(v)]);
        if (progress) progress(++done, m.samples.size());
    }
    io::write_file(root / "manifest.json", m.to_json().dump(1) + "\n");
    return m;
}

void check_references(const Manifest& m, const fs::path& root) {
    for (const auto& s : m.samples) {
        std::vector<std::string> refs{s.volume};
        refs.insert(refs.end(), s.views.begin(), s.views.end());
        refs.insert(refs.end(), s.masks.begin(), s.masks.end());
        for (const auto& r : refs) {
            if (fs::path(r).is_absolute()) throw IoError("manifest path is not relative: " + r);
            if (!fs::exists(root / r)) throw IoError("dangling manifest reference: " + r);
        }
    }
}

Manifest load_manifest(const fs::path& root) {
    json j;
    try {
        j = json::parse(io::read_file(root / "manifest.json"));
    } catch (const json::parse_error& e) {
        throw IoError(std::string("manifest is not valid JSON: ") + e.what());
    }
    Manifest m = Manifest::from_json(j);
    check_references(m, root);
    return m;
}

RegenReport regenerate_sample(const Manifest& m, const SampleEntry& s, const fs::path& root) {
    RegenReport rep;
    const auto compare = [&](const std::string& rel, const std::string& bytes) {
        if (!fs::exists(root / rel) || io::read_file(root / rel) != bytes) {
            rep.identical = false;
            rep.mismatched.push_back(rel);
        }
    };
    const ShapeAssets a = shape_assets(m.config, s.shape);
    for (int v = 0; v < render::CameraRig::kViews; ++v) compare(s.masks[std::size_t(v)], a.fg_bytes[std::size_t(v)]);
    const io::VolumeFile vol = sample_volume(s, a.mask);
    compare(s.volume, io::encode_volume(vol));
    const auto views = render_views(m.config, s, vol.field, vol.mask);
    for (int v = 0; v < render::CameraRig::kViews; ++v) compare(s.views[std::size_t(v)], views[std::size_t(v)]);
    return rep;
}

std::vector<PairSample> load_pairs(const Manifest& m, const fs::path& root) {
    std::vector<PairSample> out;
    std::map<std::string, std::size_t> index;
    for (const auto& s : m.samples) {
        auto it = index.find(s.volume);
        if (it == index.end()) {
            PairSample p;
            p.key = s.volume;
            const io::VolumeFile v = io::read_volume(root / s.volume);
            p.field = v.field;
            p.mask = v.mask;
            for (int k = 0; k < render::CameraRig::kViews; ++k) p.fg[std::size_t(k)] = io::read_pfm(root / s.masks[std::size_t(k)]);
            p.holdout = s.holdout;
            it = index.emplace(s.volume, out.size()).first;
            out.push_back(std::move(p));
        }
        PairSample& p = out[it->second];
        if (s.light_index < 0 || s.light_index > 1) throw IoError("light_index must be 0 or 1 in " + s.id);
        for (int k = 0; k < render::CameraRig::kViews; ++k)
            p.views[std::size_t(s.light_index)][std::size_t(k)] = io::read_pfm(root / s.views[std::size_t(k)]);
        p.sh[std::size_t(s.light_index)] = sample_sh(m.config, s);
    }
    for (const auto& p : out)
        for (const auto& set : p.views)
            if (set[0].width == 0) throw IoError("incomplete light pair for " + p.key);
    return out;
}

}  // namespace hscat::dataset
