#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hscat/image.hpp"
#include "hscat/lighting.hpp"
#include "hscat/noise.hpp"
#include "hscat/render.hpp"
#include "hscat/tensor.hpp"

namespace hscat::dataset {

using json = nlohmann::json;

enum class LightKind { point, env };

// Generation recipe. Every file of a dataset is a pure function of this.
struct DatasetConfig {
    std::string preset = "mini";
    std::vector<std::string> shapes;  // builtin shape names
    int draws = 10;
    std::vector<double> scales;
    LightKind light_kind = LightKind::point;
    GridSpec grid;
    render::CameraRig rig;
    double light_intensity = 1.0;
    render::RenderQuality quality;
    std::uint64_t seed = 0;
    std::vector<int> holdout_draws;

    void validate() const;
    tensor::DensityRange density_range() const;
    json to_json() const;
    static DatasetConfig from_json(const json& j);
};

// 6 shapes x 10 draws x 3 scales x 2 light configs.
DatasetConfig mini_preset(std::uint64_t seed = 0);

struct SampleEntry {
    std::string id;
    std::string shape;
    int draw = 0;
    double scale = 0.0;
    std::string light;    // colocated | left | right | env0 | env1
    int light_index = 0;  // position within the two-light pair
    noise::NoiseSpec sigma_noise;
    noise::NoiseSpec alpha_noise;
    bool holdout = false;
    std::string volume;                // relative paths
    std::array<std::string, 6> views;
    std::array<std::string, 6> masks;  // foreground masks, shared per shape

    json to_json() const;
    static SampleEntry from_json(const json& j);
};

struct Manifest {
    DatasetConfig config;
    std::vector<SampleEntry> samples;
    std::string hash;  // over config and samples

    json to_json() const;
    static Manifest from_json(const json& j);
    std::size_t image_count() const { return samples.size() * render::CameraRig::kViews; }
};

// Pure planning step: entries and paths, no files touched.
Manifest plan(const DatasetConfig& config);
std::string manifest_hash(const Manifest& m);

using Progress = std::function<void(std::size_t done, std::size_t total)>;

// Writes every file plus manifest.json under `root`.
Manifest generate(const DatasetConfig& config, const std::filesystem::path& root,
                  const Progress& progress = {});

// Parses manifest.json and throws IoError on any dangling reference.
Manifest load_manifest(const std::filesystem::path& root);
void check_references(const Manifest& m, const std::filesystem::path& root);

// Recomputes one sample in memory and compares it byte for byte to disk.
struct RegenReport {
    bool identical = true;
    std::vector<std::string> mismatched;  // relative paths that differ
};
RegenReport regenerate_sample(const Manifest& m, const SampleEntry& s, const std::filesystem::path& root);

// Scene used to render a sample.
render::SceneConfig scene_for(const DatasetConfig& config, const SampleEntry& s);
lighting::LightConfig light_for(const DatasetConfig& config, const std::string& light);

// Ground-truth SH for env-lit samples.
std::optional<lighting::SHCoeffs> sample_sh(const DatasetConfig& config, const SampleEntry& s);

// Both light variants of one (shape, draw, scale) triple, loaded for training.
struct PairSample {
    std::string key;
    tensor::ScatterField field;
    OccupancyMask mask;
    std::array<Image, 6> fg;                      // foreground masks
    std::array<std::array<Image, 6>, 2> views;    // [light][view]
    std::array<std::optional<lighting::SHCoeffs>, 2> sh;
    bool holdout = false;
};

std::vector<PairSample> load_pairs(const Manifest& m, const std::filesystem::path& root);

}  // namespace hscat::dataset
