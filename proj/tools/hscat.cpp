// hscat: command-line front end for synthesis, rendering, dataset generation,
// training, inference, per-scene optimization, evaluation and gradient checks.
//
// Exit codes: 0 success, 1 I/O or other failure, 2 invalid configuration,
// 3 numerical failure.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "hscat/dataset.hpp"
#include "hscat/defaults.hpp"
#include "hscat/evaluation.hpp"
#include "hscat/geometry.hpp"
#include "hscat/gradcheck.hpp"
#include "hscat/inverse_opt.hpp"
#include "hscat/io.hpp"
#include "hscat/metrics.hpp"
#include "hscat/noise.hpp"
#include "hscat/parallel.hpp"
#include "hscat/render.hpp"
#include "hscat/tensois.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace hscat;

namespace {

// Flat JSON objects as CLI11 config files. Keys are long option names
// without dashes; values are scalars or arrays.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
        json j = json::object();
        for (const CLI::Option* opt : app->get_options({})) {
            if (opt->get_lnames().empty() || opt->get_configurable() == false) continue;
            const std::string name = opt->get_lnames()[0];
            if (name == "help" || name == "config") continue;
            if (opt->count() > 0) {
                const auto& r = opt->results();
                if (opt->get_type_size() == 0) j[name] = true;
                else if (r.size() == 1) j[name] = scalar(r[0]);
                else {
                    json arr = json::array();
                    for (const auto& s : r) arr.push_back(scalar(s));
                    j[name] = arr;
                }
            } else if (default_also && !opt->get_default_str().empty()) {
                j[name] = scalar(opt->get_default_str());
            }
        }
        return j.dump(2);
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        json j;
        try {
            j = json::parse(input);
        } catch (const json::exception& e) {
            throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
        }
        if (!j.is_object()) throw CLI::ConversionError("config must be a JSON object");
        std::vector<CLI::ConfigItem> items;
        for (auto it = j.begin(); it != j.end(); ++it) {
            CLI::ConfigItem item;
            item.name = it.key();
            if (it->is_array()) {
                for (const auto& v : *it) item.inputs.push_back(text(v));
            } else {
                item.inputs.push_back(text(*it));
            }
            items.push_back(std::move(item));
        }
        return items;
    }

private:
    static std::string text(const json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        return v.dump();
    }
    static json scalar(const std::string& s) {
        try {
            std::size_t pos = 0;
            const double d = std::stod(s, &pos);
            if (pos == s.size()) return json::parse(s, nullptr, false).is_discarded() ? json(d) : json::parse(s);
        } catch (const std::exception&) {
        }
        if (s == "true") return true;
        if (s == "false") return false;
        return s;
    }
};

// Run directory with the resolved config echoed and an INCOMPLETE marker
// that is removed only on success.
class RunDir {
public:
    RunDir(fs::path dir, const std::string& command, const CLI::App* sub) : dir_(std::move(dir)) {
        fs::create_directories(dir_);
        io::write_file(dir_ / "INCOMPLETE", "run did not finish\n");
        resolved_ = json::parse(sub->config_to_str(true, false));
        resolved_["command"] = command;
        resolved_["defaults_version"] = defaults::kDefaultsVersion;
        // Output location and presentation flags do not change results.
        json hashed = resolved_;
        for (const char* key : {"out", "json", "threads", "config"}) hashed.erase(key);
        hash_ = io::hash_hex(hashed.dump());
        resolved_["config_hash"] = hash_;
        io::write_file(dir_ / "config.json", resolved_.dump(2) + "\n");
    }
    void finish() { fs::remove(dir_ / "INCOMPLETE"); }
    const fs::path& path() const { return dir_; }
    const std::string& hash() const { return hash_; }

private:
    fs::path dir_;
    json resolved_;
    std::string hash_;
};

struct Common {
    std::optional<std::uint64_t> seed;
    std::string out;
    bool json_out = false;
    int threads = 0;
};

void add_common(CLI::App* sub, Common& c, bool stochastic) {
    sub->set_config("--config", "", "JSON config file (flags override its keys)");
    auto* s = sub->add_option("--seed", c.seed, "Seed for every random choice");
    if (stochastic) s->required();
    sub->add_option("--out", c.out, "Run directory")->required();
    sub->add_flag("--json", c.json_out, "Print a JSON summary to stdout");
    sub->add_option("--threads", c.threads, "Worker thread cap (0: hardware)")->check(CLI::NonNegativeNumber);
}

void emit(const Common& c, const json& summary, const std::string& human) {
    if (c.json_out) std::cout << summary.dump() << "\n";
    else std::cout << human << "\n";
}

std::string file_hash(const fs::path& p) { return io::hash_hex(io::read_file(p)); }

lighting::LightConfig parse_light(const std::string& name, double intensity) {
    dataset::DatasetConfig dc;
    dc.light_intensity = intensity;
    if (name != "colocated" && name != "left" && name != "right" && name != "env0" && name != "env1")
        throw ConfigError("unknown light '" + name + "' (colocated, left, right, env0, env1)");
    return dataset::light_for(dc, name);
}

// ---- synth -----------------------------------------------------------------

struct SynthOpts {
    Common c;
    int grid = defaults::kMiniGrid;
    double side = defaults::kMiniSide;
    std::string shape = "sphere";
    double scale = 44.0;
    bool vacuum = false;
};

void run_synth(const SynthOpts& o, const CLI::App* sub) {
    RunDir run(o.c.out, "synth", sub);
    GridSpec grid{o.grid, o.side};
    grid.validate();
    const std::uint64_t seed = *o.c.seed;
    const auto ns = noise::default_spec(o.grid, seed * 2);
    const auto na = noise::default_spec(o.grid, seed * 2 + 1);
    io::VolumeFile v;
    const geometry::TriMesh mesh = geometry::builtin_shape(o.shape);
    v.mask = geometry::occupancy_mask(geometry::grid_sdf(mesh, grid));
    if (o.vacuum) {
        v.field = {DenseGrid(grid.shape(), 0.0), DenseGrid(grid.shape(), 0.5), 0.0};
    } else {
        v.field = {noise::synth_sigma_field(ns), noise::synth_albedo_field(na), o.scale};
    }
    v.provenance = {{"shape", o.shape},        {"sigma_noise", io::noise_spec_json(ns)},
                    {"alpha_noise", io::noise_spec_json(na)}, {"side", o.side},
                    {"vacuum", o.vacuum},      {"config_hash", run.hash()}};
    io::write_volume(run.path() / "volume.hsct", v);
    geometry::save_obj(mesh, run.path() / "shape.obj");
    run.finish();
    emit(o.c, {{"volume", (run.path() / "volume.hsct").string()}, {"occupied", geometry::occupied_count(v.mask)},
               {"config_hash", run.hash()}},
         "wrote " + (run.path() / "volume.hsct").string());
}

// ---- render ----------------------------------------------------------------

struct RenderOpts {
    Common c;
    std::string volume;
    double side = defaults::kMiniSide;
    std::string renderer = "raymarch";
    int spp = 64;
    int resolution = defaults::kMiniImage;
    std::string light = "colocated";
    double intensity = defaults::kMiniLightIntensity;
    double g = 0.0;
};

void run_render(const RenderOpts& o, const CLI::App* sub) {
    if (o.renderer == "mc" && !o.c.seed) throw ConfigError("--seed is required for the mc renderer");
    RunDir run(o.c.out, "render", sub);
    const io::VolumeFile v = io::read_volume(o.volume);
    render::RenderJob job;
    job.field = &v.field;
    job.mask = &v.mask;
    job.scene.grid = GridSpec{v.field.sigma.shape().i, o.side};
    job.scene.rig.resolution = o.resolution;
    job.scene.light = parse_light(o.light, o.intensity);
    job.quality.spp = o.spp;
    job.quality.seed = o.c.seed.value_or(0);
    json views = json::array();
    for (int view = 0; view < render::CameraRig::kViews; ++view) {
        job.view = view;
        Image img;
        if (o.renderer == "raymarch") img = render::raymarch_render(job);
        else if (o.renderer == "mc") img = render::mc_render(job, {}, o.g).image;
        else throw ConfigError("unknown renderer '" + o.renderer + "' (raymarch, mc)");
        const std::string stem = "view" + std::to_string(view);
        io::write_pfm(run.path() / (stem + ".pfm"), img);
        io::write_png(run.path() / (stem + ".png"), img);
        double mean = 0.0;
        for (double x : img.data) mean += x;
        views.push_back({{"file", stem + ".pfm"}, {"mean", mean / double(img.data.size())}});
    }
    run.finish();
    emit(o.c, {{"views", views}, {"volume_hash", file_hash(o.volume)}, {"config_hash", run.hash()}},
         "rendered 6 views into " + run.path().string());
}

// ---- dataset ---------------------------------------------------------------

struct DatasetOpts {
    Common c;
    std::string preset = "mini";
    std::string light_kind = "point";
    int draws = -1;
    std::vector<std::string> shapes;
};

dataset::DatasetConfig dataset_config(const DatasetOpts& o) {
    if (o.preset != "mini") throw ConfigError("unknown preset '" + o.preset + "'");
    dataset::DatasetConfig dc = dataset::mini_preset(*o.c.seed);
    if (o.light_kind == "env") {
        dc.light_kind = dataset::LightKind::env;
        dc.scales = {50.0, 80.0, 110.0};
    } else if (o.light_kind != "point") {
        throw ConfigError("light kind must be point or env");
    }
    if (o.draws >= 0) {
        dc.draws = o.draws;
        std::erase_if(dc.holdout_draws, [&](int d) { return d >= dc.draws; });
        if (dc.holdout_draws.empty() && dc.draws > 1) dc.holdout_draws = {dc.draws - 1};
    }
    if (!o.shapes.empty()) dc.shapes = o.shapes;
    dc.validate();
    return dc;
}

void run_dataset(const DatasetOpts& o, const CLI::App* sub) {
    const dataset::DatasetConfig dc = dataset_config(o);
    RunDir run(o.c.out, "dataset", sub);
    const auto t0 = std::chrono::steady_clock::now();
    const dataset::Manifest m = dataset::generate(dc, run.path(), [&](std::size_t done, std::size_t total) {
        if (!o.c.json_out && (done % 20 == 0 || done == total))
            std::cerr << "\r" << done << "/" << total << " samples" << std::flush;
    });
    if (!o.c.json_out) std::cerr << "\n";
    run.finish();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    emit(o.c, {{"samples", m.samples.size()}, {"images", m.image_count()}, {"manifest_hash", m.hash},
               {"seconds", secs}, {"config_hash", run.hash()}},
         std::to_string(m.samples.size()) + " samples, " + std::to_string(m.image_count()) + " images, manifest " +
             m.hash);
}

// ---- train -----------------------------------------------------------------

struct TrainOpts {
    Common c;
    std::string data;
    int epochs = 10;
    int batch = defaults::kDeskBatch;
    double lr = defaults::kDeskLearningRate;
    double lambda = defaults::kLambdaReg;
    bool direct = false;
    bool single_light = false;
    int max_steps = -1;
    int rank = defaults::kRank;
};

struct Split {
    std::vector<dataset::PairSample> pairs;
    std::vector<const dataset::PairSample*> train, holdout;
};

Split load_split(const dataset::Manifest& m, const fs::path& root) {
    Split s;
    s.pairs = dataset::load_pairs(m, root);
    for (const auto& p : s.pairs) (p.holdout ? s.holdout : s.train).push_back(&p);
    return s;
}

void run_train(const TrainOpts& o, const CLI::App* sub) {
    const dataset::Manifest m = dataset::load_manifest(o.data);
    RunDir run(o.c.out, "train", sub);
    const Split split = load_split(m, o.data);
    tensois::ModelConfig mc = tensois::config_for(m.config, *o.c.seed);
    mc.direct_regression = o.direct;
    mc.rank = o.rank;
    tensois::Model model(mc);
    tensois::TrainConfig tc;
    tc.lr = o.lr;
    tc.batch = o.batch;
    tc.epochs = o.epochs;
    tc.lambda = o.lambda;
    tc.multi_light = !o.single_light;
    tc.seed = *o.c.seed;
    tc.max_steps = o.max_steps;
    const tensois::EvalResult before = tensois::evaluate(model, split.holdout);
    const auto res = tensois::train(model, split.train, split.holdout, tc, run.path() / "best.hsct",
                                    [&](const tensois::EpochLog& e) {
                                        if (!o.c.json_out)
                                            std::cerr << "epoch " << e.epoch << " train " << e.train_loss
                                                      << " val_vol " << e.val_vol << " (" << e.seconds << " s)\n";
                                    });
    const json provenance = {{"manifest_hash", m.hash}, {"config_hash", run.hash()}};
    model.save(run.path() / "last.hsct", provenance);
    tensois::write_log_csv(run.path() / "log.csv", res.log);
    json summary = {{"best_epoch", res.best_epoch},
                    {"best_val_vol", res.best_val},
                    {"untrained_val_vol", before.vol},
                    {"untrained_val_sigma_l1", before.sigma_l1},
                    {"untrained_val_alpha_l1", before.alpha_l1},
                    {"steps", res.steps},
                    {"parameters", model.parameter_count()},
                    {"manifest_hash", m.hash},
                    {"config_hash", run.hash()}};
    if (!res.log.empty()) {
        summary["final_val_sigma_l1"] = res.log.back().val_sigma_l1;
        summary["final_val_alpha_l1"] = res.log.back().val_alpha_l1;
    }
    io::write_file(run.path() / "summary.json", summary.dump(2) + "\n");
    run.finish();
    emit(o.c, summary, "trained " + std::to_string(res.steps) + " steps; best val L_vol " + std::to_string(res.best_val));
}

// ---- infer -----------------------------------------------------------------

struct InferOpts {
    Common c;
    std::string model;
    std::string data;
    std::string sample;
};

void run_infer(const InferOpts& o, const CLI::App* sub) {
    const dataset::Manifest m = dataset::load_manifest(o.data);
    const auto it = std::find_if(m.samples.begin(), m.samples.end(), [&](const auto& s) { return s.id == o.sample; });
    if (it == m.samples.end()) throw ConfigError("no sample '" + o.sample + "' in the manifest");
    json meta;
    auto model = tensois::Model::load(o.model, &meta);
    RunDir run(o.c.out, "infer", sub);
    std::array<Image, 6> views, fg;
    for (int v = 0; v < render::CameraRig::kViews; ++v) {
        views[std::size_t(v)] = io::read_pfm(fs::path(o.data) / it->views[std::size_t(v)]);
        fg[std::size_t(v)] = io::read_pfm(fs::path(o.data) / it->masks[std::size_t(v)]);
    }
    const io::VolumeFile gt = io::read_volume(fs::path(o.data) / it->volume);
    const auto t0 = std::chrono::steady_clock::now();
    io::VolumeFile out{tensois::infer(*model, views, fg, gt.mask, m.config.grid), gt.mask, {}};
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.provenance = {{"model_hash", file_hash(o.model)},
                      {"model_provenance", meta.value("extra", json::object())},
                      {"manifest_hash", m.hash},
                      {"sample", o.sample},
                      {"config_hash", run.hash()}};
    io::write_volume(run.path() / "predicted.hsct", out);
    const json summary = {{"sample", o.sample},
                          {"s_hat", out.field.scale},
                          {"s_gt", gt.field.scale},
                          {"sigma_mae", metrics::masked_mae(out.field.sigma, gt.field.sigma, gt.mask)},
                          {"alpha_mae", metrics::masked_mae(out.field.albedo, gt.field.albedo, gt.mask)},
                          {"seconds", secs},
                          {"model_hash", file_hash(o.model)},
                          {"manifest_hash", m.hash},
                          {"config_hash", run.hash()}};
    io::write_file(run.path() / "summary.json", summary.dump(2) + "\n");
    run.finish();
    emit(o.c, summary, "wrote " + (run.path() / "predicted.hsct").string());
}

// ---- optimize --------------------------------------------------------------

struct OptimizeOpts {
    Common c;
    std::string volume;
    double side = defaults::kMiniSide;
    int resolution = 32;
    std::string light = "colocated";
    double intensity = defaults::kMiniLightIntensity;
    std::string param = "dense";
    int rank = defaults::kRank;
    double tv = defaults::kOptimTvWeight;
    int steps = defaults::kOptimSteps;
    double lr = 0.0;
    std::string loss = "l1";
};

void run_optimize(const OptimizeOpts& o, const CLI::App* sub) {
    const io::VolumeFile target = io::read_volume(o.volume);
    render::SceneConfig scene;
    scene.grid = GridSpec{target.field.sigma.shape().i, o.side};
    scene.rig.resolution = o.resolution;
    scene.light = parse_light(o.light, o.intensity);
    scene.validate();
    inverse_opt::OptimConfig oc;
    if (o.param == "vm") oc.param = inverse_opt::Parameterization::vm;
    else if (o.param != "dense") throw ConfigError("--param must be dense or vm");
    if (o.loss == "mse") oc.loss = inverse_opt::ImageLoss::mse;
    else if (o.loss != "l1") throw ConfigError("--loss must be l1 or mse");
    oc.rank = o.rank;
    oc.tv_weight = o.tv;
    oc.steps = o.steps;
    oc.lr = o.lr;
    oc.seed = *o.c.seed;
    oc.density = scene.light.is_point() ? tensor::kPointDensity : tensor::kEnvDensity;
    oc.validate();
    RunDir run(o.c.out, "optimize", sub);
    std::array<Image, 6> targets;
    render::RenderJob job{&target.field, &target.mask, scene, 0, oc.quality};
    for (int v = 0; v < render::CameraRig::kViews; ++v) {
        job.view = v;
        targets[std::size_t(v)] = render::raymarch_render(job);
    }
    inverse_opt::OptimResult res;
    try {
        res = inverse_opt::optimize_scene(targets, target.mask, scene, oc);
    } catch (const inverse_opt::Diverged& d) {
        inverse_opt::write_trace_csv((run.path() / "trace.csv").string(), d.trace());
        throw;
    }
    inverse_opt::write_trace_csv((run.path() / "trace.csv").string(), res.trace);
    io::VolumeFile rec{res.field, target.mask, {{"target_hash", file_hash(o.volume)}, {"config_hash", run.hash()}}};
    io::write_volume(run.path() / "recovered.hsct", rec);
    const json summary = {
        {"initial_image_mse", res.initial_mse},
        {"final_image_mse", res.final_mse},
        {"image_mse_ratio", res.initial_mse > 0 ? res.final_mse / res.initial_mse : 0.0},
        {"sigma_mae", metrics::masked_mae(res.field.sigma, target.field.sigma, target.mask)},
        {"alpha_mae", metrics::masked_mae(res.field.albedo, target.field.albedo, target.mask)},
        {"extinction_mae", [&] {
             DenseGrid a = res.field.sigma, b = target.field.sigma;
             for (double& x : a.values()) x *= res.field.scale;
             for (double& x : b.values()) x *= target.field.scale;
             return metrics::masked_mae(a, b, target.mask);
         }()},
        {"scale_recovered", res.field.scale},
        {"scale_target", target.field.scale},
        {"target_hash", file_hash(o.volume)},
        {"config_hash", run.hash()}};
    io::write_file(run.path() / "summary.json", summary.dump(2) + "\n");
    run.finish();
    emit(o.c, summary,
         "image MSE " + std::to_string(res.initial_mse) + " -> " + std::to_string(res.final_mse) + ", sigma MAE " +
             std::to_string(summary["sigma_mae"].get<double>()));
}

// ---- eval ------------------------------------------------------------------

struct EvalOpts {
    Common c;
    std::string model;
    std::string data;
    std::string split = "holdout";
    bool homo = false;
    bool images = true;
};

void run_eval(const EvalOpts& o, const CLI::App* sub) {
    if (o.homo && !o.c.seed) throw ConfigError("--seed is required with --homo");
    const dataset::Manifest m = dataset::load_manifest(o.data);
    json meta;
    auto model = tensois::Model::load(o.model, &meta);
    RunDir run(o.c.out, "eval", sub);
    const Split split = load_split(m, o.data);
    std::vector<const dataset::PairSample*> set;
    if (o.split == "holdout") set = split.holdout;
    else if (o.split == "train") set = split.train;
    else if (o.split == "all") {
        set = split.train;
        set.insert(set.end(), split.holdout.begin(), split.holdout.end());
    } else throw ConfigError("--split must be holdout, train or all");
    if (set.empty()) throw ConfigError("selected split is empty");

    std::string csv = "sample,light,sigma_mae,alpha_mae,sigma_mse,alpha_mse,s_hat,s_gt,image_mse,one_minus_ms_ssim\n";
    double acc[6] = {0, 0, 0, 0, 0, 0};
    int n = 0;
    for (const auto* p : set) {
        for (int l = 0; l < 2; ++l) {
            const auto f = tensois::infer(*model, p->views[std::size_t(l)], p->fg, p->mask, m.config.grid);
            double img_mse = 0.0, ssim = 0.0;
            if (o.images) {
                for (int v = 0; v < render::CameraRig::kViews; ++v) {
                    render::SceneConfig scene;
                    scene.grid = m.config.grid;
                    scene.rig = m.config.rig;
                    const auto& entry = *std::find_if(m.samples.begin(), m.samples.end(), [&](const auto& s) {
                        return s.volume == p->key && s.light_index == l;
                    });
                    scene.light = dataset::light_for(m.config, entry.light);
                    render::RenderJob job{&f, &p->mask, scene, v, m.config.quality};
                    const Image img = render::raymarch_render(job);
                    const Image& gt = p->views[std::size_t(l)][std::size_t(v)];
                    img_mse += metrics::image_mse(img, gt);
                    ssim += 1.0 - metrics::ms_ssim(img, gt);
                }
                img_mse /= render::CameraRig::kViews;
                ssim /= render::CameraRig::kViews;
            }
            const double vals[6] = {metrics::masked_mae(f.sigma, p->field.sigma, p->mask),
                                    metrics::masked_mae(f.albedo, p->field.albedo, p->mask),
                                    metrics::masked_mse(f.sigma, p->field.sigma, p->mask),
                                    metrics::masked_mse(f.albedo, p->field.albedo, p->mask), img_mse, ssim};
            char buf[512];
            std::snprintf(buf, sizeof(buf), "%s,%d,%.9g,%.9g,%.9g,%.9g,%.6g,%.6g,%.9g,%.9g\n", p->key.c_str(), l,
                          vals[0], vals[1], vals[2], vals[3], f.scale, p->field.scale, vals[4], vals[5]);
            csv += buf;
            for (int k = 0; k < 6; ++k) acc[k] += vals[k];
            ++n;
        }
    }
    io::write_file(run.path() / "eval.csv", csv);
    json summary = {{"split", o.split},
                    {"evaluated", n},
                    {"sigma_mae", acc[0] / n},
                    {"alpha_mae", acc[1] / n},
                    {"sigma_mse", acc[2] / n},
                    {"alpha_mse", acc[3] / n},
                    {"model_hash", file_hash(o.model)},
                    {"model_provenance", meta.value("extra", json::object())},
                    {"manifest_hash", m.hash},
                    {"config_hash", run.hash()}};
    if (o.images) {
        summary["image_mse"] = acc[4] / n;
        summary["one_minus_ms_ssim"] = acc[5] / n;
    }
    if (o.homo) {
        evaluation::HomoConfig hc;
        hc.seed = *o.c.seed;
        const auto table = evaluation::homo_eval(*model, m.config, hc);
        io::write_file(run.path() / "homo.csv", evaluation::homo_csv(table));
        summary["homo"] = {{"sigma_mae", table.sigma_mae}, {"sigma_mae_std", table.sigma_mae_std},
                           {"alpha_mae", table.alpha_mae}, {"alpha_mae_std", table.alpha_mae_std}};
    }
    io::write_file(run.path() / "summary.json", summary.dump(2) + "\n");
    run.finish();
    emit(o.c, summary,
         "sigma MAE " + std::to_string(acc[0] / n) + ", alpha MAE " + std::to_string(acc[1] / n) + " over " +
             std::to_string(n) + " predictions");
}

// ---- gradcheck -------------------------------------------------------------

struct GradcheckOpts {
    Common c;
};

bool run_gradcheck(const GradcheckOpts& o, const CLI::App* sub) {
    RunDir run(o.c.out, "gradcheck", sub);
    auto results = gradcheck::autodiff_suite(*o.c.seed);
    const auto adj = gradcheck::adjoint_suite(*o.c.seed);
    results.insert(results.end(), adj.begin(), adj.end());
    bool ok = true;
    json rows = json::array();
    std::string table;
    char buf[256];
    for (const auto& r : results) {
        ok = ok && r.pass;
        rows.push_back({{"name", r.name}, {"max_rel_error", r.max_rel_error}, {"tolerance", r.tolerance},
                        {"entries", r.entries}, {"pass", r.pass}});
        std::snprintf(buf, sizeof(buf), "%-28s %10.3e  (tol %.0e, %d entries)  %s\n", r.name.c_str(), r.max_rel_error,
                      r.tolerance, r.entries, r.pass ? "ok" : "FAIL");
        table += buf;
    }
    io::write_file(run.path() / "gradcheck.json", rows.dump(2) + "\n");
    run.finish();
    emit(o.c, {{"pass", ok}, {"checks", rows}, {"config_hash", run.hash()}}, table);
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Heterogeneous inverse scattering toolkit"};
    app.require_subcommand(1);
    app.config_formatter(std::make_shared<JsonConfig>());

    SynthOpts synth;
    auto* s_synth = app.add_subcommand("synth", "Noise fields, occupancy mask and volume container");
    add_common(s_synth, synth.c, true);
    s_synth->add_option("--grid", synth.grid, "Voxels per axis")->check(CLI::PositiveNumber);
    s_synth->add_option("--side", synth.side, "Cube edge length");
    s_synth->add_option("--shape", synth.shape, "Builtin shape");
    s_synth->add_option("--scale", synth.scale, "Optical density scale s");
    s_synth->add_flag("--vacuum", synth.vacuum, "Zero extinction everywhere (s = 0)");

    RenderOpts rend;
    auto* s_render = app.add_subcommand("render", "Render the six views of a volume");
    add_common(s_render, rend.c, false);
    s_render->add_option("--volume", rend.volume, "Volume container")->required();
    s_render->add_option("--side", rend.side, "Cube edge length");
    s_render->add_option("--renderer", rend.renderer, "raymarch or mc");
    s_render->add_option("--spp", rend.spp, "Samples per pixel (mc)")->check(CLI::PositiveNumber);
    s_render->add_option("--resolution", rend.resolution, "Image side")->check(CLI::PositiveNumber);
    s_render->add_option("--light", rend.light, "colocated, left, right, env0 or env1");
    s_render->add_option("--intensity", rend.intensity, "Point light intensity");
    s_render->add_option("--hg-g", rend.g, "Henyey-Greenstein asymmetry (mc)");

    DatasetOpts ds;
    auto* s_dataset = app.add_subcommand("dataset", "Generate the mini dataset");
    add_common(s_dataset, ds.c, true);
    s_dataset->add_option("--preset", ds.preset, "Dataset preset");
    s_dataset->add_option("--light-kind", ds.light_kind, "point or env");
    s_dataset->add_option("--draws", ds.draws, "Override noise draws per shape");
    s_dataset->add_option("--shapes", ds.shapes, "Override shape list");

    TrainOpts tr;
    auto* s_train = app.add_subcommand("train", "Train the tensorial model");
    add_common(s_train, tr.c, true);
    s_train->add_option("--data", tr.data, "Dataset directory")->required();
    s_train->add_option("--epochs", tr.epochs)->check(CLI::NonNegativeNumber);
    s_train->add_option("--batch", tr.batch)->check(CLI::PositiveNumber);
    s_train->add_option("--lr", tr.lr);
    s_train->add_option("--lambda", tr.lambda);
    s_train->add_option("--rank", tr.rank)->check(CLI::PositiveNumber);
    s_train->add_option("--max-steps", tr.max_steps);
    s_train->add_flag("--direct", tr.direct, "Dense-grid head instead of VM decoders");
    s_train->add_flag("--single-light", tr.single_light, "Train on one light per sample");

    InferOpts inf;
    auto* s_infer = app.add_subcommand("infer", "Predict a volume for one dataset sample");
    add_common(s_infer, inf.c, false);
    s_infer->add_option("--model", inf.model, "Checkpoint")->required();
    s_infer->add_option("--data", inf.data, "Dataset directory")->required();
    s_infer->add_option("--sample", inf.sample, "Sample id")->required();

    OptimizeOpts opt;
    auto* s_opt = app.add_subcommand("optimize", "Per-scene volume optimization baseline");
    add_common(s_opt, opt.c, true);
    s_opt->add_option("--volume", opt.volume, "Target volume container")->required();
    s_opt->add_option("--side", opt.side);
    s_opt->add_option("--resolution", opt.resolution)->check(CLI::PositiveNumber);
    s_opt->add_option("--light", opt.light);
    s_opt->add_option("--intensity", opt.intensity);
    s_opt->add_option("--param", opt.param, "dense or vm");
    s_opt->add_option("--rank", opt.rank)->check(CLI::PositiveNumber);
    s_opt->add_option("--tv", opt.tv, "TV weight");
    s_opt->add_option("--steps", opt.steps)->check(CLI::PositiveNumber);
    s_opt->add_option("--lr", opt.lr, "Adam step (0: parameterization default)");
    s_opt->add_option("--loss", opt.loss, "l1 or mse");

    EvalOpts ev;
    auto* s_eval = app.add_subcommand("eval", "Metric tables for a trained model");
    add_common(s_eval, ev.c, false);
    s_eval->add_option("--model", ev.model, "Checkpoint")->required();
    s_eval->add_option("--data", ev.data, "Dataset directory")->required();
    s_eval->add_option("--split", ev.split, "holdout, train or all");
    s_eval->add_flag("--homo", ev.homo, "Also run the homogeneous protocol");
    s_eval->add_flag("--images,!--no-images", ev.images, "Re-render predictions for image metrics");

    GradcheckOpts gc;
    auto* s_gc = app.add_subcommand("gradcheck", "Finite-difference suites for autodiff ops and the adjoint");
    add_common(s_gc, gc.c, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    for (Common* c : {&synth.c, &rend.c, &ds.c, &tr.c, &inf.c, &opt.c, &ev.c, &gc.c})
        if (c->threads > 0) set_thread_count(c->threads);

    try {
        if (s_synth->parsed()) run_synth(synth, s_synth);
        else if (s_render->parsed()) run_render(rend, s_render);
        else if (s_dataset->parsed()) run_dataset(ds, s_dataset);
        else if (s_train->parsed()) run_train(tr, s_train);
        else if (s_infer->parsed()) run_infer(inf, s_infer);
        else if (s_opt->parsed()) run_optimize(opt, s_opt);
        else if (s_eval->parsed()) run_eval(ev, s_eval);
        else if (s_gc->parsed()) return run_gradcheck(gc, s_gc) ? 0 : 3;
    } catch (const ConfigError& e) {
        std::cerr << "invalid configuration: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
