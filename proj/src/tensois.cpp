#include "hscat/tensois.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "hscat/defaults.hpp"
#include "hscat/io.hpp"
#include "hscat/metrics.hpp"

namespace hscat::tensois {

using ad::Parameter;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

constexpr int kViews = 6;
constexpr int kHeadHidden = 32;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

int log2i(int n) {
    int k = 0;
    while ((1 << k) < n) ++k;
    return k;
}

struct Init {
    std::mt19937_64 rng;

    Tensor normal(std::vector<int> shape, double stddev) {
        Tensor t(std::move(shape));
        std::normal_distribution<double> nd(0.0, stddev);
        for (double& v : t.data) v = nd(rng);
        return t;
    }
};

Model::Conv make_conv(Init& init, const std::string& name, int out, int in, int kh, int kw, int stride, int pad_h,
                      int pad_w, bool final_layer) {
    const double fan_in = double(in) * kh * kw;
    const double stddev = final_layer ? 0.1 * std::sqrt(1.0 / fan_in) : std::sqrt(2.0 / fan_in);
    Model::Conv c;
    c.w = Parameter(name + ".w", init.normal({out, in, kh, kw}, stddev));
    c.b = Parameter(name + ".b", Tensor({out}));
    c.stride = stride;
    c.pad_h = pad_h;
    c.pad_w = pad_w;
    return c;
}

Model::Dense make_dense(Init& init, const std::string& name, int out, int in, bool final_layer) {
    const double stddev = final_layer ? 0.1 * std::sqrt(1.0 / in) : std::sqrt(2.0 / in);
    return {Parameter(name + ".w", init.normal({out, in}, stddev)), Parameter(name + ".b", Tensor({out}))};
}

Var apply(Tape& tape, Model::Conv& c, Var x) {
    return ad::conv2d(x, tape.param(c.w), tape.param(c.b), {c.stride, c.pad_h, c.pad_w});
}

Var apply(Tape& tape, Model::Dense& d, Var x) { return ad::dense(x, tape.param(d.w), tape.param(d.b)); }

// Stages of conv -> relu -> depth_to_space, then the output conv.
Var run_decoder(Tape& tape, Model::Decoder& dec, Var x, int ry, int rx) {
    for (auto& st : dec.stages) x = ad::depth_to_space(ad::relu(apply(tape, st, x)), ry, rx);
    return apply(tape, dec.out, x);
}

Var global_pool(Var x) { return ad::mean_axis(ad::mean_axis(x, 1), 2); }

Tensor grid_tensor(const DenseGrid& g) {
    const Shape3 s = g.shape();
    return Tensor({s.i, s.j, s.k}, g.values());
}

Tensor mask_tensor(const OccupancyMask& m) {
    const Shape3 s = m.shape();
    return Tensor({s.i, s.j, s.k}, std::vector<double>(m.values().begin(), m.values().end()));
}

Tensor sh_tensor(const lighting::SHCoeffs& sh) {
    Tensor t({3 * lighting::kShCount});
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < lighting::kShCount; ++i) t.data[std::size_t(c * lighting::kShCount + i)] = sh.c[c][i];
    return t;
}

}  // namespace

// ---- configs ------------------------------------------------------------

void ModelConfig::validate() const {
    if (channels_in != 1 && channels_in != 9) throw ConfigError("channels_in must be 1 (point) or 9 (env)");
    if (encoder_widths.empty()) throw ConfigError("encoder needs at least one layer");
    for (int w : encoder_widths)
        if (w <= 0) throw ConfigError("encoder widths must be positive");
    if (image_size <= 0 || image_size % (1 << encoder_widths.size()) != 0)
        throw ConfigError("image size must be divisible by 2^(encoder depth)");
    if (decoder_width <= 0) throw ConfigError("decoder width must be positive");
    if (rank < 1) throw ConfigError("rank must be >= 1");
    const int h = latent_size();
    if (grid < h || grid % h != 0 || !is_pow2(grid / h))
        throw ConfigError("grid must be the latent size times a power of two");
    if (!(density.hi > density.lo)) throw ConfigError("density range must be increasing");
}

int ModelConfig::latent_size() const { return image_size >> encoder_widths.size(); }

json ModelConfig::to_json() const {
    return {{"image_size", image_size},   {"channels_in", channels_in},   {"encoder_widths", encoder_widths},
            {"decoder_width", decoder_width}, {"rank", rank},             {"grid", grid},
            {"scale_head", scale_head},   {"light_head", light_head},     {"direct_regression", direct_regression},
            {"density", {density.lo, density.hi}}, {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const json& j) {
    ModelConfig c;
    try {
        c.image_size = j.at("image_size").get<int>();
        c.channels_in = j.at("channels_in").get<int>();
        c.encoder_widths = j.at("encoder_widths").get<std::vector<int>>();
        c.decoder_width = j.at("decoder_width").get<int>();
        c.rank = j.at("rank").get<int>();
        c.grid = j.at("grid").get<int>();
        c.scale_head = j.at("scale_head").get<bool>();
        c.light_head = j.at("light_head").get<bool>();
        c.direct_regression = j.at("direct_regression").get<bool>();
        const auto d = j.at("density").get<std::vector<double>>();
        if (d.size() != 2) throw ConfigError("density must be [lo, hi]");
        c.density = {d[0], d[1]};
        c.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

ModelConfig config_for(const dataset::DatasetConfig& data, std::uint64_t seed) {
    ModelConfig c;
    c.image_size = data.rig.resolution;
    c.grid = data.grid.resolution;
    const bool env = data.light_kind == dataset::LightKind::env;
    c.channels_in = env ? 9 : 1;
    c.light_head = env;
    c.density = data.density_range();
    c.rank = defaults::kRank;
    c.encoder_widths.assign(defaults::kEncoderWidths.begin(), defaults::kEncoderWidths.end());
    c.decoder_width = defaults::kDecoderWidth;
    c.seed = seed;
    return c;
}

void TrainConfig::validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and >= 0");
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
}

json TrainConfig::to_json() const {
    return {{"lr", lr},         {"batch", batch}, {"epochs", epochs},       {"lambda", lambda},
            {"multi_light", multi_light}, {"seed", seed}, {"max_steps", max_steps}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig t;
    t.lr = j.value("lr", t.lr);
    t.batch = j.value("batch", t.batch);
    t.epochs = j.value("epochs", t.epochs);
    t.lambda = j.value("lambda", t.lambda);
    t.multi_light = j.value("multi_light", t.multi_light);
    t.seed = j.value("seed", t.seed);
    t.max_steps = j.value("max_steps", t.max_steps);
    t.validate();
    return t;
}

// ---- model --------------------------------------------------------------

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Init init{std::mt19937_64(cfg_.seed)};
    const int R = cfg_.rank, N = cfg_.grid, D = cfg_.decoder_width;
    const int h = cfg_.latent_size();
    const int c_last = cfg_.encoder_widths.back();
    const int zc = kViews * c_last;
    const int up = log2i(N / h);

    for (int v = 0; v < kViews; ++v) {
        int in = cfg_.channels_in;
        for (std::size_t l = 0; l < cfg_.encoder_widths.size(); ++l) {
            const int out = cfg_.encoder_widths[l];
            encoders[std::size_t(v)].layers.push_back(make_conv(
                init, "enc" + std::to_string(v) + ".conv" + std::to_string(l), out, in, 3, 3, 2, 1, 1, false));
            in = out;
        }
    }
    const char* pname[2] = {"sigma", "alpha"};
    for (int p = 0; p < 2; ++p) {
        Decoder& md = matrix_dec[std::size_t(p)];
        int in = zc;
        for (int s = 0; s < up; ++s) {
            md.stages.push_back(make_conv(init, std::string("mdec.") + pname[p] + ".stage" + std::to_string(s),
                                          4 * D, in, 3, 3, 1, 1, 1, false));
            in = D;
        }
        const int out_ch = cfg_.direct_regression ? N : 3 * R;
        md.out = make_conv(init, std::string("mdec.") + pname[p] + ".out", out_ch, in, 3, 3, 1, 1, 1, true);
        if (cfg_.direct_regression) continue;
        Decoder& vd = vector_dec[std::size_t(p)];
        in = zc;
        for (int s = 0; s < up; ++s) {
            vd.stages.push_back(make_conv(init, std::string("vdec.") + pname[p] + ".stage" + std::to_string(s),
                                          2 * D, in, 1, 3, 1, 0, 1, false));
            in = D;
        }
        vd.out = make_conv(init, std::string("vdec.") + pname[p] + ".out", 3 * R, in, 1, 3, 1, 0, 1, true);
        // Unit vector bias so matrix gradients are nonzero from the first step.
        std::fill(vd.out.b.value.data.begin(), vd.out.b.value.data.end(), 1.0);
    }
    if (cfg_.scale_head) {
        heads.scale.push_back(make_dense(init, "scale.fc0", kHeadHidden, zc, false));
        heads.scale.push_back(make_dense(init, "scale.fc1", 1, kHeadHidden, true));
    }
    if (cfg_.light_head) {
        heads.light.push_back(make_dense(init, "light.fc0", kHeadHidden, c_last, false));
        heads.light.push_back(make_dense(init, "light.fc1", 3 * lighting::kShCount, kHeadHidden, true));
    }
    for (const Block& b : blocks()) all_.insert(all_.end(), b.params.begin(), b.params.end());
    for (Parameter* p : all_) p->zero_grad();
}

std::vector<Block> Model::blocks() {
    std::vector<Block> out;
    const auto add_conv = [](Block& b, Conv& c) {
        b.params.push_back(&c.w);
        b.params.push_back(&c.b);
    };
    for (int v = 0; v < kViews; ++v) {
        Block b{"encoder" + std::to_string(v), {}};
        for (auto& l : encoders[std::size_t(v)].layers) add_conv(b, l);
        out.push_back(std::move(b));
    }
    const char* pname[2] = {"sigma", "alpha"};
    for (int p = 0; p < 2; ++p) {
        if (!cfg_.direct_regression) {
            Block b{std::string("vector_decoder_") + pname[p], {}};
            for (auto& s : vector_dec[std::size_t(p)].stages) add_conv(b, s);
            add_conv(b, vector_dec[std::size_t(p)].out);
            out.push_back(std::move(b));
        }
        Block b{std::string(cfg_.direct_regression ? "grid_decoder_" : "matrix_decoder_") + pname[p], {}};
        for (auto& s : matrix_dec[std::size_t(p)].stages) add_conv(b, s);
        add_conv(b, matrix_dec[std::size_t(p)].out);
        out.push_back(std::move(b));
    }
    if (!heads.scale.empty()) {
        Block b{"scale_head", {}};
        for (auto& d : heads.scale) {
            b.params.push_back(&d.w);
            b.params.push_back(&d.b);
        }
        out.push_back(std::move(b));
    }
    if (!heads.light.empty()) {
        Block b{"light_head", {}};
        for (auto& d : heads.light) {
            b.params.push_back(&d.w);
            b.params.push_back(&d.b);
        }
        out.push_back(std::move(b));
    }
    return out;
}

std::vector<Parameter*> Model::parameters() { return all_; }

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const Parameter* p : all_) n += p->value.size();
    return n;
}

void Model::zero_final_decoder_layers() {
    for (int p = 0; p < 2; ++p) {
        for (Decoder* d : {&vector_dec[std::size_t(p)], &matrix_dec[std::size_t(p)]}) {
            std::fill(d->out.w.value.data.begin(), d->out.w.value.data.end(), 0.0);
            std::fill(d->out.b.value.data.begin(), d->out.b.value.data.end(), 0.0);
        }
    }
}

void Model::save(const std::filesystem::path& path, const json& extra_meta) const {
    io::Container c;
    c.meta = {{"role", "checkpoint"},
              {"model", cfg_.to_json()},
              {"trained", trained_},
              {"defaults_version", defaults::kDefaultsVersion},
              {"extra", extra_meta}};
    for (const Parameter* p : all_) c.add({p->name, p->value.shape, io::DType::f64, p->value.data});
    io::write_container(path, c);
}

std::unique_ptr<Model> Model::load(const std::filesystem::path& path, json* meta) {
    const io::Container c = io::read_container(path);
    if (c.meta.value("role", "") != "checkpoint") throw IoError(path.string() + " is not a checkpoint");
    auto m = std::make_unique<Model>(ModelConfig::from_json(c.meta.at("model")));
    for (Parameter* p : m->all_) {
        const io::Array& a = c.get(p->name);
        if (a.shape != p->value.shape) throw IoError("checkpoint tensor '" + p->name + "' has the wrong shape");
        p->value.data = a.values;
    }
    m->trained_ = true;
    if (meta) *meta = c.meta;
    return m;
}

void Model::copy_weights_from(const Model& other) {
    if (other.cfg_.to_json() != cfg_.to_json()) throw ConfigError("model configs differ");
    for (std::size_t n = 0; n < all_.size(); ++n) all_[n]->value = other.all_[n]->value;
    trained_ = other.trained_;
}

// ---- forward ------------------------------------------------------------

Tensor view_input(const Image& image, const Image& fg, int channels_in) {
    if (fg.channels != 1 || fg.width != image.width || fg.height != image.height)
        throw ShapeError("foreground mask must be single-channel and match the image");
    const std::size_t P = image.pixels();
    Tensor t({channels_in, image.height, image.width});
    if (channels_in == 1) {
        if (image.channels != 1) throw ShapeError("point-light model expects single-channel images");
        std::copy(image.data.begin(), image.data.end(), t.data.begin());
    } else {
        if (image.channels != 3) throw ShapeError("environment model expects RGB images");
        for (int c = 0; c < 3; ++c)
            for (std::size_t p = 0; p < P; ++p) {
                const double I = image.data[std::size_t(c) * P + p];
                const double M = fg.data[p];
                t.data[std::size_t(c) * P + p] = I;
                t.data[std::size_t(3 + c) * P + p] = I * M;
                t.data[std::size_t(6 + c) * P + p] = M;
            }
    }
    return t;
}

ForwardVars forward(Model& model, Tape& tape, const std::array<Image, 6>& images, const std::array<Image, 6>& fg) {
    const ModelConfig& cfg = model.config();
    for (int v = 0; v < kViews; ++v)
        if (images[std::size_t(v)].width != cfg.image_size || images[std::size_t(v)].height != cfg.image_size)
            throw ShapeError("view " + std::to_string(v) + " does not match the model's image size");

    std::vector<Var> feats;
    for (int v = 0; v < kViews; ++v) {
        Var x = tape.constant(view_input(images[std::size_t(v)], fg[std::size_t(v)], cfg.channels_in));
        for (auto& l : model.encoders[std::size_t(v)].layers) x = ad::relu(apply(tape, l, x));
        feats.push_back(x);
    }
    ForwardVars fv;
    fv.z = ad::concat(feats);

    const int R = cfg.rank, N = cfg.grid;
    Var grids[2];
    for (int p = 0; p < 2; ++p) {
        Var mats = run_decoder(tape, model.matrix_dec[std::size_t(p)], fv.z, 2, 2);
        if (cfg.direct_regression) {
            grids[p] = mats;  // [N, N, N]
            continue;
        }
        Var vecs = run_decoder(tape, model.vector_dec[std::size_t(p)], ad::mean_axis(fv.z, 1), 1, 2);
        vecs = ad::reshape(vecs, {3 * R, N});
        std::vector<Var> parts;
        for (int b = 0; b < 3; ++b) parts.push_back(ad::slice(vecs, b * R, (b + 1) * R));
        for (int b = 0; b < 3; ++b) parts.push_back(ad::slice(mats, b * R, (b + 1) * R));
        Var g = ad::add(ad::add(ad::outer3(parts[0], parts[3], 0), ad::outer3(parts[1], parts[4], 1)),
                        ad::outer3(parts[2], parts[5], 2));
        grids[p] = g;
        (p == 0 ? fv.sigma_vm : fv.alpha_vm) = parts;
    }
    fv.sigma = grids[0];
    fv.alpha = grids[1];

    if (!model.heads.scale.empty()) {
        Var h = ad::relu(apply(tape, model.heads.scale[0], global_pool(fv.z)));
        fv.scale = apply(tape, model.heads.scale[1], h);
    }
    if (!model.heads.light.empty()) {
        Var m = feats[0];
        for (int v = 1; v < kViews; ++v) m = ad::add(m, feats[std::size_t(v)]);
        m = ad::scale(m, 1.0 / kViews);
        Var h = ad::relu(apply(tape, model.heads.light[0], global_pool(m)));
        fv.light = apply(tape, model.heads.light[1], h);
    }
    return fv;
}

namespace {

tensor::VMDecomposition vm_from(const std::vector<Var>& parts, int rank, int n) {
    tensor::VMDecomposition vm(rank, Shape3::cube(n));
    vm.vx = parts[0].value().data;
    vm.vy = parts[1].value().data;
    vm.vz = parts[2].value().data;
    vm.m_yz = parts[3].value().data;
    vm.m_xz = parts[4].value().data;
    vm.m_xy = parts[5].value().data;
    return vm;
}

DenseGrid clamp_grid(const Tensor& t, int n, double lo, double hi) {
    DenseGrid g(Shape3::cube(n));
    for (std::size_t i = 0; i < t.data.size(); ++i) g[i] = std::clamp(t.data[i], lo, hi);
    return g;
}

}  // namespace

Prediction predict(Model& model, const std::array<Image, 6>& images, const std::array<Image, 6>& fg) {
    const ModelConfig& cfg = model.config();
    Tape tape;
    const ForwardVars fv = forward(model, tape, images, fg);
    Prediction p;
    if (!cfg.direct_regression) {
        p.vm_sigma = vm_from(fv.sigma_vm, cfg.rank, cfg.grid);
        p.vm_alpha = vm_from(fv.alpha_vm, cfg.rank, cfg.grid);
    }
    // Extinction is stored normalized to [0, 1]; alpha to its physical range.
    p.sigma = clamp_grid(fv.sigma.value(), cfg.grid, 0.0, 1.0);
    p.alpha = clamp_grid(fv.alpha.value(), cfg.grid, kAlphaLo, kAlphaHi);
    if (fv.scale.valid()) {
        p.s_norm = std::clamp(fv.scale.value().data[0], 0.0, 1.0);
        p.s_hat = cfg.density.denormalize(p.s_norm);
    }
    if (fv.light.valid()) {
        lighting::SHCoeffs sh;
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < lighting::kShCount; ++i)
                sh.c[c][i] = fv.light.value().data[std::size_t(c * lighting::kShCount + i)];
        p.l_sh = sh;
    }
    p.z = fv.z.value();
    return p;
}

// ---- losses -------------------------------------------------------------

LossTerms loss_single(const Model& model, const ForwardVars& fv, const Target& gt) {
    if (!gt.field || !gt.mask) throw ConfigError("loss target needs a field and a mask");
    const ModelConfig& cfg = model.config();
    const Tensor m = mask_tensor(*gt.mask);
    if (!(gt.field->sigma.shape() == Shape3::cube(cfg.grid))) throw ShapeError("target grid does not match the model");
    LossTerms t;
    Var ls = ad::masked_l1(fv.sigma, grid_tensor(gt.field->sigma), m);
    Var la = ad::masked_l1(fv.alpha, grid_tensor(gt.field->albedo), m);
    t.sigma_l1 = ls.value().data[0];
    t.alpha_l1 = la.value().data[0];
    t.total = ad::add(ls, la);
    t.vol = t.total.value().data[0];
    if (fv.scale.valid()) {
        Var l = ad::mse(fv.scale, Tensor({1}, cfg.density.normalize(gt.field->scale)));
        t.scale = l.value().data[0];
        t.total = ad::add(t.total, l);
    }
    if (fv.light.valid()) {
        if (!gt.sh) throw ConfigError("light head requires ground-truth SH coefficients");
        Var l = ad::mse(fv.light, sh_tensor(*gt.sh));
        t.light = l.value().data[0];
        t.total = ad::add(t.total, l);
    }
    return t;
}

LossTerms loss_total(const Model& model, const ForwardVars& f1, const Target& g1, const ForwardVars& f2,
                     const Target& g2, double lambda) {
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    const LossTerms a = loss_single(model, f1, g1);
    const LossTerms b = loss_single(model, f2, g2);
    LossTerms t;
    Var reg = ad::mse(f1.z, f2.z);
    t.reg = reg.value().data[0];
    t.total = ad::add(ad::scale(ad::add(a.total, b.total), 0.5), ad::scale(reg, lambda));
    t.vol = 0.5 * (a.vol + b.vol);
    t.sigma_l1 = 0.5 * (a.sigma_l1 + b.sigma_l1);
    t.alpha_l1 = 0.5 * (a.alpha_l1 + b.alpha_l1);
    t.scale = 0.5 * (a.scale + b.scale);
    t.light = 0.5 * (a.light + b.light);
    return t;
}

// ---- evaluation and training ----------------------------------------------

EvalResult evaluate(Model& model, const std::vector<const dataset::PairSample*>& samples) {
    EvalResult r;
    for (const dataset::PairSample* s : samples) {
        Prediction p[2];
        for (int l = 0; l < 2; ++l) {
            p[l] = predict(model, s->views[std::size_t(l)], s->fg);
            const double es = metrics::masked_mae(p[l].sigma, s->field.sigma, s->mask);
            const double ea = metrics::masked_mae(p[l].alpha, s->field.albedo, s->mask);
            r.sigma_l1 += es;
            r.alpha_l1 += ea;
            r.vol += es + ea;
            r.scale_abs += std::abs(p[l].s_hat - s->field.scale);
        }
        double gap = 0.0;
        for (std::size_t i = 0; i < p[0].z.size(); ++i) gap += std::pow(p[0].z.data[i] - p[1].z.data[i], 2);
        r.z_gap += gap / double(p[0].z.size());
        ++r.samples;
    }
    if (r.samples > 0) {
        const double n2 = 2.0 * double(r.samples);
        r.vol /= n2;
        r.sigma_l1 /= n2;
        r.alpha_l1 /= n2;
        r.scale_abs /= n2;
        r.z_gap /= double(r.samples);
    }
    return r;
}

TrainResult train(Model& model, const std::vector<const dataset::PairSample*>& train_set,
                  const std::vector<const dataset::PairSample*>& val, const TrainConfig& tc,
                  const std::filesystem::path& best_checkpoint, const EpochCallback& on_epoch) {
    tc.validate();
    if (train_set.empty()) throw ConfigError("training set is empty");
    ad::Adam adam(model.parameters(), ad::AdamConfig{tc.lr, 0.9, 0.999, 1e-8});
    TrainResult res;
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    long batch_id = 0;
    bool stop = false;
    for (int epoch = 0; epoch < tc.epochs && !stop; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::mt19937_64 rng(tc.seed * 1000003ULL + std::uint64_t(epoch));
        std::shuffle(order.begin(), order.end(), rng);
        EpochLog log;
        log.epoch = epoch;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += std::size_t(tc.batch), ++batch_id) {
            const std::size_t end = std::min(order.size(), start + std::size_t(tc.batch));
            const double inv = 1.0 / double(end - start);
            adam.zero_grad();
            for (std::size_t n = start; n < end; ++n) {
                const dataset::PairSample& s = *train_set[order[n]];
                Tape tape;
                const Target g0{&s.field, &s.mask, s.sh[0]};
                LossTerms lt;
                const ForwardVars f0 = forward(model, tape, s.views[0], s.fg);
                if (tc.multi_light) {
                    const Target g1{&s.field, &s.mask, s.sh[1]};
                    const ForwardVars f1 = forward(model, tape, s.views[1], s.fg);
                    lt = loss_total(model, f0, g0, f1, g1, tc.lambda);
                } else {
                    lt = loss_single(model, f0, g0);
                }
                const double value = lt.total.value().data[0];
                if (!std::isfinite(value))
                    throw NumericalError("non-finite training loss in batch " + std::to_string(batch_id) +
                                         " (sample " + s.key + ")");
                tape.backward(ad::scale(lt.total, inv));
                log.train_loss += value;
                log.train_vol += lt.vol;
                ++seen;
            }
            adam.step();
            ++res.steps;
            if (tc.max_steps >= 0 && res.steps >= tc.max_steps) {
                stop = true;
                break;
            }
        }
        model.mark_trained();
        log.train_loss /= double(seen);
        log.train_vol /= double(seen);
        if (!val.empty()) {
            const EvalResult e = evaluate(model, val);
            log.val_vol = e.vol;
            log.val_sigma_l1 = e.sigma_l1;
            log.val_alpha_l1 = e.alpha_l1;
            log.val_z_gap = e.z_gap;
        } else {
            log.val_vol = log.train_vol;
        }
        log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        res.log.push_back(log);
        if (res.best_epoch < 0 || log.val_vol < res.best_val) {
            res.best_epoch = epoch;
            res.best_val = log.val_vol;
            if (!best_checkpoint.empty())
                model.save(best_checkpoint, {{"epoch", epoch}, {"val_vol", log.val_vol}, {"train", tc.to_json()}});
        }
        if (on_epoch) on_epoch(log);
    }
    return res;
}

void write_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
    std::string out = "epoch,train_loss,train_vol,val_vol,val_sigma_l1,val_alpha_l1,val_z_gap,seconds\n";
    char buf[256];
    for (const EpochLog& e : log) {
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f\n", e.epoch, e.train_loss,
                      e.train_vol, e.val_vol, e.val_sigma_l1, e.val_alpha_l1, e.val_z_gap, e.seconds);
        out += buf;
    }
    io::write_file(path, out);
}

tensor::ScatterField infer(Model& model, const std::array<Image, 6>& images, const std::array<Image, 6>& fg,
                           const OccupancyMask& mask, const GridSpec& grid) {
    if (!model.trained()) throw ConfigError("model has no trained weights");
    if (!(grid.shape() == Shape3::cube(model.config().grid)) || !(mask.shape() == grid.shape()))
        throw ShapeError("grid spec or mask does not match the model resolution");
    Prediction p = predict(model, images, fg);
    tensor::ScatterField f;
    f.sigma = std::move(p.sigma);
    f.albedo = std::move(p.alpha);
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (!mask[i]) f.sigma[i] = f.albedo[i] = 0.0;
    f.scale = model.config().scale_head ? p.s_hat : 0.5 * (model.config().density.lo + model.config().density.hi);
    return f;
}

}  // namespace hscat::tensois
