#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hscat/autodiff.hpp"
#include "hscat/dataset.hpp"
#include "hscat/image.hpp"
#include "hscat/lighting.hpp"
#include "hscat/tensor.hpp"

namespace hscat::tensois {

using json = nlohmann::json;

struct ModelConfig {
    int image_size = 64;
    int channels_in = 1;  // 1 for point lighting, 9 for environment (I | I*M | M)
    std::vector<int> encoder_widths{16, 32, 64, 128};
    int decoder_width = 64;
    int rank = 10;
    int grid = 32;
    bool scale_head = true;
    bool light_head = false;
    bool direct_regression = false;  // dense-grid head instead of VM branches
    tensor::DensityRange density{8.0, 80.0};
    std::uint64_t seed = 0;

    void validate() const;
    int latent_size() const;  // spatial side of each per-view feature map
    json to_json() const;
    static ModelConfig from_json(const json& j);
};

// Point or env model matching a dataset's layout.
ModelConfig config_for(const dataset::DatasetConfig& data, std::uint64_t seed);

struct TrainConfig {
    double lr = 1e-4;
    int batch = 8;   // light pairs per Adam step
    int epochs = 10;
    double lambda = 0.1;
    bool multi_light = true;  // false trains on the first light of each pair only
    std::uint64_t seed = 0;   // shuffling
    int max_steps = -1;       // stop early after this many Adam steps (-1: no limit)

    void validate() const;
    json to_json() const;
    static TrainConfig from_json(const json& j);
};

// Named trainable blocks, used by the gradient-flow invariant.
struct Block {
    std::string name;
    std::vector<ad::Parameter*> params;
};

class Model {
public:
    explicit Model(ModelConfig cfg);
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
    Model(Model&&) = delete;

    const ModelConfig& config() const { return cfg_; }
    std::vector<ad::Parameter*> parameters();
    std::vector<Block> blocks();
    std::size_t parameter_count() const;

    // True once weights came from training or a checkpoint.
    bool trained() const { return trained_; }
    void mark_trained() { trained_ = true; }

    // Zeroes the last layer of every decoder branch (weights and biases).
    void zero_final_decoder_layers();

    void save(const std::filesystem::path& path, const json& extra_meta = json::object()) const;
    static std::unique_ptr<Model> load(const std::filesystem::path& path, json* meta = nullptr);
    // Copies weights from another model with an identical config.
    void copy_weights_from(const Model& other);

    struct Conv {
        ad::Parameter w, b;
        int stride = 1, pad_h = 1, pad_w = 1;
    };
    struct Dense {
        ad::Parameter w, b;
    };
    struct Encoder {
        std::vector<Conv> layers;
    };
    struct Decoder {
        std::vector<Conv> stages;  // each followed by relu and depth_to_space
        Conv out;
    };
    struct Heads {
        std::vector<Dense> scale;
        std::vector<Dense> light;
    };

    std::array<Encoder, 6> encoders;
    // Indices: 0 sigma, 1 alpha. Direct regression uses matrix[] only.
    std::array<Decoder, 2> vector_dec;
    std::array<Decoder, 2> matrix_dec;
    Heads heads;

private:
    ModelConfig cfg_;
    bool trained_ = false;
    std::vector<ad::Parameter*> all_;
};

// Network inputs for one view, [C, H, W].
ad::Tensor view_input(const Image& image, const Image& fg, int channels_in);

// Graph outputs of one forward pass.
struct ForwardVars {
    ad::Var sigma;  // [N, N, N] unclamped reconstruction
    ad::Var alpha;
    ad::Var scale;  // [1] normalized
    ad::Var light;  // [27] when the light head is present
    ad::Var z;      // [6 * C, h, w]
    std::vector<ad::Var> sigma_vm, alpha_vm;  // [vx, vy, vz, m_yz, m_xz, m_xy] (VM mode)
};

ForwardVars forward(Model& model, ad::Tape& tape, const std::array<Image, 6>& images,
                    const std::array<Image, 6>& fg);

struct Prediction {
    std::optional<tensor::VMDecomposition> vm_sigma, vm_alpha;  // empty in direct mode
    DenseGrid sigma, alpha;  // readout-clamped grids
    double s_hat = 0.0;      // denormalized density scale
    double s_norm = 0.0;
    std::optional<lighting::SHCoeffs> l_sh;
    ad::Tensor z;
};

Prediction predict(Model& model, const std::array<Image, 6>& images, const std::array<Image, 6>& fg);

// Ground truth for one light variant.
struct Target {
    const tensor::ScatterField* field = nullptr;
    const OccupancyMask* mask = nullptr;
    std::optional<lighting::SHCoeffs> sh;
};

struct LossTerms {
    ad::Var total;
    double vol = 0.0, sigma_l1 = 0.0, alpha_l1 = 0.0, scale = 0.0, light = 0.0, reg = 0.0;
};

// L_vol + L_scale + L_light for one prediction.
LossTerms loss_single(const Model& model, const ForwardVars& fv, const Target& gt);
// Two-light objective: mean of the per-light terms plus lambda * mse(z1, z2).
LossTerms loss_total(const Model& model, const ForwardVars& f1, const Target& g1, const ForwardVars& f2,
                     const Target& g2, double lambda);

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double train_vol = 0.0;
    double val_vol = 0.0;
    double val_sigma_l1 = 0.0;
    double val_alpha_l1 = 0.0;
    double val_z_gap = 0.0;
    double seconds = 0.0;
};

struct EvalResult {
    double vol = 0.0;       // mean over samples and lights of L_vol
    double sigma_l1 = 0.0;
    double alpha_l1 = 0.0;
    double scale_abs = 0.0;  // |s_hat - s| in density units
    double z_gap = 0.0;      // mean squared difference of z between the two lights
    std::size_t samples = 0;
};

EvalResult evaluate(Model& model, const std::vector<const dataset::PairSample*>& samples);

struct TrainResult {
    std::vector<EpochLog> log;
    int best_epoch = -1;
    double best_val = 0.0;
    long steps = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Adam on the two-light objective. `val` may be empty (best = last epoch).
// When `best_checkpoint` is non-empty the best-val weights are written there.
TrainResult train(Model& model, const std::vector<const dataset::PairSample*>& train_set,
                  const std::vector<const dataset::PairSample*>& val, const TrainConfig& tc,
                  const std::filesystem::path& best_checkpoint = {}, const EpochCallback& on_epoch = {});

void write_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log);

// Readout: reconstruct, clamp, apply the occupancy mask, denormalize s.
tensor::ScatterField infer(Model& model, const std::array<Image, 6>& images, const std::array<Image, 6>& fg,
                           const OccupancyMask& mask, const GridSpec& grid);

// Alpha readout range.
inline constexpr double kAlphaLo = 0.3;
inline constexpr double kAlphaHi = 0.95;

}  // namespace hscat::tensois
