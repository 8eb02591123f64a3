#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hscat/grid.hpp"
#include "hscat/image.hpp"
#include "hscat/render.hpp"
#include "hscat/tensor.hpp"

namespace hscat::inverse_opt {

// Anisotropic total variation: mean over voxels with three forward neighbours
// of |dx| + |dy| + |dz|.
double tv_loss(const DenseGrid& g);
// Adds weight * d tv_loss / d g into `grad`.
void tv_gradient(const DenseGrid& g, double weight, DenseGrid& grad);

// Chain rule through tensor::reconstruct: gradients of the VM components given
// the gradient with respect to the reconstructed grid.
tensor::VMDecomposition vm_backward(const tensor::VMDecomposition& vm, const DenseGrid& d_grid);

enum class Parameterization { dense, vm };
enum class ImageLoss { l1, mse };

struct OptimConfig {
    Parameterization param = Parameterization::dense;
    int rank = 10;
    double tv_weight = 0.0;
    int steps = 2000;
    double lr = 0.0;  // <= 0 selects default_lr(param)
    ImageLoss loss = ImageLoss::l1;
    std::uint64_t seed = 0;
    tensor::DensityRange density{8.0, 80.0};
    render::RenderQuality quality;

    void validate() const;
    double effective_lr() const;
};

// Adam step sizes for the baseline.
double default_lr(Parameterization p);

struct TracePoint {
    int step = 0;
    double image_loss = 0.0;  // configured loss
    double image_mse = 0.0;
    double tv = 0.0;          // tv(sigma) + tv(alpha)
    double best = 0.0;        // best image loss so far
};

struct OptimResult {
    tensor::ScatterField field;  // iterate with the best image loss
    std::vector<TracePoint> trace;
    double initial_mse = 0.0;
    double final_mse = 0.0;  // image MSE of `field`
};

// Thrown when the image loss exceeds 10x its initial value.
class Diverged : public NumericalError {
public:
    Diverged(const std::string& what, std::vector<TracePoint> trace)
        : NumericalError(what), trace_(std::move(trace)) {}
    const std::vector<TracePoint>& trace() const { return trace_; }

private:
    std::vector<TracePoint> trace_;
};

using StepCallback = std::function<void(const TracePoint&)>;

// Adam on image loss + tv_weight * (tv(sigma) + tv(alpha)) through the
// ray-march adjoint. `scene.grid` fixes the resolution; `targets` are the six
// views rendered under `scene`.
OptimResult optimize_scene(const std::array<Image, 6>& targets, const OccupancyMask& mask,
                           const render::SceneConfig& scene, const OptimConfig& cfg,
                           const StepCallback& on_step = {});

void write_trace_csv(const std::string& path, const std::vector<TracePoint>& trace);

}  // namespace hscat::inverse_opt
