#pragma once

#include <array>

#include "hscat/grid.hpp"
#include "hscat/image.hpp"

namespace hscat::metrics {

// sum(|pred - gt| * M) / sum(M).
double masked_mae(const DenseGrid& pred, const DenseGrid& gt, const OccupancyMask& mask);
// sum((pred - gt)^2 * M) / sum(M).
double masked_mse(const DenseGrid& pred, const DenseGrid& gt, const OccupancyMask& mask);

double image_mse(const Image& a, const Image& b);

inline constexpr std::array<double, 5> kMsSsimWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

struct MsSsimResult {
    double value = 0.0;
    int scales = 0;
    bool reduced_scales = false;  // fewer than five scales, weights renormalized
};

// Multi-scale SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
// K2 = 0.03 and dynamic range taken from the pair's maximum. Borders use
// edge replication. Per-scale terms are clamped at 0, channels averaged.
MsSsimResult ms_ssim_detail(const Image& a, const Image& b);
double ms_ssim(const Image& a, const Image& b);

}  // namespace hscat::metrics
