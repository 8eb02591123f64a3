#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hscat/dataset.hpp"
#include "hscat/tensois.hpp"

namespace hscat::evaluation {

// One homogeneous test object: constant extinction and albedo inside a shape.
struct HomoRow {
    std::string shape;
    int draw = 0;
    double gt_sigma_t = 0.0;  // 1/m
    double gt_alpha = 0.0;
    // Over occupied voxels. Extinction is reported as s_hat * sigma_hat / s_max.
    double sigma_mean = 0.0, sigma_std = 0.0;
    double alpha_mean = 0.0, alpha_std = 0.0;
};

struct HomoTable {
    std::vector<HomoRow> rows;
    // Absolute error of the per-sample mean versus GT (normalized extinction).
    double sigma_mae = 0.0, sigma_mae_std = 0.0;
    double alpha_mae = 0.0, alpha_mae_std = 0.0;
};

struct HomoConfig {
    std::vector<std::string> shapes;  // defaults to the first five builtin shapes
    int draws = 5;
    std::uint64_t seed = 0;
};

// sigma_t ~ U[lo, hi] of the point-light range, alpha ~ U[0.3, 0.95], rendered
// with colocated point lights in the rig described by `data`.
HomoTable homo_eval(tensois::Model& model, const dataset::DatasetConfig& data, const HomoConfig& cfg);

std::string homo_csv(const HomoTable& t);

}  // namespace hscat::evaluation
