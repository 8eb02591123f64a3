#pragma once

// Desk-scale presets. Bump kDefaultsVersion whenever a value here changes;
// it is recorded in every manifest, checkpoint and run directory.

#include <array>

namespace hscat::defaults {

inline constexpr const char* kDefaultsVersion = "desk-1";

// Mini dataset.
inline constexpr int kMiniGrid = 32;
inline constexpr double kMiniSide = 0.5;           // world-space cube edge
inline constexpr int kMiniImage = 64;
inline constexpr int kMiniDraws = 10;
inline constexpr std::array<double, 3> kMiniScales{20.0, 44.0, 68.0};
inline constexpr std::array<int, 2> kMiniHoldoutDraws{8, 9};
inline constexpr double kMiniLightIntensity = 12.566370614359172;  // unit irradiance at the origin
inline constexpr double kMiniStepsPerVoxel = 2.0;
inline constexpr int kMiniEnvDirections = 32;

// Model.
inline constexpr int kRank = 10;
inline constexpr std::array<int, 4> kEncoderWidths{16, 32, 64, 128};
inline constexpr int kDecoderWidth = 64;
inline constexpr double kLambdaReg = 0.1;
inline constexpr double kReferenceLearningRate = 1e-4;  // full-scale setting
inline constexpr double kDeskLearningRate = 1e-3;
inline constexpr int kDeskBatch = 8;

// Volume-optimization baseline.
inline constexpr int kOptimSteps = 2000;
inline constexpr double kOptimLearningRateDense = 0.02;
inline constexpr double kOptimLearningRateVm = 0.001;
inline constexpr double kOptimTvWeight = 0.0;

}  // namespace hscat::defaults
