#pragma once

#include <array>
#include <string>
#include <optional>
#include <variant>

#include "hscat/grid.hpp"
#include "hscat/image.hpp"

namespace hscat::lighting {

inline constexpr int kShCount = 9;

// Radiance SH of an environment: rows are RGB, columns the nine real SH
// basis functions of bands 0..2.
struct SHCoeffs {
    std::array<std::array<double, kShCount>, 3> c{};
    friend bool operator==(const SHCoeffs&, const SHCoeffs&) = default;
};

// Real SH, ordering (0,0), (1,-1), (1,0), (1,1), (2,-2), (2,-1), (2,0), (2,1), (2,2).
// Non-unit input is normalized; `warned` (if given) reports that it happened.
std::array<double, kShCount> sh_basis(Vec3 dir, bool* warned = nullptr);

// Direction of the center of lat-long pixel (x, y). Row 0 looks toward +z;
// longitude 0 points along +x.
Vec3 latlong_direction(double u, double v);
double latlong_pixel_solid_angle(int y, int width, int height);

SHCoeffs project_envmap(const Image& latlong);
std::array<double, 3> eval_sh(const SHCoeffs& coeffs, Vec3 dir);

// Lat-long lookup (nearest pixel).
std::array<double, 3> sample_latlong(const Image& latlong, Vec3 dir);

enum class PointLightSlot { colocated, left, right };

struct PointLight {
    Vec3 position{};
    double intensity = 1.0;  // radiant intensity, W/sr
    PointLightSlot slot = PointLightSlot::colocated;
};

struct Environment {
    std::optional<SHCoeffs> sh;
    std::optional<Image> latlong;

    std::array<double, 3> radiance(Vec3 dir) const;
};

struct LightConfig {
    std::variant<PointLight, Environment> light;

    void validate() const;
    bool is_point() const { return std::holds_alternative<PointLight>(light); }
    int channels() const { return is_point() ? 1 : 3; }
};

// Azimuth offset of the side lights relative to their camera, degrees.
inline constexpr double kSideLightAzimuthDeg = 60.0;

// Point light for camera at azimuth `camera_azimuth_deg` on a circle of `radius`.
PointLight olat_light(PointLightSlot slot, double camera_azimuth_deg, double radius,
                      double intensity);

// Smooth two-lobe "sky" environment used by the built-in env presets.
SHCoeffs preset_environment(int which);

const char* slot_name(PointLightSlot slot);
PointLightSlot slot_from_name(const std::string& name);

}  // namespace hscat::lighting
