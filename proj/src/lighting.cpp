#include "hscat/lighting.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace hscat::lighting {

namespace {
constexpr double kPi = std::numbers::pi;
}

std::array<double, kShCount> sh_basis(Vec3 d, bool* warned) {
    const double len = length(d);
    const bool off = std::abs(len - 1.0) > 1e-6;
    if (warned) *warned = off;
    if (off) {
        if (len == 0.0) throw ConfigError("sh_basis: zero direction");
        d = (1.0 / len) * d;
    }
    const double x = d.x, y = d.y, z = d.z;
    return {
        0.28209479177387814,                        // 1/2 sqrt(1/pi)
        0.48860251190291992 * y,                    // sqrt(3/4pi)
        0.48860251190291992 * z,
        0.48860251190291992 * x,
        1.0925484305920792 * x * y,                 // 1/2 sqrt(15/pi)
        1.0925484305920792 * y * z,
        0.31539156525252005 * (3.0 * z * z - 1.0),  // 1/4 sqrt(5/pi)
        1.0925484305920792 * x * z,
        0.54627421529603959 * (x * x - y * y),      // 1/4 sqrt(15/pi)
    };
}

Vec3 latlong_direction(double u, double v) {
    const double phi = 2.0 * kPi * u;
    const double theta = kPi * v;
    return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
}

double latlong_pixel_solid_angle(int y, int width, int height) {
    const double t0 = kPi * y / height, t1 = kPi * (y + 1) / height;
    return (2.0 * kPi / width) * (std::cos(t0) - std::cos(t1));
}

SHCoeffs project_envmap(const Image& map) {
    if (map.width < 8 || map.height < 4) throw ShapeError("environment map must be at least 8x4");
    if (map.channels != 1 && map.channels != 3) throw ShapeError("environment map must have 1 or 3 channels");
    SHCoeffs out;
    for (int y = 0; y < map.height; ++y) {
        const double dw = latlong_pixel_solid_angle(y, map.width, map.height);
        for (int x = 0; x < map.width; ++x) {
            const auto basis =
                sh_basis(latlong_direction((x + 0.5) / map.width, (y + 0.5) / map.height));
            for (int c = 0; c < 3; ++c) {
                const double L = map.at(map.channels == 1 ? 0 : c, y, x);
                if (std::isnan(L)) throw ConfigError("environment map contains NaN");
                for (int i = 0; i < kShCount; ++i) out.c[c][i] += L * basis[i] * dw;
            }
        }
    }
    return out;
}

std::array<double, 3> eval_sh(const SHCoeffs& coeffs, Vec3 dir) {
    const auto basis = sh_basis(dir);
    std::array<double, 3> out{};
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < kShCount; ++i) out[c] += coeffs.c[c][i] * basis[i];
    return out;
}

std::array<double, 3> sample_latlong(const Image& map, Vec3 d) {
    d = normalize(d);
    double phi = std::atan2(d.y, d.x);
    if (phi < 0) phi += 2.0 * kPi;
    const double theta = std::acos(std::clamp(d.z, -1.0, 1.0));
    const int x = std::min(map.width - 1, int(phi / (2.0 * kPi) * map.width));
    const int y = std::min(map.height - 1, int(theta / kPi * map.height));
    std::array<double, 3> out{};
    for (int c = 0; c < 3; ++c) out[c] = map.at(map.channels == 1 ? 0 : c, y, x);
    return out;
}

std::array<double, 3> Environment::radiance(Vec3 dir) const {
    if (latlong) return sample_latlong(*latlong, dir);
    if (sh) return eval_sh(*sh, dir);
    return {0.0, 0.0, 0.0};
}

void LightConfig::validate() const {
    if (const auto* p = std::get_if<PointLight>(&light)) {
        if (!(p->intensity > 0.0) || !std::isfinite(p->intensity))
            throw ConfigError("point light intensity must be positive");
    } else {
        const auto& env = std::get<Environment>(light);
        if (env.sh.has_value() == env.latlong.has_value())
            throw ConfigError("environment light needs exactly one of SH coefficients or a lat-long map");
    }
}

PointLight olat_light(PointLightSlot slot, double camera_azimuth_deg, double radius,
                      double intensity) {
    double az = camera_azimuth_deg;
    if (slot == PointLightSlot::left) az += kSideLightAzimuthDeg;
    if (slot == PointLightSlot::right) az -= kSideLightAzimuthDeg;
    const double a = az * kPi / 180.0;
    return {{radius * std::cos(a), radius * std::sin(a), 0.0}, intensity, slot};
}

SHCoeffs preset_environment(int which) {
    // Band-limited sky: bright lobe from a preset sun direction over a soft
    // ambient term, with slightly warm or cool tint.
    const Vec3 sun = which % 2 == 0 ? normalize({0.6, 0.3, 0.75}) : normalize({-0.4, -0.7, 0.6});
    const std::array<double, 3> tint = which % 2 == 0 ? std::array{1.0, 0.92, 0.8}
                                                       : std::array{0.8, 0.9, 1.0};
    const auto basis = sh_basis(sun);
    // Clamped-cosine lobe convolution weights per band: pi, 2pi/3, pi/4.
    const double band[kShCount] = {kPi, 2 * kPi / 3, 2 * kPi / 3, 2 * kPi / 3,
                                   kPi / 4, kPi / 4, kPi / 4, kPi / 4, kPi / 4};
    SHCoeffs out;
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < kShCount; ++i) out.c[c][i] = 0.35 * tint[c] * band[i] * basis[i];
        out.c[c][0] += 0.35 / 0.28209479177387814;
    }
    return out;
}

const char* slot_name(PointLightSlot slot) {
    switch (slot) {
        case PointLightSlot::colocated: return "colocated";
        case PointLightSlot::left: return "left";
        case PointLightSlot::right: return "right";
    }
    return "?";
}

PointLightSlot slot_from_name(const std::string& name) {
    if (name == "colocated") return PointLightSlot::colocated;
    if (name == "left") return PointLightSlot::left;
    if (name == "right") return PointLightSlot::right;
    throw ConfigError("unknown point light slot '" + name + "'");
}

}  // namespace hscat::lighting
