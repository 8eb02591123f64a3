#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hscat/grid.hpp"
#include "hscat/image.hpp"
#include "hscat/lighting.hpp"
#include "hscat/noise.hpp"
#include "hscat/tensor.hpp"

namespace hscat::io {

using json = nlohmann::json;

// Binary container layout (little-endian):
//   "HSCT" | u32 version (major << 16 | minor) | u32 header length | header JSON
//   | u64 payload length | payload | u32 CRC32 of payload
// Readers accept any minor version of a known major.
inline constexpr std::uint16_t kFormatMajor = 1;
inline constexpr std::uint16_t kFormatMinor = 0;

enum class DType { f32, f64, u8 };
const char* dtype_name(DType t);
DType dtype_from_name(const std::string& s);

struct Array {
    std::string name;
    std::vector<int> shape;
    DType dtype = DType::f32;
    std::vector<double> values;  // widened in memory; narrowed to dtype on write
};

struct Container {
    json meta = json::object();
    std::vector<Array> arrays;

    const Array& get(const std::string& name) const;
    bool has(const std::string& name) const;
    void add(Array a);
};

std::string encode(const Container& c, std::uint16_t minor = kFormatMinor);
Container decode(const std::string& bytes);
void write_container(const std::filesystem::path& path, const Container& c);
Container read_container(const std::filesystem::path& path);

std::uint32_t crc32(const void* data, std::size_t n);

// Grid <-> array helpers.
Array grid_array(const std::string& name, const DenseGrid& g, DType dtype = DType::f32);
Array mask_array(const std::string& name, const OccupancyMask& m);
DenseGrid array_grid(const Array& a);
OccupancyMask array_mask(const Array& a);

json noise_spec_json(const noise::NoiseSpec& s);
noise::NoiseSpec noise_spec_from_json(const json& j);

// Volume container: role "volume" with sigma, alpha and mask arrays.
struct VolumeFile {
    tensor::ScatterField field;
    OccupancyMask mask;
    json provenance = json::object();  // seeds, noise specs, shape id, ...
};
std::string encode_volume(const VolumeFile& v);
void write_volume(const std::filesystem::path& path, const VolumeFile& v);
VolumeFile read_volume(const std::filesystem::path& path);

Container vm_container(const tensor::VMDecomposition& vm, const std::string& role_name);
tensor::VMDecomposition container_vm(const Container& c);

Container sh_container(const lighting::SHCoeffs& sh);
lighting::SHCoeffs container_sh(const Container& c);

// Portable float map (Pf / PF), stored bottom-to-top, little-endian.
void write_pfm(const std::filesystem::path& path, const Image& img);
Image read_pfm(const std::filesystem::path& path);
std::string encode_pfm(const Image& img);

// 8-bit PNG, clamped to [0, 1] and gamma 2.2 encoded; reading linearizes.
void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

// 64-bit FNV-1a of a string, as 16 hex digits.
std::string hash_hex(const std::string& bytes);

}  // namespace hscat::io
