#include "hscat/io.hpp"

#include <png.h>
#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hscat::io {

static_assert(std::endian::native == std::endian::little, "container IO assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'H', 'S', 'C', 'T'};

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw IoError("container truncated");
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

std::size_t dtype_size(DType t) {
    switch (t) {
        case DType::f32: return 4;
        case DType::f64: return 8;
        case DType::u8: return 1;
    }
    return 0;
}

}  // namespace

const char* dtype_name(DType t) {
    switch (t) {
        case DType::f32: return "f32";
        case DType::f64: return "f64";
        case DType::u8: return "u8";
    }
    return "?";
}

DType dtype_from_name(const std::string& s) {
    if (s == "f32") return DType::f32;
    if (s == "f64") return DType::f64;
    if (s == "u8") return DType::u8;
    throw IoError("unknown dtype '" + s + "'");
}

const Array& Container::get(const std::string& name) const {
    for (const Array& a : arrays)
        if (a.name == name) return a;
    throw IoError("container has no array '" + name + "'");
}

bool Container::has(const std::string& name) const {
    for (const Array& a : arrays)
        if (a.name == name) return true;
    return false;
}

void Container::add(Array a) {
    std::size_t n = 1;
    for (int d : a.shape) n *= std::size_t(d);
    if (n != a.values.size()) throw ShapeError("array '" + a.name + "' values do not match its shape");
    arrays.push_back(std::move(a));
}

std::uint32_t crc32(const void* data, std::size_t n) {
    uLong c = ::crc32(0L, Z_NULL, 0);
    const auto* p = static_cast<const Bytef*>(data);
    while (n > 0) {
        const uInt chunk = uInt(std::min<std::size_t>(n, 1u << 30));
        c = ::crc32(c, p, chunk);
        p += chunk;
        n -= chunk;
    }
    return std::uint32_t(c);
}

std::string encode(const Container& c, std::uint16_t minor) {
    std::string payload;
    json index = json::array();
    for (const Array& a : c.arrays) {
        index.push_back({{"name", a.name}, {"shape", a.shape}, {"dtype", dtype_name(a.dtype)},
                         {"offset", payload.size()}, {"count", a.values.size()}});
        for (double v : a.values) {
            switch (a.dtype) {
                case DType::f32: put(payload, static_cast<float>(v)); break;
                case DType::f64: put(payload, v); break;
                case DType::u8: put(payload, static_cast<std::uint8_t>(v)); break;
            }
        }
    }
    const std::string header = json{{"meta", c.meta}, {"arrays", index}}.dump();
    std::string out(kMagic, 4);
    put(out, (std::uint32_t(kFormatMajor) << 16) | minor);
    put(out, std::uint32_t(header.size()));
    out += header;
    put(out, std::uint64_t(payload.size()));
    out += payload;
    put(out, crc32(payload.data(), payload.size()));
    return out;
}

Container decode(const std::string& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw IoError("bad container magic");
    std::size_t pos = 4;
    const auto version = take<std::uint32_t>(bytes, pos);
    if ((version >> 16) != kFormatMajor)
        throw IoError("unsupported container major version " + std::to_string(version >> 16));
    const auto hlen = take<std::uint32_t>(bytes, pos);
    if (pos + hlen > bytes.size()) throw IoError("container truncated in header");
    json header;
    try {
        header = json::parse(bytes.substr(pos, hlen));
    } catch (const json::exception& e) {
        throw IoError(std::string("container header is not valid JSON: ") + e.what());
    }
    pos += hlen;
    const auto plen = take<std::uint64_t>(bytes, pos);
    if (pos + plen + 4 > bytes.size()) throw IoError("container payload truncated");
    const char* payload = bytes.data() + pos;
    std::size_t crc_pos = pos + plen;
    const auto stored = take<std::uint32_t>(bytes, crc_pos);
    if (crc32(payload, plen) != stored) throw IoError("container checksum mismatch");

    Container c;
    c.meta = header.at("meta");
    for (const json& e : header.at("arrays")) {
        Array a;
        a.name = e.at("name").get<std::string>();
        a.shape = e.at("shape").get<std::vector<int>>();
        a.dtype = dtype_from_name(e.at("dtype").get<std::string>());
        const auto offset = e.at("offset").get<std::uint64_t>();
        const auto count = e.at("count").get<std::uint64_t>();
        if (offset + count * dtype_size(a.dtype) > plen) throw IoError("array '" + a.name + "' exceeds payload");
        a.values.resize(count);
        const char* p = payload + offset;
        for (std::uint64_t n = 0; n < count; ++n) {
            switch (a.dtype) {
                case DType::f32: {
                    float f;
                    std::memcpy(&f, p + n * 4, 4);
                    a.values[n] = f;
                    break;
                }
                case DType::f64: std::memcpy(&a.values[n], p + n * 8, 8); break;
                case DType::u8: a.values[n] = static_cast<unsigned char>(p[n]); break;
            }
        }
        c.add(std::move(a));
    }
    return c;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f.write(bytes.data(), std::streamsize(bytes.size()));
    if (!f) throw IoError("write failed for " + path.string());
}

void write_container(const std::filesystem::path& path, const Container& c) { write_file(path, encode(c)); }

Container read_container(const std::filesystem::path& path) { return decode(read_file(path)); }

Array grid_array(const std::string& name, const DenseGrid& g, DType dtype) {
    const Shape3 s = g.shape();
    return {name, {s.i, s.j, s.k}, dtype, g.values()};
}

Array mask_array(const std::string& name, const OccupancyMask& m) {
    const Shape3 s = m.shape();
    return {name, {s.i, s.j, s.k}, DType::u8, std::vector<double>(m.values().begin(), m.values().end())};
}

DenseGrid array_grid(const Array& a) {
    if (a.shape.size() != 3) throw IoError("array '" + a.name + "' is not a 3D grid");
    DenseGrid g(Shape3{a.shape[0], a.shape[1], a.shape[2]});
    g.values() = a.values;
    return g;
}

OccupancyMask array_mask(const Array& a) {
    if (a.shape.size() != 3) throw IoError("array '" + a.name + "' is not a 3D grid");
    OccupancyMask m(Shape3{a.shape[0], a.shape[1], a.shape[2]});
    for (std::size_t n = 0; n < a.values.size(); ++n) {
        if (a.values[n] != 0.0 && a.values[n] != 1.0) throw IoError("mask values must be 0 or 1");
        m[n] = a.values[n] != 0.0 ? 1 : 0;
    }
    return m;
}

json noise_spec_json(const noise::NoiseSpec& s) {
    return {{"grid_size", s.grid_size}, {"octaves", s.octaves},
            {"base_frequency_exponent", s.base_frequency_exponent}, {"seed", s.seed}};
}

noise::NoiseSpec noise_spec_from_json(const json& j) {
    noise::NoiseSpec s;
    s.grid_size = j.at("grid_size").get<int>();
    s.octaves = j.at("octaves").get<int>();
    s.base_frequency_exponent = j.at("base_frequency_exponent").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.validate();
    return s;
}

std::string encode_volume(const VolumeFile& v) {
    v.field.validate();
    if (!(v.mask.shape() == v.field.sigma.shape())) throw ShapeError("mask and field shapes differ");
    Container c;
    c.meta = {{"role", "volume"}, {"scale", v.field.scale}, {"provenance", v.provenance}};
    c.add(grid_array("sigma", v.field.sigma));
    c.add(grid_array("alpha", v.field.albedo));
    c.add(mask_array("mask", v.mask));
    return encode(c);
}

void write_volume(const std::filesystem::path& path, const VolumeFile& v) { write_file(path, encode_volume(v)); }

VolumeFile read_volume(const std::filesystem::path& path) {
    const Container c = read_container(path);
    if (c.meta.value("role", "") != "volume") throw IoError(path.string() + " is not a volume container");
    VolumeFile v;
    v.field.sigma = array_grid(c.get("sigma"));
    v.field.albedo = array_grid(c.get("alpha"));
    v.field.scale = c.meta.at("scale").get<double>();
    v.mask = array_mask(c.get("mask"));
    v.provenance = c.meta.value("provenance", json::object());
    return v;
}

Container vm_container(const tensor::VMDecomposition& vm, const std::string& role_name) {
    vm.validate();
    Container c;
    c.meta = {{"role", "vm"}, {"parameter", role_name}, {"rank", vm.rank},
              {"shape", {vm.shape.i, vm.shape.j, vm.shape.k}}};
    const int R = vm.rank;
    const Shape3 s = vm.shape;
    c.add({"vx", {R, s.i}, DType::f32, vm.vx});
    c.add({"vy", {R, s.j}, DType::f32, vm.vy});
    c.add({"vz", {R, s.k}, DType::f32, vm.vz});
    c.add({"m_yz", {R, s.j, s.k}, DType::f32, vm.m_yz});
    c.add({"m_xz", {R, s.i, s.k}, DType::f32, vm.m_xz});
    c.add({"m_xy", {R, s.i, s.j}, DType::f32, vm.m_xy});
    return c;
}

tensor::VMDecomposition container_vm(const Container& c) {
    if (c.meta.value("role", "") != "vm") throw IoError("container is not a VM decomposition");
    const auto shape = c.meta.at("shape").get<std::vector<int>>();
    tensor::VMDecomposition vm(c.meta.at("rank").get<int>(), Shape3{shape.at(0), shape.at(1), shape.at(2)});
    vm.vx = c.get("vx").values;
    vm.vy = c.get("vy").values;
    vm.vz = c.get("vz").values;
    vm.m_yz = c.get("m_yz").values;
    vm.m_xz = c.get("m_xz").values;
    vm.m_xy = c.get("m_xy").values;
    vm.validate();
    return vm;
}

Container sh_container(const lighting::SHCoeffs& sh) {
    Container c;
    c.meta = {{"role", "sh"}};
    std::vector<double> v;
    for (const auto& row : sh.c) v.insert(v.end(), row.begin(), row.end());
    c.add({"sh", {3, lighting::kShCount}, DType::f64, v});
    return c;
}

lighting::SHCoeffs container_sh(const Container& c) {
    if (c.meta.value("role", "") != "sh") throw IoError("container is not an SH coefficient set");
    const Array& a = c.get("sh");
    if (a.values.size() != 3 * lighting::kShCount) throw IoError("SH array has the wrong size");
    lighting::SHCoeffs sh;
    for (int r = 0; r < 3; ++r)
        for (int i = 0; i < lighting::kShCount; ++i) sh.c[r][i] = a.values[std::size_t(r * lighting::kShCount + i)];
    return sh;
}

std::string encode_pfm(const Image& img) {
    if (img.channels != 1 && img.channels != 3) throw ShapeError("PFM supports 1 or 3 channels");
    std::string out = img.channels == 3 ? "PF\n" : "Pf\n";
    out += std::to_string(img.width) + " " + std::to_string(img.height) + "\n-1.0\n";
    for (int y = img.height - 1; y >= 0; --y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) put(out, static_cast<float>(img.at(c, y, x)));
    return out;
}

void write_pfm(const std::filesystem::path& path, const Image& img) { write_file(path, encode_pfm(img)); }

Image read_pfm(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    std::istringstream in(bytes);
    std::string tag;
    int w = 0, h = 0;
    double scale = 0.0;
    in >> tag >> w >> h >> scale;
    if (!in || (tag != "PF" && tag != "Pf") || w <= 0 || h <= 0) throw IoError("malformed PFM header in " + path.string());
    in.get();
    std::size_t pos = std::size_t(in.tellg());
    const int channels = tag == "PF" ? 3 : 1;
    if (bytes.size() < pos + std::size_t(w) * h * channels * 4) throw IoError("PFM payload truncated");
    const bool little = scale < 0.0;
    Image img(w, h, channels);
    for (int y = h - 1; y >= 0; --y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c) {
                std::uint32_t raw;
                std::memcpy(&raw, bytes.data() + pos, 4);
                pos += 4;
                if (!little) raw = __builtin_bswap32(raw);
                float f;
                std::memcpy(&f, &raw, 4);
                img.at(c, y, x) = f * std::abs(scale);
            }
    return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3) throw ShapeError("PNG supports 1 or 3 channels");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    png_image pi;
    std::memset(&pi, 0, sizeof(pi));
    pi.version = PNG_IMAGE_VERSION;
    pi.width = png_uint_32(img.width);
    pi.height = png_uint_32(img.height);
    pi.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<png_byte> buf(std::size_t(img.width) * img.height * img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                const double v = std::pow(std::clamp(img.at(c, y, x), 0.0, 1.0), 1.0 / 2.2);
                buf[(std::size_t(y) * img.width + x) * img.channels + c] = png_byte(std::lround(v * 255.0));
            }
    if (!png_image_write_to_file(&pi, path.string().c_str(), 0, buf.data(), 0, nullptr))
        throw IoError("PNG write failed for " + path.string() + ": " + pi.message);
}

Image read_png(const std::filesystem::path& path) {
    png_image pi;
    std::memset(&pi, 0, sizeof(pi));
    pi.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&pi, path.string().c_str()))
        throw IoError("cannot read PNG " + path.string() + ": " + pi.message);
    pi.format = PNG_FORMAT_RGB;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(pi));
    if (!png_image_finish_read(&pi, nullptr, buf.data(), 0, nullptr))
        throw IoError("PNG decode failed for " + path.string() + ": " + pi.message);
    Image img(int(pi.width), int(pi.height), 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = std::pow(buf[(std::size_t(y) * img.width + x) * 3 + c] / 255.0, 2.2);
    return img;
}

std::string hash_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace hscat::io
