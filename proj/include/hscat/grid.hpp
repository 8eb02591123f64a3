#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "hscat/error.hpp"

namespace hscat {

struct Shape3 {
    int i = 0;
    int j = 0;
    int k = 0;

    std::size_t size() const { return std::size_t(i) * std::size_t(j) * std::size_t(k); }
    bool positive() const { return i > 0 && j > 0 && k > 0; }
    static Shape3 cube(int n) { return {n, n, n}; }
    friend bool operator==(const Shape3&, const Shape3&) = default;
};

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double& operator[](int a) { return a == 0 ? x : (a == 1 ? y : z); }
    double operator[](int a) const { return a == 0 ? x : (a == 1 ? y : z); }

    friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend Vec3 operator-(Vec3 a) { return {-a.x, -a.y, -a.z}; }
    friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
    friend Vec3 operator*(Vec3 a, double s) { return s * a; }
    friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
double length(Vec3 a);
Vec3 normalize(Vec3 a);

// Dense 3D array, row-major with k fastest: index (i * J + j) * K + k.
template <typename T>
class Grid3 {
public:
    Grid3() = default;
    explicit Grid3(Shape3 shape, T fill = T{}) : shape_(shape) {
        if (!shape.positive()) throw ShapeError("grid shape must be positive");
        data_.assign(shape.size(), fill);
    }

    const Shape3& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }

    std::size_t index(int i, int j, int k) const {
        return (std::size_t(i) * shape_.j + j) * shape_.k + k;
    }
    T& operator()(int i, int j, int k) { return data_[index(i, j, k)]; }
    const T& operator()(int i, int j, int k) const { return data_[index(i, j, k)]; }
    T& operator[](std::size_t n) { return data_[n]; }
    const T& operator[](std::size_t n) const { return data_[n]; }

    std::vector<T>& values() { return data_; }
    const std::vector<T>& values() const { return data_; }

    friend bool operator==(const Grid3&, const Grid3&) = default;

private:
    Shape3 shape_{};
    std::vector<T> data_;
};

using DenseGrid = Grid3<double>;
using OccupancyMask = Grid3<std::uint8_t>;

// Maps voxel indices to world space. Voxel (i, j, k) has its center at
// lo + (idx + 0.5) * voxel_size along each axis.
struct GridSpec {
    int resolution = 32;
    double side = 0.5;  // meters, cube centered at the origin

    void validate() const;
    Shape3 shape() const { return Shape3::cube(resolution); }
    double voxel_size() const { return side / resolution; }
    double lo() const { return -0.5 * side; }
    double hi() const { return 0.5 * side; }
    Vec3 voxel_center(int i, int j, int k) const;
    bool contains(Vec3 p) const;
};

}  // namespace hscat
