#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>

namespace asurf
{
    struct Vec3
    {
        double x = 0.0, y = 0.0, z = 0.0;

        constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
        constexpr double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

        constexpr Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
        constexpr Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
        constexpr Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }

        friend constexpr Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
        friend constexpr Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
        friend constexpr Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
        friend constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
        friend constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
        friend constexpr Vec3 operator/(const Vec3& a, double s) { return {a.x / s, a.y / s, a.z / s}; }
        friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
    };

    constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
    constexpr Vec3 cross(const Vec3& a, const Vec3& b)
    {
        return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
    }
    constexpr Vec3 cmul(const Vec3& a, const Vec3& b) { return {a.x * b.x, a.y * b.y, a.z * b.z}; }
    constexpr Vec3 cdiv(const Vec3& a, const Vec3& b) { return {a.x / b.x, a.y / b.y, a.z / b.z}; }
    inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
    inline Vec3 normalized(const Vec3& a) { return a / norm(a); }
    inline double max_abs(const Vec3& a) { return std::max({std::abs(a.x), std::abs(a.y), std::abs(a.z)}); }

    struct Int3
    {
        int x = 0, y = 0, z = 0;

        constexpr int operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
        constexpr int& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
        friend constexpr bool operator==(const Int3&, const Int3&) = default;
        friend constexpr auto operator<=>(const Int3&, const Int3&) = default;
    };

    struct Aabb
    {
        Vec3 lo;
        Vec3 hi;

        Vec3 extent() const { return hi - lo; }
        bool contains(const Vec3& p, double tol = 0.0) const
        {
            for (int a = 0; a < 3; ++a)
                if (p[a] < lo[a] - tol || p[a] > hi[a] + tol)
                    return false;
            return true;
        }
    };

    struct Rgb
    {
        double r = 0.0, g = 0.0, b = 0.0;

        constexpr double operator[](int i) const { return i == 0 ? r : (i == 1 ? g : b); }
        constexpr double& operator[](int i) { return i == 0 ? r : (i == 1 ? g : b); }
        constexpr Rgb& operator+=(const Rgb& o) { r += o.r; g += o.g; b += o.b; return *this; }
        friend constexpr Rgb operator+(Rgb a, const Rgb& o) { return a += o; }
        friend constexpr Rgb operator-(const Rgb& a, const Rgb& o) { return {a.r - o.r, a.g - o.g, a.b - o.b}; }
        friend constexpr Rgb operator*(const Rgb& a, double s) { return {a.r * s, a.g * s, a.b * s}; }
        friend constexpr Rgb operator*(double s, const Rgb& a) { return {a.r * s, a.g * s, a.b * s}; }
        friend constexpr bool operator==(const Rgb&, const Rgb&) = default;
    };

    constexpr double dot(const Rgb& a, const Rgb& b) { return a.r * b.r + a.g * b.g + a.b * b.b; }

    inline constexpr double kPi = 3.14159265358979323846;
}  // namespace asurf
