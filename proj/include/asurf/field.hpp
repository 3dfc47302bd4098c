#pragma once

/**
 * Voxel grid storage and evaluation of the trilinear fields it carries.
 *
 * Scalars live on voxel vertices. Inside a voxel the eight corners are
 * addressed by the bit pattern (x << 2) | (y << 1) | z of their offset from
 * the lower corner, so corner 0 is (0,0,0), corner 1 is (0,0,1), corner 4 is
 * (1,0,0) and corner 7 is (1,1,1). Every module uses this ordering.
 */

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vec.hpp"

namespace asurf
{
    inline constexpr int kShBasis = 9;
    inline constexpr int kShStride = 3 * kShBasis;  // 9 coefficients x rgb, channel-major

    struct OutOfBounds : std::out_of_range
    {
        using std::out_of_range::out_of_range;
    };

    struct LocalPoint
    {
        Int3 voxel;
        Vec3 xyz;  // relative to the voxel's lower corner, in [0,1]^3
    };

    constexpr Int3 corner_offset(int corner) { return {(corner >> 2) & 1, (corner >> 1) & 1, corner & 1}; }

    /// Resolution and world placement shared by surface and density grids.
    struct GridShape
    {
        Int3 resolution;
        Aabb bbox;

        GridShape() = default;
        GridShape(Int3 res, Aabb box) : resolution(res), bbox(box)
        {
            if (res.x < 1 || res.y < 1 || res.z < 1)
                throw std::invalid_argument("grid resolution must be positive");
            for (int a = 0; a < 3; ++a)
                if (!(box.hi[a] > box.lo[a]))
                    throw std::invalid_argument("grid bbox must have positive extent");
        }

        Int3 vertex_dims() const { return {resolution.x + 1, resolution.y + 1, resolution.z + 1}; }
        std::size_t num_vertices() const
        {
            return std::size_t(resolution.x + 1) * std::size_t(resolution.y + 1) * std::size_t(resolution.z + 1);
        }
        std::size_t num_voxels() const
        {
            return std::size_t(resolution.x) * std::size_t(resolution.y) * std::size_t(resolution.z);
        }
        Vec3 voxel_size() const
        {
            Vec3 e = bbox.extent();
            return {e.x / resolution.x, e.y / resolution.y, e.z / resolution.z};
        }

        std::size_t vertex_index(int i, int j, int k) const
        {
            return std::size_t(i) + std::size_t(resolution.x + 1) * (std::size_t(j) + std::size_t(resolution.y + 1) * std::size_t(k));
        }
        std::size_t vertex_index(Int3 v) const { return vertex_index(v.x, v.y, v.z); }
        Int3 vertex_coords(std::size_t idx) const
        {
            int nx = resolution.x + 1, ny = resolution.y + 1;
            return {int(idx % nx), int((idx / nx) % ny), int(idx / (std::size_t(nx) * ny))};
        }

        std::size_t voxel_index(Int3 v) const
        {
            return std::size_t(v.x) + std::size_t(resolution.x) * (std::size_t(v.y) + std::size_t(resolution.y) * std::size_t(v.z));
        }
        Int3 voxel_coords(std::size_t idx) const
        {
            return {int(idx % resolution.x), int((idx / resolution.x) % resolution.y),
                    int(idx / (std::size_t(resolution.x) * resolution.y))};
        }
        bool voxel_in_range(Int3 v) const
        {
            return v.x >= 0 && v.y >= 0 && v.z >= 0 && v.x < resolution.x && v.y < resolution.y && v.z < resolution.z;
        }

        std::array<std::size_t, 8> corner_indices(Int3 voxel) const
        {
            std::array<std::size_t, 8> out{};
            for (int c = 0; c < 8; ++c)
            {
                Int3 o = corner_offset(c);
                out[c] = vertex_index(voxel.x + o.x, voxel.y + o.y, voxel.z + o.z);
            }
            return out;
        }

        Vec3 to_index_space(const Vec3& world) const { return cdiv(world - bbox.lo, voxel_size()); }
        Vec3 vertex_position(Int3 v) const
        {
            return bbox.lo + cmul(Vec3{double(v.x), double(v.y), double(v.z)}, voxel_size());
        }

        /// Containing voxel and local coordinates. Points on an interior face
        /// resolve to the upper voxel; points on the +bbox faces to the last one.
        LocalPoint locate(const Vec3& world) const
        {
            if (!bbox.contains(world, 1e-12 * max_abs(bbox.extent())))
                throw OutOfBounds("point outside grid bounding box");
            Vec3 q = to_index_space(world);
            LocalPoint lp;
            for (int a = 0; a < 3; ++a)
            {
                int v = static_cast<int>(std::floor(q[a]));
                v = std::clamp(v, 0, resolution[a] - 1);
                lp.voxel[a] = v;
                lp.xyz[a] = std::clamp(q[a] - v, 0.0, 1.0);
            }
            return lp;
        }
    };

    /// Surface grid: surface scalar, raw opacity and SH appearance per vertex,
    /// an occupancy flag per voxel, and the fixed level values.
    struct VoxelGrid : GridShape
    {
        std::vector<double> delta;
        std::vector<double> sigma_alpha;
        std::vector<double> sh;
        std::vector<std::uint8_t> occupancy;
        std::vector<double> levels;

        VoxelGrid() = default;
        VoxelGrid(Int3 res, Aabb box, std::vector<double> level_values)
            : GridShape(res, box),
              delta(num_vertices(), 0.0),
              sigma_alpha(num_vertices(), 0.0),
              sh(num_vertices() * kShStride, 0.0),
              occupancy(num_voxels(), 1),
              levels(std::move(level_values))
        {
            validate();
        }

        bool occupied(Int3 v) const { return occupancy[voxel_index(v)] != 0; }

        void validate() const
        {
            std::size_t nv = num_vertices();
            if (delta.size() != nv || sigma_alpha.size() != nv || sh.size() != nv * kShStride)
                throw std::invalid_argument("vertex array sizes do not match resolution");
            if (occupancy.size() != num_voxels())
                throw std::invalid_argument("occupancy size does not match resolution");
            if (levels.empty())
                throw std::invalid_argument("level list is empty");
            for (std::size_t i = 0; i < levels.size(); ++i)
            {
                if (!std::isfinite(levels[i]))
                    throw std::invalid_argument("level values must be finite");
                if (i > 0 && !(levels[i] > levels[i - 1]))
                    throw std::invalid_argument("level values must be strictly increasing");
            }
        }
    };

    // ---------------------------------------------------------------------
    // Trilinear interpolation

    inline std::array<double, 8> trilinear_weights(const Vec3& p)
    {
        std::array<double, 8> w{};
        for (int c = 0; c < 8; ++c)
        {
            Int3 o = corner_offset(c);
            w[c] = (o.x ? p.x : 1.0 - p.x) * (o.y ? p.y : 1.0 - p.y) * (o.z ? p.z : 1.0 - p.z);
        }
        return w;
    }

    /// d(weight_c)/d(local xyz) for each corner.
    inline std::array<Vec3, 8> trilinear_weight_gradients(const Vec3& p)
    {
        std::array<Vec3, 8> g{};
        for (int c = 0; c < 8; ++c)
        {
            Int3 o = corner_offset(c);
            double wx = o.x ? p.x : 1.0 - p.x, sx = o.x ? 1.0 : -1.0;
            double wy = o.y ? p.y : 1.0 - p.y, sy = o.y ? 1.0 : -1.0;
            double wz = o.z ? p.z : 1.0 - p.z, sz = o.z ? 1.0 : -1.0;
            g[c] = {sx * wy * wz, wx * sy * wz, wx * wy * sz};
        }
        return g;
    }

    /// Nested-lerp form with the canonical corner ordering.
    inline double trilinear_interp(std::span<const double, 8> c, const Vec3& p)
    {
        double x = p.x, y = p.y, z = p.z;
        return (1 - z) * ((1 - y) * ((1 - x) * c[0] + x * c[4]) + y * ((1 - x) * c[2] + x * c[6])) +
               z * ((1 - y) * ((1 - x) * c[1] + x * c[5]) + y * ((1 - x) * c[3] + x * c[7]));
    }

    /// Gradient of the trilinear blend w.r.t. local coordinates.
    inline Vec3 trilinear_local_gradient(std::span<const double, 8> c, const Vec3& p)
    {
        auto g = trilinear_weight_gradients(p);
        Vec3 out;
        for (int k = 0; k < 8; ++k)
            out += g[k] * c[k];
        return out;
    }

    template <typename Grid>
    std::array<double, 8> gather_corners(const Grid& grid, std::span<const double> values, Int3 voxel,
                                         std::size_t stride = 1, std::size_t offset = 0)
    {
        auto idx = grid.corner_indices(voxel);
        std::array<double, 8> out{};
        for (int c = 0; c < 8; ++c)
            out[c] = values[idx[c] * stride + offset];
        return out;
    }

    struct Channel
    {
        enum class Kind { Delta, SigmaAlpha, Sh };
        Kind kind = Kind::Delta;
        int sh_index = 0;  // 0..26 when kind == Sh

        static Channel delta() { return {Kind::Delta, 0}; }
        static Channel sigma_alpha() { return {Kind::SigmaAlpha, 0}; }
        static Channel sh_coeff(int k) { return {Kind::Sh, k}; }
    };

    /// Interpolated channel value at a world point, or nullopt when the
    /// containing voxel is pruned (the caller treats it as empty space).
    inline std::optional<double> sample_channel(const VoxelGrid& grid, const Vec3& point, Channel ch)
    {
        LocalPoint lp = grid.locate(point);
        if (!grid.occupied(lp.voxel))
            return std::nullopt;
        std::array<double, 8> c{};
        switch (ch.kind)
        {
            case Channel::Kind::Delta: c = gather_corners(grid, grid.delta, lp.voxel); break;
            case Channel::Kind::SigmaAlpha: c = gather_corners(grid, grid.sigma_alpha, lp.voxel); break;
            case Channel::Kind::Sh: c = gather_corners(grid, grid.sh, lp.voxel, kShStride, std::size_t(ch.sh_index)); break;
        }
        return trilinear_interp(c, lp.xyz);
    }

    // ---------------------------------------------------------------------
    // Spherical harmonics, degree <= 2

    inline std::array<double, kShBasis> sh_basis(const Vec3& d)
    {
        constexpr double C0 = 0.28209479177387814;
        constexpr double C1 = 0.4886025119029199;
        constexpr double C2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                  -1.0925484305920792, 0.5462742152960396};
        double x = d.x, y = d.y, z = d.z;
        return {C0,
                -C1 * y,
                C1 * z,
                -C1 * x,
                C2[0] * x * y,
                C2[1] * y * z,
                C2[2] * (2.0 * z * z - x * x - y * y),
                C2[3] * x * z,
                C2[4] * (x * x - y * y)};
    }

    inline Rgb eval_sh_unclamped(std::span<const double> coeffs, const std::array<double, kShBasis>& basis)
    {
        Rgb out;
        for (int ch = 0; ch < 3; ++ch)
        {
            double s = 0.0;
            for (int k = 0; k < kShBasis; ++k)
                s += basis[k] * coeffs[ch * kShBasis + k];
            out[ch] = s;
        }
        return out;
    }

    /// Radiance for a unit view direction; clamped below at zero.
    inline Rgb eval_sh(std::span<const double> coeffs, const Vec3& dir)
    {
        Rgb pre = eval_sh_unclamped(coeffs, sh_basis(dir));
        return {std::max(pre.r, 0.0), std::max(pre.g, 0.0), std::max(pre.b, 0.0)};
    }

    // ---------------------------------------------------------------------
    // Field derivatives

    /// World-space gradient of the interpolated surface scalar.
    inline Vec3 field_gradient(const VoxelGrid& grid, const Vec3& point)
    {
        LocalPoint lp = grid.locate(point);
        auto c = gather_corners(grid, grid.delta, lp.voxel);
        return cdiv(trilinear_local_gradient(c, lp.xyz), grid.voxel_size());
    }

    inline constexpr double kDegenerateGradient = 1e-12;

    inline std::optional<Vec3> normal_from_gradient(const Vec3& g)
    {
        double n = norm(g);
        if (n < kDegenerateGradient)
            return std::nullopt;
        return -g / n;
    }

    /// Outward normal -grad/|grad|; nullopt when the gradient vanishes.
    inline std::optional<Vec3> surface_normal(const VoxelGrid& grid, const Vec3& point)
    {
        return normal_from_gradient(field_gradient(grid, point));
    }

    /// Forward differences at a vertex, each axis scaled by resolution/256.
    /// The difference along an axis is zero on that axis' upper boundary.
    inline Vec3 vertex_finite_diff(const GridShape& shape, std::span<const double> values, Int3 v)
    {
        Vec3 out;
        double here = values[shape.vertex_index(v)];
        for (int a = 0; a < 3; ++a)
        {
            if (v[a] >= shape.resolution[a])
                continue;
            Int3 n = v;
            n[a] += 1;
            out[a] = (values[shape.vertex_index(n)] - here) * shape.resolution[a] / 256.0;
        }
        return out;
    }
}  // namespace asurf
