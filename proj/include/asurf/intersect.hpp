#pragma once

/**
 * Exact ray / level-set intersection on a trilinear grid.
 *
 * Rays are walked voxel by voxel. Inside a voxel the field restricted to the
 * ray is a cubic in the local parameter t' = t - t_near, whose coefficients
 * are assembled from the eight corner scalars and solved in closed form.
 *
 * Ray directions are never normalized: t is measured in units of |dir|.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "field.hpp"
#include "vec.hpp"

namespace asurf
{
    struct Ray
    {
        Vec3 origin;
        Vec3 dir;
    };

    struct Interval
    {
        double t_near = 0.0;
        double t_far = 0.0;
    };

    /// Slab test against the half-line t >= 0. Zero direction components are
    /// handled explicitly so that origins on a slab face do not produce NaN.
    inline std::optional<Interval> ray_aabb(const Ray& ray, const Aabb& box)
    {
        double t0 = 0.0;
        double t1 = std::numeric_limits<double>::infinity();
        for (int a = 0; a < 3; ++a)
        {
            double o = ray.origin[a], d = ray.dir[a];
            if (d == 0.0)
            {
                if (o < box.lo[a] || o > box.hi[a])
                    return std::nullopt;
                continue;
            }
            double inv = 1.0 / d;
            double ta = (box.lo[a] - o) * inv;
            double tb = (box.hi[a] - o) * inv;
            if (ta > tb)
                std::swap(ta, tb);
            t0 = std::max(t0, ta);
            t1 = std::min(t1, tb);
            if (t1 < t0)
                return std::nullopt;
        }
        return Interval{t0, t1};
    }

    struct VoxelHit
    {
        Int3 voxel;
        double t_near = 0.0;
        double t_far = 0.0;
        Vec3 shifted_origin;  // o + t_near d - l, in voxel-local units

        double length() const { return t_far - t_near; }
    };

    /// Ray in grid index space (one unit per voxel).
    inline Ray to_index_space(const GridShape& shape, const Ray& ray)
    {
        return {shape.to_index_space(ray.origin), cdiv(ray.dir, shape.voxel_size())};
    }

    /// Amanatides-Woo walk over the voxels of the grid, reporting the
    /// occupied ones in order. Consecutive intervals share their boundary
    /// value exactly; zero-length visits (edge and corner grazes) are skipped.
    inline std::vector<VoxelHit> traverse_voxels(const Ray& ray, const VoxelGrid& grid)
    {
        std::vector<VoxelHit> hits;
        Ray r = to_index_space(grid, ray);
        Aabb box{{0, 0, 0}, {double(grid.resolution.x), double(grid.resolution.y), double(grid.resolution.z)}};
        auto span = ray_aabb(r, box);
        if (!span || !(span->t_far > span->t_near))
            return hits;

        const double inf = std::numeric_limits<double>::infinity();
        Int3 v, step;
        Vec3 t_max;
        Vec3 entry = r.origin + r.dir * span->t_near;
        for (int a = 0; a < 3; ++a)
        {
            double d = r.dir[a];
            double p = entry[a];
            int c = static_cast<int>(std::floor(p));
            if (d < 0.0 && p == double(c))
                c -= 1;
            c = std::clamp(c, 0, grid.resolution[a] - 1);
            v[a] = c;
            if (d > 0.0)
            {
                step[a] = 1;
                t_max[a] = (double(c + 1) - r.origin[a]) / d;
            }
            else if (d < 0.0)
            {
                step[a] = -1;
                t_max[a] = (double(c) - r.origin[a]) / d;
            }
            else
            {
                step[a] = 0;
                t_max[a] = inf;
            }
        }

        double t_cur = span->t_near;
        const double t_end = span->t_far;
        while (true)
        {
            double t_exit = std::min({t_max.x, t_max.y, t_max.z, t_end});
            if (t_exit > t_cur && grid.occupied(v))
            {
                Vec3 local = r.origin + r.dir * t_cur - Vec3{double(v.x), double(v.y), double(v.z)};
                hits.push_back({v, t_cur, t_exit, local});
            }
            if (t_exit >= t_end)
                break;
            bool inside = true;
            for (int a = 0; a < 3; ++a)
            {
                if (t_max[a] == t_exit)
                {
                    v[a] += step[a];
                    if (v[a] < 0 || v[a] >= grid.resolution[a])
                        inside = false;
                    t_max[a] = (double(step[a] > 0 ? v[a] + 1 : v[a]) - r.origin[a]) / r.dir[a];
                }
            }
            if (!inside)
                break;
            t_cur = std::max(t_cur, t_exit);
        }
        return hits;
    }

    // ---------------------------------------------------------------------
    // Cubic along the ray

    struct Cubic
    {
        double f3 = 0.0, f2 = 0.0, f1 = 0.0, f0 = 0.0;

        double operator()(double t) const { return ((f3 * t + f2) * t + f1) * t + f0; }
        double derivative(double t) const { return (3.0 * f3 * t + 2.0 * f2) * t + f1; }
        double scale() const { return std::max({std::abs(f3), std::abs(f2), std::abs(f1), std::abs(f0)}); }
    };

    /// Coefficients of trilinear(corners, o + t' d) in t', built from the
    /// z-lerped edge values m, their first-order terms k and second-order h.
    inline Cubic cubic_coeffs(const Vec3& o, const Vec3& d, std::span<const double, 8> c)
    {
        // corners: c[0]=(000) c[1]=(001) c[2]=(010) c[3]=(011) c[4]=(100) ...
        const double m00 = c[0] * (1 - o.z) + c[1] * o.z;
        const double m01 = c[2] * (1 - o.z) + c[3] * o.z;
        const double m10 = c[4] * (1 - o.z) + c[5] * o.z;
        const double m11 = c[6] * (1 - o.z) + c[7] * o.z;

        const double k0 = (m01 * d.y + d.z * (c[3] - c[2]) * o.y) - (m00 * d.y - d.z * (c[1] - c[0]) * (1 - o.y));
        const double k1 = (m11 * d.y + d.z * (c[7] - c[6]) * o.y) - (m10 * d.y - d.z * (c[5] - c[4]) * (1 - o.y));
        const double h0 = d.y * d.z * (c[3] - c[2]) - d.y * d.z * (c[1] - c[0]);
        const double h1 = d.y * d.z * (c[7] - c[6]) - d.y * d.z * (c[5] - c[4]);

        const double g0 = m00 * (1 - o.y) + m01 * o.y;  // x = 0 face, constant term
        const double g1 = m10 * (1 - o.y) + m11 * o.y;  // x = 1 face

        Cubic out;
        out.f0 = g0 * (1 - o.x) + g1 * o.x;
        out.f1 = g1 * d.x + k1 * o.x - g0 * d.x + k0 * (1 - o.x);
        out.f2 = k1 * d.x + h1 * o.x - k0 * d.x + h0 * (1 - o.x);
        out.f3 = h1 * d.x - h0 * d.x;
        return out;
    }

    inline Cubic cubic_coeffs(const VoxelHit& hit, std::span<const double, 8> corners, const Vec3& local_dir)
    {
        return cubic_coeffs(hit.shifted_origin, local_dir, corners);
    }

    /// The coefficients are linear in the corners; column c holds the cubic
    /// obtained for the unit corner vector e_c.
    inline std::array<Cubic, 8> cubic_coeff_jacobian(const Vec3& o, const Vec3& d)
    {
        std::array<Cubic, 8> jac{};
        for (int c = 0; c < 8; ++c)
        {
            std::array<double, 8> e{};
            e[c] = 1.0;
            jac[c] = cubic_coeffs(o, d, e);
        }
        return jac;
    }

    enum class RootStatus { Roots, NoRoot, AllRoots };

    struct CubicRoots
    {
        RootStatus status = RootStatus::NoRoot;
        int count = 0;
        std::array<double, 3> t{};  // ascending

        std::span<const double> roots() const { return {t.data(), std::size_t(count)}; }
    };

    inline constexpr double kLeadingEps = 1e-12;

    namespace detail
    {
        inline void polish_root(const Cubic& p, double tau, double& r)
        {
            double res = std::abs(p(r) - tau);
            for (int it = 0; it < 4 && res > 0.0; ++it)
            {
                double dp = p.derivative(r);
                if (dp == 0.0 || !std::isfinite(dp))
                    break;
                double cand = r - (p(r) - tau) / dp;
                double cres = std::abs(p(cand) - tau);
                if (!(cres < res))
                    break;
                r = cand;
                res = cres;
            }
        }
    }  // namespace detail

    /// Real roots of f3 t^3 + f2 t^2 + f1 t + f0 = tau.
    ///
    /// Cubic case uses the trigonometric / Cardano forms; leading coefficients
    /// below 1e-12 of the largest coefficient drop the degree. Each root gets
    /// a Newton polish that is kept only if it lowers the residual.
    inline CubicRoots solve_cubic(const Cubic& poly, double tau)
    {
        CubicRoots out;
        const double f3 = poly.f3, f2 = poly.f2, f1 = poly.f1, f0 = poly.f0 - tau;
        const double scale = std::max({std::abs(f3), std::abs(f2), std::abs(f1), std::abs(f0)});
        if (scale == 0.0)
        {
            out.status = RootStatus::AllRoots;
            return out;
        }
        const double eps = kLeadingEps * scale;
        auto push = [&](double r) { out.t[out.count++] = r; };

        if (std::abs(f3) >= eps)
        {
            const double a = f2 / f3, b = f1 / f3, c = f0 / f3;
            const double Q = (a * a - 3.0 * b) / 9.0;
            const double R = (2.0 * a * a * a - 9.0 * a * b + 27.0 * c) / 54.0;
            const double Q3 = Q * Q * Q;
            if (R * R < Q3)
            {
                const double theta = std::acos(std::clamp(R / std::sqrt(Q3), -1.0, 1.0));
                const double sq = -2.0 * std::sqrt(Q);
                push(sq * std::cos(theta / 3.0) - a / 3.0);
                push(sq * std::cos((theta - 2.0 * kPi) / 3.0) - a / 3.0);
                push(sq * std::cos((theta + 2.0 * kPi) / 3.0) - a / 3.0);
            }
            else
            {
                const double A = -std::copysign(std::cbrt(std::abs(R) + std::sqrt(R * R - Q3)), R);
                const double B = (A != 0.0) ? Q / A : 0.0;
                push((A + B) - a / 3.0);
            }
        }
        else if (std::abs(f2) >= eps)
        {
            const double disc = f1 * f1 - 4.0 * f2 * f0;
            if (disc >= 0.0)
            {
                const double q = -0.5 * (f1 + std::copysign(std::sqrt(disc), f1));
                if (q != 0.0)
                {
                    push(q / f2);
                    push(f0 / q);
                }
                else
                {
                    push(0.0);  // f1 == 0 and f0 == 0: double root at the origin
                }
            }
        }
        else if (std::abs(f1) >= eps)
        {
            push(-f0 / f1);
        }
        else
        {
            return out;  // constant, non-zero
        }

        for (int i = 0; i < out.count; ++i)
            detail::polish_root(poly, tau, out.t[i]);
        std::sort(out.t.begin(), out.t.begin() + out.count);
        out.status = RootStatus::Roots;
        return out;
    }

    // ---------------------------------------------------------------------
    // Intersections

    struct Intersection
    {
        double t = 0.0;        // global ray parameter
        Vec3 point;            // world position
        int level_index = 0;
        std::optional<Vec3> normal;  // nullopt when the field gradient vanishes
        bool front_facing = true;

        // Local data reused by rendering and differentiation.
        Int3 voxel;
        Vec3 local;             // position inside the voxel
        Vec3 shifted_origin;    // o' of the voxel hit
        double t_local = 0.0;   // t' = t - t_near
        Cubic cubic;            // level-free cubic (tau not subtracted)
    };

    inline constexpr double kRangeTol = 1e-9;
    inline constexpr double kDedupTol = 1e-7;

    /// All level-set crossings inside one voxel, merged over levels and sorted.
    inline std::vector<Intersection> voxel_intersections(const VoxelGrid& grid, const VoxelHit& hit, const Ray& ray)
    {
        std::vector<Intersection> out;
        const Vec3 d_local = cdiv(ray.dir, grid.voxel_size());
        const auto corners = gather_corners(grid, grid.delta, hit.voxel);
        const Cubic cubic = cubic_coeffs(hit, corners, d_local);
        const double len = hit.length();
        const double lo = -kRangeTol * len, hi = len * (1.0 + kRangeTol);

        for (int li = 0; li < int(grid.levels.size()); ++li)
        {
            CubicRoots roots = solve_cubic(cubic, grid.levels[li]);
            if (roots.status != RootStatus::Roots)
                continue;
            double last = -std::numeric_limits<double>::infinity();
            for (double tr : roots.roots())
            {
                if (tr < lo || tr > hi)
                    continue;
                tr = std::clamp(tr, 0.0, len);
                if (tr - last <= kDedupTol * len)
                    continue;
                last = tr;

                Intersection is;
                is.t = hit.t_near + tr;
                is.t_local = tr;
                is.point = ray.origin + ray.dir * is.t;
                is.level_index = li;
                is.voxel = hit.voxel;
                is.shifted_origin = hit.shifted_origin;
                is.cubic = cubic;
                Vec3 local = hit.shifted_origin + d_local * tr;
                for (int a = 0; a < 3; ++a)
                    local[a] = std::clamp(local[a], 0.0, 1.0);
                is.local = local;
                Vec3 lg = trilinear_local_gradient(corners, local);
                Vec3 g = cdiv(lg, grid.voxel_size());
                is.normal = normal_from_gradient(g);
                is.front_facing = !is.normal || dot(*is.normal, ray.dir) <= 0.0;
                out.push_back(is);
            }
        }
        std::sort(out.begin(), out.end(), [](const Intersection& a, const Intersection& b) { return a.t < b.t; });
        return out;
    }

    /// Sorted, duplicate-free crossings of every level along the ray.
    inline std::vector<Intersection> ray_intersections(const VoxelGrid& grid, const Ray& ray)
    {
        std::vector<Intersection> out;
        const Vec3 d_local = cdiv(ray.dir, grid.voxel_size());
        const double voxel_t = 1.0 / norm(d_local);  // t needed to travel one voxel unit
        const double tol = kDedupTol * voxel_t;
        for (const VoxelHit& hit : traverse_voxels(ray, grid))
        {
            for (Intersection& is : voxel_intersections(grid, hit, ray))
            {
                bool dup = false;
                for (auto it = out.rbegin(); it != out.rend() && is.t - it->t <= tol; ++it)
                {
                    if (it->level_index == is.level_index)
                    {
                        dup = true;
                        break;
                    }
                }
                if (!dup)
                    out.push_back(std::move(is));
            }
        }
        std::stable_sort(out.begin(), out.end(), [](const Intersection& a, const Intersection& b) { return a.t < b.t; });
        return out;
    }
}  // namespace asurf
