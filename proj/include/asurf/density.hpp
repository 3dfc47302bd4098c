#pragma once

/**
 * Density grid and its volume renderer.
 *
 * Rays are sampled at a fixed world spacing with one random offset per ray.
 * Sample j gets alpha_j = 1 - exp(-relu(sigma_j) * spacing) and the clamped
 * SH color; samples are composited front to back and the march stops once
 * transmittance falls below a threshold, the remainder going to the
 * background.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "field.hpp"
#include "intersect.hpp"

namespace asurf
{
    struct DensityGrid : GridShape
    {
        std::vector<double> sigma;
        std::vector<double> sh;
        std::vector<std::uint8_t> occupancy;

        DensityGrid() = default;
        DensityGrid(Int3 res, Aabb box)
            : GridShape(res, box), sigma(num_vertices(), 0.0), sh(num_vertices() * kShStride, 0.0),
              occupancy(num_voxels(), 1)
        {
        }

        void validate() const
        {
            if (sigma.size() != num_vertices() || sh.size() != num_vertices() * kShStride ||
                occupancy.size() != num_voxels())
                throw std::invalid_argument("density grid arrays do not match its resolution");
        }
    };

    struct VolumeConfig
    {
        double step_voxels = 0.5;         // sample spacing in voxel edges (smallest axis)
        double min_transmittance = 1e-4;  // early termination
        Rgb background{1.0, 1.0, 1.0};
    };

    struct VolumeSample
    {
        std::uint32_t base = 0;  // vertex index of the voxel's lower corner
        Vec3 local;
        double sigma = 0.0;
        double alpha = 0.0;
        double transmittance = 1.0;
        Rgb color_pre;
    };

    struct VolumeRay
    {
        std::vector<VolumeSample> samples;
        std::array<double, kShBasis> basis{};
        Rgb color;
        double residual = 1.0;
        double spacing = 0.0;  // world distance between samples
    };

    namespace detail
    {
        inline std::array<std::size_t, 8> corner_offsets(const GridShape& g)
        {
            std::size_t sx = 1, sy = std::size_t(g.resolution.x + 1), sz = sy * std::size_t(g.resolution.y + 1);
            std::array<std::size_t, 8> off{};
            for (int c = 0; c < 8; ++c)
            {
                Int3 o = corner_offset(c);
                off[c] = o.x * sx + o.y * sy + o.z * sz;
            }
            return off;
        }
    }  // namespace detail

    /// Forward pass. `jitter` in [0,1) offsets the first sample.
    inline VolumeRay volume_render_ray(const DensityGrid& grid, const Ray& ray, const VolumeConfig& cfg, double jitter,
                                       VolumeRay* reuse = nullptr)
    {
        VolumeRay out;
        if (reuse)
        {
            out = std::move(*reuse);
            out.samples.clear();
        }
        out.color = {};
        out.residual = 1.0;
        const double dlen = norm(ray.dir);
        out.basis = sh_basis(ray.dir / dlen);
        const Vec3 vs = grid.voxel_size();
        out.spacing = cfg.step_voxels * std::min({vs.x, vs.y, vs.z});

        auto span = ray_aabb(ray, grid.bbox);
        if (!span || !(span->t_far > span->t_near))
        {
            out.color = cfg.background;
            return out;
        }
        const auto off = detail::corner_offsets(grid);
        const Ray ri = to_index_space(grid, ray);
        const double dt = out.spacing / dlen;
        double T = 1.0;
        Rgb acc;
        for (double t = span->t_near + jitter * dt; t < span->t_far; t += dt)
        {
            Vec3 q = ri.origin + ri.dir * t;
            Int3 v;
            Vec3 l;
            for (int a = 0; a < 3; ++a)
            {
                int c = std::clamp(int(std::floor(q[a])), 0, grid.resolution[a] - 1);
                v[a] = c;
                l[a] = std::clamp(q[a] - c, 0.0, 1.0);
            }
            if (!grid.occupancy[grid.voxel_index(v)])
                continue;
            const std::size_t base = grid.vertex_index(v);
            auto w = trilinear_weights(l);
            double s = 0.0;
            for (int c = 0; c < 8; ++c)
                s += w[c] * grid.sigma[base + off[c]];
            if (!(s > 0.0))
                continue;
            VolumeSample smp;
            smp.base = std::uint32_t(base);
            smp.local = l;
            smp.sigma = s;
            smp.alpha = -std::expm1(-s * out.spacing);
            smp.transmittance = T;
            std::array<double, kShStride> coeff{};
            for (int c = 0; c < 8; ++c)
            {
                const double* src = &grid.sh[(base + off[c]) * kShStride];
                for (int k = 0; k < kShStride; ++k)
                    coeff[k] += w[c] * src[k];
            }
            smp.color_pre = eval_sh_unclamped(coeff, out.basis);
            Rgb col{std::max(smp.color_pre.r, 0.0), std::max(smp.color_pre.g, 0.0), std::max(smp.color_pre.b, 0.0)};
            acc += col * (T * smp.alpha);
            T *= 1.0 - smp.alpha;
            out.samples.push_back(smp);
            if (T < cfg.min_transmittance)
                break;
        }
        out.residual = T;
        out.color = acc + cfg.background * T;
        return out;
    }

    /// Per-sample partials of d_color . C: w.r.t. interpolated sigma and the
    /// clamped color (the SH gradient is d_rgb (x) basis).
    struct VolumeSampleGrad
    {
        std::uint32_t base = 0;
        Vec3 local;
        double sigma = 0.0;  // forward value, for per-sample priors
        double d_sigma = 0.0;
        Rgb d_rgb;
    };

    template <typename Sink>
    void volume_backward_ray(const VolumeRay& vr, const Rgb& d_color, const VolumeConfig& cfg, Sink&& sink)
    {
        const auto& S = vr.samples;
        double V = dot(d_color, cfg.background);
        // reverse sweep; V_i = dC/dT_{i+1} scaled to the suffix
        std::vector<double> g_alpha(S.size());
        for (std::size_t ii = S.size(); ii-- > 0;)
        {
            const VolumeSample& s = S[ii];
            Rgb col{std::max(s.color_pre.r, 0.0), std::max(s.color_pre.g, 0.0), std::max(s.color_pre.b, 0.0)};
            double gc = dot(d_color, col);
            g_alpha[ii] = s.transmittance * (gc - V);
            V = s.alpha * gc + (1.0 - s.alpha) * V;
        }
        for (std::size_t i = 0; i < S.size(); ++i)
        {
            const VolumeSample& s = S[i];
            VolumeSampleGrad g;
            g.base = s.base;
            g.local = s.local;
            g.sigma = s.sigma;
            g.d_sigma = g_alpha[i] * vr.spacing * (1.0 - s.alpha);
            double w = s.transmittance * s.alpha;
            g.d_rgb = {s.color_pre.r > 0 ? d_color.r * w : 0.0, s.color_pre.g > 0 ? d_color.g * w : 0.0,
                       s.color_pre.b > 0 ? d_color.b * w : 0.0};
            sink(g);
        }
    }

    /// Scatters one sample record into dense gradient arrays.
    inline void accumulate(const DensityGrid& grid, const VolumeSampleGrad& g, const std::array<double, kShBasis>& basis,
                           std::vector<double>& d_sigma, std::vector<double>& d_sh)
    {
        static thread_local std::array<std::size_t, 8> off{};
        static thread_local Int3 off_res{-1, -1, -1};
        if (!(off_res == grid.resolution))
        {
            off = detail::corner_offsets(grid);
            off_res = grid.resolution;
        }
        auto w = trilinear_weights(g.local);
        std::array<double, kShStride> dc;
        for (int ch = 0; ch < 3; ++ch)
            for (int k = 0; k < kShBasis; ++k)
                dc[ch * kShBasis + k] = g.d_rgb[ch] * basis[k];
        for (int c = 0; c < 8; ++c)
        {
            std::size_t v = g.base + off[c];
            d_sigma[v] += w[c] * g.d_sigma;
            double* dst = &d_sh[v * kShStride];
            for (int k = 0; k < kShStride; ++k)
                dst[k] += w[c] * dc[k];
        }
    }
}  // namespace asurf
