#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "camera.hpp"
#include "field.hpp"
#include "image.hpp"
#include "intersect.hpp"
#include "parallel.hpp"

namespace asurf
{
    struct RenderConfig
    {
        double a = 5.0;                 // truncation parameter
        Rgb background{1.0, 1.0, 1.0};
        bool cull_backfaces = true;
    };

    struct RaySample
    {
        Intersection hit;
        double raw_opacity = 0.0;   // interpolated sigma_alpha
        double alpha = 0.0;
        double gamma = 1.0;
        double alpha_trunc = 0.0;
        double transmittance = 1.0; // product of (1 - alpha_trunc) over earlier samples
        double weight = 0.0;
        Rgb color;                  // clamped radiance
        Rgb color_pre;              // before the clamp at zero
    };

    struct RaySamples
    {
        std::vector<RaySample> samples;  // culled, ordered near to far
        Rgb color;                       // composited pixel value
        double residual = 1.0;           // transmittance left for the background
        int mode_index = -1;             // sample with the largest weight
        std::optional<double> depth_mode;
        std::array<double, kShBasis> basis{};
    };

    inline double opacity_activation(double raw) { return raw > 0.0 ? -std::expm1(-raw) : 0.0; }

    /// d alpha / d raw; zero on the ReLU's flat side (including raw == 0).
    inline double opacity_activation_derivative(double raw) { return raw > 0.0 ? std::exp(-raw) : 0.0; }

    /// Keeps samples whose normal does not point along the ray. Degenerate
    /// normals count as front-facing.
    inline std::vector<Intersection> cull(const std::vector<Intersection>& hits, const Vec3& /*dir*/)
    {
        std::vector<Intersection> kept;
        kept.reserve(hits.size());
        for (const auto& h : hits)
            if (h.front_facing)
                kept.push_back(h);
        return kept;
    }

    /// Hann-shaped truncation window; sample i (0-based) is scaled by trunc_window(i, a).
    inline double trunc_window(double x, double a)
    {
        double c = std::clamp(a - x, 0.0, 1.0);
        return 0.5 * (1.0 - std::cos(kPi * c));
    }

    /// Front-to-back compositing of samples whose alpha and color are set.
    inline void composite(RaySamples& rs, const RenderConfig& cfg)
    {
        double T = 1.0;
        Rgb acc;
        double best = -1.0;
        rs.mode_index = -1;
        for (std::size_t i = 0; i < rs.samples.size(); ++i)
        {
            RaySample& s = rs.samples[i];
            s.gamma = trunc_window(double(i), cfg.a);
            s.alpha_trunc = s.gamma * s.alpha;
            s.transmittance = T;
            s.weight = T * s.alpha_trunc;
            acc += s.color * s.weight;
            if (s.weight > best)
            {
                best = s.weight;
                rs.mode_index = int(i);
            }
            T *= 1.0 - s.alpha_trunc;
        }
        rs.residual = T;
        rs.color = acc + cfg.background * T;
        rs.depth_mode = rs.mode_index >= 0 ? std::optional<double>(rs.samples[rs.mode_index].hit.t) : std::nullopt;
    }

    inline RaySamples render_ray(const VoxelGrid& grid, const Ray& ray, const RenderConfig& cfg)
    {
        RaySamples rs;
        rs.basis = sh_basis(normalized(ray.dir));
        std::vector<Intersection> hits = ray_intersections(grid, ray);
        rs.samples.reserve(hits.size());
        for (auto& h : hits)
        {
            if (cfg.cull_backfaces && !h.front_facing)
                continue;
            RaySample s;
            auto idx = grid.corner_indices(h.voxel);
            auto w = trilinear_weights(h.local);
            double raw = 0.0;
            std::array<double, kShStride> coeffs{};
            for (int c = 0; c < 8; ++c)
            {
                raw += w[c] * grid.sigma_alpha[idx[c]];
                const double* src = &grid.sh[idx[c] * kShStride];
                for (int k = 0; k < kShStride; ++k)
                    coeffs[k] += w[c] * src[k];
            }
            s.raw_opacity = raw;
            s.alpha = opacity_activation(raw);
            s.color_pre = eval_sh_unclamped(coeffs, rs.basis);
            s.color = {std::max(s.color_pre.r, 0.0), std::max(s.color_pre.g, 0.0), std::max(s.color_pre.b, 0.0)};
            s.hit = std::move(h);
            rs.samples.push_back(std::move(s));
        }
        composite(rs, cfg);
        return rs;
    }

    struct RenderedImage
    {
        Image color;
        std::vector<double> depth;  // NaN where the ray has no samples
    };

    inline RenderedImage render_image(const VoxelGrid& grid, const Camera& cam, const RenderConfig& cfg)
    {
        RenderedImage out{Image(cam.width, cam.height), std::vector<double>(std::size_t(cam.width) * cam.height)};
        parallel_for(std::size_t(cam.height), [&](std::size_t y) {
            for (int x = 0; x < cam.width; ++x)
            {
                RaySamples rs = render_ray(grid, generate_ray(cam, x, int(y)), cfg);
                std::size_t i = y * cam.width + x;
                out.color.set(i, rs.color);
                out.depth[i] = rs.depth_mode.value_or(std::numeric_limits<double>::quiet_NaN());
            }
        });
        return out;
    }
}  // namespace asurf
