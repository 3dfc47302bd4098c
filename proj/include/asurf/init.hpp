#pragma once

/**
 * Coarse initialization: a short density fit by volume rendering, then the
 * conversion of that density into surface scalar, opacity and occupancy.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "dataset.hpp"
#include "density.hpp"
#include "field.hpp"
#include "optim.hpp"
#include "parallel.hpp"

namespace asurf
{
    struct DegenerateField : std::runtime_error
    {
        using std::runtime_error::runtime_error;
    };

    struct FitConfig
    {
        Int3 resolution{64, 64, 64};
        Aabb bbox{{-1, -1, -1}, {1, 1, 1}};
        long iters = 1000;
        std::size_t batch_rays = 4096;
        double lr_sigma = 30.0;  // log-linear decay to the *_end rates over iters
        double lr_sigma_end = 0.05;
        double lr_sh = 1e-2;
        double lr_sh_end = 5e-6;
        double rmsprop_decay = 0.95;
        double rmsprop_eps = 1e-8;
        double lambda_tv = 1e-5;        // squared forward differences of sigma, mean over vertices
        double lambda_sparsity = 0.0;   // log(1 + 2 sigma^2) per sample, mean over rays
        double init_sigma = 0.1;
        double init_color = 0.5;
        bool random_background = true;  // per-ray random backdrop when the data has alpha
        VolumeConfig volume;
        std::uint64_t seed = 0;
    };

    struct FitStats
    {
        long iters = 0;
        double final_mse = 0.0;        // batch mean of the squared error, summed over channels
        double final_abs_error = 0.0;  // batch mean per-channel absolute error
    };

    /// Mean over vertices of sum_a (sigma[v + e_a] - sigma[v])^2; adds its
    /// gradient times `scale` when `grad` is given.
    inline double density_smoothness(const DensityGrid& g, std::vector<double>* grad, double scale)
    {
        const std::size_t nv = g.num_vertices();
        const std::size_t sx = 1, sy = std::size_t(g.resolution.x + 1), sz = sy * std::size_t(g.resolution.y + 1);
        const std::size_t strides[3] = {sx, sy, sz};
        const double inv = 1.0 / double(nv);
        long double sum = 0.0L;
        for (std::size_t i = 0; i < nv; ++i)
        {
            Int3 v = g.vertex_coords(i);
            for (int a = 0; a < 3; ++a)
            {
                if (v[a] >= g.resolution[a])
                    continue;
                double d = g.sigma[i + strides[a]] - g.sigma[i];
                sum += d * d;
                if (grad)
                {
                    double k = 2.0 * d * inv * scale;
                    (*grad)[i + strides[a]] += k;
                    (*grad)[i] -= k;
                }
            }
        }
        return double(sum) * inv;
    }

    inline DensityGrid initial_density(const FitConfig& cfg)
    {
        DensityGrid g(cfg.resolution, cfg.bbox);
        std::fill(g.sigma.begin(), g.sigma.end(), cfg.init_sigma);
        const double dc = cfg.init_color / 0.28209479177387814;
        for (std::size_t i = 0; i < g.num_vertices(); ++i)
            for (int ch = 0; ch < 3; ++ch)
                g.sh[i * kShStride + ch * kShBasis] = dc;
        return g;
    }

    using FitCallback = std::function<void(long iter, double mse)>;

    /// Minimal volume-rendering fit: photometric MSE, a smoothness term and a
    /// Cauchy sparsity prior on sigma, optimized with RMSProp. The prior keeps
    /// background-colored floaters out of free space. Deterministic for a given
    /// seed.
    inline DensityGrid fit_density(const Dataset& ds, const FitConfig& cfg, FitStats* stats = nullptr,
                                   const FitCallback& cb = {})
    {
        if (ds.size() < 2)
            throw std::invalid_argument("fit_density needs at least two views");
        ds.validate();
        DensityGrid g = initial_density(cfg);
        VolumeConfig vcfg = cfg.volume;
        vcfg.background = ds.background;

        RmsProp opt_sigma(g.sigma.size(), cfg.rmsprop_decay, cfg.rmsprop_eps);
        RmsProp opt_sh(g.sh.size(), cfg.rmsprop_decay, cfg.rmsprop_eps);
        std::vector<double> d_sigma(g.sigma.size()), d_sh(g.sh.size());
        std::mt19937_64 rng(cfg.seed);
        const bool random_bg = cfg.random_background && ds.has_alpha();
        FitStats st;

        for (long it = 0; it < cfg.iters; ++it)
        {
            std::fill(d_sigma.begin(), d_sigma.end(), 0.0);
            std::fill(d_sh.begin(), d_sh.end(), 0.0);
            auto batch = sample_pixels(ds, cfg.batch_rays, rng);
            const std::size_t nb = batch.size();
            const double inv_b = 1.0 / double(nb);
            const double sparsity_scale = cfg.lambda_sparsity * inv_b;
            std::vector<double> sq(nb), ab(nb);

            // multi-threaded runs buffer records per ray and replay them in ray
            // order, so the summation order never depends on scheduling
            const bool serial = thread_count() <= 1;
            std::vector<std::vector<VolumeSampleGrad>> recs(serial ? 0 : nb);
            std::vector<std::array<double, kShBasis>> bases(serial ? 0 : nb);
            const std::uint64_t iter_key = splitmix64(cfg.seed ^ splitmix64(std::uint64_t(it)));

            parallel_for_chunks(nb, [&](std::size_t b, std::size_t e) {
                VolumeRay scratch;
                for (std::size_t i = b; i < e; ++i)
                {
                    Ray ray = pixel_ray(ds, batch[i]);
                    const std::uint64_t key = splitmix64(iter_key + i);
                    double jitter = unit_double(key);
                    Rgb gt;
                    VolumeConfig rcfg = vcfg;
                    if (random_bg)
                    {
                        rcfg.background = {unit_double(splitmix64(key + 1)), unit_double(splitmix64(key + 2)),
                                           unit_double(splitmix64(key + 3))};
                        gt = pixel_color_over(ds, batch[i], rcfg.background);
                    }
                    else
                        gt = pixel_color(ds, batch[i]);
                    VolumeRay vr = volume_render_ray(g, ray, rcfg, jitter, &scratch);
                    Rgb diff = vr.color - gt;
                    sq[i] = dot(diff, diff);
                    ab[i] = (std::abs(diff.r) + std::abs(diff.g) + std::abs(diff.b)) / 3.0;
                    Rgb d_color = diff * (2.0 * inv_b);
                    auto prior = [&](VolumeSampleGrad r) {
                        r.d_sigma += sparsity_scale * 4.0 * r.sigma / (1.0 + 2.0 * r.sigma * r.sigma);
                        return r;
                    };
                    if (serial)
                    {
                        volume_backward_ray(vr, d_color, rcfg, [&](const VolumeSampleGrad& r) {
                            accumulate(g, prior(r), vr.basis, d_sigma, d_sh);
                        });
                    }
                    else
                    {
                        bases[i] = vr.basis;
                        volume_backward_ray(vr, d_color, rcfg,
                                            [&](const VolumeSampleGrad& r) { recs[i].push_back(prior(r)); });
                    }
                    scratch = std::move(vr);
                }
            });
            if (!serial)
                for (std::size_t i = 0; i < nb; ++i)
                    for (const auto& r : recs[i])
                        accumulate(g, r, bases[i], d_sigma, d_sh);

            long double s_sq = 0, s_ab = 0;
            for (std::size_t i = 0; i < nb; ++i)
            {
                s_sq += sq[i];
                s_ab += ab[i];
            }
            st.final_mse = double(s_sq / nb);
            st.final_abs_error = double(s_ab / nb);
            if (!std::isfinite(st.final_mse))
                throw std::runtime_error("density fit diverged at iteration " + std::to_string(it));
            if (cfg.lambda_tv > 0.0)
                density_smoothness(g, &d_sigma, cfg.lambda_tv);

            const double s = cfg.iters > 1 ? double(it) / double(cfg.iters - 1) : 0.0;
            opt_sigma.step(g.sigma, d_sigma, log_lerp(cfg.lr_sigma, cfg.lr_sigma_end, s));
            opt_sh.step(g.sh, d_sh, log_lerp(cfg.lr_sh, cfg.lr_sh_end, s));
            st.iters = it + 1;
            if (cb)
                cb(it, st.final_mse);
        }
        if (stats)
            *stats = st;
        return g;
    }

    /// Mean per-channel absolute error of full renders (fixed mid-step offset)
    /// against the training images.
    inline double density_render_error(const DensityGrid& g, const Dataset& ds, VolumeConfig vcfg)
    {
        vcfg.background = ds.background;
        long double sum = 0.0L;
        std::size_t n = 0;
        for (std::size_t v = 0; v < ds.size(); ++v)
        {
            const Camera& cam = ds.cameras[v];
            std::vector<double> row_err(std::size_t(cam.height));
            parallel_for(std::size_t(cam.height), [&](std::size_t y) {
                double acc = 0.0;
                for (int x = 0; x < cam.width; ++x)
                {
                    Rgb c = volume_render_ray(g, generate_ray(cam, x, int(y)), vcfg, 0.5).color;
                    Rgb gt = ds.images[v].at(x, int(y));
                    acc += std::abs(c.r - gt.r) + std::abs(c.g - gt.g) + std::abs(c.b - gt.b);
                }
                row_err[y] = acc;
            });
            for (double e : row_err)
                sum += e;
            n += 3 * std::size_t(cam.width) * std::size_t(cam.height);
        }
        return n ? double(sum / n) : 0.0;
    }

    // ---------------------------------------------------------------------
    // Density -> surface conversion

    inline double median(std::vector<double> v)
    {
        if (v.empty())
            throw std::invalid_argument("median of an empty list");
        std::sort(v.begin(), v.end());
        std::size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    }

    /// Mean over all vertices of the norm of the index-space finite-difference
    /// gradient of sigma (forward differences, backward on the upper face).
    inline double mean_gradient_norm(const GridShape& g, std::span<const double> sigma)
    {
        long double sum = 0.0L;
        for (std::size_t i = 0; i < g.num_vertices(); ++i)
        {
            Int3 v = g.vertex_coords(i);
            double sq = 0.0;
            for (int a = 0; a < 3; ++a)
            {
                Int3 lo = v, hi = v;
                if (v[a] < g.resolution[a])
                    hi[a] += 1;
                else
                    lo[a] -= 1;
                double d = sigma[g.vertex_index(hi)] - sigma[g.vertex_index(lo)];
                sq += d * d;
            }
            sum += std::sqrt(sq);
        }
        return double(sum / g.num_vertices());
    }

    struct SurfaceInit
    {
        std::vector<double> delta;
        std::vector<double> levels;
        double sigma_median = 0.0;
        double grad_norm = 0.0;
    };

    /// delta = (sigma - median(tau_sigma)) / g and tau = (tau_sigma - median) / g,
    /// with g the mean gradient norm of sigma.
    inline SurfaceInit init_surface(const DensityGrid& density, std::span<const double> tau_sigma)
    {
        if (tau_sigma.empty())
            throw std::invalid_argument("tau_sigma must not be empty");
        for (std::size_t i = 1; i < tau_sigma.size(); ++i)
            if (!(tau_sigma[i] > tau_sigma[i - 1]))
                throw std::invalid_argument("tau_sigma must be strictly ascending");
        SurfaceInit out;
        out.sigma_median = median({tau_sigma.begin(), tau_sigma.end()});
        out.grad_norm = mean_gradient_norm(density, density.sigma);
        if (!(out.grad_norm >= 1e-12))
            throw DegenerateField("density field is constant; cannot normalize");
        out.delta.resize(density.sigma.size());
        for (std::size_t i = 0; i < out.delta.size(); ++i)
            out.delta[i] = (density.sigma[i] - out.sigma_median) / out.grad_norm;
        for (double t : tau_sigma)
            out.levels.push_back((t - out.sigma_median) / out.grad_norm);
        return out;
    }

    inline std::vector<double> init_opacity(std::span<const double> sigma, double s_sigma)
    {
        std::vector<double> out(sigma.size());
        for (std::size_t i = 0; i < sigma.size(); ++i)
            out[i] = s_sigma * sigma[i];
        return out;
    }

    /// Keeps a voxel when any of its corners has sigma >= threshold.
    inline std::vector<std::uint8_t> prune(const DensityGrid& density, double threshold = 5.0)
    {
        std::vector<std::uint8_t> occ(density.num_voxels(), 0);
        for (std::size_t vi = 0; vi < occ.size(); ++vi)
            for (auto c : density.corner_indices(density.voxel_coords(vi)))
                if (density.sigma[c] >= threshold)
                {
                    occ[vi] = 1;
                    break;
                }
        return occ;
    }

    struct ConvertConfig
    {
        std::vector<double> tau_sigma{10, 30, 50, 70, 90};
        double s_sigma = 0.05;
        double prune_threshold = 5.0;
    };

    /// Full conversion: surface scalar, levels, opacity, copied SH, pruning.
    inline VoxelGrid surface_from_density(const DensityGrid& density, const ConvertConfig& cfg = {})
    {
        SurfaceInit si = init_surface(density, cfg.tau_sigma);
        VoxelGrid g(density.resolution, density.bbox, si.levels);
        g.delta = std::move(si.delta);
        g.sigma_alpha = init_opacity(density.sigma, cfg.s_sigma);
        g.sh = density.sh;
        auto occ = prune(density, cfg.prune_threshold);
        for (std::size_t i = 0; i < occ.size(); ++i)
            g.occupancy[i] = occ[i] && density.occupancy[i];
        return g;
    }
}  // namespace asurf
