#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "field.hpp"
#include "grad.hpp"
#include "parallel.hpp"
#include "render.hpp"

namespace asurf
{
    struct LossWeights
    {
        double lambda_c = 1e-6;
        double lambda_n = 1e-6;
        double lambda_delta = 1e-3;
        double lambda_H = 1e-4;
        double lambda_alpha = 1e-9;
        double lambda_ek = 0.0;
        long lambda_c_cutoff_iters = 10000;
        double sparsity_fraction = 0.10;

        static LossWeights zero()
        {
            LossWeights w;
            w.lambda_c = w.lambda_n = w.lambda_delta = w.lambda_H = w.lambda_alpha = w.lambda_ek = 0.0;
            return w;
        }
    };

    inline double photometric(const Rgb& pred, const Rgb& gt)
    {
        Rgb d = pred - gt;
        return dot(d, d);
    }

    /// Sum of |t~ - t_i| over samples with truncated opacity above 1e-8,
    /// where t~ is the depth of the largest-weight sample.
    inline double convergence_loss(const RaySamples& rs)
    {
        if (rs.mode_index < 0)
            return 0.0;
        double t_mode = rs.samples[rs.mode_index].hit.t;
        double sum = 0.0;
        for (const auto& s : rs.samples)
            if (s.alpha_trunc > kConvergenceGate)
                sum += std::abs(t_mode - s.hit.t);
        return sum;
    }

    /// Entropy (natural log) of the normalized sample weights.
    inline double entropy_loss(const RaySamples& rs)
    {
        double W = 0.0;
        for (const auto& s : rs.samples)
            W += s.weight;
        if (rs.samples.empty() || W < kEntropyMinWeight)
            return 0.0;
        double H = 0.0;
        for (const auto& s : rs.samples)
        {
            double wb = s.weight / W;
            if (wb > 0.0)
                H -= wb * std::log(wb);
        }
        return H;
    }

    // ---------------------------------------------------------------------
    // Field regularizers. Each takes the vertex set they average over and
    // optionally accumulates their gradient (already multiplied by `scale`).

    /// Vertices touching at least one occupied voxel, ascending.
    inline std::vector<std::uint32_t> active_vertices(const VoxelGrid& grid)
    {
        std::vector<std::uint8_t> mark(grid.num_vertices(), 0);
        for (std::size_t vi = 0; vi < grid.num_voxels(); ++vi)
        {
            if (!grid.occupancy[vi])
                continue;
            for (auto c : grid.corner_indices(grid.voxel_coords(vi)))
                mark[c] = 1;
        }
        std::vector<std::uint32_t> out;
        for (std::size_t i = 0; i < mark.size(); ++i)
            if (mark[i])
                out.push_back(std::uint32_t(i));
        return out;
    }

    /// Mean Euclidean norm of the scaled forward differences of delta.
    inline double tv_loss(const VoxelGrid& grid, std::span<const std::uint32_t> verts, GradBuffer* grad = nullptr,
                          double scale = 1.0)
    {
        if (verts.empty())
            return 0.0;
        const double inv_n = 1.0 / double(verts.size());
        double sum = 0.0;
        for (std::uint32_t vi : verts)
        {
            Int3 v = grid.vertex_coords(vi);
            Vec3 g = vertex_finite_diff(grid, grid.delta, v);
            double len = norm(g);
            sum += len;
            if (grad && len > 0.0)
            {
                Vec3 u = g / len;
                for (int a = 0; a < 3; ++a)
                {
                    if (v[a] >= grid.resolution[a])
                        continue;
                    Int3 nb = v;
                    nb[a] += 1;
                    double k = scale * inv_n * u[a] * grid.resolution[a] / 256.0;
                    grad->d_delta[grid.vertex_index(nb)] += k;
                    grad->d_delta[vi] -= k;
                }
            }
        }
        return sum * inv_n;
    }

    /// Mean over vertices of the L1 norm of forward differences of the unit
    /// normals -g/|g| (g from vertex_finite_diff; zero where g vanishes).
    inline double normal_smoothness(const VoxelGrid& grid, std::span<const std::uint32_t> verts,
                                    GradBuffer* grad = nullptr, double scale = 1.0)
    {
        if (verts.empty())
            return 0.0;
        const std::size_t nv = grid.num_vertices();
        std::vector<Vec3> normals(nv), raw(nv);
        std::vector<std::uint8_t> need(nv, 0);
        for (std::uint32_t vi : verts)
        {
            Int3 v = grid.vertex_coords(vi);
            need[vi] = 1;
            for (int a = 0; a < 3; ++a)
            {
                if (v[a] < grid.resolution[a])
                {
                    Int3 nb = v;
                    nb[a] += 1;
                    need[grid.vertex_index(nb)] = 1;
                }
            }
        }
        for (std::size_t i = 0; i < nv; ++i)
        {
            if (!need[i])
                continue;
            raw[i] = vertex_finite_diff(grid, grid.delta, grid.vertex_coords(i));
            double len = norm(raw[i]);
            normals[i] = len > kDegenerateGradient ? -raw[i] / len : Vec3{};
        }

        const double inv_n = 1.0 / double(verts.size());
        double sum = 0.0;
        std::vector<Vec3> g_n;
        if (grad)
            g_n.assign(nv, Vec3{});
        for (std::uint32_t vi : verts)
        {
            Int3 v = grid.vertex_coords(vi);
            for (int a = 0; a < 3; ++a)
            {
                if (v[a] >= grid.resolution[a])
                    continue;
                Int3 nb = v;
                nb[a] += 1;
                std::size_t ni = grid.vertex_index(nb);
                Vec3 d = normals[ni] - normals[vi];
                sum += std::abs(d.x) + std::abs(d.y) + std::abs(d.z);
                if (grad)
                {
                    Vec3 s{double((d.x > 0) - (d.x < 0)), double((d.y > 0) - (d.y < 0)), double((d.z > 0) - (d.z < 0))};
                    g_n[ni] += s;
                    g_n[vi] -= s;
                }
            }
        }

        if (grad)
        {
            for (std::size_t i = 0; i < nv; ++i)
            {
                if (!need[i] || g_n[i] == Vec3{})
                    continue;
                double len = norm(raw[i]);
                if (!(len > kDegenerateGradient))
                    continue;
                // n = -g/|g|  =>  dL/dg = -(I - u u^T) dL/dn / |g|
                Vec3 u = raw[i] / len;
                Vec3 gn = g_n[i] * (scale * inv_n);
                Vec3 gg = -(gn - u * dot(u, gn)) / len;
                Int3 v = grid.vertex_coords(i);
                for (int a = 0; a < 3; ++a)
                {
                    if (v[a] >= grid.resolution[a])
                        continue;
                    Int3 nb = v;
                    nb[a] += 1;
                    double k = gg[a] * grid.resolution[a] / 256.0;
                    grad->d_delta[grid.vertex_index(nb)] += k;
                    grad->d_delta[i] -= k;
                }
            }
        }
        return sum * inv_n;
    }

    /// World-space gradient at a vertex: forward differences, backward on the
    /// upper boundary.
    inline Vec3 world_vertex_gradient(const GridShape& shape, std::span<const double> values, Int3 v,
                                      std::array<std::array<std::size_t, 2>, 3>* taps = nullptr)
    {
        Vec3 out;
        Vec3 s = shape.voxel_size();
        for (int a = 0; a < 3; ++a)
        {
            Int3 lo = v, hi = v;
            if (v[a] < shape.resolution[a])
                hi[a] += 1;
            else
                lo[a] -= 1;
            std::size_t il = shape.vertex_index(lo), ih = shape.vertex_index(hi);
            out[a] = (values[ih] - values[il]) / s[a];
            if (taps)
                (*taps)[a] = {il, ih};
        }
        return out;
    }

    /// Mean squared deviation of |grad delta| (world units) from one.
    inline double eikonal_loss(const VoxelGrid& grid, std::span<const std::uint32_t> verts, GradBuffer* grad = nullptr,
                               double scale = 1.0)
    {
        if (verts.empty())
            return 0.0;
        const double inv_n = 1.0 / double(verts.size());
        const Vec3 s = grid.voxel_size();
        double sum = 0.0;
        for (std::uint32_t vi : verts)
        {
            std::array<std::array<std::size_t, 2>, 3> taps{};
            Vec3 g = world_vertex_gradient(grid, grid.delta, grid.vertex_coords(vi), &taps);
            double len = norm(g);
            sum += (len - 1.0) * (len - 1.0);
            if (grad && len > 0.0)
            {
                double k = scale * inv_n * 2.0 * (len - 1.0) / len;
                for (int a = 0; a < 3; ++a)
                {
                    double ga = k * g[a] / s[a];
                    grad->d_delta[taps[a][1]] += ga;
                    grad->d_delta[taps[a][0]] -= ga;
                }
            }
        }
        return sum * inv_n;
    }

    /// Uniform sample (without replacement) of a fraction of the occupied voxels.
    inline std::vector<std::uint32_t> sample_voxels(const VoxelGrid& grid, double fraction, std::uint64_t seed)
    {
        std::vector<std::uint32_t> occ;
        for (std::size_t i = 0; i < grid.num_voxels(); ++i)
            if (grid.occupancy[i])
                occ.push_back(std::uint32_t(i));
        if (occ.empty())
            return occ;
        std::size_t k = std::max<std::size_t>(1, std::size_t(std::llround(fraction * double(occ.size()))));
        k = std::min(k, occ.size());
        std::mt19937_64 rng(seed);
        // Partial Fisher-Yates keeps the draw independent of the library's std::sample.
        for (std::size_t i = 0; i < k; ++i)
        {
            std::size_t j = i + std::size_t(rng() % (occ.size() - i));
            std::swap(occ[i], occ[j]);
        }
        occ.resize(k);
        std::sort(occ.begin(), occ.end());
        return occ;
    }

    /// Mean relu(sigma_alpha) over the corners of the given voxels.
    inline double sparsity_loss(const VoxelGrid& grid, std::span<const std::uint32_t> voxels, GradBuffer* grad = nullptr,
                                double scale = 1.0)
    {
        if (voxels.empty())
            return 0.0;
        const double inv_n = 1.0 / (8.0 * double(voxels.size()));
        double sum = 0.0;
        for (std::uint32_t vx : voxels)
        {
            for (auto c : grid.corner_indices(grid.voxel_coords(vx)))
            {
                double s = grid.sigma_alpha[c];
                if (s > 0.0)
                {
                    sum += s;
                    if (grad)
                        grad->d_sigma_alpha[c] += scale * inv_n;
                }
            }
        }
        return sum * inv_n;
    }

    inline double sparsity_loss(const VoxelGrid& grid, double fraction, std::mt19937_64& rng)
    {
        auto voxels = sample_voxels(grid, fraction, rng());
        return sparsity_loss(grid, voxels);
    }

    // ---------------------------------------------------------------------
    // Batch objective

    struct TargetRay
    {
        Ray ray;
        Rgb color;
    };

    struct LossTerms
    {
        double photometric = 0.0;  // batch means of the per-ray terms
        double convergence = 0.0;
        double entropy = 0.0;
        double normal = 0.0;
        double tv = 0.0;
        double sparsity = 0.0;
        double eikonal = 0.0;
        double total = 0.0;
    };

    struct ObjectiveOptions
    {
        long iteration = 0;
        std::uint64_t sparsity_seed = 0;
        bool deterministic = true;
        const std::vector<std::uint32_t>* vertices = nullptr;  // precomputed active set
    };

    /// Batch mean of the per-ray terms plus the field regularizers (added once).
    /// Fills `grad` (accumulating) when non-null.
    inline LossTerms total_loss(const VoxelGrid& grid, std::span<const TargetRay> batch, const LossWeights& w,
                                const RenderConfig& cfg, const ObjectiveOptions& opt = {}, GradBuffer* grad = nullptr)
    {
        LossTerms terms;
        const double lambda_c = opt.iteration < w.lambda_c_cutoff_iters ? w.lambda_c : 0.0;
        const std::size_t nb = batch.size();

        if (nb > 0)
        {
            const double inv_b = 1.0 / double(nb);
            std::vector<double> photo(nb), conv(nb), ent(nb);
            std::vector<std::vector<SampleGrad>> recs(grad && opt.deterministic ? nb : 0);
            parallel_for_chunks(nb, [&](std::size_t b, std::size_t e) {
                std::vector<SampleGrad> scratch;
                for (std::size_t i = b; i < e; ++i)
                {
                    const TargetRay& tr = batch[i];
                    RaySamples rs = render_ray(grid, tr.ray, cfg);
                    photo[i] = photometric(rs.color, tr.color);
                    conv[i] = convergence_loss(rs);
                    ent[i] = entropy_loss(rs);
                    if (!grad)
                        continue;
                    RayAdjoint adj{(rs.color - tr.color) * (2.0 * inv_b), lambda_c * inv_b, w.lambda_H * inv_b};
                    if (opt.deterministic)
                    {
                        backward_ray(grid, tr.ray, cfg, rs, adj, recs[i]);
                    }
                    else
                    {
                        scratch.clear();
                        backward_ray(grid, tr.ray, cfg, rs, adj, scratch);
                        for (const auto& r : scratch)
                            apply_atomic(r, *grad);
                    }
                }
            });
            if (grad && opt.deterministic)
                for (const auto& rv : recs)
                    for (const auto& r : rv)
                        apply(r, *grad);

            long double sp = 0, sc = 0, se = 0;
            for (std::size_t i = 0; i < nb; ++i)
            {
                sp += photo[i];
                sc += conv[i];
                se += ent[i];
            }
            terms.photometric = double(sp / nb);
            terms.convergence = double(sc / nb);
            terms.entropy = double(se / nb);
        }

        std::vector<std::uint32_t> own;
        const std::vector<std::uint32_t>* verts = opt.vertices;
        if (!verts && (w.lambda_n > 0 || w.lambda_delta > 0 || w.lambda_ek > 0))
        {
            own = active_vertices(grid);
            verts = &own;
        }
        if (w.lambda_n > 0)
            terms.normal = normal_smoothness(grid, *verts, grad, w.lambda_n);
        if (w.lambda_delta > 0)
            terms.tv = tv_loss(grid, *verts, grad, w.lambda_delta);
        if (w.lambda_ek > 0)
            terms.eikonal = eikonal_loss(grid, *verts, grad, w.lambda_ek);
        if (w.lambda_alpha > 0)
        {
            auto vox = sample_voxels(grid, w.sparsity_fraction, opt.sparsity_seed);
            terms.sparsity = sparsity_loss(grid, vox, grad, w.lambda_alpha);
        }

        long double total = terms.photometric;
        total += static_cast<long double>(lambda_c) * terms.convergence;
        total += static_cast<long double>(w.lambda_H) * terms.entropy;
        total += static_cast<long double>(w.lambda_n) * terms.normal;
        total += static_cast<long double>(w.lambda_delta) * terms.tv;
        total += static_cast<long double>(w.lambda_alpha) * terms.sparsity;
        total += static_cast<long double>(w.lambda_ek) * terms.eikonal;
        terms.total = double(total);
        return terms;
    }
}  // namespace asurf
