#pragma once

/**
 * Reverse-mode differentiation of the surface renderer.
 *
 * The forward pass (render_ray) doubles as the tape: every RaySample keeps its
 * voxel, local position, cubic and compositing scalars. backward_ray walks the
 * samples in reverse and produces one SampleGrad record per sample, holding
 * the partials w.r.t. the sample's interpolated inputs; scattering those
 * records into a GradBuffer is a separate step so that batch reductions can
 * be done in a fixed order.
 *
 * Intersection depths are differentiated with the implicit function theorem
 * on P(t') - tau = 0. The culling decisions, the sample count and the
 * argmax-weight index are treated as constants.
 */

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "field.hpp"
#include "intersect.hpp"
#include "parallel.hpp"
#include "render.hpp"

namespace asurf
{
    struct GradBuffer
    {
        std::vector<double> d_delta;
        std::vector<double> d_sigma_alpha;
        std::vector<double> d_sh;

        GradBuffer() = default;
        explicit GradBuffer(const GridShape& shape)
            : d_delta(shape.num_vertices(), 0.0),
              d_sigma_alpha(shape.num_vertices(), 0.0),
              d_sh(shape.num_vertices() * kShStride, 0.0)
        {
        }

        void zero()
        {
            std::fill(d_delta.begin(), d_delta.end(), 0.0);
            std::fill(d_sigma_alpha.begin(), d_sigma_alpha.end(), 0.0);
            std::fill(d_sh.begin(), d_sh.end(), 0.0);
        }

        bool all_finite() const
        {
            auto ok = [](const std::vector<double>& v) {
                return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
            };
            return ok(d_delta) && ok(d_sigma_alpha) && ok(d_sh);
        }
    };

    // Flat parameter addressing: [delta | sigma_alpha | sh], V, V and 27V long.
    inline std::size_t param_count(const GridShape& g) { return g.num_vertices() * (2 + kShStride); }

    inline double& param_at(VoxelGrid& grid, std::size_t i)
    {
        std::size_t nv = grid.num_vertices();
        if (i < nv)
            return grid.delta[i];
        if (i < 2 * nv)
            return grid.sigma_alpha[i - nv];
        return grid.sh[i - 2 * nv];
    }

    inline double grad_at(const GradBuffer& g, std::size_t i)
    {
        std::size_t nv = g.d_delta.size();
        if (i < nv)
            return g.d_delta[i];
        if (i < 2 * nv)
            return g.d_sigma_alpha[i - nv];
        return g.d_sh[i - 2 * nv];
    }

    inline double& grad_at(GradBuffer& g, std::size_t i)
    {
        std::size_t nv = g.d_delta.size();
        if (i < nv)
            return g.d_delta[i];
        if (i < 2 * nv)
            return g.d_sigma_alpha[i - nv];
        return g.d_sh[i - 2 * nv];
    }

    /// dt'/d(f3, f2, f1, f0) for a simple root of P(t') = tau; nullopt when
    /// |P'(t')| < 1e-8 * max|f_k| (tangential hit, gradient dropped).
    inline std::optional<std::array<double, 4>> root_gradient(const Cubic& c, double t_root)
    {
        double dp = c.derivative(t_root);
        double scale = std::max({std::abs(c.f3), std::abs(c.f2), std::abs(c.f1)});
        if (!(std::abs(dp) >= 1e-8 * scale) || dp == 0.0)
            return std::nullopt;
        double inv = -1.0 / dp;
        return std::array<double, 4>{t_root * t_root * t_root * inv, t_root * t_root * inv, t_root * inv, inv};
    }

    /// Per-sample partials w.r.t. the values the sample reads from the grid.
    struct SampleGrad
    {
        std::array<std::uint32_t, 8> corners{};
        std::array<double, 8> weights{};
        std::array<double, 8> d_delta{};      // per corner
        double d_raw = 0.0;                   // w.r.t. interpolated sigma_alpha
        std::array<double, kShStride> d_coeff{};  // w.r.t. interpolated SH coefficients
    };

    inline void apply(const SampleGrad& s, GradBuffer& out)
    {
        for (int c = 0; c < 8; ++c)
        {
            std::size_t v = s.corners[c];
            out.d_delta[v] += s.d_delta[c];
            out.d_sigma_alpha[v] += s.weights[c] * s.d_raw;
            double* dst = &out.d_sh[v * kShStride];
            for (int k = 0; k < kShStride; ++k)
                dst[k] += s.weights[c] * s.d_coeff[k];
        }
    }

    inline void apply_atomic(const SampleGrad& s, GradBuffer& out)
    {
        for (int c = 0; c < 8; ++c)
        {
            std::size_t v = s.corners[c];
            std::atomic_ref<double>(out.d_delta[v]).fetch_add(s.d_delta[c], std::memory_order_relaxed);
            std::atomic_ref<double>(out.d_sigma_alpha[v]).fetch_add(s.weights[c] * s.d_raw, std::memory_order_relaxed);
            for (int k = 0; k < kShStride; ++k)
                std::atomic_ref<double>(out.d_sh[v * kShStride + k])
                    .fetch_add(s.weights[c] * s.d_coeff[k], std::memory_order_relaxed);
        }
    }

    /// Upstream derivatives of the per-ray loss.
    struct RayAdjoint
    {
        Rgb d_color;                // dL/d(composited color)
        double convergence = 0.0;   // weight on sum_i |t~ - t_i| over gated samples
        double entropy = 0.0;       // weight on the weight-entropy term
    };

    inline constexpr double kConvergenceGate = 1e-8;
    inline constexpr double kEntropyMinWeight = 1e-12;

    /// Reverse pass over one rendered ray. Appends one record per sample.
    inline void backward_ray(const VoxelGrid& grid, const Ray& ray, const RenderConfig& cfg, const RaySamples& rs,
                             const RayAdjoint& adj, std::vector<SampleGrad>& out)
    {
        const auto& S = rs.samples;
        const std::size_t n = S.size();
        if (n == 0)
            return;

        std::vector<double> g_w(n, 0.0), g_t(n, 0.0);
        std::vector<Rgb> g_c(n);

        for (std::size_t i = 0; i < n; ++i)
        {
            g_w[i] = dot(adj.d_color, S[i].color);
            g_c[i] = adj.d_color * S[i].weight;
        }
        double g_residual = dot(adj.d_color, cfg.background);

        if (adj.entropy != 0.0)
        {
            double W = 0.0;
            for (const auto& s : S)
                W += s.weight;
            if (W >= kEntropyMinWeight)
            {
                double H = 0.0;
                for (const auto& s : S)
                {
                    double wb = s.weight / W;
                    if (wb > 0.0)
                        H -= wb * std::log(wb);
                }
                for (std::size_t i = 0; i < n; ++i)
                {
                    double wb = S[i].weight / W;
                    double lg = wb > 0.0 ? std::log(wb) : 0.0;
                    g_w[i] += adj.entropy * (-lg - H) / W;
                }
            }
        }

        if (adj.convergence != 0.0 && rs.mode_index >= 0)
        {
            const std::size_t k = std::size_t(rs.mode_index);
            const double t_mode = S[k].hit.t;
            for (std::size_t i = 0; i < n; ++i)
            {
                if (i == k || !(S[i].alpha_trunc > kConvergenceGate))
                    continue;
                double diff = S[i].hit.t - t_mode;
                double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
                g_t[i] += adj.convergence * sgn;
                g_t[k] -= adj.convergence * sgn;
            }
        }

        // Compositing: w_i = T_i a*_i, T_i = prod_{j<i} (1 - a*_j), residual = T_n.
        // V_i collects sum_{m>i} dL/dT_m * prod_{i<k<m} (1 - a*_k).
        std::vector<double> g_astar(n, 0.0);
        double V = g_residual;
        for (std::size_t ii = n; ii-- > 0;)
        {
            const RaySample& s = S[ii];
            g_astar[ii] = g_w[ii] * s.transmittance - s.transmittance * V;
            double g_T = g_w[ii] * s.alpha_trunc;
#ifdef ASURF_CORRUPT_ADJOINT
            // deliberately wrong recursion; only the gradcheck self-test builds this
            V = g_T + V;
#else
            V = g_T + (1.0 - s.alpha_trunc) * V;
#endif
        }

        const Vec3 d_local = cdiv(ray.dir, grid.voxel_size());
        for (std::size_t i = 0; i < n; ++i)
        {
            const RaySample& s = S[i];
            SampleGrad rec;
            auto idx = grid.corner_indices(s.hit.voxel);
            for (int c = 0; c < 8; ++c)
                rec.corners[c] = std::uint32_t(idx[c]);
            rec.weights = trilinear_weights(s.hit.local);

            double g_alpha = g_astar[i] * s.gamma;
            rec.d_raw = g_alpha * opacity_activation_derivative(s.raw_opacity);
            for (int ch = 0; ch < 3; ++ch)
            {
                double g_pre = s.color_pre[ch] > 0.0 ? g_c[i][ch] : 0.0;
                for (int k = 0; k < kShBasis; ++k)
                    rec.d_coeff[ch * kShBasis + k] = g_pre * rs.basis[k];
            }

            // Geometric path: the sample point slides along the ray with t.
            auto wg = trilinear_weight_gradients(s.hit.local);
            double gt = g_t[i];
            for (int c = 0; c < 8; ++c)
            {
                double dw = dot(wg[c], d_local);
                if (dw == 0.0)
                    continue;
                double acc = rec.d_raw * grid.sigma_alpha[idx[c]];
                const double* sh = &grid.sh[idx[c] * kShStride];
                for (int k = 0; k < kShStride; ++k)
                    acc += rec.d_coeff[k] * sh[k];
                gt += dw * acc;
            }

            if (gt != 0.0)
            {
                if (auto dt = root_gradient(s.hit.cubic, s.hit.t_local))
                {
                    auto jac = cubic_coeff_jacobian(s.hit.shifted_origin, d_local);
                    for (int c = 0; c < 8; ++c)
                    {
                        const Cubic& J = jac[c];
                        double dtdc = (*dt)[0] * J.f3 + (*dt)[1] * J.f2 + (*dt)[2] * J.f1 + (*dt)[3] * J.f0;
                        rec.d_delta[c] = gt * dtdc;
                    }
                }
            }
            out.push_back(rec);
        }
    }

    /// Accumulates d(d_color . C)/d(params) for one ray into `out`.
    inline void backward_ray(const VoxelGrid& grid, const Ray& ray, const RenderConfig& cfg, const Rgb& d_color,
                             GradBuffer& out)
    {
        RaySamples rs = render_ray(grid, ray, cfg);
        std::vector<SampleGrad> recs;
        backward_ray(grid, ray, cfg, rs, RayAdjoint{d_color, 0.0, 0.0}, recs);
        for (const auto& r : recs)
            apply(r, out);
    }

    // ---------------------------------------------------------------------
    // Finite-difference verification

    /// Loss evaluator used by the checks. When `grad` is non-null it must be
    /// filled with the analytic gradient (the buffer arrives zeroed).
    using LossWithGrad = std::function<double(const VoxelGrid&, GradBuffer*)>;

    struct FdEntry
    {
        std::size_t param = 0;
        double analytic = 0.0;
        double numeric = 0.0;
        double rel_err = 0.0;
    };

    struct FdReport
    {
        double max_rel_err = 0.0;
        std::size_t worst_param = 0;
        std::size_t checked = 0;
        std::vector<FdEntry> entries;  // sorted by decreasing relative error
    };

    struct FdOptions
    {
        std::size_t subset_size = 0;  // 0 = every candidate
        double h = 1e-4;
        double min_grad = 1e-8;       // candidates need |analytic| above this
        std::uint64_t seed = 0;
    };

    inline double relative_error(double a, double b)
    {
        double den = std::max(std::abs(a), std::abs(b));
        return den == 0.0 ? 0.0 : std::abs(a - b) / den;
    }

    /// Central differences over a (random) subset of parameters.
    inline FdReport fd_check(const VoxelGrid& grid, const LossWithGrad& loss, const FdOptions& opt = {})
    {
        GradBuffer analytic(grid);
        loss(grid, &analytic);

        std::vector<std::size_t> cand;
        const std::size_t np = param_count(grid);
        for (std::size_t i = 0; i < np; ++i)
            if (std::abs(grad_at(analytic, i)) > opt.min_grad)
                cand.push_back(i);
        if (opt.subset_size > 0 && opt.subset_size < cand.size())
        {
            std::mt19937_64 rng(opt.seed);
            std::vector<std::size_t> pick;
            std::sample(cand.begin(), cand.end(), std::back_inserter(pick), opt.subset_size, rng);
            cand = std::move(pick);
        }

        FdReport rep;
        rep.entries.resize(cand.size());
        parallel_for_chunks(cand.size(), [&](std::size_t b, std::size_t e) {
            VoxelGrid local = grid;
            for (std::size_t j = b; j < e; ++j)
            {
                std::size_t p = cand[j];
                double& v = param_at(local, p);
                const double orig = v;
                v = orig + opt.h;
                double lp = loss(local, nullptr);
                v = orig - opt.h;
                double lm = loss(local, nullptr);
                v = orig;
                double num = (lp - lm) / (2.0 * opt.h);
                double ana = grad_at(analytic, p);
                rep.entries[j] = {p, ana, num, relative_error(ana, num)};
            }
        });
        std::stable_sort(rep.entries.begin(), rep.entries.end(),
                         [](const FdEntry& a, const FdEntry& b) { return a.rel_err > b.rel_err; });
        rep.checked = rep.entries.size();
        if (!rep.entries.empty())
        {
            rep.max_rel_err = rep.entries.front().rel_err;
            rep.worst_param = rep.entries.front().param;
        }
        return rep;
    }

    struct DirectionalCheck
    {
        double numeric = 0.0;
        double analytic = 0.0;
        double rel_err = 0.0;
    };

    /// Compares (L(p + h v) - L(p - h v)) / 2h with <grad L, v>.
    inline DirectionalCheck directional_check(const VoxelGrid& grid, const LossWithGrad& loss, const GradBuffer& v,
                                              double h = 1e-4)
    {
        GradBuffer g(grid);
        loss(grid, &g);
        const std::size_t np = param_count(grid);
        long double ana = 0.0L;
        for (std::size_t i = 0; i < np; ++i)
            ana += static_cast<long double>(grad_at(g, i)) * grad_at(v, i);

        VoxelGrid plus = grid, minus = grid;
        for (std::size_t i = 0; i < np; ++i)
        {
            param_at(plus, i) += h * grad_at(v, i);
            param_at(minus, i) -= h * grad_at(v, i);
        }
        double num = (loss(plus, nullptr) - loss(minus, nullptr)) / (2.0 * h);
        return {num, double(ana), relative_error(double(ana), num)};
    }
}  // namespace asurf
