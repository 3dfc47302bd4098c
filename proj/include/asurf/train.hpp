#pragma once

/**
 * Optimization of a surface grid against a posed image set: RMSProp on the
 * surface scalar, raw opacity and SH arrays, with delayed exponential
 * learning rates and an annealed truncation parameter.
 */

#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "loss.hpp"
#include "optim.hpp"
#include "render.hpp"

namespace asurf
{
    struct NonFiniteLoss : std::runtime_error
    {
        long iteration;
        LossTerms terms;
        NonFiniteLoss(long it, const LossTerms& t, const std::string& msg)
            : std::runtime_error(msg), iteration(it), terms(t)
        {
        }
    };

    struct TrainConfig
    {
        long iters = 50000;
        std::size_t batch_rays = 5000;
        double lr_delta_start = 1e-5;
        double lr_delta_end = 1e-5;
        double lr_sigma_alpha_start = 1e-2;
        double lr_sigma_alpha_end = 1e-3;
        double lr_sh = 1e-3;
        long delay_iters = 25000;
        double delay_mult = 0.01;
        double a_start = 5.0;
        double a_end = 2.0;
        long a_anneal_iters = 10000;
        double rmsprop_decay = 0.95;
        double rmsprop_eps = 1e-8;
        std::uint64_t seed = 0;
        bool deterministic = true;
        LossWeights loss;

        void validate() const
        {
            if (iters < 0)
                throw std::invalid_argument("iters must be >= 0");
            if (batch_rays == 0)
                throw std::invalid_argument("batch_rays must be positive");
            for (double lr : {lr_delta_start, lr_delta_end, lr_sigma_alpha_start, lr_sigma_alpha_end, lr_sh})
                if (!(lr > 0.0))
                    throw std::invalid_argument("learning rates must be positive");
            if (!(a_end <= a_start))
                throw std::invalid_argument("a_end must not exceed a_start");
            if (delay_iters < 0 || a_anneal_iters < 0)
                throw std::invalid_argument("schedule lengths must be >= 0");
        }
    };

    /// Log-linear interpolation from lr_start to lr_end over `total` steps,
    /// scaled by a sine ramp from delay_mult to 1 over the first delay_iters.
    inline double lr_schedule(long step, double lr_start, double lr_end, long total, long delay_iters, double delay_mult)
    {
        double s = total > 0 ? std::clamp(double(step) / double(total), 0.0, 1.0) : 0.0;
        double base = std::exp((1.0 - s) * std::log(lr_start) + s * std::log(lr_end));
        double mult = 1.0;
        if (delay_iters > 0)
        {
            double r = std::min(double(step) / double(delay_iters), 1.0);
            mult = delay_mult + (1.0 - delay_mult) * std::sin(0.5 * std::numbers::pi * r);
        }
        return mult * base;
    }

    inline double anneal_a(long step, double a_start, double a_end, long anneal_iters)
    {
        if (anneal_iters <= 0 || step >= anneal_iters)
            return a_end;
        double s = double(std::max(step, 0L)) / double(anneal_iters);
        return a_start + (a_end - a_start) * s;
    }

    struct TrainState
    {
        RmsProp delta, sigma_alpha, sh;
        long iteration = 0;
    };

    struct TrainRecord
    {
        long iter = 0;
        LossTerms terms;
        double lr_delta = 0.0;
        double lr_sigma = 0.0;
        double a = 0.0;
    };

    inline const char* kTrainCsvHeader = "iter,photometric,L_c,L_n,L_delta,L_H,L_alpha,total,lr_delta,lr_sigma,a";

    inline std::string csv_row(const TrainRecord& r)
    {
        std::ostringstream os;
        os << std::setprecision(10) << r.iter << ',' << r.terms.photometric << ',' << r.terms.convergence << ','
           << r.terms.normal << ',' << r.terms.tv << ',' << r.terms.entropy << ',' << r.terms.sparsity << ','
           << r.terms.total << ',' << r.lr_delta << ',' << r.lr_sigma << ',' << r.a;
        return os.str();
    }

    struct TrainHooks
    {
        std::ostream* csv = nullptr;  // header + one row per logged iteration
        long log_every = 1;
        long checkpoint_every = 0;    // 0 disables periodic checkpoints
        std::function<void(long iter, const VoxelGrid&)> checkpoint;
        std::function<void(const TrainRecord&)> progress;
    };

    inline std::string describe(const LossTerms& t)
    {
        std::ostringstream os;
        os << "photometric=" << t.photometric << " L_c=" << t.convergence << " L_n=" << t.normal
           << " L_delta=" << t.tv << " L_H=" << t.entropy << " L_alpha=" << t.sparsity << " L_ek=" << t.eikonal
           << " total=" << t.total;
        return os.str();
    }

    /// Trains `grid` in place. Occupancy is held fixed. Returns the per-iteration
    /// records.
    inline std::vector<TrainRecord> train(VoxelGrid& grid, const Dataset& ds, const TrainConfig& cfg,
                                          const TrainHooks& hooks = {})
    {
        cfg.validate();
        grid.validate();
        ds.validate();
        std::vector<TrainRecord> log;
        if (hooks.csv)
            *hooks.csv << kTrainCsvHeader << "\n";
        if (cfg.iters == 0)
            return log;

        const std::size_t nv = grid.num_vertices();
        TrainState st{RmsProp(nv, cfg.rmsprop_decay, cfg.rmsprop_eps), RmsProp(nv, cfg.rmsprop_decay, cfg.rmsprop_eps),
                      RmsProp(nv * kShStride, cfg.rmsprop_decay, cfg.rmsprop_eps), 0};
        const auto verts = active_vertices(grid);
        std::mt19937_64 rng(cfg.seed);
        GradBuffer grad(grid);
        std::vector<TargetRay> batch(cfg.batch_rays);
        RenderConfig rc;
        rc.background = ds.background;

        for (long it = 0; it < cfg.iters; ++it)
        {
            auto px = sample_pixels(ds, cfg.batch_rays, rng);
            for (std::size_t i = 0; i < px.size(); ++i)
                batch[i] = {pixel_ray(ds, px[i]), pixel_color(ds, px[i])};
            rc.a = anneal_a(it, cfg.a_start, cfg.a_end, cfg.a_anneal_iters);

            grad.zero();
            ObjectiveOptions opt;
            opt.iteration = it;
            opt.sparsity_seed = splitmix64(cfg.seed ^ (0xA5A5A5A5ull + std::uint64_t(it)));
            opt.deterministic = cfg.deterministic;
            opt.vertices = &verts;
            LossTerms terms = total_loss(grid, batch, cfg.loss, rc, opt, &grad);
            if (!std::isfinite(terms.total) || !grad.all_finite())
                throw NonFiniteLoss(it, terms, "non-finite loss at iteration " + std::to_string(it) + ": " + describe(terms));

            TrainRecord rec;
            rec.iter = it;
            rec.terms = terms;
            rec.a = rc.a;
            rec.lr_delta = lr_schedule(it, cfg.lr_delta_start, cfg.lr_delta_end, cfg.iters, cfg.delay_iters, cfg.delay_mult);
            rec.lr_sigma = lr_schedule(it, cfg.lr_sigma_alpha_start, cfg.lr_sigma_alpha_end, cfg.iters, cfg.delay_iters,
                                       cfg.delay_mult);
            st.delta.step(grid.delta, grad.d_delta, rec.lr_delta);
            st.sigma_alpha.step(grid.sigma_alpha, grad.d_sigma_alpha, rec.lr_sigma);
            st.sh.step(grid.sh, grad.d_sh, cfg.lr_sh);
            st.iteration = it + 1;

            log.push_back(rec);
            if (hooks.csv && (it % std::max(1L, hooks.log_every) == 0 || it + 1 == cfg.iters))
                *hooks.csv << csv_row(rec) << "\n";
            if (hooks.progress)
                hooks.progress(rec);
            if (hooks.checkpoint && hooks.checkpoint_every > 0 && (it + 1) % hooks.checkpoint_every == 0 &&
                it + 1 != cfg.iters)
                hooks.checkpoint(it + 1, grid);
        }
        return log;
    }

    /// Mean per-channel absolute error of full renders against the dataset.
    inline double mean_render_error(const VoxelGrid& grid, const Dataset& ds, double a)
    {
        RenderConfig rc;
        rc.a = a;
        rc.background = ds.background;
        long double sum = 0.0L;
        std::size_t n = 0;
        for (std::size_t v = 0; v < ds.size(); ++v)
        {
            Image img = render_image(grid, ds.cameras[v], rc).color;
            for (std::size_t i = 0; i < img.data.size(); ++i)
                sum += std::abs(img.data[i] - ds.images[v].data[i]);
            n += img.data.size();
        }
        return n ? double(sum / n) : 0.0;
    }
}  // namespace asurf
