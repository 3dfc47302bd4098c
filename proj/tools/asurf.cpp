// asurf: command-line driver for dataset synthesis, density fitting, surface
// training, rendering, point extraction and evaluation.
//
// Exit codes: 0 success, 1 runtime or data error, 2 usage error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include <asurf/asurf.hpp>

namespace fs = std::filesystem;
using namespace asurf;

namespace
{
    struct UsageError : std::runtime_error
    {
        using std::runtime_error::runtime_error;
    };

    RunConfig config_from(const std::string& path)
    {
        return path.empty() ? RunConfig{} : load_config(path);
    }

    int cmd_synth(const std::string& scene_name, int views, int res, const std::string& out, std::uint64_t seed,
                  int grid, double spacing)
    {
        auto kind = parse_scene_kind(scene_name);
        if (!kind)
            throw UsageError("unknown scene '" + scene_name + "' (sphere, thin_sheet, semi_transparent_slab, nested)");
        if (views < 2 || res < 1 || grid < 1 || !(spacing > 0))
            throw UsageError("need --views >= 2, --res >= 1, --grid >= 1 and --spacing > 0");
        auto scene = make_scene(*kind, 2.0 / grid);
        auto sd = make_dataset(scene, std::size_t(views), res, seed, spacing);
        save_dataset(sd.data, out);
        write_ply((fs::path(out) / "gt_points.ply").string(), sd.gt_points);
        std::printf("wrote %d views at %dx%d and %zu ground-truth points to %s\n", views, res, res, sd.gt_points.size(),
                    out.c_str());
        return 0;
    }

    int cmd_fit_density(const std::string& data, const std::string& out, const std::string& config,
                        std::optional<std::uint64_t> seed)
    {
        RunConfig cfg = config_from(config);
        if (seed)
            cfg.fit.seed = *seed;
        Dataset ds = load_dataset(data);
        FitStats st;
        long every = std::max(1L, cfg.fit.iters / 10);
        DensityGrid g = fit_density(ds, cfg.fit, &st, [&](long it, double mse) {
            if (it % every == 0)
                std::fprintf(stderr, "fit %ld/%ld mse %.6g\n", it, cfg.fit.iters, mse);
        });
        save_density(g, out);
        double err = density_render_error(g, ds, cfg.fit.volume);
        std::printf("final training error: mean abs %.6g (last batch mse %.6g)\n", err, st.final_mse);
        if (!(err < 0.05))
            std::fprintf(stderr, "warning: DidNotConverge: mean abs error %.4g >= 0.05 after %ld iterations\n", err,
                         cfg.fit.iters);
        return 0;
    }

    int cmd_train(const std::string& data, const std::string& init, const std::string& out, const std::string& config,
                  std::optional<std::uint64_t> seed, std::string log_path, long checkpoint_every)
    {
        RunConfig cfg = config_from(config);
        if (seed)
            cfg.train.seed = *seed;
        Dataset ds = load_dataset(data);
        VoxelGrid grid;
        if (peek_kind(init) == CheckpointKind::Density)
            grid = surface_from_density(load_density(init), cfg.init);
        else
            grid = load_surface(init);
        if (log_path.empty())
            log_path = out + ".csv";
        std::ofstream csv(log_path);
        if (!csv)
            throw FormatError("cannot write " + log_path);
        TrainHooks hooks;
        hooks.csv = &csv;
        hooks.checkpoint_every = checkpoint_every;
        hooks.checkpoint = [&](long it, const VoxelGrid& g) { save_surface(g, out + "." + std::to_string(it)); };
        long every = std::max(1L, cfg.train.iters / 20);
        hooks.progress = [&](const TrainRecord& r) {
            if (r.iter % every == 0)
                std::fprintf(stderr, "train %ld/%ld photometric %.6g total %.6g a %.3g\n", r.iter, cfg.train.iters,
                             r.terms.photometric, r.terms.total, r.a);
        };
        try
        {
            train(grid, ds, cfg.train, hooks);
        }
        catch (const NonFiniteLoss& e)
        {
            std::fprintf(stderr, "error: NonFiniteLoss: %s\n", e.what());
            return 1;
        }
        save_surface(grid, out);
        std::printf("wrote %s (%ld iterations, log %s)\n", out.c_str(), cfg.train.iters, log_path.c_str());
        return 0;
    }

    Camera pose_camera(const std::string& pose, const std::string& data, int width)
    {
        bool is_index = !pose.empty() && pose.find_first_not_of("0123456789") == std::string::npos;
        if (is_index)
        {
            if (data.empty())
                throw UsageError("--pose <index> needs --data");
            Dataset ds = load_dataset(data);
            std::size_t i = std::stoul(pose);
            if (i >= ds.size())
                throw UsageError("pose index " + pose + " out of range (" + std::to_string(ds.size()) + " views)");
            return ds.cameras[i];
        }
        std::ifstream is(pose);
        if (!is)
            throw FormatError("cannot open pose file " + pose);
        nlohmann::json j;
        try
        {
            is >> j;
        }
        catch (const nlohmann::json::exception& e)
        {
            throw FormatError(pose + ": " + e.what());
        }
        if (!j.contains("transform_matrix") || !j.contains("camera_angle_x"))
            throw FormatError(pose + ": needs transform_matrix and camera_angle_x");
        Camera cam;
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c)
                cam.c2w[r * 4 + c] = j["transform_matrix"].at(r).at(c).get<double>();
        cam.width = j.value("width", width);
        cam.height = j.value("height", cam.width);
        cam.focal = focal_from_angle_x(cam.width, j["camera_angle_x"].get<double>());
        cam.validate();
        return cam;
    }

    int cmd_render(const std::string& ckpt, const std::string& pose, const std::string& data, const std::string& out,
                   const std::string& depth_out, const std::string& config, int width, std::optional<double> a)
    {
        RunConfig cfg = config_from(config);
        if (a)
            cfg.render.a = *a;
        VoxelGrid grid = load_surface(ckpt);
        Camera cam = pose_camera(pose, data, width);
        RenderedImage r = render_image(grid, cam, cfg.render);
        write_png_preview(out, r.color);
        if (!depth_out.empty())
        {
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (double d : r.depth)
                if (std::isfinite(d))
                {
                    lo = std::min(lo, d);
                    hi = std::max(hi, d);
                }
            Image dimg(cam.width, cam.height);
            for (std::size_t i = 0; i < r.depth.size(); ++i)
            {
                double d = r.depth[i];
                double v = std::isfinite(d) ? (hi > lo ? 1.0 - (d - lo) / (hi - lo) : 1.0) : 0.0;
                dimg.set(i, {v, v, v});
            }
            write_png(depth_out, dimg, 16);
        }
        std::printf("wrote %s\n", out.c_str());
        return 0;
    }

    int cmd_extract(const std::string& ckpt, const std::string& out, double trim_alpha, double cell, int k)
    {
        if (trim_alpha < 0 || k < 1 || cell < 0)
            throw UsageError("need --trim >= 0, --k >= 1 and --cell >= 0");
        VoxelGrid grid = load_surface(ckpt);
        SurfacePoints pts = trim(extract_points(grid, k), trim_alpha);
        PointCloud pc;
        if (cell > 0)
            pc.points = downsample(pts.positions, cell);
        else
            pc = pts.cloud();
        write_ply(out, pc);
        std::printf("wrote %zu points to %s\n", pc.points.size(), out.c_str());
        return 0;
    }

    int cmd_chamfer(const std::string& pred, const std::string& gt)
    {
        auto p = read_ply(pred), g = read_ply(gt);
        std::printf("%s\n", to_json(chamfer_l1(p.points, g.points)).c_str());
        return 0;
    }

    int cmd_gradcheck(const std::string& ckpt, int rays, std::uint64_t seed, double h, std::size_t params,
                      const std::string& config)
    {
        if (rays < 1)
            throw UsageError("--rays must be >= 1");
        RunConfig cfg = config_from(config);
        VoxelGrid grid = load_surface(ckpt);
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::normal_distribution<double> nd(0.0, 1.0);
        const Vec3 c = (grid.bbox.lo + grid.bbox.hi) * 0.5;
        const double rad = 0.5 * norm(grid.bbox.extent());
        std::vector<TargetRay> batch;
        for (int i = 0; i < rays; ++i)
        {
            Vec3 dir{nd(rng), nd(rng), nd(rng)};
            dir = dir / norm(dir);
            Vec3 target = grid.bbox.lo + cmul(Vec3{u(rng), u(rng), u(rng)}, grid.bbox.extent());
            batch.push_back({{c - dir * (2.0 * rad) + (target - c), dir}, {u(rng), u(rng), u(rng)}});
        }
        auto verts = active_vertices(grid);
        LossWithGrad loss = [&](const VoxelGrid& g, GradBuffer* grad) {
            ObjectiveOptions opt;
            opt.sparsity_seed = seed;
            opt.vertices = &verts;
            return total_loss(g, batch, cfg.train.loss, cfg.render, opt, grad).total;
        };
        FdOptions fo;
        fo.h = h;
        fo.subset_size = params;
        fo.seed = seed;
        FdReport rep = fd_check(grid, loss, fo);
        std::printf("{\"checked\": %zu, \"max_rel_err\": %.6g, \"worst_param\": %zu}\n", rep.checked, rep.max_rel_err,
                    rep.worst_param);
        if (rep.checked == 0)
        {
            std::fprintf(stderr, "gradcheck: no parameter has a gradient above the threshold\n");
            return 1;
        }
        return rep.max_rel_err < 1e-3 ? 0 : 1;
    }
}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Multi-level implicit surface reconstruction on sparse voxel grids"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker thread cap (default: ISOGRAD_THREADS or all cores)")
        ->check(CLI::NonNegativeNumber);

    std::string scene = "sphere", out, data, config, init, ckpt, pose, depth, pred, gt, log_path;
    int views = 20, res = 128, grid_res = 64, width = 256, k = 4, rays = 100;
    double spacing = 0.01, trim_alpha = 0.1, cell = 0.0, h = 1e-4;
    std::uint64_t seed = 0;
    std::size_t params = 0;
    long checkpoint_every = 0;
    std::optional<std::uint64_t> seed_opt;
    std::optional<double> a_opt;

    auto* synth = app.add_subcommand("synth", "render an analytic scene into a dataset directory");
    synth->add_option("--scene", scene, "sphere | thin_sheet | semi_transparent_slab | nested")->required();
    synth->add_option("--views", views, "number of views");
    synth->add_option("--res", res, "image width and height");
    synth->add_option("--out", out, "output directory")->required();
    synth->add_option("--seed", seed, "ground-truth point sampling seed");
    synth->add_option("--grid", grid_res, "grid resolution the scene targets (sets the sheet thickness)");
    synth->add_option("--spacing", spacing, "ground-truth point spacing");

    auto* fit = app.add_subcommand("fit-density", "fit a density grid by volume rendering");
    fit->add_option("--data", data, "dataset directory")->required();
    fit->add_option("--out", out, "density checkpoint")->required();
    fit->add_option("--config", config, "key=value config file");
    fit->add_option("--seed", seed_opt, "overrides fit.seed");

    auto* tr = app.add_subcommand("train", "convert a density checkpoint and train the surface grid");
    tr->add_option("--data", data, "dataset directory")->required();
    tr->add_option("--init", init, "density (or surface) checkpoint")->required();
    tr->add_option("--out", out, "surface checkpoint")->required();
    tr->add_option("--config", config, "key=value config file");
    tr->add_option("--seed", seed_opt, "overrides train.seed");
    tr->add_option("--log", log_path, "metrics CSV (default: <out>.csv)");
    tr->add_option("--checkpoint-every", checkpoint_every, "periodic checkpoints to <out>.<iter>");

    auto* rd = app.add_subcommand("render", "render a surface checkpoint");
    rd->add_option("--ckpt", ckpt, "surface checkpoint")->required();
    rd->add_option("--pose", pose, "view index into --data, or a JSON pose file")->required();
    rd->add_option("--data", data, "dataset directory for --pose <index>");
    rd->add_option("--out", out, "PNG (gamma 2.2 preview)")->required();
    rd->add_option("--depth", depth, "16-bit depth PNG, near = bright");
    rd->add_option("--config", config, "key=value config file");
    rd->add_option("--width", width, "image size for JSON poses without width");
    rd->add_option("--a", a_opt, "truncation parameter (default render.a)");

    auto* ex = app.add_subcommand("extract", "sample surface points with virtual rays");
    ex->add_option("--ckpt", ckpt, "surface checkpoint")->required();
    ex->add_option("--out", out, "output PLY")->required();
    ex->add_option("--trim", trim_alpha, "minimum opacity kept");
    ex->add_option("--cell", cell, "downsample cell (0 keeps every point)");
    ex->add_option("--k", k, "rays per voxel axis");

    auto* ch = app.add_subcommand("chamfer", "Chamfer-L1 between two point clouds");
    ch->add_option("--pred", pred, "predicted PLY")->required();
    ch->add_option("--gt", gt, "ground-truth PLY")->required();

    auto* gc = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
    gc->add_option("--ckpt", ckpt, "surface checkpoint")->required();
    gc->add_option("--rays", rays, "number of random rays");
    gc->add_option("--seed", seed, "ray and subset seed");
    gc->add_option("--fd-step", h, "finite-difference step");
    gc->add_option("--params", params, "random parameter subset size (0 = all)");
    gc->add_option("--config", config, "key=value config file (loss weights)");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    set_thread_count(threads);
    try
    {
        if (*synth)
            return cmd_synth(scene, views, res, out, seed, grid_res, spacing);
        if (*fit)
            return cmd_fit_density(data, out, config, seed_opt);
        if (*tr)
            return cmd_train(data, init, out, config, seed_opt, log_path, checkpoint_every);
        if (*rd)
            return cmd_render(ckpt, pose, data, out, depth, config, width, a_opt);
        if (*ex)
            return cmd_extract(ckpt, out, trim_alpha, cell, k);
        if (*ch)
            return cmd_chamfer(pred, gt);
        if (*gc)
            return cmd_gradcheck(ckpt, rays, seed, h, params, config);
    }
    catch (const UsageError& e)
    {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    }
    catch (const ConfigError& e)
    {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    }
    catch (const std::exception& e)
    {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
