#include <gtest/gtest.h>

#include <random>

#include <asurf/loss.hpp>

#include "test_util.hpp"

using namespace asurf;

namespace
{
    RaySamples weighted(std::initializer_list<std::pair<double, double>> t_alpha)
    {
        RaySamples rs;
        for (auto [t, a] : t_alpha)
        {
            RaySample s;
            s.hit.t = t;
            s.alpha = a;
            rs.samples.push_back(s);
        }
        RenderConfig cfg;
        cfg.a = 100;
        composite(rs, cfg);
        return rs;
    }

    std::vector<std::uint32_t> all_vertices(const GridShape& g)
    {
        std::vector<std::uint32_t> v(g.num_vertices());
        for (std::size_t i = 0; i < v.size(); ++i)
            v[i] = std::uint32_t(i);
        return v;
    }

    double value_at(const VoxelGrid& g, int x, int y, int z)
    {
        return g.delta[std::size_t(x) + std::size_t(g.resolution.x + 1) * (y + std::size_t(g.resolution.y + 1) * z)];
    }

    // Brute-force forward difference straight from the array layout.
    Vec3 brute_diff(const VoxelGrid& g, int x, int y, int z)
    {
        Vec3 d;
        double c = value_at(g, x, y, z);
        if (x < g.resolution.x)
            d.x = (value_at(g, x + 1, y, z) - c) * g.resolution.x / 256.0;
        if (y < g.resolution.y)
            d.y = (value_at(g, x, y + 1, z) - c) * g.resolution.y / 256.0;
        if (z < g.resolution.z)
            d.z = (value_at(g, x, y, z + 1) - c) * g.resolution.z / 256.0;
        return d;
    }
}  // namespace

TEST(Photometric, Basics)
{
    EXPECT_EQ(photometric({0.2, 0.3, 0.4}, {0.2, 0.3, 0.4}), 0.0);
    EXPECT_EQ(photometric({1, 0, 0}, {0, 0, 0}), 1.0);
    EXPECT_NEAR(photometric({0.5, 0.1, 0.9}, {0.2, 0.4, 1.0}), 0.09 + 0.09 + 0.01, 1e-15);
}

TEST(Convergence, Examples)
{
    auto rs = weighted({{1.0, 0.9}, {1.2, 0.9}});
    EXPECT_NEAR(convergence_loss(rs), 0.2, 1e-15);
    EXPECT_EQ(convergence_loss(weighted({{1.0, 0.5}})), 0.0);
    rs = weighted({{1.0, 0.9}, {1.5, 1e-9}});
    EXPECT_EQ(convergence_loss(rs), 0.0);  // gated out
    EXPECT_EQ(convergence_loss(weighted({{2.0, 0.3}, {2.0, 0.4}})), 0.0);
}

TEST(Entropy, Examples)
{
    EXPECT_EQ(entropy_loss(weighted({{1.0, 0.7}})), 0.0);
    // equal weights: 0.5 then 0.5 * 1.0
    EXPECT_NEAR(entropy_loss(weighted({{1.0, 0.5}, {2.0, 1.0}})), std::log(2.0), 1e-15);
    EXPECT_EQ(entropy_loss(weighted({})), 0.0);
    EXPECT_EQ(entropy_loss(weighted({{1.0, 0.0}, {2.0, 0.0}})), 0.0);

    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 200; ++trial)
    {
        RaySamples rs;
        int n = 1 + int(rng() % 6);
        for (int i = 0; i < n; ++i)
        {
            RaySample s;
            s.alpha = u(rng);
            rs.samples.push_back(s);
        }
        composite(rs, RenderConfig{100.0, {1, 1, 1}, true});
        double h = entropy_loss(rs);
        EXPECT_GE(h, 0.0);
        EXPECT_LE(h, std::log(double(n)) + 1e-12);
    }
}

TEST(Tv, UniformStepAndBruteForce)
{
    VoxelGrid g = test::unit_grid({2, 2, 2});
    std::fill(g.delta.begin(), g.delta.end(), 0.4);
    auto verts = all_vertices(g);
    EXPECT_EQ(tv_loss(g, verts), 0.0);

    VoxelGrid s = test::unit_grid({256, 1, 1});
    s.delta[s.vertex_index(1, 0, 0)] = 1.0;
    std::vector<std::uint32_t> one{std::uint32_t(s.vertex_index(0, 0, 0))};
    EXPECT_DOUBLE_EQ(tv_loss(s, one), 1.0);

    VoxelGrid r = test::unit_grid({5, 4, 3});
    std::mt19937_64 rng(42);
    test::randomize(r, rng);
    verts = all_vertices(r);
    double brute = 0.0;
    for (int z = 0; z <= 3; ++z)
        for (int y = 0; y <= 4; ++y)
            for (int x = 0; x <= 5; ++x)
                brute += norm(brute_diff(r, x, y, z));
    brute /= double(verts.size());
    EXPECT_NEAR(tv_loss(r, verts), brute, 1e-9);

    // invariance to a global offset
    VoxelGrid shifted = r;
    for (auto& v : shifted.delta)
        v += 3.0;
    EXPECT_NEAR(tv_loss(shifted, verts), tv_loss(r, verts), 1e-12);
}

TEST(NormalSmoothness, LinearConstantAndBruteForce)
{
    VoxelGrid g = test::unit_grid({4, 3, 3});
    auto verts = all_vertices(g);
    for (std::size_t i = 0; i < g.num_vertices(); ++i)
    {
        Int3 v = g.vertex_coords(i);
        g.delta[i] = 0.3 * v.x - 0.7 * v.y + 0.2 * v.z;
    }
    // linear field: interior normals constant, boundary ones drop an axis
    VoxelGrid lin = g;
    std::vector<std::uint32_t> interior;
    for (std::size_t i = 0; i < g.num_vertices(); ++i)
    {
        Int3 v = g.vertex_coords(i);
        if (v.x < 3 && v.y < 2 && v.z < 2)
            interior.push_back(std::uint32_t(i));
    }
    EXPECT_NEAR(normal_smoothness(lin, interior), 0.0, 1e-15);

    std::fill(g.delta.begin(), g.delta.end(), 1.0);
    EXPECT_EQ(normal_smoothness(g, verts), 0.0);

    VoxelGrid r = test::unit_grid({4, 4, 3});
    std::mt19937_64 rng(43);
    test::randomize(r, rng);
    verts = all_vertices(r);
    auto unit = [&](int x, int y, int z) {
        Vec3 d = brute_diff(r, x, y, z);
        double l = norm(d);
        return l > 1e-12 ? -d / l : Vec3{};
    };
    double brute = 0.0;
    for (int z = 0; z <= 3; ++z)
        for (int y = 0; y <= 4; ++y)
            for (int x = 0; x <= 4; ++x)
            {
                Vec3 n = unit(x, y, z);
                auto l1 = [](Vec3 v) { return std::abs(v.x) + std::abs(v.y) + std::abs(v.z); };
                if (x < 4)
                    brute += l1(unit(x + 1, y, z) - n);
                if (y < 4)
                    brute += l1(unit(x, y + 1, z) - n);
                if (z < 3)
                    brute += l1(unit(x, y, z + 1) - n);
            }
    brute /= double(verts.size());
    EXPECT_NEAR(normal_smoothness(r, verts), brute, 1e-12);

    VoxelGrid shifted = r;
    for (auto& v : shifted.delta)
        v -= 2.0;
    EXPECT_NEAR(normal_smoothness(shifted, verts), normal_smoothness(r, verts), 1e-9);
}

TEST(Eikonal, RampConstantAndBruteForce)
{
    VoxelGrid g(Int3{4, 4, 4}, Aabb{{0, 0, 0}, {2, 2, 2}}, {0.0});
    auto verts = all_vertices(g);
    for (std::size_t i = 0; i < g.num_vertices(); ++i)
        g.delta[i] = g.vertex_position(g.vertex_coords(i)).y;
    EXPECT_NEAR(eikonal_loss(g, verts), 0.0, 1e-15);
    std::fill(g.delta.begin(), g.delta.end(), 0.25);
    EXPECT_DOUBLE_EQ(eikonal_loss(g, verts), 1.0);

    std::mt19937_64 rng(44);
    test::randomize(g, rng);
    double brute = 0.0;
    for (int z = 0; z <= 4; ++z)
        for (int y = 0; y <= 4; ++y)
            for (int x = 0; x <= 4; ++x)
            {
                int p[3] = {x, y, z};
                Vec3 gr;
                for (int a = 0; a < 3; ++a)
                {
                    int lo[3] = {x, y, z}, hi[3] = {x, y, z};
                    if (p[a] < 4)
                        hi[a]++;
                    else
                        lo[a]--;
                    gr[a] = (value_at(g, hi[0], hi[1], hi[2]) - value_at(g, lo[0], lo[1], lo[2])) / 0.5;
                }
                brute += (norm(gr) - 1) * (norm(gr) - 1);
            }
    EXPECT_NEAR(eikonal_loss(g, verts), brute / 125.0, 1e-12);
}

TEST(Sparsity, Examples)
{
    VoxelGrid g = test::unit_grid({5, 4, 4});
    std::fill(g.sigma_alpha.begin(), g.sigma_alpha.end(), -0.5);
    std::mt19937_64 rng(45);
    EXPECT_EQ(sparsity_loss(g, 0.1, rng), 0.0);
    std::fill(g.sigma_alpha.begin(), g.sigma_alpha.end(), 2.0);
    EXPECT_DOUBLE_EQ(sparsity_loss(g, 0.1, rng), 2.0);

    test::randomize(g, rng);
    auto a = sample_voxels(g, 0.1, 99);
    auto b = sample_voxels(g, 0.1, 99);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.size(), 8u);
    double brute = 0.0;
    for (auto vx : a)
    {
        Int3 v = g.voxel_coords(vx);
        for (int c = 0; c < 8; ++c)
        {
            Int3 o = corner_offset(c);
            double s = g.sigma_alpha[g.vertex_index(v.x + o.x, v.y + o.y, v.z + o.z)];
            brute += std::max(s, 0.0);
        }
    }
    EXPECT_NEAR(sparsity_loss(g, a), brute / (8.0 * a.size()), 1e-14);

    // only occupied voxels are drawn
    std::fill(g.occupancy.begin(), g.occupancy.end(), 0);
    g.occupancy[17] = 1;
    auto c = sample_voxels(g, 0.1, 5);
    ASSERT_EQ(c.size(), 1u);
    EXPECT_EQ(c[0], 17u);
}

TEST(RegularizerGradients, MatchFiniteDifferences)
{
    VoxelGrid g(Int3{5, 4, 4}, Aabb{{-1, -1, -1}, {1, 1, 1}}, {0.0});
    std::mt19937_64 rng(46);
    test::randomize(g, rng);
    g.occupancy[3] = 0;
    auto verts = active_vertices(g);
    auto vox = sample_voxels(g, 0.3, 11);
    using Fn = std::function<double(const VoxelGrid&, GradBuffer*)>;
    std::vector<std::pair<const char*, Fn>> terms = {
        {"tv", [&](const VoxelGrid& x, GradBuffer* gb) { return tv_loss(x, verts, gb); }},
        {"normal", [&](const VoxelGrid& x, GradBuffer* gb) { return normal_smoothness(x, verts, gb); }},
        {"eikonal", [&](const VoxelGrid& x, GradBuffer* gb) { return eikonal_loss(x, verts, gb); }},
        {"sparsity", [&](const VoxelGrid& x, GradBuffer* gb) { return sparsity_loss(x, vox, gb); }},
    };
    for (auto& [name, fn] : terms)
    {
        FdReport rep = fd_check(g, fn, {0, 1e-6, 1e-8, 0});
        EXPECT_GT(rep.checked, 10u) << name;
        EXPECT_LT(rep.max_rel_err, 1e-3) << name << " param " << rep.worst_param;
    }
}

TEST(TotalLoss, ZeroWeightsIsMeanPhotometric)
{
    std::mt19937_64 rng(47);
    VoxelGrid g = test::noisy_surface_grid(6, rng);
    auto rays = test::random_rays(16, rng);
    std::vector<TargetRay> batch;
    for (auto& r : rays)
        batch.push_back({r, {0.2, 0.6, 0.1}});
    RenderConfig cfg;
    auto t = total_loss(g, batch, LossWeights::zero(), cfg);
    double mean = 0.0;
    for (auto& tr : batch)
        mean += photometric(render_ray(g, tr.ray, cfg).color, tr.color);
    EXPECT_NEAR(t.total, mean / batch.size(), 1e-14);
}

TEST(TotalLoss, ConvergenceCutoff)
{
    std::mt19937_64 rng(48);
    VoxelGrid g = test::noisy_surface_grid(6, rng, {-0.05, 0.0, 0.05});
    auto rays = test::random_rays(16, rng);
    std::vector<TargetRay> batch;
    for (auto& r : rays)
        batch.push_back({r, {0.2, 0.6, 0.1}});
    RenderConfig cfg;
    LossWeights w = LossWeights::zero();
    w.lambda_c = 1.0;
    ObjectiveOptions early{9999, 0, true, nullptr}, late{10000, 0, true, nullptr};
    auto a = total_loss(g, batch, w, cfg, early);
    auto b = total_loss(g, batch, w, cfg, late);
    EXPECT_GT(a.convergence, 0.0);
    EXPECT_NEAR(a.total, a.photometric + a.convergence, 1e-12);
    EXPECT_EQ(b.total, b.photometric);
}

TEST(TotalLoss, HandComputedTwoSampleRay)
{
    // ramp delta = x with levels 1.5 and 2.5; constant opacity and color
    VoxelGrid g = test::unit_grid({4, 1, 1}, {1.5, 2.5});
    const double y0 = 0.28209479177387814;
    for (std::size_t i = 0; i < g.num_vertices(); ++i)
    {
        g.delta[i] = g.vertex_coords(i).x;
        g.sigma_alpha[i] = std::log(2.0);  // alpha 0.5
        g.sh[i * kShStride + 0] = 0.8 / y0;
    }
    std::vector<TargetRay> batch{{{{-1, 0.5, 0.5}, {1, 0, 0}}, {0.0, 0.0, 0.0}}};
    LossWeights w = LossWeights::zero();
    w.lambda_c = 0.1;
    w.lambda_H = 0.01;
    RenderConfig cfg;
    auto t = total_loss(g, batch, w, cfg);
    // weights 0.5, 0.25; residual 0.25 onto white
    double r = 0.8 * 0.75 + 0.25, gb = 0.25;
    double photo = r * r + 2 * gb * gb;
    double conv = 1.0;  // |2.5 - 1.5| in t units
    double wb0 = 0.5 / 0.75, wb1 = 0.25 / 0.75;
    double ent = -(wb0 * std::log(wb0) + wb1 * std::log(wb1));
    EXPECT_NEAR(t.photometric, photo, 1e-14);
    EXPECT_NEAR(t.convergence, conv, 1e-14);
    EXPECT_NEAR(t.entropy, ent, 1e-14);
    EXPECT_NEAR(t.total, photo + 0.1 * conv + 0.01 * ent, 1e-14);
}
