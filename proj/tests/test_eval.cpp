#include <gtest/gtest.h>

#include <random>

#include <asurf/eval.hpp>
#include <asurf/scene.hpp>

#include "test_util.hpp"

using namespace asurf;

namespace
{
    ChamferResult brute_chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b)
    {
        auto one_way = [](const std::vector<Vec3>& q, const std::vector<Vec3>& ref) {
            long double s = 0.0L;
            for (const auto& p : q)
            {
                double best = std::numeric_limits<double>::infinity();
                for (const auto& r : ref)
                    best = std::min(best, norm(p - r));
                s += best;
            }
            return double(s / q.size());
        };
        ChamferResult r;
        r.accuracy = one_way(a, b);
        r.completeness = one_way(b, a);
        r.chamfer = 0.5 * (r.accuracy + r.completeness);
        return r;
    }

    std::vector<Vec3> random_cloud(std::mt19937_64& rng, std::size_t n)
    {
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::vector<Vec3> out(n);
        for (auto& p : out)
            p = {u(rng), u(rng), u(rng)};
        return out;
    }

    VoxelGrid sphere_grid(int n)
    {
        VoxelGrid g({n, n, n}, {{-1, -1, -1}, {1, 1, 1}}, {0.0});
        for (std::size_t i = 0; i < g.num_vertices(); ++i)
        {
            g.delta[i] = 0.5 - norm(g.vertex_position(g.vertex_coords(i)));
            g.sigma_alpha[i] = 2.0;
        }
        return g;
    }
}  // namespace

TEST(Extract, EmptyGridHasNoPoints)
{
    VoxelGrid g({4, 4, 4}, {{0, 0, 0}, {1, 1, 1}}, {0.0});
    std::fill(g.delta.begin(), g.delta.end(), 1.0);
    EXPECT_EQ(extract_points(g).size(), 0u);
    std::fill(g.occupancy.begin(), g.occupancy.end(), 0);
    std::fill(g.delta.begin(), g.delta.end(), 0.0);
    EXPECT_EQ(extract_points(g).size(), 0u);
}

TEST(Extract, AxisAlignedPlaneCount)
{
    // Crossing x = 0.4 inside a single voxel: only the x rays meet it.
    VoxelGrid g({1, 1, 1}, {{0, 0, 0}, {1, 1, 1}}, {0.0});
    for (std::size_t i = 0; i < 8; ++i)
        g.delta[i] = g.vertex_coords(i).x - 0.4;
    for (int k : {1, 2, 4})
    {
        auto pts = extract_points(g, k);
        EXPECT_EQ(pts.size(), std::size_t(k * k));
        for (const auto& p : pts.positions)
            EXPECT_NEAR(p.x, 0.4, 1e-12);
    }
    EXPECT_THROW(extract_points(g, 0), std::invalid_argument);
}

TEST(Extract, TiltedPlaneMatchesLinearSolve)
{
    const double n[3] = {0.3, 0.35, 0.4}, c = 0.5;
    VoxelGrid g({1, 1, 1}, {{0, 0, 0}, {1, 1, 1}}, {0.0});
    for (std::size_t i = 0; i < 8; ++i)
    {
        Int3 v = g.vertex_coords(i);
        g.delta[i] = n[0] * v.x + n[1] * v.y + n[2] * v.z - c;
    }
    for (int k : {1, 2, 3, 5})
    {
        std::size_t want = 0;
        for (int axis = 0; axis < 3; ++axis)
            for (int i = 0; i < k; ++i)
                for (int j = 0; j < k; ++j)
                {
                    double u = (i + 0.5) / k, w = (j + 0.5) / k;
                    double t = (c - n[(axis + 1) % 3] * u - n[(axis + 2) % 3] * w) / n[axis];
                    want += t >= 0.0 && t <= 1.0;
                }
        EXPECT_EQ(extract_points(g, k).size(), want) << "k=" << k;
    }
}

TEST(Extract, FacePlaneDeduplicated)
{
    // Level crossing on the shared face x = 1 of two voxels.
    VoxelGrid g({2, 1, 1}, {{0, 0, 0}, {2, 1, 1}}, {0.0});
    for (std::size_t i = 0; i < g.num_vertices(); ++i)
        g.delta[i] = 1.0 - g.vertex_coords(i).x;
    auto pts = extract_points(g, 2);
    std::size_t on_face = 0;
    for (const auto& p : pts.positions)
        on_face += std::abs(p.x - 1.0) < 1e-12;
    EXPECT_EQ(on_face, pts.size());
    // Both voxels see the four x-ray crossings on the shared face.
    EXPECT_EQ(pts.size(), 4u);
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j)
            EXPECT_GT(norm(pts.positions[i] - pts.positions[j]), kExtractDedupTol);
}

TEST(Extract, SpherePointsNearAnalyticSurface)
{
    VoxelGrid g = sphere_grid(16);
    auto pts = extract_points(g, 3);
    ASSERT_GT(pts.size(), 1000u);
    double diag = std::sqrt(3.0) * 2.0 / 16;
    double worst = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
    {
        worst = std::max(worst, std::abs(norm(pts.positions[i]) - 0.5));
        EXPECT_NEAR(pts.opacities[i], opacity_activation(2.0), 1e-12);
        EXPECT_EQ(pts.level_index[i], 0);
        EXPECT_NEAR(test::oracle_field(g, pts.positions[i]), 0.0, 1e-8);
    }
    EXPECT_LT(worst, diag);
}

TEST(Trim, ThresholdSemantics)
{
    SurfacePoints sp;
    for (int i = 0; i <= 10; ++i)
        sp.push({double(i), 0, 0}, i / 10.0, 0);
    EXPECT_EQ(trim(sp, 0.0).size(), sp.size());
    EXPECT_EQ(trim(sp, 1.0 + 1e-12).size(), 0u);
    auto t = trim(sp, 0.35);
    EXPECT_EQ(t.size(), 7u);
    for (double a : t.opacities)
        EXPECT_GE(a, 0.35);
    EXPECT_EQ(trim(trim(sp, 0.2), 0.6).positions, trim(sp, 0.6).positions);
}

TEST(Downsample, Counting)
{
    std::vector<Vec3> lattice;
    for (int x = 0; x < 10; ++x)
        for (int y = 0; y < 10; ++y)
            for (int z = 0; z < 10; ++z)
                lattice.push_back({x * 0.1, y * 0.1, z * 0.1});
    EXPECT_EQ(downsample(lattice, 0.2).size(), 125u);
    EXPECT_EQ(downsample(lattice, 5.0).size(), 1u);
    EXPECT_EQ(downsample(lattice, 1e-6).size(), 1000u);
    EXPECT_THROW(downsample(lattice, 0.0), std::invalid_argument);
    auto one = downsample(lattice, 5.0);
    EXPECT_NEAR(one[0].x, 0.45, 1e-12);
}

TEST(Chamfer, Examples)
{
    std::vector<Vec3> a{{0, 0, 0}}, b{{1, 0, 0}};
    EXPECT_DOUBLE_EQ(chamfer_l1(a, b).chamfer, 1.0);
    std::mt19937_64 rng(1);
    auto c = random_cloud(rng, 300);
    EXPECT_EQ(chamfer_l1(c, c).chamfer, 0.0);
    EXPECT_THROW(chamfer_l1({}, c), EmptyCloud);
}

TEST(Chamfer, MatchesBruteForce)
{
    std::mt19937_64 rng(2);
    for (int t = 0; t < 5; ++t)
    {
        auto a = random_cloud(rng, 400), b = random_cloud(rng, 250);
        auto got = chamfer_l1(a, b), want = brute_chamfer(a, b);
        EXPECT_NEAR(got.accuracy, want.accuracy, 1e-12);
        EXPECT_NEAR(got.completeness, want.completeness, 1e-12);
        EXPECT_NEAR(got.chamfer, want.chamfer, 1e-12);
    }
}

TEST(Chamfer, SymmetricAndTranslationInvariant)
{
    std::mt19937_64 rng(3);
    auto a = random_cloud(rng, 200), b = random_cloud(rng, 150);
    auto ab = chamfer_l1(a, b), ba = chamfer_l1(b, a);
    EXPECT_NEAR(ab.chamfer, ba.chamfer, 1e-14);
    for (auto& p : a)
        p = p + Vec3{3, -1, 0.5};
    for (auto& p : b)
        p = p + Vec3{3, -1, 0.5};
    EXPECT_NEAR(chamfer_l1(a, b).chamfer, ab.chamfer, 1e-12);
}

TEST(Chamfer, DuplicatePointsAndClusters)
{
    std::vector<Vec3> a(50, Vec3{0.25, 0.25, 0.25});
    std::vector<Vec3> b{{0.25, 0.25, 0.25}, {1.25, 0.25, 0.25}};
    auto r = chamfer_l1(a, b);
    EXPECT_DOUBLE_EQ(r.accuracy, 0.0);
    EXPECT_DOUBLE_EQ(r.completeness, 0.5);
}

TEST(Coverage, Radius)
{
    std::vector<Vec3> targets{{0, 0, 0}, {1, 0, 0}, {5, 0, 0}};
    std::vector<Vec3> cloud{{0.05, 0, 0}, {1, 0.2, 0}};
    EXPECT_NEAR(coverage(targets, cloud, 0.1), 1.0 / 3, 1e-15);
    EXPECT_NEAR(coverage(targets, cloud, 0.2), 2.0 / 3, 1e-15);
    EXPECT_DOUBLE_EQ(coverage(targets, {}, 1.0), 0.0);
}

TEST(Chamfer, JsonFields)
{
    auto s = to_json(chamfer_l1({{0, 0, 0}}, {{1, 0, 0}}));
    for (const char* k : {"\"chamfer\": 1", "\"accuracy\"", "\"completeness\"", "\"n_pred\": 1", "\"n_gt\": 1"})
        EXPECT_NE(s.find(k), std::string::npos) << s;
}
