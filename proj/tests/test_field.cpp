#include <gtest/gtest.h>

#include <random>

#include <asurf/field.hpp>

#include "test_util.hpp"

using namespace asurf;

TEST(Trilinear, ConstantCornersGiveConstant)
{
    std::array<double, 8> c;
    c.fill(2.5);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 100; ++i)
        EXPECT_DOUBLE_EQ(trilinear_interp(c, {u(rng), u(rng), u(rng)}), 2.5);
}

TEST(Trilinear, ReproducesCornerValues)
{
    std::array<double, 8> c{1, 2, 3, 4, 5, 6, 7, 8};
    for (int k = 0; k < 8; ++k)
    {
        Int3 o = corner_offset(k);
        EXPECT_EQ(trilinear_interp(c, {double(o.x), double(o.y), double(o.z)}), c[k]);
    }
}

TEST(Trilinear, CenterIsMean)
{
    std::array<double, 8> c{0.3, -1, 2, 7, 1.5, 0, -4, 9};
    double mean = 0;
    for (double v : c)
        mean += v / 8;
    EXPECT_NEAR(trilinear_interp(c, {0.5, 0.5, 0.5}), mean, 1e-15);
}

TEST(Trilinear, SupplementaryOrderingMatchesProductForm)
{
    // corner c sits at ((c>>2)&1, (c>>1)&1, c&1)
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0, 1), v(-3, 3);
    for (int i = 0; i < 200; ++i)
    {
        std::array<double, 8> c;
        for (auto& x : c)
            x = v(rng);
        Vec3 p{u(rng), u(rng), u(rng)};
        EXPECT_NEAR(trilinear_interp(c, p), test::oracle_trilinear(c, p.x, p.y, p.z), 1e-13);
    }
}

TEST(Trilinear, AffineAlongEachAxis)
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 1), v(-3, 3);
    for (int i = 0; i < 200; ++i)
    {
        std::array<double, 8> c;
        for (auto& x : c)
            x = v(rng);
        Vec3 p{u(rng), u(rng), u(rng)};
        for (int a = 0; a < 3; ++a)
        {
            Vec3 p0 = p, p1 = p, pm = p;
            p0[a] = 0.0;
            p1[a] = 1.0;
            double s = u(rng);
            pm[a] = s;
            double lerp = (1 - s) * trilinear_interp(c, p0) + s * trilinear_interp(c, p1);
            EXPECT_NEAR(trilinear_interp(c, pm), lerp, 1e-12);
        }
    }
}

TEST(SampleChannel, VertexValueAndUniformField)
{
    VoxelGrid g = test::unit_grid({3, 2, 4});
    std::mt19937_64 rng(4);
    test::randomize(g, rng);
    Int3 v{2, 1, 3};
    EXPECT_NEAR(*sample_channel(g, g.vertex_position(v), Channel::delta()), g.delta[g.vertex_index(v)], 1e-14);
    EXPECT_NEAR(*sample_channel(g, g.vertex_position(v), Channel::sh_coeff(13)), g.sh[g.vertex_index(v) * kShStride + 13],
                1e-14);

    std::fill(g.sigma_alpha.begin(), g.sigma_alpha.end(), 0.7);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 50; ++i)
    {
        Vec3 p{3 * u(rng), 2 * u(rng), 4 * u(rng)};
        EXPECT_NEAR(*sample_channel(g, p, Channel::sigma_alpha()), 0.7, 1e-14);
    }
}

TEST(SampleChannel, MatchesIndependentBlend)
{
    VoxelGrid g(Int3{5, 4, 3}, Aabb{{-1, -2, 0.5}, {1.5, 1, 2}}, {0.0});
    std::mt19937_64 rng(5);
    test::randomize(g, rng);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 500; ++i)
    {
        Vec3 p = g.bbox.lo + cmul(Vec3{u(rng), u(rng), u(rng)}, g.bbox.extent());
        EXPECT_NEAR(*sample_channel(g, p, Channel::delta()), test::oracle_field(g, p), 1e-12);
    }
}

TEST(SampleChannel, OutOfBoundsAndPruned)
{
    VoxelGrid g = test::unit_grid({2, 2, 2});
    EXPECT_THROW(sample_channel(g, {2.5, 0.5, 0.5}, Channel::delta()), OutOfBounds);
    EXPECT_THROW(sample_channel(g, {0.5, -0.1, 0.5}, Channel::delta()), OutOfBounds);
    g.occupancy[g.voxel_index({0, 0, 0})] = 0;
    EXPECT_FALSE(sample_channel(g, {0.5, 0.5, 0.5}, Channel::delta()).has_value());
    EXPECT_TRUE(sample_channel(g, {1.5, 0.5, 0.5}, Channel::delta()).has_value());
}

TEST(SampleChannel, ContinuousAcrossFaces)
{
    VoxelGrid g = test::unit_grid({4, 4, 4});
    std::mt19937_64 rng(6);
    test::randomize(g, rng);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 300; ++i)
    {
        int axis = int(rng() % 3);
        Vec3 p{4 * u(rng), 4 * u(rng), 4 * u(rng)};
        p[axis] = double(1 + rng() % 3);  // on an interior face
        Vec3 below = p, above = p;
        below[axis] -= 1e-12;
        above[axis] += 1e-12;
        EXPECT_NEAR(*sample_channel(g, below, Channel::delta()), *sample_channel(g, above, Channel::delta()), 1e-9);
    }
}

TEST(EvalSh, DcOnly)
{
    std::array<double, kShStride> c{};
    c[0] = 1.0;
    c[9] = 2.0;
    c[18] = -0.5;
    std::mt19937_64 rng(7);
    for (int i = 0; i < 20; ++i)
    {
        Vec3 d = test::random_unit(rng);
        Rgb out = eval_sh(c, d);
        EXPECT_NEAR(out.r, 0.28209479177, 1e-10);
        EXPECT_NEAR(out.g, 2 * 0.28209479177, 1e-10);
        EXPECT_EQ(out.b, 0.0);  // clamped
        Rgb pre = eval_sh_unclamped(c, sh_basis(d));
        EXPECT_NEAR(pre.b, -0.5 * 0.28209479177, 1e-10);
    }
}

TEST(EvalSh, ZeroCoefficients)
{
    std::array<double, kShStride> c{};
    Rgb out = eval_sh(c, {0, 0, 1});
    EXPECT_EQ(out, (Rgb{0, 0, 0}));
}

TEST(EvalSh, DegreeOneIsOdd)
{
    std::mt19937_64 rng(8);
    for (int k = 1; k <= 3; ++k)
    {
        std::array<double, kShStride> c{};
        c[k] = 1.3;
        Vec3 d = test::random_unit(rng);
        Rgb a = eval_sh_unclamped(c, sh_basis(d));
        Rgb b = eval_sh_unclamped(c, sh_basis(-d));
        EXPECT_NEAR(a.r, -b.r, 1e-15);
    }
}

TEST(FieldGradient, RampAndConstant)
{
    VoxelGrid g = test::unit_grid({1, 1, 1});
    for (std::size_t i = 0; i < g.num_vertices(); ++i)
        g.delta[i] = g.vertex_coords(i).x;
    Vec3 gr = field_gradient(g, {0.3, 0.6, 0.2});
    EXPECT_NEAR(gr.x, 1.0, 1e-15);
    EXPECT_NEAR(gr.y, 0.0, 1e-15);
    EXPECT_NEAR(gr.z, 0.0, 1e-15);

    std::fill(g.delta.begin(), g.delta.end(), 3.0);
    EXPECT_EQ(field_gradient(g, {0.5, 0.5, 0.5}), (Vec3{0, 0, 0}));
}

TEST(FieldGradient, MatchesCentralDifferences)
{
    VoxelGrid g(Int3{4, 3, 5}, Aabb{{0, 0, 0}, {2, 1.5, 1}}, {0.0});
    std::mt19937_64 rng(9);
    test::randomize(g, rng);
    std::uniform_real_distribution<double> u(0.02, 0.98);
    const double h = 1e-5;
    int checked = 0;
    for (int i = 0; i < 1000; ++i)
    {
        // stay away from voxel faces so the FD stencil does not straddle a kink
        Int3 v{int(rng() % 4), int(rng() % 3), int(rng() % 5)};
        Vec3 local{u(rng), u(rng), u(rng)};
        Vec3 p = g.bbox.lo + cmul(Vec3{v.x + local.x, v.y + local.y, v.z + local.z}, g.voxel_size());
        Vec3 an = field_gradient(g, p);
        Vec3 fd;
        for (int a = 0; a < 3; ++a)
        {
            Vec3 pp = p, pm = p;
            pp[a] += h;
            pm[a] -= h;
            fd[a] = (*sample_channel(g, pp, Channel::delta()) - *sample_channel(g, pm, Channel::delta())) / (2 * h);
        }
        EXPECT_LT(norm(an - fd) / std::max(norm(an), 1e-3), 1e-5);
        ++checked;
    }
    EXPECT_EQ(checked, 1000);
}

TEST(SurfaceNormal, RampsAndDegenerate)
{
    VoxelGrid g = test::unit_grid({1, 1, 1});
    for (std::size_t i = 0; i < g.num_vertices(); ++i)
        g.delta[i] = g.vertex_coords(i).x;
    auto n = surface_normal(g, {0.5, 0.5, 0.5});
    ASSERT_TRUE(n);
    EXPECT_NEAR(n->x, -1.0, 1e-15);

    for (std::size_t i = 0; i < g.num_vertices(); ++i)
        g.delta[i] = -g.vertex_coords(i).z;
    n = surface_normal(g, {0.2, 0.7, 0.4});
    ASSERT_TRUE(n);
    EXPECT_NEAR(n->z, 1.0, 1e-15);

    std::fill(g.delta.begin(), g.delta.end(), 1.0);
    EXPECT_FALSE(surface_normal(g, {0.5, 0.5, 0.5}).has_value());
}

TEST(VertexFiniteDiff, ScaleAndBoundary)
{
    VoxelGrid g = test::unit_grid({256, 1, 1});
    EXPECT_EQ(vertex_finite_diff(g, g.delta, {3, 0, 0}), (Vec3{0, 0, 0}));
    g.delta[g.vertex_index(4, 0, 0)] = 1.0;
    EXPECT_DOUBLE_EQ(vertex_finite_diff(g, g.delta, {3, 0, 0}).x, 1.0);

    VoxelGrid h = test::unit_grid({512, 1, 1});
    h.delta[h.vertex_index(4, 0, 0)] = 1.0;
    EXPECT_DOUBLE_EQ(vertex_finite_diff(h, h.delta, {3, 0, 0}).x, 2.0);

    // upper boundary along x contributes nothing
    h.delta[h.vertex_index(512, 0, 0)] = 5.0;
    EXPECT_EQ(vertex_finite_diff(h, h.delta, {512, 0, 0}).x, 0.0);
}

TEST(VoxelGrid, ValidatesInvariants)
{
    EXPECT_THROW(VoxelGrid(Int3{2, 2, 2}, Aabb{{0, 0, 0}, {1, 1, 1}}, {}), std::invalid_argument);
    EXPECT_THROW(VoxelGrid(Int3{2, 2, 2}, Aabb{{0, 0, 0}, {1, 1, 1}}, {1.0, 1.0}), std::invalid_argument);
    EXPECT_THROW(VoxelGrid(Int3{0, 2, 2}, Aabb{{0, 0, 0}, {1, 1, 1}}, {0.0}), std::invalid_argument);
    VoxelGrid g(Int3{2, 3, 4}, Aabb{{0, 0, 0}, {1, 1, 1}}, {0.0});
    EXPECT_EQ(g.delta.size(), 3u * 4u * 5u);
    EXPECT_EQ(g.sh.size(), 27u * 60u);
    EXPECT_EQ(g.occupancy.size(), 24u);
}
