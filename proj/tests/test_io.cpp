#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <asurf/checkpoint.hpp>
#include <asurf/config.hpp>
#include <asurf/ply.hpp>

#include "test_util.hpp"

using namespace asurf;

namespace
{
    std::string temp_file(const std::string& name)
    {
        return (std::filesystem::temp_directory_path() / ("asurf_test_" + name)).string();
    }

    VoxelGrid random_surface()
    {
        VoxelGrid g({3, 4, 2}, {{-1, -0.5, 0}, {2, 1, 0.75}}, {-0.3, 0.0, 0.4});
        std::mt19937_64 rng(3);
        test::randomize(g, rng);
        g.occupancy[5] = 0;
        quantize_to_f32(g);
        return g;
    }

    template <typename E>
    std::string error_of(const std::function<void()>& f)
    {
        try
        {
            f();
        }
        catch (const E& e)
        {
            return e.what();
        }
        return "<no error>";
    }
}  // namespace

TEST(Checkpoint, SurfaceRoundTripIsBitIdentical)
{
    VoxelGrid g = random_surface();
    auto bytes = encode_checkpoint(g);
    // 4 + 4 + 1 + 12 + 24 + 1 + 4 * levels + voxels + 4 * (2 + 27) * vertices
    EXPECT_EQ(bytes.size(), 46 + 12 + g.num_voxels() + 4 * 29 * g.num_vertices());
    VoxelGrid back = decode_surface(bytes);
    EXPECT_EQ(back.resolution, g.resolution);
    EXPECT_EQ(back.levels, g.levels);
    EXPECT_EQ(back.occupancy, g.occupancy);
    EXPECT_EQ(back.delta, g.delta);
    EXPECT_EQ(back.sigma_alpha, g.sigma_alpha);
    EXPECT_EQ(back.sh, g.sh);
    EXPECT_EQ(encode_checkpoint(back), bytes);

    auto path = temp_file("surface.ckpt");
    save_surface(g, path);
    EXPECT_EQ(peek_kind(path), CheckpointKind::Surface);
    EXPECT_EQ(encode_checkpoint(load_surface(path)), bytes);
}

TEST(Checkpoint, DensityRoundTrip)
{
    DensityGrid d({2, 2, 3}, {{0, 0, 0}, {1, 1, 1.5}});
    for (std::size_t i = 0; i < d.sigma.size(); ++i)
        d.sigma[i] = 0.5 * double(i) - 3.0;
    d.sh[7] = 0.25;
    auto path = temp_file("density.ckpt");
    save_density(d, path);
    EXPECT_EQ(peek_kind(path), CheckpointKind::Density);
    DensityGrid back = load_density(path);
    EXPECT_EQ(back.sigma, d.sigma);
    EXPECT_EQ(back.sh, d.sh);
    EXPECT_EQ(back.occupancy, d.occupancy);
}

TEST(Checkpoint, TruncatedNamesOffset)
{
    auto bytes = encode_checkpoint(random_surface());
    bytes.resize(bytes.size() - 3);
    auto msg = error_of<FormatError>([&] { decode_surface(bytes); });
    EXPECT_NE(msg.find("offset"), std::string::npos) << msg;
    bytes.resize(10);
    EXPECT_THROW(decode_surface(bytes), FormatError);
}

TEST(Checkpoint, TrailingBytesRejected)
{
    auto bytes = encode_checkpoint(random_surface());
    bytes.push_back(0);
    EXPECT_THROW(decode_surface(bytes), FormatError);
}

TEST(Checkpoint, BadMagicNamesExpected)
{
    auto bytes = encode_checkpoint(random_surface());
    bytes[0] = 'X';
    auto msg = error_of<FormatError>([&] { decode_surface(bytes); });
    EXPECT_NE(msg.find("ASRF"), std::string::npos) << msg;
}

TEST(Checkpoint, VersionMismatch)
{
    auto bytes = encode_checkpoint(random_surface());
    bytes[4] = 2;
    auto msg = error_of<FormatError>([&] { decode_surface(bytes); });
    EXPECT_NE(msg.find("version"), std::string::npos) << msg;
}

TEST(Checkpoint, KindMismatch)
{
    DensityGrid d({2, 2, 2}, {{0, 0, 0}, {1, 1, 1}});
    auto msg = error_of<FormatError>([&] { decode_surface(encode_checkpoint(d)); });
    EXPECT_NE(msg.find("expected a surface checkpoint, found a density checkpoint"), std::string::npos) << msg;
    EXPECT_THROW(decode_density(encode_checkpoint(random_surface())), FormatError);
}

TEST(Ply, RoundTripWithAlpha)
{
    PointCloud pc{{{0.1, -2.5, 3.0}, {1e-3, 0, 7.25}}, {0.5, 1.0}};
    auto path = temp_file("cloud.ply");
    write_ply(path, pc);
    PointCloud back = read_ply(path);
    ASSERT_EQ(back.points.size(), 2u);
    ASSERT_EQ(back.alpha.size(), 2u);
    for (int i = 0; i < 2; ++i)
        for (int a = 0; a < 3; ++a)
            EXPECT_EQ(float(back.points[i][a]), float(pc.points[i][a]));
    EXPECT_EQ(back.alpha[0], 0.5);
}

TEST(Ply, EmptyCloudHasValidHeader)
{
    auto path = temp_file("empty.ply");
    write_ply(path, std::vector<Vec3>{});
    EXPECT_TRUE(read_ply(path).points.empty());
}

TEST(Ply, SkipsExtraPropertiesAndReportsLine)
{
    auto path = temp_file("extra.ply");
    std::ofstream(path) << "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float nx\n"
                           "property float y\nproperty float z\nend_header\n1 9 2 3\n";
    PointCloud pc = read_ply(path);
    ASSERT_EQ(pc.points.size(), 1u);
    EXPECT_EQ(pc.points[0].y, 2.0);
    std::ofstream(path) << "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
                           "property float z\nend_header\n1 2 3\n4 five 6\n";
    auto msg = error_of<FormatError>([&] { read_ply(path); });
    EXPECT_NE(msg.find(":9:"), std::string::npos) << msg;
}

TEST(Config, DefaultsMatchPaperValues)
{
    RunConfig c;
    EXPECT_EQ(c.train.iters, 50000);
    EXPECT_EQ(c.train.batch_rays, 5000u);
    EXPECT_EQ(c.train.delay_iters, 25000);
    EXPECT_DOUBLE_EQ(c.train.loss.lambda_delta, 1e-3);
    EXPECT_DOUBLE_EQ(c.train.loss.lambda_alpha, 1e-9);
    EXPECT_DOUBLE_EQ(c.init.s_sigma, 0.05);
    EXPECT_EQ(c.init.tau_sigma, (std::vector<double>{10, 30, 50, 70, 90}));
    EXPECT_DOUBLE_EQ(c.eval.trim_alpha, 0.1);
}

TEST(Config, ParsesKeysAndComments)
{
    std::istringstream is("# comment\ntrain.iters = 12\n\nloss.lambda_delta=0.5  # trailing\ninit.tau_sigma = 1, 2,3\n"
                          "render.background = 0, 0.5, 1\n");
    RunConfig c = parse_config(is);
    EXPECT_EQ(c.train.iters, 12);
    EXPECT_DOUBLE_EQ(c.train.loss.lambda_delta, 0.5);
    EXPECT_EQ(c.init.tau_sigma, (std::vector<double>{1, 2, 3}));
    EXPECT_DOUBLE_EQ(c.render.background.g, 0.5);
}

TEST(Config, UnknownKeyIsErrorWithLine)
{
    std::istringstream is("train.iters = 3\ntrain.itres = 4\n");
    auto msg = error_of<ConfigError>([&] { parse_config(is, "run.cfg"); });
    EXPECT_NE(msg.find("run.cfg:2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("train.itres"), std::string::npos) << msg;
}

TEST(Config, BadValueIsError)
{
    std::istringstream is("train.iters = many\n");
    EXPECT_THROW(parse_config(is), ConfigError);
}

TEST(Config, DumpParsesBack)
{
    RunConfig c;
    c.train.iters = 77;
    c.fit.lambda_tv = 0.25;
    std::istringstream is(c.dump());
    RunConfig back = parse_config(is);
    EXPECT_EQ(back.dump(), c.dump());
}
