#pragma once

/**
 * Posed image sets in the NeRF-synthetic layout:
 *
 *   transforms.json  {"camera_angle_x": a, "frames": [{"file_path": "./r_0",
 *                     "transform_matrix": [[4 x 4]]}, ...]}
 *   r_0.png ...      8- or 16-bit PNG, RGB or RGBA
 *
 * When a raw float sidecar <file>.f32 sits next to a frame it is preferred
 * over the PNG, which makes save/load lossless.
 */

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "camera.hpp"
#include "image.hpp"
#include "image_io.hpp"

namespace asurf
{
    struct Dataset
    {
        std::vector<Camera> cameras;
        std::vector<Image> images;
        std::vector<std::string> names;
        std::vector<std::vector<float>> alphas;  // optional coverage per pixel, one list per view
        Rgb background{1.0, 1.0, 1.0};
        double camera_angle_x = 0.0;

        std::size_t size() const { return cameras.size(); }
        std::size_t pixel_count() const
        {
            std::size_t n = 0;
            for (const auto& im : images)
                n += im.pixel_count();
            return n;
        }
        void validate() const
        {
            if (cameras.size() != images.size())
                throw FormatError("dataset has " + std::to_string(cameras.size()) + " cameras but " +
                                  std::to_string(images.size()) + " images");
            for (std::size_t i = 0; i < cameras.size(); ++i)
            {
                cameras[i].validate();
                if (cameras[i].width != images[i].width || cameras[i].height != images[i].height)
                    throw FormatError("image size mismatch for frame " + std::to_string(i));
            }
            if (!alphas.empty())
            {
                if (alphas.size() != images.size())
                    throw FormatError("alpha list count does not match image count");
                for (std::size_t i = 0; i < images.size(); ++i)
                    if (alphas[i].size() != images[i].pixel_count())
                        throw FormatError("alpha size mismatch for frame " + std::to_string(i));
            }
        }

        bool has_alpha() const { return !alphas.empty(); }
    };

    struct PixelRef
    {
        std::uint32_t view = 0;
        std::uint32_t pixel = 0;  // y * width + x
    };

    /// Uniform draw over all pixels of all views, with replacement.
    template <typename Rng>
    std::vector<PixelRef> sample_pixels(const Dataset& ds, std::size_t count, Rng& rng)
    {
        std::vector<std::size_t> offsets{0};
        for (const auto& im : ds.images)
            offsets.push_back(offsets.back() + im.pixel_count());
        std::vector<PixelRef> out(count);
        if (offsets.back() == 0)
            throw std::invalid_argument("dataset has no pixels");
        for (auto& p : out)
        {
            std::size_t k = std::size_t(rng() % offsets.back());
            auto it = std::upper_bound(offsets.begin(), offsets.end(), k);
            std::size_t view = std::size_t(it - offsets.begin()) - 1;
            p = {std::uint32_t(view), std::uint32_t(k - offsets[view])};
        }
        return out;
    }

    inline Ray pixel_ray(const Dataset& ds, const PixelRef& p)
    {
        const Camera& cam = ds.cameras[p.view];
        return generate_ray(cam, int(p.pixel % cam.width), int(p.pixel / cam.width));
    }

    inline Rgb pixel_color(const Dataset& ds, const PixelRef& p) { return ds.images[p.view].at(std::size_t(p.pixel)); }

    /// The pixel re-composited over `bg` instead of the dataset background.
    /// Needs per-pixel alpha.
    inline Rgb pixel_color_over(const Dataset& ds, const PixelRef& p, const Rgb& bg)
    {
        double a = ds.alphas[p.view][p.pixel];
        return pixel_color(ds, p) + (bg - ds.background) * (1.0 - a);
    }

    namespace detail
    {
        inline std::filesystem::path frame_path(const std::filesystem::path& dir, const std::string& file_path)
        {
            std::filesystem::path p = dir / file_path;
            if (!p.has_extension())
                p += ".png";
            return p.lexically_normal();
        }
    }  // namespace detail

    /// Loads a dataset directory. `background` overrides the optional
    /// "background" entry of transforms.json; white otherwise.
    inline Dataset load_dataset(const std::filesystem::path& dir, std::optional<Rgb> background = std::nullopt)
    {
        using nlohmann::json;
        const auto tf = dir / "transforms.json";
        std::ifstream is(tf);
        if (!is)
            throw FormatError("missing " + tf.string());
        json j;
        try
        {
            is >> j;
        }
        catch (const json::exception& e)
        {
            throw FormatError(tf.string() + ": " + e.what());
        }
        if (!j.contains("camera_angle_x") || !j["camera_angle_x"].is_number())
            throw FormatError(tf.string() + ": missing numeric camera_angle_x");
        if (!j.contains("frames") || !j["frames"].is_array())
            throw FormatError(tf.string() + ": missing frames array");

        Dataset ds;
        ds.camera_angle_x = j["camera_angle_x"].get<double>();
        if (background)
            ds.background = *background;
        else if (j.contains("background"))
        {
            auto b = j["background"];
            if (!b.is_array() || b.size() != 3)
                throw FormatError(tf.string() + ": background must be [r, g, b]");
            ds.background = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>()};
        }

        for (std::size_t f = 0; f < j["frames"].size(); ++f)
        {
            const auto& fr = j["frames"][f];
            const std::string where = tf.string() + ": frame " + std::to_string(f);
            if (!fr.contains("file_path") || !fr["file_path"].is_string())
                throw FormatError(where + ": missing file_path");
            if (!fr.contains("transform_matrix"))
                throw FormatError(where + ": missing transform_matrix");
            const auto& m = fr["transform_matrix"];
            if (!m.is_array() || m.size() != 4)
                throw FormatError(where + ": transform_matrix must be 4x4");
            Camera cam;
            for (int r = 0; r < 4; ++r)
            {
                if (!m[r].is_array() || m[r].size() != 4)
                    throw FormatError(where + ": transform_matrix must be 4x4");
                for (int c = 0; c < 4; ++c)
                    cam.c2w[r * 4 + c] = m[r][c].get<double>();
            }

            const std::string name = fr["file_path"].get<std::string>();
            auto png_path = detail::frame_path(dir, name);
            auto f32_path = png_path;
            f32_path.replace_extension(".f32");
            Image img;
            std::vector<float> alpha;
            bool have_png = std::filesystem::exists(png_path);
            RgbaImage rgba;
            if (have_png)
            {
                rgba = read_png(png_path.string());
                alpha.resize(rgba.pixel_count());
                for (std::size_t i = 0; i < alpha.size(); ++i)
                    alpha[i] = rgba.rgba[4 * i + 3];
            }
            if (std::filesystem::exists(f32_path))
                img = read_f32(f32_path.string());
            else if (have_png)
                img = composite_over(rgba, ds.background);
            else
                throw FormatError(where + ": missing image " + png_path.string());
            if (have_png && (rgba.width != img.width || rgba.height != img.height))
                throw FormatError(where + ": PNG and float sidecar sizes differ");

            cam.width = img.width;
            cam.height = img.height;
            cam.focal = focal_from_angle_x(img.width, ds.camera_angle_x);
            try
            {
                cam.validate();
            }
            catch (const std::invalid_argument& e)
            {
                throw FormatError(where + ": " + e.what());
            }
            ds.cameras.push_back(cam);
            ds.images.push_back(std::move(img));
            ds.names.push_back(name);
            ds.alphas.push_back(std::move(alpha));
        }
        if (ds.cameras.empty())
            throw FormatError(tf.string() + ": no frames");
        // alpha is kept when every frame has it and some pixel is transparent
        bool complete = true, transparent = false;
        for (const auto& a : ds.alphas)
        {
            complete = complete && !a.empty();
            transparent = transparent || std::any_of(a.begin(), a.end(), [](float v) { return v < 1.0f; });
        }
        if (!complete || !transparent)
            ds.alphas.clear();
        return ds;
    }

    /// Writes transforms.json, a 16-bit PNG (RGBA with straight color when the
    /// dataset has alpha) and a float sidecar per frame.
    inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir)
    {
        ds.validate();
        std::filesystem::create_directories(dir);
        nlohmann::json j;
        j["camera_angle_x"] = ds.camera_angle_x;
        j["background"] = {ds.background.r, ds.background.g, ds.background.b};
        j["frames"] = nlohmann::json::array();
        for (std::size_t i = 0; i < ds.size(); ++i)
        {
            std::string name = i < ds.names.size() ? ds.names[i] : "./r_" + std::to_string(i);
            nlohmann::json m = nlohmann::json::array();
            for (int r = 0; r < 4; ++r)
                m.push_back({ds.cameras[i].c2w[r * 4], ds.cameras[i].c2w[r * 4 + 1], ds.cameras[i].c2w[r * 4 + 2],
                             ds.cameras[i].c2w[r * 4 + 3]});
            j["frames"].push_back({{"file_path", name}, {"transform_matrix", m}});
            auto png_path = detail::frame_path(dir, name);
            std::filesystem::create_directories(png_path.parent_path());
            if (ds.has_alpha())
                write_png(png_path.string(), uncomposite(ds.images[i], ds.alphas[i], ds.background), 16);
            else
                write_png(png_path.string(), ds.images[i], 16);
            auto f32_path = png_path;
            f32_path.replace_extension(".f32");
            write_f32(f32_path.string(), ds.images[i]);
        }
        std::ofstream os(dir / "transforms.json");
        os << j.dump(2) << "\n";
        if (!os)
            throw FormatError("cannot write " + (dir / "transforms.json").string());
    }
}  // namespace asurf
