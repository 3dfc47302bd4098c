#pragma once

/**
 * PNG (via libpng) and raw float image files.
 *
 * PNG values are treated as plain [0,1] intensities; no gamma is applied on
 * read. write_png_preview applies a 1/2.2 gamma for viewing.
 *
 * The .f32 sidecar is: width u32, height u32 (little-endian), then
 * width*height*3 little-endian float32 values, row-major RGB.
 */

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "image.hpp"

namespace asurf
{
    struct FormatError : std::runtime_error
    {
        using std::runtime_error::runtime_error;
    };

    /// Decoded PNG before background compositing; alpha is 1 when absent.
    struct RgbaImage
    {
        int width = 0;
        int height = 0;
        std::vector<float> rgba;  // 4 per pixel, straight (not premultiplied) color

        std::size_t pixel_count() const { return std::size_t(width) * height; }
    };

    namespace detail
    {
        struct FileCloser
        {
            void operator()(std::FILE* f) const
            {
                if (f)
                    std::fclose(f);
            }
        };
        using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

        inline void png_error_fn(png_structp png, png_const_charp msg)
        {
            auto* buf = static_cast<std::string*>(png_get_error_ptr(png));
            if (buf)
                *buf = msg;
            png_longjmp(png, 1);
        }
        inline void png_warning_fn(png_structp, png_const_charp) {}

        inline void put_u32(unsigned char* b, std::uint32_t v)
        {
            b[0] = static_cast<unsigned char>(v);
            b[1] = static_cast<unsigned char>(v >> 8);
            b[2] = static_cast<unsigned char>(v >> 16);
            b[3] = static_cast<unsigned char>(v >> 24);
        }
        inline void put_f32(unsigned char* b, float f)
        {
            std::uint32_t v;
            std::memcpy(&v, &f, 4);
            put_u32(b, v);
        }
        inline void put_u32(std::ostream& os, std::uint32_t v)
        {
            unsigned char b[4];
            put_u32(b, v);
            os.write(reinterpret_cast<const char*>(b), 4);
        }
        inline void put_f32(std::ostream& os, float f)
        {
            unsigned char b[4];
            put_f32(b, f);
            os.write(reinterpret_cast<const char*>(b), 4);
        }
        inline std::uint32_t get_u32(const unsigned char* p)
        {
            return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
        }
        inline float get_f32(const unsigned char* p)
        {
            std::uint32_t v = get_u32(p);
            float f;
            std::memcpy(&f, &v, 4);
            return f;
        }
    }  // namespace detail

    inline RgbaImage read_png(const std::string& path)
    {
        detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
        if (!fp)
            throw FormatError("cannot open image " + path);
        unsigned char sig[8];
        if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
            throw FormatError("not a PNG file: " + path);

        std::string err;
        png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn, detail::png_warning_fn);
        if (!png)
            throw FormatError("libpng init failed");
        png_infop info = png_create_info_struct(png);
        RgbaImage out;
        std::vector<png_bytep> rows;
        std::vector<unsigned char> buf;
        if (setjmp(png_jmpbuf(png)))
        {
            png_destroy_read_struct(&png, &info, nullptr);
            throw FormatError("PNG decode error in " + path + ": " + err);
        }
        png_init_io(png, fp.get());
        png_set_sig_bytes(png, 8);
        png_read_info(png, info);

        const int depth = png_get_bit_depth(png, info);
        const int color = png_get_color_type(png, info);
        if (color == PNG_COLOR_TYPE_PALETTE)
            png_set_palette_to_rgb(png);
        if (color == PNG_COLOR_TYPE_GRAY && depth < 8)
            png_set_expand_gray_1_2_4_to_8(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS))
            png_set_tRNS_to_alpha(png);
        if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
            png_set_gray_to_rgb(png);
        if (!(color & PNG_COLOR_MASK_ALPHA) && !png_get_valid(png, info, PNG_INFO_tRNS))
            png_set_add_alpha(png, depth == 16 ? 0xFFFF : 0xFF, PNG_FILLER_AFTER);
        if (depth == 16)
            png_set_swap(png);  // little-endian 16-bit samples in memory
        png_read_update_info(png, info);

        out.width = int(png_get_image_width(png, info));
        out.height = int(png_get_image_height(png, info));
        const std::size_t rowbytes = png_get_rowbytes(png, info);
        const int out_depth = png_get_bit_depth(png, info);
        buf.resize(rowbytes * out.height);
        rows.resize(out.height);
        for (int y = 0; y < out.height; ++y)
            rows[y] = buf.data() + rowbytes * y;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
        png_destroy_read_struct(&png, &info, nullptr);

        out.rgba.resize(std::size_t(out.width) * out.height * 4);
        for (int y = 0; y < out.height; ++y)
        {
            const unsigned char* row = rows[y];
            for (int x = 0; x < out.width * 4; ++x)
            {
                float v;
                if (out_depth == 16)
                    v = float(row[2 * x] | (row[2 * x + 1] << 8)) / 65535.0f;
                else
                    v = float(row[x]) / 255.0f;
                out.rgba[std::size_t(y) * out.width * 4 + x] = v;
            }
        }
        return out;
    }

    /// Straight alpha composited over `bg`.
    inline Image composite_over(const RgbaImage& in, const Rgb& bg)
    {
        Image img(in.width, in.height);
        for (std::size_t i = 0; i < img.pixel_count(); ++i)
        {
            const float* p = &in.rgba[4 * i];
            double a = p[3];
            img.set(i, Rgb{p[0] * a + bg.r * (1 - a), p[1] * a + bg.g * (1 - a), p[2] * a + bg.b * (1 - a)});
        }
        return img;
    }

    namespace detail
    {
        inline void write_png_channels(const std::string& path, int width, int height, int channels,
                                       const std::vector<float>& data, int bit_depth, double gamma)
        {
            if (bit_depth != 8 && bit_depth != 16)
                throw std::invalid_argument("PNG bit depth must be 8 or 16");
            FilePtr fp(std::fopen(path.c_str(), "wb"));
            if (!fp)
                throw FormatError("cannot write image " + path);
            std::string err;
            png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
            png_infop info = png_create_info_struct(png);
            const int bpp = bit_depth / 8;
            std::vector<unsigned char> buf(data.size() * bpp);
            const double maxv = bit_depth == 16 ? 65535.0 : 255.0;
            for (std::size_t i = 0; i < data.size(); ++i)
            {
                double v = std::clamp(double(data[i]), 0.0, 1.0);
                if (gamma != 1.0 && i % channels < 3)
                    v = std::pow(v, 1.0 / gamma);
                auto q = static_cast<std::uint32_t>(std::lround(v * maxv));
                if (bpp == 2)
                {
                    buf[2 * i] = static_cast<unsigned char>(q >> 8);  // PNG is big-endian
                    buf[2 * i + 1] = static_cast<unsigned char>(q & 0xFF);
                }
                else
                {
                    buf[i] = static_cast<unsigned char>(q);
                }
            }
            std::vector<png_bytep> rows(height);
            for (int y = 0; y < height; ++y)
                rows[y] = buf.data() + std::size_t(y) * width * channels * bpp;
            if (setjmp(png_jmpbuf(png)))
            {
                png_destroy_write_struct(&png, &info);
                throw FormatError("PNG encode error in " + path + ": " + err);
            }
            png_init_io(png, fp.get());
            png_set_IHDR(png, info, width, height, bit_depth, channels == 4 ? PNG_COLOR_TYPE_RGBA : PNG_COLOR_TYPE_RGB,
                         PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
            png_write_info(png, info);
            png_write_image(png, rows.data());
            png_write_end(png, nullptr);
            png_destroy_write_struct(&png, &info);
        }
    }  // namespace detail

    /// RGB PNG, 8 or 16 bits per channel; values are clamped to [0,1].
    inline void write_png(const std::string& path, const Image& img, int bit_depth = 8, double gamma = 1.0)
    {
        detail::write_png_channels(path, img.width, img.height, 3, img.data, bit_depth, gamma);
    }

    inline void write_png(const std::string& path, const RgbaImage& img, int bit_depth = 16)
    {
        detail::write_png_channels(path, img.width, img.height, 4, img.rgba, bit_depth, 1.0);
    }

    /// Inverse of composite_over: recovers straight color from a composited
    /// image and its coverage. Fully transparent pixels get black.
    inline RgbaImage uncomposite(const Image& img, const std::vector<float>& alpha, const Rgb& bg)
    {
        if (alpha.size() != img.pixel_count())
            throw std::invalid_argument("alpha size does not match image");
        RgbaImage out{img.width, img.height, std::vector<float>(img.pixel_count() * 4)};
        for (std::size_t i = 0; i < img.pixel_count(); ++i)
        {
            double a = alpha[i];
            Rgb c = img.at(i);
            for (int ch = 0; ch < 3; ++ch)
                out.rgba[4 * i + ch] = a > 0.0 ? float((c[ch] - bg[ch] * (1.0 - a)) / a) : 0.0f;
            out.rgba[4 * i + 3] = float(a);
        }
        return out;
    }

    inline void write_png_preview(const std::string& path, const Image& img) { write_png(path, img, 8, 2.2); }

    inline void write_f32(const std::string& path, const Image& img)
    {
        std::ofstream os(path, std::ios::binary);
        if (!os)
            throw FormatError("cannot write " + path);
        detail::put_u32(os, std::uint32_t(img.width));
        detail::put_u32(os, std::uint32_t(img.height));
        for (float v : img.data)
            detail::put_f32(os, v);
        if (!os)
            throw FormatError("write failed: " + path);
    }

    inline Image read_f32(const std::string& path)
    {
        std::ifstream is(path, std::ios::binary);
        if (!is)
            throw FormatError("cannot open " + path);
        std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        if (bytes.size() < 8)
            throw FormatError(path + ": truncated header at offset " + std::to_string(bytes.size()));
        std::uint32_t w = detail::get_u32(bytes.data()), h = detail::get_u32(bytes.data() + 4);
        std::size_t expect = 8 + std::size_t(w) * h * 12;
        if (bytes.size() != expect)
            throw FormatError(path + ": expected " + std::to_string(expect) + " bytes, found " +
                              std::to_string(bytes.size()));
        Image img(static_cast<int>(w), static_cast<int>(h));
        for (std::size_t i = 0; i < img.data.size(); ++i)
            img.data[i] = detail::get_f32(bytes.data() + 8 + 4 * i);
        return img;
    }
}  // namespace asurf
