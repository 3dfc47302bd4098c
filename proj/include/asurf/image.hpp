#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "vec.hpp"

namespace asurf
{
    /// Row-major float RGB image.
    struct Image
    {
        int width = 0;
        int height = 0;
        std::vector<float> data;  // 3 * width * height

        Image() = default;
        Image(int w, int h, Rgb fill = {}) : width(w), height(h), data(std::size_t(w) * h * 3)
        {
            if (w < 0 || h < 0)
                throw std::invalid_argument("negative image size");
            for (std::size_t i = 0; i < std::size_t(w) * h; ++i)
                set(i, fill);
        }

        std::size_t pixel_count() const { return std::size_t(width) * height; }
        Rgb at(std::size_t i) const { return {data[3 * i], data[3 * i + 1], data[3 * i + 2]}; }
        Rgb at(int x, int y) const { return at(std::size_t(y) * width + x); }
        void set(std::size_t i, const Rgb& c)
        {
            data[3 * i] = float(c.r);
            data[3 * i + 1] = float(c.g);
            data[3 * i + 2] = float(c.b);
        }
        void set(int x, int y, const Rgb& c) { set(std::size_t(y) * width + x, c); }
    };
}  // namespace asurf
