#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

#include "intersect.hpp"
#include "vec.hpp"

namespace asurf
{
    /// Pinhole camera, OpenGL convention: looks down -z, x right, y up.
    /// c2w is a row-major 4x4 camera-to-world transform.
    struct Camera
    {
        int width = 0;
        int height = 0;
        double focal = 1.0;
        std::array<double, 16> c2w{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

        Vec3 position() const { return {c2w[3], c2w[7], c2w[11]}; }
        Vec3 rotate(const Vec3& v) const
        {
            return {c2w[0] * v.x + c2w[1] * v.y + c2w[2] * v.z,
                    c2w[4] * v.x + c2w[5] * v.y + c2w[6] * v.z,
                    c2w[8] * v.x + c2w[9] * v.y + c2w[10] * v.z};
        }

        void validate(double tol = 1e-6) const
        {
            if (width <= 0 || height <= 0)
                throw std::invalid_argument("camera size must be positive");
            if (!(focal > 0.0) || !std::isfinite(focal))
                throw std::invalid_argument("camera focal length must be positive");
            for (int i = 0; i < 3; ++i)
            {
                for (int j = 0; j < 3; ++j)
                {
                    double d = 0.0;
                    for (int k = 0; k < 3; ++k)
                        d += c2w[k * 4 + i] * c2w[k * 4 + j];
                    if (std::abs(d - (i == j ? 1.0 : 0.0)) > tol)
                        throw std::invalid_argument("camera rotation is not orthonormal");
                }
            }
        }
    };

    /// Ray through the centre of pixel (px, py); row 0 is the top of the image.
    /// The direction is the rotated (x, y, -1) vector and is not normalized.
    inline Ray generate_ray(const Camera& cam, int px, int py)
    {
        Vec3 d{(px + 0.5 - 0.5 * cam.width) / cam.focal, -(py + 0.5 - 0.5 * cam.height) / cam.focal, -1.0};
        return {cam.position(), cam.rotate(d)};
    }

    /// Camera at `eye` looking at `target`, with `up` as the approximate up vector.
    inline Camera look_at(const Vec3& eye, const Vec3& target, Vec3 up, int width, int height, double focal)
    {
        Vec3 back = normalized(eye - target);  // camera +z
        if (norm(cross(up, back)) < 1e-6)
            up = std::abs(back.z) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
        Vec3 right = normalized(cross(up, back));
        Vec3 cam_up = cross(back, right);
        Camera cam;
        cam.width = width;
        cam.height = height;
        cam.focal = focal;
        cam.c2w = {right.x, cam_up.x, back.x, eye.x,
                   right.y, cam_up.y, back.y, eye.y,
                   right.z, cam_up.z, back.z, eye.z,
                   0, 0, 0, 1};
        return cam;
    }

    inline double focal_from_angle_x(int width, double camera_angle_x)
    {
        return 0.5 * width / std::tan(0.5 * camera_angle_x);
    }
}  // namespace asurf
