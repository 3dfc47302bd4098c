#pragma once

/**
 * Analytic test scenes, their exact renderer, and dataset generation.
 *
 * Scenes are unions of spheres and axis-aligned boxes with Lambertian
 * shading under a fixed directional light, so appearance depends on
 * position only. A ray composites every entry (front-facing) hit with the
 * primitive's intrinsic alpha, front to back, over the background. Exit hits
 * do not contribute, which gives a semi-transparent primitive a single
 * layer of opacity alpha regardless of its thickness.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "camera.hpp"
#include "dataset.hpp"
#include "intersect.hpp"
#include "parallel.hpp"

namespace asurf
{
    enum class SceneKind { Sphere, ThinSheet, SemiTransparentSlab, Nested };

    inline std::string to_string(SceneKind k)
    {
        switch (k)
        {
        case SceneKind::Sphere: return "sphere";
        case SceneKind::ThinSheet: return "thin_sheet";
        case SceneKind::SemiTransparentSlab: return "semi_transparent_slab";
        case SceneKind::Nested: return "nested";
        }
        return "unknown";
    }

    inline std::optional<SceneKind> parse_scene_kind(const std::string& s)
    {
        for (auto k : {SceneKind::Sphere, SceneKind::ThinSheet, SceneKind::SemiTransparentSlab, SceneKind::Nested})
            if (to_string(k) == s)
                return k;
        return std::nullopt;
    }

    struct Primitive
    {
        enum class Shape { Sphere, Box } shape = Shape::Sphere;
        Vec3 center;
        double radius = 0.5;  // sphere
        Vec3 half;            // box half extents
        Rgb albedo{0.8, 0.8, 0.8};
        double alpha = 1.0;
    };

    struct SyntheticScene
    {
        SceneKind kind = SceneKind::Sphere;
        std::vector<Primitive> prims;
        Aabb bbox{{-1, -1, -1}, {1, 1, 1}};
        Rgb background{1.0, 1.0, 1.0};
        Vec3 light_dir = normalized(Vec3{0.4, 0.7, 0.6});  // towards the light
        double ambient = 0.35;

        void validate() const
        {
            for (const auto& p : prims)
            {
                if (p.alpha < 0.0 || p.alpha > 1.0)
                    throw std::invalid_argument("primitive alpha must lie in [0,1]");
                Vec3 ext = p.shape == Primitive::Shape::Sphere ? Vec3{p.radius, p.radius, p.radius} : p.half;
                if (!bbox.contains(p.center - ext, 1e-12) || !bbox.contains(p.center + ext, 1e-12))
                    throw std::invalid_argument("primitive leaves the scene bbox");
            }
        }
    };

    /// Default scenes inside [-1,1]^3. `voxel` is the voxel edge of the grid the
    /// scene is meant for; it sets the thin sheet's thickness.
    inline SyntheticScene make_scene(SceneKind kind, double voxel = 2.0 / 64.0)
    {
        SyntheticScene s;
        s.kind = kind;
        Primitive p;
        switch (kind)
        {
        case SceneKind::Sphere:
            p.shape = Primitive::Shape::Sphere;
            p.radius = 0.5;
            p.albedo = {0.85, 0.45, 0.25};
            s.prims.push_back(p);
            break;
        case SceneKind::ThinSheet:
            p.shape = Primitive::Shape::Box;
            p.half = {0.5, 0.5, 0.5 * voxel};
            p.albedo = {0.3, 0.6, 0.85};
            s.prims.push_back(p);
            break;
        case SceneKind::SemiTransparentSlab:
            p.shape = Primitive::Shape::Box;
            p.half = {0.5, 0.5, 0.06};
            p.albedo = {0.9, 0.25, 0.2};
            p.alpha = 0.5;
            s.prims.push_back(p);
            break;
        case SceneKind::Nested:
        {
            Primitive slab;
            slab.shape = Primitive::Shape::Box;
            slab.center = {0, 0, 0.6};
            slab.half = {0.45, 0.45, 0.05};
            slab.albedo = {0.2, 0.4, 0.9};
            slab.alpha = 0.5;
            Primitive ball;
            ball.shape = Primitive::Shape::Sphere;
            ball.radius = 0.35;
            ball.albedo = {0.9, 0.8, 0.2};
            s.prims.push_back(slab);
            s.prims.push_back(ball);
            break;
        }
        }
        s.validate();
        return s;
    }

    struct SurfaceHit
    {
        double t = 0.0;
        Vec3 normal;  // outward
        const Primitive* prim = nullptr;
    };

    /// Entry hits (n . d < 0) of the ray with every primitive, sorted by t.
    inline std::vector<SurfaceHit> entry_hits(const SyntheticScene& scene, const Ray& ray)
    {
        std::vector<SurfaceHit> hits;
        for (const auto& p : scene.prims)
        {
            if (p.shape == Primitive::Shape::Sphere)
            {
                Vec3 oc = ray.origin - p.center;
                double a = dot(ray.dir, ray.dir), b = dot(oc, ray.dir), c = dot(oc, oc) - p.radius * p.radius;
                double disc = b * b - a * c;
                if (disc <= 0.0)
                    continue;
                double t = (-b - std::sqrt(disc)) / a;
                if (t <= 0.0)
                    continue;
                Vec3 n = (ray.origin + ray.dir * t - p.center) / p.radius;
                hits.push_back({t, n, &p});
            }
            else
            {
                auto iv = ray_aabb(ray, Aabb{p.center - p.half, p.center + p.half});
                if (!iv || !(iv->t_near > 0.0) || !(iv->t_far > iv->t_near))
                    continue;
                Vec3 q = ray.origin + ray.dir * iv->t_near - p.center;
                int axis = 0;
                double best = -1.0;
                for (int a = 0; a < 3; ++a)
                {
                    double r = std::abs(q[a]) / p.half[a];
                    if (r > best)
                    {
                        best = r;
                        axis = a;
                    }
                }
                Vec3 n;
                n[axis] = q[axis] > 0 ? 1.0 : -1.0;
                hits.push_back({iv->t_near, n, &p});
            }
        }
        std::sort(hits.begin(), hits.end(), [](const SurfaceHit& a, const SurfaceHit& b) { return a.t < b.t; });
        return hits;
    }

    inline Rgb shade(const SyntheticScene& scene, const SurfaceHit& h)
    {
        double lambert = std::max(0.0, dot(h.normal, scene.light_dir));
        return h.prim->albedo * (scene.ambient + (1.0 - scene.ambient) * lambert);
    }

    struct ReferenceSample
    {
        Rgb color;           // composited over the scene background
        double coverage = 0.0;  // 1 - transmittance
    };

    inline ReferenceSample reference_sample(const SyntheticScene& scene, const Ray& ray)
    {
        double T = 1.0;
        Rgb acc;
        for (const auto& h : entry_hits(scene, ray))
        {
            acc += shade(scene, h) * (T * h.prim->alpha);
            T *= 1.0 - h.prim->alpha;
            if (T == 0.0)
                break;
        }
        return {acc + scene.background * T, 1.0 - T};
    }

    inline Rgb reference_ray(const SyntheticScene& scene, const Ray& ray) { return reference_sample(scene, ray).color; }

    inline Image reference_render(const SyntheticScene& scene, const Camera& cam, std::vector<float>* coverage = nullptr)
    {
        Image img(cam.width, cam.height);
        if (coverage)
            coverage->assign(img.pixel_count(), 0.0f);
        parallel_for(std::size_t(cam.height), [&](std::size_t y) {
            for (int x = 0; x < cam.width; ++x)
            {
                auto s = reference_sample(scene, generate_ray(cam, x, int(y)));
                img.set(x, int(y), s.color);
                if (coverage)
                    (*coverage)[y * cam.width + x] = float(s.coverage);
            }
        });
        return img;
    }

    /// Points on the unit sphere from a Fibonacci lattice.
    inline std::vector<Vec3> fibonacci_sphere(std::size_t n)
    {
        std::vector<Vec3> pts;
        const double golden = kPi * (3.0 - std::sqrt(5.0));
        for (std::size_t i = 0; i < n; ++i)
        {
            double z = 1.0 - 2.0 * (double(i) + 0.5) / double(n);
            double r = std::sqrt(std::max(0.0, 1.0 - z * z));
            double phi = golden * double(i);
            pts.push_back({r * std::cos(phi), r * std::sin(phi), z});
        }
        return pts;
    }

    struct ViewRig
    {
        double distance = 4.0;
        double camera_angle_x = 0.6911112070083618;  // NeRF-synthetic default
    };

    inline std::vector<Camera> make_cameras(std::size_t n_views, int resolution, const ViewRig& rig = {})
    {
        std::vector<Camera> cams;
        double f = focal_from_angle_x(resolution, rig.camera_angle_x);
        for (const Vec3& d : fibonacci_sphere(n_views))
            cams.push_back(look_at(d * rig.distance, {0, 0, 0}, {0, 0, 1}, resolution, resolution, f));
        return cams;
    }

    /// Uniform random points on the primitives' surfaces, about one per
    /// spacing^2 of area. Parts hidden inside another primitive are kept.
    inline std::vector<Vec3> sample_surface_points(const SyntheticScene& scene, double spacing, std::uint64_t seed)
    {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::normal_distribution<double> nd(0.0, 1.0);
        std::vector<Vec3> pts;
        for (const auto& p : scene.prims)
        {
            if (p.shape == Primitive::Shape::Sphere)
            {
                double area = 4.0 * kPi * p.radius * p.radius;
                auto n = std::size_t(std::ceil(area / (spacing * spacing)));
                for (std::size_t i = 0; i < n; ++i)
                {
                    Vec3 v{nd(rng), nd(rng), nd(rng)};
                    pts.push_back(p.center + v * (p.radius / norm(v)));
                }
            }
            else
            {
                const Vec3& h = p.half;
                double faces[3] = {4 * h.y * h.z, 4 * h.x * h.z, 4 * h.x * h.y};  // area of the face normal to each axis
                for (int axis = 0; axis < 3; ++axis)
                {
                    auto n = std::size_t(std::ceil(faces[axis] / (spacing * spacing)));
                    for (int side = -1; side <= 1; side += 2)
                    {
                        for (std::size_t i = 0; i < n; ++i)
                        {
                            Vec3 q{(2 * u(rng) - 1) * h.x, (2 * u(rng) - 1) * h.y, (2 * u(rng) - 1) * h.z};
                            q[axis] = side * h[axis];
                            pts.push_back(p.center + q);
                        }
                    }
                }
            }
        }
        return pts;
    }

    struct SyntheticDataset
    {
        Dataset data;
        std::vector<Vec3> gt_points;
    };

    inline SyntheticDataset make_dataset(const SyntheticScene& scene, std::size_t n_views, int resolution,
                                         std::uint64_t seed, double point_spacing = 0.01, const ViewRig& rig = {})
    {
        if (n_views < 2)
            throw std::invalid_argument("need at least two views");
        if (resolution < 1)
            throw std::invalid_argument("resolution must be positive");
        scene.validate();
        SyntheticDataset out;
        out.data.background = scene.background;
        out.data.camera_angle_x = rig.camera_angle_x;
        out.data.cameras = make_cameras(n_views, resolution, rig);
        for (std::size_t i = 0; i < n_views; ++i)
        {
            out.data.alphas.emplace_back();
            out.data.images.push_back(reference_render(scene, out.data.cameras[i], &out.data.alphas.back()));
            out.data.names.push_back("./r_" + std::to_string(i));
        }
        out.gt_points = sample_surface_points(scene, point_spacing, seed);
        return out;
    }
}  // namespace asurf
