#pragma once

/**
 * Surface point extraction, opacity trimming, downsampling and the
 * Chamfer-L1 metric.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "field.hpp"
#include "intersect.hpp"
#include "parallel.hpp"
#include "ply.hpp"
#include "render.hpp"

namespace asurf
{
    struct EmptyCloud : std::invalid_argument
    {
        using std::invalid_argument::invalid_argument;
    };

    struct SurfacePoints
    {
        std::vector<Vec3> positions;
        std::vector<double> opacities;
        std::vector<int> level_index;

        std::size_t size() const { return positions.size(); }
        void push(const Vec3& p, double a, int level)
        {
            positions.push_back(p);
            opacities.push_back(a);
            level_index.push_back(level);
        }
        PointCloud cloud() const { return {positions, opacities}; }
    };

    namespace detail
    {
        struct CellKey
        {
            std::int64_t x, y, z;
            bool operator==(const CellKey&) const = default;
        };
        struct CellHash
        {
            std::size_t operator()(const CellKey& k) const
            {
                std::uint64_t h = std::uint64_t(k.x) * 0x9E3779B97F4A7C15ull;
                h ^= std::uint64_t(k.y) * 0xC2B2AE3D27D4EB4Full + (h << 6) + (h >> 2);
                h ^= std::uint64_t(k.z) * 0x165667B19E3779F9ull + (h << 6) + (h >> 2);
                return std::size_t(h);
            }
        };
        inline CellKey cell_of(const Vec3& p, const Vec3& origin, double cell)
        {
            return {std::int64_t(std::floor((p.x - origin.x) / cell)), std::int64_t(std::floor((p.y - origin.y) / cell)),
                    std::int64_t(std::floor((p.z - origin.z) / cell))};
        }
    }  // namespace detail

    inline constexpr double kExtractDedupTol = 1e-7;

    /// Shoots k x k axis-aligned rays per axis through every occupied voxel
    /// (lattice offsets (i + 1/2)/k on the two transverse axes) and keeps all
    /// level crossings. Crossings on shared faces are reported once.
    inline SurfacePoints extract_points(const VoxelGrid& grid, int k = 4)
    {
        if (k < 1)
            throw std::invalid_argument("rays per voxel axis must be >= 1");
        grid.validate();
        const Vec3 vs = grid.voxel_size();
        const std::size_t nvox = grid.num_voxels();
        std::vector<SurfacePoints> per_voxel(nvox);

        parallel_for(nvox, [&](std::size_t vi) {
            if (!grid.occupancy[vi])
                return;
            const Int3 v = grid.voxel_coords(vi);
            const auto sa = gather_corners(grid, grid.sigma_alpha, v);
            SurfacePoints& out = per_voxel[vi];
            for (int axis = 0; axis < 3; ++axis)
            {
                const int u = (axis + 1) % 3, w = (axis + 2) % 3;
                for (int i = 0; i < k; ++i)
                    for (int j = 0; j < k; ++j)
                    {
                        Vec3 local;
                        local[u] = (i + 0.5) / k;
                        local[w] = (j + 0.5) / k;
                        VoxelHit hit;
                        hit.voxel = v;
                        hit.t_near = 0.0;
                        hit.t_far = 1.0;
                        hit.shifted_origin = local;
                        Vec3 dir;
                        dir[axis] = vs[axis];
                        Ray ray{grid.vertex_position(v) + cmul(local, vs), dir};
                        for (const Intersection& is : voxel_intersections(grid, hit, ray))
                        {
                            double a = opacity_activation(trilinear_interp(sa, is.local));
                            out.push(is.point, a, is.level_index);
                        }
                    }
            }
        });

        SurfacePoints all;
        const double tol = kExtractDedupTol;
        std::unordered_map<detail::CellKey, std::vector<std::uint32_t>, detail::CellHash> seen;
        for (const SurfacePoints& sp : per_voxel)
            for (std::size_t i = 0; i < sp.size(); ++i)
            {
                const Vec3& p = sp.positions[i];
                detail::CellKey c = detail::cell_of(p, grid.bbox.lo, tol);
                bool dup = false;
                for (int dx = -1; dx <= 1 && !dup; ++dx)
                    for (int dy = -1; dy <= 1 && !dup; ++dy)
                        for (int dz = -1; dz <= 1 && !dup; ++dz)
                        {
                            auto it = seen.find({c.x + dx, c.y + dy, c.z + dz});
                            if (it == seen.end())
                                continue;
                            for (auto idx : it->second)
                                if (all.level_index[idx] == sp.level_index[i] && norm(all.positions[idx] - p) <= tol)
                                {
                                    dup = true;
                                    break;
                                }
                        }
                if (dup)
                    continue;
                seen[c].push_back(std::uint32_t(all.size()));
                all.push(p, sp.opacities[i], sp.level_index[i]);
            }
        return all;
    }

    /// Keeps points with alpha >= alpha_min.
    inline SurfacePoints trim(const SurfacePoints& pts, double alpha_min = 0.1)
    {
        SurfacePoints out;
        for (std::size_t i = 0; i < pts.size(); ++i)
            if (pts.opacities[i] >= alpha_min)
                out.push(pts.positions[i], pts.opacities[i], pts.level_index[i]);
        return out;
    }

    /// One centroid per occupied cell of a grid anchored at the cloud's lower
    /// corner. Output follows the order in which cells are first seen.
    inline std::vector<Vec3> downsample(const std::vector<Vec3>& pts, double cell)
    {
        if (!(cell > 0.0))
            throw std::invalid_argument("downsample cell must be positive");
        if (pts.empty())
            return {};
        Vec3 lo = pts.front();
        for (const auto& p : pts)
            for (int a = 0; a < 3; ++a)
                lo[a] = std::min(lo[a], p[a]);
        struct Acc
        {
            Vec3 sum;
            std::size_t n = 0;
            std::size_t order = 0;
        };
        std::unordered_map<detail::CellKey, Acc, detail::CellHash> cells;
        for (const auto& p : pts)
        {
            auto [it, fresh] = cells.try_emplace(detail::cell_of(p, lo, cell));
            if (fresh)
                it->second.order = cells.size() - 1;
            it->second.sum = it->second.sum + p;
            it->second.n += 1;
        }
        std::vector<Vec3> out(cells.size());
        for (const auto& [key, acc] : cells)
            out[acc.order] = acc.sum / double(acc.n);
        return out;
    }

    // ---------------------------------------------------------------------
    // Exact nearest neighbours

    class KdTree
    {
    public:
        explicit KdTree(std::vector<Vec3> pts) : pts_(std::move(pts)), idx_(pts_.size())
        {
            std::iota(idx_.begin(), idx_.end(), std::uint32_t{0});
            if (!pts_.empty())
                build(0, idx_.size(), 0);
        }

        std::size_t size() const { return pts_.size(); }

        /// Euclidean distance to the nearest stored point.
        double nearest_distance(const Vec3& q) const
        {
            if (pts_.empty())
                throw EmptyCloud("nearest neighbour query on an empty cloud");
            double best = std::numeric_limits<double>::infinity();
            search(0, idx_.size(), 0, q, best);
            return std::sqrt(best);
        }

    private:
        static constexpr std::size_t kLeaf = 8;
        std::vector<Vec3> pts_;
        std::vector<std::uint32_t> idx_;

        void build(std::size_t b, std::size_t e, int depth)
        {
            if (e - b <= kLeaf)
                return;
            int axis = depth % 3;
            std::size_t m = b + (e - b) / 2;
            std::nth_element(idx_.begin() + std::ptrdiff_t(b), idx_.begin() + std::ptrdiff_t(m),
                             idx_.begin() + std::ptrdiff_t(e),
                             [&](std::uint32_t x, std::uint32_t y) { return pts_[x][axis] < pts_[y][axis]; });
            build(b, m, depth + 1);
            build(m + 1, e, depth + 1);
        }

        void search(std::size_t b, std::size_t e, int depth, const Vec3& q, double& best) const
        {
            if (e - b <= kLeaf)
            {
                for (std::size_t i = b; i < e; ++i)
                {
                    Vec3 d = pts_[idx_[i]] - q;
                    best = std::min(best, dot(d, d));
                }
                return;
            }
            int axis = depth % 3;
            std::size_t m = b + (e - b) / 2;
            const Vec3& pm = pts_[idx_[m]];
            Vec3 d = pm - q;
            best = std::min(best, dot(d, d));
            double diff = q[axis] - pm[axis];
            if (diff < 0)
            {
                search(b, m, depth + 1, q, best);
                if (diff * diff <= best)
                    search(m + 1, e, depth + 1, q, best);
            }
            else
            {
                search(m + 1, e, depth + 1, q, best);
                if (diff * diff <= best)
                    search(b, m, depth + 1, q, best);
            }
        }
    };

    struct ChamferResult
    {
        double chamfer = 0.0;       // (accuracy + completeness) / 2
        double accuracy = 0.0;      // mean over pred of the distance to gt
        double completeness = 0.0;  // mean over gt of the distance to pred
        std::size_t n_pred = 0;
        std::size_t n_gt = 0;
    };

    namespace detail
    {
        inline double mean_nn_distance(const std::vector<Vec3>& queries, const KdTree& tree)
        {
            std::vector<double> d(queries.size());
            parallel_for(queries.size(), [&](std::size_t i) { d[i] = tree.nearest_distance(queries[i]); });
            long double s = 0.0L;
            for (double x : d)
                s += x;
            return double(s / queries.size());
        }
    }  // namespace detail

    inline ChamferResult chamfer_l1(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt)
    {
        if (pred.empty() || gt.empty())
            throw EmptyCloud(std::string("chamfer distance needs non-empty clouds (") + (pred.empty() ? "pred" : "gt") +
                             " is empty)");
        ChamferResult r;
        r.n_pred = pred.size();
        r.n_gt = gt.size();
        r.accuracy = detail::mean_nn_distance(pred, KdTree(gt));
        r.completeness = detail::mean_nn_distance(gt, KdTree(pred));
        r.chamfer = 0.5 * (r.accuracy + r.completeness);
        return r;
    }

    /// Fraction of `targets` with a point of `cloud` within `radius`.
    inline double coverage(const std::vector<Vec3>& targets, const std::vector<Vec3>& cloud, double radius)
    {
        if (targets.empty())
            return 1.0;
        if (cloud.empty())
            return 0.0;
        KdTree tree(cloud);
        std::vector<std::uint8_t> hit(targets.size());
        parallel_for(targets.size(), [&](std::size_t i) { hit[i] = tree.nearest_distance(targets[i]) <= radius; });
        return double(std::count(hit.begin(), hit.end(), 1)) / double(targets.size());
    }

    inline std::string to_json(const ChamferResult& r)
    {
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "{\"chamfer\": %.17g, \"accuracy\": %.17g, \"completeness\": %.17g, \"n_pred\": %zu, \"n_gt\": %zu}",
                      r.chamfer, r.accuracy, r.completeness, r.n_pred, r.n_gt);
        return buf;
    }
}  // namespace asurf
