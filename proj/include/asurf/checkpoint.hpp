#pragma once

/**
 * Checkpoint container shared by density and surface grids. Little-endian:
 *
 *   "ASRF"  u32 version  u8 kind (0 density, 1 surface)
 *   u32 res[3]  f32 bbox[6] (lo xyz, hi xyz)
 *   u8 n_levels  f32 levels[n_levels]         (n_levels = 0 for density)
 *   u8 occupancy[voxels]
 *   f32 delta-or-sigma[V]  f32 sigma_alpha[V] (surface only)  f32 sh[27 V]
 *
 * The file length is fully determined by the header; anything else is a
 * FormatError that names the byte offset.
 */

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <type_traits>
#include <vector>

#include "density.hpp"
#include "field.hpp"
#include "image_io.hpp"

namespace asurf
{
    enum class CheckpointKind : std::uint8_t { Density = 0, Surface = 1 };

    inline constexpr std::uint32_t kCheckpointVersion = 1;

    inline const char* to_string(CheckpointKind k) { return k == CheckpointKind::Density ? "density" : "surface"; }

    namespace detail
    {
        struct Writer
        {
            std::vector<unsigned char> buf;
            void bytes(const void* p, std::size_t n)
            {
                auto c = static_cast<const unsigned char*>(p);
                buf.insert(buf.end(), c, c + n);
            }
            void u8(std::uint8_t v) { buf.push_back(v); }
            void u32(std::uint32_t v)
            {
                unsigned char b[4];
                put_u32(b, v);
                bytes(b, 4);
            }
            void f32(double v)
            {
                unsigned char b[4];
                put_f32(b, float(v));
                bytes(b, 4);
            }
            void f32s(const std::vector<double>& v)
            {
                for (double x : v)
                    f32(x);
            }
        };

        struct Reader
        {
            const std::vector<unsigned char>& buf;
            std::string path;
            std::size_t pos = 0;

            void need(std::size_t n, const char* what)
            {
                if (buf.size() - pos < n)
                    throw FormatError(path + ": truncated at offset " + std::to_string(pos) + " reading " + what +
                                      " (need " + std::to_string(n) + " bytes, " + std::to_string(buf.size() - pos) +
                                      " left)");
            }
            std::uint8_t u8(const char* what)
            {
                need(1, what);
                return buf[pos++];
            }
            std::uint32_t u32(const char* what)
            {
                need(4, what);
                auto v = get_u32(&buf[pos]);
                pos += 4;
                return v;
            }
            double f32(const char* what)
            {
                need(4, what);
                double v = get_f32(&buf[pos]);
                pos += 4;
                return v;
            }
            std::vector<double> f32s(std::size_t n, const char* what)
            {
                need(4 * n, what);
                std::vector<double> out(n);
                for (auto& x : out)
                {
                    x = get_f32(&buf[pos]);
                    pos += 4;
                }
                return out;
            }
        };

        inline void write_header(Writer& w, CheckpointKind kind, const GridShape& g, const std::vector<double>& levels)
        {
            w.bytes("ASRF", 4);
            w.u32(kCheckpointVersion);
            w.u8(std::uint8_t(kind));
            for (int a = 0; a < 3; ++a)
                w.u32(std::uint32_t(g.resolution[a]));
            for (int a = 0; a < 3; ++a)
                w.f32(g.bbox.lo[a]);
            for (int a = 0; a < 3; ++a)
                w.f32(g.bbox.hi[a]);
            if (levels.size() > 255)
                throw std::invalid_argument("at most 255 levels fit in a checkpoint");
            w.u8(std::uint8_t(levels.size()));
            w.f32s(levels);
        }

        inline void write_file(const std::string& path, const std::vector<unsigned char>& buf)
        {
            std::ofstream os(path, std::ios::binary);
            os.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
            if (!os)
                throw FormatError("cannot write " + path);
        }

        inline std::vector<unsigned char> read_file(const std::string& path)
        {
            std::ifstream is(path, std::ios::binary);
            if (!is)
                throw FormatError("cannot open " + path);
            return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
        }

        struct Header
        {
            CheckpointKind kind;
            Int3 res;
            Aabb bbox;
            std::vector<double> levels;
        };

        inline Header read_header(Reader& r)
        {
            r.need(4, "magic");
            if (std::memcmp(&r.buf[0], "ASRF", 4) != 0)
                throw FormatError(r.path + ": bad magic at offset 0, expected \"ASRF\"");
            r.pos = 4;
            std::uint32_t version = r.u32("version");
            if (version != kCheckpointVersion)
                throw FormatError(r.path + ": unsupported checkpoint version " + std::to_string(version) +
                                  " at offset 4 (expected " + std::to_string(kCheckpointVersion) + ")");
            std::size_t kind_at = r.pos;
            std::uint8_t kind = r.u8("kind");
            if (kind > 1)
                throw FormatError(r.path + ": unknown kind byte " + std::to_string(kind) + " at offset " +
                                  std::to_string(kind_at));
            Header h;
            h.kind = CheckpointKind(kind);
            for (int a = 0; a < 3; ++a)
            {
                std::size_t at = r.pos;
                std::uint32_t v = r.u32("resolution");
                if (v == 0 || v > (1u << 16))
                    throw FormatError(r.path + ": implausible resolution " + std::to_string(v) + " at offset " +
                                      std::to_string(at));
                h.res[a] = int(v);
            }
            for (int a = 0; a < 3; ++a)
                h.bbox.lo[a] = r.f32("bbox");
            for (int a = 0; a < 3; ++a)
                h.bbox.hi[a] = r.f32("bbox");
            std::uint8_t nl = r.u8("level count");
            h.levels = r.f32s(nl, "levels");
            return h;
        }

        inline void check_end(const Reader& r)
        {
            if (r.pos != r.buf.size())
                throw FormatError(r.path + ": " + std::to_string(r.buf.size() - r.pos) +
                                  " trailing bytes after offset " + std::to_string(r.pos));
        }

        inline std::vector<std::uint8_t> read_occupancy(Reader& r, std::size_t n)
        {
            r.need(n, "occupancy");
            std::vector<std::uint8_t> occ(r.buf.begin() + std::ptrdiff_t(r.pos), r.buf.begin() + std::ptrdiff_t(r.pos + n));
            r.pos += n;
            return occ;
        }
    }  // namespace detail

    inline std::vector<unsigned char> encode_checkpoint(const VoxelGrid& g)
    {
        g.validate();
        detail::Writer w;
        detail::write_header(w, CheckpointKind::Surface, g, g.levels);
        w.bytes(g.occupancy.data(), g.occupancy.size());
        w.f32s(g.delta);
        w.f32s(g.sigma_alpha);
        w.f32s(g.sh);
        return std::move(w.buf);
    }

    inline std::vector<unsigned char> encode_checkpoint(const DensityGrid& g)
    {
        g.validate();
        detail::Writer w;
        detail::write_header(w, CheckpointKind::Density, g, {});
        w.bytes(g.occupancy.data(), g.occupancy.size());
        w.f32s(g.sigma);
        w.f32s(g.sh);
        return std::move(w.buf);
    }

    inline void save_surface(const VoxelGrid& g, const std::string& path) { detail::write_file(path, encode_checkpoint(g)); }
    inline void save_density(const DensityGrid& g, const std::string& path)
    {
        detail::write_file(path, encode_checkpoint(g));
    }

    inline CheckpointKind peek_kind(const std::string& path)
    {
        auto buf = detail::read_file(path);
        detail::Reader r{buf, path};
        return detail::read_header(r).kind;
    }

    inline VoxelGrid decode_surface(const std::vector<unsigned char>& buf, const std::string& path = "<memory>")
    {
        detail::Reader r{buf, path};
        auto h = detail::read_header(r);
        if (h.kind != CheckpointKind::Surface)
            throw FormatError(path + ": expected a surface checkpoint, found a " + to_string(h.kind) + " checkpoint");
        VoxelGrid g;
        try
        {
            g = VoxelGrid(h.res, h.bbox, h.levels);
        }
        catch (const std::invalid_argument& e)
        {
            throw FormatError(path + ": invalid header: " + e.what());
        }
        g.occupancy = detail::read_occupancy(r, g.num_voxels());
        const std::size_t nv = g.num_vertices();
        g.delta = r.f32s(nv, "delta");
        g.sigma_alpha = r.f32s(nv, "sigma_alpha");
        g.sh = r.f32s(nv * kShStride, "sh");
        detail::check_end(r);
        return g;
    }

    inline DensityGrid decode_density(const std::vector<unsigned char>& buf, const std::string& path = "<memory>")
    {
        detail::Reader r{buf, path};
        auto h = detail::read_header(r);
        if (h.kind != CheckpointKind::Density)
            throw FormatError(path + ": expected a density checkpoint, found a " + to_string(h.kind) + " checkpoint");
        if (!h.levels.empty())
            throw FormatError(path + ": density checkpoint carries " + std::to_string(h.levels.size()) + " levels");
        DensityGrid g;
        try
        {
            g = DensityGrid(h.res, h.bbox);
        }
        catch (const std::invalid_argument& e)
        {
            throw FormatError(path + ": invalid header: " + e.what());
        }
        g.occupancy = detail::read_occupancy(r, g.num_voxels());
        const std::size_t nv = g.num_vertices();
        g.sigma = r.f32s(nv, "sigma");
        g.sh = r.f32s(nv * kShStride, "sh");
        detail::check_end(r);
        return g;
    }

    inline VoxelGrid load_surface(const std::string& path) { return decode_surface(detail::read_file(path), path); }
    inline DensityGrid load_density(const std::string& path) { return decode_density(detail::read_file(path), path); }

    /// Rounds every stored array to float, as a save/load cycle would.
    template <typename Grid>
    void quantize_to_f32(Grid& g)
    {
        auto q = [](std::vector<double>& v) {
            for (auto& x : v)
                x = double(float(x));
        };
        if constexpr (std::is_same_v<Grid, VoxelGrid>)
        {
            q(g.delta);
            q(g.sigma_alpha);
            q(g.levels);
        }
        else
            q(g.sigma);
        q(g.sh);
        g.bbox.lo = {double(float(g.bbox.lo.x)), double(float(g.bbox.lo.y)), double(float(g.bbox.lo.z))};
        g.bbox.hi = {double(float(g.bbox.hi.x)), double(float(g.bbox.hi.y)), double(float(g.bbox.hi.z))};
    }
}  // namespace asurf
