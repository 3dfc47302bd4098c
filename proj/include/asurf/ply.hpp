#pragma once

/**
 * ASCII PLY point clouds: one vertex element with float x, y, z and an
 * optional float alpha property.
 */

#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "image_io.hpp"
#include "vec.hpp"

namespace asurf
{
    struct PointCloud
    {
        std::vector<Vec3> points;
        std::vector<double> alpha;  // empty, or one per point
    };

    inline void write_ply(const std::string& path, const PointCloud& pc)
    {
        const bool has_alpha = !pc.alpha.empty();
        if (has_alpha && pc.alpha.size() != pc.points.size())
            throw std::invalid_argument("alpha count does not match point count");
        std::ofstream os(path);
        if (!os)
            throw FormatError("cannot write " + path);
        os << "ply\nformat ascii 1.0\nelement vertex " << pc.points.size() << "\n"
           << "property float x\nproperty float y\nproperty float z\n";
        if (has_alpha)
            os << "property float alpha\n";
        os << "end_header\n";
        os << std::setprecision(std::numeric_limits<float>::max_digits10);
        for (std::size_t i = 0; i < pc.points.size(); ++i)
        {
            const Vec3& p = pc.points[i];
            os << float(p.x) << ' ' << float(p.y) << ' ' << float(p.z);
            if (has_alpha)
                os << ' ' << float(pc.alpha[i]);
            os << '\n';
        }
        if (!os)
            throw FormatError("cannot write " + path);
    }

    inline void write_ply(const std::string& path, const std::vector<Vec3>& pts) { write_ply(path, PointCloud{pts, {}}); }

    /// Reads x, y, z (and alpha when present). Other vertex properties are
    /// skipped; other elements must have no lines.
    inline PointCloud read_ply(const std::string& path)
    {
        std::ifstream is(path);
        if (!is)
            throw FormatError("cannot open " + path);
        std::string line;
        int lineno = 0;
        auto fail = [&](const std::string& msg) { throw FormatError(path + ":" + std::to_string(lineno) + ": " + msg); };
        auto next = [&]() {
            if (!std::getline(is, line))
                fail("unexpected end of file");
            ++lineno;
            if (!line.empty() && line.back() == '\r')
                line.pop_back();
        };
        next();
        if (line != "ply")
            fail("missing 'ply' magic");
        std::size_t count = 0;
        bool in_vertex = false, seen_vertex = false;
        std::vector<std::string> props;
        for (;;)
        {
            next();
            std::istringstream ls(line);
            std::string kw;
            ls >> kw;
            if (kw == "format")
            {
                std::string fmt;
                ls >> fmt;
                if (fmt != "ascii")
                    fail("only ascii PLY is supported, found '" + fmt + "'");
            }
            else if (kw == "comment" || kw == "obj_info" || kw.empty())
                continue;
            else if (kw == "element")
            {
                std::string name;
                std::size_t n = 0;
                ls >> name >> n;
                in_vertex = name == "vertex";
                if (in_vertex)
                {
                    count = n;
                    seen_vertex = true;
                }
                else if (n != 0)
                    fail("unsupported non-empty element '" + name + "'");
            }
            else if (kw == "property")
            {
                if (!in_vertex)
                    continue;
                std::string type, name;
                ls >> type >> name;
                if (type == "list")
                    fail("list properties are not supported on vertices");
                props.push_back(name);
            }
            else if (kw == "end_header")
                break;
            else
                fail("unexpected header line '" + line + "'");
        }
        if (!seen_vertex)
            fail("no vertex element");
        int ix = -1, iy = -1, iz = -1, ia = -1;
        for (int i = 0; i < int(props.size()); ++i)
        {
            if (props[i] == "x") ix = i;
            if (props[i] == "y") iy = i;
            if (props[i] == "z") iz = i;
            if (props[i] == "alpha") ia = i;
        }
        if (ix < 0 || iy < 0 || iz < 0)
            fail("vertex element lacks x, y or z");
        PointCloud pc;
        pc.points.reserve(count);
        std::vector<double> vals(props.size());
        for (std::size_t k = 0; k < count; ++k)
        {
            next();
            std::istringstream ls(line);
            for (auto& v : vals)
                if (!(ls >> v))
                    fail("expected " + std::to_string(props.size()) + " values");
            pc.points.push_back({vals[ix], vals[iy], vals[iz]});
            if (ia >= 0)
                pc.alpha.push_back(vals[ia]);
        }
        return pc;
    }
}  // namespace asurf
