#pragma once

/**
 * Run configuration as a plain-text key=value file:
 *
 *   # comment
 *   train.iters = 2000
 *   init.tau_sigma = 10, 30, 50, 70, 90
 *   render.background = 1, 1, 1
 *
 * Keys are namespaced by stage. Unknown keys and malformed values are
 * ConfigError with the line number.
 */

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "eval.hpp"
#include "init.hpp"
#include "render.hpp"
#include "train.hpp"

namespace asurf
{
    struct ConfigError : std::runtime_error
    {
        using std::runtime_error::runtime_error;
    };

    struct EvalConfig
    {
        int rays_per_axis = 4;
        double trim_alpha = 0.1;
        double cell = 0.01;  // downsample cell; matches the default GT point spacing
    };

    struct RunConfig
    {
        FitConfig fit;
        ConvertConfig init;
        TrainConfig train;
        RenderConfig render;
        EvalConfig eval;

        /// Applies one key/value pair; throws ConfigError.
        void set(const std::string& key, const std::string& value);
        std::vector<std::string> keys() const;
        std::string dump() const;
    };

    namespace detail
    {
        inline std::string trim_ws(const std::string& s)
        {
            auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos)
                return {};
            auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        }

        inline double parse_double(const std::string& s)
        {
            std::size_t used = 0;
            double v = 0.0;
            try
            {
                v = std::stod(s, &used);
            }
            catch (const std::exception&)
            {
                throw ConfigError("expected a number, got '" + s + "'");
            }
            if (trim_ws(s.substr(used)).size())
                throw ConfigError("expected a number, got '" + s + "'");
            return v;
        }

        inline long long parse_int(const std::string& s)
        {
            std::size_t used = 0;
            long long v = 0;
            try
            {
                v = std::stoll(s, &used);
            }
            catch (const std::exception&)
            {
                throw ConfigError("expected an integer, got '" + s + "'");
            }
            if (trim_ws(s.substr(used)).size())
                throw ConfigError("expected an integer, got '" + s + "'");
            return v;
        }

        inline bool parse_bool(const std::string& s)
        {
            if (s == "true" || s == "1" || s == "yes" || s == "on")
                return true;
            if (s == "false" || s == "0" || s == "no" || s == "off")
                return false;
            throw ConfigError("expected a boolean, got '" + s + "'");
        }

        inline std::vector<double> parse_list(const std::string& s)
        {
            std::vector<double> out;
            std::stringstream ss(s);
            std::string item;
            while (std::getline(ss, item, ','))
                out.push_back(parse_double(trim_ws(item)));
            if (out.empty())
                throw ConfigError("expected a comma-separated list, got '" + s + "'");
            return out;
        }

        inline std::string fmt(double v)
        {
            std::ostringstream os;
            os.precision(17);
            os << v;
            return os.str();
        }

        inline std::string fmt_list(const std::vector<double>& v)
        {
            std::string out;
            for (std::size_t i = 0; i < v.size(); ++i)
                out += (i ? ", " : "") + fmt(v[i]);
            return out;
        }

        struct Field
        {
            std::function<void(RunConfig&, const std::string&)> set;
            std::function<std::string(const RunConfig&)> get;
        };

        template <typename T>
        Field num(T RunConfig::*group, double T::*member)
        {
            return {[=](RunConfig& c, const std::string& v) { (c.*group).*member = parse_double(v); },
                    [=](const RunConfig& c) { return fmt((c.*group).*member); }};
        }

        template <typename T, typename I>
        Field integer(T RunConfig::*group, I T::*member)
        {
            return {[=](RunConfig& c, const std::string& v) {
                        long long x = parse_int(v);
                        if constexpr (std::is_unsigned_v<I>)
                            if (x < 0)
                                throw ConfigError("expected a non-negative integer, got '" + v + "'");
                        (c.*group).*member = I(x);
                    },
                    [=](const RunConfig& c) { return std::to_string((c.*group).*member); }};
        }

        inline Field rgb(Rgb& (*ref)(RunConfig&), const Rgb& (*cref)(const RunConfig&))
        {
            return {[=](RunConfig& c, const std::string& v) {
                        auto l = parse_list(v);
                        if (l.size() == 1)
                            l = {l[0], l[0], l[0]};
                        if (l.size() != 3)
                            throw ConfigError("expected r, g, b, got '" + v + "'");
                        ref(c) = {l[0], l[1], l[2]};
                    },
                    [=](const RunConfig& c) {
                        const Rgb& b = cref(c);
                        return fmt_list({b.r, b.g, b.b});
                    }};
        }

        inline const std::map<std::string, Field>& fields()
        {
            static const std::map<std::string, Field> table = [] {
                std::map<std::string, Field> t;
                using R = RunConfig;
                // density fit
                t["fit.resolution"] = {[](R& c, const std::string& v) {
                                           long long n = parse_int(v);
                                           if (n < 1 || n > 1024)
                                               throw ConfigError("fit.resolution must lie in [1, 1024]");
                                           c.fit.resolution = {int(n), int(n), int(n)};
                                       },
                                       [](const R& c) { return std::to_string(c.fit.resolution.x); }};
                t["fit.iters"] = integer(&R::fit, &FitConfig::iters);
                t["fit.batch_rays"] = integer(&R::fit, &FitConfig::batch_rays);
                t["fit.lr_sigma"] = num(&R::fit, &FitConfig::lr_sigma);
                t["fit.lr_sigma_end"] = num(&R::fit, &FitConfig::lr_sigma_end);
                t["fit.lr_sh"] = num(&R::fit, &FitConfig::lr_sh);
                t["fit.lr_sh_end"] = num(&R::fit, &FitConfig::lr_sh_end);
                t["fit.lambda_tv"] = num(&R::fit, &FitConfig::lambda_tv);
                t["fit.lambda_sparsity"] = num(&R::fit, &FitConfig::lambda_sparsity);
                t["fit.init_sigma"] = num(&R::fit, &FitConfig::init_sigma);
                t["fit.init_color"] = num(&R::fit, &FitConfig::init_color);
                t["fit.step_voxels"] = {[](R& c, const std::string& v) { c.fit.volume.step_voxels = parse_double(v); },
                                        [](const R& c) { return fmt(c.fit.volume.step_voxels); }};
                t["fit.min_transmittance"] = {
                    [](R& c, const std::string& v) { c.fit.volume.min_transmittance = parse_double(v); },
                    [](const R& c) { return fmt(c.fit.volume.min_transmittance); }};
                t["fit.seed"] = integer(&R::fit, &FitConfig::seed);
                t["fit.resolution"] = {[](R& c, const std::string& v) {
                                           auto l = parse_list(v);
                                           if (l.size() == 1)
                                               l = {l[0], l[0], l[0]};
                                           if (l.size() != 3)
                                               throw ConfigError("expected one or three resolutions, got '" + v + "'");
                                           for (int a = 0; a < 3; ++a)
                                           {
                                               if (l[a] < 1 || l[a] != double(int(l[a])))
                                                   throw ConfigError("resolution must be a positive integer");
                                               c.fit.resolution[a] = int(l[a]);
                                           }
                                       },
                                       [](const R& c) {
                                           return fmt_list({double(c.fit.resolution.x), double(c.fit.resolution.y),
                                                            double(c.fit.resolution.z)});
                                       }};
                t["fit.bbox"] = {[](R& c, const std::string& v) {
                                     auto l = parse_list(v);
                                     if (l.size() != 6)
                                         throw ConfigError("bbox needs six numbers (lo xyz, hi xyz)");
                                     c.fit.bbox = {{l[0], l[1], l[2]}, {l[3], l[4], l[5]}};
                                 },
                                 [](const R& c) {
                                     const Aabb& b = c.fit.bbox;
                                     return fmt_list({b.lo.x, b.lo.y, b.lo.z, b.hi.x, b.hi.y, b.hi.z});
                                 }};
                // conversion
                t["init.tau_sigma"] = {[](R& c, const std::string& v) { c.init.tau_sigma = parse_list(v); },
                                       [](const R& c) { return fmt_list(c.init.tau_sigma); }};
                t["init.s_sigma"] = num(&R::init, &ConvertConfig::s_sigma);
                t["init.prune_threshold"] = num(&R::init, &ConvertConfig::prune_threshold);
                // training
                t["train.iters"] = integer(&R::train, &TrainConfig::iters);
                t["train.batch_rays"] = integer(&R::train, &TrainConfig::batch_rays);
                t["train.lr_delta_start"] = num(&R::train, &TrainConfig::lr_delta_start);
                t["train.lr_delta_end"] = num(&R::train, &TrainConfig::lr_delta_end);
                t["train.lr_sigma_alpha_start"] = num(&R::train, &TrainConfig::lr_sigma_alpha_start);
                t["train.lr_sigma_alpha_end"] = num(&R::train, &TrainConfig::lr_sigma_alpha_end);
                t["train.lr_sh"] = num(&R::train, &TrainConfig::lr_sh);
                t["train.delay_iters"] = integer(&R::train, &TrainConfig::delay_iters);
                t["train.delay_mult"] = num(&R::train, &TrainConfig::delay_mult);
                t["train.a_start"] = num(&R::train, &TrainConfig::a_start);
                t["train.a_end"] = num(&R::train, &TrainConfig::a_end);
                t["train.a_anneal_iters"] = integer(&R::train, &TrainConfig::a_anneal_iters);
                t["train.rmsprop_decay"] = num(&R::train, &TrainConfig::rmsprop_decay);
                t["train.rmsprop_eps"] = num(&R::train, &TrainConfig::rmsprop_eps);
                t["train.seed"] = integer(&R::train, &TrainConfig::seed);
                t["train.deterministic"] = {[](R& c, const std::string& v) { c.train.deterministic = parse_bool(v); },
                                            [](const R& c) { return std::string(c.train.deterministic ? "true" : "false"); }};
                // loss weights
                auto loss = [](double LossWeights::*m) -> Field {
                    return {[=](R& c, const std::string& v) { c.train.loss.*m = parse_double(v); },
                            [=](const R& c) { return fmt(c.train.loss.*m); }};
                };
                t["loss.lambda_c"] = loss(&LossWeights::lambda_c);
                t["loss.lambda_n"] = loss(&LossWeights::lambda_n);
                t["loss.lambda_delta"] = loss(&LossWeights::lambda_delta);
                t["loss.lambda_H"] = loss(&LossWeights::lambda_H);
                t["loss.lambda_alpha"] = loss(&LossWeights::lambda_alpha);
                t["loss.lambda_ek"] = loss(&LossWeights::lambda_ek);
                t["loss.sparsity_fraction"] = loss(&LossWeights::sparsity_fraction);
                t["loss.lambda_c_cutoff_iters"] = {
                    [](R& c, const std::string& v) { c.train.loss.lambda_c_cutoff_iters = long(parse_int(v)); },
                    [](const R& c) { return std::to_string(c.train.loss.lambda_c_cutoff_iters); }};
                // rendering
                t["render.a"] = num(&R::render, &RenderConfig::a);
                t["render.background"] = rgb([](R& c) -> Rgb& { return c.render.background; },
                                             [](const R& c) -> const Rgb& { return c.render.background; });
                // evaluation
                t["eval.rays_per_axis"] = integer(&R::eval, &EvalConfig::rays_per_axis);
                t["eval.trim_alpha"] = num(&R::eval, &EvalConfig::trim_alpha);
                t["eval.cell"] = num(&R::eval, &EvalConfig::cell);
                return t;
            }();
            return table;
        }
    }  // namespace detail

    inline void RunConfig::set(const std::string& key, const std::string& value)
    {
        const auto& f = detail::fields();
        auto it = f.find(key);
        if (it == f.end())
            throw ConfigError("unknown config key '" + key + "'");
        try
        {
            it->second.set(*this, detail::trim_ws(value));
        }
        catch (const ConfigError& e)
        {
            throw ConfigError(key + ": " + e.what());
        }
    }

    inline std::vector<std::string> RunConfig::keys() const
    {
        std::vector<std::string> out;
        for (const auto& [k, _] : detail::fields())
            out.push_back(k);
        return out;
    }

    inline std::string RunConfig::dump() const
    {
        std::string out;
        for (const auto& [k, f] : detail::fields())
            out += k + " = " + f.get(*this) + "\n";
        return out;
    }

    inline RunConfig parse_config(std::istream& is, const std::string& name = "<config>")
    {
        RunConfig cfg;
        std::string line;
        int lineno = 0;
        while (std::getline(is, line))
        {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos)
                line.resize(hash);
            line = detail::trim_ws(line);
            if (line.empty())
                continue;
            auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(name + ":" + std::to_string(lineno) + ": expected key = value");
            try
            {
                cfg.set(detail::trim_ws(line.substr(0, eq)), line.substr(eq + 1));
            }
            catch (const ConfigError& e)
            {
                throw ConfigError(name + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
        return cfg;
    }

    inline RunConfig load_config(const std::string& path)
    {
        std::ifstream is(path);
        if (!is)
            throw ConfigError("cannot open config " + path);
        return parse_config(is, path);
    }
}  // namespace asurf
