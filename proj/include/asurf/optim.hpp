#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace asurf
{
    /// RMSProp with one second-moment accumulator per parameter.
    struct RmsProp
    {
        double decay = 0.95;
        double eps = 1e-8;
        std::vector<double> v;

        RmsProp() = default;
        RmsProp(std::size_t n, double decay_, double eps_) : decay(decay_), eps(eps_), v(n, 0.0) {}

        void step(std::span<double> params, std::span<const double> grads, double lr)
        {
            if (params.size() != v.size() || grads.size() != v.size())
                throw std::invalid_argument("RMSProp shape mismatch");
            for (std::size_t i = 0; i < v.size(); ++i)
            {
                double g = grads[i];
                v[i] = decay * v[i] + (1.0 - decay) * g * g;
                if (g != 0.0)
                    params[i] -= lr * g / (std::sqrt(v[i]) + eps);
            }
        }
    };

    /// exp((1 - s) ln a + s ln b) for s in [0, 1].
    inline double log_lerp(double a, double b, double s) { return std::exp((1.0 - s) * std::log(a) + s * std::log(b)); }

    /// Stateless 64-bit mixer, used to derive per-ray random streams.
    inline std::uint64_t splitmix64(std::uint64_t x)
    {
        x += 0x9E3779B97F4A7C15ull;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
        return x ^ (x >> 31);
    }

    inline double unit_double(std::uint64_t bits) { return double(bits >> 11) * 0x1.0p-53; }
}  // namespace asurf
