#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace asurf
{
    namespace detail
    {
        inline std::atomic<int>& thread_cap()
        {
            static std::atomic<int> cap{0};
            return cap;
        }
    }  // namespace detail

    /// Caps worker threads used by parallel_for. 0 restores the default
    /// (ISOGRAD_THREADS if set, otherwise hardware concurrency).
    inline void set_thread_count(int n) { detail::thread_cap().store(std::max(0, n)); }

    inline int thread_count()
    {
        int cap = detail::thread_cap().load();
        if (cap > 0)
            return cap;
        if (const char* env = std::getenv("ISOGRAD_THREADS"))
        {
            int v = std::atoi(env);
            if (v > 0)
                return v;
        }
        return std::max(1u, std::thread::hardware_concurrency());
    }

    /// Runs fn(begin, end) over contiguous chunks of [0, n). Chunk boundaries
    /// depend only on n and the thread count, never on scheduling.
    template <typename Fn>
    void parallel_for_chunks(std::size_t n, Fn&& fn)
    {
        if (n == 0)
            return;
        std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(thread_count()), n);
        if (workers <= 1)
        {
            fn(std::size_t{0}, n);
            return;
        }
        std::vector<std::thread> pool;
        std::exception_ptr error;
        std::mutex error_mutex;
        std::size_t chunk = (n + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w)
        {
            std::size_t b = w * chunk;
            std::size_t e = std::min(n, b + chunk);
            if (b >= e)
                break;
            pool.emplace_back([&, b, e] {
                try
                {
                    fn(b, e);
                }
                catch (...)
                {
                    std::lock_guard lock(error_mutex);
                    if (!error)
                        error = std::current_exception();
                }
            });
        }
        for (auto& t : pool)
            t.join();
        if (error)
            std::rethrow_exception(error);
    }

    template <typename Fn>
    void parallel_for(std::size_t n, Fn&& fn)
    {
        parallel_for_chunks(n, [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i)
                fn(i);
        });
    }
}  // namespace asurf
