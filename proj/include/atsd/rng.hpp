#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace atsd {

// SplitMix64 finalizer; used to derive independent engine seeds from
// (master seed, stream id) pairs.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream) noexcept {
    return splitmix64(master ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
}

// A reproducible random stream identified by (master_seed, stream_id).
//
// Every variate is produced from the raw 64-bit output of std::mt19937_64
// with the transforms below, never with the std:: distributions, whose
// algorithms are implementation-defined. Draws are therefore bit-identical
// across standard libraries.
class DrawRng {
public:
    DrawRng(std::uint64_t master_seed, std::uint64_t stream_id)
        : master_seed_(master_seed), stream_id_(stream_id),
          engine_(mix_seed(master_seed, stream_id)) {}

    std::uint64_t master_seed() const noexcept { return master_seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }

    // Child stream; distinct k give distinct, reproducible streams.
    DrawRng substream(std::uint64_t k) const {
        return DrawRng(mix_seed(master_seed_, stream_id_), k);
    }

    std::uint64_t next() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n); Lemire's multiply-and-reject.
    std::uint64_t uniform_below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_below: empty range");
        unsigned __int128 product = static_cast<unsigned __int128>(engine_()) * n;
        auto low = static_cast<std::uint64_t>(product);
        if (low < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (low < threshold) {
                product = static_cast<unsigned __int128>(engine_()) * n;
                low = static_cast<std::uint64_t>(product);
            }
        }
        return static_cast<std::uint64_t>(product >> 64);
    }

    double exponential(double mean) { return -mean * std::log1p(-uniform01()); }

    // Poisson variate by Knuth's product method; large means are split into
    // chunks so exp(-chunk) never underflows.
    std::int64_t poisson(double mean) {
        if (!(mean >= 0.0) || !std::isfinite(mean))
            throw std::invalid_argument("poisson: mean must be finite and >= 0");
        std::int64_t total = 0;
        constexpr double chunk = 32.0;
        while (mean > 0.0) {
            const double lambda = mean > chunk ? chunk : mean;
            mean -= lambda;
            const double limit = std::exp(-lambda);
            double product = uniform01();
            while (product > limit) {
                ++total;
                product *= uniform01();
            }
        }
        return total;
    }

    bool bernoulli(double p) { return uniform01() < p; }

private:
    std::uint64_t master_seed_;
    std::uint64_t stream_id_;
    std::mt19937_64 engine_;
};

// Simple random sample without replacement of n positions out of
// [0, frame_size), returned in selection order. Uniform over all
// C(frame_size, n) subsets (partial Fisher-Yates).
inline std::vector<std::size_t> srswor(std::size_t frame_size, std::size_t n, DrawRng& rng) {
    if (n > frame_size) throw std::invalid_argument("srswor: sample size exceeds frame size");
    std::vector<std::size_t> pool(frame_size);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t pick = i + static_cast<std::size_t>(rng.uniform_below(frame_size - i));
        std::swap(pool[i], pool[pick]);
    }
    pool.resize(n);
    return pool;
}

inline std::vector<std::size_t> srswor(int frame_size, int n, DrawRng& rng) {
    if (frame_size < 0 || n < 0) throw std::invalid_argument("srswor: negative size");
    return srswor(static_cast<std::size_t>(frame_size), static_cast<std::size_t>(n), rng);
}

}  // namespace atsd
