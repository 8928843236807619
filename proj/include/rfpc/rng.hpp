#pragma once

#include <cstdint>

#include "gauss.hpp"

namespace rfpc {

/// Deterministic counter-based generator (splitmix64 finalizer on a keyed
/// counter).  Streams derived from (seed, stream, role) are independent, so
/// parallel replications draw from disjoint sequences regardless of order.
/// Normal variates use the inverse CDF, keeping every stream reproducible
/// bit-for-bit across platforms.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t key) : key_(key) {}

    static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream,
                                    std::uint64_t role = 0) {
        return mix(mix(mix(seed + 0x9e3779b97f4a7c15ULL) + stream) + role);
    }

    static CounterRng stream(std::uint64_t seed, std::uint64_t stream_id,
                             std::uint64_t role = 0) {
        return CounterRng(derive_key(seed, stream_id, role));
    }

    std::uint64_t next_u64() {
        counter_ += 0x9e3779b97f4a7c15ULL;
        return mix(key_ ^ counter_);
    }

    /// Uniform on the open interval (0,1).
    double next_uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    }

    double next_normal() { return normal_quantile(next_uniform()); }

    /// Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace rfpc
