#pragma once

#include <cstdint>
#include <random>

namespace aggvol {

using Rng = std::mt19937_64;

/// Independent stream derived from (master_seed, stream_id). Replications use
/// stream_id = replication index, so a parallel run reproduces a serial one.
inline Rng make_stream(std::uint64_t master_seed, std::uint64_t stream_id) {
    std::seed_seq seq{
        static_cast<std::uint32_t>(master_seed),
        static_cast<std::uint32_t>(master_seed >> 32),
        static_cast<std::uint32_t>(stream_id),
        static_cast<std::uint32_t>(stream_id >> 32),
        0x9e3779b9u,
    };
    return Rng(seq);
}

}  // namespace aggvol
