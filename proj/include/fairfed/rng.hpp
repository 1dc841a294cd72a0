#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fairfed {

using Rng = std::mt19937_64;

// Stream tags mixed into derived seeds so that sibling streams never collide.
enum class StreamTag : std::uint64_t {
    kSplit = 0x53504c4954ull,
    kPartition = 0x5041525449ull,
    kInit = 0x494e4954ull,
    kSelect = 0x53454c4543ull,
    kClient = 0x434c49454eull,
};

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Order-sensitive hash of a sequence of words, used for every seed in a run:
///   run seed    = derive_seed({master, r})
///   client seed = derive_seed({run, t, k, kClient})
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts);

inline std::uint64_t tag(StreamTag t) { return static_cast<std::uint64_t>(t); }

}  // namespace fairfed
