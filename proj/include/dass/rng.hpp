#pragma once

#include <cstdint>
#include <random>

namespace dass {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Stream key for (seed, timestep, stage); each stage of each timestep draws
// from its own generator so runs can resume at any timestep boundary.
inline uint64_t derive_seed(uint64_t seed, uint64_t timestep, uint64_t stage) {
    return splitmix64(splitmix64(splitmix64(seed) ^ timestep) ^ (stage * 0x632be59bd9b4e019ull));
}

inline std::mt19937_64 make_rng(uint64_t seed, uint64_t timestep, uint64_t stage) {
    return std::mt19937_64(derive_seed(seed, timestep, stage));
}

enum Stage : uint64_t {
    kStageInit = 1,
    kStageInherit = 2,
    kStageShift = 3,
    kStageDensify = 4,
    kStageSpawn = 5,
    kStageScene = 6,
    kStageField = 7,
};

}  // namespace dass
