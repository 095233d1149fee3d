#pragma once

#include "dass/geometry.hpp"
#include "dass/image.hpp"

#include <random>
#include <vector>

namespace dass {

// Training cameras of one timestep with their target images.
struct Frames {
    std::vector<Camera> cams;
    std::vector<Image> images;

    size_t size() const { return cams.size(); }
};

// One uniformly drawn view index.
inline size_t pick_view(std::mt19937_64& rng, size_t n) {
    return std::uniform_int_distribution<size_t>(0, n - 1)(rng);
}

}  // namespace dass
