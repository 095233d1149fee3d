#pragma once

#include "dass/frames.hpp"
#include "dass/gaussian_model.hpp"
#include "dass/gaussian_optim.hpp"
#include "dass/image.hpp"
#include "dass/losses.hpp"
#include "dass/renderer.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace dass {

struct DensifyConfig {
    double tau_pos = 2e-3;
    double tau_err = 2e-5;
    double gamma_err = 0.10;
    int steps = 60;
    int spawn_count = 2;
    double scale_shrink = 1.6;
    double prune_opacity = 0.005;
    int prune_interval = 20;
    double spawn_opacity = 0.1;
    double var_cap_fraction = 0.2;  // of the base count
    double position_lr_final = 1.0;  // position lr ratio reached at the last step
    bool error_guidance = true;
    GaussianLr lr{1e-3, 1e-3, 2e-2, 1e-1, 5e-2, 1e-2};

    void validate() const;
};

// Strictly-greater-than threshold of a single-channel error map.
BinaryMap binarize_errors(const Image& error, double gamma);

// Sorted indices of base primitives whose projected pixel is flagged in at
// least one view.
std::vector<size_t> error_subsets(const GaussianSet& set, const std::vector<Camera>& cams,
                                  const std::vector<BinaryMap>& maps);

// {n : g_n > tau_pos} united with {n in s_err : g_n > tau_err}, sorted.
std::vector<size_t> select_subset(std::span<const double> grad, const std::vector<size_t>& s_err, double tau_pos,
                                  double tau_err);

// Appends spawn_count children per selected base primitive while the var
// count stays within `cap`. Returns the number of children added.
size_t spawn(GaussianSet& set, const std::vector<size_t>& selected, const DensifyConfig& cfg, std::mt19937_64& rng,
             size_t cap, bool* capped = nullptr);

struct DensifyReport {
    std::vector<size_t> error_set;
    std::vector<size_t> selected;
    size_t spawned = 0;
    size_t pruned = 0;
    size_t final_var = 0;
    bool capped = false;
    std::vector<double> losses;
    std::vector<double> psnrs;
    std::vector<double> step_ms;
};

// Stage 3. `grads` holds the positional statistic of every primitive of
// `set` (base first); `error_maps` align with the frames.
GaussianSet run_densify(const GaussianSet& set, const Frames& frames, const std::vector<double>& grads,
                        const std::vector<Image>& error_maps, const DensifyConfig& cfg, const LossWeights& weights,
                        double scene_extent, int timestep, uint64_t seed, DensifyReport* report = nullptr);

}  // namespace dass
