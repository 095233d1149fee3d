#pragma once

#include "dass/frames.hpp"
#include "dass/gaussian_model.hpp"
#include "dass/hash_deform.hpp"
#include "dass/losses.hpp"
#include "dass/renderer.hpp"

#include <cstdint>
#include <vector>

namespace dass {

// Which field deforms which primitives.
enum class ShiftMode {
    Dual,     // dynamic primitives use `dyn`, static ones use `st`
    Uniform,  // every primitive uses `dyn`
};

struct DualField {
    DeformField dyn;
    DeformField st;
};

struct ShiftConfig {
    int steps = 100;
    double lr_tables = 1e-2;
    double lr_mlp = 1e-3;
    ShiftMode mode = ShiftMode::Dual;

    void validate() const;
};

struct DeformHistogram {
    std::vector<double> edges;  // bins + 1 ascending edges, edges[0] = 0
    std::vector<size_t> dynamic;
    std::vector<size_t> static_;
};

inline constexpr double kHistogramFloor = 1e-5;

// Log-spaced histogram of deformation magnitudes split by the dynamic flag.
// The first bin is [0, floor); the rest are log-spaced up to max magnitude.
DeformHistogram deformation_histogram(const std::vector<double>& magnitudes, const std::vector<uint8_t>& dynamic,
                                      int bins = 12);

struct ShiftReport {
    std::vector<double> losses;
    std::vector<double> psnrs;
    std::vector<double> step_ms;
    std::vector<Image> error_maps;  // one per training view, after baking
    GradAccumulator grads;
    std::vector<double> magnitudes;  // baked |mu| per primitive
    DeformHistogram histogram;
};

// Deforms every primitive with the field selected by its flag.
GaussianSet apply_fields(const GaussianSet& set, const DualField& fields, ShiftMode mode);

// Stage 2. Trains the fields only, then bakes the final deformation into the
// returned set.
GaussianSet run_shift(const GaussianSet& set, DualField& fields, const Frames& frames, const ShiftConfig& cfg,
                      const LossWeights& weights, int timestep, uint64_t seed, ShiftReport* report = nullptr);

}  // namespace dass
