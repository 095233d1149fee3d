#pragma once

#include "dass/frames.hpp"
#include "dass/gaussian_model.hpp"
#include "dass/losses.hpp"
#include "dass/renderer.hpp"

#include <cstdint>
#include <vector>

namespace dass {

struct InheritConfig {
    int steps = 20;
    double m_init = 2.0;
    int reset_period = 20;
    double lr = 2e-1;

    void validate() const;
};

// Straight-through quantizer: forward is Quant(sigmoid(m)), the backward
// factor is sigmoid'(m).
struct SteValue {
    double forward = 0.0;
    double grad = 0.0;
};

SteValue ste_forward_backward(double m);

// d(render loss)/dm for every var primitive, given the renderer gradients
// w.r.t. effective opacity and scale.
std::vector<double> mask_logit_grads(const GaussianSet& set, const InheritanceMask& mask, const GaussianGrads& grads);

struct InheritReport {
    bool reset = false;
    size_t inherited = 0;
    size_t dropped = 0;
    std::vector<double> losses;
    std::vector<double> psnrs;
    std::vector<double> step_ms;
};

// Stage 1. Only the mask logits train; the returned set keeps the var
// primitives whose gate stayed open.
GaussianSet run_inherit(const GaussianSet& prev, const Frames& frames, const InheritConfig& cfg,
                        const LossWeights& weights, int timestep, uint64_t seed, InheritReport* report = nullptr);

}  // namespace dass
