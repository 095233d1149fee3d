#pragma once

#include "dass/gaussian_model.hpp"
#include "dass/optim.hpp"
#include "dass/renderer.hpp"

#include <vector>

namespace dass {

struct GaussianLr {
    double position = 1.6e-4;  // multiplied by the scene extent
    double rotation = 1e-3;
    double log_scale = 5e-3;
    double logit_opacity = 5e-2;
    double color = 2.5e-3;
    double identity = 1e-2;

    void validate() const;
};

// Adam state for a contiguous run of primitives (all of base, or all of var).
class GaussianOptimizer {
public:
    GaussianOptimizer(const std::vector<GaussianPrimitive>& prims, const GaussianLr& lr, double scene_extent,
                      bool train_identity);

    // `offset` locates the run inside the rendered set that `grads` describes.
    // `extra_logit` (optional) adds to the opacity-logit gradient.
    void step(std::vector<GaussianPrimitive>& prims, const GaussianGrads& grads, size_t offset,
              const std::vector<double>* extra_logit = nullptr);

    // Scales the position learning rate relative to its initial value.
    void set_position_lr_factor(double factor) { position_.lr = position_lr_ * factor; }

    void keep(const std::vector<bool>& keep);
    void append(const GaussianPrimitive& g);
    size_t size() const { return position_.params.size() / 3; }

private:
    ParamGroup position_, rotation_, log_scale_, opacity_, color_, identity_;
    double position_lr_ = 0.0;
    int color_size_ = 0;
    int id_dim_ = 0;
    bool train_identity_ = false;
};

}  // namespace dass
