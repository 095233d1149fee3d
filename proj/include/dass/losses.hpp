#pragma once

#include "dass/gaussian_model.hpp"
#include "dass/image.hpp"

#include <limits>
#include <vector>

namespace dass {

struct LossWeights {
    double lambda_dssim = 0.2;
    double lambda_inher = 5e-6;
    double lambda_opacity_reg = 0.01;

    void validate() const;
};

// Scalar loss plus its gradient w.r.t. the rendered image.
struct LossResult {
    double value = 0.0;
    Image grad;
};

// Gaussian-windowed SSIM (11x11, sigma 1.5, K1 0.01, K2 0.03, zero padding),
// mean over pixels and channels.
double ssim(const Image& a, const Image& b);
// SSIM together with dSSIM/da.
LossResult ssim_with_grad(const Image& a, const Image& b);

double dssim(const Image& rendered, const Image& target);
double l1_loss(const Image& rendered, const Image& target);

inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();
// Peak 1.0. Identical images give kPsnrInfinity.
double psnr(const Image& rendered, const Image& target);

// (1 - lambda) * L1 + lambda * (1 - SSIM) / 2.
LossResult fidelity_loss(const Image& rendered, const Image& target, const LossWeights& w);

struct InheritanceLoss {
    double value = 0.0;
    Image grad;
    // Gradient of the mask penalty w.r.t. each logit.
    std::vector<double> mask_grad;
};

// Fidelity loss plus lambda_inher * sum(sigmoid(m)).
InheritanceLoss inheritance_loss(const Image& rendered, const Image& target, const std::vector<double>& m,
                                 const LossWeights& w);

struct OpacityRegularizer {
    double value = 0.0;
    // d/d(logit_opacity), base entries first then var.
    std::vector<double> grad;
};

// -(1/N) sum o log o over all primitives.
OpacityRegularizer opacity_regularizer(const GaussianSet& set);

// Softmax cross-entropy between rendered identity features and a label map,
// averaged over labeled (non-zero) pixels.
LossResult identity_cross_entropy(const Image& id_feature, const LabelMap& labels);

}  // namespace dass
