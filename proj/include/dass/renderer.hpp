#pragma once

#include "dass/gaussian_model.hpp"
#include "dass/geometry.hpp"
#include "dass/image.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace dass {

inline constexpr double kFootprintSigmas = 3.0;
inline constexpr double kMinPeakAlpha = 1.0 / 255.0;
inline constexpr double kShC0 = 0.28209479177387814;
inline constexpr double kShC1 = 0.4886025119029199;

// Degree-0 SH coefficient that evaluates to `value`.
inline double rgb_to_sh(double value) { return (value - 0.5) / kShC0; }

// One compositing step at a pixel, in front-to-back order.
struct Contribution {
    uint32_t gaussian = 0;
    uint32_t slot = 0;  // index into the owning row band's gaussian list
    double alpha = 0.0;
    double transmittance = 0.0;  // before this step
};

// Per-gaussian quantities from the forward pass that backward replays.
struct ProjectedGaussian {
    bool visible = false;
    Vec3 cam_pos = Vec3::Zero();
    Vec2 mean = Vec2::Zero();
    Mat2 cov2d = Mat2::Zero();
    Vec3 conic = Vec3::Zero();  // (a, b, c) of the inverse 2D covariance
    Vec3 color = Vec3::Zero();  // evaluated, clamped to [0,1]
    Eigen::Vector3i color_clamped = Eigen::Vector3i::Zero();
    Vec3 view_dir = Vec3::Zero();
    double view_dist = 0.0;
    double opacity = 0.0;  // effective (masked) opacity
    double gate = 1.0;
    Vec3 scale = Vec3::Zero();  // effective (masked) scale
    Quaternion rotation;
    Mat3 rotmat = Mat3::Identity();
    int x0 = 0, x1 = 0, y0 = 0, y1 = 0;  // inclusive footprint bounds
};

struct RenderOutput {
    Image rgb;
    Image id_feature;
    Image alpha;
    // Per-pixel contribution lists in CSR layout.
    std::vector<uint32_t> pixel_offsets;
    std::vector<Contribution> contribs;

    Camera camera;
    int sh_degree = 0;
    int id_dim = 0;
    std::vector<ProjectedGaussian> projected;
    std::vector<double> sh;        // copied color coefficients
    std::vector<double> identity;  // copied identity vectors
    std::vector<std::vector<uint32_t>> band_lists;

    std::span<const Contribution> contributions(int y, int x) const {
        const size_t p = static_cast<size_t>(y) * camera.width + x;
        return {contribs.data() + pixel_offsets[p], contribs.data() + pixel_offsets[p + 1]};
    }
    size_t gaussian_count() const { return projected.size(); }
};

// Averaged view-space positional gradient norm per gaussian.
struct GradAccumulator {
    std::vector<double> sum;
    std::vector<int> count;

    void reset(size_t n) {
        sum.assign(n, 0.0);
        count.assign(n, 0);
    }
    double average(size_t i) const { return count[i] > 0 ? sum[i] / count[i] : 0.0; }
    std::vector<double> averages() const;
};

// Loss gradients for every gaussian in the rendered set.
struct GaussianGrads {
    std::vector<Vec3> position;
    std::vector<Vec4> rotation;
    std::vector<Vec3> log_scale;
    std::vector<double> logit_opacity;
    std::vector<double> color;     // n * color_size
    std::vector<double> identity;  // n * id_dim
    // Gradients w.r.t. the effective (masked) opacity and scale.
    std::vector<double> opacity;
    std::vector<Vec3> scale;
    // Gradient w.r.t. the projected mean, in NDC units.
    std::vector<Vec2> mean_ndc;
    std::vector<uint8_t> contributed;

    void resize(size_t n, int color_size, int id_dim);
};

// Evaluates view-dependent color for a gaussian seen from `cam_center`.
Vec3 eval_color(std::span<const double> sh, int degree, const Vec3& position, const Vec3& cam_center);

// Forward splatting. With a mask, var primitives whose gate is closed are
// skipped entirely and open ones render with their stored values.
RenderOutput render(const Camera& cam, const GaussianSet& set, const InheritanceMask* mask = nullptr);

// Reverse pass. grad_id may be null. When acc is given it must be sized to
// the gaussian count; contributing gaussians add their NDC mean gradient norm.
GaussianGrads backward(const RenderOutput& out, const Image& grad_rgb, const Image* grad_id = nullptr,
                       GradAccumulator* acc = nullptr);

// Gaussian with the largest compositing weight at a pixel, or -1.
int dominant_gaussian(const RenderOutput& out, int y, int x);

// Per-pixel mean absolute error over channels.
Image error_map(const Image& rendered, const Image& target);

// Argmax inner product against one codebook row per label, ties to the lowest label.
int id_to_label(std::span<const double> feature, const std::vector<std::vector<double>>& codebook);

// One-hot rows, one per identity dimension.
std::vector<std::vector<double>> one_hot_codebook(int id_dim);

}  // namespace dass
