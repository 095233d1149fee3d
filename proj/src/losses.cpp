#include "dass/losses.hpp"

#include "dass/error.hpp"

#include <array>
#include <cmath>

namespace dass {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWindow>& window() {
    static const auto w = [] {
        std::array<double, kWindow> g{};
        double s = 0.0;
        for (int i = 0; i < kWindow; ++i) {
            const double d = i - kWindow / 2;
            g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
            s += g[i];
        }
        for (double& v : g) v /= s;
        return g;
    }();
    return w;
}

// Separable zero-padded "same" filtering of one H x W plane.
std::vector<double> blur(const std::vector<double>& src, int H, int W) {
    const auto& g = window();
    const int r = kWindow / 2;
    std::vector<double> tmp(src.size(), 0.0), dst(src.size(), 0.0);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double s = 0.0;
            for (int k = -r; k <= r; ++k) {
                const int xx = x + k;
                if (xx >= 0 && xx < W) s += g[k + r] * src[static_cast<size_t>(y) * W + xx];
            }
            tmp[static_cast<size_t>(y) * W + x] = s;
        }
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double s = 0.0;
            for (int k = -r; k <= r; ++k) {
                const int yy = y + k;
                if (yy >= 0 && yy < H) s += g[k + r] * tmp[static_cast<size_t>(yy) * W + x];
            }
            dst[static_cast<size_t>(y) * W + x] = s;
        }
    return dst;
}

std::vector<double> plane(const Image& img, int c) {
    std::vector<double> p(img.pixels());
    for (size_t i = 0; i < p.size(); ++i) p[i] = img.data[i * img.channels + c];
    return p;
}

void check_shapes(const Image& a, const Image& b, const char* what) {
    if (!a.same_shape(b)) throw Error(std::string(what) + ": shape mismatch");
}

}  // namespace

void LossWeights::validate() const {
    if (!(lambda_dssim >= 0.0 && lambda_dssim <= 1.0)) throw Error("lambda_dssim must lie in [0,1]");
    if (!(lambda_inher >= 0.0)) throw Error("lambda_inher must be non-negative");
    if (!(lambda_opacity_reg >= 0.0)) throw Error("lambda_opacity_reg must be non-negative");
}

LossResult ssim_with_grad(const Image& a, const Image& b) {
    check_shapes(a, b, "ssim");
    const int H = a.height, W = a.width, C = a.channels;
    const size_t n = a.pixels();
    LossResult res;
    res.grad = Image(H, W, C);
    const double norm = 1.0 / (static_cast<double>(n) * C);
    double total = 0.0;
    for (int c = 0; c < C; ++c) {
        const auto x = plane(a, c), y = plane(b, c);
        std::vector<double> xx(n), yy(n), xy(n);
        for (size_t i = 0; i < n; ++i) {
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = blur(x, H, W), my = blur(y, H, W);
        const auto exx = blur(xx, H, W), eyy = blur(yy, H, W), exy = blur(xy, H, W);
        std::vector<double> ga(n), gb(n), gc(n);
        for (size_t i = 0; i < n; ++i) {
            const double vx = exx[i] - mx[i] * mx[i];
            const double vy = eyy[i] - my[i] * my[i];
            const double cxy = exy[i] - mx[i] * my[i];
            const double a1 = 2.0 * mx[i] * my[i] + kC1, a2 = 2.0 * cxy + kC2;
            const double b1 = mx[i] * mx[i] + my[i] * my[i] + kC1, b2 = vx + vy + kC2;
            const double s = (a1 * a2) / (b1 * b2);
            total += s;
            const double ds_dmx = 2.0 * my[i] * a2 / (b1 * b2) - s * 2.0 * mx[i] / b1;
            const double ds_dvx = -s / b2;
            const double ds_dcxy = 2.0 * a1 / (b1 * b2);
            ga[i] = norm * (ds_dmx - 2.0 * mx[i] * ds_dvx - my[i] * ds_dcxy);
            gb[i] = norm * ds_dvx;
            gc[i] = norm * ds_dcxy;
        }
        const auto fa = blur(ga, H, W), fb = blur(gb, H, W), fc = blur(gc, H, W);
        for (size_t i = 0; i < n; ++i) res.grad.data[i * C + c] = fa[i] + 2.0 * x[i] * fb[i] + y[i] * fc[i];
    }
    res.value = total / (static_cast<double>(n) * C);
    return res;
}

double ssim(const Image& a, const Image& b) { return ssim_with_grad(a, b).value; }

double dssim(const Image& rendered, const Image& target) { return 0.5 * (1.0 - ssim(rendered, target)); }

double l1_loss(const Image& rendered, const Image& target) {
    check_shapes(rendered, target, "l1_loss");
    double s = 0.0;
    for (size_t i = 0; i < rendered.data.size(); ++i) s += std::abs(rendered.data[i] - target.data[i]);
    return s / static_cast<double>(rendered.data.size());
}

double psnr(const Image& rendered, const Image& target) {
    check_shapes(rendered, target, "psnr");
    double s = 0.0;
    for (size_t i = 0; i < rendered.data.size(); ++i) {
        const double d = rendered.data[i] - target.data[i];
        s += d * d;
    }
    const double mse = s / static_cast<double>(rendered.data.size());
    if (mse == 0.0) return kPsnrInfinity;
    return 10.0 * std::log10(1.0 / mse);
}

LossResult fidelity_loss(const Image& rendered, const Image& target, const LossWeights& w) {
    check_shapes(rendered, target, "fidelity_loss");
    const double lam = w.lambda_dssim;
    LossResult res;
    res.grad = Image(rendered.height, rendered.width, rendered.channels);
    const double inv = 1.0 / static_cast<double>(rendered.data.size());
    double l1 = 0.0;
    for (size_t i = 0; i < rendered.data.size(); ++i) {
        const double d = rendered.data[i] - target.data[i];
        l1 += std::abs(d);
        res.grad.data[i] = (1.0 - lam) * inv * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
    }
    res.value = (1.0 - lam) * l1 * inv;
    if (lam > 0.0) {
        const LossResult s = ssim_with_grad(rendered, target);
        res.value += lam * 0.5 * (1.0 - s.value);
        for (size_t i = 0; i < res.grad.data.size(); ++i) res.grad.data[i] -= lam * 0.5 * s.grad.data[i];
    }
    return res;
}

InheritanceLoss inheritance_loss(const Image& rendered, const Image& target, const std::vector<double>& m,
                                 const LossWeights& w) {
    LossResult fid = fidelity_loss(rendered, target, w);
    InheritanceLoss res;
    res.value = fid.value;
    res.grad = std::move(fid.grad);
    res.mask_grad.resize(m.size());
    double penalty = 0.0;
    for (size_t i = 0; i < m.size(); ++i) {
        penalty += sigmoid(m[i]);
        res.mask_grad[i] = w.lambda_inher * sigmoid_grad(m[i]);
    }
    res.value += w.lambda_inher * penalty;
    return res;
}

OpacityRegularizer opacity_regularizer(const GaussianSet& set) {
    OpacityRegularizer res;
    const size_t n = set.size();
    res.grad.assign(n, 0.0);
    if (n == 0) return res;
    const double inv = 1.0 / static_cast<double>(n);
    for (size_t i = 0; i < n; ++i) {
        const double o = set[i].opacity();
        res.value -= inv * o * std::log(o);
        res.grad[i] = -inv * (std::log(o) + 1.0) * o * (1.0 - o);
    }
    return res;
}

LossResult identity_cross_entropy(const Image& id_feature, const LabelMap& labels) {
    if (id_feature.height != labels.height || id_feature.width != labels.width)
        throw Error("identity_cross_entropy: shape mismatch");
    const int K = id_feature.channels;
    LossResult res;
    res.grad = Image(id_feature.height, id_feature.width, K);
    size_t count = 0;
    for (uint8_t l : labels.labels)
        if (l > 0 && l < K) ++count;
    if (count == 0) return res;
    const double inv = 1.0 / static_cast<double>(count);
    std::vector<double> p(K);
    for (size_t px = 0; px < labels.labels.size(); ++px) {
        const int l = labels.labels[px];
        if (l == 0 || l >= K) continue;
        const double* f = id_feature.data.data() + px * K;
        double mx = f[0];
        for (int k = 1; k < K; ++k) mx = std::max(mx, f[k]);
        double z = 0.0;
        for (int k = 0; k < K; ++k) z += (p[k] = std::exp(f[k] - mx));
        for (int k = 0; k < K; ++k) p[k] /= z;
        res.value -= inv * std::log(std::max(p[l], 1e-300));
        double* g = res.grad.data.data() + px * K;
        for (int k = 0; k < K; ++k) g[k] = inv * (p[k] - (k == l ? 1.0 : 0.0));
    }
    return res;
}

}  // namespace dass
