#include "dass/renderer.hpp"

#include "dass/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dass {

namespace {

constexpr int kBandRows = 4;

int band_count(int height) { return (height + kBandRows - 1) / kBandRows; }

// Derivative of the rotation matrix of a unit quaternion, contracted with dL/dR.
Vec4 rotmat_backward(const Quaternion& qn, const Mat3& g) {
    const double w = qn.w, x = qn.x, y = qn.y, z = qn.z;
    Vec4 d;
    d[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    d[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
                w * g(2, 1) - 2 * x * g(2, 2));
    d[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
                z * g(2, 1) - 2 * y * g(2, 2));
    d[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) + y * g(1, 2) +
                x * g(2, 0) + y * g(2, 1));
    return d;
}

}  // namespace

std::vector<double> GradAccumulator::averages() const {
    std::vector<double> out(sum.size());
    for (size_t i = 0; i < sum.size(); ++i) out[i] = average(i);
    return out;
}

void GaussianGrads::resize(size_t n, int color_size, int id_dim) {
    position.assign(n, Vec3::Zero());
    rotation.assign(n, Vec4::Zero());
    log_scale.assign(n, Vec3::Zero());
    logit_opacity.assign(n, 0.0);
    color.assign(n * color_size, 0.0);
    identity.assign(n * id_dim, 0.0);
    opacity.assign(n, 0.0);
    scale.assign(n, Vec3::Zero());
    mean_ndc.assign(n, Vec2::Zero());
    contributed.assign(n, 0);
}

Vec3 eval_color(std::span<const double> sh, int degree, const Vec3& position, const Vec3& cam_center) {
    Vec3 c(kShC0 * sh[0] + 0.5, kShC0 * sh[1] + 0.5, kShC0 * sh[2] + 0.5);
    if (degree >= 1) {
        const Vec3 dir = (position - cam_center).normalized();
        for (int ch = 0; ch < 3; ++ch)
            c[ch] += kShC1 * (-dir.y() * sh[3 + ch] + dir.z() * sh[6 + ch] - dir.x() * sh[9 + ch]);
    }
    return c;
}

RenderOutput render(const Camera& cam, const GaussianSet& set, const InheritanceMask* mask) {
    if (mask && mask->logits.size() != set.var.size()) throw Error("render: mask length mismatch");
    const int H = cam.height, W = cam.width, K = set.id_dim, cs = set.color_size();
    const size_t n = set.size();

    RenderOutput out;
    out.camera = cam;
    out.sh_degree = set.sh_degree;
    out.id_dim = K;
    out.rgb = Image(H, W, 3);
    out.id_feature = Image(H, W, K);
    out.alpha = Image(H, W, 1);
    out.projected.resize(n);
    out.sh.resize(n * cs);
    out.identity.resize(n * K);

    const Mat3 rot = cam.rotation();
    const Vec3 cam_center = cam.center();

#pragma omp parallel for schedule(static)
    for (long li = 0; li < static_cast<long>(n); ++li) {
        const size_t i = static_cast<size_t>(li);
        const GaussianPrimitive& g = set[i];
        std::copy(g.color.begin(), g.color.end(), out.sh.begin() + static_cast<long>(i * cs));
        std::copy(g.identity.begin(), g.identity.end(), out.identity.begin() + static_cast<long>(i * K));
        ProjectedGaussian& pg = out.projected[i];
        pg.rotation = g.rotation;
        if (mask && i >= set.base.size()) pg.gate = mask_gate(mask->logits[i - set.base.size()]);
        if (pg.gate == 0.0) continue;
        pg.opacity = g.opacity();
        pg.scale = g.scale();
        pg.cam_pos = cam.to_camera(g.position);
        if (pg.cam_pos.z() <= cam.near || pg.opacity < kMinPeakAlpha) continue;

        pg.rotmat = quat_to_rotmat(g.rotation);
        const Mat3 m = pg.rotmat * pg.scale.asDiagonal();
        const Eigen::Matrix<double, 2, 3> t = projection_jacobian(cam, pg.cam_pos) * rot;
        pg.cov2d = t * (m * m.transpose()) * t.transpose();
        pg.cov2d(0, 0) += kCovarianceFloor;
        pg.cov2d(1, 1) += kCovarianceFloor;
        const double det = pg.cov2d(0, 0) * pg.cov2d(1, 1) - pg.cov2d(0, 1) * pg.cov2d(1, 0);
        if (!(det > 0.0)) continue;
        pg.conic = Vec3(pg.cov2d(1, 1) / det, -pg.cov2d(0, 1) / det, pg.cov2d(0, 0) / det);
        pg.mean = pinhole(cam, pg.cam_pos);

        const double mid = 0.5 * (pg.cov2d(0, 0) + pg.cov2d(1, 1));
        const double lambda = mid + std::sqrt(std::max(0.1, mid * mid - det));
        const double radius = std::ceil(kFootprintSigmas * std::sqrt(lambda));
        pg.x0 = std::max(0, static_cast<int>(std::floor(pg.mean.x() - radius)));
        pg.x1 = std::min(W - 1, static_cast<int>(std::ceil(pg.mean.x() + radius)));
        pg.y0 = std::max(0, static_cast<int>(std::floor(pg.mean.y() - radius)));
        pg.y1 = std::min(H - 1, static_cast<int>(std::ceil(pg.mean.y() + radius)));
        if (pg.x0 > pg.x1 || pg.y0 > pg.y1) continue;

        Vec3 raw = eval_color(g.color, set.sh_degree, g.position, cam_center);
        if (set.sh_degree >= 1) {
            pg.view_dir = g.position - cam_center;
            pg.view_dist = pg.view_dir.norm();
            pg.view_dir /= pg.view_dist;
        }
        for (int ch = 0; ch < 3; ++ch) {
            pg.color_clamped[ch] = raw[ch] < 0.0 || raw[ch] > 1.0;
            pg.color[ch] = std::clamp(raw[ch], 0.0, 1.0);
        }
        pg.visible = true;
    }

    // Global depth order, ties broken by index.
    std::vector<uint32_t> order;
    order.reserve(n);
    for (size_t i = 0; i < n; ++i)
        if (out.projected[i].visible) order.push_back(static_cast<uint32_t>(i));
    std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
        const double da = out.projected[a].cam_pos.z(), db = out.projected[b].cam_pos.z();
        return da < db || (da == db && a < b);
    });

    const int bands = band_count(H);
    out.band_lists.assign(bands, {});
    for (uint32_t i : order) {
        const auto& pg = out.projected[i];
        for (int b = pg.y0 / kBandRows; b <= pg.y1 / kBandRows; ++b) out.band_lists[b].push_back(i);
    }

    std::vector<std::vector<Contribution>> band_contribs(bands);
    std::vector<std::vector<uint32_t>> band_counts(bands);

#pragma omp parallel for schedule(dynamic)
    for (int b = 0; b < bands; ++b) {
        const auto& list = out.band_lists[b];
        auto& contribs = band_contribs[b];
        auto& counts = band_counts[b];
        const int ya = b * kBandRows, yb = std::min(H, ya + kBandRows);
        counts.assign(static_cast<size_t>(yb - ya) * W, 0);
        std::vector<double> feat(K);
        for (int y = ya; y < yb; ++y) {
            for (int x = 0; x < W; ++x) {
                double T = 1.0;
                Vec3 c = Vec3::Zero();
                std::fill(feat.begin(), feat.end(), 0.0);
                uint32_t cnt = 0;
                for (uint32_t slot = 0; slot < list.size(); ++slot) {
                    const uint32_t gi = list[slot];
                    const auto& pg = out.projected[gi];
                    if (x < pg.x0 || x > pg.x1 || y < pg.y0 || y > pg.y1) continue;
                    const double dx = x - pg.mean.x(), dy = y - pg.mean.y();
                    const double power =
                        -0.5 * (pg.conic[0] * dx * dx + 2.0 * pg.conic[1] * dx * dy + pg.conic[2] * dy * dy);
                    if (power < -0.5 * kFootprintSigmas * kFootprintSigmas) continue;
                    const double a = pg.opacity * std::exp(power);
                    const double w = a * T;
                    c += w * pg.color;
                    const double* e = out.identity.data() + static_cast<size_t>(gi) * K;
                    for (int k = 0; k < K; ++k) feat[k] += w * e[k];
                    contribs.push_back({gi, slot, a, T});
                    T *= 1.0 - a;
                    ++cnt;
                }
                counts[static_cast<size_t>(y - ya) * W + x] = cnt;
                for (int ch = 0; ch < 3; ++ch) out.rgb.at(y, x, ch) = c[ch];
                for (int k = 0; k < K; ++k) out.id_feature.at(y, x, k) = feat[k];
                out.alpha.at(y, x) = 1.0 - T;
            }
        }
    }

    out.pixel_offsets.assign(static_cast<size_t>(H) * W + 1, 0);
    size_t total = 0;
    for (int b = 0; b < bands; ++b) total += band_contribs[b].size();
    out.contribs.reserve(total);
    size_t p = 0;
    for (int b = 0; b < bands; ++b) {
        out.contribs.insert(out.contribs.end(), band_contribs[b].begin(), band_contribs[b].end());
        for (uint32_t cnt : band_counts[b]) {
            out.pixel_offsets[p + 1] = out.pixel_offsets[p] + cnt;
            ++p;
        }
    }
    return out;
}

GaussianGrads backward(const RenderOutput& out, const Image& grad_rgb, const Image* grad_id,
                       GradAccumulator* acc) {
    const Camera& cam = out.camera;
    const int H = cam.height, W = cam.width, K = out.id_dim;
    const int cs = 3 * sh_coeffs(out.sh_degree);
    const size_t n = out.gaussian_count();
    if (out.pixel_offsets.size() != static_cast<size_t>(H) * W + 1)
        throw Error("backward: render cache missing or inconsistent with camera");
    if (grad_rgb.height != H || grad_rgb.width != W || grad_rgb.channels != 3)
        throw Error("backward: rgb gradient does not match the rendered camera");
    if (grad_id && (grad_id->height != H || grad_id->width != W || grad_id->channels != K))
        throw Error("backward: identity gradient does not match the rendered camera");
    if (acc && acc->sum.size() != n) throw Error("backward: accumulator size mismatch");

    // 2D gradients per band slot: mean(2), conic(3), opacity(1), color(3), identity(K).
    const int stride = 9 + K;
    const int bands = static_cast<int>(out.band_lists.size());
    std::vector<std::vector<double>> band_grads(bands);

#pragma omp parallel for schedule(dynamic)
    for (int b = 0; b < bands; ++b) {
        const auto& list = out.band_lists[b];
        auto& buf = band_grads[b];
        buf.assign(list.size() * stride, 0.0);
        const int ya = b * kBandRows, yb = std::min(H, ya + kBandRows);
        std::vector<double> fb(K), dfeat(K);
        for (int y = ya; y < yb; ++y) {
            for (int x = 0; x < W; ++x) {
                const auto steps = out.contributions(y, x);
                if (steps.empty()) continue;
                const Vec3 dc(grad_rgb.at(y, x, 0), grad_rgb.at(y, x, 1), grad_rgb.at(y, x, 2));
                for (int k = 0; k < K; ++k) dfeat[k] = grad_id ? grad_id->at(y, x, k) : 0.0;
                Vec3 cb = Vec3::Zero();
                std::fill(fb.begin(), fb.end(), 0.0);
                for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
                    const auto& pg = out.projected[it->gaussian];
                    const double a = it->alpha, T = it->transmittance;
                    const double* e = out.identity.data() + static_cast<size_t>(it->gaussian) * K;
                    double* g = buf.data() + static_cast<size_t>(it->slot) * stride;

                    double dalpha = T * (pg.color - cb).dot(dc);
                    for (int k = 0; k < K; ++k) {
                        dalpha += T * (e[k] - fb[k]) * dfeat[k];
                        g[9 + k] += a * T * dfeat[k];
                        fb[k] = a * e[k] + (1.0 - a) * fb[k];
                    }
                    for (int ch = 0; ch < 3; ++ch) g[6 + ch] += a * T * dc[ch];
                    cb = a * pg.color + (1.0 - a) * cb;

                    g[5] += (a / pg.opacity) * dalpha;
                    const double dpower = a * dalpha;
                    const double dx = x - pg.mean.x(), dy = y - pg.mean.y();
                    g[0] += dpower * (pg.conic[0] * dx + pg.conic[1] * dy);
                    g[1] += dpower * (pg.conic[1] * dx + pg.conic[2] * dy);
                    g[2] += dpower * (-0.5 * dx * dx);
                    g[3] += dpower * (-dx * dy);
                    g[4] += dpower * (-0.5 * dy * dy);
                }
            }
        }
    }

    // Deterministic merge in band order.
    std::vector<double> g2(n * stride, 0.0);
    std::vector<uint8_t> touched(n, 0);
    for (int b = 0; b < bands; ++b) {
        const auto& list = out.band_lists[b];
        for (size_t s = 0; s < list.size(); ++s) {
            double* dst = g2.data() + static_cast<size_t>(list[s]) * stride;
            const double* src = band_grads[b].data() + s * stride;
            for (int k = 0; k < stride; ++k) dst[k] += src[k];
        }
    }
    for (const auto& c : out.contribs) touched[c.gaussian] = 1;

    GaussianGrads grads;
    grads.resize(n, cs, K);
    const Mat3 view_rot = cam.rotation();

#pragma omp parallel for schedule(static)
    for (long li = 0; li < static_cast<long>(n); ++li) {
        const size_t i = static_cast<size_t>(li);
        const auto& pg = out.projected[i];
        if (!pg.visible || !touched[i]) continue;
        const double* g = g2.data() + i * stride;
        grads.contributed[i] = 1;

        // Identity and color.
        for (int k = 0; k < K; ++k) grads.identity[i * K + k] = g[9 + k];
        Vec3 dcolor(g[6], g[7], g[8]);
        for (int ch = 0; ch < 3; ++ch)
            if (pg.color_clamped[ch]) dcolor[ch] = 0.0;
        double* dsh = grads.color.data() + i * cs;
        for (int ch = 0; ch < 3; ++ch) dsh[ch] = kShC0 * dcolor[ch];
        Vec3 dpos = Vec3::Zero();
        if (out.sh_degree >= 1) {
            const Vec3& d = pg.view_dir;
            const double* sh = out.sh.data() + i * cs;
            Vec3 ddir = Vec3::Zero();
            for (int ch = 0; ch < 3; ++ch) {
                dsh[3 + ch] = -kShC1 * d.y() * dcolor[ch];
                dsh[6 + ch] = kShC1 * d.z() * dcolor[ch];
                dsh[9 + ch] = -kShC1 * d.x() * dcolor[ch];
                ddir.x() += -kShC1 * sh[9 + ch] * dcolor[ch];
                ddir.y() += -kShC1 * sh[3 + ch] * dcolor[ch];
                ddir.z() += kShC1 * sh[6 + ch] * dcolor[ch];
            }
            dpos += (Mat3::Identity() - d * d.transpose()) * ddir / pg.view_dist;
        }

        // Opacity.
        const double o = pg.opacity;
        grads.opacity[i] = g[5];
        grads.logit_opacity[i] = g[5] * pg.gate * o * (1.0 - o);

        // Mean.
        const Vec3& pc = pg.cam_pos;
        const double iz = 1.0 / pc.z(), iz2 = iz * iz;
        const double du = g[0], dv = g[1];
        Vec3 dpc(du * cam.fx * iz, dv * cam.fy * iz,
                 -du * cam.fx * pc.x() * iz2 - dv * cam.fy * pc.y() * iz2);
        grads.mean_ndc[i] = Vec2(du * 0.5 * W, dv * 0.5 * H);

        // Conic -> 2D covariance.
        Mat2 dconic;
        dconic << g[2], 0.5 * g[3], 0.5 * g[3], g[4];
        Mat2 conic;
        conic << pg.conic[0], pg.conic[1], pg.conic[1], pg.conic[2];
        const Mat2 dcov2 = -conic * dconic * conic;

        // 2D covariance -> world covariance and Jacobian.
        const Eigen::Matrix<double, 2, 3> J = projection_jacobian(cam, pc);
        const Eigen::Matrix<double, 2, 3> T = J * view_rot;
        const Mat3 m = pg.rotmat * pg.scale.asDiagonal();
        const Mat3 sigma = m * m.transpose();
        const Mat3 dsigma = T.transpose() * dcov2 * T;
        const Eigen::Matrix<double, 2, 3> dT = 2.0 * dcov2 * T * sigma;
        const Eigen::Matrix<double, 2, 3> dJ = dT * view_rot.transpose();
        dpc.x() += dJ(0, 2) * (-cam.fx * iz2);
        dpc.y() += dJ(1, 2) * (-cam.fy * iz2);
        dpc.z() += dJ(0, 0) * (-cam.fx * iz2) + dJ(0, 2) * (2.0 * cam.fx * pc.x() * iz2 * iz) +
                   dJ(1, 1) * (-cam.fy * iz2) + dJ(1, 2) * (2.0 * cam.fy * pc.y() * iz2 * iz);
        dpos += view_rot.transpose() * dpc;
        grads.position[i] = dpos;

        // World covariance -> scale and rotation.
        const Mat3 dm = 2.0 * dsigma * m;
        Vec3 dscale;
        for (int k = 0; k < 3; ++k) dscale[k] = dm.col(k).dot(pg.rotmat.col(k));
        grads.scale[i] = dscale;
        grads.log_scale[i] = pg.gate * dscale.cwiseProduct(pg.scale);
        const Mat3 drot = dm * pg.scale.asDiagonal();
        const double qn = pg.rotation.norm();
        const Quaternion qhat = pg.rotation.normalized();
        const Vec4 dqhat = rotmat_backward(qhat, drot);
        const Vec4 qv = qhat.as_vec();
        grads.rotation[i] = (dqhat - qv * qv.dot(dqhat)) / qn;
    }

    if (acc) {
        for (size_t i = 0; i < n; ++i) {
            if (!grads.contributed[i]) continue;
            acc->sum[i] += grads.mean_ndc[i].norm();
            acc->count[i] += 1;
        }
    }
    return grads;
}

int dominant_gaussian(const RenderOutput& out, int y, int x) {
    int best = -1;
    double best_w = 0.0;
    for (const auto& c : out.contributions(y, x)) {
        const double w = c.alpha * c.transmittance;
        if (w > best_w) {
            best_w = w;
            best = static_cast<int>(c.gaussian);
        }
    }
    return best;
}

Image error_map(const Image& rendered, const Image& target) {
    if (!rendered.same_shape(target)) throw Error("error_map: shape mismatch");
    Image e(rendered.height, rendered.width, 1);
    const int C = rendered.channels;
    for (size_t p = 0; p < rendered.pixels(); ++p) {
        double s = 0.0;
        for (int c = 0; c < C; ++c) s += std::abs(rendered.data[p * C + c] - target.data[p * C + c]);
        e.data[p] = s / C;
    }
    return e;
}

int id_to_label(std::span<const double> feature, const std::vector<std::vector<double>>& codebook) {
    int best = 0;
    double best_dot = -std::numeric_limits<double>::infinity();
    for (size_t l = 0; l < codebook.size(); ++l) {
        double d = 0.0;
        for (size_t k = 0; k < feature.size() && k < codebook[l].size(); ++k) d += feature[k] * codebook[l][k];
        if (d > best_dot) {
            best_dot = d;
            best = static_cast<int>(l);
        }
    }
    return best;
}

std::vector<std::vector<double>> one_hot_codebook(int id_dim) {
    std::vector<std::vector<double>> book(id_dim, std::vector<double>(id_dim, 0.0));
    for (int k = 0; k < id_dim; ++k) book[k][k] = 1.0;
    return book;
}

}  // namespace dass
