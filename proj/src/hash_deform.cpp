#include "dass/hash_deform.hpp"

#include "dass/binary_io.hpp"
#include "dass/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace dass {

namespace {

constexpr uint32_t kPrimes[3] = {1u, 2654435761u, 805459861u};
constexpr double kMinSigmaNorm = 1e-8;

// Left-multiplication matrix: quat_mul(a, b) == left_matrix(a) * b.
Eigen::Matrix4d left_matrix(const Quaternion& a) {
    Eigen::Matrix4d m;
    m << a.w, -a.x, -a.y, -a.z,
         a.x, a.w, -a.z, a.y,
         a.y, a.z, a.w, -a.x,
         a.z, -a.y, a.x, a.w;
    return m;
}

}  // namespace

void HashGridConfig::validate() const {
    if (levels < 1) throw Error("hash grid: levels must be >= 1");
    if (table_size == 0 || (table_size & (table_size - 1)) != 0)
        throw Error("hash grid: table size must be a power of two");
    if (features < 1) throw Error("hash grid: features must be >= 1");
    if (base_resolution < 1 || finest_resolution < base_resolution)
        throw Error("hash grid: finest resolution must be >= base resolution");
    if (mlp_hidden < 1 || mlp_layers < 1) throw Error("hash grid: invalid MLP shape");
}

Aabb Aabb::around(std::span<const Vec3> points, double pad) {
    Aabb box;
    if (points.empty()) return box;
    box.lo = box.hi = points[0];
    for (const auto& p : points) {
        box.lo = box.lo.cwiseMin(p);
        box.hi = box.hi.cwiseMax(p);
    }
    Vec3 extent = (box.hi - box.lo).cwiseMax(Vec3::Constant(1e-3));
    box.lo -= pad * extent;
    box.hi += pad * extent;
    return box;
}

DeformField::DeformField(const HashGridConfig& config, const Aabb& aabb, uint64_t seed)
    : config_(config), aabb_(aabb) {
    config_.validate();
    build_layout();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> feat(-1e-4, 1e-4);
    for (double& v : tables_) v = feat(rng);
    for (int l = 0; l + 1 < layer_count(); ++l) {
        const double bound = std::sqrt(6.0 / layer_in_[l]);
        std::uniform_real_distribution<double> u(-bound, bound);
        const size_t nw = static_cast<size_t>(layer_in_[l]) * layer_out_[l];
        for (size_t k = 0; k < nw; ++k) weights_[layer_offsets_[l] + k] = u(rng);
    }
}

void DeformField::build_layout() {
    const int L = config_.levels;
    resolutions_.resize(L);
    const double growth =
        L > 1 ? std::exp((std::log(config_.finest_resolution) - std::log(config_.base_resolution)) / (L - 1)) : 1.0;
    for (int l = 0; l < L; ++l)
        resolutions_[l] = static_cast<int>(std::floor(config_.base_resolution * std::pow(growth, l) + 1e-9));
    tables_.assign(static_cast<size_t>(L) * config_.table_size * config_.features, 0.0);

    layer_in_.clear();
    layer_out_.clear();
    layer_offsets_.clear();
    int in = encoding_size();
    size_t off = 0;
    for (int l = 0; l <= config_.mlp_layers; ++l) {
        const int out = l == config_.mlp_layers ? kDeformOutputs : config_.mlp_hidden;
        layer_in_.push_back(in);
        layer_out_.push_back(out);
        layer_offsets_.push_back(off);
        off += static_cast<size_t>(in) * out + out;
        in = out;
    }
    weights_.assign(off, 0.0);
}

bool DeformField::level_is_dense(int level) const {
    const uint64_t side = static_cast<uint64_t>(resolutions_[level]) + 1;
    return side * side * side <= config_.table_size;
}

uint32_t DeformField::vertex_index(int level, uint32_t ix, uint32_t iy, uint32_t iz) const {
    if (level_is_dense(level)) {
        const uint32_t side = static_cast<uint32_t>(resolutions_[level]) + 1;
        return ix + iy * side + iz * side * side;
    }
    return ((ix * kPrimes[0]) ^ (iy * kPrimes[1]) ^ (iz * kPrimes[2])) & (config_.table_size - 1);
}

Vec3 DeformField::normalize(const Vec3& p) const {
    Vec3 u;
    for (int k = 0; k < 3; ++k) u[k] = std::clamp((p[k] - aabb_.lo[k]) / (aabb_.hi[k] - aabb_.lo[k]), 0.0, 1.0);
    return u;
}

std::vector<double> encode(const DeformField& field, const Vec3& p, EncodeTrace* trace) {
    const auto& cfg = field.config();
    const int F = cfg.features;
    std::vector<double> out(static_cast<size_t>(cfg.levels) * F, 0.0);
    if (trace) {
        trace->slots.resize(cfg.levels);
        trace->weights.resize(cfg.levels);
    }
    const Vec3 u = field.normalize(p);
    const auto& tables = field.tables();
    for (int l = 0; l < cfg.levels; ++l) {
        const int res = field.resolution(l);
        uint32_t cell[3];
        double frac[3];
        for (int k = 0; k < 3; ++k) {
            const double x = u[k] * res;
            int c = static_cast<int>(std::floor(x));
            c = std::clamp(c, 0, res - 1);
            cell[k] = static_cast<uint32_t>(c);
            frac[k] = x - c;
        }
        const size_t level_off = static_cast<size_t>(l) * cfg.table_size;
        for (int corner = 0; corner < 8; ++corner) {
            const uint32_t bx = corner & 1, by = (corner >> 1) & 1, bz = (corner >> 2) & 1;
            const double w = (bx ? frac[0] : 1.0 - frac[0]) * (by ? frac[1] : 1.0 - frac[1]) *
                             (bz ? frac[2] : 1.0 - frac[2]);
            const uint32_t slot = field.vertex_index(l, cell[0] + bx, cell[1] + by, cell[2] + bz);
            const double* f = tables.data() + (level_off + slot) * F;
            for (int k = 0; k < F; ++k) out[static_cast<size_t>(l) * F + k] += w * f[k];
            if (trace) {
                trace->slots[l][corner] = slot;
                trace->weights[l][corner] = w;
            }
        }
    }
    return out;
}

namespace {

// MLP forward; `acts` receives the concatenated inputs of every layer.
std::array<double, kDeformOutputs> mlp_forward(const DeformField& field, const std::vector<double>& feat,
                                               std::vector<double>* acts) {
    const auto& w = field.weights();
    std::vector<double> x = feat, y;
    if (acts) acts->clear();
    for (int l = 0; l < field.layer_count(); ++l) {
        if (acts) acts->insert(acts->end(), x.begin(), x.end());
        const int in = field.layer_in(l), out = field.layer_out(l);
        const double* wm = w.data() + field.weight_offset(l);
        const double* b = wm + static_cast<size_t>(in) * out;
        y.assign(out, 0.0);
        for (int o = 0; o < out; ++o) {
            double s = b[o];
            const double* row = wm + static_cast<size_t>(o) * in;
            for (int i = 0; i < in; ++i) s += row[i] * x[i];
            y[o] = (l + 1 < field.layer_count()) ? std::max(0.0, s) : s;
        }
        x.swap(y);
    }
    std::array<double, kDeformOutputs> res{};
    std::copy(x.begin(), x.end(), res.begin());
    return res;
}

DeformResult finish(const Vec3& p, const Quaternion& q, const std::array<double, kDeformOutputs>& o) {
    DeformResult r;
    r.mu = Vec3(o[0], o[1], o[2]);
    r.sigma = {o[3] + 1.0, o[4], o[5], o[6]};
    r.position = p + r.mu;
    const Quaternion qn = q.normalized();
    r.rotation = r.sigma.norm() < kMinSigmaNorm ? qn : quat_mul(qn, r.sigma.normalized());
    return r;
}

}  // namespace

DeformResult deform(const DeformField& field, const Vec3& p, const Quaternion& q) {
    return finish(p, q, mlp_forward(field, encode(field, p), nullptr));
}

DeformBatch deform_batch(const DeformField& field, std::span<const Vec3> positions,
                         std::span<const Quaternion> rotations) {
    if (positions.size() != rotations.size()) throw Error("deform_batch: size mismatch");
    const size_t n = positions.size();
    DeformBatch batch;
    batch.results.resize(n);
    batch.traces.resize(n);
    batch.activations.resize(n);
    batch.input_rotations.assign(rotations.begin(), rotations.end());
#pragma omp parallel for schedule(static)
    for (long li = 0; li < static_cast<long>(n); ++li) {
        const size_t i = static_cast<size_t>(li);
        const auto feat = encode(field, positions[i], &batch.traces[i]);
        batch.results[i] = finish(positions[i], rotations[i], mlp_forward(field, feat, &batch.activations[i]));
    }
    return batch;
}

FieldGrads deform_backward(const DeformField& field, const DeformBatch& batch, std::span<const Vec3> dposition,
                           std::span<const Vec4> drotation) {
    const size_t n = batch.results.size();
    if (dposition.size() != n || drotation.size() != n) throw Error("deform_backward: size mismatch");
    const auto& cfg = field.config();
    const int F = cfg.features, E = field.encoding_size();
    const auto& w = field.weights();
    const int layers = field.layer_count();

    // Fixed chunking keeps the weight-gradient reduction order independent of
    // the thread count.
    constexpr size_t kChunks = 16;
    std::vector<std::vector<double>> chunk_w(kChunks);
    std::vector<std::vector<double>> dfeat(n);

#pragma omp parallel for schedule(static)
    for (long lc = 0; lc < static_cast<long>(kChunks); ++lc) {
        const size_t c = static_cast<size_t>(lc);
        auto& gw = chunk_w[c];
        gw.assign(w.size(), 0.0);
        const size_t lo = n * c / kChunks, hi = n * (c + 1) / kChunks;
        std::vector<double> dy, dx;
        for (size_t i = lo; i < hi; ++i) {
            const DeformResult& r = batch.results[i];
            // Output-layer gradient.
            dy.assign(kDeformOutputs, 0.0);
            for (int k = 0; k < 3; ++k) dy[k] = dposition[i][k];
            const double sn = r.sigma.norm();
            if (sn >= kMinSigmaNorm) {
                const Quaternion qn = batch.input_rotations[i].normalized();
                const Vec4 dsn = left_matrix(qn).transpose() * drotation[i];
                const Vec4 s = r.sigma.as_vec() / sn;
                const Vec4 ds = (dsn - s * s.dot(dsn)) / sn;
                for (int k = 0; k < 4; ++k) dy[3 + k] = ds[k];
            }
            const auto& acts = batch.activations[i];
            size_t act_end = acts.size();
            for (int l = layers - 1; l >= 0; --l) {
                const int in = field.layer_in(l), out = field.layer_out(l);
                const size_t act_off = act_end - in;
                const double* x = acts.data() + act_off;
                const double* wm = w.data() + field.weight_offset(l);
                double* gwm = gw.data() + field.weight_offset(l);
                double* gb = gwm + static_cast<size_t>(in) * out;
                dx.assign(in, 0.0);
                for (int o = 0; o < out; ++o) {
                    const double g = dy[o];
                    if (g == 0.0) continue;
                    gb[o] += g;
                    const double* row = wm + static_cast<size_t>(o) * in;
                    double* grow = gwm + static_cast<size_t>(o) * in;
                    for (int k = 0; k < in; ++k) {
                        grow[k] += g * x[k];
                        dx[k] += g * row[k];
                    }
                }
                // ReLU on the inputs of every layer but the first.
                if (l > 0)
                    for (int k = 0; k < in; ++k)
                        if (x[k] <= 0.0) dx[k] = 0.0;
                dy.swap(dx);
                act_end = act_off;
            }
            dfeat[i].assign(dy.begin(), dy.begin() + E);
        }
    }

    FieldGrads grads;
    grads.weights.assign(w.size(), 0.0);
    for (const auto& gw : chunk_w)
        for (size_t k = 0; k < gw.size(); ++k) grads.weights[k] += gw[k];

    grads.tables.assign(field.tables().size(), 0.0);
    for (size_t i = 0; i < n; ++i) {
        const auto& tr = batch.traces[i];
        for (int l = 0; l < cfg.levels; ++l) {
            const size_t level_off = static_cast<size_t>(l) * cfg.table_size;
            for (int corner = 0; corner < 8; ++corner) {
                double* g = grads.tables.data() + (level_off + tr.slots[l][corner]) * F;
                const double wt = tr.weights[l][corner];
                for (int k = 0; k < F; ++k) g[k] += wt * dfeat[i][static_cast<size_t>(l) * F + k];
            }
        }
    }
    return grads;
}

std::vector<uint8_t> DeformField::serialize() const {
    io::Writer w;
    w.u32(static_cast<uint32_t>(config_.levels));
    w.u32(config_.table_size);
    w.u32(static_cast<uint32_t>(config_.features));
    w.u32(static_cast<uint32_t>(config_.base_resolution));
    w.u32(static_cast<uint32_t>(config_.finest_resolution));
    w.u32(static_cast<uint32_t>(config_.mlp_hidden));
    w.u32(static_cast<uint32_t>(config_.mlp_layers));
    for (int k = 0; k < 3; ++k) w.f64(aabb_.lo[k]);
    for (int k = 0; k < 3; ++k) w.f64(aabb_.hi[k]);
    for (double v : tables_) w.f32(static_cast<float>(v));
    for (double v : weights_) w.f32(static_cast<float>(v));
    return w.take();
}

DeformField DeformField::deserialize(std::span<const uint8_t> bytes) {
    io::Reader r(bytes);
    DeformField f;
    f.config_.levels = static_cast<int>(r.u32());
    f.config_.table_size = r.u32();
    f.config_.features = static_cast<int>(r.u32());
    f.config_.base_resolution = static_cast<int>(r.u32());
    f.config_.finest_resolution = static_cast<int>(r.u32());
    f.config_.mlp_hidden = static_cast<int>(r.u32());
    f.config_.mlp_layers = static_cast<int>(r.u32());
    try {
        f.config_.validate();
    } catch (const Error& e) {
        throw DataError(std::string("field section: ") + e.what());
    }
    for (int k = 0; k < 3; ++k) f.aabb_.lo[k] = r.f64();
    for (int k = 0; k < 3; ++k) f.aabb_.hi[k] = r.f64();
    const size_t expected = (static_cast<size_t>(f.config_.levels) * f.config_.table_size * f.config_.features) * 4;
    if (expected > r.remaining()) throw DataError("field section: truncated tables");
    f.build_layout();
    for (double& v : f.tables_) v = r.f32();
    for (double& v : f.weights_) v = r.f32();
    if (!r.done()) throw DataError("field section: trailing bytes");
    return f;
}

std::pair<DeformField, DeformField> make_dual(const Aabb& scene_aabb, DatasetProfile profile, uint64_t seed,
                                              const HashGridConfig& shared) {
    if (!(scene_aabb.hi.array() > scene_aabb.lo.array()).all()) throw Error("make_dual: invalid AABB");
    HashGridConfig dyn = shared, st = shared;
    switch (profile) {
        case DatasetProfile::N3DV:
            dyn.table_size = 1u << 16;
            dyn.features = 4;
            st.table_size = 1u << 14;
            st.features = 2;
            break;
        case DatasetProfile::MeetRoom:
            dyn.table_size = 1u << 15;
            dyn.features = 4;
            st.table_size = 1u << 13;
            st.features = 2;
            break;
    }
    return {DeformField(dyn, scene_aabb, seed), DeformField(st, scene_aabb, seed + 1)};
}

}  // namespace dass
