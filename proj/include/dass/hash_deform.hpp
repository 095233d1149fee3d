#pragma once

#include "dass/geometry.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace dass {

struct HashGridConfig {
    int levels = 8;
    uint32_t table_size = 1u << 14;
    int features = 2;
    int base_resolution = 16;
    int finest_resolution = 256;
    int mlp_hidden = 64;
    int mlp_layers = 2;

    void validate() const;
    bool operator==(const HashGridConfig&) const = default;
};

struct Aabb {
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Ones();

    // Bounding box of `points` grown by `pad` of its extent on every side.
    static Aabb around(std::span<const Vec3> points, double pad);
    bool operator==(const Aabb& o) const { return lo == o.lo && hi == o.hi; }
};

// Offsets emitted per gaussian: 3 for position, 4 for rotation.
inline constexpr int kDeformOutputs = 7;

// Multi-resolution hash grid followed by a ReLU MLP with a linear head.
// The head starts at zero and the rotation output is offset by the identity
// quaternion, so a fresh field is the identity deformation.
class DeformField {
public:
    DeformField() = default;
    DeformField(const HashGridConfig& config, const Aabb& aabb, uint64_t seed);

    const HashGridConfig& config() const { return config_; }
    const Aabb& aabb() const { return aabb_; }
    int resolution(int level) const { return resolutions_[level]; }
    bool level_is_dense(int level) const;
    int encoding_size() const { return config_.levels * config_.features; }

    std::vector<double>& tables() { return tables_; }
    const std::vector<double>& tables() const { return tables_; }
    std::vector<double>& weights() { return weights_; }
    const std::vector<double>& weights() const { return weights_; }

    // Table slot of an integer lattice vertex at `level`.
    uint32_t vertex_index(int level, uint32_t ix, uint32_t iy, uint32_t iz) const;
    // Position normalized into [0,1]^3 by the AABB (clamped).
    Vec3 normalize(const Vec3& p) const;
    // Flat offsets of layer `l`'s weight matrix (row-major out x in) and bias.
    size_t weight_offset(int layer) const { return layer_offsets_[layer]; }
    int layer_count() const { return static_cast<int>(layer_in_.size()); }
    int layer_in(int layer) const { return layer_in_[layer]; }
    int layer_out(int layer) const { return layer_out_[layer]; }

    std::vector<uint8_t> serialize() const;
    static DeformField deserialize(std::span<const uint8_t> bytes);

    bool operator==(const DeformField&) const = default;

private:
    void build_layout();

    HashGridConfig config_;
    Aabb aabb_;
    std::vector<int> resolutions_;
    std::vector<double> tables_;   // levels x table_size x features
    std::vector<double> weights_;  // all MLP layers
    std::vector<int> layer_in_, layer_out_;
    std::vector<size_t> layer_offsets_;
};

// Trilinear corner slots and weights for every level of one query.
struct EncodeTrace {
    std::vector<std::array<uint32_t, 8>> slots;
    std::vector<std::array<double, 8>> weights;
};

std::vector<double> encode(const DeformField& field, const Vec3& p, EncodeTrace* trace = nullptr);

struct DeformResult {
    Vec3 position = Vec3::Zero();
    Quaternion rotation;
    Vec3 mu = Vec3::Zero();
    Quaternion sigma;  // raw rotation offset before normalization
};

DeformResult deform(const DeformField& field, const Vec3& p, const Quaternion& q);

// Batched forward that keeps what backward needs.
struct DeformBatch {
    std::vector<DeformResult> results;
    std::vector<EncodeTrace> traces;
    std::vector<std::vector<double>> activations;  // per item: concatenated layer inputs
    std::vector<Quaternion> input_rotations;
};

DeformBatch deform_batch(const DeformField& field, std::span<const Vec3> positions,
                         std::span<const Quaternion> rotations);

struct FieldGrads {
    std::vector<double> tables;
    std::vector<double> weights;
};

// Gradients of the loss w.r.t. the field given gradients w.r.t. each deformed
// position and rotation (aligned with the batch items).
FieldGrads deform_backward(const DeformField& field, const DeformBatch& batch, std::span<const Vec3> dposition,
                           std::span<const Vec4> drotation);

enum class DatasetProfile { N3DV, MeetRoom };

// High-capacity field for the dynamic group and a lightweight one for the
// static group; both share levels, resolutions and MLP shape.
std::pair<DeformField, DeformField> make_dual(const Aabb& scene_aabb, DatasetProfile profile, uint64_t seed,
                                              const HashGridConfig& shared = {});

}  // namespace dass
