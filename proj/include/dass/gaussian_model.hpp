#pragma once

#include "dass/geometry.hpp"
#include "dass/math.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dass {

// Number of spherical-harmonics coefficients per channel.
inline int sh_coeffs(int degree) { return (degree + 1) * (degree + 1); }

struct GaussianPrimitive {
    Vec3 position = Vec3::Zero();
    Quaternion rotation;
    Vec3 log_scale = Vec3::Zero();
    double logit_opacity = 0.0;
    // SH coefficients, coefficient-major: [k * 3 + channel].
    std::vector<double> color;
    std::vector<double> identity;
    bool dynamic = false;

    double opacity() const { return sigmoid(logit_opacity); }
    Vec3 scale() const { return log_scale.array().exp(); }

    bool operator==(const GaussianPrimitive&) const = default;
};

// Base primitives (fixed count after initialization) followed by the
// per-timestep densified var primitives. Index i < base.size() addresses
// base, the rest address var.
struct GaussianSet {
    std::vector<GaussianPrimitive> base;
    std::vector<GaussianPrimitive> var;
    int timestep = 0;
    int sh_degree = 0;
    int id_dim = 8;

    size_t size() const { return base.size() + var.size(); }
    const GaussianPrimitive& operator[](size_t i) const {
        return i < base.size() ? base[i] : var[i - base.size()];
    }
    GaussianPrimitive& operator[](size_t i) { return i < base.size() ? base[i] : var[i - base.size()]; }

    int color_size() const { return 3 * sh_coeffs(sh_degree); }
    GaussianPrimitive make_primitive() const;
    // Throws DataError when a primitive violates the set invariants.
    void validate() const;

    bool operator==(const GaussianSet&) const = default;
};

// The learnable keep/drop logits for the var partition.
struct InheritanceMask {
    std::vector<double> logits;
};

inline constexpr double kMaskThreshold = 0.5;

// Quant(sigmoid(m)), inclusive threshold.
inline double mask_gate(double m) { return sigmoid(m) >= kMaskThreshold ? 1.0 : 0.0; }

// Effective opacity and scale of every primitive once the mask is applied.
// Base entries pass through unchanged.
struct MaskedView {
    std::vector<double> opacity;
    std::vector<Vec3> scale;
    std::vector<double> gate;
};

MaskedView apply_mask(const GaussianSet& set, const InheritanceMask& mask);

// Deletes var primitives whose gate is closed.
GaussianSet finalize_mask(const GaussianSet& set, const InheritanceMask& mask);

// Lossless in-memory state (f64 fields).
std::vector<uint8_t> snapshot(const GaussianSet& set);
GaussianSet restore(const std::vector<uint8_t>& state);

// Rounds every parameter to f32, the checkpoint precision.
void round_to_f32(GaussianSet& set);

// Checkpoint file: header, f32 primitive records, then optional tagged
// sections (4-byte tag, u32 length, payload).
struct Checkpoint {
    GaussianSet set;
    std::map<std::string, std::vector<uint8_t>> sections;
};

std::vector<uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<uint8_t>& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Label with the largest identity component, ties to the lowest label.
int identity_label(const GaussianPrimitive& g);

}  // namespace dass
