#pragma once

#include "dass/dynamics_mask.hpp"
#include "dass/gaussian_optim.hpp"
#include "dass/hash_deform.hpp"
#include "dass/losses.hpp"
#include "dass/stage_densify.hpp"
#include "dass/stage_inherit.hpp"
#include "dass/stage_shift.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dass {

struct InitConfig {
    int iterations = 1500;
    bool from_oracle = false;
    int points = 2000;  // random init only
    double identity_weight = 0.1;
    GaussianLr lr;
    // Vanilla densify/prune, random init only.
    int densify_interval = 100;
    int densify_until = 1000;
    double tau_pos = 2e-4;
    double prune_opacity = 0.005;
};

struct PipelineConfig {
    uint64_t seed = 42;
    std::string data;
    std::string out;

    LossWeights loss;
    InitConfig init;
    InheritConfig inherit;
    bool inherit_enabled = true;
    ShiftConfig shift;
    std::string profile = "n3dv";
    HashGridConfig grid;
    bool warm_start = true;
    MaskParams mask;
    int mask_refresh = kMaskRefreshPeriod;
    std::string flow = "gt";
    bool dynamics_enabled = true;
    DensifyConfig densify;

    void validate() const;
    DatasetProfile dataset_profile() const;

    // Applies one "key = value" assignment; unknown keys are rejected.
    void set(const std::string& key, const std::string& value);
    std::vector<std::string> keys() const;
    std::string get(const std::string& key) const;
};

// Flat text format: one "key = value" per line, '#' starts a comment.
PipelineConfig parse_config(const std::string& text, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {});
std::string dump_config(const PipelineConfig& cfg);

}  // namespace dass
