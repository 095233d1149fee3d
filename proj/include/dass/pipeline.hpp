#pragma once

#include "dass/config.hpp"
#include "dass/gaussian_model.hpp"
#include "dass/scene_gen.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace dass {

struct InitReport {
    std::vector<double> losses;
    double heldout_psnr = 0.0;
    double wall_ms = 0.0;
};

// Center and radius of the region all cameras look at (least-squares
// intersection of the optical axes).
std::pair<Vec3, double> camera_focus(const std::vector<Camera>& cams);

// Optimizes the timestep-0 base set. The returned set has an empty var
// partition and frozen identity encodings.
GaussianSet init_t0(const StreamDataset& data, const PipelineConfig& cfg, InitReport* report = nullptr);

// Held-out evaluation of a set at timestep t against the stored frame; the
// render is quantized to 8 bits like the ground truth.
struct EvalResult {
    double psnr = 0.0;
    double dssim = 0.0;
};
EvalResult evaluate(const StreamDataset& data, const GaussianSet& set, int t, int view = -1);

// Model state carried from one timestep to the next.
struct StreamState {
    GaussianSet set;
    DualField fields;
    DynamicsMask mask;
    bool has_mask = false;
};

// State at timestep 0: the base set with fresh deformation fields.
StreamState initial_state(const StreamDataset& data, const GaussianSet& g0, const PipelineConfig& cfg);
StreamState load_state(const std::filesystem::path& ckpt);
void save_state(const StreamState& state, const std::filesystem::path& path);

struct StepResult {
    InheritReport inherit;
    ShiftReport shift;
    DensifyReport densify;
    GaussianSet shifted;  // after stage 2, before densification
    std::vector<double> position_grads;
    double load_ms = 0.0, mask_ms = 0.0, inherit_ms = 0.0, shift_ms = 0.0, densify_ms = 0.0;
};

// Mask refresh and the three stages of timestep t, applied to `state`.
StepResult advance(StreamState& state, const StreamDataset& data, const PipelineConfig& cfg, int t);

struct StreamOptions {
    bool resume = false;
    int stop_after = -1;  // last timestep to run, -1 for all
};

// Runs timesteps 1..T-1 from the timestep-0 checkpoint, writing
// gauss_<t>.bin, metrics.csv, timing.csv and metrics_<t>.csv into `out`.
void stream(const StreamDataset& data, const std::filesystem::path& g0, const PipelineConfig& cfg,
            const std::filesystem::path& out, const StreamOptions& opts = {});

// Checkpoints gauss_<t>.bin found in `dir`, sorted by t.
std::vector<std::pair<int, std::filesystem::path>> list_checkpoints(const std::filesystem::path& dir);

// eval.csv rows (t, psnr, dssim) for every checkpoint in `ckpt_dir`.
std::string eval_table(const StreamDataset& data, const std::filesystem::path& ckpt_dir, int view = -1);

// Mean/min/max summary plus an SVG with PSNR and time line plots. The time
// series comes from `timing` when given.
struct ReportOutput {
    std::string summary;
    std::string svg;
};
ReportOutput make_report(const std::string& metrics_csv, const std::string& timing_csv = "");

// Simple CSV reader used by report and tests: header plus rows of fields.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;
    std::vector<double> numbers(const std::string& name) const;
};
CsvTable parse_csv(const std::string& text);

}  // namespace dass
