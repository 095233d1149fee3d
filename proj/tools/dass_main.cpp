#include "dass/config.hpp"
#include "dass/error.hpp"
#include "dass/pipeline.hpp"
#include "dass/renderer.hpp"
#include "dass/scene_gen.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace dass;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spill(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("cannot write " + p.string());
    out << text;
}

PipelineConfig make_config(const std::string& file, const std::vector<std::string>& overrides) {
    PipelineConfig cfg;
    if (!file.empty()) cfg = load_config(file);
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Streaming dynamic Gaussian splatting (inherit, shift, densify)"};
    app.require_subcommand(1);

    std::string script_path, out_dir, data_dir, config_path, ckpt, camera_path, metrics_path, timing_path;
    std::vector<std::string> overrides;
    bool from_oracle = false, no_inherit = false, uniform_shift = false, no_error = false, no_dynamics = false;
    bool resume = false;
    int stop_after = -1, view = -1;

    auto* gen = app.add_subcommand("gen-scene", "Generate a synthetic multi-view dataset");
    gen->add_option("--script", script_path, "Scene script JSON (default scene when omitted)");
    gen->add_option("--out", out_dir, "Output directory")->required();

    auto* init = app.add_subcommand("init", "Optimize the timestep-0 representation");
    init->add_option("--data", data_dir, "Dataset directory")->required();
    init->add_option("--config", config_path, "Config file");
    init->add_option("--out", out_dir, "Output directory")->required();
    init->add_flag("--init-from-oracle", from_oracle, "Start from the generator's Gaussian layout");
    init->add_option("--set", overrides, "Config override key=value");

    auto* str = app.add_subcommand("stream", "Run the streaming optimization");
    str->add_option("--data", data_dir, "Dataset directory")->required();
    str->add_option("--ckpt", ckpt, "Timestep-0 checkpoint")->required();
    str->add_option("--config", config_path, "Config file");
    str->add_option("--out", out_dir, "Output directory")->required();
    str->add_flag("--no-inherit", no_inherit, "Drop all densified Gaussians every timestep");
    str->add_flag("--uniform-shift", uniform_shift, "Deform every Gaussian with the high-capacity field");
    str->add_flag("--no-error-guidance", no_error, "Densify with the positional-gradient criterion only");
    str->add_flag("--no-dynamics", no_dynamics, "Treat every Gaussian as static");
    str->add_flag("--resume", resume, "Continue after the last checkpoint in --out");
    str->add_option("--stop-after", stop_after, "Stop after this timestep");
    str->add_option("--set", overrides, "Config override key=value");

    auto* ev = app.add_subcommand("eval", "Evaluate checkpoints on the held-out view");
    ev->add_option("--data", data_dir, "Dataset directory")->required();
    ev->add_option("--ckpts", ckpt, "Directory with gauss_<t>.bin")->required();
    ev->add_option("--view", view, "Camera index (default: held-out)");
    ev->add_option("--out", out_dir, "CSV output file (stdout when omitted)");

    auto* ren = app.add_subcommand("render", "Render a checkpoint from a camera");
    ren->add_option("--ckpt", ckpt, "Checkpoint")->required();
    ren->add_option("--camera", camera_path, "Camera JSON")->required();
    ren->add_option("--out", out_dir, "Output PPM")->required();

    auto* rep = app.add_subcommand("report", "Summarize metrics and plot them");
    rep->add_option("--metrics", metrics_path, "metrics.csv")->required();
    rep->add_option("--timing", timing_path, "timing.csv (default: next to metrics.csv)");
    rep->add_option("--out", out_dir, "Output SVG")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*gen) {
            const SceneScript script = script_path.empty() ? default_script() : load_script(script_path);
            generate(script, out_dir);
            std::cout << "wrote " << script.timesteps << " timesteps x " << script.rig.count << " views to " << out_dir
                      << "\n";
        } else if (*init) {
            PipelineConfig cfg = make_config(config_path, overrides);
            if (from_oracle) cfg.init.from_oracle = true;
            const StreamDataset data(data_dir);
            InitReport report;
            const GaussianSet set = init_t0(data, cfg, &report);
            fs::create_directories(out_dir);
            save_checkpoint(Checkpoint{set, {}}, fs::path(out_dir) / "gauss_0.bin");
            std::string csv = "step,loss\n";
            for (size_t k = 0; k < report.losses.size(); ++k)
                csv += std::to_string(k) + "," + std::to_string(report.losses[k]) + "\n";
            spill(fs::path(out_dir) / "init.csv", csv);
            std::cout << "gaussians " << set.base.size() << ", held-out psnr " << report.heldout_psnr << " dB, "
                      << report.wall_ms / 1000.0 << " s\n";
        } else if (*str) {
            PipelineConfig cfg = make_config(config_path, overrides);
            if (no_inherit) cfg.inherit_enabled = false;
            if (uniform_shift) cfg.shift.mode = ShiftMode::Uniform;
            if (no_error) cfg.densify.error_guidance = false;
            if (no_dynamics) cfg.dynamics_enabled = false;
            const StreamDataset data(data_dir);
            stream(data, ckpt, cfg, out_dir, StreamOptions{resume, stop_after});
        } else if (*ev) {
            const StreamDataset data(data_dir);
            const std::string table = eval_table(data, ckpt, view);
            if (out_dir.empty())
                std::cout << table;
            else
                spill(out_dir, table);
        } else if (*ren) {
            const Checkpoint ck = load_checkpoint(ckpt);
            write_ppm(render(load_camera(camera_path), ck.set).rgb, out_dir);
        } else if (*rep) {
            if (timing_path.empty()) {
                const fs::path guess = fs::path(metrics_path).parent_path() / "timing.csv";
                if (fs::exists(guess)) timing_path = guess.string();
            }
            const ReportOutput r =
                make_report(slurp(metrics_path), timing_path.empty() ? std::string() : slurp(timing_path));
            spill(out_dir, r.svg);
            std::cout << r.summary;
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
