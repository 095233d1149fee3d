#include "dass/config.hpp"
#include "dass/dynamics_mask.hpp"
#include "dass/hash_deform.hpp"
#include "dass/losses.hpp"
#include "dass/pipeline.hpp"
#include "dass/scene_gen.hpp"
#include "dass/stage_densify.hpp"
#include "dass/stage_inherit.hpp"
#include "test_util.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

using namespace dass;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
    if (!pass) ++failures;
    std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<double> column(const fs::path& csv, const std::string& name) {
    return parse_csv(slurp(csv)).numbers(name);
}

double mean_after_first(const std::vector<double>& v) {
    double s = 0.0;
    for (size_t i = 1; i < v.size(); ++i) s += v[i];
    return s / static_cast<double>(v.size() - 1);
}

void criterion1() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1001);
    int checked = 0, failed = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 3; ++trial) {
        const Camera cam = Camera::look_at(16, 16, 18, 18, Vec3(0.3, -3.0, 1.2), Vec3::Zero(), Vec3::UnitZ());
        GaussianSet set = testutil::random_set(rng, 10, 4, trial == 2 ? 1 : 0, 0.5);
        const testutil::GradCheckResult r = testutil::renderer_grad_check(cam, set, rng);
        checked += r.checked;
        failed += r.failed;
        worst = std::max(worst, r.worst_rel);
    }
    const double secs = seconds_since(t0);
    report(1, failed == 0 && secs < 30.0,
           std::to_string(checked) + " parameters, " + std::to_string(failed) + " outside tolerance, " +
               fmt("%.2f s", secs));
}

void criterion2() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1002);
    double worst = 0.0;
    std::uniform_int_distribution<int> count(1, 32);
    for (int scene = 0; scene < 100; ++scene) {
        const Camera cam = testutil::random_camera(rng, 32, 32);
        const GaussianSet set = testutil::random_set(rng, count(rng), 4, scene % 2);
        const RenderOutput out = render(cam, set);
        const testutil::OracleImage ref = testutil::brute_force_render(cam, set);
        worst = std::max({worst, testutil::max_abs_diff(out.rgb, ref.rgb), testutil::max_abs_diff(out.id_feature, ref.id),
                          testutil::max_abs_diff(out.alpha, ref.alpha)});
    }
    const double secs = seconds_since(t0);
    report(2, worst <= 1e-6 && secs < 60.0, "100 scenes, max deviation " + fmt("%.3g", worst) + fmt(", %.2f s", secs));
}

void criterion3() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1003);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    int pairs = 0;
    while (pairs < 1000) {
        const Camera cam = testutil::random_camera(rng, 64 + 16 * (pairs % 5), 48 + 8 * (pairs % 7));
        const Vec3 p(u(rng), u(rng), u(rng));
        const Eigen::Vector3d pc = cam.world_to_camera.topLeftCorner<3, 3>() * p + cam.world_to_camera.topRightCorner<3, 1>();
        if (pc.z() <= cam.near) continue;
        const double x = cam.fx * pc.x() / pc.z() + cam.cx;
        const double y = cam.fy * pc.y() / pc.z() + cam.cy;
        const PixelProjection pr = project_position(cam, p);
        worst = std::max({worst, std::abs(pr.px - x), std::abs(pr.py - y)});
        ++pairs;
    }
    const double secs = seconds_since(t0);
    report(3, worst <= 0.5 + 1e-9 && secs < 5.0, "1000 pairs, max deviation " + fmt("%.4f px", worst) + fmt(", %.3f s", secs));
}

void criterion4() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1004);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int mismatches = 0;
    for (int inst = 0; inst < 200; ++inst) {
        const size_t n = 1 + static_cast<size_t>(u(rng) * 60);
        std::vector<double> g(n);
        for (double& v : g) v = u(rng) < 0.1 ? 0.0 : 5e-4 * u(rng);
        std::vector<size_t> s_err;
        for (size_t i = 0; i < n; ++i)
            if (u(rng) < 0.4) s_err.push_back(i);
        double tau_pos = 1e-4 + 3e-4 * u(rng);
        double tau_err = tau_pos * u(rng);
        if (inst % 10 == 0) tau_err = tau_pos;
        if (inst % 25 == 1) tau_pos = tau_err = g[0] > 0.0 ? g[0] : 1e-4;
        std::set<size_t> expected;
        for (size_t i = 0; i < n; ++i)
            if (g[i] > tau_pos) expected.insert(i);
        for (size_t i : s_err)
            if (g[i] > tau_err) expected.insert(i);
        const std::vector<size_t> got = select_subset(g, s_err, tau_pos, tau_err);
        if (std::vector<size_t>(expected.begin(), expected.end()) != got) ++mismatches;
        if (tau_err == tau_pos) {
            std::vector<size_t> vanilla;
            for (size_t i = 0; i < n; ++i)
                if (g[i] > tau_pos) vanilla.push_back(i);
            if (vanilla != got) ++mismatches;
        }
    }
    const double secs = seconds_since(t0);
    report(4, mismatches == 0 && secs < 5.0,
           "200 instances, " + std::to_string(mismatches) + " mismatches" + fmt(", %.3f s", secs));
}

void criterion5() {
    std::mt19937_64 rng(1005);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    int render_mismatch = 0;
    for (int trial = 0; trial < 20; ++trial) {
        GaussianSet set = testutil::random_set(rng, 12, 4);
        GaussianSet extra = testutil::random_set(rng, 10, 4);
        set.var = extra.base;
        InheritanceMask mask;
        for (size_t i = 0; i < set.var.size(); ++i) mask.logits.push_back(i % 4 == 0 ? 0.0 : u(rng));
        const Camera cam = testutil::random_camera(rng, 32, 32);
        const RenderOutput masked = render(cam, set, &mask);
        const RenderOutput deleted = render(cam, finalize_mask(set, mask));
        if (masked.rgb.data != deleted.rgb.data || masked.id_feature.data != deleted.id_feature.data ||
            masked.alpha.data != deleted.alpha.data)
            ++render_mismatch;
        const MaskedView view = apply_mask(set, mask);
        for (size_t i = 0; i < set.var.size(); ++i) {
            const size_t k = set.base.size() + i;
            if (view.gate[k] == 0.0 && (view.opacity[k] != 0.0 || view.scale[k] != Vec3::Zero())) ++render_mismatch;
        }
    }
    double worst = 0.0;
    bool binary = true;
    for (int k = 0; k <= 2000; ++k) {
        const double m = -10.0 + 0.01 * k;
        const SteValue s = ste_forward_backward(m);
        binary = binary && (s.forward == 0.0 || s.forward == 1.0) && s.forward == (m >= 0.0 ? 1.0 : 0.0);
        const double e = std::exp(-m);
        worst = std::max(worst, std::abs(s.grad - e / ((1.0 + e) * (1.0 + e))));
    }
    report(5, render_mismatch == 0 && binary && worst <= 1e-9,
           std::to_string(render_mismatch) + " masked/deleted mismatches in 20 scenes, STE forward binary=" +
               (binary ? "yes" : "no") + ", backward deviation " + fmt("%.2g", worst));
}

void criterion6() {
    std::mt19937_64 rng(1006);
    const Aabb box{Vec3(-1.2, -1.2, -0.3), Vec3(1.2, 1.2, 0.6)};
    const auto [dyn, st] = make_dual(box, DatasetProfile::N3DV, 7);
    int identity_fail = 0;
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (int n = 0; n < 1000; ++n) {
        const Vec3 p(u(rng), u(rng), u(rng));
        const Quaternion q = testutil::random_quat(rng);
        for (const DeformField* f : {&dyn, &st}) {
            const DeformResult r = deform(*f, p, q);
            if (r.mu.norm() != 0.0 || r.position != p || !(r.rotation == q.normalized())) ++identity_fail;
        }
    }

    HashGridConfig c;
    c.levels = 3;
    c.table_size = 1u << 10;
    c.base_resolution = 4;
    c.finest_resolution = 16;
    c.mlp_hidden = 8;
    DeformField f(c, Aabb{Vec3::Zero(), Vec3::Ones()}, 9);
    std::uniform_real_distribution<double> w(-0.5, 0.5);
    for (double& v : f.tables()) v = w(rng);
    for (double& v : f.weights()) v = w(rng);
    std::vector<Vec3> pos, wp;
    std::vector<Quaternion> rot;
    std::vector<Vec4> wq;
    std::uniform_real_distribution<double> inside(0.05, 0.95);
    for (int n = 0; n < 4; ++n) {
        pos.emplace_back(inside(rng), inside(rng), inside(rng));
        rot.push_back(testutil::random_quat(rng));
        wp.emplace_back(w(rng), w(rng), w(rng));
        wq.emplace_back(w(rng), w(rng), w(rng), w(rng));
    }
    const auto loss = [&] {
        double s = 0.0;
        for (size_t n = 0; n < pos.size(); ++n) {
            const DeformResult r = deform(f, pos[n], rot[n]);
            s += wp[n].dot(r.position) + wq[n].dot(r.rotation.as_vec());
        }
        return s;
    };
    const FieldGrads g = deform_backward(f, deform_batch(f, pos, rot), wp, wq);
    int checked = 0, failed = 0;
    const auto probe = [&](std::vector<double>& params, const std::vector<double>& grad, size_t i) {
        const double h = 1e-6, keep = params[i];
        params[i] = keep + h;
        const double lp = loss();
        params[i] = keep - h;
        const double lm = loss();
        params[i] = keep;
        ++checked;
        if (!testutil::grad_close(grad[i], (lp - lm) / (2 * h))) ++failed;
    };
    for (size_t i = 0; i < f.weights().size(); ++i) probe(f.weights(), g.weights, i);
    for (size_t i = 0; i < f.tables().size(); ++i)
        if (g.tables[i] != 0.0) probe(f.tables(), g.tables, i);
    report(6, identity_fail == 0 && failed == 0,
           "identity failures " + std::to_string(identity_fail) + " of 2000 probes, gradient " + std::to_string(failed) +
               " of " + std::to_string(checked) + " outside tolerance");
}

void criterion7(const StreamDataset& data, const GaussianSet& g0) {
    const int t = 1;
    std::vector<Camera> cams;
    std::vector<Image> gt_flows, bm_flows;
    for (int v : data.training_views()) {
        cams.push_back(data.cameras()[static_cast<size_t>(v)]);
        gt_flows.push_back(data.flow(v, t));
        bm_flows.push_back(flow_blockmatch(data.rgb(v, t - 1), data.rgb(v, t), 8, 4));
    }
    const auto codebook = one_hot_codebook(data.script().id_dim);
    const MaskParams params;
    const DynamicsMask gt = build_mask(g0, cams, gt_flows, codebook, params, t);
    const DynamicsMask bm = build_mask(g0, cams, bm_flows, codebook, params, t);

    std::set<int> moving;
    for (const auto& o : data.script().objects)
        if (o.motion.kind != MotionKind::Static) moving.insert(o.label);
    // Ground truth: the object of the nearest generator Gaussian.
    const GaussianSet oracle = data.oracle(0);
    size_t tp = 0, pos = 0, fp = 0, neg = 0;
    for (size_t i = 0; i < g0.base.size(); ++i) {
        size_t nearest = 0;
        double best = std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < oracle.base.size(); ++j) {
            const double d = (oracle.base[j].position - g0.base[i].position).squaredNorm();
            if (d < best) {
                best = d;
                nearest = j;
            }
        }
        const bool truth = moving.count(id_to_label(oracle.base[nearest].identity, codebook)) > 0;
        const bool flagged = gt.flags[i] != 0;
        if (truth) {
            ++pos;
            tp += flagged;
        } else {
            ++neg;
            fp += flagged;
        }
    }
    const double recall = pos ? static_cast<double>(tp) / pos : 0.0;
    const double fpr = neg ? static_cast<double>(fp) / neg : 1.0;
    std::string labels;
    for (int l : gt.labels) labels += std::to_string(l) + " ";
    report(7, recall >= 0.9 && fpr <= 0.1 && gt.labels == bm.labels,
           "recall " + fmt("%.3f", recall) + fmt(", false-positive rate %.3f", fpr) + ", labels { " + labels +
               "}, block matching " + (gt.labels == bm.labels ? "agrees" : "disagrees"));
}

PipelineConfig base_config(uint64_t seed) {
    PipelineConfig cfg;
    cfg.seed = seed;
    return cfg;
}

void run_stream(const StreamDataset& data, const fs::path& g0, const PipelineConfig& cfg, const fs::path& out,
                double* secs, const StreamOptions& opts = {}) {
    const auto t0 = Clock::now();
    stream(data, g0, cfg, out, opts);
    if (secs) *secs = seconds_since(t0);
}

// Mean absolute error inside the emerging object's label bounding box,
// averaged over the training views.
double region_error(const StreamDataset& data, const GaussianSet& set, int t, int label) {
    double sum = 0.0;
    size_t count = 0;
    for (int v : data.training_views()) {
        const LabelMap lm = data.labels(v, t);
        int y0 = lm.height, y1 = -1, x0 = lm.width, x1 = -1;
        for (int y = 0; y < lm.height; ++y)
            for (int x = 0; x < lm.width; ++x)
                if (lm.at(y, x) == label) {
                    y0 = std::min(y0, y);
                    y1 = std::max(y1, y);
                    x0 = std::min(x0, x);
                    x1 = std::max(x1, x);
                }
        if (y1 < 0) continue;
        const Image r = render(data.cameras()[static_cast<size_t>(v)], set).rgb;
        const Image e = error_map(r, data.rgb(v, t));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                sum += e.at(y, x);
                ++count;
            }
    }
    return count ? sum / static_cast<double>(count) : 0.0;
}

bool same_bytes(const fs::path& a, const fs::path& b) { return fs::exists(a) && fs::exists(b) && slurp(a) == slurp(b); }

}  // namespace

int main(int argc, char** argv) {
    const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "dass_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);

    criterion1();
    criterion2();
    criterion3();
    criterion4();
    criterion5();
    criterion6();

    try {
        const SceneScript script = default_script();
        const fs::path data_dir = work / "data";
        generate(script, data_dir);
        const StreamDataset data(data_dir);

        const PipelineConfig cfg = base_config(script.seed);
        InitReport init_rep;
        const GaussianSet g0 = init_t0(data, cfg, &init_rep);
        const fs::path g0_path = work / "gauss_0.bin";
        save_checkpoint(Checkpoint{g0, {}}, g0_path);
        std::printf("init: %zu gaussians, held-out psnr %.3f dB, %.1f s\n", g0.base.size(), init_rep.heldout_psnr,
                    init_rep.wall_ms / 1000.0);

        criterion7(data, g0);

        double full_secs = 0.0;
        run_stream(data, g0_path, cfg, work / "full", &full_secs);
        const std::vector<double> psnr = column(work / "full" / "metrics.csv", "psnr");
        const std::vector<double> step_ms = column(work / "full" / "timing.csv", "total_ms");
        const double worst_step = *std::max_element(step_ms.begin(), step_ms.end()) / 1000.0;
        const double mean_full = mean_after_first(psnr);
        report(8, psnr.size() == 20 && psnr[0] - mean_full <= 1.0 && worst_step < 60.0,
               fmt("t0 psnr %.3f dB", psnr[0]) + fmt(", mean t=1..19 %.3f dB", mean_full) +
                   fmt(", drop %.3f dB", psnr[0] - mean_full) + fmt(", slowest timestep %.1f s", worst_step));

        struct Variant {
            std::string name;
            PipelineConfig cfg;
        };
        std::vector<Variant> variants;
        variants.push_back({"no-inherit", cfg});
        variants.back().cfg.inherit_enabled = false;
        variants.push_back({"uniform-shift", cfg});
        variants.back().cfg.shift.mode = ShiftMode::Uniform;
        variants.push_back({"no-error-guidance", cfg});
        variants.back().cfg.densify.error_guidance = false;
        double ablation_secs = full_secs, weakest = 1e30;
        bool ordered = true;
        std::string detail = fmt("full %.3f", mean_full);
        for (const auto& v : variants) {
            double secs = 0.0;
            run_stream(data, g0_path, v.cfg, work / v.name, &secs);
            ablation_secs += secs;
            const double m = mean_after_first(column(work / v.name / "metrics.csv", "psnr"));
            ordered = ordered && mean_full >= m;
            weakest = std::min(weakest, m);
            detail += ", " + v.name + fmt(" %.3f", m);
        }
        report(9, ordered && mean_full - weakest >= 0.1 && ablation_secs < 90 * 60.0,
               detail + fmt(" dB, margin over weakest %.3f dB", mean_full - weakest) +
                   fmt(", %.1f min", ablation_secs / 60.0));

        const int te = 8;
        int emerging = -1;
        for (const auto& o : script.objects)
            if (o.appear_at == te) emerging = o.label;
        StreamState state = load_state(work / "full" / ("gauss_" + std::to_string(te - 1) + ".bin"));
        const StepResult step = advance(state, data, cfg, te);
        const double before = region_error(data, step.shifted, te, emerging);
        const double after = region_error(data, state.set, te, emerging);
        const std::vector<double> spawned = column(work / "full" / "metrics.csv", "spawned");
        const std::vector<double> spawned_ni = column(work / "no-inherit" / "metrics.csv", "spawned");
        const bool recovery = after <= 0.5 * before;
        const bool continuity = spawned[te + 1] < spawned[te] && !(spawned_ni[te + 1] < spawned_ni[te]);
        report(10, recovery && continuity,
               fmt("region error %.4f", before) + fmt(" -> %.4f", after) + fmt(" (%.0f%% drop)", 100.0 * (1.0 - after / before)) +
                   fmt(", spawned t_e %.0f", spawned[te]) + fmt(" t_e+1 %.0f", spawned[te + 1]) +
                   fmt(", no-inherit %.0f", spawned_ni[te]) + fmt(" -> %.0f", spawned_ni[te + 1]));

        run_stream(data, g0_path, cfg, work / "repeat", nullptr);
        const bool repeat = same_bytes(work / "full" / "metrics.csv", work / "repeat" / "metrics.csv");
        run_stream(data, g0_path, cfg, work / "resumed", nullptr, StreamOptions{false, 11});
        run_stream(data, g0_path, cfg, work / "resumed", nullptr, StreamOptions{true, -1});
        int ckpt_mismatch = 0;
        for (int t = 1; t < script.timesteps; ++t) {
            const std::string name = "gauss_" + std::to_string(t) + ".bin";
            if (!same_bytes(work / "full" / name, work / "resumed" / name)) ++ckpt_mismatch;
        }
        const bool resumed_metrics = same_bytes(work / "full" / "metrics.csv", work / "resumed" / "metrics.csv");
        report(11, repeat && ckpt_mismatch == 0 && resumed_metrics,
               std::string("repeat metrics.csv ") + (repeat ? "identical" : "differs") + ", resumed run " +
                   std::to_string(ckpt_mismatch) + " checkpoint mismatches, metrics.csv " +
                   (resumed_metrics ? "identical" : "differs"));
    } catch (const std::exception& e) {
        std::printf("end-to-end criteria aborted: %s\n", e.what());
        ++failures;
    }

    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
