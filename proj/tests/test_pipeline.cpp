#include "dass/binary_io.hpp"
#include "dass/config.hpp"
#include "dass/error.hpp"
#include "dass/losses.hpp"
#include "dass/pipeline.hpp"
#include "dass/renderer.hpp"
#include "dass/scene_gen.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <set>

using namespace dass;
namespace fs = std::filesystem;

namespace {

SceneScript tiny_script() {
    SceneScript s;
    s.timesteps = 3;
    s.width = s.height = 24;
    s.id_dim = 4;
    s.rig.count = 4;
    SceneObject floor;
    floor.label = 1;
    floor.gaussian_count = 60;
    floor.aabb_lo = Vec3(-1, -1, -0.02);
    floor.aabb_hi = Vec3(1, 1, 0);
    SceneObject mover;
    mover.label = 2;
    mover.gaussian_count = 20;
    mover.aabb_lo = Vec3(-0.5, -0.4, 0);
    mover.aabb_hi = Vec3(-0.1, 0.0, 0.4);
    mover.color = Vec3(0.9, 0.1, 0.1);
    mover.motion.kind = MotionKind::Linear;
    mover.motion.velocity = Vec3(0.1, 0.0, 0.0);
    SceneObject late;
    late.label = 3;
    late.gaussian_count = 10;
    late.aabb_lo = Vec3(0.2, 0.2, 0);
    late.aabb_hi = Vec3(0.6, 0.6, 0.3);
    late.color = Vec3(0.1, 0.2, 0.9);
    late.appear_at = 2;
    s.objects = {floor, mover, late};
    return s;
}

const fs::path& tiny_data() {
    static const fs::path dir = [] {
        const fs::path d = testutil::temp_dir("tiny_data");
        generate(tiny_script(), d);
        return d;
    }();
    return dir;
}

PipelineConfig tiny_config() {
    PipelineConfig cfg;
    cfg.profile = "meetroom";
    cfg.grid.levels = 4;
    cfg.grid.finest_resolution = 64;
    cfg.grid.mlp_hidden = 16;
    cfg.init.from_oracle = true;
    cfg.init.iterations = 30;
    cfg.inherit.steps = 4;
    cfg.shift.steps = 6;
    cfg.densify.steps = 6;
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(DASS_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(SceneScript, DefaultScriptShape) {
    const SceneScript s = default_script();
    EXPECT_NO_THROW(s.validate());
    EXPECT_EQ(s.seed, 42u);
    EXPECT_EQ(s.timesteps, 20);
    EXPECT_EQ(s.width, 128);
    EXPECT_EQ(s.height, 128);
    EXPECT_EQ(s.rig.count, 9);
    ASSERT_EQ(s.objects.size(), 3u);
    int total = 0;
    for (const auto& o : s.objects) total += o.gaussian_count;
    EXPECT_EQ(total, 2000);
    EXPECT_EQ(s.objects[0].motion.kind, MotionKind::Static);
    EXPECT_EQ(s.objects[1].motion.kind, MotionKind::Linear);
    EXPECT_EQ(s.objects[2].appear_at, 8);
    EXPECT_EQ(s.cameras().size(), 9u);
}

TEST(SceneScript, JsonRoundTripAndErrors) {
    const SceneScript s = tiny_script();
    const std::string j = script_to_json(s);
    EXPECT_EQ(script_to_json(script_from_json(j)), j);
    EXPECT_THROW(script_from_json("{not json"), DataError);
    SceneScript bad = s;
    bad.objects[1].label = 1;
    EXPECT_THROW(bad.validate(), DataError);
    bad = s;
    bad.objects[1].motion.kind = MotionKind::Static;
    EXPECT_THROW(bad.validate(), DataError);
}

TEST(SceneScript, CamerasLookAtTarget) {
    const SceneScript s = tiny_script();
    for (const Camera& c : s.cameras()) {
        const auto p = project_position(c, s.rig.target);
        EXPECT_NEAR(p.px, (s.width - 1) / 2.0, 0.51);
        EXPECT_NEAR(p.py, (s.height - 1) / 2.0, 0.51);
    }
}

TEST(Oracle, DeterministicAndMoving) {
    const SceneScript s = tiny_script();
    const OracleScene a = sample_oracle(s), b = sample_oracle(s);
    EXPECT_EQ(snapshot(a.rest), snapshot(b.rest));
    std::vector<size_t> ids0, ids2;
    const GaussianSet t0 = oracle_at(s, a, 0, &ids0);
    const GaussianSet t2 = oracle_at(s, a, 2, &ids2);
    EXPECT_EQ(t0.size(), 80u);
    EXPECT_EQ(t2.size(), 90u);
    for (size_t i = 0; i < t0.size(); ++i) {
        const int obj = a.object_of[ids0[i]];
        EXPECT_EQ(identity_label(t0[i]), s.objects[obj].label);
        EXPECT_TRUE(t0.var.empty());
    }
    for (size_t i = 0; i < t2.size(); ++i) {
        const size_t r = ids2[i];
        const Vec3 expect = a.rest[r].position + (a.object_of[r] == 1 ? Vec3(0.2, 0, 0) : Vec3::Zero());
        EXPECT_NEAR((t2[i].position - expect).norm(), 0.0, 1e-6);
    }
}

TEST(Generate, LayoutLabelsAndFlow) {
    const fs::path& d = tiny_data();
    const StreamDataset data(d);
    EXPECT_EQ(data.timesteps(), 3);
    EXPECT_EQ(data.training_views(), (std::vector<int>{1, 2, 3}));
    for (int v = 0; v < 4; ++v)
        for (int t = 0; t < 3; ++t) {
            EXPECT_TRUE(fs::exists(StreamDataset::rgb_path(d, v, t)));
            EXPECT_TRUE(fs::exists(StreamDataset::flow_path(d, v, t)));
            EXPECT_TRUE(fs::exists(StreamDataset::label_path(d, v, t)));
        }
    for (double f : data.flow(1, 0).data) EXPECT_EQ(f, 0.0);
    std::set<int> before, after;
    for (int v = 0; v < 4; ++v) {
        for (uint8_t l : data.labels(v, 1).labels) before.insert(l);
        for (uint8_t l : data.labels(v, 2).labels) after.insert(l);
    }
    EXPECT_EQ(before.count(3), 0u);
    EXPECT_EQ(after.count(3), 1u);
    EXPECT_EQ(after.count(2), 1u);
}

TEST(Generate, Deterministic) {
    const fs::path other = testutil::temp_dir("tiny_data_again");
    generate(tiny_script(), other);
    for (const auto& e : fs::directory_iterator(tiny_data()))
        EXPECT_EQ(slurp(e.path()), slurp(other / e.path().filename())) << e.path().filename();
}

TEST(Generate, StaticSceneHasZeroFlow) {
    SceneScript s = tiny_script();
    s.objects[1].motion.velocity = Vec3::Zero();
    s.objects.pop_back();
    const fs::path d = testutil::temp_dir("static_data");
    generate(s, d);
    const StreamDataset data(d);
    for (int v = 0; v < 4; ++v)
        for (int t = 0; t < 3; ++t)
            for (double f : data.flow(v, t).data) EXPECT_EQ(f, 0.0);
}

TEST(Config, ParseDumpAndErrors) {
    PipelineConfig cfg = parse_config("# comment\nseed = 7\ninherit.steps = 3\nshift.uniform = true\n");
    EXPECT_EQ(cfg.seed, 7u);
    EXPECT_EQ(cfg.inherit.steps, 3);
    EXPECT_EQ(cfg.shift.mode, ShiftMode::Uniform);
    const PipelineConfig back = parse_config(dump_config(cfg));
    EXPECT_EQ(dump_config(back), dump_config(cfg));
    EXPECT_THROW(parse_config("no.such.key = 1\n"), UsageError);
    EXPECT_THROW(parse_config("seed 7\n"), UsageError);
    EXPECT_THROW(parse_config("inherit.steps = abc\n"), UsageError);
    PipelineConfig bad;
    bad.densify.tau_err = bad.densify.tau_pos;
    EXPECT_THROW(bad.validate(), Error);
    bad = PipelineConfig{};
    bad.loss.lambda_dssim = 1.5;
    EXPECT_THROW(bad.validate(), Error);
}

TEST(Pipeline, OracleEvaluatesToInfinitePsnr) {
    const StreamDataset data(tiny_data());
    for (int t = 0; t < 3; ++t) EXPECT_EQ(evaluate(data, data.oracle(t), t).psnr, kPsnrInfinity);
}

TEST(Pipeline, CameraFocusFindsRingTarget) {
    const auto [c, r] = camera_focus(tiny_script().cameras());
    EXPECT_NEAR(c.norm(), 0.0, 1e-9);
    EXPECT_GT(r, 0.0);
}

TEST(Pipeline, StreamResumeMatchesUninterrupted) {
    const StreamDataset data(tiny_data());
    const PipelineConfig cfg = tiny_config();
    const fs::path root = testutil::temp_dir("stream_resume");
    const GaussianSet g0 = init_t0(data, cfg);
    EXPECT_TRUE(g0.var.empty());
    save_checkpoint(Checkpoint{g0, {}}, root / "g0.bin");

    stream(data, root / "g0.bin", cfg, root / "full");
    stream(data, root / "g0.bin", cfg, root / "again");
    stream(data, root / "g0.bin", cfg, root / "part", StreamOptions{false, 1});
    EXPECT_FALSE(fs::exists(root / "part" / "gauss_2.bin"));
    stream(data, root / "g0.bin", cfg, root / "part", StreamOptions{true, -1});

    for (const char* f : {"metrics.csv", "gauss_1.bin", "gauss_2.bin", "densify_S_2.txt", "deform_hist_2.csv"}) {
        EXPECT_EQ(slurp(root / "full" / f), slurp(root / "again" / f)) << f;
        EXPECT_EQ(slurp(root / "full" / f), slurp(root / "part" / f)) << f;
    }
    const CsvTable m = parse_csv(slurp(root / "full" / "metrics.csv"));
    EXPECT_EQ(m.rows.size(), 3u);
    EXPECT_EQ(list_checkpoints(root / "full").size(), 2u);
    const Checkpoint ck = load_checkpoint(root / "full" / "gauss_2.bin");
    EXPECT_EQ(ck.set.timestep, 2);
    EXPECT_EQ(ck.sections.count("HDYN"), 1u);
    EXPECT_EQ(ck.sections.count("HSTA"), 1u);
}

TEST(Report, SvgHasOnePointPerSample) {
    const std::string metrics = "t,psnr\n0,30\n1,31\n2,29.5\n";
    const std::string timing = "t,total_ms\n0,10\n1,12\n2,11\n";
    const ReportOutput r = make_report(metrics, timing);
    size_t points = 0;
    for (size_t p = r.svg.find("class=\"point\""); p != std::string::npos; p = r.svg.find("class=\"point\"", p + 1))
        ++points;
    EXPECT_EQ(points, 6u);
    EXPECT_NE(r.summary.find("29.5"), std::string::npos);
    EXPECT_THROW(make_report("t\n0\n"), DataError);
}

TEST(Csv, ParsesColumns) {
    const CsvTable t = parse_csv("a,b\n1,2\n3,4\n");
    EXPECT_EQ(t.column("b"), 1);
    EXPECT_EQ(t.numbers("a"), (std::vector<double>{1, 3}));
    EXPECT_EQ(t.column("zz"), -1);
    EXPECT_THROW(t.numbers("zz"), DataError);
}

TEST(Cli, ExitCodes) {
    EXPECT_EQ(run_cli("--help"), 0);
    EXPECT_EQ(run_cli("no-such-command"), 1);
    EXPECT_EQ(run_cli("eval --data /nonexistent/data --ckpts /nonexistent/ckpts"), 2);
    const fs::path d = testutil::temp_dir("cli");
    EXPECT_EQ(run_cli("stream --data " + tiny_data().string() + " --ckpt " + (d / "none.bin").string() + " --out " +
                      (d / "o").string() + " --set bogus.key=1"),
              1);
    EXPECT_EQ(run_cli("render --ckpt " + (d / "missing.bin").string() + " --camera " +
                      StreamDataset::camera_path(tiny_data(), 0).string() + " --out " + (d / "r.ppm").string()),
              2);
}

TEST(Cli, RenderMatchesLibrary) {
    const fs::path d = testutil::temp_dir("cli_render");
    const StreamDataset data(tiny_data());
    const GaussianSet g = data.oracle(1);
    save_checkpoint(Checkpoint{g, {}}, d / "g.bin");
    ASSERT_EQ(run_cli("render --ckpt " + (d / "g.bin").string() + " --camera " +
                      StreamDataset::camera_path(tiny_data(), 2).string() + " --out " + (d / "r.ppm").string()),
              0);
    const Image expect = quantize_8bit(render(data.cameras()[2], load_checkpoint(d / "g.bin").set).rgb);
    EXPECT_EQ(read_ppm(d / "r.ppm").data, expect.data);
}

TEST(Pipeline, RandomInitStartsOnForegroundAndImproves) {
    const StreamDataset data(tiny_data());
    PipelineConfig cfg = tiny_config();
    cfg.init.from_oracle = false;
    cfg.init.points = 40;
    cfg.init.iterations = 0;
    const GaussianSet start = init_t0(data, cfg);
    EXPECT_EQ(start.base.size(), 40u);
    for (int v : data.training_views()) {
        const Camera& cam = data.cameras()[static_cast<size_t>(v)];
        const LabelMap lm = data.labels(v, 0);
        for (const auto& g : start.base) {
            const PixelProjection p = project_position(cam, g.position);
            ASSERT_FALSE(p.behind);
            ASSERT_NE(lm.at(p.py, p.px), 0);
        }
    }
    cfg.init.iterations = 200;
    InitReport rep;
    init_t0(data, cfg, &rep);
    EXPECT_GT(rep.heldout_psnr, evaluate(data, start, 0).psnr);
}
