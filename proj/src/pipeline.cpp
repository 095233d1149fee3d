#include "dass/pipeline.hpp"

#include "dass/error.hpp"
#include "dass/rng.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <regex>
#include <sstream>

namespace dass {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string num(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string ms(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

// 1.1 x the largest camera distance from the rig centroid.
double scene_extent(const std::vector<Camera>& cams) {
    Vec3 mean = Vec3::Zero();
    for (const auto& c : cams) mean += c.center();
    mean /= static_cast<double>(cams.size());
    double r = 0.0;
    for (const auto& c : cams) r = std::max(r, (c.center() - mean).norm());
    return 1.1 * std::max(r, 1e-6);
}

Frames load_frames(const StreamDataset& data, int t) {
    Frames f;
    for (int v : data.training_views()) {
        f.cams.push_back(data.cameras()[static_cast<size_t>(v)]);
        f.images.push_back(data.rgb(v, t));
    }
    return f;
}

void round_field(DeformField& f) {
    for (double& v : f.tables()) v = static_cast<float>(v);
    for (double& v : f.weights()) v = static_cast<float>(v);
}

DualField fresh_fields(const Aabb& box, const PipelineConfig& cfg, int t) {
    auto [dyn, st] = make_dual(box, cfg.dataset_profile(), derive_seed(cfg.seed, static_cast<uint64_t>(t), kStageField),
                               cfg.grid);
    return {std::move(dyn), std::move(st)};
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void append_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

// Keeps the header and rows whose first field (timestep) is <= last.
void truncate_csv(const fs::path& path, int last) {
    if (!fs::exists(path)) return;
    std::istringstream in(read_text(path));
    std::string line, out;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (header || std::stoi(line.substr(0, line.find(','))) <= last) out += line + "\n";
        header = false;
    }
    write_text(path, out);
}

const char* kMetricsHeader =
    "t,psnr,dssim,n_base,n_var,inherited,dropped,dynamic,error_set,selected,spawned,pruned,shift_loss,densify_loss\n";
const char* kTimingHeader = "t,load_ms,mask_ms,inherit_ms,shift_ms,densify_ms,eval_ms,save_ms,total_ms\n";

// Splits selected base primitives into two shrunken children and drops
// transparent ones. Used only while initializing from random points.
void init_densify(GaussianSet& set, const GradAccumulator& acc, const InitConfig& cfg, std::mt19937_64& rng) {
    std::vector<GaussianPrimitive> next;
    std::normal_distribution<double> normal(0.0, 1.0);
    const size_t cap = static_cast<size_t>(3 * cfg.points);
    for (size_t n = 0; n < set.base.size(); ++n) {
        const GaussianPrimitive& g = set.base[n];
        if (g.opacity() < cfg.prune_opacity) continue;
        if (acc.average(n) > cfg.tau_pos && set.base.size() + next.size() < cap) {
            const Mat3 m = quat_to_rotmat(g.rotation) * g.scale().asDiagonal();
            for (int k = 0; k < 2; ++k) {
                GaussianPrimitive c = g;
                c.position = g.position + m * Vec3(normal(rng), normal(rng), normal(rng));
                c.log_scale = g.log_scale.array() - std::log(1.6);
                next.push_back(std::move(c));
            }
        } else {
            next.push_back(g);
        }
    }
    set.base = std::move(next);
}

}  // namespace

std::pair<Vec3, double> camera_focus(const std::vector<Camera>& cams) {
    if (cams.empty()) throw DataError("camera_focus: no cameras");
    Mat3 a = Mat3::Zero();
    Vec3 b = Vec3::Zero();
    for (const auto& c : cams) {
        const Vec3 d = c.rotation().row(2).transpose().normalized();
        const Mat3 p = Mat3::Identity() - d * d.transpose();
        a += p;
        b += p * c.center();
    }
    Vec3 center = a.ldlt().solve(b);
    if (!center.allFinite()) center = Vec3::Zero();
    double dist = 0.0, half = 0.0;
    for (const auto& c : cams) {
        dist += (c.center() - center).norm();
        half += 0.5 * c.width / c.fx;
    }
    return {center, dist / cams.size() * half / cams.size()};
}

GaussianSet init_t0(const StreamDataset& data, const PipelineConfig& cfg, InitReport* report) {
    cfg.validate();
    const auto t_start = Clock::now();
    InitReport local;
    InitReport& rep = report ? *report : local;
    rep = InitReport{};

    const Frames frames = load_frames(data, 0);
    std::vector<LabelMap> labels;
    for (int v : data.training_views()) labels.push_back(data.labels(v, 0));
    const double extent = scene_extent(data.cameras());
    auto rng = make_rng(cfg.seed, 0, kStageInit);

    GaussianSet set;
    set.id_dim = data.script().id_dim;
    set.sh_degree = 0;
    if (cfg.init.from_oracle) {
        const GaussianSet oracle = data.oracle(0);
        for (const auto& o : oracle.base) {
            GaussianPrimitive g = set.make_primitive();
            g.position = o.position;
            g.rotation = o.rotation;
            g.log_scale = o.log_scale;
            set.base.push_back(std::move(g));
        }
    } else {
        const auto [center, radius] = camera_focus(data.cameras());
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        // Keep candidates that land on foreground in every training view,
        // colored by the mean of the pixels they project to.
        const auto carve = [&](const Vec3& p, Vec3& color) {
            color = Vec3::Zero();
            for (size_t v = 0; v < frames.size(); ++v) {
                const PixelProjection pr = project_position(frames.cams[v], p);
                if (pr.behind || pr.px < 0 || pr.py < 0 || pr.px >= labels[v].width || pr.py >= labels[v].height ||
                    labels[v].at(pr.py, pr.px) == 0)
                    return false;
                for (int c = 0; c < 3; ++c) color[c] += frames.images[v].at(pr.py, pr.px, c);
            }
            color /= static_cast<double>(frames.size());
            return true;
        };
        std::vector<std::pair<Vec3, Vec3>> accepted;
        const long max_draws = 1000L * cfg.init.points;
        for (long d = 0; d < max_draws && accepted.size() < static_cast<size_t>(cfg.init.points); ++d) {
            const Vec3 p = center + radius * Vec3(u(rng), u(rng), u(rng));
            Vec3 color;
            if (carve(p, color)) accepted.emplace_back(p, color);
        }
        if (accepted.empty()) throw DataError("init: no random point projects onto foreground in every view");
        for (size_t i = 0; i < accepted.size(); ++i) {
            const auto& [p, color] = accepted[i];
            std::array<double, 3> nearest;
            nearest.fill(std::numeric_limits<double>::infinity());
            for (size_t j = 0; j < accepted.size(); ++j) {
                if (j == i) continue;
                const double d = (accepted[j].first - p).norm();
                if (d < nearest[2]) {
                    nearest[2] = d;
                    std::sort(nearest.begin(), nearest.end());
                }
            }
            double spacing = 0.0;
            int found = 0;
            for (double d : nearest)
                if (std::isfinite(d)) spacing += d, ++found;
            spacing = found ? spacing / found : radius;
            GaussianPrimitive g = set.make_primitive();
            g.position = p;
            g.log_scale = Vec3::Constant(std::log(std::max(spacing, 1e-4)));
            g.logit_opacity = logit(0.1);
            for (int c = 0; c < 3; ++c) g.color[c] = rgb_to_sh(color[c]);
            set.base.push_back(std::move(g));
        }
    }

    auto opt = std::make_unique<GaussianOptimizer>(set.base, cfg.init.lr, extent, true);
    GradAccumulator acc;
    acc.reset(set.size());
    const bool densify = !cfg.init.from_oracle;
    for (int it = 0; it < cfg.init.iterations; ++it) {
        const size_t v = pick_view(rng, frames.size());
        const RenderOutput r = render(frames.cams[v], set);
        const LossResult fid = fidelity_loss(r.rgb, frames.images[v], cfg.loss);
        LossResult ce = identity_cross_entropy(r.id_feature, labels[v]);
        for (double& g : ce.grad.data) g *= cfg.init.identity_weight;
        OpacityRegularizer reg = opacity_regularizer(set);
        for (double& g : reg.grad) g *= cfg.loss.lambda_opacity_reg;
        const double loss =
            fid.value + cfg.init.identity_weight * ce.value + cfg.loss.lambda_opacity_reg * reg.value;
        if (!std::isfinite(loss)) throw NumericalError("init: non-finite loss at iteration " + std::to_string(it));
        const GaussianGrads g = backward(r, fid.grad, &ce.grad, densify ? &acc : nullptr);
        opt->step(set.base, g, 0, &reg.grad);
        rep.losses.push_back(loss);
        if (densify && it < cfg.init.densify_until && (it + 1) % cfg.init.densify_interval == 0) {
            init_densify(set, acc, cfg.init, rng);
            opt = std::make_unique<GaussianOptimizer>(set.base, cfg.init.lr, extent, true);
            acc.reset(set.size());
        }
    }
    round_to_f32(set);
    set.timestep = 0;
    rep.heldout_psnr = evaluate(data, set, 0).psnr;
    rep.wall_ms = ms_since(t_start);
    return set;
}

EvalResult evaluate(const StreamDataset& data, const GaussianSet& set, int t, int view) {
    if (view < 0) view = data.held_out_view();
    if (view >= static_cast<int>(data.cameras().size())) throw UsageError("evaluate: view out of range");
    const Image rendered = quantize_8bit(render(data.cameras()[static_cast<size_t>(view)], set).rgb);
    const Image target = data.rgb(view, t);
    return {psnr(rendered, target), dssim(rendered, target)};
}

std::vector<std::pair<int, fs::path>> list_checkpoints(const fs::path& dir) {
    std::vector<std::pair<int, fs::path>> out;
    if (!fs::is_directory(dir)) return out;
    static const std::regex re(R"(gauss_(\d+)\.bin)");
    for (const auto& e : fs::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = e.path().filename().string();
        if (std::regex_match(name, m, re)) out.emplace_back(std::stoi(m[1].str()), e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

StreamState load_state(const fs::path& ckpt) {
    Checkpoint ck = load_checkpoint(ckpt);
    StreamState st;
    st.set = std::move(ck.set);
    if (!ck.sections.count("HDYN") || !ck.sections.count("HSTA"))
        throw DataError("checkpoint " + ckpt.string() + " has no deformation fields");
    st.fields.dyn = DeformField::deserialize(ck.sections["HDYN"]);
    st.fields.st = DeformField::deserialize(ck.sections["HSTA"]);
    if (ck.sections.count("DMSK")) {
        st.mask = deserialize_mask(ck.sections["DMSK"]);
        sync_mask(st.mask, st.set);
        st.has_mask = true;
    }
    return st;
}

void save_state(const StreamState& state, const fs::path& path) {
    Checkpoint ck{state.set, {}};
    ck.sections["HDYN"] = state.fields.dyn.serialize();
    ck.sections["HSTA"] = state.fields.st.serialize();
    if (state.has_mask) ck.sections["DMSK"] = serialize_mask(state.mask);
    save_checkpoint(ck, path);
}

StreamState initial_state(const StreamDataset& data, const GaussianSet& g0, const PipelineConfig& cfg) {
    StreamState st;
    st.set = g0;
    if (st.set.id_dim != data.script().id_dim) throw DataError("checkpoint identity size does not match the dataset");
    st.set.var.clear();
    st.set.timestep = 0;
    std::vector<Vec3> pts;
    for (const auto& g : st.set.base) pts.push_back(g.position);
    st.fields = fresh_fields(Aabb::around(pts, 0.1), cfg, 0);
    round_field(st.fields.dyn);
    round_field(st.fields.st);
    return st;
}

StepResult advance(StreamState& state, const StreamDataset& data, const PipelineConfig& cfg, int t) {
    StepResult res;
    GaussianSet& set = state.set;
    DualField& fields = state.fields;
    DynamicsMask& mask = state.mask;
    const double extent = scene_extent(data.cameras());

    auto t0 = Clock::now();
    const Frames frames = load_frames(data, t);
    res.load_ms = ms_since(t0);

    t0 = Clock::now();
    if (!cfg.dynamics_enabled) {
        for (size_t i = 0; i < set.size(); ++i) set[i].dynamic = false;
    } else if (!state.has_mask || needs_refresh(mask, t, set.size(), cfg.mask_refresh)) {
        std::vector<Image> flows;
        for (size_t k = 0; k < frames.size(); ++k) {
            const int v = data.training_views()[k];
            if (cfg.flow == "gt")
                flows.push_back(data.flow(v, t));
            else
                flows.push_back(flow_blockmatch(data.rgb(v, t - 1), frames.images[k], 8, 4));
        }
        mask = build_mask(set, frames.cams, flows, one_hot_codebook(data.script().id_dim), cfg.mask, t);
        apply_flags(mask, set);
        state.has_mask = true;
    }
    res.mask_ms = ms_since(t0);

    t0 = Clock::now();
    if (cfg.inherit_enabled) {
        set = run_inherit(set, frames, cfg.inherit, cfg.loss, t, cfg.seed, &res.inherit);
    } else {
        res.inherit.dropped = set.var.size();
        set.var.clear();
    }
    if (state.has_mask) sync_mask(mask, set);
    res.inherit_ms = ms_since(t0);

    t0 = Clock::now();
    if (!cfg.warm_start) fields = fresh_fields(fields.dyn.aabb(), cfg, t);
    set = run_shift(set, fields, frames, cfg.shift, cfg.loss, t, cfg.seed, &res.shift);
    res.shifted = set;
    res.shift_ms = ms_since(t0);

    t0 = Clock::now();
    res.position_grads = res.shift.grads.averages();
    set = run_densify(set, frames, res.position_grads, res.shift.error_maps, cfg.densify, cfg.loss, extent, t,
                      cfg.seed, &res.densify);
    if (state.has_mask) sync_mask(mask, set);
    round_to_f32(set);
    round_field(fields.dyn);
    round_field(fields.st);
    set.timestep = t;
    res.densify_ms = ms_since(t0);
    return res;
}

void stream(const StreamDataset& data, const fs::path& g0, const PipelineConfig& cfg, const fs::path& out,
            const StreamOptions& opts) {
    cfg.validate();
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw DataError("cannot create " + out.string() + ": " + ec.message());
    const fs::path metrics_path = out / "metrics.csv";
    const fs::path timing_path = out / "timing.csv";

    StreamState state;
    int start = 1;

    std::vector<std::pair<int, fs::path>> existing;
    if (opts.resume)
        for (const auto& c : list_checkpoints(out))
            if (c.first >= 1) existing.push_back(c);
    if (!existing.empty()) {
        const auto& [k, path] = existing.back();
        state = load_state(path);
        start = k + 1;
        truncate_csv(metrics_path, k);
        truncate_csv(timing_path, k);
        std::cerr << "resuming after t=" << k << "\n";
    } else {
        state = initial_state(data, load_checkpoint(g0).set, cfg);
        const EvalResult e0 = evaluate(data, state.set, 0);
        write_text(metrics_path, kMetricsHeader);
        append_text(metrics_path, "0," + num(e0.psnr) + "," + num(e0.dssim) + "," +
                                      std::to_string(state.set.base.size()) + ",0,0,0,0,0,0,0,0,0,0\n");
        write_text(timing_path, kTimingHeader);
        append_text(timing_path, "0,0,0,0,0,0,0,0,0\n");
    }
    write_text(out / "config.txt", dump_config(cfg));

    const int last = opts.stop_after >= 0 ? std::min(opts.stop_after, data.timesteps() - 1) : data.timesteps() - 1;
    for (int t = start; t <= last; ++t) {
        try {
            const auto t_total = Clock::now();
            const StepResult r = advance(state, data, cfg, t);
            const GaussianSet& set = state.set;

            auto t0 = Clock::now();
            const EvalResult ev = evaluate(data, set, t);
            const double eval_ms = ms_since(t0);

            t0 = Clock::now();
            save_state(state, out / ("gauss_" + std::to_string(t) + ".bin"));

            const InheritReport& irep = r.inherit;
            const ShiftReport& srep = r.shift;
            const DensifyReport& drep = r.densify;
            std::string steps = "stage,step,loss,psnr,inherited,dropped,wall_ms\n";
            for (size_t s = 0; s < irep.losses.size(); ++s)
                steps += "inherit," + std::to_string(s) + "," + num(irep.losses[s]) + "," + num(irep.psnrs[s]) + "," +
                         std::to_string(irep.inherited) + "," + std::to_string(irep.dropped) + "," +
                         ms(irep.step_ms[s]) + "\n";
            if (irep.losses.empty())
                steps += "inherit,-1,,," + std::to_string(irep.inherited) + "," + std::to_string(irep.dropped) + "," +
                         ms(r.inherit_ms) + "\n";
            for (size_t s = 0; s < srep.losses.size(); ++s)
                steps += "shift," + std::to_string(s) + "," + num(srep.losses[s]) + "," + num(srep.psnrs[s]) + ",,," +
                         ms(srep.step_ms[s]) + "\n";
            for (size_t s = 0; s < drep.losses.size(); ++s)
                steps += "densify," + std::to_string(s) + "," + num(drep.losses[s]) + "," + num(drep.psnrs[s]) +
                         ",,," + ms(drep.step_ms[s]) + "\n";
            write_text(out / ("metrics_" + std::to_string(t) + ".csv"), steps);

            std::string sel = "index,grad,error_set\n";
            for (size_t n : drep.selected)
                sel += std::to_string(n) + "," + num(r.position_grads[n]) + "," +
                       (std::binary_search(drep.error_set.begin(), drep.error_set.end(), n) ? "1" : "0") + "\n";
            write_text(out / ("densify_S_" + std::to_string(t) + ".txt"), sel);

            std::string hist = "lo,hi,dynamic,static\n";
            const auto& h = srep.histogram;
            for (size_t b = 0; b < h.dynamic.size(); ++b)
                hist += num(h.edges[b]) + "," + num(h.edges[b + 1]) + "," + std::to_string(h.dynamic[b]) + "," +
                        std::to_string(h.static_[b]) + "\n";
            write_text(out / ("deform_hist_" + std::to_string(t) + ".csv"), hist);

            size_t dynamic = 0;
            for (size_t i = 0; i < set.size(); ++i) dynamic += set[i].dynamic ? 1 : 0;
            append_text(metrics_path,
                        std::to_string(t) + "," + num(ev.psnr) + "," + num(ev.dssim) + "," +
                            std::to_string(set.base.size()) + "," + std::to_string(set.var.size()) + "," +
                            std::to_string(irep.inherited) + "," + std::to_string(irep.dropped) + "," +
                            std::to_string(dynamic) + "," + std::to_string(drep.error_set.size()) + "," +
                            std::to_string(drep.selected.size()) + "," + std::to_string(drep.spawned) + "," +
                            std::to_string(drep.pruned) + "," +
                            num(srep.losses.empty() ? 0.0 : srep.losses.back()) + "," +
                            num(drep.losses.empty() ? 0.0 : drep.losses.back()) + "\n");
            const double save_ms = ms_since(t0);
            append_text(timing_path, std::to_string(t) + "," + ms(r.load_ms) + "," + ms(r.mask_ms) + "," +
                                         ms(r.inherit_ms) + "," + ms(r.shift_ms) + "," + ms(r.densify_ms) + "," +
                                         ms(eval_ms) + "," + ms(save_ms) + "," + ms(ms_since(t_total)) + "\n");
            std::cerr << "t=" << t << " psnr=" << num(ev.psnr) << " var=" << set.var.size()
                      << " spawned=" << drep.spawned << " time=" << ms(ms_since(t_total)) << "ms\n";
        } catch (const NumericalError& e) {
            throw NumericalError("timestep " + std::to_string(t) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError("timestep " + std::to_string(t) + ": " + e.what());
        }
    }
}

std::string eval_table(const StreamDataset& data, const fs::path& ckpt_dir, int view) {
    std::string out = "t,psnr,dssim\n";
    const auto ckpts = list_checkpoints(ckpt_dir);
    if (ckpts.empty()) throw DataError("no gauss_<t>.bin checkpoints in " + ckpt_dir.string());
    for (const auto& [t, path] : ckpts) {
        if (t >= data.timesteps()) throw DataError("checkpoint timestep " + std::to_string(t) + " beyond dataset");
        const EvalResult e = evaluate(data, load_checkpoint(path).set, t, view);
        out += std::to_string(t) + "," + num(e.psnr) + "," + num(e.dssim) + "\n";
    }
    return out;
}

int CsvTable::column(const std::string& name) const {
    for (size_t k = 0; k < header.size(); ++k)
        if (header[k] == name) return static_cast<int>(k);
    return -1;
}

std::vector<double> CsvTable::numbers(const std::string& name) const {
    const int c = column(name);
    if (c < 0) throw DataError("csv: missing column '" + name + "'");
    std::vector<double> out;
    for (const auto& r : rows) {
        if (static_cast<size_t>(c) >= r.size()) throw DataError("csv: short row");
        const std::string& f = r[static_cast<size_t>(c)];
        if (f == "inf")
            out.push_back(kPsnrInfinity);
        else {
            try {
                out.push_back(std::stod(f));
            } catch (const std::exception&) {
                throw DataError("csv: bad number '" + f + "' in column " + name);
            }
        }
    }
    return out;
}

CsvTable parse_csv(const std::string& text) {
    CsvTable table;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (line.back() == ',') fields.emplace_back();
        if (first)
            table.header = std::move(fields);
        else
            table.rows.push_back(std::move(fields));
        first = false;
    }
    if (table.header.empty()) throw DataError("csv: empty input");
    return table;
}

namespace {

// One line plot panel with a dot per sample.
std::string svg_panel(const std::string& id, const std::string& title, const std::vector<double>& xs,
                      std::vector<double> ys, double top) {
    constexpr double w = 560, h = 220, ml = 60, mr = 20, mt = 30, mb = 40;
    for (double& y : ys)
        if (!std::isfinite(y)) y = 100.0;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (!xs.empty()) {
        x0 = *std::min_element(xs.begin(), xs.end());
        x1 = *std::max_element(xs.begin(), xs.end());
        y0 = *std::min_element(ys.begin(), ys.end());
        y1 = *std::max_element(ys.begin(), ys.end());
    }
    if (x1 - x0 < 1e-12) x1 = x0 + 1;
    if (y1 - y0 < 1e-12) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    const auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (w - ml - mr); };
    const auto py = [&](double y) { return top + mt + (1.0 - (y - y0) / (y1 - y0)) * (h - mt - mb); };
    char buf[256];
    std::string s;
    std::snprintf(buf, sizeof buf, "<g id=\"%s\">\n<text x=\"%.1f\" y=\"%.1f\" font-size=\"14\">%s</text>\n",
                  id.c_str(), ml, top + 18, title.c_str());
    s += buf;
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"#999\"/>\n", ml,
                  top + mt, w - ml - mr, h - mt - mb);
    s += buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"4\" y=\"%.1f\" font-size=\"10\">%.3g</text>\n<text x=\"4\" y=\"%.1f\" "
                  "font-size=\"10\">%.3g</text>\n",
                  top + mt + 4, y1, top + h - mb, y0);
    s += buf;
    std::string pts;
    for (size_t k = 0; k < xs.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(xs[k]), py(ys[k]));
        pts += buf;
    }
    s += "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    for (size_t k = 0; k < xs.size(); ++k) {
        std::snprintf(buf, sizeof buf, "<circle class=\"point\" cx=\"%.2f\" cy=\"%.2f\" r=\"2.5\" fill=\"#1f77b4\"/>\n",
                      px(xs[k]), py(ys[k]));
        s += buf;
    }
    return s + "</g>\n";
}

std::string stats(const std::string& name, const std::vector<double>& v) {
    if (v.empty()) return name + ": no data\n";
    double sum = 0.0, lo = v[0], hi = v[0];
    for (double x : v) {
        sum += x;
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    return name + ": mean " + num(sum / v.size()) + ", min " + num(lo) + ", max " + num(hi) + "\n";
}

}  // namespace

ReportOutput make_report(const std::string& metrics_csv, const std::string& timing_csv) {
    const CsvTable m = parse_csv(metrics_csv);
    const auto ts = m.numbers("t");
    const auto ps = m.numbers("psnr");
    ReportOutput r;
    r.summary = "timesteps: " + std::to_string(ts.size()) + "\n" + stats("psnr", ps);
    if (m.column("dssim") >= 0) r.summary += stats("dssim", m.numbers("dssim"));

    std::vector<double> tt, times;
    std::string time_title = "time per timestep (ms)";
    if (!timing_csv.empty()) {
        const CsvTable t = parse_csv(timing_csv);
        tt = t.numbers("t");
        times = t.numbers("total_ms");
        r.summary += stats("total_ms", times);
    } else if (m.column("total_ms") >= 0) {
        tt = ts;
        times = m.numbers("total_ms");
        r.summary += stats("total_ms", times);
    }

    r.svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"560\" height=\"460\" font-family=\"sans-serif\">\n";
    r.svg += svg_panel("psnr", "PSNR (dB) vs timestep", ts, ps, 0);
    r.svg += svg_panel("time", time_title, tt, times, 230);
    r.svg += "</svg>\n";
    return r;
}

}  // namespace dass
