#include "dass/stage_densify.hpp"

#include "dass/error.hpp"
#include "dass/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>

namespace dass {

void DensifyConfig::validate() const {
    if (!(tau_pos > 0.0) || !(tau_err > 0.0) || !(gamma_err > 0.0) || !(prune_opacity > 0.0))
        throw UsageError("densify thresholds must be positive");
    if (!(tau_err < tau_pos)) throw UsageError("densify.tau_err must be smaller than densify.tau_pos");
    if (steps < 0 || spawn_count < 0 || prune_interval < 1) throw UsageError("densify step counts out of range");
    if (!(scale_shrink > 0.0)) throw UsageError("densify.scale_shrink must be positive");
    if (!(spawn_opacity > 0.0 && spawn_opacity < 1.0)) throw UsageError("densify.spawn_opacity must lie in (0,1)");
    if (!(var_cap_fraction >= 0.0)) throw UsageError("densify.var_cap_fraction must be >= 0");
    if (!(position_lr_final > 0.0 && position_lr_final <= 1.0)) throw UsageError("densify.position_lr_final must lie in (0,1]");
    lr.validate();
}

BinaryMap binarize_errors(const Image& error, double gamma) {
    if (error.channels != 1) throw Error("binarize_errors: expected a single-channel map");
    BinaryMap out(error.height, error.width);
    for (size_t p = 0; p < error.pixels(); ++p) out.values[p] = error.data[p] > gamma ? 1 : 0;
    return out;
}

std::vector<size_t> error_subsets(const GaussianSet& set, const std::vector<Camera>& cams,
                                  const std::vector<BinaryMap>& maps) {
    if (cams.size() != maps.size()) throw Error("error_subsets: one map per camera required");
    std::vector<size_t> out;
    for (size_t n = 0; n < set.base.size(); ++n) {
        for (size_t v = 0; v < cams.size(); ++v) {
            const PixelProjection pp = project_position(cams[v], set.base[n].position);
            if (pp.behind || pp.px < 0 || pp.py < 0 || pp.px >= maps[v].width || pp.py >= maps[v].height) continue;
            if (maps[v].at(pp.py, pp.px)) {
                out.push_back(n);
                break;
            }
        }
    }
    return out;
}

std::vector<size_t> select_subset(std::span<const double> grad, const std::vector<size_t>& s_err, double tau_pos,
                                  double tau_err) {
    std::vector<uint8_t> in(grad.size(), 0);
    for (size_t n = 0; n < grad.size(); ++n)
        if (grad[n] > tau_pos) in[n] = 1;
    for (size_t n : s_err) {
        if (n >= grad.size()) throw Error("select_subset: error index out of range");
        if (grad[n] > tau_err) in[n] = 1;
    }
    std::vector<size_t> out;
    for (size_t n = 0; n < grad.size(); ++n)
        if (in[n]) out.push_back(n);
    return out;
}

size_t spawn(GaussianSet& set, const std::vector<size_t>& selected, const DensifyConfig& cfg, std::mt19937_64& rng,
             size_t cap, bool* capped) {
    std::normal_distribution<double> normal(0.0, 1.0);
    size_t added = 0;
    if (capped) *capped = false;
    const double shrink = std::log(cfg.scale_shrink);
    for (size_t n : selected) {
        if (n >= set.base.size()) throw Error("spawn: selection must index base primitives");
        const GaussianPrimitive& parent = set.base[n];
        const Mat3 m = quat_to_rotmat(parent.rotation) * parent.scale().asDiagonal();
        for (int k = 0; k < cfg.spawn_count; ++k) {
            if (set.var.size() >= cap) {
                if (capped) *capped = true;
                return added;
            }
            const Vec3 z(normal(rng), normal(rng), normal(rng));
            GaussianPrimitive child = parent;
            child.position = parent.position + m * z;
            child.log_scale = parent.log_scale.array() - shrink;
            child.logit_opacity = logit(cfg.spawn_opacity);
            child.dynamic = true;
            set.var.push_back(std::move(child));
            ++added;
        }
    }
    return added;
}

namespace {

size_t prune(GaussianSet& set, GaussianOptimizer& opt, double threshold) {
    std::vector<bool> keep(set.var.size());
    std::vector<GaussianPrimitive> kept;
    for (size_t j = 0; j < set.var.size(); ++j) {
        keep[j] = set.var[j].opacity() >= threshold;
        if (keep[j]) kept.push_back(std::move(set.var[j]));
    }
    const size_t removed = set.var.size() - kept.size();
    set.var = std::move(kept);
    opt.keep(keep);
    return removed;
}

}  // namespace

GaussianSet run_densify(const GaussianSet& set, const Frames& frames, const std::vector<double>& grads,
                        const std::vector<Image>& error_maps, const DensifyConfig& cfg, const LossWeights& weights,
                        double scene_extent, int timestep, uint64_t seed, DensifyReport* report) {
    cfg.validate();
    if (frames.size() == 0) throw DataError("densify: no training views");
    if (error_maps.size() != frames.size()) throw Error("densify: one error map per training view required");
    if (grads.size() < set.base.size()) throw Error("densify: positional statistic does not cover the base set");
    DensifyReport local;
    DensifyReport& rep = report ? *report : local;
    rep = DensifyReport{};

    if (cfg.error_guidance) {
        std::vector<BinaryMap> maps;
        for (const auto& e : error_maps) maps.push_back(binarize_errors(e, cfg.gamma_err));
        rep.error_set = error_subsets(set, frames.cams, maps);
    }
    rep.selected = select_subset(std::span<const double>(grads.data(), set.base.size()), rep.error_set, cfg.tau_pos,
                                 cfg.tau_err);

    GaussianSet out = set;
    auto spawn_rng = make_rng(seed, static_cast<uint64_t>(timestep), kStageSpawn);
    const size_t cap = static_cast<size_t>(std::floor(cfg.var_cap_fraction * static_cast<double>(set.base.size())));
    rep.spawned = spawn(out, rep.selected, cfg, spawn_rng, cap, &rep.capped);
    if (rep.capped)
        std::cerr << "warning: t=" << timestep << " var cap of " << cap << " reached, spawning stopped\n";

    auto rng = make_rng(seed, static_cast<uint64_t>(timestep), kStageDensify);
    GaussianOptimizer opt(out.var, cfg.lr, scene_extent, false);
    for (int step = 0; step < cfg.steps && !out.var.empty(); ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        const size_t v = pick_view(rng, frames.size());
        if (cfg.steps > 1)
            opt.set_position_lr_factor(std::pow(cfg.position_lr_final, static_cast<double>(step) / (cfg.steps - 1)));
        const RenderOutput r = render(frames.cams[v], out);
        const LossResult loss = fidelity_loss(r.rgb, frames.images[v], weights);
        if (!std::isfinite(loss.value))
            throw NumericalError("densify: non-finite loss at step " + std::to_string(step));
        const GaussianGrads g = backward(r, loss.grad);
        opt.step(out.var, g, out.base.size());
        if ((step + 1) % cfg.prune_interval == 0) rep.pruned += prune(out, opt, cfg.prune_opacity);
        rep.losses.push_back(loss.value);
        rep.psnrs.push_back(psnr(r.rgb, frames.images[v]));
        rep.step_ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    rep.pruned += prune(out, opt, cfg.prune_opacity);
    rep.final_var = out.var.size();
    return out;
}

}  // namespace dass
