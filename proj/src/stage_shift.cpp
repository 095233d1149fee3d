#include "dass/stage_shift.hpp"

#include "dass/error.hpp"
#include "dass/optim.hpp"
#include "dass/rng.hpp"

#include <chrono>
#include <cmath>

namespace dass {

namespace {

// Primitive indices deformed by `dyn` (first) and by `st` (second).
std::pair<std::vector<size_t>, std::vector<size_t>> split(const GaussianSet& set, ShiftMode mode) {
    std::pair<std::vector<size_t>, std::vector<size_t>> groups;
    for (size_t i = 0; i < set.size(); ++i) {
        if (mode == ShiftMode::Uniform || set[i].dynamic)
            groups.first.push_back(i);
        else
            groups.second.push_back(i);
    }
    return groups;
}

DeformBatch run_group(const DeformField& field, const GaussianSet& set, const std::vector<size_t>& idx) {
    std::vector<Vec3> pos(idx.size());
    std::vector<Quaternion> rot(idx.size());
    for (size_t k = 0; k < idx.size(); ++k) {
        pos[k] = set[idx[k]].position;
        rot[k] = set[idx[k]].rotation;
    }
    return deform_batch(field, pos, rot);
}

void write_back(GaussianSet& out, const DeformBatch& batch, const std::vector<size_t>& idx,
                std::vector<double>* magnitudes) {
    for (size_t k = 0; k < idx.size(); ++k) {
        out[idx[k]].position = batch.results[k].position;
        out[idx[k]].rotation = batch.results[k].rotation;
        if (magnitudes) (*magnitudes)[idx[k]] = batch.results[k].mu.norm();
    }
}

struct FieldOptimizer {
    ParamGroup tables;
    ParamGroup weights;

    FieldOptimizer(const DeformField& f, const ShiftConfig& cfg, const std::string& name)
        : tables(name + ".tables", std::vector<double>(f.tables().size(), 0.0), cfg.lr_tables, 1e-15),
          weights(name + ".mlp", std::vector<double>(f.weights().size(), 0.0), cfg.lr_mlp) {}

    void step(DeformField& f, const FieldGrads& g) {
        // Swap the live parameters in so Adam updates them without copies.
        std::swap(tables.params, f.tables());
        adam_step(tables, g.tables);
        std::swap(tables.params, f.tables());
        std::swap(weights.params, f.weights());
        adam_step(weights, g.weights);
        std::swap(weights.params, f.weights());
    }
};

}  // namespace

void ShiftConfig::validate() const {
    if (steps < 0) throw UsageError("shift.steps must be >= 0");
    if (!(lr_tables > 0.0) || !(lr_mlp > 0.0)) throw UsageError("shift learning rates must be positive");
}

DeformHistogram deformation_histogram(const std::vector<double>& magnitudes, const std::vector<uint8_t>& dynamic,
                                      int bins) {
    if (magnitudes.size() != dynamic.size()) throw Error("deformation_histogram: length mismatch");
    if (bins < 2) throw Error("deformation_histogram: need at least two bins");
    DeformHistogram h;
    double top = 0.0;
    for (double m : magnitudes) top = std::max(top, m);
    top = std::max(top, 10.0 * kHistogramFloor);
    h.edges.push_back(0.0);
    for (int k = 0; k < bins; ++k)
        h.edges.push_back(kHistogramFloor * std::pow(top / kHistogramFloor, static_cast<double>(k) / (bins - 1)));
    h.dynamic.assign(static_cast<size_t>(bins), 0);
    h.static_.assign(static_cast<size_t>(bins), 0);
    for (size_t i = 0; i < magnitudes.size(); ++i) {
        int b = 0;
        while (b + 1 < bins && magnitudes[i] >= h.edges[static_cast<size_t>(b) + 1]) ++b;
        (dynamic[i] ? h.dynamic : h.static_)[static_cast<size_t>(b)] += 1;
    }
    return h;
}

GaussianSet apply_fields(const GaussianSet& set, const DualField& fields, ShiftMode mode) {
    const auto [dyn_idx, st_idx] = split(set, mode);
    GaussianSet out = set;
    write_back(out, run_group(fields.dyn, set, dyn_idx), dyn_idx, nullptr);
    write_back(out, run_group(fields.st, set, st_idx), st_idx, nullptr);
    return out;
}

GaussianSet run_shift(const GaussianSet& set, DualField& fields, const Frames& frames, const ShiftConfig& cfg,
                      const LossWeights& weights, int timestep, uint64_t seed, ShiftReport* report) {
    cfg.validate();
    if (frames.size() == 0) throw DataError("shift: no training views");
    ShiftReport local;
    ShiftReport& rep = report ? *report : local;
    rep = ShiftReport{};
    rep.grads.reset(set.size());

    const auto [dyn_idx, st_idx] = split(set, cfg.mode);
    auto rng = make_rng(seed, static_cast<uint64_t>(timestep), kStageShift);
    FieldOptimizer opt_dyn(fields.dyn, cfg, "field.dyn");
    FieldOptimizer opt_st(fields.st, cfg, "field.st");

    const auto train_group = [&](DeformField& field, FieldOptimizer& opt, const DeformBatch& batch,
                                 const std::vector<size_t>& idx, const GaussianGrads& g) {
        if (idx.empty()) return;
        std::vector<Vec3> dp(idx.size());
        std::vector<Vec4> dq(idx.size());
        for (size_t k = 0; k < idx.size(); ++k) {
            dp[k] = g.position[idx[k]];
            dq[k] = g.rotation[idx[k]];
        }
        opt.step(field, deform_backward(field, batch, dp, dq));
    };

    for (int step = 0; step < cfg.steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        const size_t v = pick_view(rng, frames.size());
        const DeformBatch bd = run_group(fields.dyn, set, dyn_idx);
        const DeformBatch bs = run_group(fields.st, set, st_idx);
        GaussianSet deformed = set;
        write_back(deformed, bd, dyn_idx, nullptr);
        write_back(deformed, bs, st_idx, nullptr);

        const RenderOutput out = render(frames.cams[v], deformed);
        const LossResult loss = fidelity_loss(out.rgb, frames.images[v], weights);
        if (!std::isfinite(loss.value))
            throw NumericalError("shift: non-finite loss at step " + std::to_string(step));
        const GaussianGrads g = backward(out, loss.grad, nullptr, &rep.grads);
        train_group(fields.dyn, opt_dyn, bd, dyn_idx, g);
        train_group(fields.st, opt_st, bs, st_idx, g);

        rep.losses.push_back(loss.value);
        rep.psnrs.push_back(psnr(out.rgb, frames.images[v]));
        rep.step_ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }

    GaussianSet baked = set;
    rep.magnitudes.assign(set.size(), 0.0);
    if (cfg.steps > 0) {
        write_back(baked, run_group(fields.dyn, set, dyn_idx), dyn_idx, &rep.magnitudes);
        write_back(baked, run_group(fields.st, set, st_idx), st_idx, &rep.magnitudes);
    }
    std::vector<uint8_t> flags(set.size());
    for (size_t i = 0; i < set.size(); ++i) flags[i] = set[i].dynamic ? 1 : 0;
    rep.histogram = deformation_histogram(rep.magnitudes, flags);

    rep.error_maps.resize(frames.size());
    for (size_t v = 0; v < frames.size(); ++v)
        rep.error_maps[v] = error_map(render(frames.cams[v], baked).rgb, frames.images[v]);
    return baked;
}

}  // namespace dass
