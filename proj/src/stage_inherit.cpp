#include "dass/stage_inherit.hpp"

#include "dass/error.hpp"
#include "dass/optim.hpp"
#include "dass/rng.hpp"

#include <chrono>

namespace dass {

void InheritConfig::validate() const {
    if (steps < 0) throw UsageError("inherit.steps must be >= 0");
    if (reset_period < 1) throw UsageError("inherit.reset_period must be >= 1");
    if (!(lr > 0.0)) throw UsageError("inherit.lr must be positive");
}

SteValue ste_forward_backward(double m) { return {mask_gate(m), sigmoid_grad(m)}; }

std::vector<double> mask_logit_grads(const GaussianSet& set, const InheritanceMask& mask, const GaussianGrads& grads) {
    if (mask.logits.size() != set.var.size()) throw Error("mask_logit_grads: mask length mismatch");
    if (grads.opacity.size() != set.size()) throw Error("mask_logit_grads: gradient length mismatch");
    std::vector<double> out(set.var.size(), 0.0);
    const size_t nb = set.base.size();
    for (size_t j = 0; j < set.var.size(); ++j) {
        const GaussianPrimitive& g = set.var[j];
        const double dgate = grads.opacity[nb + j] * g.opacity() + grads.scale[nb + j].dot(g.scale());
        out[j] = ste_forward_backward(mask.logits[j]).grad * dgate;
    }
    return out;
}

GaussianSet run_inherit(const GaussianSet& prev, const Frames& frames, const InheritConfig& cfg,
                        const LossWeights& weights, int timestep, uint64_t seed, InheritReport* report) {
    cfg.validate();
    InheritReport local;
    InheritReport& rep = report ? *report : local;
    rep = InheritReport{};

    if (timestep % cfg.reset_period == 0) {
        GaussianSet out = prev;
        rep.reset = true;
        rep.dropped = out.var.size();
        out.var.clear();
        return out;
    }
    if (prev.var.empty()) return prev;
    if (frames.size() == 0) throw DataError("inherit: no training views");

    auto rng = make_rng(seed, static_cast<uint64_t>(timestep), kStageInherit);
    InheritanceMask mask{std::vector<double>(prev.var.size(), cfg.m_init)};
    ParamGroup group("mask", mask.logits, cfg.lr);
    for (int step = 0; step < cfg.steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        const size_t v = pick_view(rng, frames.size());
        const RenderOutput out = render(frames.cams[v], prev, &mask);
        const InheritanceLoss loss = inheritance_loss(out.rgb, frames.images[v], mask.logits, weights);
        if (!std::isfinite(loss.value)) throw NumericalError("inherit: non-finite loss");
        const GaussianGrads grads = backward(out, loss.grad);
        std::vector<double> g = mask_logit_grads(prev, mask, grads);
        for (size_t j = 0; j < g.size(); ++j) g[j] += loss.mask_grad[j];
        adam_step(group, g);
        mask.logits = group.params;
        rep.losses.push_back(loss.value);
        rep.psnrs.push_back(psnr(out.rgb, frames.images[v]));
        rep.step_ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    GaussianSet out = finalize_mask(prev, mask);
    rep.inherited = out.var.size();
    rep.dropped = prev.var.size() - out.var.size();
    return out;
}

}  // namespace dass
