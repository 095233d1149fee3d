#include "dass/optim.hpp"

#include "dass/error.hpp"

#include <cmath>

namespace dass {

ParamGroup::ParamGroup(std::string name_, std::vector<double> init, double lr_, double eps_)
    : name(std::move(name_)), params(std::move(init)), lr(lr_), eps(eps_) {
    m.assign(params.size(), 0.0);
    v.assign(params.size(), 0.0);
}

void ParamGroup::keep_rows(const std::vector<bool>& keep, int stride) {
    if (keep.size() * stride != params.size()) throw Error(name + ": keep mask does not match rows");
    size_t dst = 0;
    for (size_t r = 0; r < keep.size(); ++r) {
        if (!keep[r]) continue;
        for (int k = 0; k < stride; ++k) {
            const size_t s = r * stride + k;
            params[dst] = params[s];
            m[dst] = m[s];
            v[dst] = v[s];
            ++dst;
        }
    }
    params.resize(dst);
    m.resize(dst);
    v.resize(dst);
}

void ParamGroup::append(std::span<const double> values) {
    params.insert(params.end(), values.begin(), values.end());
    m.resize(params.size(), 0.0);
    v.resize(params.size(), 0.0);
}

void adam_step(ParamGroup& g, std::span<const double> grad) {
    if (grad.size() != g.params.size())
        throw Error("adam_step: gradient length " + std::to_string(grad.size()) + " does not match group '" +
                    g.name + "' of length " + std::to_string(g.params.size()));
    for (double d : grad)
        if (!std::isfinite(d)) throw NumericalError("adam_step: non-finite gradient in group '" + g.name + "'");
    ++g.step;
    const double bc1 = 1.0 - std::pow(g.beta1, static_cast<double>(g.step));
    const double bc2 = 1.0 - std::pow(g.beta2, static_cast<double>(g.step));
    for (size_t i = 0; i < g.params.size(); ++i) {
        g.m[i] = g.beta1 * g.m[i] + (1.0 - g.beta1) * grad[i];
        g.v[i] = g.beta2 * g.v[i] + (1.0 - g.beta2) * grad[i] * grad[i];
        const double mhat = g.m[i] / bc1;
        const double vhat = g.v[i] / bc2;
        g.params[i] -= g.lr * mhat / (std::sqrt(vhat) + g.eps);
    }
}

}  // namespace dass
