#pragma once

#include <span>
#include <string>
#include <vector>

namespace dass {

struct ParamGroup {
    std::string name;
    std::vector<double> params;
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    ParamGroup() = default;
    ParamGroup(std::string name, std::vector<double> init, double lr, double eps = 1e-8);

    // Keeps rows (of `stride` entries each) whose flag is set, moments included.
    void keep_rows(const std::vector<bool>& keep, int stride);
    // Appends rows with zeroed moments.
    void append(std::span<const double> values);
};

// Bias-corrected Adam update in place. Throws on length mismatch or a
// non-finite gradient.
void adam_step(ParamGroup& group, std::span<const double> grad);

}  // namespace dass
