#pragma once

#include <cmath>

namespace dass {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double sigmoid_grad(double x) {
    const double s = sigmoid(x);
    return s * (1.0 - s);
}
inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace dass
