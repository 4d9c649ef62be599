#pragma once

#include <pwg/diff.hpp>

#include <cmath>

namespace pwg {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam update, in place. Moments and the step counter advance even
// for a zero gradient, but entries whose gradient is exactly zero keep their value.
// The gradient is cleared afterwards.
template <typename T>
void adam_step(Parameter<T> &p, const AdamConfig &cfg) {
    if (!(cfg.lr > 0.0)) throw ArgumentError("adam_step: learning rate must be > 0");
    for (T g : p.grad)
        if (!std::isfinite(g)) throw ArgumentError("adam_step: non-finite gradient in " + p.name);
    ++p.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.step));
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    for (std::size_t i = 0; i < p.size(); ++i) {
        const T g = p.grad[i];
        p.m[i] = b1 * p.m[i] + (T(1) - b1) * g;
        p.v[i] = b2 * p.v[i] + (T(1) - b2) * g * g;
        if (g == T(0)) continue;
        const T m_hat = p.m[i] / static_cast<T>(c1);
        const T v_hat = p.v[i] / static_cast<T>(c2);
        p.value[i] -= static_cast<T>(cfg.lr) * m_hat / (std::sqrt(v_hat) + static_cast<T>(cfg.eps));
    }
    p.zero_grad();
}

template <typename T>
void adam_step(Parameter<T> &p, double lr) {
    adam_step(p, AdamConfig{.lr = lr});
}

}  // namespace pwg
