#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace pwg {

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    // Check at most this many coordinates (0 = all), chosen by `seed`.
    std::size_t max_coords = 0;
    std::uint64_t seed = 0;
    // Optional activation-pattern probe (e.g. ReLU sign bits). A coordinate whose +-step
    // perturbation changes the pattern straddles a kink, where central differences do not
    // estimate the derivative; such coordinates are skipped and counted.
    std::function<std::vector<std::uint8_t>(std::span<const double>)> pattern;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
    std::size_t skipped = 0;
    bool passed = false;
};

using ScalarFn = std::function<double(std::span<const double>)>;
using GradientFn = std::function<std::vector<double>(std::span<const double>)>;

// Compares `gradient(point)` to central differences of `value`. The relative error of
// coordinate i is |a_i - n_i| / max(|a_i|, |n_i|, 1e-3 * max_j |a_j|, 1e-12), so
// coordinates far below the gradient's scale are judged against that scale.
GradCheckReport grad_check(const ScalarFn &value, const GradientFn &gradient, std::span<const double> point,
                           const GradCheckOptions &opts = {});

}  // namespace pwg
