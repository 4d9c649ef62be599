#include <pwg/gradcheck.hpp>

#include <pwg/rng.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pwg {

GradCheckReport grad_check(const ScalarFn &value, const GradientFn &gradient, std::span<const double> point,
                           const GradCheckOptions &opts) {
    const std::vector<double> analytic = gradient(point);
    std::vector<double> x(point.begin(), point.end());

    std::vector<std::size_t> coords(x.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (opts.max_coords != 0 && opts.max_coords < coords.size()) {
        Rng rng(opts.seed);
        for (std::size_t i = 0; i < opts.max_coords; ++i)
            std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
        coords.resize(opts.max_coords);
        std::sort(coords.begin(), coords.end());
    }

    double scale = 0.0;
    for (double a : analytic) scale = std::max(scale, std::abs(a));
    const double floor = std::max(1e-3 * scale, 1e-12);

    std::vector<std::uint8_t> base;
    if (opts.pattern) base = opts.pattern(x);

    GradCheckReport report;
    for (std::size_t i : coords) {
        const double orig = x[i];
        x[i] = orig + opts.step;
        const double fp = value(x);
        const bool kink_p = opts.pattern && opts.pattern(x) != base;
        x[i] = orig - opts.step;
        const double fm = value(x);
        const bool kink_m = opts.pattern && opts.pattern(x) != base;
        x[i] = orig;
        if (kink_p || kink_m) {
            ++report.skipped;
            continue;
        }
        const double numeric = (fp - fm) / (2.0 * opts.step);
        const double abs_err = std::abs(analytic[i] - numeric);
        const double rel = abs_err / std::max({std::abs(analytic[i]), std::abs(numeric), floor});
        if (rel > report.max_rel_error || !std::isfinite(rel)) {
            report.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
            report.worst_index = i;
        }
        report.max_abs_error = std::max(report.max_abs_error, abs_err);
        ++report.checked;
    }
    report.passed = report.checked > 0 && report.max_rel_error < opts.tolerance;
    return report;
}

}  // namespace pwg
