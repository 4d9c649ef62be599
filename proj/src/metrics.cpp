#include <pwg/metrics.hpp>

#include <pwg/preprocess.hpp>

#include <json.hpp>

#include <cmath>

namespace pwg {

namespace {

void require_match(const Image<float> &a, const Image<float> &b, const char *what) {
    require_same_shape(a, b, what);
    if (a.empty()) throw ArgumentError(std::string(what) + ": empty image");
}

// Valid-mode separable filter of one channel.
std::vector<double> filter_valid(const std::vector<double> &src, int h, int w, const std::vector<double> &taps) {
    const int k = static_cast<int>(taps.size());
    const int oh = h - k + 1, ow = w - k + 1;
    std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0;
            for (int i = 0; i < k; ++i) acc += taps[i] * src[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0;
            for (int i = 0; i < k; ++i) acc += taps[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    return out;
}

}  // namespace

double relmse(const Image<float> &estimate, const Image<float> &reference, double eps) {
    require_match(estimate, reference, "relmse");
    double acc = 0;
    for (std::size_t i = 0; i < estimate.size(); ++i) {
        const double e = estimate.vec()[i], r = reference.vec()[i];
        acc += (e - r) * (e - r) / (r * r + eps);
    }
    return acc / static_cast<double>(estimate.size());
}

double smape(const Image<float> &estimate, const Image<float> &reference, double eps) {
    require_match(estimate, reference, "smape");
    double acc = 0;
    for (std::size_t i = 0; i < estimate.size(); ++i) {
        const double e = estimate.vec()[i], r = reference.vec()[i];
        acc += std::abs(e - r) / (std::abs(e) + std::abs(r) + eps);
    }
    return acc / static_cast<double>(estimate.size());
}

double l1_error(const Image<float> &estimate, const Image<float> &reference) {
    require_match(estimate, reference, "l1");
    double acc = 0;
    for (std::size_t i = 0; i < estimate.size(); ++i)
        acc += std::abs(static_cast<double>(estimate.vec()[i]) - reference.vec()[i]);
    return acc / static_cast<double>(estimate.size());
}

double ssim(const Image<float> &estimate, const Image<float> &reference, const SsimOptions &opts) {
    require_match(estimate, reference, "ssim");
    const int h = estimate.height(), w = estimate.width(), k = opts.window;
    if (h < k || w < k) throw ArgumentError("ssim: image smaller than the " + std::to_string(k) + "x" +
                                            std::to_string(k) + " window");
    std::vector<double> taps(k);
    double norm = 0;
    for (int i = 0; i < k; ++i) {
        const double d = i - (k - 1) / 2.0;
        taps[i] = std::exp(-d * d / (2.0 * opts.sigma * opts.sigma));
        norm += taps[i];
    }
    for (auto &t : taps) t /= norm;
    const double c1 = std::pow(opts.k1 * opts.dynamic_range, 2), c2 = std::pow(opts.k2 * opts.dynamic_range, 2);

    const std::size_t n = static_cast<std::size_t>(h) * w;
    double total = 0;
    for (int c = 0; c < estimate.channels(); ++c) {
        std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = estimate.vec()[i * estimate.channels() + c];
            y[i] = reference.vec()[i * reference.channels() + c];
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = filter_valid(x, h, w, taps), my = filter_valid(y, h, w, taps);
        const auto sxx = filter_valid(xx, h, w, taps), syy = filter_valid(yy, h, w, taps);
        const auto sxy = filter_valid(xy, h, w, taps);
        double acc = 0;
        for (std::size_t i = 0; i < mx.size(); ++i) {
            const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cov = sxy[i] - mx[i] * my[i];
            acc += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
                   ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
        }
        total += acc / static_cast<double>(mx.size());
    }
    return total / estimate.channels();
}

double normalized_scene_error(const std::map<std::string, double> &errors,
                              const std::map<std::string, double> &baselines) {
    if (errors.empty()) throw ArgumentError("normalized_scene_error: no scenes");
    if (errors.size() != baselines.size()) throw ArgumentError("normalized_scene_error: scene sets differ");
    double acc = 0;
    for (const auto &[scene, err] : errors) {
        auto it = baselines.find(scene);
        if (it == baselines.end()) throw ArgumentError("normalized_scene_error: no baseline for scene " + scene);
        if (it->second == 0.0) throw ArgumentError("normalized_scene_error: zero baseline for scene " + scene);
        acc += err / it->second;
    }
    return acc / static_cast<double>(errors.size());
}

ShotMetrics evaluate_radiance(const Image<float> &estimate_hdr, const Image<float> &reference_hdr) {
    const Image<float> e = tone_map(estimate_hdr), r = tone_map(reference_hdr);
    ShotMetrics m;
    m.relmse = relmse(e, r);
    m.dssim = dssim(e, r);
    m.smape = smape(e, r);
    m.l1 = l1_error(e, r);
    return m;
}

void MetricReport::finalize() {
    std::size_t ok = 0;
    mean_relmse = mean_dssim = mean_smape = mean_l1 = 0;
    failed = 0;
    for (const auto &s : shots) {
        if (s.error) {
            ++failed;
            continue;
        }
        ++ok;
        mean_relmse += s.relmse;
        mean_dssim += s.dssim;
        mean_smape += s.smape;
        mean_l1 += s.l1;
    }
    if (ok) {
        mean_relmse /= ok;
        mean_dssim /= ok;
        mean_smape /= ok;
        mean_l1 /= ok;
    }
    if (!normalized_relmse.empty()) {
        double acc = 0;
        for (const auto &[_, v] : normalized_relmse) acc += v;
        mean_normalized_relmse = acc / normalized_relmse.size();
    }
}

void MetricReport::write(std::ostream &os) const {
    using nlohmann::json;
    for (const auto &s : shots) {
        json j{{"type", "shot"}, {"shot", s.shot}, {"scene", s.scene}, {"spp", s.spp}};
        if (s.error) {
            j["error"] = *s.error;
        } else {
            j["relmse"] = s.relmse;
            j["dssim"] = s.dssim;
            j["smape"] = s.smape;
            j["l1"] = s.l1;
        }
        os << j.dump() << "\n";
    }
    for (const auto &[scene, v] : normalized_relmse)
        os << json{{"type", "scene"}, {"scene", scene}, {"normalized_relmse", v}}.dump() << "\n";
    json agg{{"type", "aggregate"},   {"shots", shots.size()},     {"failed", failed},
             {"relmse", mean_relmse}, {"dssim", mean_dssim},       {"smape", mean_smape},
             {"l1", mean_l1}};
    if (mean_normalized_relmse) agg["normalized_relmse"] = *mean_normalized_relmse;
    os << agg.dump() << "\n";
}

}  // namespace pwg
