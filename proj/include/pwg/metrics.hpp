#pragma once

#include <pwg/image.hpp>

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace pwg {

// mean over pixels and channels of (e - r)^2 / (r^2 + eps).
double relmse(const Image<float> &estimate, const Image<float> &reference, double eps = 0.01);

// mean of |e - r| / (|e| + |r| + eps).
double smape(const Image<float> &estimate, const Image<float> &reference, double eps = 0.01);

double l1_error(const Image<float> &estimate, const Image<float> &reference);

struct SsimOptions {
    double k1 = 0.01;
    double k2 = 0.03;
    int window = 11;
    double sigma = 1.5;
    double dynamic_range = 1.0;
};

// Mean SSIM over every full window position (no padding), averaged over channels.
double ssim(const Image<float> &estimate, const Image<float> &reference, const SsimOptions &opts = {});
inline double dssim(const Image<float> &estimate, const Image<float> &reference, const SsimOptions &opts = {}) {
    return 1.0 - ssim(estimate, reference, opts);
}

// Mean over scenes of error / baseline error.
double normalized_scene_error(const std::map<std::string, double> &errors,
                              const std::map<std::string, double> &baselines);

struct ShotMetrics {
    std::string shot;
    std::string scene;
    int spp = 0;
    double relmse = 0, dssim = 0, smape = 0, l1 = 0;
    std::optional<std::string> error;
};

// Tone-maps both radiances and evaluates every metric.
ShotMetrics evaluate_radiance(const Image<float> &estimate_hdr, const Image<float> &reference_hdr);

struct MetricReport {
    std::vector<ShotMetrics> shots;
    // scene -> relMSE normalized by that scene's baseline-spp noisy input.
    std::map<std::string, double> normalized_relmse;
    double mean_relmse = 0, mean_dssim = 0, mean_smape = 0, mean_l1 = 0;
    std::optional<double> mean_normalized_relmse;
    std::size_t failed = 0;

    void finalize();
    // One JSON object per line: shots, then scenes, then the aggregate row.
    void write(std::ostream &os) const;
};

}  // namespace pwg
