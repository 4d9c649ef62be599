#pragma once

// Procedural shots with analytic ground truth: spheres on a checkered ground plane,
// smooth lighting, lognormal per-sample noise and synthetic path descriptors.

#include <pwg/rng.hpp>
#include <pwg/shot.hpp>

#include <Eigen/Geometry>

#include <optional>
#include <vector>

namespace pwg {

struct SynthConfig {
    int resolution = 64;
    int spp = 4;
    std::uint64_t seed = 0;
    // Per-sample coefficient of variation outside difficulty regions.
    double noise_scale = 0.5;
    int difficulty_fields = 3;
    // Relative variance multiplier at full difficulty: var = noise_scale^2 (1 + gain * w).
    double difficulty_gain = 8.0;
    // Std-dev of the per-sample perturbation of albedo, normal and relative depth.
    double feature_noise = 0.02;
    int spheres = 3;

    void validate() const;
};

using Vec3 = Eigen::Vector3d;

struct Ray {
    Vec3 origin;
    Vec3 dir;  // unit length
};

struct PinholeCamera {
    Vec3 position;
    Vec3 forward, right, up;  // orthonormal
    double tan_half_fov = 0.5;  // vertical

    static PinholeCamera look_at(const Vec3 &position, const Vec3 &target, double fov_degrees);
    // Ray through the centre of pixel (px, py) of a width x height image; y grows downwards.
    Ray ray(int px, int py, int width, int height) const;
};

struct SynthMaterial {
    Vec3 albedo{0.5, 0.5, 0.5};
    Vec3 specular_albedo{0.1, 0.1, 0.1};
    double roughness = 0.8;
    pdesc::Tag tag = pdesc::kDiffuseReflection;
};

struct Sphere {
    Vec3 center;
    double radius = 1.0;
    SynthMaterial material;
};

// Nearest intersection distance with t > t_min.
std::optional<double> intersect_sphere(const Ray &ray, const Sphere &s, double t_min = 1e-6);
// Plane y = 0.
std::optional<double> intersect_ground(const Ray &ray, double t_min = 1e-6);

struct Blob {
    double u = 0.5, v = 0.5;  // screen-space centre in [0,1]
    double radius = 0.1;
    double amplitude = 1.0;
};

struct SynthScene {
    PinholeCamera camera;
    std::vector<Sphere> spheres;
    SynthMaterial ground_a, ground_b;
    double checker_size = 0.5;
    Vec3 sun_direction{0, 1, 0};  // towards the light
    Vec3 sun_color{1, 1, 1};
    Vec3 sky_color{0.6, 0.7, 0.9};
    Vec3 caustic_color{1.0, 0.9, 0.7};
    std::vector<Blob> lighting;    // smooth irradiance modulation
    std::vector<Blob> difficulty;  // complex-lighting regions
    double stripe_frequency = 50.0;
    double stripe_angle = 0.0;
    double caustic_amplitude = 0.6;
};

SynthScene make_scene(const SynthConfig &cfg);

struct SurfaceHit {
    double t = 0;
    Vec3 position, normal;
    SynthMaterial material;
};

// Closest surface hit; nullopt for rays that escape to the sky.
std::optional<SurfaceHit> trace(const SynthScene &scene, const Ray &ray);

struct SynthTruth {
    int width = 0, height = 0;
    SynthScene scene;
    Image<float> diffuse, specular;    // true radiance
    Image<float> albedo, specular_albedo;
    Image<float> normal;               // zero on sky pixels
    Image<float> distance;             // ray distance to the hit; 0 on sky pixels
    Image<float> hit;                  // 1 on surface pixels, 0 on sky
    Image<float> roughness;            // first-hit roughness
    Image<float> first_tag;            // first-hit interaction code, 0 on sky
    Image<float> difficulty;           // in [0, 1]
    Image<float> caustic;              // part of `specular` carried by caustic paths
};

SynthTruth gen_truth(const SynthConfig &cfg);

// Lognormal log-variance for a relative per-sample variance of noise_scale^2 (1 + gain * w).
double lognormal_sigma2(double noise_scale, double gain, double difficulty);

// Per-sample radiance, H x W x spp x 3 per branch; each sample's three channels share
// one normal draw.
struct NoisySamples {
    SampleBlock<float> diffuse, specular;
};

NoisySamples sample_noisy(const SynthTruth &truth, const SynthConfig &cfg, Rng &rng);

SampleBlock<float> gen_descriptors(const SynthTruth &truth, const NoisySamples &samples, const SynthConfig &cfg,
                                   Rng &rng);

// Per-sample perturbed first-hit features. Depth is already normalized by `depth_scale`.
struct FeatureSamples {
    SampleBlock<float> albedo, specular_albedo, normal;  // 3 channels
    SampleBlock<float> depth;                            // 1 channel
    double depth_scale = 1.0;
};

FeatureSamples sample_features(const SynthTruth &truth, const SynthConfig &cfg, Rng &rng);

// Per-pixel mean of a sample block.
Image<float> sample_mean(const SampleBlock<float> &block);
// Unbiased per-pixel sample variance averaged over channels (0 when spp == 1).
Image<float> sample_variance(const SampleBlock<float> &block);
// Central differences with replicated borders.
Image<float> derivative_x(const Image<float> &img);
Image<float> derivative_y(const Image<float> &img);

Image<float> assemble_gbuffer(const SampleBlock<float> &albedo, const SampleBlock<float> &normal,
                              const SampleBlock<float> &depth);

// Every intermediate of one generated shot.
struct SynthSample {
    SynthTruth truth;
    NoisySamples noisy;
    FeatureSamples features;
    SampleBlock<float> descriptors;
    Shot shot;
};

SynthSample gen_synth(const SynthConfig &cfg);
Shot gen_shot(const SynthConfig &cfg);

}  // namespace pwg
