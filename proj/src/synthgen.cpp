#include <pwg/synthgen.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pwg {

void SynthConfig::validate() const {
    if (resolution < 8) throw ValidationError("resolution", "must be >= 8, got " + std::to_string(resolution));
    if (spp < 1) throw ValidationError("spp", "must be >= 1, got " + std::to_string(spp));
    if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) throw ValidationError("noise_scale", "must be >= 0");
    if (difficulty_fields < 0) throw ValidationError("difficulty_fields", "must be >= 0");
    if (!(difficulty_gain >= 0.0)) throw ValidationError("difficulty_gain", "must be >= 0");
    if (!(feature_noise >= 0.0)) throw ValidationError("feature_noise", "must be >= 0");
    if (spheres < 0) throw ValidationError("spheres", "must be >= 0");
}

PinholeCamera PinholeCamera::look_at(const Vec3 &position, const Vec3 &target, double fov_degrees) {
    PinholeCamera c;
    c.position = position;
    c.forward = (target - position).normalized();
    c.right = c.forward.cross(Vec3(0, 1, 0)).normalized();
    c.up = c.right.cross(c.forward);
    c.tan_half_fov = std::tan(fov_degrees * std::numbers::pi / 360.0);
    return c;
}

Ray PinholeCamera::ray(int px, int py, int width, int height) const {
    const double aspect = static_cast<double>(width) / height;
    const double sx = (2.0 * (px + 0.5) / width - 1.0) * tan_half_fov * aspect;
    const double sy = (1.0 - 2.0 * (py + 0.5) / height) * tan_half_fov;
    return {position, (forward + sx * right + sy * up).normalized()};
}

std::optional<double> intersect_sphere(const Ray &ray, const Sphere &s, double t_min) {
    const Vec3 oc = ray.origin - s.center;
    const double b = oc.dot(ray.dir);
    const double c = oc.squaredNorm() - s.radius * s.radius;
    const double disc = b * b - c;
    if (disc < 0) return std::nullopt;
    const double root = std::sqrt(disc);
    if (const double t = -b - root; t > t_min) return t;
    if (const double t = -b + root; t > t_min) return t;
    return std::nullopt;
}

std::optional<double> intersect_ground(const Ray &ray, double t_min) {
    if (std::abs(ray.dir.y()) < 1e-12) return std::nullopt;
    const double t = -ray.origin.y() / ray.dir.y();
    if (t > t_min) return t;
    return std::nullopt;
}

namespace {

Vec3 random_color(Rng &rng, double lo, double hi) { return {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)}; }

std::vector<Blob> random_blobs(Rng &rng, int count, double rmin, double rmax, double amin, double amax) {
    std::vector<Blob> out(static_cast<std::size_t>(count));
    for (auto &b : out) {
        b.u = rng.uniform(0.15, 0.85);
        b.v = rng.uniform(0.15, 0.85);
        b.radius = rng.uniform(rmin, rmax);
        b.amplitude = rng.uniform(amin, amax);
    }
    return out;
}

double blob_field(const std::vector<Blob> &blobs, double u, double v) {
    double acc = 0;
    for (const auto &b : blobs) {
        const double d2 = (u - b.u) * (u - b.u) + (v - b.v) * (v - b.v);
        acc += b.amplitude * std::exp(-d2 / (2 * b.radius * b.radius));
    }
    return acc;
}

bool in_shadow(const SynthScene &scene, const Vec3 &p, const Vec3 &n) {
    const Ray r{p + 1e-6 * n, scene.sun_direction};
    for (const auto &s : scene.spheres)
        if (intersect_sphere(r, s, 1e-6)) return true;
    return false;
}

void put3(Image<float> &img, int y, int x, const Vec3 &v) {
    float *p = img.pixel(y, x);
    for (int c = 0; c < 3; ++c) p[c] = static_cast<float>(v[c]);
}

}  // namespace

SynthScene make_scene(const SynthConfig &cfg) {
    Rng rng(derive_seed(cfg.seed, 1));
    SynthScene s;
    const Vec3 eye(rng.uniform(-0.4, 0.4), rng.uniform(1.0, 1.5), rng.uniform(3.0, 3.6));
    s.camera = PinholeCamera::look_at(eye, Vec3(0, 0.4, 0), rng.uniform(50.0, 62.0));
    s.ground_a.albedo = random_color(rng, 0.5, 0.9);
    s.ground_b.albedo = random_color(rng, 0.1, 0.4);
    for (auto *g : {&s.ground_a, &s.ground_b}) {
        g->specular_albedo = Vec3::Constant(0.15);
        g->roughness = 0.9;
        g->tag = pdesc::kDiffuseReflection;
    }
    s.checker_size = rng.uniform(0.3, 0.6);
    for (int i = 0; i < cfg.spheres; ++i) {
        Sphere sp;
        sp.radius = rng.uniform(0.25, 0.55);
        sp.center = Vec3(rng.uniform(-1.3, 1.3), sp.radius, rng.uniform(-1.5, 0.8));
        sp.material.albedo = random_color(rng, 0.2, 0.9);
        const double kind = rng.uniform();
        if (kind < 0.4) {
            sp.material.tag = pdesc::kDiffuseReflection;
            sp.material.roughness = rng.uniform(0.6, 1.0);
            sp.material.specular_albedo = Vec3::Constant(rng.uniform(0.05, 0.2));
        } else if (kind < 0.8) {
            sp.material.tag = pdesc::kGlossyReflection;
            sp.material.roughness = rng.uniform(0.1, 0.5);
            sp.material.specular_albedo = Vec3::Constant(rng.uniform(0.3, 0.7));
        } else {
            sp.material.tag = pdesc::kSpecularReflection;
            sp.material.roughness = 0.0;
            sp.material.specular_albedo = Vec3::Constant(rng.uniform(0.7, 0.95));
            sp.material.albedo *= 0.3;
        }
        s.spheres.push_back(sp);
    }
    const double az = rng.uniform(0, 2 * std::numbers::pi), el = rng.uniform(0.5, 1.2);
    s.sun_direction = Vec3(std::cos(el) * std::cos(az), std::sin(el), std::cos(el) * std::sin(az));
    s.sun_color = random_color(rng, 0.8, 1.2);
    s.sky_color = Vec3(rng.uniform(0.4, 0.6), rng.uniform(0.5, 0.7), rng.uniform(0.7, 1.0));
    s.caustic_color = random_color(rng, 0.7, 1.1);
    s.lighting = random_blobs(rng, 4, 0.1, 0.3, -0.3, 0.6);
    s.difficulty = random_blobs(rng, cfg.difficulty_fields, 0.08, 0.16, 1.0, 1.0);
    s.stripe_frequency = rng.uniform(40.0, 70.0);
    s.stripe_angle = rng.uniform(0, std::numbers::pi);
    s.caustic_amplitude = rng.uniform(0.4, 0.8);
    return s;
}

std::optional<SurfaceHit> trace(const SynthScene &scene, const Ray &ray) {
    std::optional<SurfaceHit> best;
    auto consider = [&](double t, const Vec3 &n, const SynthMaterial &m) {
        if (best && t >= best->t) return;
        best = SurfaceHit{t, ray.origin + t * ray.dir, n, m};
    };
    if (auto t = intersect_ground(ray)) {
        const Vec3 p = ray.origin + *t * ray.dir;
        const long cell = static_cast<long>(std::floor(p.x() / scene.checker_size)) +
                          static_cast<long>(std::floor(p.z() / scene.checker_size));
        consider(*t, Vec3(0, 1, 0), (cell & 1) ? scene.ground_b : scene.ground_a);
    }
    for (const auto &s : scene.spheres)
        if (auto t = intersect_sphere(ray, s)) {
            const Vec3 p = ray.origin + *t * ray.dir;
            consider(*t, (p - s.center) / s.radius, s.material);
        }
    return best;
}

SynthTruth gen_truth(const SynthConfig &cfg) {
    cfg.validate();
    SynthTruth t;
    const int n = cfg.resolution;
    t.width = t.height = n;
    t.scene = make_scene(cfg);
    const auto &sc = t.scene;
    for (auto *img : {&t.diffuse, &t.specular, &t.albedo, &t.specular_albedo, &t.normal}) *img = Image<float>(n, n, 3);
    for (auto *img : {&t.distance, &t.hit, &t.roughness, &t.first_tag, &t.difficulty, &t.caustic})
        *img = Image<float>(n, n, 1);
    const double ca = std::cos(sc.stripe_angle), sa = std::sin(sc.stripe_angle);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const double u = (x + 0.5) / n, v = (y + 0.5) / n;
            const double w = std::clamp(blob_field(sc.difficulty, u, v), 0.0, 1.0);
            t.difficulty(y, x, 0) = static_cast<float>(w);
            const Ray ray = sc.camera.ray(x, y, n, n);
            const auto hit = trace(sc, ray);
            if (!hit) {
                put3(t.albedo, y, x, Vec3::Ones());
                put3(t.diffuse, y, x, sc.sky_color * (0.7 + 0.3 * v));
                continue;
            }
            const auto &m = hit->material;
            t.hit(y, x, 0) = 1.0f;
            t.distance(y, x, 0) = static_cast<float>(hit->t);
            t.roughness(y, x, 0) = static_cast<float>(m.roughness);
            t.first_tag(y, x, 0) = static_cast<float>(m.tag);
            put3(t.albedo, y, x, m.albedo);
            put3(t.specular_albedo, y, x, m.specular_albedo);
            put3(t.normal, y, x, hit->normal);

            const double vis = in_shadow(sc, hit->position, hit->normal) ? 0.0 : 1.0;
            const double ndl = std::max(0.0, hit->normal.dot(sc.sun_direction));
            const double modulation = std::max(0.1, 1.0 + blob_field(sc.lighting, u, v));
            const Vec3 irradiance = (0.25 * sc.sky_color + 0.9 * vis * ndl * sc.sun_color) * modulation;
            put3(t.diffuse, y, x, m.albedo.cwiseProduct(irradiance));

            const Vec3 h = (sc.sun_direction - ray.dir).normalized();
            const double shininess = 8.0 + 200.0 * (1.0 - m.roughness);
            const double lobe = (shininess + 2.0) / (8.0 * std::numbers::pi) *
                                std::pow(std::max(0.0, hit->normal.dot(h)), shininess) * ndl * vis;
            const double stripe = 0.5 + 0.5 * std::sin(sc.stripe_frequency * (u * ca + v * sa));
            const double caustic = w * sc.caustic_amplitude * stripe * stripe;
            const Vec3 spec = m.specular_albedo.cwiseProduct(sc.sun_color) * lobe + caustic * sc.caustic_color +
                              m.specular_albedo.cwiseProduct(sc.sky_color) * 0.1;
            put3(t.specular, y, x, spec);
            t.caustic(y, x, 0) = static_cast<float>(caustic);
        }
    return t;
}

double lognormal_sigma2(double noise_scale, double gain, double difficulty) {
    return std::log1p(noise_scale * noise_scale * (1.0 + gain * difficulty));
}

NoisySamples sample_noisy(const SynthTruth &truth, const SynthConfig &cfg, Rng &rng) {
    const int h = truth.height, w = truth.width, s = cfg.spp;
    NoisySamples out{SampleBlock<float>(h, w, s, 3), SampleBlock<float>(h, w, s, 3)};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double s2 = lognormal_sigma2(cfg.noise_scale, cfg.difficulty_gain, truth.difficulty(y, x, 0));
            const double sigma = std::sqrt(s2);
            for (int k = 0; k < s; ++k)
                for (int b = 0; b < 2; ++b) {
                    const Image<float> &mu = b == 0 ? truth.diffuse : truth.specular;
                    SampleBlock<float> &dst = b == 0 ? out.diffuse : out.specular;
                    const double factor = std::exp(sigma * rng.normal() - 0.5 * s2);
                    for (int c = 0; c < 3; ++c)
                        dst(y, x, k, c) = static_cast<float>(static_cast<double>(mu(y, x, c)) * factor);
                }
        }
    return out;
}

namespace {

// Tag transition rows (none = terminate, diffuse, glossy, specular reflection, specular transmission).
constexpr std::array<double, 5> kCalmRow{0.40, 0.42, 0.15, 0.02, 0.01};
constexpr std::array<double, 5> kComplexRow{0.20, 0.10, 0.15, 0.35, 0.20};

int draw_tag(Rng &rng, double w) {
    const double u = rng.uniform();
    double acc = 0;
    for (int i = 0; i < 5; ++i) {
        acc += (1.0 - w) * kCalmRow[i] + w * kComplexRow[i];
        if (u < acc) return i;
    }
    return 0;
}

double vertex_roughness(Rng &rng, int tag) {
    switch (tag) {
    case pdesc::kDiffuseReflection: return rng.uniform(0.6, 1.0);
    case pdesc::kGlossyReflection: return rng.uniform(0.1, 0.5);
    default: return 0.0;
    }
}

Vec3 vertex_throughput(Rng &rng, int tag) {
    switch (tag) {
    case pdesc::kDiffuseReflection: return {rng.uniform(0.3, 0.9), rng.uniform(0.3, 0.9), rng.uniform(0.3, 0.9)};
    case pdesc::kGlossyReflection: return Vec3::Constant(rng.uniform(0.5, 0.95));
    case pdesc::kSpecularReflection: return Vec3::Constant(rng.uniform(0.85, 1.0));
    default: return Vec3::Constant(rng.uniform(0.8, 0.98));
    }
}

}  // namespace

SampleBlock<float> gen_descriptors(const SynthTruth &truth, const NoisySamples &samples, const SynthConfig &cfg,
                                   Rng &rng) {
    const int h = truth.height, w = truth.width, s = cfg.spp;
    if (samples.diffuse.height() != h || samples.diffuse.width() != w || samples.diffuse.samples() != s ||
        samples.specular.height() != h || samples.specular.width() != w || samples.specular.samples() != s)
        throw ArgumentError("gen_descriptors: sample blocks do not match the truth / config");
    const auto &sc = truth.scene;
    SampleBlock<float> out(h, w, s, pdesc::kChannels);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double wd = truth.difficulty(y, x, 0);
            const double spec_total = truth.specular(y, x, 0) + truth.specular(y, x, 1) + truth.specular(y, x, 2);
            const double caustic_share =
                spec_total > 0 ? std::clamp(3.0 * truth.caustic(y, x, 0) / spec_total, 0.0, 1.0) : 0.0;
            const bool surface = truth.hit(y, x, 0) != 0.0f;
            for (int k = 0; k < s; ++k) {
                float *d = out.sample(y, x, k);
                const double pdf = 0.1 + 0.9 * rng.uniform_open_low();
                for (int c = 0; c < 3; ++c) {
                    const double r = static_cast<double>(samples.diffuse(y, x, k, c)) + samples.specular(y, x, k, c);
                    d[pdesc::kRadiance + c] = static_cast<float>(r * pdf);
                }
                d[pdesc::kPdf] = static_cast<float>(pdf);
                const bool caustic_path = surface && rng.uniform() < caustic_share;
                const Vec3 photon = !surface ? sc.sky_color : (caustic_path ? sc.caustic_color : sc.sun_color);
                for (int c = 0; c < 3; ++c) d[pdesc::kPhoton + c] = static_cast<float>(photon[c]);
                if (!surface) continue;

                // Vertex 0 is the first hit; later vertices follow the tag chain.
                Vec3 att = Vec3::Ones();
                int tag = static_cast<int>(truth.first_tag(y, x, 0));
                for (int v = 0; v < pdesc::kMaxVertices && tag != pdesc::kNone; ++v) {
                    Vec3 f;
                    double rough;
                    if (v == 0) {
                        const float *a = tag == pdesc::kDiffuseReflection ? truth.albedo.pixel(y, x)
                                                                          : truth.specular_albedo.pixel(y, x);
                        f = Vec3(std::max(0.01f, a[0]), std::max(0.01f, a[1]), std::max(0.01f, a[2]));
                        rough = truth.roughness(y, x, 0);
                    } else {
                        f = vertex_throughput(rng, tag);
                        rough = vertex_roughness(rng, tag);
                    }
                    att = att.cwiseProduct(f);
                    for (int c = 0; c < 3; ++c) d[pdesc::attenuation(v, c)] = static_cast<float>(att[c]);
                    d[pdesc::tag(v)] = static_cast<float>(tag);
                    if (v < pdesc::kRoughVertices) d[pdesc::roughness(v)] = static_cast<float>(rough);
                    if (caustic_path && v < 2)
                        tag = rng.uniform() < 0.7 ? pdesc::kSpecularReflection : pdesc::kSpecularTransmission;
                    else
                        tag = draw_tag(rng, wd);
                }
            }
        }
    return out;
}

FeatureSamples sample_features(const SynthTruth &truth, const SynthConfig &cfg, Rng &rng) {
    const int h = truth.height, w = truth.width, s = cfg.spp;
    const double sd = cfg.feature_noise;
    FeatureSamples f{SampleBlock<float>(h, w, s, 3), SampleBlock<float>(h, w, s, 3), SampleBlock<float>(h, w, s, 3),
                     SampleBlock<float>(h, w, s, 1), 1.0};
    std::vector<double> raw_depth(static_cast<std::size_t>(h) * w * s, 0.0);
    double max_depth = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const bool surface = truth.hit(y, x, 0) != 0.0f;
            for (int k = 0; k < s; ++k) {
                for (int c = 0; c < 3; ++c) {
                    f.albedo(y, x, k, c) =
                        static_cast<float>(std::clamp(truth.albedo(y, x, c) + sd * rng.normal(), 0.0, 1.0));
                    f.specular_albedo(y, x, k, c) =
                        static_cast<float>(std::clamp(truth.specular_albedo(y, x, c) + sd * rng.normal(), 0.0, 1.0));
                }
                if (!surface) continue;
                Vec3 n(truth.normal(y, x, 0), truth.normal(y, x, 1), truth.normal(y, x, 2));
                n += sd * Vec3(rng.normal(), rng.normal(), rng.normal());
                n.normalize();
                for (int c = 0; c < 3; ++c) f.normal(y, x, k, c) = static_cast<float>(n[c]);
                const double dep = std::max(0.0, truth.distance(y, x, 0) * (1.0 + sd * rng.normal()));
                raw_depth[f.depth.index(y, x, k)] = dep;
                max_depth = std::max(max_depth, dep);
            }
        }
    f.depth_scale = max_depth > 0 ? max_depth : 1.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const bool surface = truth.hit(y, x, 0) != 0.0f;
            for (int k = 0; k < s; ++k)
                f.depth(y, x, k, 0) =
                    surface ? static_cast<float>(std::min(1.0, raw_depth[f.depth.index(y, x, k)] / f.depth_scale))
                            : 1.0f;
        }
    return f;
}

Image<float> sample_mean(const SampleBlock<float> &block) {
    const int s = block.samples(), c = block.channels();
    Image<float> out(block.height(), block.width(), c);
    for (int y = 0; y < block.height(); ++y)
        for (int x = 0; x < block.width(); ++x)
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0;
                for (int k = 0; k < s; ++k) acc += block(y, x, k, ch);
                out(y, x, ch) = static_cast<float>(acc / s);
            }
    return out;
}

Image<float> sample_variance(const SampleBlock<float> &block) {
    const int s = block.samples(), c = block.channels();
    Image<float> out(block.height(), block.width(), 1);
    if (s < 2) return out;
    for (int y = 0; y < block.height(); ++y)
        for (int x = 0; x < block.width(); ++x) {
            double total = 0;
            for (int ch = 0; ch < c; ++ch) {
                double mean = 0;
                for (int k = 0; k < s; ++k) mean += block(y, x, k, ch);
                mean /= s;
                double ss = 0;
                for (int k = 0; k < s; ++k) ss += (block(y, x, k, ch) - mean) * (block(y, x, k, ch) - mean);
                total += ss / (s - 1);
            }
            out(y, x, 0) = static_cast<float>(total / c);
        }
    return out;
}

Image<float> derivative_x(const Image<float> &img) {
    Image<float> out(img.height(), img.width(), img.channels());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            const float *a = img.pixel(y, std::max(x - 1, 0));
            const float *b = img.pixel(y, std::min(x + 1, img.width() - 1));
            for (int c = 0; c < img.channels(); ++c) out(y, x, c) = 0.5f * (b[c] - a[c]);
        }
    return out;
}

Image<float> derivative_y(const Image<float> &img) {
    Image<float> out(img.height(), img.width(), img.channels());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            const float *a = img.pixel(std::max(y - 1, 0), x);
            const float *b = img.pixel(std::min(y + 1, img.height() - 1), x);
            for (int c = 0; c < img.channels(); ++c) out(y, x, c) = 0.5f * (b[c] - a[c]);
        }
    return out;
}

Image<float> assemble_gbuffer(const SampleBlock<float> &albedo, const SampleBlock<float> &normal,
                              const SampleBlock<float> &depth) {
    const Image<float> a = sample_mean(albedo), n = sample_mean(normal), d = sample_mean(depth);
    const Image<float> adx = derivative_x(a), ady = derivative_y(a), av = sample_variance(albedo);
    const Image<float> ndx = derivative_x(n), ndy = derivative_y(n), nv = sample_variance(normal);
    const Image<float> ddx = derivative_x(d), ddy = derivative_y(d), dv = sample_variance(depth);
    return concat_channels<float>({&a, &adx, &ady, &av, &n, &ndx, &ndy, &nv, &d, &ddx, &ddy, &dv});
}

SynthSample gen_synth(const SynthConfig &cfg) {
    cfg.validate();
    SynthSample out;
    out.truth = gen_truth(cfg);
    Rng noise_rng(derive_seed(cfg.seed, 2)), feature_rng(derive_seed(cfg.seed, 3)), path_rng(derive_seed(cfg.seed, 4));
    out.noisy = sample_noisy(out.truth, cfg, noise_rng);
    out.features = sample_features(out.truth, cfg, feature_rng);
    out.descriptors = gen_descriptors(out.truth, out.noisy, cfg, path_rng);

    Shot &shot = out.shot;
    shot.width = shot.height = cfg.resolution;
    shot.spp = cfg.spp;
    shot.noisy_diffuse = sample_mean(out.noisy.diffuse);
    shot.noisy_specular = sample_mean(out.noisy.specular);
    shot.reference_diffuse = out.truth.diffuse;
    shot.reference_specular = out.truth.specular;
    shot.gbuffer_diffuse = assemble_gbuffer(out.features.albedo, out.features.normal, out.features.depth);
    shot.gbuffer_specular = assemble_gbuffer(out.features.specular_albedo, out.features.normal, out.features.depth);
    shot.descriptors = out.descriptors;
    shot.meta.scene_id = "synth-" + std::to_string(cfg.seed);
    shot.meta.seed = cfg.seed;
    shot.meta.generator = "synthgen";
    shot.meta.depth_scale = out.features.depth_scale;
    validate(shot);
    return out;
}

Shot gen_shot(const SynthConfig &cfg) { return gen_synth(cfg).shot; }

}  // namespace pwg
