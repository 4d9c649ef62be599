#pragma once

#include <pwg/rng.hpp>
#include <pwg/shot.hpp>

#include <cmath>
#include <ctime>
#include <filesystem>
#include <string>

namespace pwg::test {

template <typename T>
Image<T> random_image(int h, int w, int c, Rng &rng, double lo = -1.0, double hi = 1.0) {
    Image<T> img(h, w, c);
    for (auto &v : img.vec()) v = static_cast<T>(rng.uniform(lo, hi));
    return img;
}

// A shot with arbitrary values that satisfy every invariant.
inline Shot random_shot(int h, int w, int spp, std::uint64_t seed, bool with_reference = true) {
    Rng rng(seed);
    Shot s;
    s.width = w;
    s.height = h;
    s.spp = spp;
    s.noisy_diffuse = random_image<float>(h, w, 3, rng, 0.0, 3.0);
    s.noisy_specular = random_image<float>(h, w, 3, rng, 0.0, 3.0);
    if (with_reference) {
        s.reference_diffuse = random_image<float>(h, w, 3, rng, 0.0, 2.0);
        s.reference_specular = random_image<float>(h, w, 3, rng, 0.0, 2.0);
    }
    for (auto *g : {&s.gbuffer_diffuse, &s.gbuffer_specular}) {
        *g = random_image<float>(h, w, gbuf::kChannels, rng, -0.5, 0.5);
        for (int p = 0; p < h * w; ++p) {
            float *px = g->data() + static_cast<std::size_t>(p) * gbuf::kChannels;
            for (int c = 0; c < 3; ++c) px[gbuf::kAlbedo + c] = static_cast<float>(rng.uniform());
            px[gbuf::kAlbedoVar] = static_cast<float>(rng.uniform(0, 0.1));
            double n[3], len = 0;
            for (double &v : n) len += (v = rng.normal()) * v;
            len = std::sqrt(len);
            for (int c = 0; c < 3; ++c) px[gbuf::kNormal + c] = static_cast<float>(0.999 * n[c] / len);
            px[gbuf::kNormalVar] = static_cast<float>(rng.uniform(0, 0.1));
            px[gbuf::kDepth] = static_cast<float>(rng.uniform());
            px[gbuf::kDepthVar] = static_cast<float>(rng.uniform(0, 0.1));
        }
    }
    s.descriptors = SampleBlock<float>(h, w, spp, pdesc::kChannels);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int k = 0; k < spp; ++k) {
                float *d = s.descriptors.sample(y, x, k);
                for (int c = 0; c < 6; ++c) d[c] = static_cast<float>(rng.uniform(0, 2));
                d[pdesc::kPdf] = static_cast<float>(0.1 + 0.9 * rng.uniform_open_low());
                const int len = static_cast<int>(rng.below(pdesc::kMaxVertices + 1));
                for (int v = 0; v < len; ++v) {
                    for (int c = 0; c < 3; ++c) d[pdesc::attenuation(v, c)] = static_cast<float>(rng.uniform());
                    d[pdesc::tag(v)] = static_cast<float>(1 + rng.below(4));
                    if (v < pdesc::kRoughVertices) d[pdesc::roughness(v)] = static_cast<float>(rng.uniform());
                }
            }
    s.meta.scene_id = "random-" + std::to_string(seed);
    s.meta.seed = seed;
    s.meta.generator = "test";
    s.meta.depth_scale = rng.uniform(1.0, 10.0);
    return s;
}

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string &tag) {
        Rng rng(reinterpret_cast<std::uintptr_t>(this) ^ static_cast<std::uint64_t>(std::time(nullptr)));
        path_ = std::filesystem::temp_directory_path() / ("pwg-" + tag + "-" + std::to_string(rng.next() % 1000000007));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir &) = delete;
    TempDir &operator=(const TempDir &) = delete;

    const std::filesystem::path &path() const { return path_; }
    std::filesystem::path operator/(const std::string &name) const { return path_ / name; }

  private:
    std::filesystem::path path_;
};

}  // namespace pwg::test

#include <cstring>

namespace pwg::test {

template <typename T>
bool same_bits(const std::vector<T> &a, const std::vector<T> &b) {
    return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0);
}

inline bool same_bits(const Shot &a, const Shot &b) {
    auto img = [](const Image<float> &x, const Image<float> &y) { return x.same_shape(y) && same_bits(x.vec(), y.vec()); };
    auto opt = [&](const std::optional<Image<float>> &x, const std::optional<Image<float>> &y) {
        return x.has_value() == y.has_value() && (!x || img(*x, *y));
    };
    return a.width == b.width && a.height == b.height && a.spp == b.spp && img(a.noisy_diffuse, b.noisy_diffuse) &&
           img(a.noisy_specular, b.noisy_specular) && opt(a.reference_diffuse, b.reference_diffuse) &&
           opt(a.reference_specular, b.reference_specular) && img(a.gbuffer_diffuse, b.gbuffer_diffuse) &&
           img(a.gbuffer_specular, b.gbuffer_specular) && a.descriptors.samples() == b.descriptors.samples() &&
           a.descriptors.channels() == b.descriptors.channels() &&
           same_bits(a.descriptors.vec(), b.descriptors.vec()) && a.meta == b.meta;
}

}  // namespace pwg::test
