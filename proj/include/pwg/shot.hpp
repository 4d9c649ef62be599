#pragma once

#include <pwg/image.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace pwg {

// Channel layout of the 24-channel geometric feature buffer.
namespace gbuf {
inline constexpr int kAlbedo = 0;
inline constexpr int kAlbedoDx = 3;
inline constexpr int kAlbedoDy = 6;
inline constexpr int kAlbedoVar = 9;
inline constexpr int kNormal = 10;
inline constexpr int kNormalDx = 13;
inline constexpr int kNormalDy = 16;
inline constexpr int kNormalVar = 19;
inline constexpr int kDepth = 20;
inline constexpr int kDepthDx = 21;
inline constexpr int kDepthDy = 22;
inline constexpr int kDepthVar = 23;
inline constexpr int kChannels = 24;

struct Group {
    std::string_view name;
    int offset;
    int count;
};
// Named channel groups in storage order.
inline constexpr std::array<Group, 12> kLayout{{
    {"albedo", kAlbedo, 3},       {"albedo_dx", kAlbedoDx, 3}, {"albedo_dy", kAlbedoDy, 3},
    {"albedo_var", kAlbedoVar, 1}, {"normal", kNormal, 3},       {"normal_dx", kNormalDx, 3},
    {"normal_dy", kNormalDy, 3},   {"normal_var", kNormalVar, 1}, {"depth", kDepth, 1},
    {"depth_dx", kDepthDx, 1},     {"depth_dy", kDepthDy, 1},     {"depth_var", kDepthVar, 1},
}};
std::string_view channel_name(int channel);
}  // namespace gbuf

// Channel layout of a 36-channel per-sample path descriptor. The terminal (sixth)
// vertex of a five-bounce path carries no BSDF, so roughness is kept for five vertices.
namespace pdesc {
inline constexpr int kMaxVertices = 6;
inline constexpr int kRoughVertices = 5;
inline constexpr int kRadiance = 0;      // undivided radiance, 3
inline constexpr int kPhoton = 3;        // photon energy, 3
inline constexpr int kPdf = 6;           // sampling probability, 1
inline constexpr int kAttenuation = 7;   // 3 per vertex
inline constexpr int kTag = 25;          // 1 per vertex
inline constexpr int kRoughness = 31;    // 1 per BSDF vertex
inline constexpr int kChannels = 36;

// Interaction tag codes.
enum Tag : int {
    kNone = 0,
    kDiffuseReflection = 1,
    kGlossyReflection = 2,
    kSpecularReflection = 3,
    kSpecularTransmission = 4,
};
inline constexpr int kTagCount = 5;

inline constexpr int attenuation(int vertex, int c) { return kAttenuation + 3 * vertex + c; }
inline constexpr int tag(int vertex) { return kTag + vertex; }
inline constexpr int roughness(int vertex) { return kRoughness + vertex; }
}  // namespace pdesc

enum class Branch { Diffuse = 0, Specular = 1 };
inline constexpr std::array<Branch, 2> kBranches{Branch::Diffuse, Branch::Specular};
std::string_view to_string(Branch b);

struct ShotMeta {
    std::string scene_id = "unnamed";
    std::uint64_t seed = 0;
    std::string generator = "unknown";
    // World-space depth that maps to 1.0 in the normalized depth channels.
    double depth_scale = 1.0;

    bool operator==(const ShotMeta &) const = default;
};

struct Shot {
    int width = 0;
    int height = 0;
    int spp = 0;
    Image<float> noisy_diffuse, noisy_specular;
    std::optional<Image<float>> reference_diffuse, reference_specular;
    Image<float> gbuffer_diffuse, gbuffer_specular;
    SampleBlock<float> descriptors;
    ShotMeta meta;

    bool has_reference() const { return reference_diffuse.has_value() && reference_specular.has_value(); }
    const Image<float> &noisy(Branch b) const { return b == Branch::Diffuse ? noisy_diffuse : noisy_specular; }
    const Image<float> &gbuffer(Branch b) const {
        return b == Branch::Diffuse ? gbuffer_diffuse : gbuffer_specular;
    }
    const Image<float> &reference(Branch b) const;
    Image<float> albedo(Branch b) const { return gbuffer(b).slice_channels(gbuf::kAlbedo, 3); }

    // Sum of both branches' radiance.
    Image<float> noisy_radiance() const;
    Image<float> reference_radiance() const;

    // Every aligned field cropped to the same window.
    Shot crop(int y0, int x0, int h, int w) const;

    bool operator==(const Shot &) const = default;
};

// Throws ValidationError naming the first field that breaks a Shot invariant.
void validate(const Shot &shot);

void save_shot(const Shot &shot, const std::filesystem::path &dir);
Shot load_shot(const std::filesystem::path &dir);

}  // namespace pwg
