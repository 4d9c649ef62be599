#include <pwg/shot.hpp>

#include <pwg/container.hpp>

#include <cmath>

namespace pwg {

std::string_view gbuf::channel_name(int channel) {
    for (const auto &g : kLayout)
        if (channel >= g.offset && channel < g.offset + g.count) return g.name;
    throw ArgumentError("gbuffer channel out of range: " + std::to_string(channel));
}

std::string_view to_string(Branch b) { return b == Branch::Diffuse ? "diffuse" : "specular"; }

const Image<float> &Shot::reference(Branch b) const {
    const auto &ref = b == Branch::Diffuse ? reference_diffuse : reference_specular;
    if (!ref) throw ValidationError(b == Branch::Diffuse ? "reference_diffuse" : "reference_specular",
                                    "shot has no reference");
    return *ref;
}

static Image<float> add_images(const Image<float> &a, const Image<float> &b) {
    Image<float> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.vec()[i] += b.vec()[i];
    return out;
}

Image<float> Shot::noisy_radiance() const { return add_images(noisy_diffuse, noisy_specular); }

Image<float> Shot::reference_radiance() const {
    return add_images(reference(Branch::Diffuse), reference(Branch::Specular));
}

Shot Shot::crop(int y0, int x0, int h, int w) const {
    Shot out;
    out.width = w;
    out.height = h;
    out.spp = spp;
    out.noisy_diffuse = noisy_diffuse.crop(y0, x0, h, w);
    out.noisy_specular = noisy_specular.crop(y0, x0, h, w);
    if (reference_diffuse) out.reference_diffuse = reference_diffuse->crop(y0, x0, h, w);
    if (reference_specular) out.reference_specular = reference_specular->crop(y0, x0, h, w);
    out.gbuffer_diffuse = gbuffer_diffuse.crop(y0, x0, h, w);
    out.gbuffer_specular = gbuffer_specular.crop(y0, x0, h, w);
    out.descriptors = descriptors.crop(y0, x0, h, w);
    out.meta = meta;
    return out;
}

namespace {

void check_extent(const Shot &s, const Image<float> &img, int channels, const char *field) {
    if (img.height() != s.height || img.width() != s.width)
        throw ValidationError(field, "extent " + std::to_string(img.height()) + "x" + std::to_string(img.width()) +
                                         " does not match shot " + std::to_string(s.height) + "x" +
                                         std::to_string(s.width));
    if (img.channels() != channels)
        throw ValidationError(field, "expected " + std::to_string(channels) + " channels, got " +
                                         std::to_string(img.channels()));
}

void check_radiance(const Shot &s, const Image<float> &img, const char *field) {
    check_extent(s, img, 3, field);
    for (float v : img.vec()) {
        if (!std::isfinite(v)) throw ValidationError(field, "non-finite radiance");
        if (v < 0.0f) throw ValidationError(field, "negative radiance");
    }
}

void check_gbuffer(const Shot &s, const Image<float> &g, const char *field) {
    check_extent(s, g, gbuf::kChannels, field);
    for (int p = 0; p < g.pixels(); ++p) {
        const float *px = g.data() + static_cast<std::size_t>(p) * gbuf::kChannels;
        for (int c = 0; c < gbuf::kChannels; ++c)
            if (!std::isfinite(px[c])) throw ValidationError(field, "non-finite value in channel " +
                                                                        std::string(gbuf::channel_name(c)));
        for (int c : {gbuf::kAlbedoVar, gbuf::kNormalVar, gbuf::kDepthVar})
            if (px[c] < 0.0f) throw ValidationError(field, "negative variance");
        const float n2 = px[gbuf::kNormal] * px[gbuf::kNormal] + px[gbuf::kNormal + 1] * px[gbuf::kNormal + 1] +
                         px[gbuf::kNormal + 2] * px[gbuf::kNormal + 2];
        if (std::sqrt(n2) > 1.0f + 1e-4f) throw ValidationError(field, "normal magnitude exceeds 1");
        if (px[gbuf::kDepth] < 0.0f || px[gbuf::kDepth] > 1.0f)
            throw ValidationError(field, "depth outside [0,1]");
    }
}

void check_descriptors(const Shot &s) {
    const auto &d = s.descriptors;
    if (d.height() != s.height || d.width() != s.width)
        throw ValidationError("descriptors", "extent does not match shot");
    if (d.channels() != pdesc::kChannels)
        throw ValidationError("descriptors", "expected 36 channels, got " + std::to_string(d.channels()));
    if (d.samples() != s.spp)
        throw ValidationError("descriptors", "sample count " + std::to_string(d.samples()) +
                                                 " does not match spp " + std::to_string(s.spp));
    const std::size_t records = d.size() / pdesc::kChannels;
    for (std::size_t r = 0; r < records; ++r) {
        const float *rec = d.data() + r * pdesc::kChannels;
        bool all_zero = true;
        for (int c = 0; c < pdesc::kChannels; ++c) {
            if (!std::isfinite(rec[c])) throw ValidationError("descriptors", "non-finite value");
            all_zero = all_zero && rec[c] == 0.0f;
        }
        if (all_zero) continue;
        if (!(rec[pdesc::kPdf] > 0.0f)) throw ValidationError("descriptors", "sampling probability must be > 0");
        bool ended = false;
        for (int v = 0; v < pdesc::kMaxVertices; ++v) {
            const float tag = rec[pdesc::tag(v)];
            if (tag != std::floor(tag) || tag < 0.0f || tag >= pdesc::kTagCount)
                throw ValidationError("descriptors", "invalid interaction tag " + std::to_string(tag));
            if (ended && tag != 0.0f) throw ValidationError("descriptors", "vertex after path end");
            ended = ended || tag == 0.0f;
        }
    }
}

}  // namespace

void validate(const Shot &s) {
    if (s.width < 1 || s.height < 1) throw ValidationError("width", "shot must be at least 1x1");
    if (s.spp < 1) throw ValidationError("spp", "must be >= 1");
    check_radiance(s, s.noisy_diffuse, "noisy_diffuse");
    check_radiance(s, s.noisy_specular, "noisy_specular");
    if (s.reference_diffuse.has_value() != s.reference_specular.has_value())
        throw ValidationError("reference_specular", "references must be present for both branches or neither");
    if (s.reference_diffuse) check_radiance(s, *s.reference_diffuse, "reference_diffuse");
    if (s.reference_specular) check_radiance(s, *s.reference_specular, "reference_specular");
    check_gbuffer(s, s.gbuffer_diffuse, "gbuffer_diffuse");
    check_gbuffer(s, s.gbuffer_specular, "gbuffer_specular");
    check_descriptors(s);
    if (!(s.meta.depth_scale > 0.0) || !std::isfinite(s.meta.depth_scale))
        throw ValidationError("depth_scale", "must be positive and finite");
}

void save_shot(const Shot &shot, const std::filesystem::path &dir) {
    validate(shot);
    ContainerWriter w(dir, "shot");
    w.meta("width", std::to_string(shot.width));
    w.meta("height", std::to_string(shot.height));
    w.meta("spp", std::to_string(shot.spp));
    w.meta("scene_id", shot.meta.scene_id);
    w.meta("seed", std::to_string(shot.meta.seed));
    w.meta("generator", shot.meta.generator);
    w.meta("depth_scale", format_number(shot.meta.depth_scale));
    const std::int64_t h = shot.height, wd = shot.width;
    auto image = [&](const char *name, const Image<float> &img) {
        w.add(name, {h, wd, img.channels()}, img.span());
    };
    image("noisy_diffuse", shot.noisy_diffuse);
    image("noisy_specular", shot.noisy_specular);
    if (shot.reference_diffuse) image("reference_diffuse", *shot.reference_diffuse);
    if (shot.reference_specular) image("reference_specular", *shot.reference_specular);
    image("gbuffer_diffuse", shot.gbuffer_diffuse);
    image("gbuffer_specular", shot.gbuffer_specular);
    w.add("descriptors", {h, wd, shot.spp, pdesc::kChannels}, std::span<const float>(shot.descriptors.vec()));
    w.finish();
}

Shot load_shot(const std::filesystem::path &dir) {
    ContainerReader r(dir);
    const auto &m = r.manifest();
    if (m.kind != "shot") throw IoError(dir.string(), "container kind is '" + m.kind + "', expected 'shot'");
    Shot s;
    s.width = static_cast<int>(parse_int(m.require("width"), "width"));
    s.height = static_cast<int>(parse_int(m.require("height"), "height"));
    s.spp = static_cast<int>(parse_int(m.require("spp"), "spp"));
    if (s.width < 1 || s.height < 1 || s.spp < 1) throw ValidationError("width", "non-positive shot dimensions");
    s.meta.scene_id = m.require("scene_id");
    s.meta.seed = static_cast<std::uint64_t>(std::stoull(m.require("seed")));
    s.meta.generator = m.require("generator");
    s.meta.depth_scale = parse_number(m.require("depth_scale"), "depth_scale");
    const std::int64_t h = s.height, w = s.width;
    auto image = [&](const char *name, int channels) {
        Image<float> img(s.height, s.width, channels);
        img.vec() = r.read_f32(name, {h, w, channels});
        return img;
    };
    s.noisy_diffuse = image("noisy_diffuse", 3);
    s.noisy_specular = image("noisy_specular", 3);
    if (r.has("reference_diffuse")) s.reference_diffuse = image("reference_diffuse", 3);
    if (r.has("reference_specular")) s.reference_specular = image("reference_specular", 3);
    s.gbuffer_diffuse = image("gbuffer_diffuse", gbuf::kChannels);
    s.gbuffer_specular = image("gbuffer_specular", gbuf::kChannels);
    s.descriptors = SampleBlock<float>(s.height, s.width, s.spp, pdesc::kChannels);
    s.descriptors.vec() = r.read_f32("descriptors", {h, w, s.spp, pdesc::kChannels});
    validate(s);
    return s;
}

}  // namespace pwg
