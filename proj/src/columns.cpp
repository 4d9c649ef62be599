#include <pwg/columns.hpp>

#include <cmath>

namespace pwg {

std::string_view to_string(Column c) { return c == Column::G ? "G" : "P"; }

DenoiserConfig DenoiserConfig::make(Column column, double width_scale, int recon_kernel) {
    DenoiserConfig cfg;
    cfg.width_scale = width_scale;
    cfg.width = static_cast<int>(std::lround(100.0 * width_scale));
    cfg.recon_kernel = recon_kernel;
    cfg.input_channels = 3 + (column == Column::G ? gbuf::kChannels : kPBufferChannels);
    cfg.validate();
    return cfg;
}

void DenoiserConfig::validate() const {
    if (recon_kernel < 1 || recon_kernel % 2 == 0) throw ArgumentError("recon_kernel must be odd");
    if (kernel < 1 || kernel % 2 == 0) throw ArgumentError("conv kernel must be odd");
    if (width < 4) throw ArgumentError("denoiser width must be >= 4");
    if (depth < 2) throw ArgumentError("denoiser depth must be >= 2");
    if (input_channels < 4) throw ArgumentError("denoiser needs radiance plus auxiliary channels");
}

std::vector<int> DenoiserConfig::layer_widths() const {
    std::vector<int> w{input_channels};
    for (int i = 0; i < depth - 1; ++i) w.push_back(width);
    w.push_back(recon_kernel * recon_kernel);
    return w;
}

std::size_t DenoiserConfig::parameter_count() const {
    const std::size_t k2 = static_cast<std::size_t>(kernel) * kernel;
    const std::size_t out = static_cast<std::size_t>(recon_kernel) * recon_kernel;
    const std::size_t first = k2 * input_channels * width + width;
    const std::size_t hidden = (k2 * width * width + width) * static_cast<std::size_t>(depth - 2);
    const std::size_t last = k2 * width * out + out;
    return first + hidden + last;
}

void ManifoldConfig::validate() const {
    if (widths.size() < 2) throw ArgumentError("manifold needs at least one layer");
    if (widths.front() != pdesc::kChannels) throw ArgumentError("manifold input must be 36 channels");
    for (int w : widths)
        if (w < 1) throw ArgumentError("manifold widths must be positive");
}

std::size_t ManifoldConfig::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i)
        n += static_cast<std::size_t>(widths[i]) * widths[i + 1] + widths[i + 1];
    return n;
}

std::vector<SamplePair> draw_sample_pairs(std::size_t rows, int count, std::uint64_t seed) {
    std::vector<SamplePair> pairs;
    if (rows < 2 || count < 1) return pairs;
    Rng rng(seed);
    pairs.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const std::size_t a = rng.below(rows);
        std::size_t b = rng.below(rows - 1);
        if (b >= a) ++b;
        pairs.push_back({a, b});
    }
    return pairs;
}

}  // namespace pwg
