#include <pwg/ensembler.hpp>

namespace pwg {

EnsemblerConfig EnsemblerConfig::make(double width_scale) {
    EnsemblerConfig cfg;
    cfg.width_scale = width_scale;
    cfg.width = std::max(1, static_cast<int>(std::lround(50.0 * width_scale)));
    cfg.validate();
    return cfg;
}

void EnsemblerConfig::validate() const {
    if (layers < 1) throw ArgumentError("ensembler needs at least one hidden layer");
    if (width < 1) throw ArgumentError("ensembler width must be positive");
    if (kernel < 1 || kernel % 2 == 0) throw ArgumentError("ensembler kernel must be odd");
}

std::vector<int> EnsemblerConfig::layer_widths() const {
    std::vector<int> w{input_channels};
    for (int i = 0; i < layers; ++i) w.push_back(width);
    w.push_back(2);
    return w;
}

std::size_t EnsemblerConfig::parameter_count() const {
    const auto widths = layer_widths();
    std::size_t n = 0;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i)
        n += static_cast<std::size_t>(kernel) * kernel * widths[i] * widths[i + 1] + widths[i + 1];
    return n;
}

}  // namespace pwg
