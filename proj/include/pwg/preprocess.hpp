#pragma once

#include <pwg/shot.hpp>

#include <cmath>

namespace pwg {

inline constexpr double kAlbedoEps = 0.00316;
inline constexpr double kGamma = 2.2;

// diffuse / (albedo + eps), per channel.
template <typename T>
Image<T> preprocess_diffuse(const Image<T> &diffuse, const Image<T> &albedo, double eps = kAlbedoEps) {
    if (!(eps > 0.0)) throw ArgumentError("preprocess_diffuse: eps must be > 0");
    require_same_shape(diffuse, albedo, "preprocess_diffuse");
    Image<T> out(diffuse.height(), diffuse.width(), diffuse.channels());
    for (std::size_t i = 0; i < out.size(); ++i)
        out.vec()[i] = diffuse.vec()[i] / (albedo.vec()[i] + static_cast<T>(eps));
    return out;
}

// ln(1 + specular), elementwise.
template <typename T>
Image<T> preprocess_specular(const Image<T> &specular) {
    Image<T> out(specular.height(), specular.width(), specular.channels());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T v = specular.vec()[i];
        if (!(v >= T(0))) throw ArgumentError("preprocess_specular: negative or NaN input");
        out.vec()[i] = std::log1p(v);
    }
    return out;
}

// (albedo + eps) * diffuse + exp(specular) - 1, clamped below at 0.
template <typename T>
Image<T> postprocess_combine(const Image<T> &denoised_diffuse, const Image<T> &denoised_specular,
                             const Image<T> &albedo, double eps = kAlbedoEps) {
    require_same_shape(denoised_diffuse, denoised_specular, "postprocess_combine");
    require_same_shape(denoised_diffuse, albedo, "postprocess_combine");
    Image<T> out(albedo.height(), albedo.width(), albedo.channels());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T v = (albedo.vec()[i] + static_cast<T>(eps)) * denoised_diffuse.vec()[i] +
                    std::expm1(denoised_specular.vec()[i]);
        out.vec()[i] = std::max(v, T(0));
    }
    return out;
}

// Gradients of postprocess_combine with respect to both denoised inputs.
template <typename T>
void postprocess_combine_backward(const Image<T> &denoised_diffuse, const Image<T> &denoised_specular,
                                  const Image<T> &albedo, const Image<T> &grad_out, Image<T> &grad_diffuse,
                                  Image<T> &grad_specular, double eps = kAlbedoEps) {
    grad_diffuse = Image<T>(albedo.height(), albedo.width(), albedo.channels());
    grad_specular = Image<T>(albedo.height(), albedo.width(), albedo.channels());
    for (std::size_t i = 0; i < albedo.size(); ++i) {
        const T scale = albedo.vec()[i] + static_cast<T>(eps);
        const T ex = std::exp(denoised_specular.vec()[i]);
        const T v = scale * denoised_diffuse.vec()[i] + ex - T(1);
        if (v <= T(0)) continue;
        grad_diffuse.vec()[i] = grad_out.vec()[i] * scale;
        grad_specular.vec()[i] = grad_out.vec()[i] * ex;
    }
}

// Inverse of the branch preprocessing for one branch alone, clamped below at 0.
template <typename T>
Image<T> postprocess_branch(Branch b, const Image<T> &denoised, const Image<T> &albedo,
                            double eps = kAlbedoEps) {
    Image<T> out(denoised.height(), denoised.width(), denoised.channels());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T v = b == Branch::Diffuse ? (albedo.vec()[i] + static_cast<T>(eps)) * denoised.vec()[i]
                                         : std::expm1(denoised.vec()[i]);
        out.vec()[i] = std::max(v, T(0));
    }
    return out;
}

// clamp(hdr, 0, inf)^(1/2.2), clamped to [0,1].
template <typename T>
Image<T> tone_map(const Image<T> &hdr) {
    Image<T> out(hdr.height(), hdr.width(), hdr.channels());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T v = hdr.vec()[i];
        if (std::isnan(v)) throw ArgumentError("tone_map: NaN input");
        const T c = std::max(v, T(0));
        out.vec()[i] = std::min(T(std::pow(c, T(1.0 / kGamma))), T(1));
    }
    return out;
}

// Branch radiance of a shot mapped into the denoising domain.
Image<float> preprocess_noisy(const Shot &shot, Branch b);
Image<float> preprocess_reference(const Shot &shot, Branch b);

}  // namespace pwg
