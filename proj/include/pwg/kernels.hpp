#pragma once

#include <pwg/image.hpp>

#include <algorithm>
#include <cmath>

namespace pwg {

inline int kernel_side(int kernel_channels) {
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(kernel_channels))));
    if (side * side != kernel_channels || side % 2 == 0)
        throw ArgumentError("kernel map must hold an odd square number of weights per pixel, got " +
                            std::to_string(kernel_channels));
    return side;
}

// Per-pixel weighted sum of the side x side neighborhood of `image` (replicated borders).
// Kernel weights are stored row-major in the channel axis of `kernels`.
template <typename T>
Image<T> apply_kernels(const Image<T> &image, const Image<T> &kernels) {
    if (!image.same_extent(kernels)) throw ArgumentError("apply_kernels: extent mismatch");
    const int side = kernel_side(kernels.channels()), r = side / 2;
    const int h = image.height(), w = image.width(), c = image.channels();
    Image<T> out(h, w, c);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const T *k = kernels.pixel(y, x);
            T *o = out.pixel(y, x);
            for (int dy = -r; dy <= r; ++dy) {
                const int sy = std::clamp(y + dy, 0, h - 1);
                for (int dx = -r; dx <= r; ++dx) {
                    const int sx = std::clamp(x + dx, 0, w - 1);
                    const T wgt = k[(dy + r) * side + (dx + r)];
                    const T *src = image.pixel(sy, sx);
                    for (int ch = 0; ch < c; ++ch) o[ch] += wgt * src[ch];
                }
            }
        }
    return out;
}

// Gradients of apply_kernels. Either output pointer may be null.
template <typename T>
void apply_kernels_backward(const Image<T> &image, const Image<T> &kernels, const Image<T> &grad_out,
                            Image<T> *grad_image, Image<T> *grad_kernels) {
    const int side = kernel_side(kernels.channels()), r = side / 2;
    const int h = image.height(), w = image.width(), c = image.channels();
    if (grad_image) *grad_image = Image<T>(h, w, c);
    if (grad_kernels) *grad_kernels = Image<T>(h, w, kernels.channels());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const T *k = kernels.pixel(y, x);
            const T *g = grad_out.pixel(y, x);
            for (int dy = -r; dy <= r; ++dy) {
                const int sy = std::clamp(y + dy, 0, h - 1);
                for (int dx = -r; dx <= r; ++dx) {
                    const int sx = std::clamp(x + dx, 0, w - 1);
                    const int j = (dy + r) * side + (dx + r);
                    const T *src = image.pixel(sy, sx);
                    if (grad_kernels) {
                        T acc = 0;
                        for (int ch = 0; ch < c; ++ch) acc += src[ch] * g[ch];
                        (*grad_kernels)(y, x, j) = acc;
                    }
                    if (grad_image) {
                        T *dst = grad_image->pixel(sy, sx);
                        for (int ch = 0; ch < c; ++ch) dst[ch] += k[j] * g[ch];
                    }
                }
            }
        }
}

}  // namespace pwg
