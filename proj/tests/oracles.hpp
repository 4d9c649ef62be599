#pragma once

// Independent reference implementations shared by the unit tests and the acceptance suite.

#include <pwg/image.hpp>

#include <algorithm>
#include <cmath>

namespace pwg::test {

// Nested-loop reference for per-pixel kernel reconstruction with replicated borders.
inline Image<double> kernel_oracle(const Image<double> &img, const Image<double> &k) {
    const int side = static_cast<int>(std::lround(std::sqrt(k.channels()))), r = side / 2;
    Image<double> out(img.height(), img.width(), img.channels());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < img.channels(); ++c) {
                double acc = 0;
                for (int i = 0; i < side; ++i)
                    for (int j = 0; j < side; ++j) {
                        const int sy = std::min(std::max(y + i - r, 0), img.height() - 1);
                        const int sx = std::min(std::max(x + j - r, 0), img.width() - 1);
                        acc += k(y, x, i * side + j) * img(sy, sx, c);
                    }
                out(y, x, c) = acc;
            }
    return out;
}

// Straight 2-D Gaussian-window SSIM, one window position at a time.
inline double ssim_oracle(const Image<float> &a, const Image<float> &b) {
    const int k = 11, r = 5;
    double win[11][11], norm = 0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            win[i][j] = std::exp(-((i - r) * (i - r) + (j - r) * (j - r)) / (2 * 1.5 * 1.5));
            norm += win[i][j];
        }
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0;
    for (int c = 0; c < a.channels(); ++c) {
        double acc = 0;
        int count = 0;
        for (int y = 0; y + k <= a.height(); ++y)
            for (int x = 0; x + k <= a.width(); ++x) {
                double mx = 0, my = 0;
                for (int i = 0; i < k; ++i)
                    for (int j = 0; j < k; ++j) {
                        mx += win[i][j] / norm * a(y + i, x + j, c);
                        my += win[i][j] / norm * b(y + i, x + j, c);
                    }
                double vx = 0, vy = 0, cov = 0;
                for (int i = 0; i < k; ++i)
                    for (int j = 0; j < k; ++j) {
                        const double dx = a(y + i, x + j, c) - mx, dy = b(y + i, x + j, c) - my;
                        vx += win[i][j] / norm * dx * dx;
                        vy += win[i][j] / norm * dy * dy;
                        cov += win[i][j] / norm * dx * dy;
                    }
                acc += (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++count;
            }
        total += acc / count;
    }
    return total / a.channels();
}

}  // namespace pwg::test
