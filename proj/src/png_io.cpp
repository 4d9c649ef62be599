#include <pwg/png_io.hpp>

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace pwg {

namespace {

struct FileCloser {
    void operator()(std::FILE *f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

std::uint8_t quantize_unit(float v) {
    if (std::isnan(v)) throw ArgumentError("quantize_unit: NaN");
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

void write_png(const Image<float> &img, const std::filesystem::path &path) {
    if (img.channels() != 1 && img.channels() != 3)
        throw ArgumentError("write_png: expected 1 or 3 channels, got " + std::to_string(img.channels()));
    if (img.empty()) throw ArgumentError("write_png: empty image");
    File f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError(path.string(), "cannot open for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError(path.string(), "libpng initialisation failed");
    }
    std::vector<std::uint8_t> bytes(img.size());
    std::transform(img.vec().begin(), img.vec().end(), bytes.begin(), quantize_unit);
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height()));
    for (int y = 0; y < img.height(); ++y)
        rows[y] = bytes.data() + static_cast<std::size_t>(y) * img.width() * img.channels();
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError(path.string(), "libpng write failed");
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, img.width(), img.height(), 8,
                 img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image<float> read_png(const std::filesystem::path &path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) throw IoError(path.string(), image.message);
    const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
    image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    const int c = gray ? 1 : 3;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&image);
        throw IoError(path.string(), image.message);
    }
    Image<float> out(static_cast<int>(image.height), static_cast<int>(image.width), c);
    for (std::size_t i = 0; i < out.size(); ++i) out.vec()[i] = buf[i] / 255.0f;
    return out;
}

Image<float> heat_map(const Image<float> &values) {
    if (values.channels() != 1) throw ArgumentError("heat_map: expected a single-channel image");
    Image<float> out(values.height(), values.width(), 3);
    for (int p = 0; p < values.pixels(); ++p) {
        const float t = std::clamp(values.vec()[p], 0.0f, 1.0f) * 3.0f;
        out.vec()[3 * p] = std::min(t, 1.0f);
        out.vec()[3 * p + 1] = std::clamp(t - 1.0f, 0.0f, 1.0f);
        out.vec()[3 * p + 2] = std::clamp(t - 2.0f, 0.0f, 1.0f);
    }
    return out;
}

}  // namespace pwg
