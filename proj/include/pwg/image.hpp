#pragma once

#include <pwg/error.hpp>

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace pwg {

// Dense H x W x C array, row-major, channel-last.
template <typename T>
class Image {
  public:
    Image() = default;
    Image(int height, int width, int channels, T fill = T(0))
        : height_(height), width_(width), channels_(channels),
          data_(static_cast<std::size_t>(height) * width * channels, fill) {
        if (height < 0 || width < 0 || channels < 0)
            throw ArgumentError("Image: negative dimension");
    }

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    int pixels() const { return height_ * width_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t index(int y, int x, int c = 0) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }
    T &operator()(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
    const T &operator()(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

    T *pixel(int y, int x) { return data_.data() + index(y, x); }
    const T *pixel(int y, int x) const { return data_.data() + index(y, x); }

    std::span<T> span() { return data_; }
    std::span<const T> span() const { return data_; }
    T *data() { return data_.data(); }
    const T *data() const { return data_.data(); }
    std::vector<T> &vec() { return data_; }
    const std::vector<T> &vec() const { return data_; }

    bool same_shape(const Image &o) const {
        return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
    }
    bool same_extent(const Image &o) const { return height_ == o.height_ && width_ == o.width_; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    template <typename U>
    Image<U> cast() const {
        Image<U> out(height_, width_, channels_);
        std::transform(data_.begin(), data_.end(), out.vec().begin(),
                       [](T v) { return static_cast<U>(v); });
        return out;
    }

    // Channels [first, first + count) as a new image.
    Image slice_channels(int first, int count) const {
        Image out(height_, width_, count);
        for (int p = 0; p < pixels(); ++p)
            std::copy_n(data_.data() + static_cast<std::size_t>(p) * channels_ + first, count,
                        out.data() + static_cast<std::size_t>(p) * count);
        return out;
    }

    Image crop(int y0, int x0, int h, int w) const {
        if (y0 < 0 || x0 < 0 || y0 + h > height_ || x0 + w > width_)
            throw ArgumentError("Image::crop: window outside image");
        Image out(h, w, channels_);
        for (int y = 0; y < h; ++y)
            std::copy_n(pixel(y0 + y, x0), static_cast<std::size_t>(w) * channels_, out.pixel(y, 0));
        return out;
    }

    bool operator==(const Image &o) const = default;

  private:
    int height_ = 0, width_ = 0, channels_ = 0;
    std::vector<T> data_;
};

// Concatenate images along the channel axis.
template <typename T>
Image<T> concat_channels(std::initializer_list<const Image<T> *> parts) {
    const Image<T> &first = **parts.begin();
    int total = 0;
    for (auto *p : parts) {
        if (!p->same_extent(first)) throw ArgumentError("concat_channels: extent mismatch");
        total += p->channels();
    }
    Image<T> out(first.height(), first.width(), total);
    for (int i = 0; i < first.pixels(); ++i) {
        T *dst = out.data() + static_cast<std::size_t>(i) * total;
        for (auto *p : parts) {
            const int c = p->channels();
            std::copy_n(p->data() + static_cast<std::size_t>(i) * c, c, dst);
            dst += c;
        }
    }
    return out;
}

inline void require_same_shape(const auto &a, const auto &b, const std::string &what) {
    if (!a.same_shape(b))
        throw ArgumentError(what + ": shape mismatch (" + std::to_string(a.height()) + "x" +
                            std::to_string(a.width()) + "x" + std::to_string(a.channels()) +
                            " vs " + std::to_string(b.height()) + "x" + std::to_string(b.width()) +
                            "x" + std::to_string(b.channels()) + ")");
}

// Per-pixel, per-sample block H x W x S x C (row-major, channel-last).
template <typename T>
class SampleBlock {
  public:
    SampleBlock() = default;
    SampleBlock(int height, int width, int samples, int channels, T fill = T(0))
        : height_(height), width_(width), samples_(samples), channels_(channels),
          data_(static_cast<std::size_t>(height) * width * samples * channels, fill) {}

    int height() const { return height_; }
    int width() const { return width_; }
    int samples() const { return samples_; }
    int channels() const { return channels_; }
    int pixels() const { return height_ * width_; }
    std::size_t size() const { return data_.size(); }

    std::size_t index(int y, int x, int s, int c = 0) const {
        return ((static_cast<std::size_t>(y) * width_ + x) * samples_ + s) * channels_ + c;
    }
    T &operator()(int y, int x, int s, int c) { return data_[index(y, x, s, c)]; }
    const T &operator()(int y, int x, int s, int c) const { return data_[index(y, x, s, c)]; }
    T *sample(int y, int x, int s) { return data_.data() + index(y, x, s); }
    const T *sample(int y, int x, int s) const { return data_.data() + index(y, x, s); }

    T *data() { return data_.data(); }
    const T *data() const { return data_.data(); }
    std::vector<T> &vec() { return data_; }
    const std::vector<T> &vec() const { return data_; }

    template <typename U>
    SampleBlock<U> cast() const {
        SampleBlock<U> out(height_, width_, samples_, channels_);
        std::transform(data_.begin(), data_.end(), out.vec().begin(),
                       [](T v) { return static_cast<U>(v); });
        return out;
    }

    SampleBlock crop(int y0, int x0, int h, int w) const {
        if (y0 < 0 || x0 < 0 || y0 + h > height_ || x0 + w > width_)
            throw ArgumentError("SampleBlock::crop: window outside block");
        SampleBlock out(h, w, samples_, channels_);
        const std::size_t row = static_cast<std::size_t>(w) * samples_ * channels_;
        for (int y = 0; y < h; ++y) std::copy_n(sample(y0 + y, x0, 0), row, out.sample(y, 0, 0));
        return out;
    }

    bool operator==(const SampleBlock &o) const = default;

  private:
    int height_ = 0, width_ = 0, samples_ = 0, channels_ = 0;
    std::vector<T> data_;
};

}  // namespace pwg
