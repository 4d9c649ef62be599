#pragma once

// Differentiable building blocks. Every layer is a value type holding its
// Parameters; forward passes are const and record what backward needs in a
// caller-owned tape, so one network can serve concurrent readers.

#include <pwg/image.hpp>
#include <pwg/rng.hpp>

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace pwg {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// out[c] += sum_r m[r * cols + c], accumulated in row order. Eigen's vectorised
// reductions regroup terms by buffer alignment, which breaks run-to-run bit equality.
template <typename T>
void add_column_sums(const T *m, int rows, int cols, T *out) {
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out[c] += m[static_cast<std::size_t>(r) * cols + c];
}

template <typename T>
struct Parameter {
    std::string name;
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;
    // Adam moments and step count.
    std::vector<T> m;
    std::vector<T> v;
    std::int64_t step = 0;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
        std::size_t count = 1;
        for (int d : shape) count *= static_cast<std::size_t>(d);
        value.assign(count, T(0));
        grad.assign(count, T(0));
        m.assign(count, T(0));
        v.assign(count, T(0));
    }

    std::size_t size() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }

    template <typename U>
    Parameter<U> cast() const {
        Parameter<U> out(name, shape);
        for (std::size_t i = 0; i < size(); ++i) {
            out.value[i] = static_cast<U>(value[i]);
            out.grad[i] = static_cast<U>(grad[i]);
            out.m[i] = static_cast<U>(m[i]);
            out.v[i] = static_cast<U>(v[i]);
        }
        out.step = step;
        out.trainable = trainable;
        return out;
    }
};

// Uniform on +-sqrt(6 / (fan_in + fan_out)). Shapes are (k, k, in, out) for
// convolutions and (in, out) for dense layers.
template <typename T>
std::vector<T> xavier_init(const std::vector<int> &shape, std::uint64_t seed) {
    int fan_in = 0, fan_out = 0;
    if (shape.size() == 4) {
        fan_in = shape[0] * shape[1] * shape[2];
        fan_out = shape[0] * shape[1] * shape[3];
    } else if (shape.size() == 2) {
        fan_in = shape[0];
        fan_out = shape[1];
    } else {
        throw ArgumentError("xavier_init: fan-in/fan-out undefined for rank " + std::to_string(shape.size()));
    }
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::size_t count = 1;
    for (int d : shape) count *= static_cast<std::size_t>(d);
    std::vector<T> out(count);
    Rng rng(seed);
    for (auto &v : out) v = static_cast<T>(rng.uniform(-bound, bound));
    return out;
}

// ---------------------------------------------------------------------------
// Elementwise activations.

template <typename T>
T relu(T x) {
    return x > T(0) ? x : T(0);
}

template <typename T>
T leaky_relu(T x, T slope = T(0.01)) {
    return x >= T(0) ? x : slope * x;
}

template <typename T>
void relu_inplace(std::span<T> x) {
    for (auto &v : x) v = relu(v);
}

template <typename T>
void leaky_relu_inplace(std::span<T> x, T slope = T(0.01)) {
    for (auto &v : x) v = leaky_relu(v, slope);
}

// Masks `grad` in place given the activation output (sign of output equals sign of input).
template <typename T>
void relu_backward(std::span<const T> out, std::span<T> grad) {
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (!(out[i] > T(0))) grad[i] = T(0);
}

template <typename T>
void leaky_relu_backward(std::span<const T> out, std::span<T> grad, T slope = T(0.01)) {
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (out[i] < T(0)) grad[i] *= slope;
}

// ---------------------------------------------------------------------------
// Per-pixel softmax over the channel axis.

template <typename T>
Image<T> softmax_channels(const Image<T> &logits) {
    if (logits.channels() < 2) throw ArgumentError("softmax_channels: need at least 2 channels");
    const int c = logits.channels();
    Image<T> out(logits.height(), logits.width(), c);
    for (int p = 0; p < logits.pixels(); ++p) {
        const T *in = logits.data() + static_cast<std::size_t>(p) * c;
        T *o = out.data() + static_cast<std::size_t>(p) * c;
        T mx = in[0];
        for (int k = 1; k < c; ++k) mx = std::max(mx, in[k]);
        T sum = 0;
        for (int k = 0; k < c; ++k) {
            o[k] = std::exp(in[k] - mx);
            sum += o[k];
        }
        const T inv = T(1) / sum;
        for (int k = 0; k < c; ++k) o[k] *= inv;
    }
    return out;
}

template <typename T>
Image<T> softmax_channels_backward(const Image<T> &out, const Image<T> &grad_out) {
    const int c = out.channels();
    Image<T> grad(out.height(), out.width(), c);
    for (int p = 0; p < out.pixels(); ++p) {
        const T *y = out.data() + static_cast<std::size_t>(p) * c;
        const T *g = grad_out.data() + static_cast<std::size_t>(p) * c;
        T *d = grad.data() + static_cast<std::size_t>(p) * c;
        T dot = 0;
        for (int k = 0; k < c; ++k) dot += y[k] * g[k];
        for (int k = 0; k < c; ++k) d[k] = y[k] * (g[k] - dot);
    }
    return grad;
}

// ---------------------------------------------------------------------------
// Stop-gradient: identity forward, zero backward.

template <typename T>
Image<T> stop_gradient(const Image<T> &x) {
    return x;
}

template <typename T>
Image<T> stop_gradient_backward(const Image<T> &grad_out) {
    return Image<T>(grad_out.height(), grad_out.width(), grad_out.channels());
}

// ---------------------------------------------------------------------------
// 2-D convolution (cross-correlation), stride 1, zero "same" padding.
// Weights are laid out (k, k, in, out); lowered to GEMM through im2col.

template <typename T>
class Conv2d {
  public:
    Conv2d() = default;
    Conv2d(const std::string &name, int kernel, int in_channels, int out_channels)
        : weight(name + ".weight", {kernel, kernel, in_channels, out_channels}),
          bias(name + ".bias", {out_channels}), kernel_(kernel), in_(in_channels), out_(out_channels) {
        if (kernel % 2 == 0 || kernel < 1) throw ArgumentError("Conv2d: kernel size must be odd");
    }

    int kernel() const { return kernel_; }
    int in_channels() const { return in_; }
    int out_channels() const { return out_; }
    std::size_t parameter_count() const { return weight.size() + bias.size(); }

    void init_xavier(std::uint64_t seed) {
        weight.value = xavier_init<T>(weight.shape, seed);
        std::fill(bias.value.begin(), bias.value.end(), T(0));
    }

    Image<T> forward(const Image<T> &x) const {
        check_input(x);
        const RowMatrix<T> cols = im2col(x);
        Image<T> y(x.height(), x.width(), out_);
        Eigen::Map<RowMatrix<T>> ym(y.data(), x.pixels(), out_);
        ym.noalias() = cols * weight_matrix();
        ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.value.data(), out_);
        return y;
    }

    // Accumulates weight/bias gradients when trainable; returns d(loss)/d(x) if requested
    // (otherwise an empty image).
    Image<T> backward(const Image<T> &x, const Image<T> &grad_out, bool want_input_grad) {
        check_input(x);
        if (grad_out.height() != x.height() || grad_out.width() != x.width() || grad_out.channels() != out_)
            throw ArgumentError("Conv2d::backward: gradient shape mismatch");
        Eigen::Map<const RowMatrix<T>> g(grad_out.data(), x.pixels(), out_);
        RowMatrix<T> cols;
        if (weight.trainable || want_input_grad) cols = im2col(x);
        if (weight.trainable) {
            Eigen::Map<RowMatrix<T>> gw(weight.grad.data(), kernel_ * kernel_ * in_, out_);
            gw.noalias() += cols.transpose() * g;
            add_column_sums(grad_out.data(), x.pixels(), out_, bias.grad.data());
        }
        if (!want_input_grad) return {};
        cols.noalias() = g * weight_matrix().transpose();
        return col2im(cols, x.height(), x.width());
    }

    Parameter<T> weight, bias;

  private:
    Eigen::Map<const RowMatrix<T>> weight_matrix() const {
        return {weight.value.data(), kernel_ * kernel_ * in_, out_};
    }

    void check_input(const Image<T> &x) const {
        if (x.channels() != in_)
            throw ArgumentError("Conv2d " + weight.name + ": expected " + std::to_string(in_) +
                                " input channels, got " + std::to_string(x.channels()));
    }

    RowMatrix<T> im2col(const Image<T> &x) const {
        const int h = x.height(), w = x.width(), r = kernel_ / 2;
        RowMatrix<T> cols = RowMatrix<T>::Zero(static_cast<Eigen::Index>(h) * w, kernel_ * kernel_ * in_);
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                T *row = cols.data() + (static_cast<std::size_t>(y) * w + xx) * cols.cols();
                for (int ky = 0; ky < kernel_; ++ky) {
                    const int sy = y + ky - r;
                    if (sy < 0 || sy >= h) continue;
                    for (int kx = 0; kx < kernel_; ++kx) {
                        const int sx = xx + kx - r;
                        if (sx < 0 || sx >= w) continue;
                        std::copy_n(x.pixel(sy, sx), in_, row + (ky * kernel_ + kx) * in_);
                    }
                }
            }
        return cols;
    }

    Image<T> col2im(const RowMatrix<T> &cols, int h, int w) const {
        Image<T> dx(h, w, in_);
        const int r = kernel_ / 2;
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                const T *row = cols.data() + (static_cast<std::size_t>(y) * w + xx) * cols.cols();
                for (int ky = 0; ky < kernel_; ++ky) {
                    const int sy = y + ky - r;
                    if (sy < 0 || sy >= h) continue;
                    for (int kx = 0; kx < kernel_; ++kx) {
                        const int sx = xx + kx - r;
                        if (sx < 0 || sx >= w) continue;
                        T *dst = dx.pixel(sy, sx);
                        const T *src = row + (ky * kernel_ + kx) * in_;
                        for (int c = 0; c < in_; ++c) dst[c] += src[c];
                    }
                }
            }
        return dx;
    }

    int kernel_ = 1, in_ = 0, out_ = 0;
};

// Stack of convolutions with ReLU after every layer but the last.
template <typename T>
class ConvStack {
  public:
    struct Tape {
        // Input seen by each layer.
        std::vector<Image<T>> inputs;
    };

    ConvStack() = default;
    // `widths` = {in, hidden..., out}; every layer uses the same kernel size.
    ConvStack(const std::string &name, int kernel, const std::vector<int> &widths) {
        if (widths.size() < 2) throw ArgumentError("ConvStack: need at least one layer");
        for (std::size_t i = 0; i + 1 < widths.size(); ++i)
            layers.emplace_back(name + ".conv" + std::to_string(i), kernel, widths[i], widths[i + 1]);
    }

    void init_xavier(std::uint64_t seed) {
        for (std::size_t i = 0; i < layers.size(); ++i) layers[i].init_xavier(derive_seed(seed, i));
    }

    Image<T> forward(const Image<T> &x, Tape *tape) const {
        if (tape) tape->inputs.clear();
        Image<T> cur = x;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            Image<T> next = layers[i].forward(cur);
            if (i + 1 < layers.size()) relu_inplace(next.span());
            if (tape) tape->inputs.push_back(std::move(cur));
            cur = std::move(next);
        }
        return cur;
    }

    Image<T> backward(const Tape &tape, const Image<T> &grad_out, bool want_input_grad) {
        Image<T> g = grad_out;
        for (std::size_t i = layers.size(); i-- > 0;) {
            const bool need = want_input_grad || i > 0;
            g = layers[i].backward(tape.inputs[i], g, need);
            if (i > 0) relu_backward<T>(tape.inputs[i].span(), g.span());
        }
        return g;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto &l : layers) n += l.parameter_count();
        return n;
    }

    void collect(std::vector<Parameter<T> *> &out) {
        for (auto &l : layers) {
            out.push_back(&l.weight);
            out.push_back(&l.bias);
        }
    }

    std::vector<Conv2d<T>> layers;
};

// Fully connected layer applied row-wise to an (N x in) matrix.
template <typename T>
class Dense {
  public:
    Dense() = default;
    Dense(const std::string &name, int in, int out)
        : weight(name + ".weight", {in, out}), bias(name + ".bias", {out}), in_(in), out_(out) {}

    int in_features() const { return in_; }
    int out_features() const { return out_; }
    std::size_t parameter_count() const { return weight.size() + bias.size(); }

    void init_xavier(std::uint64_t seed) {
        weight.value = xavier_init<T>(weight.shape, seed);
        std::fill(bias.value.begin(), bias.value.end(), T(0));
    }

    RowMatrix<T> forward(const RowMatrix<T> &x) const {
        if (x.cols() != in_) throw ArgumentError("Dense " + weight.name + ": input width mismatch");
        RowMatrix<T> y = x * weight_matrix();
        y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.value.data(), out_);
        return y;
    }

    RowMatrix<T> backward(const RowMatrix<T> &x, const RowMatrix<T> &grad_out, bool want_input_grad) {
        if (weight.trainable) {
            Eigen::Map<RowMatrix<T>> gw(weight.grad.data(), in_, out_);
            gw.noalias() += x.transpose() * grad_out;
            add_column_sums(grad_out.data(), static_cast<int>(grad_out.rows()), out_, bias.grad.data());
        }
        if (!want_input_grad) return {};
        return grad_out * weight_matrix().transpose();
    }

    Parameter<T> weight, bias;

  private:
    Eigen::Map<const RowMatrix<T>> weight_matrix() const { return {weight.value.data(), in_, out_}; }

    int in_ = 0, out_ = 0;
};

}  // namespace pwg
