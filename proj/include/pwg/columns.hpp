#pragma once

// Kernel-predicting denoiser columns and the path-manifold embedding.

#include <pwg/diff.hpp>
#include <pwg/kernels.hpp>
#include <pwg/shot.hpp>

#include <optional>
#include <span>
#include <vector>

namespace pwg {

enum class Column { G, P };
std::string_view to_string(Column c);

inline constexpr int kPBufferChannels = 12;

struct DenoiserConfig {
    int depth = 9;
    int width = 100;
    int kernel = 5;
    int recon_kernel = 21;
    int input_channels = 3 + gbuf::kChannels;
    double width_scale = 1.0;

    // Default column configuration; width = round(100 * width_scale).
    static DenoiserConfig make(Column column, double width_scale = 1.0, int recon_kernel = 21);

    void validate() const;
    int aux_channels() const { return input_channels - 3; }
    std::vector<int> layer_widths() const;
    // Closed form: first layer, depth - 2 hidden layers, kernel-logit layer.
    std::size_t parameter_count() const;
};

struct ManifoldConfig {
    std::vector<int> widths{pdesc::kChannels, 64, 32, kPBufferChannels};
    double slope = 0.01;

    int output_dim() const { return widths.back(); }
    void validate() const;
    std::size_t parameter_count() const;
};

// Channel-wise input transform for descriptors: log1p on the radiance and photon
// energy channels, identity elsewhere.
template <typename T>
RowMatrix<T> descriptor_features(const SampleBlock<float> &block) {
    if (block.channels() != pdesc::kChannels)
        throw ArgumentError("descriptor block must have 36 channels, got " + std::to_string(block.channels()));
    const Eigen::Index rows = static_cast<Eigen::Index>(block.size() / pdesc::kChannels);
    RowMatrix<T> x(rows, pdesc::kChannels);
    const float *src = block.data();
    for (Eigen::Index r = 0; r < rows; ++r)
        for (int c = 0; c < pdesc::kChannels; ++c) {
            const double v = src[r * pdesc::kChannels + c];
            x(r, c) = static_cast<T>(c < pdesc::kPdf ? std::log1p(std::max(v, 0.0)) : v);
        }
    return x;
}

// Per-sample pointwise network with LeakyReLU between layers, averaged over samples.
template <typename T>
class Manifold {
  public:
    struct Tape {
        std::vector<RowMatrix<T>> inputs;
        RowMatrix<T> embeddings;  // (pixels * samples) x p
        int height = 0, width = 0, samples = 0;
    };

    Manifold() = default;
    Manifold(const std::string &name, ManifoldConfig cfg) : config_(std::move(cfg)) {
        config_.validate();
        for (std::size_t i = 0; i + 1 < config_.widths.size(); ++i)
            layers.emplace_back(name + ".fc" + std::to_string(i), config_.widths[i], config_.widths[i + 1]);
    }

    const ManifoldConfig &config() const { return config_; }

    void init_xavier(std::uint64_t seed) {
        for (std::size_t i = 0; i < layers.size(); ++i) layers[i].init_xavier(derive_seed(seed, i));
    }

    // Embeds every sample; rows are ordered (y, x, s).
    RowMatrix<T> embed_samples(const RowMatrix<T> &features, Tape *tape) const {
        if (tape) tape->inputs.clear();
        RowMatrix<T> cur = features;
        const T slope = static_cast<T>(config_.slope);
        for (std::size_t i = 0; i < layers.size(); ++i) {
            RowMatrix<T> next = layers[i].forward(cur);
            if (i + 1 < layers.size())
                leaky_relu_inplace(std::span<T>(next.data(), static_cast<std::size_t>(next.size())), slope);
            if (tape) tape->inputs.push_back(std::move(cur));
            cur = std::move(next);
        }
        return cur;
    }

    // P-buffer: per-pixel mean of the sample embeddings (H x W x p).
    Image<T> embed(const SampleBlock<float> &descriptors, Tape *tape) const {
        if (descriptors.samples() < 1) throw ArgumentError("embed_pbuffer: pixel has zero samples");
        RowMatrix<T> emb = embed_samples(descriptor_features<T>(descriptors), tape);
        const int s = descriptors.samples(), p = config_.output_dim();
        Image<T> out(descriptors.height(), descriptors.width(), p);
        const T inv = T(1) / static_cast<T>(s);
        for (int px = 0; px < out.pixels(); ++px) {
            T *o = out.data() + static_cast<std::size_t>(px) * p;
            for (int k = 0; k < s; ++k)
                for (int c = 0; c < p; ++c) o[c] += emb(static_cast<Eigen::Index>(px) * s + k, c);
            for (int c = 0; c < p; ++c) o[c] *= inv;
        }
        if (tape) {
            tape->embeddings = std::move(emb);
            tape->height = descriptors.height();
            tape->width = descriptors.width();
            tape->samples = s;
        }
        return out;
    }

    // Backpropagates a gradient on the P-buffer and/or directly on the per-sample embeddings.
    void backward(const Tape &tape, const Image<T> *grad_pbuffer, const RowMatrix<T> *grad_samples) {
        const int p = config_.output_dim();
        RowMatrix<T> g = RowMatrix<T>::Zero(tape.embeddings.rows(), p);
        if (grad_pbuffer) {
            const T inv = T(1) / static_cast<T>(tape.samples);
            for (int px = 0; px < grad_pbuffer->pixels(); ++px) {
                const T *gp = grad_pbuffer->data() + static_cast<std::size_t>(px) * p;
                for (int k = 0; k < tape.samples; ++k)
                    for (int c = 0; c < p; ++c) g(static_cast<Eigen::Index>(px) * tape.samples + k, c) = gp[c] * inv;
            }
        }
        if (grad_samples) g += *grad_samples;
        const T slope = static_cast<T>(config_.slope);
        for (std::size_t i = layers.size(); i-- > 0;) {
            g = layers[i].backward(tape.inputs[i], g, i > 0);
            if (i > 0) {
                const RowMatrix<T> &act = tape.inputs[i];
                leaky_relu_backward<T>(std::span<const T>(act.data(), static_cast<std::size_t>(act.size())),
                                       std::span<T>(g.data(), static_cast<std::size_t>(g.size())), slope);
            }
        }
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

    std::vector<Dense<T>> layers;

  private:
    ManifoldConfig config_;
};

// Kernel-predicting denoiser: conv stack -> per-pixel softmax kernel -> weighted reconstruction.
template <typename T>
class Denoiser {
  public:
    struct Tape {
        typename ConvStack<T>::Tape net;
        Image<T> noisy;
        Image<T> kernels;
    };

    Denoiser() = default;
    Denoiser(const std::string &name, DenoiserConfig cfg)
        : config_(cfg), net(name, cfg.kernel, checked_widths(cfg)) {}

    const DenoiserConfig &config() const { return config_; }

    void init_xavier(std::uint64_t seed) { net.init_xavier(seed); }

    Image<T> predict_kernels(const Image<T> &noisy, const Image<T> &aux, Tape *tape) const {
        if (noisy.channels() != 3) throw ArgumentError("denoiser expects 3-channel radiance");
        if (aux.channels() != config_.aux_channels())
            throw ArgumentError("denoiser expects " + std::to_string(config_.aux_channels()) +
                                " auxiliary channels, got " + std::to_string(aux.channels()));
        if (!noisy.same_extent(aux)) throw ArgumentError("denoiser: radiance/aux extent mismatch");
        Image<T> logits = net.forward(concat_channels<T>({&noisy, &aux}), tape ? &tape->net : nullptr);
        Image<T> kernels = softmax_channels(logits);
        if (tape) {
            tape->noisy = noisy;
            tape->kernels = kernels;
        }
        return kernels;
    }

    Image<T> forward(const Image<T> &noisy, const Image<T> &aux, Tape *tape) const {
        Image<T> kernels = predict_kernels(noisy, aux, tape);
        return apply_kernels(noisy, kernels);
    }

    // Accumulates parameter gradients; returns d(loss)/d(aux) when requested.
    Image<T> backward(const Tape &tape, const Image<T> &grad_out, bool want_aux_grad) {
        Image<T> grad_kernels;
        apply_kernels_backward<T>(tape.noisy, tape.kernels, grad_out, nullptr, &grad_kernels);
        Image<T> grad_logits = softmax_channels_backward(tape.kernels, grad_kernels);
        Image<T> grad_in = net.backward(tape.net, grad_logits, want_aux_grad);
        if (!want_aux_grad) return {};
        return grad_in.slice_channels(3, config_.aux_channels());
    }

    std::size_t parameter_count() const { return net.parameter_count(); }
    void collect(std::vector<Parameter<T> *> &out) { net.collect(out); }

  private:
    static std::vector<int> checked_widths(const DenoiserConfig &cfg) {
        cfg.validate();
        return cfg.layer_widths();
    }

    DenoiserConfig config_;

  public:
    ConvStack<T> net;
};

// Surrogate contrastive objective on per-sample embeddings.
struct PathLossConfig {
    double tau_pos = 0.05;
    double tau_neg = 0.2;
    double margin = 1.0;
    int pairs = 256;
};

struct SamplePair {
    std::size_t a = 0, b = 0;  // embedding rows
};

template <typename T>
struct PathLossResult {
    T value = 0;
    RowMatrix<T> grad;  // d(value)/d(embeddings)
    bool degenerate = false;
    int positives = 0, negatives = 0;
};

std::vector<SamplePair> draw_sample_pairs(std::size_t rows, int count, std::uint64_t seed);

// `reference` is the tone-mapped reference radiance (H x W x 3); embedding row r belongs to
// pixel r / samples. Pairs whose reference values differ (mean abs over channels) by less
// than tau_pos contribute their squared distance; pairs differing by more than tau_neg
// contribute max(0, margin - distance)^2. Returns the mean over all pairs.
template <typename T>
PathLossResult<T> path_disentangle_loss(const RowMatrix<T> &embeddings, const Image<T> &reference, int samples,
                                        std::span<const SamplePair> pairs, const PathLossConfig &cfg) {
    if (!(cfg.tau_pos < cfg.tau_neg)) throw ArgumentError("path_disentangle_loss: tau_pos must be < tau_neg");
    PathLossResult<T> res;
    res.grad = RowMatrix<T>::Zero(embeddings.rows(), embeddings.cols());
    if (embeddings.rows() < 2 || pairs.empty()) {
        res.degenerate = true;
        return res;
    }
    const T inv_pairs = T(1) / static_cast<T>(pairs.size());
    for (const auto &pr : pairs) {
        const T *ra = reference.data() + (pr.a / samples) * 3;
        const T *rb = reference.data() + (pr.b / samples) * 3;
        const T diff = (std::abs(ra[0] - rb[0]) + std::abs(ra[1] - rb[1]) + std::abs(ra[2] - rb[2])) / T(3);
        const bool positive = diff < static_cast<T>(cfg.tau_pos);
        const bool negative = diff > static_cast<T>(cfg.tau_neg);
        if (!positive && !negative) continue;
        const auto delta = (embeddings.row(pr.a) - embeddings.row(pr.b)).eval();
        const T d2 = delta.squaredNorm();
        if (positive) {
            ++res.positives;
            res.value += d2 * inv_pairs;
            res.grad.row(pr.a) += T(2) * inv_pairs * delta;
            res.grad.row(pr.b) -= T(2) * inv_pairs * delta;
        } else {
            ++res.negatives;
            const T d = std::sqrt(d2);
            const T gap = static_cast<T>(cfg.margin) - d;
            if (gap <= T(0)) continue;
            res.value += gap * gap * inv_pairs;
            if (d > T(1e-12)) {
                // d/d(e_a) (m - d)^2 = -2 (m - d) (e_a - e_b) / d
                const auto g = (T(-2) * gap / d * inv_pairs) * delta;
                res.grad.row(pr.a) += g;
                res.grad.row(pr.b) -= g;
            }
        }
    }
    return res;
}

}  // namespace pwg
