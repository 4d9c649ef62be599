#pragma once

// Ensembling network: per-pixel convex weights over the two column outputs.

#include <pwg/diff.hpp>

#include <array>
#include <cmath>
#include <optional>

namespace pwg {

struct EnsemblerConfig {
    int layers = 8;
    int width = 50;
    int kernel = 5;
    int input_channels = 3 + 3 + 24 + 12;
    double width_scale = 1.0;

    static EnsemblerConfig make(double width_scale = 1.0);
    void validate() const;
    std::vector<int> layer_widths() const;
    std::size_t parameter_count() const;
};

template <typename T>
struct WeightMaps {
    Image<T> wg;  // H x W x 1
    Image<T> wp;
};

// Throws ValidationError unless wg + wp == 1 within `tol` and both lie in [0, 1].
template <typename T>
void check_weights(const WeightMaps<T> &w, double tol) {
    if (!w.wg.same_shape(w.wp) || w.wg.channels() != 1)
        throw ValidationError("weights", "maps must be single-channel and equally sized");
    for (std::size_t i = 0; i < w.wg.size(); ++i) {
        const double g = w.wg.vec()[i], p = w.wp.vec()[i];
        if (!(g >= 0.0 && g <= 1.0 && p >= 0.0 && p <= 1.0)) throw ValidationError("weights", "outside [0,1]");
        if (std::abs(g + p - 1.0) > tol) throw ValidationError("weights", "W_G + W_P != 1");
    }
}

// I_E = I_G * W_G + I_P * W_P with the weights broadcast over colour channels.
template <typename T>
Image<T> combine(const Image<T> &ig, const Image<T> &ip, const WeightMaps<T> &w) {
    require_same_shape(ig, ip, "combine");
    if (!w.wg.same_extent(ig)) throw ArgumentError("combine: weight maps do not match image extent");
    check_weights(w, std::is_same_v<T, float> ? 1e-5 : 1e-12);
    Image<T> out(ig.height(), ig.width(), ig.channels());
    const int c = ig.channels();
    for (int p = 0; p < ig.pixels(); ++p) {
        const T g = w.wg.vec()[p], q = w.wp.vec()[p];
        for (int k = 0; k < c; ++k) {
            const std::size_t i = static_cast<std::size_t>(p) * c + k;
            out.vec()[i] = ig.vec()[i] * g + ip.vec()[i] * q;
        }
    }
    return out;
}

template <typename T>
struct CombineGrads {
    Image<T> ig, ip;
    Image<T> wg, wp;
};

template <typename T>
CombineGrads<T> combine_backward(const Image<T> &ig, const Image<T> &ip, const WeightMaps<T> &w,
                                 const Image<T> &grad_out) {
    CombineGrads<T> g{Image<T>(ig.height(), ig.width(), ig.channels()),
                      Image<T>(ig.height(), ig.width(), ig.channels()), Image<T>(ig.height(), ig.width(), 1),
                      Image<T>(ig.height(), ig.width(), 1)};
    const int c = ig.channels();
    for (int p = 0; p < ig.pixels(); ++p) {
        const T wg = w.wg.vec()[p], wp = w.wp.vec()[p];
        T sg = 0, sp = 0;
        for (int k = 0; k < c; ++k) {
            const std::size_t i = static_cast<std::size_t>(p) * c + k;
            const T d = grad_out.vec()[i];
            g.ig.vec()[i] = wg * d;
            g.ip.vec()[i] = wp * d;
            sg += ig.vec()[i] * d;
            sp += ip.vec()[i] * d;
        }
        g.wg.vec()[p] = sg;
        g.wp.vec()[p] = sp;
    }
    return g;
}

template <typename T>
class Ensembler {
  public:
    struct Tape {
        typename ConvStack<T>::Tape net;
        Image<T> softmax;  // H x W x 2
        bool overridden = false;
    };

    Ensembler() = default;
    Ensembler(const std::string &name, EnsemblerConfig cfg) : config_(cfg), net(name, cfg.kernel, widths(cfg)) {}

    const EnsemblerConfig &config() const { return config_; }
    void init_xavier(std::uint64_t seed) { net.init_xavier(seed); }

    // Column outputs and the P-buffer enter through stop_gradient. When `logit_override`
    // is set the network output is replaced by those two constant logits.
    WeightMaps<T> predict_weights(const Image<T> &ig, const Image<T> &ip, const Image<T> &fg, const Image<T> &fp,
                                  Tape *tape, std::optional<std::array<T, 2>> logit_override = {}) const {
        if (!ig.same_extent(ip) || !ig.same_extent(fg) || !ig.same_extent(fp))
            throw ArgumentError("predict_weights: input extents differ");
        const Image<T> sg_ig = stop_gradient(ig), sg_ip = stop_gradient(ip), sg_fp = stop_gradient(fp);
        Image<T> input = concat_channels<T>({&sg_ig, &sg_ip, &fg, &sg_fp});
        if (input.channels() != config_.input_channels)
            throw ArgumentError("predict_weights: expected " + std::to_string(config_.input_channels) +
                                " input channels, got " + std::to_string(input.channels()));
        Image<T> logits;
        if (logit_override) {
            logits = Image<T>(ig.height(), ig.width(), 2);
            for (int p = 0; p < logits.pixels(); ++p) {
                logits.vec()[2 * p] = (*logit_override)[0];
                logits.vec()[2 * p + 1] = (*logit_override)[1];
            }
        } else {
            logits = net.forward(input, tape ? &tape->net : nullptr);
        }
        Image<T> soft = softmax_channels(logits);
        WeightMaps<T> w{soft.slice_channels(0, 1), soft.slice_channels(1, 1)};
        if (tape) {
            tape->softmax = std::move(soft);
            tape->overridden = logit_override.has_value();
        }
        return w;
    }

    // Accumulates parameter gradients from d(loss)/d(W). The returned gradients for the
    // column outputs pass through stop_gradient and are therefore zero.
    std::pair<Image<T>, Image<T>> backward(const Tape &tape, const Image<T> &grad_wg, const Image<T> &grad_wp) {
        Image<T> g(grad_wg.height(), grad_wg.width(), 2);
        for (int p = 0; p < g.pixels(); ++p) {
            g.vec()[2 * p] = grad_wg.vec()[p];
            g.vec()[2 * p + 1] = grad_wp.vec()[p];
        }
        if (!tape.overridden) {
            Image<T> grad_logits = softmax_channels_backward(tape.softmax, g);
            net.backward(tape.net, grad_logits, false);
        }
        const Image<T> upstream(g.height(), g.width(), 3);
        return {stop_gradient_backward(upstream), stop_gradient_backward(upstream)};
    }

    std::size_t parameter_count() const { return net.parameter_count(); }
    void collect(std::vector<Parameter<T> *> &out) { net.collect(out); }

  private:
    static std::vector<int> widths(const EnsemblerConfig &cfg) {
        cfg.validate();
        return cfg.layer_widths();
    }

    EnsemblerConfig config_;

  public:
    ConvStack<T> net;
};

}  // namespace pwg
