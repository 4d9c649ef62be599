#pragma once

// Full model state (both branches) plus the per-branch forward pipeline shared by
// training, evaluation and the CLI.

#include <pwg/columns.hpp>
#include <pwg/ensembler.hpp>
#include <pwg/preprocess.hpp>

#include <array>
#include <filesystem>
#include <limits>
#include <optional>

namespace pwg {

struct ModelConfig {
    double width_scale = 1.0;
    DenoiserConfig g = DenoiserConfig::make(Column::G);
    DenoiserConfig p = DenoiserConfig::make(Column::P);
    ManifoldConfig manifold;
    EnsemblerConfig ensembler;

    static ModelConfig make(double width_scale, int recon_kernel = 21);
    void validate() const;
};

template <typename T>
struct BranchModel {
    Denoiser<T> dg, dp;
    Manifold<T> manifold;
    Ensembler<T> ensembler;

    BranchModel() = default;
    BranchModel(const std::string &prefix, const ModelConfig &cfg)
        : dg(prefix + ".dg", cfg.g), dp(prefix + ".dp", cfg.p), manifold(prefix + ".manifold", cfg.manifold),
          ensembler(prefix + ".ensembler", cfg.ensembler) {}

    // Column P owns its manifold module.
    std::vector<Parameter<T> *> column_parameters(Column c) {
        std::vector<Parameter<T> *> out;
        if (c == Column::G) {
            dg.collect(out);
        } else {
            dp.collect(out);
            manifold.collect(out);
        }
        return out;
    }
    std::vector<Parameter<T> *> ensembler_parameters() {
        std::vector<Parameter<T> *> out;
        ensembler.collect(out);
        return out;
    }
    std::vector<Parameter<T> *> parameters() {
        std::vector<Parameter<T> *> out;
        dg.collect(out);
        dp.collect(out);
        manifold.collect(out);
        ensembler.collect(out);
        return out;
    }
};

struct Provenance {
    bool pretrained_g = false;
    bool pretrained_p = false;
    std::string last_mode = "init";
};

template <typename T>
struct ModelState {
    ModelConfig config;
    std::array<BranchModel<T>, 2> branches;
    Provenance provenance;
    int epochs = 0;
    double best_validation = std::numeric_limits<double>::infinity();

    ModelState() : ModelState(ModelConfig{}) {}
    explicit ModelState(const ModelConfig &cfg)
        : config(cfg), branches{BranchModel<T>("diffuse", cfg), BranchModel<T>("specular", cfg)} {
        cfg.validate();
    }

    BranchModel<T> &branch(Branch b) { return branches[static_cast<int>(b)]; }
    const BranchModel<T> &branch(Branch b) const { return branches[static_cast<int>(b)]; }

    // Xavier weights, zero biases. Every module draws from its own seed stream.
    void init(std::uint64_t seed) {
        for (int b = 0; b < 2; ++b) {
            auto &m = branches[b];
            m.dg.init_xavier(derive_seed(seed, 10 * b + 1));
            m.dp.init_xavier(derive_seed(seed, 10 * b + 2));
            m.manifold.init_xavier(derive_seed(seed, 10 * b + 3));
            m.ensembler.init_xavier(derive_seed(seed, 10 * b + 4));
        }
    }

    std::vector<Parameter<T> *> parameters() {
        std::vector<Parameter<T> *> out;
        for (auto &b : branches)
            for (auto *p : b.parameters()) out.push_back(p);
        return out;
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for (auto *p : parameters()) n += p->size();
        return n;
    }

    template <typename U>
    ModelState<U> cast() const {
        ModelState<U> out(config);
        out.provenance = provenance;
        out.epochs = epochs;
        out.best_validation = best_validation;
        ModelState self = *this;
        auto src = self.parameters();
        auto dst = out.parameters();
        for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<U>();
        return out;
    }
};

// Checkpoints use the shared container format with kind "checkpoint".
void save_checkpoint(const ModelState<float> &state, const std::filesystem::path &dir);
ModelState<float> load_checkpoint(const std::filesystem::path &dir);
void save_checkpoint(const ModelState<double> &state, const std::filesystem::path &dir);
ModelState<double> load_checkpoint_f64(const std::filesystem::path &dir);

// Branch data of one shot, mapped into the denoising domain.
template <typename T>
struct BranchInput {
    Branch branch = Branch::Diffuse;
    Image<T> noisy;    // preprocessed noisy radiance
    Image<T> gbuffer;  // 24 channels
    Image<T> albedo;
    SampleBlock<float> descriptors;
    std::optional<Image<T>> reference;      // preprocessed reference
    std::optional<Image<T>> reference_ldr;  // tone-mapped branch reference
};

template <typename T>
BranchInput<T> make_branch_input(const Shot &shot, Branch b) {
    BranchInput<T> in;
    in.branch = b;
    in.noisy = preprocess_noisy(shot, b).template cast<T>();
    in.gbuffer = shot.gbuffer(b).template cast<T>();
    in.albedo = shot.albedo(b).template cast<T>();
    in.descriptors = shot.descriptors;
    if (shot.has_reference()) {
        in.reference = preprocess_reference(shot, b).template cast<T>();
        in.reference_ldr = tone_map(shot.reference(b)).template cast<T>();
    }
    return in;
}

// Every intermediate of one branch's forward pass.
template <typename T>
struct BranchForward {
    typename Manifold<T>::Tape manifold_tape;
    typename Denoiser<T>::Tape dg_tape, dp_tape;
    typename Ensembler<T>::Tape ens_tape;
    Image<T> fp;  // P-buffer
    Image<T> ig, ip;
    WeightMaps<T> weights;
    Image<T> ie;
};

template <typename T>
Image<T> run_column(const BranchModel<T> &m, Column c, const BranchInput<T> &in, BranchForward<T> *rec) {
    if (c == Column::G) return m.dg.forward(in.noisy, in.gbuffer, rec ? &rec->dg_tape : nullptr);
    if (in.descriptors.samples() < 1) throw StateError("column P requires path descriptors");
    Image<T> fp = m.manifold.embed(in.descriptors, rec ? &rec->manifold_tape : nullptr);
    Image<T> out = m.dp.forward(in.noisy, fp, rec ? &rec->dp_tape : nullptr);
    if (rec) rec->fp = std::move(fp);
    return out;
}

// Both columns, weights and ensembled result. Tapes are recorded only when `record`.
template <typename T>
BranchForward<T> forward_branch(const BranchModel<T> &m, const BranchInput<T> &in, bool record,
                                std::optional<std::array<T, 2>> logit_override = {}) {
    BranchForward<T> f;
    f.ig = m.dg.forward(in.noisy, in.gbuffer, record ? &f.dg_tape : nullptr);
    f.fp = m.manifold.embed(in.descriptors, record ? &f.manifold_tape : nullptr);
    f.ip = m.dp.forward(in.noisy, f.fp, record ? &f.dp_tape : nullptr);
    f.weights = m.ensembler.predict_weights(f.ig, f.ip, in.gbuffer, f.fp, record ? &f.ens_tape : nullptr,
                                            logit_override);
    f.ie = combine(f.ig, f.ip, f.weights);
    return f;
}

// Denoised preprocessed-domain branch image from one column.
template <typename T>
Image<T> denoise_column(const Shot &shot, Column c, Branch b, const ModelState<T> &state) {
    return run_column<T>(state.branch(b), c, make_branch_input<T>(shot, b), nullptr);
}

struct DenoiseResult {
    // Per branch, preprocessed domain.
    std::array<Image<float>, 2> ig, ip, ie;
    std::array<WeightMaps<float>, 2> weights;
    // Output-domain radiance.
    Image<float> final_image, column_g, column_p;
};

DenoiseResult denoise_shot(const Shot &shot, const ModelState<float> &state);

// Throws StateError naming the field when a shot cannot be fed to `config`.
void check_layout(const Shot &shot, const ModelConfig &config);

}  // namespace pwg
