#pragma once

// Column pretraining, finetuning and joint training with stop-gradient ensembling.

#include <pwg/gradcheck.hpp>
#include <pwg/model.hpp>
#include <pwg/optim.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace pwg {

enum class TrainMode { PretrainG, PretrainP, Finetune, Joint, FixNTrain, FullScratch };
std::string_view to_string(TrainMode m);
TrainMode parse_train_mode(const std::string &s);

struct TrainConfig {
    TrainMode mode = TrainMode::Joint;
    // Column pretraining.
    double lr_pretrain = 1e-4;
    // Finetuning both branches of a pretrained column through the recombined image.
    double lr_finetune = 1e-6;
    // Joint training: denoisers and manifolds, and the ensembler.
    double lr_denoiser = 1e-6;
    double lr_ensembler = 1e-5;
    // Every module when training from scratch.
    double lr_scratch = 1e-4;
    double w_path = 0.1;
    bool path_loss_in_joint = true;
    PathLossConfig path;
    int batch_size = 8;
    int patch_size = 128;
    int patches_per_shot = 256;
    int spp_min = 2, spp_max = 8;
    std::uint64_t seed = 0;
    double width_scale = 1.0;
    int recon_kernel = 21;
    int max_epochs = 50;
    int finetune_epochs = 10;
    int patience = 5;

    static TrainConfig paper();
    static TrainConfig desk();
    static TrainConfig profile(const std::string &name);

    void validate() const;
};

struct Dataset {
    std::vector<Shot> train;
    std::vector<Shot> validation;
};

// ---------------------------------------------------------------------------

struct EarlyStopDecision {
    bool stop = false;
    std::size_t best_index = 0;
    bool error = false;  // non-finite validation value seen
};

// Stop once the best (lowest) value is `patience` epochs old; a NaN stops immediately.
EarlyStopDecision early_stop(std::span<const double> history, int patience);

struct PatchWindow {
    int y = 0, x = 0, size = 0;
};

// `patches_per_shot` uniformly random top-left corners.
std::vector<PatchWindow> sample_patch_windows(const Shot &shot, const TrainConfig &cfg, Rng &rng);
// Same windows, with every aligned field cropped.
std::vector<Shot> sample_patches(const Shot &shot, const TrainConfig &cfg, Rng &rng);

// ---------------------------------------------------------------------------
// Losses and per-patch steps. `grad_scale` multiplies every accumulated gradient
// (1 / batch size for batch means).

template <typename T>
T l1_loss(const Image<T> &estimate, const Image<T> &reference, Image<T> *grad, T grad_scale = T(1)) {
    require_same_shape(estimate, reference, "l1_loss");
    const T inv = T(1) / static_cast<T>(estimate.size());
    T acc = 0;
    if (grad) *grad = Image<T>(estimate.height(), estimate.width(), estimate.channels());
    for (std::size_t i = 0; i < estimate.size(); ++i) {
        const T d = estimate.vec()[i] - reference.vec()[i];
        acc += std::abs(d);
        if (grad) grad->vec()[i] = d > T(0) ? inv * grad_scale : (d < T(0) ? -inv * grad_scale : T(0));
    }
    return acc * inv;
}

struct PathLossTerm {
    double weight = 0.0;
    PathLossConfig config;
    std::uint64_t pair_seed = 0;
};

template <typename T>
struct StepLoss {
    T reconstruction = 0;
    T path = 0;
    T total() const { return reconstruction + path; }
};

template <typename T>
StepLoss<T> path_loss_backward(Manifold<T> &manifold, const typename Manifold<T>::Tape &tape,
                               const Image<T> *grad_pbuffer, const BranchInput<T> &in, const PathLossTerm &term,
                               T grad_scale) {
    StepLoss<T> loss;
    if (term.weight == 0.0 || !in.reference_ldr) {
        manifold.backward(tape, grad_pbuffer, nullptr);
        return loss;
    }
    const auto pairs = draw_sample_pairs(static_cast<std::size_t>(tape.embeddings.rows()), term.config.pairs,
                                         term.pair_seed);
    auto res = path_disentangle_loss<T>(tape.embeddings, *in.reference_ldr, tape.samples, pairs, term.config);
    const T w = static_cast<T>(term.weight);
    loss.path = w * res.value;
    RowMatrix<T> g = res.grad * (w * grad_scale);
    manifold.backward(tape, grad_pbuffer, &g);
    return loss;
}

// One column on one branch: l1 in the preprocessed domain (+ weighted path loss for P).
template <typename T>
StepLoss<T> column_step(BranchModel<T> &m, Column c, const BranchInput<T> &in, const PathLossTerm &path,
                        T grad_scale) {
    BranchForward<T> rec;
    Image<T> out = run_column(m, c, in, &rec);
    Image<T> grad;
    StepLoss<T> loss;
    loss.reconstruction = l1_loss(out, *in.reference, &grad, grad_scale);
    if (c == Column::G) {
        m.dg.backward(rec.dg_tape, grad, false);
    } else {
        Image<T> grad_fp = m.dp.backward(rec.dp_tape, grad, true);
        loss.path = path_loss_backward(m.manifold, rec.manifold_tape, &grad_fp, in, path, grad_scale).path;
    }
    return loss;
}

// One column, both branches, l1 on the recombined output-domain radiance.
template <typename T>
T finetune_step(ModelState<T> &state, Column c, const BranchInput<T> &diffuse, const BranchInput<T> &specular,
                const Image<T> &reference, T grad_scale) {
    auto &md = state.branch(Branch::Diffuse);
    auto &ms = state.branch(Branch::Specular);
    BranchForward<T> rd, rs;
    const Image<T> od = run_column(md, c, diffuse, &rd);
    const Image<T> os = run_column(ms, c, specular, &rs);
    const Image<T> out = postprocess_combine(od, os, diffuse.albedo);
    Image<T> grad, gd, gs;
    const T loss = l1_loss(out, reference, &grad, grad_scale);
    postprocess_combine_backward(od, os, diffuse.albedo, grad, gd, gs);
    if (c == Column::G) {
        md.dg.backward(rd.dg_tape, gd, false);
        ms.dg.backward(rs.dg_tape, gs, false);
    } else {
        Image<T> fd = md.dp.backward(rd.dp_tape, gd, true);
        md.manifold.backward(rd.manifold_tape, &fd, nullptr);
        Image<T> fs = ms.dp.backward(rs.dp_tape, gs, true);
        ms.manifold.backward(rs.manifold_tape, &fs, nullptr);
    }
    return loss;
}

template <typename T>
struct JointStepOptions {
    bool train_columns = true;
    PathLossTerm path;
    T grad_scale = T(1);
    std::optional<std::array<T, 2>> logit_override;
};

template <typename T>
struct JointStepResult {
    StepLoss<T> loss;
    BranchForward<T> forward;
    // d(loss)/d(I_G), d(loss)/d(I_P) at the combine node, after the stop-gradient edges.
    Image<T> grad_ig, grad_ip;
};

// Forward both columns, stop-gradient into the ensembler, combine, l1 against the
// preprocessed reference, and backpropagate: the ensembler learns from d/dW, each
// column from its own weight-masked share of d/dI_E.
template <typename T>
JointStepResult<T> joint_step(BranchModel<T> &m, const BranchInput<T> &in, const JointStepOptions<T> &opt) {
    JointStepResult<T> res;
    auto &f = res.forward;
    f = forward_branch(m, in, true, opt.logit_override);
    Image<T> grad_ie;
    res.loss.reconstruction = l1_loss(f.ie, *in.reference, &grad_ie, opt.grad_scale);
    auto cg = combine_backward(f.ig, f.ip, f.weights, grad_ie);
    auto [sg_ig, sg_ip] = m.ensembler.backward(f.ens_tape, cg.wg, cg.wp);
    for (std::size_t i = 0; i < cg.ig.size(); ++i) {
        cg.ig.vec()[i] += sg_ig.vec()[i];
        cg.ip.vec()[i] += sg_ip.vec()[i];
    }
    if (opt.train_columns) {
        m.dg.backward(f.dg_tape, cg.ig, false);
        Image<T> grad_fp = m.dp.backward(f.dp_tape, cg.ip, true);
        res.loss.path = path_loss_backward(m.manifold, f.manifold_tape, &grad_fp, in, opt.path, opt.grad_scale).path;
    }
    res.grad_ig = std::move(cg.ig);
    res.grad_ip = std::move(cg.ip);
    return res;
}

// ---------------------------------------------------------------------------

struct EpochRecord {
    int epoch = 0;
    std::string mode;
    double train_loss = 0;
    double validation_relmse = 0;
    double wall_seconds = 0;
};

std::string to_json_line(const EpochRecord &r);

struct TrainResult {
    std::vector<EpochRecord> log;
    double best_validation = 0;
    bool stopped_on_error = false;
};

using EpochCallback = std::function<void(const EpochRecord &)>;

// Mean tone-mapped relMSE of the chosen output over the validation shots.
enum class Output { ColumnG, ColumnP, Ensembled };
double validation_relmse(const ModelState<float> &state, const std::vector<Shot> &shots, Output output);

// Pretrain (mode pretrain_G / pretrain_P) then finetune the column; mode finetune
// finetunes both already-pretrained columns.
TrainResult pretrain(ModelState<float> &state, const Dataset &data, const TrainConfig &cfg,
                     const EpochCallback &on_epoch = {});

// Modes joint, fix_n_train and full_scratch.
TrainResult joint_train(ModelState<float> &state, const Dataset &data, const TrainConfig &cfg,
                        const EpochCallback &on_epoch = {});

// ---------------------------------------------------------------------------
// Gradient-flow verification.

struct GradientMaskReport {
    // max |autodiff dL/dI_X - (1/N) W_X sgn(I_E - I_ref)| over the region.
    double max_error_ig = 0, max_error_ip = 0;
    // ||dL/dtheta_G|| with W_G forced to 0; ||dL/dtheta_P|| with W_P forced to 0.
    double theta_g_norm_wg0 = 0, theta_p_norm_wp0 = 0;
    // max |dL/dI_P| with W_G forced to 1; max |dL/dI_G| with W_P forced to 1.
    double max_grad_ip_wg1 = 0, max_grad_ig_wp1 = 0;
    bool passed = false;
};

// `region_mask` (H x W x 1, nonzero = checked) limits which pixels enter (a)/(b).
template <typename T>
GradientMaskReport gradient_mask_check(const ModelState<T> &state, const Shot &shot, Branch b,
                                       const Image<float> *region_mask = nullptr, double tolerance = 1e-6);

struct StopGradientReport {
    GradCheckReport theta_g;          // autodiff vs frozen-weight finite differences
    bool ensembler_grad_invariant = false;  // dL/dtheta_E identical with columns frozen
    bool passed = false;
};

StopGradientReport stop_gradient_contract_check(const ModelState<double> &state, const Shot &shot, Branch b,
                                                const GradCheckOptions &opts);

}  // namespace pwg
