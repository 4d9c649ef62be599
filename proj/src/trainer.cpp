#include <pwg/trainer.hpp>

#include <pwg/metrics.hpp>

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace pwg {

std::string_view to_string(TrainMode m) {
    switch (m) {
    case TrainMode::PretrainG: return "pretrain_G";
    case TrainMode::PretrainP: return "pretrain_P";
    case TrainMode::Finetune: return "finetune";
    case TrainMode::Joint: return "joint";
    case TrainMode::FixNTrain: return "fix_n_train";
    case TrainMode::FullScratch: return "full_scratch";
    }
    return "?";
}

TrainMode parse_train_mode(const std::string &s) {
    for (TrainMode m : {TrainMode::PretrainG, TrainMode::PretrainP, TrainMode::Finetune, TrainMode::Joint,
                        TrainMode::FixNTrain, TrainMode::FullScratch})
        if (to_string(m) == s) return m;
    throw ArgumentError("unknown training mode '" + s +
                        "' (expected pretrain_G, pretrain_P, finetune, joint, fix_n_train or full_scratch)");
}

TrainConfig TrainConfig::paper() { return TrainConfig{}; }

TrainConfig TrainConfig::desk() {
    TrainConfig c;
    c.width_scale = 0.25;
    c.patch_size = 32;
    c.patches_per_shot = 32;
    c.spp_min = 2;
    c.spp_max = 8;
    c.max_epochs = 6;
    c.finetune_epochs = 2;
    // Desk-scale columns stop far short of convergence, so joint training keeps
    // improving them at the pretraining rate instead of the paper's 1e-6 / 1e-5.
    c.lr_denoiser = 1e-4;
    c.lr_ensembler = 1e-4;
    return c;
}

TrainConfig TrainConfig::profile(const std::string &name) {
    if (name == "paper") return paper();
    if (name == "desk") return desk();
    throw ArgumentError("unknown profile '" + name + "' (expected desk or paper)");
}

void TrainConfig::validate() const {
    for (auto [name, lr] : {std::pair{"lr_pretrain", lr_pretrain}, {"lr_finetune", lr_finetune},
                            {"lr_denoiser", lr_denoiser}, {"lr_ensembler", lr_ensembler}, {"lr_scratch", lr_scratch}})
        if (!(lr > 0.0)) throw ValidationError(name, "learning rate must be > 0");
    if (!(w_path >= 0.0)) throw ValidationError("w_path", "must be >= 0");
    if (batch_size < 1) throw ValidationError("batch_size", "must be >= 1");
    if (patch_size < 1) throw ValidationError("patch_size", "must be >= 1");
    if (patches_per_shot < 1) throw ValidationError("patches_per_shot", "must be >= 1");
    if (spp_min < 1 || spp_max < spp_min) throw ValidationError("spp_range", "need 1 <= min <= max");
    if (max_epochs < 1) throw ValidationError("max_epochs", "must be >= 1");
    if (finetune_epochs < 0) throw ValidationError("finetune_epochs", "must be >= 0");
    if (patience < 1) throw ValidationError("patience", "must be >= 1");
    if (!(width_scale > 0.0)) throw ValidationError("width_scale", "must be > 0");
}

EarlyStopDecision early_stop(std::span<const double> history, int patience) {
    if (history.empty()) throw ArgumentError("early_stop: empty history");
    if (patience < 1) throw ArgumentError("early_stop: patience must be >= 1");
    EarlyStopDecision d;
    double best = std::numeric_limits<double>::infinity();
    bool have_best = false;
    for (std::size_t i = 0; i < history.size(); ++i) {
        if (!std::isfinite(history[i])) {
            d.stop = true;
            d.error = true;
            return d;
        }
        if (!have_best || history[i] < best) {
            best = history[i];
            d.best_index = i;
            have_best = true;
        }
    }
    d.stop = history.size() - 1 - d.best_index >= static_cast<std::size_t>(patience);
    return d;
}

std::vector<PatchWindow> sample_patch_windows(const Shot &shot, const TrainConfig &cfg, Rng &rng) {
    const int s = cfg.patch_size;
    if (s < 1 || s > shot.width || s > shot.height)
        throw ArgumentError("patch size " + std::to_string(s) + " does not fit a " + std::to_string(shot.width) +
                            "x" + std::to_string(shot.height) + " shot");
    std::vector<PatchWindow> out(static_cast<std::size_t>(cfg.patches_per_shot));
    for (auto &w : out) {
        w.y = static_cast<int>(rng.below(static_cast<std::uint64_t>(shot.height - s + 1)));
        w.x = static_cast<int>(rng.below(static_cast<std::uint64_t>(shot.width - s + 1)));
        w.size = s;
    }
    return out;
}

std::vector<Shot> sample_patches(const Shot &shot, const TrainConfig &cfg, Rng &rng) {
    std::vector<Shot> out;
    for (const auto &w : sample_patch_windows(shot, cfg, rng)) out.push_back(shot.crop(w.y, w.x, w.size, w.size));
    return out;
}

std::string to_json_line(const EpochRecord &r) {
    return nlohmann::json{{"epoch", r.epoch},
                          {"mode", r.mode},
                          {"train_loss", r.train_loss},
                          {"val_relmse", r.validation_relmse},
                          {"wall_time", r.wall_seconds}}
        .dump();
}

double validation_relmse(const ModelState<float> &state, const std::vector<Shot> &shots, Output output) {
    if (shots.empty()) throw ArgumentError("validation_relmse: no shots");
    double acc = 0;
    for (const auto &shot : shots) {
        if (!shot.has_reference()) throw StateError("validation shot " + shot.meta.scene_id + " has no reference");
        check_layout(shot, state.config);
        Image<float> est;
        if (output == Output::Ensembled) {
            est = denoise_shot(shot, state).final_image;
        } else {
            const Column c = output == Output::ColumnG ? Column::G : Column::P;
            const auto d = denoise_column(shot, c, Branch::Diffuse, state);
            const auto s = denoise_column(shot, c, Branch::Specular, state);
            est = postprocess_combine(d, s, shot.albedo(Branch::Diffuse));
        }
        acc += relmse(tone_map(est), tone_map(shot.reference_radiance()));
    }
    return acc / static_cast<double>(shots.size());
}

namespace {

using Clock = std::chrono::steady_clock;

void require_references(const Dataset &data) {
    if (data.train.empty()) throw ArgumentError("training dataset is empty");
    for (const auto &s : data.train)
        if (!s.has_reference()) throw StateError("training shot " + s.meta.scene_id + " has no reference");
    for (const auto &s : data.validation)
        if (!s.has_reference()) throw StateError("validation shot " + s.meta.scene_id + " has no reference");
}

void zero_all(ModelState<float> &state) {
    for (auto *p : state.parameters()) p->zero_grad();
}

void step_all(const std::vector<Parameter<float> *> &params, double lr) {
    for (auto *p : params) adam_step(*p, lr);
}

// Returns the mean step loss of the batch.
using BatchFn = std::function<double(ModelState<float> &, std::span<const Shot>, std::uint64_t step)>;

struct Phase {
    std::string name;
    Output output;
    int epochs;
    std::uint64_t stream;
    BatchFn step;
};

// Epoch loop with fresh random patches per epoch, validation, early stopping and
// restoration of the best state.
void run_phase(ModelState<float> &state, const Dataset &data, const TrainConfig &cfg, const Phase &phase,
               TrainResult &result, const EpochCallback &on_epoch) {
    const auto &val = data.validation.empty() ? data.train : data.validation;
    std::vector<double> history;
    ModelState<float> best = state;
    const auto start = Clock::now();
    std::uint64_t step = 0;
    for (int epoch = 0; epoch < phase.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, phase.stream * 100003 + static_cast<std::uint64_t>(epoch)));
        std::vector<Shot> patches;
        for (const auto &shot : data.train)
            for (auto &p : sample_patches(shot, cfg, rng)) patches.push_back(std::move(p));
        for (std::size_t i = patches.size(); i > 1; --i) std::swap(patches[i - 1], patches[rng.below(i)]);

        double loss = 0;
        std::size_t batches = 0;
        for (std::size_t i = 0; i < patches.size(); i += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), patches.size() - i);
            zero_all(state);
            loss += phase.step(state, std::span<const Shot>(patches).subspan(i, n), step++);
            ++batches;
        }
        EpochRecord rec;
        rec.epoch = state.epochs + 1;
        rec.mode = phase.name;
        rec.train_loss = loss / static_cast<double>(std::max<std::size_t>(batches, 1));
        rec.validation_relmse = validation_relmse(state, val, phase.output);
        rec.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
        ++state.epochs;
        result.log.push_back(rec);
        if (on_epoch) on_epoch(rec);

        history.push_back(rec.validation_relmse);
        const auto d = early_stop(history, cfg.patience);
        if (d.best_index == history.size() - 1 && !d.error) best = state;
        if (d.stop) {
            result.stopped_on_error = result.stopped_on_error || d.error;
            break;
        }
    }
    const int epochs = state.epochs;
    const double best_val = *std::min_element(history.begin(), history.end());
    state = std::move(best);
    state.epochs = epochs;
    state.best_validation = std::isfinite(best_val) ? best_val : state.best_validation;
    result.best_validation = state.best_validation;
}

Phase column_phase(Column c, const TrainConfig &cfg, std::uint64_t stream) {
    Phase ph;
    ph.name = c == Column::G ? "pretrain_G" : "pretrain_P";
    ph.output = c == Column::G ? Output::ColumnG : Output::ColumnP;
    ph.epochs = cfg.max_epochs;
    ph.stream = stream;
    ph.step = [c, cfg](ModelState<float> &state, std::span<const Shot> batch, std::uint64_t step) {
        const float scale = 1.0f / static_cast<float>(batch.size());
        double loss = 0;
        for (std::size_t i = 0; i < batch.size(); ++i)
            for (Branch b : kBranches) {
                PathLossTerm term{cfg.w_path, cfg.path, derive_seed(cfg.seed, (step << 8) + 2 * i + (b == Branch::Specular))};
                loss += column_step(state.branch(b), c, make_branch_input<float>(batch[i], b), term, scale).total();
            }
        for (Branch b : kBranches) step_all(state.branch(b).column_parameters(c), cfg.lr_pretrain);
        return loss / static_cast<double>(batch.size());
    };
    return ph;
}

Phase finetune_phase(std::vector<Column> columns, const TrainConfig &cfg, std::uint64_t stream) {
    Phase ph;
    ph.name = "finetune";
    ph.output = columns.size() == 1 ? (columns[0] == Column::G ? Output::ColumnG : Output::ColumnP) : Output::Ensembled;
    ph.epochs = cfg.finetune_epochs;
    ph.stream = stream;
    ph.step = [columns, cfg](ModelState<float> &state, std::span<const Shot> batch, std::uint64_t) {
        const float scale = 1.0f / static_cast<float>(batch.size());
        double loss = 0;
        for (const auto &patch : batch) {
            const auto d = make_branch_input<float>(patch, Branch::Diffuse);
            const auto s = make_branch_input<float>(patch, Branch::Specular);
            const auto ref = patch.reference_radiance();
            for (Column c : columns) loss += finetune_step(state, c, d, s, ref, scale);
        }
        for (Column c : columns)
            for (Branch b : kBranches) step_all(state.branch(b).column_parameters(c), cfg.lr_finetune);
        return loss / static_cast<double>(batch.size());
    };
    return ph;
}

}  // namespace

TrainResult pretrain(ModelState<float> &state, const Dataset &data, const TrainConfig &cfg,
                     const EpochCallback &on_epoch) {
    cfg.validate();
    require_references(data);
    for (const auto &s : data.train) check_layout(s, state.config);
    TrainResult result;
    switch (cfg.mode) {
    case TrainMode::PretrainG:
    case TrainMode::PretrainP: {
        const Column c = cfg.mode == TrainMode::PretrainG ? Column::G : Column::P;
        run_phase(state, data, cfg, column_phase(c, cfg, 1 + static_cast<int>(c)), result, on_epoch);
        if (cfg.finetune_epochs > 0) run_phase(state, data, cfg, finetune_phase({c}, cfg, 3 + static_cast<int>(c)), result, on_epoch);
        (c == Column::G ? state.provenance.pretrained_g : state.provenance.pretrained_p) = true;
        break;
    }
    case TrainMode::Finetune: {
        std::vector<Column> cols;
        if (state.provenance.pretrained_g) cols.push_back(Column::G);
        if (state.provenance.pretrained_p) cols.push_back(Column::P);
        if (cols.empty()) throw StateError("finetune requires a checkpoint with at least one pretrained column");
        if (cfg.finetune_epochs < 1) throw ValidationError("finetune_epochs", "must be >= 1 for mode finetune");
        TrainConfig c = cfg;
        c.max_epochs = cfg.finetune_epochs;
        run_phase(state, data, c, finetune_phase(cols, c, 5), result, on_epoch);
        break;
    }
    default:
        throw ArgumentError("pretrain: mode " + std::string(to_string(cfg.mode)) + " is a joint-training mode");
    }
    state.provenance.last_mode = std::string(to_string(cfg.mode));
    return result;
}

TrainResult joint_train(ModelState<float> &state, const Dataset &data, const TrainConfig &cfg,
                        const EpochCallback &on_epoch) {
    cfg.validate();
    require_references(data);
    const TrainMode mode = cfg.mode;
    if (mode != TrainMode::Joint && mode != TrainMode::FixNTrain && mode != TrainMode::FullScratch)
        throw ArgumentError("joint_train: mode " + std::string(to_string(mode)) + " is a pretraining mode");
    TrainConfig c = cfg;
    if (mode == TrainMode::FullScratch) {
        state = ModelState<float>(ModelConfig::make(cfg.width_scale, cfg.recon_kernel));
        state.init(cfg.seed);
        c.lr_denoiser = c.lr_ensembler = c.lr_scratch;
    } else if (!state.provenance.pretrained_g || !state.provenance.pretrained_p) {
        throw StateError("mode " + std::string(to_string(mode)) +
                         " requires a checkpoint with both columns pretrained (pretrained_g=" +
                         (state.provenance.pretrained_g ? "1" : "0") +
                         ", pretrained_p=" + (state.provenance.pretrained_p ? "1" : "0") + ")");
    }
    for (const auto &s : data.train) check_layout(s, state.config);

    const bool train_columns = mode != TrainMode::FixNTrain;
    Phase ph;
    ph.name = std::string(to_string(mode));
    ph.output = Output::Ensembled;
    ph.epochs = c.max_epochs;
    ph.stream = 7;
    ph.step = [c, train_columns](ModelState<float> &st, std::span<const Shot> batch, std::uint64_t step) {
        const float scale = 1.0f / static_cast<float>(batch.size());
        double loss = 0;
        for (std::size_t i = 0; i < batch.size(); ++i)
            for (Branch b : kBranches) {
                JointStepOptions<float> opt;
                opt.train_columns = train_columns;
                opt.grad_scale = scale;
                if (train_columns && c.path_loss_in_joint)
                    opt.path = PathLossTerm{c.w_path, c.path,
                                            derive_seed(c.seed, (step << 8) + 2 * i + (b == Branch::Specular))};
                loss += joint_step(st.branch(b), make_branch_input<float>(batch[i], b), opt).loss.total();
            }
        for (Branch b : kBranches) {
            auto &m = st.branch(b);
            step_all(m.ensembler_parameters(), c.lr_ensembler);
            if (train_columns) {
                step_all(m.column_parameters(Column::G), c.lr_denoiser);
                step_all(m.column_parameters(Column::P), c.lr_denoiser);
            }
        }
        return loss / static_cast<double>(batch.size());
    };
    TrainResult result;
    run_phase(state, data, c, ph, result, on_epoch);
    if (mode == TrainMode::FullScratch) state.provenance.pretrained_g = state.provenance.pretrained_p = false;
    state.provenance.last_mode = ph.name;
    return result;
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
void zero_grads(ModelState<T> &s) {
    for (auto *p : s.parameters()) p->zero_grad();
}

template <typename T>
double grad_norm(const std::vector<Parameter<T> *> &params) {
    double acc = 0;
    for (const auto *p : params)
        for (T g : p->grad) acc += static_cast<double>(g) * static_cast<double>(g);
    return std::sqrt(acc);
}

template <typename T>
double max_abs(const Image<T> &img) {
    double m = 0;
    for (T v : img.vec()) m = std::max(m, std::abs(static_cast<double>(v)));
    return m;
}

template <typename T>
std::vector<T> flatten_grads(const std::vector<Parameter<T> *> &params) {
    std::vector<T> out;
    for (const auto *p : params) out.insert(out.end(), p->grad.begin(), p->grad.end());
    return out;
}

template <typename T>
BranchInput<T> checked_input(const ModelState<T> &state, const Shot &shot, Branch b) {
    if (!shot.has_reference()) throw StateError("gradient checks need a shot with references");
    check_layout(shot, state.config);
    return make_branch_input<T>(shot, b);
}

}  // namespace

template <typename T>
GradientMaskReport gradient_mask_check(const ModelState<T> &state0, const Shot &shot, Branch b,
                                       const Image<float> *region_mask, double tolerance) {
    ModelState<T> state = state0;
    auto &m = state.branch(b);
    const auto in = checked_input(state, shot, b);
    if (region_mask && (region_mask->height() != in.noisy.height() || region_mask->width() != in.noisy.width() ||
                        region_mask->channels() != 1))
        throw ArgumentError("gradient_mask_check: region mask must be single-channel and match the shot");

    GradientMaskReport rep;
    JointStepOptions<T> opt;  // reconstruction loss only

    zero_grads(state);
    {
        const auto r = joint_step(m, in, opt);
        const auto &f = r.forward;
        const T inv_n = T(1) / static_cast<T>(f.ie.size());
        const int c = f.ie.channels();
        for (int px = 0; px < f.ie.pixels(); ++px) {
            if (region_mask && region_mask->vec()[px] == 0.0f) continue;
            for (int k = 0; k < c; ++k) {
                const std::size_t i = static_cast<std::size_t>(px) * c + k;
                const T d = f.ie.vec()[i] - in.reference->vec()[i];
                const T sgn = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
                const double eg = inv_n * f.weights.wg.vec()[px] * sgn;
                const double ep = inv_n * f.weights.wp.vec()[px] * sgn;
                rep.max_error_ig = std::max(rep.max_error_ig, std::abs(eg - r.grad_ig.vec()[i]));
                rep.max_error_ip = std::max(rep.max_error_ip, std::abs(ep - r.grad_ip.vec()[i]));
            }
        }
    }

    const T big = T(-1e4);
    zero_grads(state);
    opt.logit_override = std::array<T, 2>{big, T(0)};  // W_G = 0, W_P = 1
    {
        const auto r = joint_step(m, in, opt);
        rep.theta_g_norm_wg0 = grad_norm(m.column_parameters(Column::G));
        rep.max_grad_ig_wp1 = max_abs(r.grad_ig);
    }
    zero_grads(state);
    opt.logit_override = std::array<T, 2>{T(0), big};  // W_G = 1, W_P = 0
    {
        const auto r = joint_step(m, in, opt);
        rep.theta_p_norm_wp0 = grad_norm(m.column_parameters(Column::P));
        rep.max_grad_ip_wg1 = max_abs(r.grad_ip);
    }
    rep.passed = rep.max_error_ig <= tolerance && rep.max_error_ip <= tolerance && rep.theta_g_norm_wg0 == 0.0 &&
                 rep.theta_p_norm_wp0 == 0.0 && rep.max_grad_ip_wg1 == 0.0 && rep.max_grad_ig_wp1 == 0.0;
    return rep;
}

template GradientMaskReport gradient_mask_check<float>(const ModelState<float> &, const Shot &, Branch,
                                                       const Image<float> *, double);
template GradientMaskReport gradient_mask_check<double>(const ModelState<double> &, const Shot &, Branch,
                                                        const Image<float> *, double);

StopGradientReport stop_gradient_contract_check(const ModelState<double> &state0, const Shot &shot, Branch b,
                                                const GradCheckOptions &opts) {
    StopGradientReport rep;
    const auto in = checked_input(state0, shot, b);
    JointStepOptions<double> opt;

    // Autodiff gradient of theta_G through the full joint graph.
    ModelState<double> state = state0;
    zero_grads(state);
    auto &m = state.branch(b);
    const auto r = joint_step(m, in, opt);
    auto params = m.column_parameters(Column::G);
    const std::vector<double> analytic = flatten_grads(params);
    std::vector<double> point;
    for (const auto *p : params) point.insert(point.end(), p->value.begin(), p->value.end());

    // Finite differences with W held at its current value and I_P fixed.
    const WeightMaps<double> frozen = r.forward.weights;
    const Image<double> ip = r.forward.ip;
    ModelState<double> probe = state0;
    auto probe_params = probe.branch(b).column_parameters(Column::G);
    ScalarFn value = [&](std::span<const double> x) {
        std::size_t k = 0;
        for (auto *p : probe_params)
            for (auto &v : p->value) v = x[k++];
        const Image<double> ig = probe.branch(b).dg.forward(in.noisy, in.gbuffer, nullptr);
        return static_cast<double>(l1_loss<double>(combine(ig, ip, frozen), *in.reference, nullptr));
    };
    GradientFn gradient = [&](std::span<const double>) { return analytic; };
    GradCheckOptions o = opts;
    if (!o.pattern)
        // ReLU activations of column G and the l1 residual signs: differences across
        // either kink are not derivatives.
        o.pattern = [&](std::span<const double> x) {
            std::size_t k = 0;
            for (auto *p : probe_params)
                for (auto &v : p->value) v = x[k++];
            typename Denoiser<double>::Tape t;
            const Image<double> ig = probe.branch(b).dg.forward(in.noisy, in.gbuffer, &t);
            const Image<double> ie = combine(ig, ip, frozen);
            std::vector<std::uint8_t> pt;
            auto signs = [&pt](std::span<const double> s) {
                for (double v : s) pt.push_back(v > 0 ? 1 : (v < 0 ? 2 : 0));
            };
            for (std::size_t i = 1; i < t.net.inputs.size(); ++i) signs(t.net.inputs[i].span());
            for (std::size_t i = 0; i < ie.size(); ++i) pt.push_back(ie.vec()[i] > in.reference->vec()[i]);
            return pt;
        };
    rep.theta_g = grad_check(value, gradient, point, o);

    // theta_E gradient with the columns trainable, frozen, and detached.
    auto ensembler_grad = [&](bool columns_trainable, bool train_columns) {
        ModelState<double> s = state0;
        zero_grads(s);
        auto &mm = s.branch(b);
        for (Column c : {Column::G, Column::P})
            for (auto *p : mm.column_parameters(c)) p->trainable = columns_trainable;
        JointStepOptions<double> o;
        o.train_columns = train_columns;
        joint_step(mm, in, o);
        return flatten_grads(mm.ensembler_parameters());
    };
    const auto e_full = ensembler_grad(true, true);
    rep.ensembler_grad_invariant = e_full == ensembler_grad(false, true) && e_full == ensembler_grad(true, false);
    rep.passed = rep.theta_g.passed && rep.ensembler_grad_invariant;
    return rep;
}

}  // namespace pwg
