// pwg: command-line front end (gen-synth, pretrain, joint-train, denoise, eval).

#include <pwg/container.hpp>
#include <pwg/metrics.hpp>
#include <pwg/png_io.hpp>
#include <pwg/synthgen.hpp>
#include <pwg/trainer.hpp>

#include <CLI11.hpp>
#include <Eigen/Core>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>

namespace fs = std::filesystem;
using namespace pwg;

namespace {

enum Exit { kOk = 0, kInternal = 1, kUsage = 2, kState = 3 };

// Shot directories directly under `dir` (or `dir` itself when it is a shot), sorted by name.
std::vector<fs::path> shot_dirs(const fs::path &dir) {
    if (!fs::is_directory(dir)) throw IoError(dir.string(), "not a directory");
    if (fs::exists(dir / "manifest.txt")) return {dir};
    std::vector<fs::path> out;
    for (const auto &e : fs::directory_iterator(dir))
        if (e.is_directory() && fs::exists(e.path() / "manifest.txt")) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    if (out.empty()) throw IoError(dir.string(), "contains no shot containers");
    return out;
}

std::vector<Shot> load_shots(const fs::path &dir) {
    std::vector<Shot> out;
    for (const auto &p : shot_dirs(dir)) out.push_back(load_shot(p));
    return out;
}

void require_fresh_output(const fs::path &out, const std::vector<fs::path> &inputs) {
    for (const auto &in : inputs)
        if (!in.empty() && fs::exists(in) && fs::exists(out) && fs::equivalent(in, out))
            throw ArgumentError("output " + out.string() + " would overwrite input " + in.string());
}

struct TrainArgs {
    std::string data, val, mode, ckpt, init, out, log, profile = "desk";
    std::optional<int> max_epochs, finetune_epochs, patches_per_shot, patch_size, batch_size;
    std::optional<double> width_scale;
    std::optional<std::uint64_t> seed;
    std::optional<double> w_path;
    bool no_path_loss_in_joint = false;
};

void add_train_options(CLI::App *cmd, TrainArgs &a) {
    cmd->add_option("--data", a.data, "directory of training shots")->required();
    cmd->add_option("--val", a.val, "directory of validation shots (default: the training shots)");
    cmd->add_option("--mode", a.mode, "training regime")->required();
    cmd->add_option("--profile", a.profile, "hyperparameter profile")->check(CLI::IsMember({"desk", "paper"}));
    cmd->add_option("--log", a.log, "training log (JSON lines); default <output>.log.jsonl");
    cmd->add_option("--max-epochs", a.max_epochs);
    cmd->add_option("--finetune-epochs", a.finetune_epochs);
    cmd->add_option("--patch-size", a.patch_size);
    cmd->add_option("--width-scale", a.width_scale, "column and ensembler width multiplier (new models only)");
    cmd->add_option("--patches-per-shot", a.patches_per_shot);
    cmd->add_option("--batch-size", a.batch_size);
    cmd->add_option("--seed", a.seed);
    cmd->add_option("--w-path", a.w_path);
}

TrainConfig train_config(const TrainArgs &a, TrainMode mode) {
    TrainConfig cfg = TrainConfig::profile(a.profile);
    cfg.mode = mode;
    if (a.max_epochs) cfg.max_epochs = *a.max_epochs;
    if (a.finetune_epochs) cfg.finetune_epochs = *a.finetune_epochs;
    if (a.patches_per_shot) cfg.patches_per_shot = *a.patches_per_shot;
    if (a.patch_size) cfg.patch_size = *a.patch_size;
    if (a.width_scale) cfg.width_scale = *a.width_scale;
    if (a.batch_size) cfg.batch_size = *a.batch_size;
    if (a.seed) cfg.seed = *a.seed;
    if (a.w_path) cfg.w_path = *a.w_path;
    if (a.no_path_loss_in_joint) cfg.path_loss_in_joint = false;
    cfg.validate();
    return cfg;
}

Dataset load_dataset(const TrainArgs &a) {
    Dataset d;
    d.train = load_shots(a.data);
    if (!a.val.empty()) d.validation = load_shots(a.val);
    return d;
}

void run_training(const TrainArgs &a, bool joint) {
    const TrainMode mode = parse_train_mode(a.mode);
    const bool is_joint_mode = mode == TrainMode::Joint || mode == TrainMode::FixNTrain || mode == TrainMode::FullScratch;
    if (joint != is_joint_mode)
        throw ArgumentError("mode " + a.mode + " belongs to " + (joint ? "pretrain" : "joint-train"));
    const TrainConfig cfg = train_config(a, mode);
    const fs::path out = joint ? fs::path(a.out) : fs::path(a.ckpt);
    const fs::path input = joint ? fs::path(a.ckpt) : fs::path(a.init);
    require_fresh_output(out, {input, a.data, a.val});

    ModelState<float> state;
    if (!input.empty()) {
        state = load_checkpoint(input);
    } else if (mode == TrainMode::FullScratch || mode == TrainMode::PretrainG || mode == TrainMode::PretrainP) {
        state = ModelState<float>(ModelConfig::make(cfg.width_scale, cfg.recon_kernel));
        state.init(cfg.seed);
    } else {
        throw StateError("mode " + a.mode + " needs a pretrained checkpoint (" + (joint ? "--ckpt" : "--init") + ")");
    }
    const Dataset data = load_dataset(a);

    const fs::path log_path = a.log.empty() ? fs::path(out.string() + ".log.jsonl") : fs::path(a.log);
    std::ofstream log(log_path);
    if (!log) throw IoError(log_path.string(), "cannot open training log");
    auto on_epoch = [&](const EpochRecord &r) {
        const std::string line = to_json_line(r);
        log << line << "\n" << std::flush;
        std::cerr << line << "\n";
    };
    const TrainResult res = joint ? joint_train(state, data, cfg, on_epoch) : pretrain(state, data, cfg, on_epoch);
    save_checkpoint(state, out);
    std::cerr << "best validation relMSE " << res.best_validation << (res.stopped_on_error ? " (stopped on NaN)" : "")
              << "; checkpoint " << out.string() << "\n";
    if (res.stopped_on_error) throw StateError("training stopped on a non-finite validation error");
}

void write_raw(const fs::path &dir, const std::vector<std::pair<std::string, const Image<float> *>> &images) {
    ContainerWriter w(dir, "denoise-dump");
    for (const auto &[name, img] : images)
        w.add(name, {img->height(), img->width(), img->channels()}, std::span<const float>(img->vec()), name + ".bin");
    w.finish();
}

// Per-pixel relative squared error of the tone-mapped images, averaged over channels.
Image<float> relative_error_map(const Image<float> &estimate, const Image<float> &reference) {
    const Image<float> e = tone_map(estimate), r = tone_map(reference);
    Image<float> out(e.height(), e.width(), 1);
    for (int p = 0; p < e.pixels(); ++p) {
        double acc = 0;
        for (int c = 0; c < 3; ++c) {
            const double d = e.vec()[3 * p + c] - r.vec()[3 * p + c];
            acc += d * d / (r.vec()[3 * p + c] * r.vec()[3 * p + c] + 0.01);
        }
        out.vec()[p] = static_cast<float>(acc / 3);
    }
    return out;
}

void run_denoise(const std::string &in, const std::string &ckpt, const std::string &out_dir, bool export_maps) {
    require_fresh_output(out_dir, {in, ckpt});
    const Shot shot = load_shot(in);
    const ModelState<float> state = load_checkpoint(ckpt);
    const DenoiseResult r = denoise_shot(shot, state);
    fs::create_directories(out_dir);
    const fs::path out(out_dir);
    write_png(tone_map(r.final_image), out / "final.png");
    write_png(tone_map(r.column_g), out / "column_g.png");
    write_png(tone_map(r.column_p), out / "column_p.png");

    std::vector<std::pair<std::string, const Image<float> *>> raw{
        {"final", &r.final_image}, {"column_g", &r.column_g}, {"column_p", &r.column_p}};
    for (Branch b : kBranches) {
        const int i = static_cast<int>(b);
        const std::string s(to_string(b));
        raw.push_back({"ig_" + s, &r.ig[i]});
        raw.push_back({"ip_" + s, &r.ip[i]});
        raw.push_back({"ie_" + s, &r.ie[i]});
        raw.push_back({"wg_" + s, &r.weights[i].wg});
        raw.push_back({"wp_" + s, &r.weights[i].wp});
    }
    std::vector<Image<float>> errors;
    errors.reserve(3);
    if (export_maps) {
        for (Branch b : kBranches) {
            const int i = static_cast<int>(b);
            write_png(r.weights[i].wg, out / ("wg_" + std::string(to_string(b)) + ".png"));
            write_png(r.weights[i].wp, out / ("wp_" + std::string(to_string(b)) + ".png"));
        }
        if (shot.has_reference()) {
            const Image<float> ref = shot.reference_radiance();
            for (auto [name, img] : {std::pair{"final", &r.final_image}, {"column_g", &r.column_g},
                                     {"column_p", &r.column_p}}) {
                errors.push_back(relative_error_map(*img, ref));
                write_png(heat_map(errors.back()), out / ("error_" + std::string(name) + ".png"));
                raw.push_back({"error_" + std::string(name), &errors.back()});
            }
        } else {
            std::cerr << "shot has no reference; error maps skipped\n";
        }
    }
    write_raw(out / "raw", raw);
    std::cerr << "wrote " << out.string() << "\n";
}

struct EvalArgs {
    std::string in, ref_key = "reference", out, ckpt, estimate;
    int baseline_spp = 2;
};

int run_eval(const EvalArgs &a) {
    if (a.ref_key != "reference") throw ArgumentError("--ref-key: only 'reference' is stored in shot containers");
    const std::string estimate = a.estimate.empty() ? (a.ckpt.empty() ? "noisy" : "denoised") : a.estimate;
    if (estimate == "denoised" && a.ckpt.empty()) throw ArgumentError("--estimate denoised requires --ckpt");
    std::optional<ModelState<float>> state;
    if (!a.ckpt.empty()) state = load_checkpoint(a.ckpt);

    MetricReport report;
    std::map<std::string, std::vector<double>> scene_errors;
    std::map<std::string, double> baselines;
    for (const auto &dir : shot_dirs(a.in)) {
        ShotMetrics m;
        m.shot = dir.filename().string();
        try {
            const Shot shot = load_shot(dir);
            m.scene = shot.meta.scene_id;
            m.spp = shot.spp;
            if (!shot.has_reference()) throw StateError("shot has no reference");
            const Image<float> ref = shot.reference_radiance();
            Image<float> est;
            if (estimate == "noisy") est = shot.noisy_radiance();
            else if (estimate == "reference") est = ref;
            else est = denoise_shot(shot, *state).final_image;
            const ShotMetrics v = evaluate_radiance(est, ref);
            m.relmse = v.relmse;
            m.dssim = v.dssim;
            m.smape = v.smape;
            m.l1 = v.l1;
            scene_errors[m.scene].push_back(m.relmse);
            if (shot.spp == a.baseline_spp && !baselines.count(m.scene))
                baselines[m.scene] = evaluate_radiance(shot.noisy_radiance(), ref).relmse;
        } catch (const Error &e) {
            m.error = e.what();
        }
        report.shots.push_back(std::move(m));
    }
    std::map<std::string, double> errors, bases;
    for (const auto &[scene, v] : scene_errors) {
        auto it = baselines.find(scene);
        if (it == baselines.end()) {
            std::cerr << "scene " << scene << ": no " << a.baseline_spp << "-spp shot, not normalized\n";
            continue;
        }
        errors[scene] = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        bases[scene] = it->second;
    }
    for (const auto &[scene, e] : errors) {
        if (bases[scene] == 0.0) {
            std::cerr << "scene " << scene << ": zero baseline error, not normalized\n";
            continue;
        }
        report.normalized_relmse[scene] = normalized_scene_error({{scene, e}}, {{scene, bases[scene]}});
    }
    report.finalize();
    std::ofstream os(a.out);
    if (!os) throw IoError(a.out, "cannot open report for writing");
    report.write(os);
    if (!report.shots.empty() && report.failed == report.shots.size()) {
        std::cerr << "every shot failed to evaluate\n";
        return kState;
    }
    return kOk;
}

}  // namespace

int main(int argc, char **argv) {
    if (const char *t = std::getenv("PWG_THREADS")) Eigen::setNbThreads(std::max(1, std::atoi(t)));

    CLI::App app{"Pixel-wise guided Monte Carlo denoising"};
    app.require_subcommand(1);

    SynthConfig synth;
    int count = 1;
    std::string synth_out;
    auto *gen = app.add_subcommand("gen-synth", "write synthetic shots");
    gen->add_option("--out", synth_out, "output directory")->required();
    gen->add_option("--count", count)->check(CLI::PositiveNumber);
    gen->add_option("--spp", synth.spp)->check(CLI::PositiveNumber);
    gen->add_option("--seed", synth.seed);
    gen->add_option("--res", synth.resolution)->check(CLI::Range(8, 1 << 14));
    gen->add_option("--noise", synth.noise_scale, "per-sample coefficient of variation")->check(CLI::NonNegativeNumber);
    gen->add_option("--difficulty-fields", synth.difficulty_fields)->check(CLI::NonNegativeNumber);
    gen->add_option("--difficulty-gain", synth.difficulty_gain)->check(CLI::NonNegativeNumber);

    TrainArgs pre_args, joint_args;
    auto *pre = app.add_subcommand("pretrain", "pretrain or finetune a denoiser column");
    add_train_options(pre, pre_args);
    pre->add_option("--ckpt", pre_args.ckpt, "output checkpoint")->required();
    pre->add_option("--init", pre_args.init, "checkpoint to start from");
    auto *joint = app.add_subcommand("joint-train", "train the ensembler (joint, fix_n_train, full_scratch)");
    add_train_options(joint, joint_args);
    joint->add_option("--ckpt", joint_args.ckpt, "pretrained input checkpoint");
    joint->add_option("--out", joint_args.out, "output checkpoint")->required();
    joint->add_flag("--no-path-loss", joint_args.no_path_loss_in_joint, "drop the path loss during joint training");

    std::string dn_in, dn_ckpt, dn_out;
    bool export_maps = false;
    auto *dn = app.add_subcommand("denoise", "denoise one shot");
    dn->add_option("--in", dn_in, "shot directory")->required();
    dn->add_option("--ckpt", dn_ckpt)->required();
    dn->add_option("--out", dn_out)->required();
    dn->add_flag("--export-maps", export_maps, "also write weight maps and error heat maps");

    EvalArgs ev;
    auto *evc = app.add_subcommand("eval", "evaluate shots against their references");
    evc->add_option("--in", ev.in, "directory of shots")->required();
    evc->add_option("--ref-key", ev.ref_key);
    evc->add_option("--baseline-spp", ev.baseline_spp)->check(CLI::PositiveNumber);
    evc->add_option("--out", ev.out, "report file (JSON lines)")->required();
    evc->add_option("--ckpt", ev.ckpt, "checkpoint used for --estimate denoised");
    evc->add_option("--estimate", ev.estimate, "noisy | reference | denoised")
        ->check(CLI::IsMember({"noisy", "reference", "denoised"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*gen) {
            synth.validate();
            for (int i = 0; i < count; ++i) {
                SynthConfig c = synth;
                c.seed = synth.seed + static_cast<std::uint64_t>(i);
                const Shot shot = gen_shot(c);
                char name[32];
                std::snprintf(name, sizeof name, "shot_%04d", i);
                const fs::path dir = fs::path(synth_out) / name;
                save_shot(shot, dir);
                std::cout << dir.string() << " scene=" << shot.meta.scene_id << " res=" << shot.width << "x"
                          << shot.height << " spp=" << shot.spp << "\n";
            }
        } else if (*pre) {
            run_training(pre_args, false);
        } else if (*joint) {
            run_training(joint_args, true);
        } else if (*dn) {
            run_denoise(dn_in, dn_ckpt, dn_out, export_maps);
        } else if (*evc) {
            return run_eval(ev);
        }
    } catch (const StateError &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kState;
    } catch (const ArgumentError &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const ValidationError &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const IoError &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception &e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kInternal;
    }
    return kOk;
}
