#include "opchecks.hpp"

#include <pwg/synthgen.hpp>
#include <pwg/trainer.hpp>

#include <doctest.h>

using namespace pwg;

namespace {

Shot synth(std::uint64_t seed, int res = 16, int spp = 3) {
    SynthConfig c;
    c.seed = seed;
    c.resolution = res;
    c.spp = spp;
    return gen_shot(c);
}

TrainConfig tiny_config(TrainMode mode) {
    TrainConfig c = TrainConfig::desk();
    c.mode = mode;
    c.width_scale = 0.04;
    c.recon_kernel = 5;
    c.patch_size = 8;
    c.patches_per_shot = 4;
    c.batch_size = 4;
    c.max_epochs = 2;
    c.finetune_epochs = 1;
    c.path.pairs = 64;
    return c;
}

template <typename T>
std::vector<T> flat_values(const std::vector<Parameter<T> *> &ps) {
    std::vector<T> out;
    for (auto *p : ps) out.insert(out.end(), p->value.begin(), p->value.end());
    return out;
}

template <typename T>
std::vector<T> flat_grads(const std::vector<Parameter<T> *> &ps) {
    std::vector<T> out;
    for (auto *p : ps) out.insert(out.end(), p->grad.begin(), p->grad.end());
    return out;
}

ModelState<float> tiny_state(std::uint64_t seed) {
    ModelState<float> s(ModelConfig::make(0.04, 5));
    s.init(seed);
    return s;
}

std::vector<float> values(ModelState<float> &s, std::vector<Parameter<float> *> ps) {
    std::vector<float> out;
    for (auto *p : ps) out.insert(out.end(), p->value.begin(), p->value.end());
    return out;
}

std::vector<Parameter<float> *> column_params(ModelState<float> &s) {
    std::vector<Parameter<float> *> out;
    for (Branch b : kBranches)
        for (Column c : {Column::G, Column::P})
            for (auto *p : s.branch(b).column_parameters(c)) out.push_back(p);
    return out;
}

std::vector<Parameter<float> *> ensembler_params(ModelState<float> &s) {
    std::vector<Parameter<float> *> out;
    for (Branch b : kBranches)
        for (auto *p : s.branch(b).ensembler_parameters()) out.push_back(p);
    return out;
}

}  // namespace

TEST_CASE("early stopping") {
    const std::vector<double> h{1.0, 0.9, 0.95, 0.96, 0.97};
    int stopped_at = -1;
    std::size_t restored = 0;
    for (std::size_t n = 1; n <= h.size(); ++n) {
        const auto d = early_stop(std::span(h).first(n), 2);
        if (d.stop) {
            stopped_at = static_cast<int>(n - 1);
            restored = d.best_index;
            break;
        }
    }
    CHECK(stopped_at == 3);
    CHECK(restored == 1);

    const std::vector<double> nan{1.0, std::nan("")};
    const auto d = early_stop(nan, 5);
    CHECK(d.stop);
    CHECK(d.error);

    std::vector<double> down;
    for (int i = 0; i < 50; ++i) {
        down.push_back(1.0 / (i + 1));
        CHECK_FALSE(early_stop(down, 1).stop);
    }
    CHECK_THROWS_AS(early_stop(std::vector<double>{}, 2), ArgumentError);
    CHECK_THROWS_AS(early_stop(h, 0), ArgumentError);
}

TEST_CASE("patch sampling") {
    const Shot shot = synth(1, 20, 2);
    TrainConfig cfg = tiny_config(TrainMode::Joint);
    cfg.patch_size = 7;
    cfg.patches_per_shot = 12;
    Rng a(5), b(5);
    const auto windows = sample_patch_windows(shot, cfg, a);
    const auto patches = sample_patches(shot, cfg, b);
    REQUIRE(windows.size() == 12);
    REQUIRE(patches.size() == 12);
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const auto &w = windows[i];
        CHECK(w.y >= 0);
        CHECK(w.x >= 0);
        CHECK(w.y + 7 <= 20);
        CHECK(w.x + 7 <= 20);
        const Shot crop = shot.crop(w.y, w.x, 7, 7);
        CHECK(test::same_bits(patches[i], crop));
        CHECK(patches[i].noisy_diffuse(3, 4, 1) == shot.noisy_diffuse(w.y + 3, w.x + 4, 1));
    }
    CHECK(TrainConfig::paper().patches_per_shot == 256);
    CHECK(TrainConfig::paper().patch_size == 128);

    cfg.patch_size = 21;
    Rng c(1);
    CHECK_THROWS_AS(sample_patches(shot, cfg, c), ArgumentError);
}

TEST_CASE("profiles and learning rates") {
    const auto p = TrainConfig::paper();
    CHECK(p.lr_denoiser == 1e-6);
    CHECK(p.lr_ensembler == 1e-5);
    CHECK(p.lr_pretrain == 1e-4);
    CHECK(p.lr_finetune == 1e-6);
    CHECK(p.w_path == 0.1);
    CHECK(p.batch_size == 8);
    CHECK(p.patience == 5);
    CHECK(TrainConfig::profile("paper").lr_ensembler == 1e-5);
    CHECK(TrainConfig::profile("desk").patch_size < p.patch_size);
    CHECK_THROWS_AS(TrainConfig::profile("laptop"), ArgumentError);

    TrainConfig bad = p;
    bad.lr_ensembler = 0.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = p;
    bad.spp_min = 9;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    CHECK(parse_train_mode("fix_n_train") == TrainMode::FixNTrain);
    CHECK(to_string(TrainMode::PretrainP) == "pretrain_P");
    CHECK_THROWS_AS(parse_train_mode("joint_train"), ArgumentError);
}

TEST_CASE("learning rates reach the right parameter groups") {
    // One joint step with distinct rates: every parameter moves by at most
    // its group's rate (Adam's first step is lr * sign(g)).
    const Shot shot = synth(2, 8, 2);
    ModelState<float> st = tiny_state(3), before = st;
    st.provenance.pretrained_g = st.provenance.pretrained_p = true;
    Dataset data{{shot}, {}};
    TrainConfig cfg = tiny_config(TrainMode::Joint);
    cfg.lr_denoiser = 1e-6;
    cfg.lr_ensembler = 1e-3;
    cfg.max_epochs = 1;
    cfg.patches_per_shot = 1;
    cfg.batch_size = 1;
    joint_train(st, data, cfg);
    auto move = [](std::vector<float> a, std::vector<float> b) {
        double m = 0;
        for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - b[i]));
        return m;
    };
    const double dc = move(values(st, column_params(st)), values(before, column_params(before)));
    const double de = move(values(st, ensembler_params(st)), values(before, ensembler_params(before)));
    CHECK(dc > 0.0);
    // Rounding the updated float value adds up to half an ulp of the weight.
    CHECK(dc <= 1e-6 + 1e-7);
    CHECK(de > 1e-4);
    CHECK(de <= 1e-3 + 1e-7);
}

TEST_CASE("w_path = 0 reduces the column P step to pure l1") {
    const Shot shot = synth(4, 8, 3);
    const auto in = make_branch_input<float>(shot, Branch::Specular);
    ModelState<float> a = tiny_state(5), b = a;
    PathLossTerm off{0.0, PathLossConfig{}, 9};
    const auto la = column_step(a.branch(Branch::Specular), Column::P, in, off, 1.0f);

    auto &m = b.branch(Branch::Specular);
    BranchForward<float> rec;
    const auto out = run_column(m, Column::P, in, &rec);
    Image<float> g;
    const float lb = l1_loss(out, *in.reference, &g);
    const auto gfp = m.dp.backward(rec.dp_tape, g, true);
    m.manifold.backward(rec.manifold_tape, &gfp, nullptr);

    CHECK(la.path == 0.0f);
    CHECK(la.reconstruction == lb);
    CHECK(flat_grads(a.parameters()) == flat_grads(b.parameters()));

    // A positive weight adds a path term but leaves the reconstruction loss alone.
    ModelState<float> c = tiny_state(5);
    PathLossTerm on{0.1, PathLossConfig{}, 9};
    const auto lc = column_step(c.branch(Branch::Specular), Column::P, in, on, 1.0f);
    CHECK(lc.reconstruction == la.reconstruction);
    CHECK(lc.path >= 0.0f);
}

TEST_CASE("l1 loss and its gradient") {
    Image<double> e(1, 2, 2), r(1, 2, 2);
    e.vec() = {1, 2, 3, 4};
    r.vec() = {0, 2, 5, 1};
    Image<double> g;
    CHECK(l1_loss(e, r, &g) == doctest::Approx((1 + 0 + 2 + 3) / 4.0));
    CHECK(g.vec() == std::vector<double>{0.25, 0.0, -0.25, 0.25});
}

TEST_CASE("fix_n_train leaves the columns bitwise unchanged") {
    Dataset data{{synth(6), synth(7)}, {synth(8)}};
    ModelState<float> st = tiny_state(9);
    st.provenance.pretrained_g = st.provenance.pretrained_p = true;
    const ModelState<float> before = st;
    joint_train(st, data, tiny_config(TrainMode::FixNTrain));
    ModelState<float> b = before;
    CHECK(values(st, column_params(st)) == values(b, column_params(b)));
    CHECK(values(st, ensembler_params(st)) != values(b, ensembler_params(b)));
    CHECK(st.provenance.last_mode == "fix_n_train");
}

TEST_CASE("mode and provenance errors") {
    Dataset data{{synth(10)}, {}};
    ModelState<float> fresh = tiny_state(1);
    CHECK_THROWS_AS(joint_train(fresh, data, tiny_config(TrainMode::Joint)), StateError);
    CHECK_THROWS_AS(joint_train(fresh, data, tiny_config(TrainMode::FixNTrain)), StateError);
    CHECK_THROWS_AS(pretrain(fresh, data, tiny_config(TrainMode::Finetune)), StateError);
    CHECK_THROWS_AS(pretrain(fresh, data, tiny_config(TrainMode::Joint)), ArgumentError);
    CHECK_THROWS_AS(joint_train(fresh, data, tiny_config(TrainMode::PretrainG)), ArgumentError);

    Shot noref = synth(11);
    noref.reference_diffuse.reset();
    Dataset bad{{noref}, {}};
    CHECK_THROWS_AS(pretrain(fresh, bad, tiny_config(TrainMode::PretrainG)), StateError);
    CHECK_THROWS_AS(pretrain(fresh, Dataset{}, tiny_config(TrainMode::PretrainG)), ArgumentError);
}

TEST_CASE("pretraining reduces the loss and sets provenance") {
    Dataset data{{synth(12), synth(13), synth(14)}, {synth(15)}};
    ModelState<float> st = tiny_state(2);
    TrainConfig cfg = tiny_config(TrainMode::PretrainG);
    cfg.max_epochs = 6;
    cfg.finetune_epochs = 0;
    cfg.patches_per_shot = 8;
    cfg.lr_pretrain = 1e-3;
    std::vector<EpochRecord> seen;
    const auto r = pretrain(st, data, cfg, [&](const EpochRecord &e) { seen.push_back(e); });
    REQUIRE(r.log.size() == 6);
    CHECK(seen.size() == 6);
    CHECK(r.log.back().train_loss < r.log.front().train_loss);
    CHECK(st.provenance.pretrained_g);
    CHECK_FALSE(st.provenance.pretrained_p);
    CHECK(st.epochs == 6);
    double best = INFINITY;
    for (const auto &e : r.log) best = std::min(best, e.validation_relmse);
    CHECK(st.best_validation == best);
    CHECK(to_json_line(r.log.front()).find("\"mode\":\"pretrain_G\"") != std::string::npos);
}

TEST_CASE("training is deterministic for a fixed seed") {
    Dataset data{{synth(16)}, {synth(17)}};
    auto run = [&] {
        ModelState<float> st = tiny_state(4);
        TrainConfig cfg = tiny_config(TrainMode::PretrainP);
        cfg.seed = 77;
        pretrain(st, data, cfg);
        return flat_values(st.parameters());
    };
    CHECK(run() == run());
}

TEST_CASE("full_scratch starts from fresh weights without pretrained columns") {
    Dataset data{{synth(18)}, {}};
    ModelState<float> st = tiny_state(1);
    TrainConfig cfg = tiny_config(TrainMode::FullScratch);
    cfg.max_epochs = 1;
    const auto r = joint_train(st, data, cfg);
    CHECK(r.log.size() == 1);
    CHECK(std::isfinite(r.best_validation));
    CHECK_FALSE(st.provenance.pretrained_g);
}

TEST_CASE("gradient mask and stop-gradient contracts") {
    const Shot shot = synth(19, 8, 2);
    ModelState<double> st(ModelConfig::make(0.04, 5));
    st.init(6);
    for (Branch b : kBranches) {
        const auto m = gradient_mask_check(st, shot, b);
        INFO("ig " << m.max_error_ig << " ip " << m.max_error_ip);
        CHECK(m.passed);
        CHECK(m.theta_g_norm_wg0 == 0.0);
        CHECK(m.max_grad_ip_wg1 == 0.0);

        GradCheckOptions o;
        o.max_coords = 200;
        o.tolerance = 1e-4;
        const auto s = stop_gradient_contract_check(st, shot, b, o);
        INFO("theta_g rel " << s.theta_g.max_rel_error << " checked " << s.theta_g.checked);
        CHECK(s.passed);
        CHECK(s.ensembler_grad_invariant);
    }
    Image<float> mask(8, 8, 1, 0.0f);
    mask(2, 2, 0) = 1.0f;
    CHECK(gradient_mask_check(st.cast<float>(), shot, Branch::Diffuse, &mask, 1e-6).passed);
    Image<float> wrong(4, 8, 1);
    CHECK_THROWS_AS(gradient_mask_check(st, shot, Branch::Diffuse, &wrong), ArgumentError);
}

TEST_CASE("checkpoint round trip is bitwise") {
    test::TempDir dir("trainer");
    ModelState<float> st = tiny_state(8);
    st.provenance.pretrained_p = true;
    st.provenance.last_mode = "pretrain_P";
    st.epochs = 3;
    save_checkpoint(st, dir.path() / "ck");
    ModelState<float> back = load_checkpoint(dir.path() / "ck");
    CHECK(flat_values(back.parameters()) == flat_values(st.parameters()));
    CHECK(back.provenance.pretrained_p);
    CHECK_FALSE(back.provenance.pretrained_g);
    CHECK(back.provenance.last_mode == "pretrain_P");
    CHECK(back.epochs == 3);
    CHECK(back.config.g.width == st.config.g.width);
    CHECK(back.config.g.recon_kernel == 5);
    CHECK_THROWS(load_checkpoint(dir.path() / "missing"));

    ModelState<double> d = st.cast<double>();
    save_checkpoint(d, dir.path() / "ck64");
    CHECK(flat_values(load_checkpoint_f64(dir.path() / "ck64").parameters()) == flat_values(d.parameters()));
}
