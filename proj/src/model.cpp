#include <pwg/model.hpp>

#include <pwg/container.hpp>

#include <sstream>

namespace pwg {

ModelConfig ModelConfig::make(double width_scale, int recon_kernel) {
    if (!(width_scale > 0.0)) throw ArgumentError("width_scale must be > 0");
    ModelConfig cfg;
    cfg.width_scale = width_scale;
    cfg.g = DenoiserConfig::make(Column::G, width_scale, recon_kernel);
    cfg.p = DenoiserConfig::make(Column::P, width_scale, recon_kernel);
    cfg.ensembler = EnsemblerConfig::make(width_scale);
    cfg.validate();
    return cfg;
}

void ModelConfig::validate() const {
    g.validate();
    p.validate();
    manifold.validate();
    ensembler.validate();
    if (g.aux_channels() != gbuf::kChannels) throw ArgumentError("column G must take the 24-channel G-buffer");
    if (p.aux_channels() != manifold.output_dim())
        throw ArgumentError("column P auxiliary width must equal the P-buffer size");
    if (ensembler.input_channels != 6 + gbuf::kChannels + manifold.output_dim())
        throw ArgumentError("ensembler input must be I_G, I_P, f_G and f_P");
}

namespace {

std::string join_ints(const std::vector<int> &v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::vector<int> split_ints(const std::string &s, const std::string &field) {
    std::vector<int> out;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ',')) out.push_back(static_cast<int>(parse_int(tok, field)));
    return out;
}

void write_config(ContainerWriter &w, const ModelConfig &c) {
    w.meta("width_scale", format_number(c.width_scale));
    auto den = [&](const char *prefix, const DenoiserConfig &d) {
        const std::string p = prefix;
        w.meta(p + ".depth", std::to_string(d.depth));
        w.meta(p + ".width", std::to_string(d.width));
        w.meta(p + ".kernel", std::to_string(d.kernel));
        w.meta(p + ".recon_kernel", std::to_string(d.recon_kernel));
        w.meta(p + ".input_channels", std::to_string(d.input_channels));
    };
    den("dg", c.g);
    den("dp", c.p);
    w.meta("manifold.widths", join_ints(c.manifold.widths));
    w.meta("manifold.slope", format_number(c.manifold.slope));
    w.meta("ensembler.layers", std::to_string(c.ensembler.layers));
    w.meta("ensembler.width", std::to_string(c.ensembler.width));
    w.meta("ensembler.kernel", std::to_string(c.ensembler.kernel));
    w.meta("ensembler.input_channels", std::to_string(c.ensembler.input_channels));
}

ModelConfig read_config(const Manifest &m) {
    ModelConfig c;
    auto i = [&](const std::string &key) { return static_cast<int>(parse_int(m.require(key), key)); };
    c.width_scale = parse_number(m.require("width_scale"), "width_scale");
    auto den = [&](const std::string &p, DenoiserConfig &d) {
        d.depth = i(p + ".depth");
        d.width = i(p + ".width");
        d.kernel = i(p + ".kernel");
        d.recon_kernel = i(p + ".recon_kernel");
        d.input_channels = i(p + ".input_channels");
        d.width_scale = c.width_scale;
    };
    den("dg", c.g);
    den("dp", c.p);
    c.manifold.widths = split_ints(m.require("manifold.widths"), "manifold.widths");
    c.manifold.slope = parse_number(m.require("manifold.slope"), "manifold.slope");
    c.ensembler.layers = i("ensembler.layers");
    c.ensembler.width = i("ensembler.width");
    c.ensembler.kernel = i("ensembler.kernel");
    c.ensembler.input_channels = i("ensembler.input_channels");
    c.ensembler.width_scale = c.width_scale;
    c.validate();
    return c;
}

template <typename T>
void save_impl(const ModelState<T> &state, const std::filesystem::path &dir) {
    ContainerWriter w(dir, "checkpoint");
    w.meta("dtype", std::is_same_v<T, float> ? "f32" : "f64");
    write_config(w, state.config);
    w.meta("pretrained_g", state.provenance.pretrained_g ? "1" : "0");
    w.meta("pretrained_p", state.provenance.pretrained_p ? "1" : "0");
    w.meta("last_mode", state.provenance.last_mode);
    w.meta("epochs", std::to_string(state.epochs));
    w.meta("best_validation", format_number(state.best_validation));
    ModelState<T> copy = state;
    for (auto *p : copy.parameters()) {
        std::vector<std::int64_t> shape(p->shape.begin(), p->shape.end());
        w.meta("step." + p->name, std::to_string(p->step));
        w.add(p->name, shape, std::span<const T>(p->value), "params.bin");
        w.add(p->name + "@m", shape, std::span<const T>(p->m), "adam.bin");
        w.add(p->name + "@v", shape, std::span<const T>(p->v), "adam.bin");
    }
    w.finish();
}

template <typename T>
ModelState<T> load_impl(const std::filesystem::path &dir) {
    ContainerReader r(dir);
    const auto &m = r.manifest();
    if (m.kind != "checkpoint") throw IoError(dir.string(), "container kind is '" + m.kind + "', expected 'checkpoint'");
    const std::string want = std::is_same_v<T, float> ? "f32" : "f64";
    if (m.require("dtype") != want) throw StateError("checkpoint dtype is " + m.require("dtype") + ", expected " + want);
    ModelState<T> state(read_config(m));
    state.provenance.pretrained_g = m.require("pretrained_g") == "1";
    state.provenance.pretrained_p = m.require("pretrained_p") == "1";
    state.provenance.last_mode = m.require("last_mode");
    state.epochs = static_cast<int>(parse_int(m.require("epochs"), "epochs"));
    state.best_validation = parse_number(m.require("best_validation"), "best_validation");
    for (auto *p : state.parameters()) {
        std::vector<std::int64_t> shape(p->shape.begin(), p->shape.end());
        if constexpr (std::is_same_v<T, float>) {
            p->value = r.read_f32(p->name, shape);
            p->m = r.read_f32(p->name + "@m", shape);
            p->v = r.read_f32(p->name + "@v", shape);
        } else {
            p->value = r.read_f64(p->name, shape);
            p->m = r.read_f64(p->name + "@m", shape);
            p->v = r.read_f64(p->name + "@v", shape);
        }
        p->step = parse_int(m.require("step." + p->name), "step." + p->name);
    }
    return state;
}

}  // namespace

void save_checkpoint(const ModelState<float> &state, const std::filesystem::path &dir) { save_impl(state, dir); }
void save_checkpoint(const ModelState<double> &state, const std::filesystem::path &dir) { save_impl(state, dir); }
ModelState<float> load_checkpoint(const std::filesystem::path &dir) { return load_impl<float>(dir); }
ModelState<double> load_checkpoint_f64(const std::filesystem::path &dir) { return load_impl<double>(dir); }

void check_layout(const Shot &shot, const ModelConfig &config) {
    if (shot.gbuffer_diffuse.channels() != config.g.aux_channels())
        throw StateError("gbuffer_diffuse: shot has " + std::to_string(shot.gbuffer_diffuse.channels()) +
                         " channels, checkpoint expects " + std::to_string(config.g.aux_channels()));
    if (shot.gbuffer_specular.channels() != config.g.aux_channels())
        throw StateError("gbuffer_specular: shot has " + std::to_string(shot.gbuffer_specular.channels()) +
                         " channels, checkpoint expects " + std::to_string(config.g.aux_channels()));
    if (shot.descriptors.channels() != config.manifold.widths.front())
        throw StateError("descriptors: shot has " + std::to_string(shot.descriptors.channels()) +
                         " channels, checkpoint expects " + std::to_string(config.manifold.widths.front()));
    if (shot.descriptors.samples() < 1) throw StateError("descriptors: shot has no samples");
}

DenoiseResult denoise_shot(const Shot &shot, const ModelState<float> &state) {
    check_layout(shot, state.config);
    DenoiseResult res;
    std::array<Image<float>, 2> albedo;
    for (Branch b : kBranches) {
        const int i = static_cast<int>(b);
        const auto in = make_branch_input<float>(shot, b);
        auto f = forward_branch(state.branch(b), in, false);
        res.ig[i] = std::move(f.ig);
        res.ip[i] = std::move(f.ip);
        res.ie[i] = std::move(f.ie);
        res.weights[i] = std::move(f.weights);
        albedo[i] = in.albedo;
    }
    const auto &alb = albedo[static_cast<int>(Branch::Diffuse)];
    res.final_image = postprocess_combine(res.ie[0], res.ie[1], alb);
    res.column_g = postprocess_combine(res.ig[0], res.ig[1], alb);
    res.column_p = postprocess_combine(res.ip[0], res.ip[1], alb);
    return res;
}

}  // namespace pwg
