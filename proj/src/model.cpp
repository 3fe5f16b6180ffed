#include "fluencebench/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "fluencebench/field.hpp"
#include "fluencebench/hashrand.hpp"
#include "fluencebench/phantom.hpp"

namespace fluencebench {

void ModelConfig::validate() const {
    if (in_channels < 1 || out_channels < 1)
        throw ConfigError("ModelConfig: channel counts must be >= 1");
    if (img_h < 1 || img_w < 1 || patch < 1)
        throw ConfigError("ModelConfig: bad image/patch size");
    if (img_h % patch != 0 || img_w % patch != 0)
        throw ConfigError("ModelConfig: image dims must be divisible by patch");
    if (embed_dim < 1 || heads < 1 || embed_dim % heads != 0)
        throw ConfigError("ModelConfig: embed_dim must be divisible by heads");
    if (window < 1)
        throw ConfigError("ModelConfig: window must be >= 1");
    if (attention == AttentionMode::Windowed && (grid_h() % 2 != 0 || grid_w() % 2 != 0))
        throw ConfigError("ModelConfig: windowed mode needs even token grid for merging");
    if (!(input_scale > 0.0))
        throw ConfigError("ModelConfig: input_scale must be > 0");
}

nlohmann::json ModelConfig::to_json() const {
    nlohmann::json j;
    j["attention"] = attention_mode_name(attention);
    j["in_channels"] = in_channels;
    j["out_channels"] = out_channels;
    j["img_h"] = img_h;
    j["img_w"] = img_w;
    j["patch"] = patch;
    j["embed_dim"] = embed_dim;
    j["heads"] = heads;
    j["window"] = window;
    j["input_scale"] = input_scale;
    j["pos_init"] = pos_init;
    j["relu_head"] = relu_head;
    return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
        c.attention = attention_mode_from_name(j.at("attention").get<std::string>());
        c.in_channels = j.at("in_channels").get<int>();
        c.out_channels = j.at("out_channels").get<int>();
        c.img_h = j.at("img_h").get<int>();
        c.img_w = j.at("img_w").get<int>();
        c.patch = j.at("patch").get<int>();
        c.embed_dim = j.at("embed_dim").get<int>();
        c.heads = j.at("heads").get<int>();
        c.window = j.at("window").get<int>();
        c.input_scale = j.at("input_scale").get<double>();
        c.pos_init = j.value("pos_init", c.pos_init);
        c.relu_head = j.value("relu_head", c.relu_head);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("ModelConfig: malformed JSON: ") + e.what());
    }
    c.validate();
    return c;
}

int fit_window(int grid_h, int grid_w, int preferred) {
    for (int w = preferred; w > 1; --w)
        if (grid_h % w == 0 && grid_w % w == 0)
            return w;
    return 1;
}

namespace detail {

std::vector<int64_t> patchify_perm(int channels, int h, int w, int p) {
    const int gh = h / p, gw = w / p;
    const int64_t pvec = static_cast<int64_t>(channels) * p * p;
    std::vector<int64_t> perm(static_cast<size_t>(gh) * gw * pvec);
    int64_t out = 0;
    for (int gr = 0; gr < gh; ++gr)
        for (int gc = 0; gc < gw; ++gc)
            for (int c = 0; c < channels; ++c)
                for (int pr = 0; pr < p; ++pr)
                    for (int pc = 0; pc < p; ++pc)
                        perm[static_cast<size_t>(out++)] =
                            (static_cast<int64_t>(c) * h + gr * p + pr) * w + gc * p + pc;
    return perm;
}

std::vector<int64_t> unpatchify_perm(int channels, int h, int w, int p) {
    const auto fwd = patchify_perm(channels, h, w, p);
    std::vector<int64_t> inv(fwd.size());
    for (size_t i = 0; i < fwd.size(); ++i)
        inv[static_cast<size_t>(fwd[i])] = static_cast<int64_t>(i);
    return inv;
}

std::vector<int64_t> merge_perm(int gh, int gw, int dim) {
    const int gh2 = gh / 2, gw2 = gw / 2;
    std::vector<int64_t> perm(static_cast<size_t>(gh) * gw * dim);
    int64_t out = 0;
    for (int r = 0; r < gh2; ++r)
        for (int c = 0; c < gw2; ++c)
            for (int dr = 0; dr < 2; ++dr)
                for (int dc = 0; dc < 2; ++dc)
                    for (int k = 0; k < dim; ++k)
                        perm[static_cast<size_t>(out++)] =
                            (static_cast<int64_t>(r * 2 + dr) * gw + c * 2 + dc) * dim + k;
    return perm;
}

std::vector<int64_t> unmerge_perm(int gh, int gw, int dim) {
    const auto fwd = merge_perm(gh, gw, dim);
    std::vector<int64_t> inv(fwd.size());
    for (size_t i = 0; i < fwd.size(); ++i)
        inv[static_cast<size_t>(fwd[i])] = static_cast<int64_t>(i);
    return inv;
}

} // namespace detail

namespace {

Tensor<float> init_weight(int64_t rows, int64_t cols, uint64_t seed) {
    Tensor<float> t({rows, cols});
    const double std = std::sqrt(2.0 / static_cast<double>(rows + cols));
    for (size_t i = 0; i < t.v.size(); ++i)
        t.v[i] = static_cast<float>(std * normal01(seed, i));
    return t;
}

Tensor<float> init_const(std::vector<int64_t> shape, float v) {
    Tensor<float> t(std::move(shape), v);
    return t;
}

Tensor<float> init_pos(int64_t n, int64_t dim, double scale, uint64_t seed) {
    Tensor<float> t({n, dim});
    for (size_t i = 0; i < t.v.size(); ++i)
        t.v[i] = static_cast<float>(scale * normal01(seed, i));
    return t;
}

void init_block(ParamMap& p, const std::string& prefix, int64_t dim, uint64_t seed) {
    p[prefix + ".ln1.g"] = init_const({dim}, 1.0f);
    p[prefix + ".ln1.b"] = init_const({dim}, 0.0f);
    p[prefix + ".wq"] = init_weight(dim, dim, substream(seed, prefix + ".wq"));
    p[prefix + ".bq"] = init_const({dim}, 0.0f);
    p[prefix + ".wk"] = init_weight(dim, dim, substream(seed, prefix + ".wk"));
    p[prefix + ".bk"] = init_const({dim}, 0.0f);
    p[prefix + ".wv"] = init_weight(dim, dim, substream(seed, prefix + ".wv"));
    p[prefix + ".bv"] = init_const({dim}, 0.0f);
    p[prefix + ".wo"] = init_weight(dim, dim, substream(seed, prefix + ".wo"));
    p[prefix + ".bo"] = init_const({dim}, 0.0f);
    p[prefix + ".ln2.g"] = init_const({dim}, 1.0f);
    p[prefix + ".ln2.b"] = init_const({dim}, 0.0f);
    p[prefix + ".mlp.w1"] = init_weight(dim, 4 * dim, substream(seed, prefix + ".mlp.w1"));
    p[prefix + ".mlp.b1"] = init_const({4 * dim}, 0.0f);
    p[prefix + ".mlp.w2"] = init_weight(4 * dim, dim, substream(seed, prefix + ".mlp.w2"));
    p[prefix + ".mlp.b2"] = init_const({dim}, 0.0f);
}

} // namespace

ModelParams init_model(const ModelConfig& cfg, const std::string& name, const std::string& stage,
                       uint64_t seed) {
    cfg.validate();
    ModelParams m;
    m.name = name;
    m.stage = stage;
    m.config = cfg;

    const int64_t dim = cfg.embed_dim;
    const int64_t tokens = static_cast<int64_t>(cfg.grid_h()) * cfg.grid_w();
    const int64_t pvec = static_cast<int64_t>(cfg.in_channels) * cfg.patch * cfg.patch;

    m.tensors["embed.w"] = init_weight(pvec, dim, substream(seed, "embed.w"));
    m.tensors["embed.b"] = init_const({dim}, 0.0f);
    m.tensors["pos1"] = init_pos(tokens, dim, cfg.pos_init, substream(seed, "pos1"));
    init_block(m.tensors, "blk0", dim, seed);
    if (cfg.attention == AttentionMode::Global) {
        init_block(m.tensors, "blk1", dim, seed);
    } else {
        m.tensors["merge.w"] = init_weight(4 * dim, 2 * dim, substream(seed, "merge.w"));
        m.tensors["merge.b"] = init_const({2 * dim}, 0.0f);
        m.tensors["pos2"] = init_pos(tokens / 4, 2 * dim, cfg.pos_init, substream(seed, "pos2"));
        init_block(m.tensors, "blk1", 2 * dim, seed);
        m.tensors["expand.w"] = init_weight(2 * dim, 4 * dim, substream(seed, "expand.w"));
        m.tensors["expand.b"] = init_const({4 * dim}, 0.0f);
    }
    m.tensors["head.ln.g"] = init_const({dim}, 1.0f);
    m.tensors["head.ln.b"] = init_const({dim}, 0.0f);
    // Zero weights + positive bias: every output channel starts alive and
    // identical, so none gets frozen behind the ReLU by early background
    // pressure before its features align.
    m.tensors["head.w"] = init_const(
        {dim, static_cast<int64_t>(cfg.patch) * cfg.patch * cfg.out_channels}, 0.0f);
    m.tensors["head.b"] =
        init_const({static_cast<int64_t>(cfg.patch) * cfg.patch * cfg.out_channels}, 0.2f);
    return m;
}

void save_checkpoint(const ModelParams& model, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["format"] = "fluencebench-checkpoint-v1";
    manifest["model_name"] = model.name;
    manifest["stage"] = model.stage;
    manifest["attention"] = attention_mode_name(model.config.attention);
    manifest["config"] = model.config.to_json();
    manifest["step_count"] = model.step_count;

    nlohmann::json tensors = nlohmann::json::array();
    int idx = 0;
    for (const auto& [name, t] : model.tensors) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "t%04d.farr", idx++);
        const int64_t rows = t.shape.size() == 2 ? t.shape[0] : 1;
        const int64_t cols = t.shape.empty() ? 1 : t.shape.back();
        Field f = make_field(1, 1, static_cast<int>(rows), static_cast<int>(cols), {1.0, 1.0, 1.0});
        f.values = t.v;
        write_field(f, dir / buf);
        nlohmann::json entry;
        entry["name"] = name;
        entry["file"] = buf;
        entry["shape"] = t.shape;
        tensors.push_back(entry);
    }
    manifest["tensors"] = tensors;
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out)
        throw ConfigError("save_checkpoint: cannot open " + (dir / "manifest.json").string());
    out << manifest.dump(2) << "\n";
}

ModelParams load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in)
        throw ConfigError("load_checkpoint: cannot open " + (dir / "manifest.json").string());
    nlohmann::json manifest;
    ModelParams m;
    try {
        in >> manifest;
        if (manifest.at("format").get<std::string>() != "fluencebench-checkpoint-v1")
            throw ConfigError("load_checkpoint: unknown checkpoint format");
        m.name = manifest.at("model_name").get<std::string>();
        m.stage = manifest.at("stage").get<std::string>();
        m.config = ModelConfig::from_json(manifest.at("config"));
        m.step_count = manifest.at("step_count").get<int64_t>();
        for (const auto& entry : manifest.at("tensors")) {
            const std::string name = entry.at("name").get<std::string>();
            const Field f = read_field(dir / entry.at("file").get<std::string>());
            Tensor<float> t;
            t.shape = entry.at("shape").get<std::vector<int64_t>>();
            t.v = f.values;
            if (Tensor<float>::numel_of(t.shape) != static_cast<int64_t>(t.v.size()))
                throw ConfigError("load_checkpoint: tensor shape mismatch for " + name);
            m.tensors[name] = std::move(t);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("load_checkpoint: malformed manifest: ") + e.what());
    }
    for (const auto& [name, t] : m.tensors)
        for (float v : t.v)
            if (!std::isfinite(v))
                throw ConfigError("load_checkpoint: non-finite values in " + name);
    return m;
}

std::vector<float> dose_stage_input(const Field& ct_norm, const Field& masks, int slice) {
    const int64_t hw = ct_norm.slice_stride();
    std::vector<float> input(static_cast<size_t>((1 + masks.channels) * hw));
    std::copy_n(ct_norm.slice_ptr(0, slice), hw, input.data());
    for (int c = 0; c < masks.channels; ++c)
        std::copy_n(masks.slice_ptr(c, slice), hw, input.data() + (1 + c) * hw);
    return input;
}

TwoStageOutput two_stage_forward(const TwoStageModel& model, const CaseRecord& rec,
                                 const PerturbationSpec& spec) {
    spec.validate();
    const ModelConfig& dcfg = model.dose.config;
    const ModelConfig& fcfg = model.fluence.config;
    if (dcfg.img_h != rec.ct.height || dcfg.img_w != rec.ct.width ||
        dcfg.in_channels != 1 + rec.masks.channels)
        throw ConfigError("two_stage_forward: dose model does not match the case grid");
    if (fcfg.img_h != rec.ct.width || fcfg.img_w != rec.ct.depth)
        throw ConfigError("two_stage_forward: fluence model does not match the beam grid");

    // Stress transforms apply to model inputs only.
    Field ct_in = normalize_ct(rec.ct, model.ct_window_lo, model.ct_window_hi);
    Field masks_in = rec.masks;
    switch (spec.kind) {
        case PerturbationKind::Geometric:
            ct_in = rigid_transform(ct_in, spec.theta_deg, spec.shift_mm, 0.0f);
            masks_in = rigid_transform(masks_in, spec.theta_deg, spec.shift_mm, 0.0f, true);
            break;
        case PerturbationKind::Noise:
            ct_in = gaussian_noise(ct_in, spec.sigma, spec.seed);
            break;
        case PerturbationKind::Bias:
            ct_in = bias_field(ct_in, spec.bias_strength, spec.bias_offset, spec.seed);
            break;
        case PerturbationKind::None:
        case PerturbationKind::DataFraction:
            break;
    }

    TwoStageOutput out;
    out.dose = make_field(1, rec.ct.depth, rec.ct.height, rec.ct.width, rec.ct.spacing_mm);
    for (int d = 0; d < rec.ct.depth; ++d) {
        Tape<float> tp;
        std::vector<float> input = dose_stage_input(ct_in, masks_in, d);
        for (float& v : input)
            v = static_cast<float>(v * dcfg.input_scale);
        const auto fwd = model_forward(tp, model.dose, input);
        const auto& pred = tp.value(fwd.prediction);
        std::copy(pred.begin(), pred.end(), out.dose.slice_ptr(0, d));
    }

    out.fluence = make_fluence(rec.beams.beam_count, rec.beams.fluence_h, rec.beams.fluence_w);
    for (int b = 0; b < rec.beams.beam_count; ++b) {
        const Map2D proj = bev_projection(out.dose, rec.beams.gantry_angles_deg[b]);
        Tape<float> tp;
        std::vector<float> input(proj.values.size());
        for (size_t i = 0; i < input.size(); ++i)
            input[i] = static_cast<float>(proj.values[i] * fcfg.input_scale);
        const auto fwd = model_forward(tp, model.fluence, input);
        const auto& pred = tp.value(fwd.prediction);
        std::copy(pred.begin(), pred.end(), out.fluence.beam_ptr(b));
    }
    return out;
}

} // namespace fluencebench
