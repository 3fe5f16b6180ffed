#pragma once
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fluencebench/case_record.hpp"
#include "fluencebench/nn.hpp"
#include "fluencebench/perturb.hpp"
#include "fluencebench/tape.hpp"

namespace fluencebench {

// Architecture of one toy attention regressor over a 2D input.
struct ModelConfig {
    AttentionMode attention = AttentionMode::Global;
    int in_channels = 1;
    int out_channels = 1;
    int img_h = 32;
    int img_w = 32;
    int patch = 4;
    int embed_dim = 16;
    int heads = 2;
    int window = 4;
    double input_scale = 1.0; // fixed multiplier applied to inputs
    double pos_init = 0.05;   // positional embedding init scale
    bool relu_head = true;    // clamp outputs at zero (required for fluence)

    int grid_h() const { return img_h / patch; }
    int grid_w() const { return img_w / patch; }
    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

// Largest window <= preferred that tiles the grid exactly.
int fit_window(int grid_h, int grid_w, int preferred);

struct ModelParams {
    std::string name; // e.g. "global" / "windowed"
    std::string stage; // "dose" / "fluence"
    ModelConfig config;
    ParamMap tensors;
    int64_t step_count = 0;
};

ModelParams init_model(const ModelConfig& cfg, const std::string& name, const std::string& stage,
                       uint64_t seed);

// Node ids of every named parameter, plus the prediction head output.
template <typename T>
struct ForwardNodes {
    std::map<std::string, int> params;
    int prediction = -1; // 2D map node (img_h x img_w) when out_channels == 1
};

// Registers all parameters on the tape and builds the forward graph for
// one image. `image` is the flat (in_channels * img_h * img_w) input.
template <typename T>
ForwardNodes<T> model_forward(Tape<T>& tp, const ModelParams& model,
                              const std::vector<T>& image);

// Checkpoint directory: manifest.json plus one FARR1 file per tensor.
void save_checkpoint(const ModelParams& model, const std::filesystem::path& dir);
ModelParams load_checkpoint(const std::filesystem::path& dir);

// The trained two-stage pipeline: anatomy -> dose -> per-beam fluence.
struct TwoStageModel {
    ModelParams dose;
    ModelParams fluence;
    float ct_window_lo = -160.0f;
    float ct_window_hi = 240.0f;
};

struct TwoStageOutput {
    Field dose;        // predicted dose volume
    FluenceSet fluence; // predicted per-beam fluence, >= 0
};

// Applies the perturbation to the *inputs* (normalized CT, and masks for
// geometric scenarios), never to ground truth, then runs both stages.
TwoStageOutput two_stage_forward(const TwoStageModel& model, const CaseRecord& rec,
                                 const PerturbationSpec& spec);

// Stacks normalized CT + mask channels for one axial slice into the dose
// model's flat input vector.
std::vector<float> dose_stage_input(const Field& ct_norm, const Field& masks, int slice);

// --- template implementation -------------------------------------------

namespace detail {

template <typename T>
int register_param(Tape<T>& tp, std::map<std::string, int>& ids, const std::string& name,
                   const Tensor<float>& t) {
    const int id = tp.input(t.template cast<T>());
    ids[name] = id;
    return id;
}

template <typename T>
AttentionBlockNodes register_block(Tape<T>& tp, std::map<std::string, int>& ids,
                                   const ParamMap& tensors, const std::string& prefix) {
    AttentionBlockNodes b;
    b.ln1_g = register_param(tp, ids, prefix + ".ln1.g", tensors.at(prefix + ".ln1.g"));
    b.ln1_b = register_param(tp, ids, prefix + ".ln1.b", tensors.at(prefix + ".ln1.b"));
    b.wq = register_param(tp, ids, prefix + ".wq", tensors.at(prefix + ".wq"));
    b.bq = register_param(tp, ids, prefix + ".bq", tensors.at(prefix + ".bq"));
    b.wk = register_param(tp, ids, prefix + ".wk", tensors.at(prefix + ".wk"));
    b.bk = register_param(tp, ids, prefix + ".bk", tensors.at(prefix + ".bk"));
    b.wv = register_param(tp, ids, prefix + ".wv", tensors.at(prefix + ".wv"));
    b.bv = register_param(tp, ids, prefix + ".bv", tensors.at(prefix + ".bv"));
    b.wo = register_param(tp, ids, prefix + ".wo", tensors.at(prefix + ".wo"));
    b.bo = register_param(tp, ids, prefix + ".bo", tensors.at(prefix + ".bo"));
    b.ln2_g = register_param(tp, ids, prefix + ".ln2.g", tensors.at(prefix + ".ln2.g"));
    b.ln2_b = register_param(tp, ids, prefix + ".ln2.b", tensors.at(prefix + ".ln2.b"));
    b.mlp_w1 = register_param(tp, ids, prefix + ".mlp.w1", tensors.at(prefix + ".mlp.w1"));
    b.mlp_b1 = register_param(tp, ids, prefix + ".mlp.b1", tensors.at(prefix + ".mlp.b1"));
    b.mlp_w2 = register_param(tp, ids, prefix + ".mlp.w2", tensors.at(prefix + ".mlp.w2"));
    b.mlp_b2 = register_param(tp, ids, prefix + ".mlp.b2", tensors.at(prefix + ".mlp.b2"));
    return b;
}

// image (C,H,W) flat -> patch matrix (tokens x C*p*p) element permutation.
std::vector<int64_t> patchify_perm(int channels, int h, int w, int p);
// head output (tokens x p*p*C) -> image (C*H*W) element permutation.
std::vector<int64_t> unpatchify_perm(int channels, int h, int w, int p);
// 2x2 token merge: (gh*gw x dim) -> (gh/2*gw/2 x 4*dim) permutation.
std::vector<int64_t> merge_perm(int gh, int gw, int dim);
std::vector<int64_t> unmerge_perm(int gh, int gw, int dim);

} // namespace detail

template <typename T>
ForwardNodes<T> model_forward(Tape<T>& tp, const ModelParams& model,
                              const std::vector<T>& image) {
    const ModelConfig& cfg = model.config;
    cfg.validate();
    const int64_t n_pixels =
        static_cast<int64_t>(cfg.in_channels) * cfg.img_h * cfg.img_w;
    if (static_cast<int64_t>(image.size()) != n_pixels)
        throw ConfigError("model_forward: input size mismatch");

    ForwardNodes<T> out;
    auto& ids = out.params;
    const ParamMap& ten = model.tensors;

    Tensor<T> img({n_pixels});
    img.v = image;
    const int img_node = tp.input(std::move(img));
    const int64_t gh = cfg.grid_h(), gw = cfg.grid_w();
    const int64_t tokens_n = gh * gw;
    const int64_t pvec = static_cast<int64_t>(cfg.in_channels) * cfg.patch * cfg.patch;

    int x = tp.permute_elems(img_node, detail::patchify_perm(cfg.in_channels, cfg.img_h, cfg.img_w, cfg.patch),
                             {tokens_n, pvec});
    x = tp.add_bias(tp.matmul(x, detail::register_param(tp, ids, "embed.w", ten.at("embed.w"))),
                    detail::register_param(tp, ids, "embed.b", ten.at("embed.b")));
    x = tp.add(x, detail::register_param(tp, ids, "pos1", ten.at("pos1")));

    if (cfg.attention == AttentionMode::Global) {
        const auto b0 = detail::register_block(tp, ids, ten, "blk0");
        x = attention_block(tp, x, b0, AttentionMode::Global, gh, gw, 0, cfg.heads);
        const auto b1 = detail::register_block(tp, ids, ten, "blk1");
        x = attention_block(tp, x, b1, AttentionMode::Global, gh, gw, 0, cfg.heads);
    } else {
        const int win1 = fit_window(static_cast<int>(gh), static_cast<int>(gw), cfg.window);
        const auto b0 = detail::register_block(tp, ids, ten, "blk0");
        x = attention_block(tp, x, b0, AttentionMode::Windowed, gh, gw, win1, cfg.heads);

        // 2x patch merging into a coarser stage with doubled width.
        const int64_t gh2 = gh / 2, gw2 = gw / 2;
        x = tp.permute_elems(x, detail::merge_perm(static_cast<int>(gh), static_cast<int>(gw), cfg.embed_dim),
                             {gh2 * gw2, 4LL * cfg.embed_dim});
        x = tp.add_bias(tp.matmul(x, detail::register_param(tp, ids, "merge.w", ten.at("merge.w"))),
                        detail::register_param(tp, ids, "merge.b", ten.at("merge.b")));
        x = tp.add(x, detail::register_param(tp, ids, "pos2", ten.at("pos2")));

        const int win2 = fit_window(static_cast<int>(gh2), static_cast<int>(gw2), cfg.window);
        const auto b1 = detail::register_block(tp, ids, ten, "blk1");
        x = attention_block(tp, x, b1, AttentionMode::Windowed, gh2, gw2, win2, cfg.heads);

        x = tp.add_bias(tp.matmul(x, detail::register_param(tp, ids, "expand.w", ten.at("expand.w"))),
                        detail::register_param(tp, ids, "expand.b", ten.at("expand.b")));
        x = tp.permute_elems(x, detail::unmerge_perm(static_cast<int>(gh), static_cast<int>(gw), cfg.embed_dim),
                             {tokens_n, static_cast<int64_t>(cfg.embed_dim)});
    }

    x = tp.layer_norm_rows(x, detail::register_param(tp, ids, "head.ln.g", ten.at("head.ln.g")),
                           detail::register_param(tp, ids, "head.ln.b", ten.at("head.ln.b")));
    x = tp.add_bias(tp.matmul(x, detail::register_param(tp, ids, "head.w", ten.at("head.w"))),
                    detail::register_param(tp, ids, "head.b", ten.at("head.b")));

    // Back to image layout; the fluence head clamps at zero.
    x = tp.permute_elems(x, detail::unpatchify_perm(cfg.out_channels, cfg.img_h, cfg.img_w, cfg.patch),
                         {static_cast<int64_t>(cfg.out_channels) * cfg.img_h * cfg.img_w});
    if (cfg.relu_head)
        x = tp.relu(x);
    out.prediction = cfg.out_channels == 1
                         ? tp.reshape(x, {static_cast<int64_t>(cfg.img_h), static_cast<int64_t>(cfg.img_w)})
                         : tp.reshape(x, {static_cast<int64_t>(cfg.out_channels),
                                          static_cast<int64_t>(cfg.img_h) * cfg.img_w});
    return out;
}

} // namespace fluencebench
