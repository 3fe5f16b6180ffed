#pragma once
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fluencebench/errors.hpp"
#include "fluencebench/hashrand.hpp"
#include "fluencebench/tape.hpp"

namespace fluencebench {

// Relative contribution of the four regression terms.
struct FarWeights {
    double alpha = 1.0;   // squared error
    double beta = 0.5;    // gradient consistency
    double gamma = 0.1;   // correlation
    double delta = 0.01;  // total energy

    void validate() const {
        if (alpha < 0 || beta < 0 || gamma < 0 || delta < 0)
            throw ConfigError("FarWeights: weights must be non-negative");
        if (alpha + beta + gamma + delta <= 0)
            throw ConfigError("FarWeights: at least one weight must be positive");
    }
};

constexpr double kFarEps = 1e-8;

// Builds the fluence-aware regression loss over a 2D prediction node.
//   L = alpha*mean((P-G)^2)
//     + beta*avg_axis mean((dP-dG)^2)          (forward differences)
//     + gamma*(1 - (cov+eps)/(sqrt(varP*varG)+eps))
//     + delta*((sum P - sum G)/(sum G + eps))^2
// The correlation guard treats a constant/constant pair as perfectly
// correlated and keeps loss exactly zero when pred == target.
template <typename T>
int far_loss_node(Tape<T>& tp, int pred, int target, const FarWeights& w) {
    w.validate();
    if (tp.shape(pred) != tp.shape(target) || tp.shape(pred).size() != 2)
        throw ConfigError("far_loss: prediction/target must be matching 2D maps");
    const int64_t h = tp.shape(pred)[0];
    const int64_t wd = tp.shape(pred)[1];
    if (h * wd < 2)
        throw ConfigError("far_loss: need at least 2 pixels");

    // mse
    const int diff = tp.sub(pred, target);
    const int l_mse = tp.mean_all(tp.mul(diff, diff));

    // gradient consistency: mean over the axes that exist
    std::vector<int> axis_terms;
    if (h >= 2) {
        const int dp = tp.sub(tp.slice_rows(pred, 1, h), tp.slice_rows(pred, 0, h - 1));
        const int dg = tp.sub(tp.slice_rows(target, 1, h), tp.slice_rows(target, 0, h - 1));
        const int dd = tp.sub(dp, dg);
        axis_terms.push_back(tp.mean_all(tp.mul(dd, dd)));
    }
    if (wd >= 2) {
        const int dp = tp.sub(tp.slice_cols(pred, 1, wd), tp.slice_cols(pred, 0, wd - 1));
        const int dg = tp.sub(tp.slice_cols(target, 1, wd), tp.slice_cols(target, 0, wd - 1));
        const int dd = tp.sub(dp, dg);
        axis_terms.push_back(tp.mean_all(tp.mul(dd, dd)));
    }
    int l_grad = axis_terms[0];
    for (size_t i = 1; i < axis_terms.size(); ++i)
        l_grad = tp.add(l_grad, axis_terms[i]);
    l_grad = tp.scalar_mul(l_grad, 1.0 / static_cast<double>(axis_terms.size()));

    // correlation
    const int mp = tp.mean_all(pred);
    const int mg = tp.mean_all(target);
    const int cp = tp.bcast_add(pred, tp.scalar_mul(mp, -1.0));
    const int cg = tp.bcast_add(target, tp.scalar_mul(mg, -1.0));
    const int cov = tp.mean_all(tp.mul(cp, cg));
    const int vp = tp.mean_all(tp.mul(cp, cp));
    const int vg = tp.mean_all(tp.mul(cg, cg));
    const int denom = tp.scalar_add(tp.sqrt_elem(tp.mul(vp, vg)), kFarEps);
    const int corr = tp.div(tp.scalar_add(cov, kFarEps), denom);
    const int l_corr = tp.scalar_add(tp.scalar_mul(corr, -1.0), 1.0);

    // total energy
    const int sp = tp.sum_all(pred);
    const int sg = tp.sum_all(target);
    const int ratio = tp.div(tp.sub(sp, sg), tp.scalar_add(sg, kFarEps));
    const int l_energy = tp.mul(ratio, ratio);

    int total = tp.scalar_mul(l_mse, w.alpha);
    total = tp.add(total, tp.scalar_mul(l_grad, w.beta));
    total = tp.add(total, tp.scalar_mul(l_corr, w.gamma));
    total = tp.add(total, tp.scalar_mul(l_energy, w.delta));
    return total;
}

enum class AttentionMode { Global, Windowed };

inline std::string attention_mode_name(AttentionMode m) {
    return m == AttentionMode::Global ? "global" : "windowed";
}
inline AttentionMode attention_mode_from_name(const std::string& s) {
    if (s == "global") return AttentionMode::Global;
    if (s == "windowed") return AttentionMode::Windowed;
    throw ConfigError("unknown attention mode: " + s);
}

// Node ids of one transformer block's parameters on a tape.
struct AttentionBlockNodes {
    int ln1_g, ln1_b;
    int wq, bq, wk, bk, wv, bv, wo, bo;
    int ln2_g, ln2_b;
    int mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

// Pre-norm multi-head self-attention + MLP with residuals over tokens
// laid out row-major on a (grid_h x grid_w) grid. Windowed mode restricts
// attention to non-overlapping (window x window) tiles via an additive
// mask; exp underflow makes cross-window weights exactly zero.
template <typename T>
int attention_block(Tape<T>& tp, int tokens, const AttentionBlockNodes& p, AttentionMode mode,
                    int64_t grid_h, int64_t grid_w, int64_t window, int heads) {
    const auto& shape = tp.shape(tokens);
    if (shape.size() != 2 || shape[0] != grid_h * grid_w)
        throw ConfigError("attention_block: token grid mismatch");
    const int64_t n = shape[0];
    const int64_t dim = shape[1];
    if (dim % heads != 0)
        throw ConfigError("attention_block: dim must be divisible by heads");
    const int64_t dh = dim / heads;

    bool masked = false;
    if (mode == AttentionMode::Windowed) {
        if (window < 1 || grid_h % window != 0 || grid_w % window != 0)
            throw ConfigError("attention_block: grid dims must be divisible by window");
        masked = !(window == grid_h && window == grid_w);
    }
    int mask = -1;
    if (masked) {
        Tensor<T> m({n, n}, T(0));
        const int64_t wpr = grid_w / window;
        for (int64_t i = 0; i < n; ++i) {
            const int64_t wi = (i / grid_w / window) * wpr + (i % grid_w) / window;
            for (int64_t j = 0; j < n; ++j) {
                const int64_t wj = (j / grid_w / window) * wpr + (j % grid_w) / window;
                if (wi != wj)
                    m.v[static_cast<size_t>(i * n + j)] = T(-1e9);
            }
        }
        mask = tp.input(std::move(m));
    }

    const int x1 = tp.layer_norm_rows(tokens, p.ln1_g, p.ln1_b);
    const int q = tp.add_bias(tp.matmul(x1, p.wq), p.bq);
    const int k = tp.add_bias(tp.matmul(x1, p.wk), p.bk);
    const int v = tp.add_bias(tp.matmul(x1, p.wv), p.bv);

    std::vector<int> head_outputs;
    for (int hh = 0; hh < heads; ++hh) {
        const int64_t c0 = hh * dh, c1 = (hh + 1) * dh;
        const int qh = tp.slice_cols(q, c0, c1);
        const int kh = tp.slice_cols(k, c0, c1);
        const int vh = tp.slice_cols(v, c0, c1);
        int scores = tp.scalar_mul(tp.matmul(qh, tp.transpose2d(kh)),
                                   1.0 / std::sqrt(static_cast<double>(dh)));
        if (mask >= 0)
            scores = tp.add(scores, mask);
        const int attn = tp.softmax_rows(scores);
        head_outputs.push_back(tp.matmul(attn, vh));
    }
    const int merged = heads == 1 ? head_outputs[0] : tp.concat_cols(head_outputs);
    const int proj = tp.add_bias(tp.matmul(merged, p.wo), p.bo);
    int x = tp.add(tokens, proj);

    const int x2 = tp.layer_norm_rows(x, p.ln2_g, p.ln2_b);
    const int h1 = tp.relu(tp.add_bias(tp.matmul(x2, p.mlp_w1), p.mlp_b1));
    const int h2 = tp.add_bias(tp.matmul(h1, p.mlp_w2), p.mlp_b2);
    return tp.add(x, h2);
}

// Named parameter store. std::map keeps iteration order deterministic.
using ParamMap = std::map<std::string, Tensor<float>>;

struct AdamState {
    std::map<std::string, Tensor<float>> m;
    std::map<std::string, Tensor<float>> v;
    int64_t step = 0;
};

// Standard bias-corrected Adam update. Throws NumericError on non-finite
// gradients, naming the offending tensor.
void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct GradCheckResult {
    double max_rel_err = 0.0;
    int n_checked = 0;
};

// Central finite differences against analytic gradients on a random
// subsample of coordinates (at least min_coords when available). The loss
// closure must re-evaluate the forward pass from scratch.
GradCheckResult grad_check(const std::function<double(const std::map<std::string, Tensor<double>>&)>& loss,
                           const std::map<std::string, Tensor<double>>& params,
                           const std::map<std::string, Tensor<double>>& analytic, double eps,
                           uint64_t seed = 7, int min_coords = 200);

} // namespace fluencebench
