#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fluencebench/errors.hpp"

namespace fluencebench {

// Dense row-major tensor. Training runs in float, gradient checks in
// double, so everything below is templated on the scalar type.
template <typename T>
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<T> v;

    Tensor() = default;
    Tensor(std::vector<int64_t> s, T fill = T(0)) : shape(std::move(s)) {
        v.assign(static_cast<size_t>(numel_of(shape)), fill);
    }

    static int64_t numel_of(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s)
            n *= d;
        return n;
    }
    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    int64_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
    int64_t cols() const { return shape.empty() ? 1 : shape.back(); }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.v.resize(v.size());
        for (size_t i = 0; i < v.size(); ++i)
            out.v[i] = static_cast<U>(v[i]);
        return out;
    }
};

// Append-only reverse-mode tape. Forward values are computed eagerly at
// node construction, so shape errors surface at graph build time; inputs
// always precede outputs, which keeps the graph acyclic by construction.
template <typename T>
class Tape {
public:
    enum class Op {
        Input, Add, Sub, Mul, Div, MatMul, Relu, SoftmaxRows, LayerNormRows,
        MeanAll, SumAll, Reshape, PermuteElems, ConcatCols, SliceCols,
        SliceRows, AddBias, ScalarMul, ScalarAdd, Sqrt, BcastAdd, BcastMul
    };

    struct Node {
        Op op;
        std::vector<int> inputs;
        std::vector<int64_t> shape;
        std::vector<T> val;
        double a = 0.0;                 // scalar operand
        std::vector<int64_t> perm;      // PermuteElems: out[i] = in[perm[i]]
        int64_t i0 = 0, i1 = 0;         // slice bounds
    };

    int size() const { return static_cast<int>(nodes_.size()); }
    const std::vector<T>& value(int id) const { return nodes_[check(id)].val; }
    const std::vector<int64_t>& shape(int id) const { return nodes_[check(id)].shape; }

    int input(Tensor<T> t) {
        Node n;
        n.op = Op::Input;
        n.shape = t.shape;
        n.val = std::move(t.v);
        return push(std::move(n));
    }

    int add(int a, int b) { return binary(Op::Add, a, b); }
    int sub(int a, int b) { return binary(Op::Sub, a, b); }
    int mul(int a, int b) { return binary(Op::Mul, a, b); }
    int div(int a, int b) { return binary(Op::Div, a, b); }

    int matmul(int a, int b) {
        const Node& na = nodes_[check(a)];
        const Node& nb = nodes_[check(b)];
        if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[1] != nb.shape[0])
            throw ConfigError("tape: matmul shape mismatch");
        Node n;
        n.op = Op::MatMul;
        n.inputs = {a, b};
        n.shape = {na.shape[0], nb.shape[1]};
        n.val.assign(static_cast<size_t>(na.shape[0] * nb.shape[1]), T(0));
        gemm_nn(na.val.data(), nb.val.data(), n.val.data(), na.shape[0], na.shape[1],
                nb.shape[1]);
        return push(std::move(n));
    }

    int relu(int a) {
        Node n = unary_like(Op::Relu, a);
        for (auto& x : n.val)
            x = x > T(0) ? x : T(0);
        return push(std::move(n));
    }

    int softmax_rows(int a) {
        Node n = unary_like(Op::SoftmaxRows, a);
        const int64_t c = nodes_[a].shape.back();
        const int64_t r = n.val.size() / c;
        for (int64_t i = 0; i < r; ++i) {
            T* row = n.val.data() + i * c;
            T mx = row[0];
            for (int64_t j = 1; j < c; ++j)
                mx = std::max(mx, row[j]);
            T sum = T(0);
            for (int64_t j = 0; j < c; ++j) {
                row[j] = std::exp(row[j] - mx);
                sum += row[j];
            }
            for (int64_t j = 0; j < c; ++j)
                row[j] /= sum;
        }
        return push(std::move(n));
    }

    int layer_norm_rows(int x, int gamma, int beta, double eps = 1e-5) {
        const Node& nx = nodes_[check(x)];
        const int64_t c = nx.shape.back();
        if (nodes_[check(gamma)].val.size() != static_cast<size_t>(c) ||
            nodes_[check(beta)].val.size() != static_cast<size_t>(c))
            throw ConfigError("tape: layer_norm scale/shift size mismatch");
        Node n;
        n.op = Op::LayerNormRows;
        n.inputs = {x, gamma, beta};
        n.shape = nx.shape;
        n.a = eps;
        n.val.resize(nx.val.size());
        const int64_t r = nx.val.size() / c;
        const T* g = nodes_[gamma].val.data();
        const T* b = nodes_[beta].val.data();
        for (int64_t i = 0; i < r; ++i) {
            const T* row = nx.val.data() + i * c;
            T* out = n.val.data() + i * c;
            T mu = T(0);
            for (int64_t j = 0; j < c; ++j)
                mu += row[j];
            mu /= static_cast<T>(c);
            T var = T(0);
            for (int64_t j = 0; j < c; ++j) {
                const T dlt = row[j] - mu;
                var += dlt * dlt;
            }
            var /= static_cast<T>(c);
            const T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
            for (int64_t j = 0; j < c; ++j)
                out[j] = g[j] * ((row[j] - mu) * inv) + b[j];
        }
        return push(std::move(n));
    }

    int mean_all(int a) {
        Node n;
        n.op = Op::MeanAll;
        n.inputs = {a};
        n.shape = {1};
        T acc = T(0);
        for (T x : nodes_[check(a)].val)
            acc += x;
        n.val = {acc / static_cast<T>(nodes_[a].val.size())};
        return push(std::move(n));
    }

    int sum_all(int a) {
        Node n;
        n.op = Op::SumAll;
        n.inputs = {a};
        n.shape = {1};
        T acc = T(0);
        for (T x : nodes_[check(a)].val)
            acc += x;
        n.val = {acc};
        return push(std::move(n));
    }

    int reshape(int a, std::vector<int64_t> new_shape) {
        if (Tensor<T>::numel_of(new_shape) != static_cast<int64_t>(nodes_[check(a)].val.size()))
            throw ConfigError("tape: reshape element count mismatch");
        Node n;
        n.op = Op::Reshape;
        n.inputs = {a};
        n.shape = std::move(new_shape);
        n.val = nodes_[a].val;
        return push(std::move(n));
    }

    // out[i] = in[perm[i]]; perm must be a bijection.
    int permute_elems(int a, std::vector<int64_t> perm, std::vector<int64_t> new_shape) {
        const Node& na = nodes_[check(a)];
        if (perm.size() != na.val.size() ||
            Tensor<T>::numel_of(new_shape) != static_cast<int64_t>(perm.size()))
            throw ConfigError("tape: permutation size mismatch");
        Node n;
        n.op = Op::PermuteElems;
        n.inputs = {a};
        n.shape = std::move(new_shape);
        n.val.resize(perm.size());
        for (size_t i = 0; i < perm.size(); ++i)
            n.val[i] = na.val[static_cast<size_t>(perm[i])];
        n.perm = std::move(perm);
        return push(std::move(n));
    }

    int transpose2d(int a) {
        const Node& na = nodes_[check(a)];
        if (na.shape.size() != 2)
            throw ConfigError("tape: transpose expects a 2D tensor");
        const int64_t r = na.shape[0], c = na.shape[1];
        std::vector<int64_t> perm(static_cast<size_t>(r * c));
        for (int64_t i = 0; i < c; ++i)
            for (int64_t j = 0; j < r; ++j)
                perm[static_cast<size_t>(i * r + j)] = j * c + i;
        return permute_elems(a, std::move(perm), {c, r});
    }

    // Tokens laid out row-major on a (gh x gw) grid are regrouped so each
    // (win x win) window is contiguous. Token features stay intact.
    int window_partition(int a, int64_t gh, int64_t gw, int64_t win) {
        const Node& na = nodes_[check(a)];
        if (na.shape.size() != 2 || na.shape[0] != gh * gw)
            throw ConfigError("tape: window_partition grid mismatch");
        if (gh % win != 0 || gw % win != 0)
            throw ConfigError("tape: grid dims must be divisible by window");
        return permute_elems(a, window_perm(gh, gw, win, na.shape[1], false),
                             {na.shape[0], na.shape[1]});
    }

    int window_merge(int a, int64_t gh, int64_t gw, int64_t win) {
        const Node& na = nodes_[check(a)];
        if (na.shape.size() != 2 || na.shape[0] != gh * gw)
            throw ConfigError("tape: window_merge grid mismatch");
        if (gh % win != 0 || gw % win != 0)
            throw ConfigError("tape: grid dims must be divisible by window");
        return permute_elems(a, window_perm(gh, gw, win, na.shape[1], true),
                             {na.shape[0], na.shape[1]});
    }

    int concat_cols(const std::vector<int>& ids) {
        if (ids.empty())
            throw ConfigError("tape: concat of nothing");
        const int64_t r = nodes_[check(ids[0])].shape[0];
        int64_t c_total = 0;
        for (int id : ids) {
            const Node& ni = nodes_[check(id)];
            if (ni.shape.size() != 2 || ni.shape[0] != r)
                throw ConfigError("tape: concat row mismatch");
            c_total += ni.shape[1];
        }
        Node n;
        n.op = Op::ConcatCols;
        n.inputs = ids;
        n.shape = {r, c_total};
        n.val.resize(static_cast<size_t>(r * c_total));
        int64_t off = 0;
        for (int id : ids) {
            const Node& ni = nodes_[id];
            const int64_t c = ni.shape[1];
            for (int64_t i = 0; i < r; ++i)
                std::copy_n(ni.val.data() + i * c, c, n.val.data() + i * c_total + off);
            off += c;
        }
        return push(std::move(n));
    }

    int slice_cols(int a, int64_t c0, int64_t c1) {
        const Node& na = nodes_[check(a)];
        if (na.shape.size() != 2 || c0 < 0 || c1 > na.shape[1] || c0 >= c1)
            throw ConfigError("tape: bad column slice");
        Node n;
        n.op = Op::SliceCols;
        n.inputs = {a};
        n.shape = {na.shape[0], c1 - c0};
        n.i0 = c0;
        n.i1 = c1;
        n.val.resize(static_cast<size_t>(na.shape[0] * (c1 - c0)));
        for (int64_t i = 0; i < na.shape[0]; ++i)
            std::copy_n(na.val.data() + i * na.shape[1] + c0, c1 - c0,
                        n.val.data() + i * (c1 - c0));
        return push(std::move(n));
    }

    int slice_rows(int a, int64_t r0, int64_t r1) {
        const Node& na = nodes_[check(a)];
        if (na.shape.size() != 2 || r0 < 0 || r1 > na.shape[0] || r0 >= r1)
            throw ConfigError("tape: bad row slice");
        Node n;
        n.op = Op::SliceRows;
        n.inputs = {a};
        n.shape = {r1 - r0, na.shape[1]};
        n.i0 = r0;
        n.i1 = r1;
        n.val.assign(na.val.begin() + r0 * na.shape[1], na.val.begin() + r1 * na.shape[1]);
        return push(std::move(n));
    }

    // a (r x c) + bias (c), broadcast over rows.
    int add_bias(int a, int bias) {
        const Node& na = nodes_[check(a)];
        const Node& nb = nodes_[check(bias)];
        const int64_t c = na.shape.back();
        if (nb.val.size() != static_cast<size_t>(c))
            throw ConfigError("tape: bias size mismatch");
        Node n;
        n.op = Op::AddBias;
        n.inputs = {a, bias};
        n.shape = na.shape;
        n.val = na.val;
        const int64_t r = n.val.size() / c;
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j)
                n.val[static_cast<size_t>(i * c + j)] += nb.val[static_cast<size_t>(j)];
        return push(std::move(n));
    }

    int scalar_mul(int a, double s) {
        Node n = unary_like(Op::ScalarMul, a);
        n.a = s;
        for (auto& x : n.val)
            x *= static_cast<T>(s);
        return push(std::move(n));
    }

    int scalar_add(int a, double s) {
        Node n = unary_like(Op::ScalarAdd, a);
        n.a = s;
        for (auto& x : n.val)
            x += static_cast<T>(s);
        return push(std::move(n));
    }

    int sqrt_elem(int a) {
        Node n = unary_like(Op::Sqrt, a);
        for (auto& x : n.val)
            x = std::sqrt(x);
        return push(std::move(n));
    }

    // a + s[0] and a * s[0] where s is a 1-element node.
    int bcast_add(int a, int s) { return bcast(Op::BcastAdd, a, s); }
    int bcast_mul(int a, int s) { return bcast(Op::BcastMul, a, s); }

    // Accumulates d(loss)/d(node) for every node; loss must be scalar.
    void backward(int loss_id) {
        const Node& loss = nodes_[check(loss_id)];
        if (loss.val.size() != 1)
            throw ConfigError("tape: backward needs a scalar loss");
        grads_.assign(nodes_.size(), {});
        grad_buf(loss_id)[0] = T(1);

        for (int id = loss_id; id >= 0; --id) {
            const Node& n = nodes_[id];
            if (grads_[id].empty())
                continue; // not on any path to the loss
            const std::vector<T>& g = grads_[id];
            switch (n.op) {
                case Op::Input:
                    break;
                case Op::Add: {
                    auto& ga = grad_buf(n.inputs[0]);
                    auto& gb = grad_buf(n.inputs[1]);
                    for (size_t i = 0; i < g.size(); ++i) {
                        ga[i] += g[i];
                        gb[i] += g[i];
                    }
                    break;
                }
                case Op::Sub: {
                    auto& ga = grad_buf(n.inputs[0]);
                    auto& gb = grad_buf(n.inputs[1]);
                    for (size_t i = 0; i < g.size(); ++i) {
                        ga[i] += g[i];
                        gb[i] -= g[i];
                    }
                    break;
                }
                case Op::Mul: {
                    auto& ga = grad_buf(n.inputs[0]);
                    auto& gb = grad_buf(n.inputs[1]);
                    const auto& va = nodes_[n.inputs[0]].val;
                    const auto& vb = nodes_[n.inputs[1]].val;
                    for (size_t i = 0; i < g.size(); ++i) {
                        ga[i] += g[i] * vb[i];
                        gb[i] += g[i] * va[i];
                    }
                    break;
                }
                case Op::Div: {
                    auto& ga = grad_buf(n.inputs[0]);
                    auto& gb = grad_buf(n.inputs[1]);
                    const auto& vb = nodes_[n.inputs[1]].val;
                    for (size_t i = 0; i < g.size(); ++i) {
                        ga[i] += g[i] / vb[i];
                        gb[i] -= g[i] * n.val[i] / vb[i];
                    }
                    break;
                }
                case Op::MatMul: {
                    const Node& na = nodes_[n.inputs[0]];
                    const Node& nb = nodes_[n.inputs[1]];
                    auto& ga = grad_buf(n.inputs[0]);
                    auto& gb = grad_buf(n.inputs[1]);
                    // dA += G * B^T ; dB += A^T * G
                    gemm_nt(g.data(), nb.val.data(), ga.data(), na.shape[0], nb.shape[1],
                            na.shape[1]);
                    gemm_tn(na.val.data(), g.data(), gb.data(), na.shape[1], na.shape[0],
                            nb.shape[1]);
                    break;
                }
                case Op::Relu: {
                    auto& ga = grad_buf(n.inputs[0]);
                    const auto& va = nodes_[n.inputs[0]].val;
                    for (size_t i = 0; i < g.size(); ++i)
                        if (va[i] > T(0))
                            ga[i] += g[i];
                    break;
                }
                case Op::SoftmaxRows: {
                    auto& ga = grad_buf(n.inputs[0]);
                    const int64_t c = n.shape.back();
                    const int64_t r = g.size() / c;
                    for (int64_t i = 0; i < r; ++i) {
                        const T* y = n.val.data() + i * c;
                        const T* gy = g.data() + i * c;
                        T dot = T(0);
                        for (int64_t j = 0; j < c; ++j)
                            dot += gy[j] * y[j];
                        T* out = ga.data() + i * c;
                        for (int64_t j = 0; j < c; ++j)
                            out[j] += y[j] * (gy[j] - dot);
                    }
                    break;
                }
                case Op::LayerNormRows: {
                    auto& gx = grad_buf(n.inputs[0]);
                    auto& gg = grad_buf(n.inputs[1]);
                    auto& gb = grad_buf(n.inputs[2]);
                    const auto& vx = nodes_[n.inputs[0]].val;
                    const auto& vg = nodes_[n.inputs[1]].val;
                    const int64_t c = n.shape.back();
                    const int64_t r = g.size() / c;
                    std::vector<T> xhat(static_cast<size_t>(c));
                    for (int64_t i = 0; i < r; ++i) {
                        const T* row = vx.data() + i * c;
                        const T* gy = g.data() + i * c;
                        T mu = T(0);
                        for (int64_t j = 0; j < c; ++j)
                            mu += row[j];
                        mu /= static_cast<T>(c);
                        T var = T(0);
                        for (int64_t j = 0; j < c; ++j) {
                            const T dlt = row[j] - mu;
                            var += dlt * dlt;
                        }
                        var /= static_cast<T>(c);
                        const T inv = T(1) / std::sqrt(var + static_cast<T>(n.a));
                        T mean_gxh = T(0), mean_gxh_xh = T(0);
                        for (int64_t j = 0; j < c; ++j) {
                            xhat[static_cast<size_t>(j)] = (row[j] - mu) * inv;
                            const T gxh = gy[j] * vg[j];
                            mean_gxh += gxh;
                            mean_gxh_xh += gxh * xhat[static_cast<size_t>(j)];
                        }
                        mean_gxh /= static_cast<T>(c);
                        mean_gxh_xh /= static_cast<T>(c);
                        for (int64_t j = 0; j < c; ++j) {
                            const T gxh = gy[j] * vg[j];
                            gx[static_cast<size_t>(i * c + j)] +=
                                inv * (gxh - mean_gxh - xhat[static_cast<size_t>(j)] * mean_gxh_xh);
                            gg[static_cast<size_t>(j)] += gy[j] * xhat[static_cast<size_t>(j)];
                            gb[static_cast<size_t>(j)] += gy[j];
                        }
                    }
                    break;
                }
                case Op::MeanAll: {
                    auto& ga = grad_buf(n.inputs[0]);
                    const T s = g[0] / static_cast<T>(ga.size());
                    for (auto& x : ga)
                        x += s;
                    break;
                }
                case Op::SumAll: {
                    auto& ga = grad_buf(n.inputs[0]);
                    for (auto& x : ga)
                        x += g[0];
                    break;
                }
                case Op::Reshape: {
                    auto& ga = grad_buf(n.inputs[0]);
                    for (size_t i = 0; i < g.size(); ++i)
                        ga[i] += g[i];
                    break;
                }
                case Op::PermuteElems: {
                    auto& ga = grad_buf(n.inputs[0]);
                    for (size_t i = 0; i < g.size(); ++i)
                        ga[static_cast<size_t>(n.perm[i])] += g[i];
                    break;
                }
                case Op::ConcatCols: {
                    const int64_t r = n.shape[0];
                    const int64_t c_total = n.shape[1];
                    int64_t off = 0;
                    for (int id_in : n.inputs) {
                        auto& gi = grad_buf(id_in);
                        const int64_t c = nodes_[id_in].shape[1];
                        for (int64_t i = 0; i < r; ++i)
                            for (int64_t j = 0; j < c; ++j)
                                gi[static_cast<size_t>(i * c + j)] +=
                                    g[static_cast<size_t>(i * c_total + off + j)];
                        off += c;
                    }
                    break;
                }
                case Op::SliceCols: {
                    auto& ga = grad_buf(n.inputs[0]);
                    const int64_t cs = nodes_[n.inputs[0]].shape[1];
                    const int64_t c = n.shape[1];
                    for (int64_t i = 0; i < n.shape[0]; ++i)
                        for (int64_t j = 0; j < c; ++j)
                            ga[static_cast<size_t>(i * cs + n.i0 + j)] +=
                                g[static_cast<size_t>(i * c + j)];
                    break;
                }
                case Op::SliceRows: {
                    auto& ga = grad_buf(n.inputs[0]);
                    const int64_t c = n.shape[1];
                    for (size_t i = 0; i < g.size(); ++i)
                        ga[static_cast<size_t>(n.i0 * c) + i] += g[i];
                    break;
                }
                case Op::AddBias: {
                    auto& ga = grad_buf(n.inputs[0]);
                    auto& gb = grad_buf(n.inputs[1]);
                    const int64_t c = n.shape.back();
                    const int64_t r = g.size() / c;
                    for (int64_t i = 0; i < r; ++i)
                        for (int64_t j = 0; j < c; ++j) {
                            ga[static_cast<size_t>(i * c + j)] += g[static_cast<size_t>(i * c + j)];
                            gb[static_cast<size_t>(j)] += g[static_cast<size_t>(i * c + j)];
                        }
                    break;
                }
                case Op::ScalarMul: {
                    auto& ga = grad_buf(n.inputs[0]);
                    for (size_t i = 0; i < g.size(); ++i)
                        ga[i] += g[i] * static_cast<T>(n.a);
                    break;
                }
                case Op::ScalarAdd: {
                    auto& ga = grad_buf(n.inputs[0]);
                    for (size_t i = 0; i < g.size(); ++i)
                        ga[i] += g[i];
                    break;
                }
                case Op::Sqrt: {
                    // Subgradient 0 at the origin; the infinite one-sided
                    // derivative would otherwise turn 0 * inf into NaN on
                    // paths whose true composite gradient is zero.
                    auto& ga = grad_buf(n.inputs[0]);
                    for (size_t i = 0; i < g.size(); ++i)
                        if (n.val[i] > T(0))
                            ga[i] += g[i] * T(0.5) / n.val[i];
                    break;
                }
                case Op::BcastAdd: {
                    auto& ga = grad_buf(n.inputs[0]);
                    auto& gs = grad_buf(n.inputs[1]);
                    for (size_t i = 0; i < g.size(); ++i) {
                        ga[i] += g[i];
                        gs[0] += g[i];
                    }
                    break;
                }
                case Op::BcastMul: {
                    auto& ga = grad_buf(n.inputs[0]);
                    auto& gs = grad_buf(n.inputs[1]);
                    const auto& va = nodes_[n.inputs[0]].val;
                    const T s = nodes_[n.inputs[1]].val[0];
                    for (size_t i = 0; i < g.size(); ++i) {
                        ga[i] += g[i] * s;
                        gs[0] += g[i] * va[i];
                    }
                    break;
                }
            }
        }
    }

    // Valid after backward(); empty vector means the node is off-path.
    const std::vector<T>& grad(int id) const {
        static const std::vector<T> kEmpty;
        const int i = check(id);
        return grads_.size() > static_cast<size_t>(i) && !grads_[i].empty() ? grads_[i] : kEmpty;
    }

private:
    std::vector<Node> nodes_;
    std::vector<std::vector<T>> grads_;

    int check(int id) const {
        if (id < 0 || id >= static_cast<int>(nodes_.size()))
            throw ConfigError("tape: bad node id");
        return id;
    }

    int push(Node n) {
        for (int in : n.inputs)
            check(in);
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    Node unary_like(Op op, int a) {
        Node n;
        n.op = op;
        n.inputs = {check(a)};
        n.shape = nodes_[a].shape;
        n.val = nodes_[a].val;
        return n;
    }

    int binary(Op op, int a, int b) {
        const Node& na = nodes_[check(a)];
        const Node& nb = nodes_[check(b)];
        if (na.shape != nb.shape)
            throw ConfigError("tape: elementwise shape mismatch");
        Node n;
        n.op = op;
        n.inputs = {a, b};
        n.shape = na.shape;
        n.val.resize(na.val.size());
        switch (op) {
            case Op::Add:
                for (size_t i = 0; i < n.val.size(); ++i)
                    n.val[i] = na.val[i] + nb.val[i];
                break;
            case Op::Sub:
                for (size_t i = 0; i < n.val.size(); ++i)
                    n.val[i] = na.val[i] - nb.val[i];
                break;
            case Op::Mul:
                for (size_t i = 0; i < n.val.size(); ++i)
                    n.val[i] = na.val[i] * nb.val[i];
                break;
            case Op::Div:
                for (size_t i = 0; i < n.val.size(); ++i)
                    n.val[i] = na.val[i] / nb.val[i];
                break;
            default:
                throw ConfigError("tape: bad binary op");
        }
        return push(std::move(n));
    }

    int bcast(Op op, int a, int s) {
        const Node& ns = nodes_[check(s)];
        if (ns.val.size() != 1)
            throw ConfigError("tape: broadcast operand must be scalar");
        Node n = unary_like(op, a);
        n.inputs = {a, s};
        const T sv = ns.val[0];
        if (op == Op::BcastAdd)
            for (auto& x : n.val)
                x += sv;
        else
            for (auto& x : n.val)
                x *= sv;
        return push(std::move(n));
    }

    std::vector<T>& grad_buf(int id) {
        if (grads_[id].empty())
            grads_[id].assign(nodes_[id].val.size(), T(0));
        return grads_[id];
    }

    static std::vector<int64_t> window_perm(int64_t gh, int64_t gw, int64_t win, int64_t dim,
                                            bool inverse) {
        const int64_t wpr = gw / win; // windows per row
        std::vector<int64_t> fwd(static_cast<size_t>(gh * gw));
        int64_t out_row = 0;
        for (int64_t wr = 0; wr < gh / win; ++wr)
            for (int64_t wc = 0; wc < wpr; ++wc)
                for (int64_t r = 0; r < win; ++r)
                    for (int64_t c = 0; c < win; ++c)
                        fwd[static_cast<size_t>(out_row++)] = (wr * win + r) * gw + wc * win + c;
        std::vector<int64_t> rowmap(fwd.size());
        if (inverse)
            for (size_t i = 0; i < fwd.size(); ++i)
                rowmap[static_cast<size_t>(fwd[i])] = static_cast<int64_t>(i);
        else
            rowmap = fwd;
        std::vector<int64_t> perm(static_cast<size_t>(gh * gw * dim));
        for (size_t r = 0; r < rowmap.size(); ++r)
            for (int64_t d = 0; d < dim; ++d)
                perm[r * static_cast<size_t>(dim) + static_cast<size_t>(d)] =
                    rowmap[r] * dim + d;
        return perm;
    }

    static void gemm_nn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
        for (int64_t i = 0; i < m; ++i) {
            T* ci = c + i * n;
            for (int64_t p = 0; p < k; ++p) {
                const T aip = a[i * k + p];
                const T* bp = b + p * n;
                for (int64_t j = 0; j < n; ++j)
                    ci[j] += aip * bp[j];
            }
        }
    }

    // c(m x k) += g(m x n) * b(k x n)^T
    static void gemm_nt(const T* g, const T* b, T* c, int64_t m, int64_t n, int64_t k) {
        for (int64_t i = 0; i < m; ++i) {
            const T* gi = g + i * n;
            T* ci = c + i * k;
            for (int64_t p = 0; p < k; ++p) {
                const T* bp = b + p * n;
                T acc = T(0);
                for (int64_t j = 0; j < n; ++j)
                    acc += gi[j] * bp[j];
                ci[p] += acc;
            }
        }
    }

    // c(k x n) += a(m x k)^T * g(m x n)
    static void gemm_tn(const T* a, const T* g, T* c, int64_t k, int64_t m, int64_t n) {
        for (int64_t i = 0; i < m; ++i) {
            const T* gi = g + i * n;
            for (int64_t p = 0; p < k; ++p) {
                const T aip = a[i * k + p];
                T* cp = c + p * n;
                for (int64_t j = 0; j < n; ++j)
                    cp[j] += aip * gi[j];
            }
        }
    }
};

} // namespace fluencebench
