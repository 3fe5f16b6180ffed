// Acceptance suite: one pass/fail line per criterion.
//
// 1. metric identities          5. noise trend (trained models)
// 2. gradient oracle            6. geometric trend
// 3. signed-rank oracle         7. data-efficiency trend
// 4. perturbation contracts     8. windowed-vs-global bias contrast
//                               9. end-to-end determinism
//
// Criteria 5-8 share one full training + scenario run (both attention
// modes, 200 phantom cases, the default severity grids). Runtime on a
// 2-core laptop is roughly 20 minutes. FLUENCEBENCH_ACCEPT_SCALE=small
// shrinks everything for a fast development pass.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fluencebench/harness.hpp"
#include "fluencebench/hashrand.hpp"
#include "fluencebench/metrics.hpp"
#include "fluencebench/model.hpp"
#include "fluencebench/nn.hpp"
#include "fluencebench/perturb.hpp"
#include "fluencebench/phantom.hpp"
#include "fluencebench/tape.hpp"

using namespace fluencebench;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int id, bool pass, const std::string& name, const std::string& detail = "") {
    std::printf("criterion %d: %s - %s%s%s\n", id, pass ? "PASS" : "FAIL", name.c_str(),
                detail.empty() ? "" : " ", detail.c_str());
    std::fflush(stdout);
    if (!pass)
        ++g_failures;
}

void aux(bool pass, const std::string& name, const std::string& detail = "") {
    std::printf("  contract: %s - %s%s%s\n", pass ? "PASS" : "FAIL", name.c_str(),
                detail.empty() ? "" : " ", detail.c_str());
    std::fflush(stdout);
    if (!pass)
        ++g_failures;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

std::string sev_label(const char* prefix, double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%s%g", prefix, v);
    return buf;
}

// ---------------------------------------------------------------- 1

void criterion_metric_identities() {
    bool pass = true;
    std::string detail;

    Map2D a = make_map(32, 32);
    for (size_t i = 0; i < a.values.size(); ++i)
        a.values[i] = static_cast<float>(uniform01(3, i));
    if (std::abs(ssim(a, a, 1.0) - 1.0) >= 1e-9) {
        pass = false;
        detail += "ssim(a,a) off; ";
    }

    const FluenceSet gt = make_fluence(3, 6, 6, 10.0f);
    const FluenceSet pred = make_fluence(3, 6, 6, 11.0f);
    if (energy_error_pct(pred, gt) != 10.0) {
        pass = false;
        detail += "energy 1.1x != 10; ";
    }

    if (quantile({1, 2, 3, 4}, 0.75) != 3.25) {
        pass = false;
        detail += "quantile != 3.25; ";
    }

    Field dose = make_field(1, 1, 4, 4, {1, 1, 1});
    Field mask = make_field(1, 1, 4, 4, {1, 1, 1});
    for (int w = 0; w < 4; ++w) {
        dose.at(0, 0, 1, w) = 2.0f;
        mask.at(0, 0, 1, w) = 1.0f;
    }
    const DvhCurve curve = dvh(dose, mask, 0, {0.0, 1.0, 2.0, 3.0}, "roi");
    if (curve.volume_fraction != std::vector<double>{1.0, 1.0, 1.0, 0.0}) {
        pass = false;
        detail += "dvh step off; ";
    }
    report(1, pass, "metric identities", detail);
}

// ---------------------------------------------------------------- 2

using DTensor = Tensor<double>;
using DParams = std::map<std::string, DTensor>;
using Builder = std::function<int(Tape<double>&, const std::map<std::string, int>&)>;

DTensor rnd_tensor(std::vector<int64_t> shape, uint64_t seed, double lo = -1.0, double hi = 1.0) {
    DTensor t(std::move(shape));
    for (size_t i = 0; i < t.v.size(); ++i)
        t.v[i] = lo + (hi - lo) * uniform01(seed, i);
    return t;
}

double graph_fd_err(const Builder& build, const DParams& params) {
    const auto eval = [&](const DParams& p) {
        Tape<double> tp;
        std::map<std::string, int> ids;
        for (const auto& [name, t] : p)
            ids[name] = tp.input(t);
        return tp.value(build(tp, ids))[0];
    };
    Tape<double> tp;
    std::map<std::string, int> ids;
    for (const auto& [name, t] : params)
        ids[name] = tp.input(t);
    tp.backward(build(tp, ids));
    DParams analytic;
    for (const auto& [name, id] : ids) {
        DTensor g;
        g.shape = params.at(name).shape;
        g.v = tp.grad(id);
        if (g.v.empty())
            g.v.assign(params.at(name).v.size(), 0.0);
        analytic[name] = std::move(g);
    }
    return grad_check(eval, params, analytic, 1e-5, 11, 300).max_rel_err;
}

void criterion_gradient_oracle() {
    bool pass = true;
    std::string detail;
    double worst = 0.0;
    const auto check = [&](const char* what, const Builder& b, const DParams& p) {
        const double err = graph_fd_err(b, p);
        worst = std::max(worst, err);
        if (!(err < 1e-4)) {
            pass = false;
            detail += std::string(what) + " err " + fmt(err) + "; ";
        }
    };

    const DTensor a = rnd_tensor({3, 4}, 21, 0.3, 1.3);
    const DTensor b = rnd_tensor({3, 4}, 22, 0.4, 1.4);
    check("elementwise", [](Tape<double>& tp, const auto& ids) {
        const int x = tp.add(ids.at("a"), ids.at("b"));
        const int y = tp.sub(tp.mul(x, ids.at("a")), tp.div(ids.at("b"), x));
        return tp.mean_all(tp.mul(y, y));
    }, {{"a", a}, {"b", b}});

    check("matmul+relu+softmax", [](Tape<double>& tp, const auto& ids) {
        const int mm = tp.matmul(ids.at("m"), ids.at("n"));
        const int soft = tp.softmax_rows(tp.relu(tp.scalar_add(mm, 0.3)));
        return tp.sum_all(tp.mul(soft, mm));
    }, {{"m", rnd_tensor({2, 3}, 23)}, {"n", rnd_tensor({3, 5}, 24)}});

    check("layer_norm+bias", [](Tape<double>& tp, const auto& ids) {
        const int ln = tp.layer_norm_rows(ids.at("x"), ids.at("g"), ids.at("b"));
        return tp.mean_all(tp.mul(tp.add_bias(ln, ids.at("b")), ln));
    }, {{"x", rnd_tensor({4, 6}, 25)},
        {"g", rnd_tensor({6}, 26, 0.7, 1.3)},
        {"b", rnd_tensor({6}, 27, -0.2, 0.2)}});

    check("permute+window+concat+slice", [](Tape<double>& tp, const auto& ids) {
        const int part = tp.window_partition(ids.at("x"), 4, 4, 2);
        const int merged = tp.window_merge(tp.relu(part), 4, 4, 2);
        const int t2 = tp.transpose2d(merged);
        const int cat = tp.concat_cols({tp.transpose2d(t2), ids.at("x")});
        const int sl = tp.slice_cols(tp.slice_rows(cat, 2, 14), 1, 5);
        return tp.mean_all(tp.mul(sl, sl));
    }, {{"x", rnd_tensor({16, 3}, 28)}});

    check("scalar+sqrt+broadcast+reshape", [](Tape<double>& tp, const auto& ids) {
        const int s = tp.mean_all(ids.at("x"));
        int x = tp.bcast_mul(tp.bcast_add(ids.at("x"), s), s);
        x = tp.sqrt_elem(tp.scalar_add(tp.scalar_mul(x, 0.5), 2.0));
        x = tp.reshape(x, {4, 3});
        return tp.sum_all(x);
    }, {{"x", rnd_tensor({3, 4}, 29, 0.2, 1.0)}});

    // Full FAR loss through one attention block, windowed and global.
    for (const auto mode : {AttentionMode::Windowed, AttentionMode::Global}) {
        DParams params;
        const int64_t dim = 8;
        params["ln1_g"] = rnd_tensor({dim}, 31, 0.8, 1.2);
        params["ln1_b"] = rnd_tensor({dim}, 32, -0.1, 0.1);
        for (const char* w : {"wq", "wk", "wv", "wo"})
            params[w] = rnd_tensor({dim, dim}, fnv1a64(w), -0.4, 0.4);
        for (const char* bb : {"bq", "bk", "bv", "bo"})
            params[bb] = rnd_tensor({dim}, fnv1a64(bb), -0.1, 0.1);
        params["ln2_g"] = rnd_tensor({dim}, 33, 0.8, 1.2);
        params["ln2_b"] = rnd_tensor({dim}, 34, -0.1, 0.1);
        params["mw1"] = rnd_tensor({dim, 2 * dim}, 35, -0.4, 0.4);
        params["mb1"] = rnd_tensor({2 * dim}, 36, -0.1, 0.1);
        params["mw2"] = rnd_tensor({2 * dim, dim}, 37, -0.4, 0.4);
        params["mb2"] = rnd_tensor({dim}, 38, -0.1, 0.1);
        const DTensor tokens = rnd_tensor({16, dim}, 39, -0.5, 0.5);
        const DTensor target = rnd_tensor({16, dim}, 40, 0.0, 1.0);
        check(mode == AttentionMode::Windowed ? "far through windowed block"
                                              : "far through global block",
              [&, mode](Tape<double>& tp, const auto& ids) {
                  AttentionBlockNodes blk;
                  blk.ln1_g = ids.at("ln1_g");
                  blk.ln1_b = ids.at("ln1_b");
                  blk.wq = ids.at("wq");
                  blk.bq = ids.at("bq");
                  blk.wk = ids.at("wk");
                  blk.bk = ids.at("bk");
                  blk.wv = ids.at("wv");
                  blk.bv = ids.at("bv");
                  blk.wo = ids.at("wo");
                  blk.bo = ids.at("bo");
                  blk.ln2_g = ids.at("ln2_g");
                  blk.ln2_b = ids.at("ln2_b");
                  blk.mlp_w1 = ids.at("mw1");
                  blk.mlp_b1 = ids.at("mb1");
                  blk.mlp_w2 = ids.at("mw2");
                  blk.mlp_b2 = ids.at("mb2");
                  const int out = attention_block(tp, tp.input(tokens), blk, mode, 4, 4,
                                                  mode == AttentionMode::Windowed ? 2 : 0, 2);
                  return far_loss_node(tp, out, tp.input(target), FarWeights{1.0, 0.5, 0.1, 0.01});
              },
              params);
    }
    report(2, pass, "gradient oracle", detail.empty() ? "max rel err " + fmt(worst) : detail);
}

// ---------------------------------------------------------------- 3

// Independent enumeration oracle, written against the textbook definition.
double signed_rank_enum_p(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> d;
    for (size_t i = 0; i < x.size(); ++i)
        if (x[i] != y[i])
            d.push_back(x[i] - y[i]);
    if (d.empty())
        return 1.0;
    const int m = static_cast<int>(d.size());
    std::vector<double> rank(d.size(), 0.0);
    for (size_t i = 0; i < d.size(); ++i) {
        double below = 0.0, equal = 0.0;
        for (size_t j = 0; j < d.size(); ++j) {
            if (std::abs(d[j]) < std::abs(d[i]))
                below += 1.0;
            if (std::abs(d[j]) == std::abs(d[i]))
                equal += 1.0;
        }
        rank[i] = below + (equal + 1.0) / 2.0;
    }
    double total = 0.0, w_plus = 0.0;
    for (int i = 0; i < m; ++i) {
        total += rank[i];
        if (d[i] > 0)
            w_plus += rank[i];
    }
    const double w_obs = std::min(w_plus, total - w_plus);
    uint64_t hits = 0;
    for (uint64_t s = 0; s < (1ULL << m); ++s) {
        double wp = 0.0;
        for (int i = 0; i < m; ++i)
            if (s & (1ULL << i))
                wp += rank[i];
        if (std::min(wp, total - wp) <= w_obs + 1e-12)
            ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(1ULL << m);
}

void criterion_wilcoxon_oracle() {
    bool pass = true;
    std::string detail;

    const WilcoxonResult five = wilcoxon_signed_rank({1, 2, 3, 4, 5}, {0, 0, 0, 0, 0});
    if (five.p_two_sided != 0.0625) {
        pass = false;
        detail += "n=5 case p=" + fmt(five.p_two_sided) + "; ";
    }

    int mismatches = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const uint64_t seed = 5000 + static_cast<uint64_t>(trial);
        const int n = 2 + static_cast<int>(hash64(seed, 0) % 11); // up to 12
        std::vector<double> x, y;
        for (int i = 0; i < n; ++i) {
            x.push_back(std::round(uniform_pm1(seed, 2 * i) * 6.0) / 3.0);
            y.push_back(std::round(uniform_pm1(seed, 2 * i + 1) * 6.0) / 3.0);
        }
        const double got = wilcoxon_signed_rank(x, y).p_two_sided;
        const double want = signed_rank_enum_p(x, y);
        if (std::abs(got - want) > 1e-12)
            ++mismatches;
    }
    if (mismatches > 0) {
        pass = false;
        detail += std::to_string(mismatches) + "/50 exact-p mismatches; ";
    }
    report(3, pass, "signed-rank oracle", detail.empty() ? "50/50 exact matches" : detail);
}

// ---------------------------------------------------------------- 4

void criterion_perturbation_contracts() {
    bool pass = true;
    std::string detail;

    Field f = make_field(1, 2, 24, 24, {1.0, 1.0, 1.0});
    for (size_t i = 0; i < f.values.size(); ++i)
        f.values[i] = static_cast<float>(uniform01(7, i));

    if (gaussian_noise(f, 0.0, 9).values != f.values) {
        pass = false;
        detail += "sigma=0 not identity; ";
    }
    if (bias_field(f, 0.0, 0.0, 9).values != f.values) {
        pass = false;
        detail += "zero bias not identity; ";
    }
    const Field ident = rigid_transform(f, 0.0, {0.0, 0.0}, 0.0f);
    for (size_t i = 0; i < f.values.size(); ++i)
        if (std::abs(ident.values[i] - f.values[i]) > 1e-6f) {
            pass = false;
            detail += "zero transform not identity; ";
            break;
        }

    if (gaussian_noise(f, 0.1, 42).values != gaussian_noise(f, 0.1, 42).values ||
        bias_field(f, 0.2, 0.01, 42).values != bias_field(f, 0.2, 0.01, 42).values) {
        pass = false;
        detail += "seeded outputs not bitwise stable; ";
    }

    // +/- 5 degree round trip on a smooth blob.
    Field blob = make_field(1, 1, 64, 64, {1.0, 1.0, 1.0});
    for (int h = 0; h < 64; ++h)
        for (int w = 0; w < 64; ++w) {
            const double dy = h - 31.5, dx = w - 31.5;
            blob.at(0, 0, h, w) = static_cast<float>(std::exp(-(dx * dx + dy * dy) / 200.0));
        }
    const Field round =
        rigid_transform(rigid_transform(blob, 5.0, {0, 0}, 0.0f), -5.0, {0, 0}, 0.0f);
    double mae = 0.0;
    int64_t count = 0;
    for (int h = 2; h < 62; ++h)
        for (int w = 2; w < 62; ++w) {
            mae += std::abs(round.at(0, 0, h, w) - blob.at(0, 0, h, w));
            ++count;
        }
    mae /= static_cast<double>(count);
    if (!(mae < 0.02)) {
        pass = false;
        detail += "round-trip MAE " + fmt(mae) + "; ";
    } else {
        detail += "round-trip MAE " + fmt(mae);
    }
    report(4, pass, "perturbation contracts", detail);
}

// ---------------------------------------------------------- 5 through 8

const ReportRow& find_row(const RobustnessReport& rep, const std::string& model,
                          const std::string& scenario, const std::string& severity) {
    for (const auto& r : rep.rows)
        if (r.model == model && r.scenario == scenario && r.severity == severity)
            return r;
    throw std::runtime_error("missing report row " + model + "/" + scenario + "/" + severity);
}

// Monotone sequence check, tolerating at most one adjacent violation of at
// most `slack` in the wrong direction.
bool monotone_with_slack(const std::vector<double>& seq, bool decreasing, double slack,
                         std::string* detail) {
    int violations = 0;
    double worst = 0.0;
    for (size_t i = 1; i < seq.size(); ++i) {
        const double step = decreasing ? seq[i] - seq[i - 1] : seq[i - 1] - seq[i];
        if (step >= 0.0) {
            ++violations;
            worst = std::max(worst, step);
        }
    }
    if (detail && violations > 0)
        *detail += " (" + std::to_string(violations) + " violation(s), worst " + fmt(worst) + ")";
    return violations == 0 || (violations == 1 && worst <= slack);
}

void criteria_trained_trends(const ExperimentConfig& cfg) {
    const Dataset ds = load_or_generate_dataset(cfg);
    std::map<std::string, TwoStageModel> models;
    for (const auto& name : cfg.models) {
        const TrainResult dose = train_stage(cfg, ds, ds.split.train, name, Stage::Dose, nullptr);
        const TrainResult flu =
            train_stage(cfg, ds, ds.split.train, name, Stage::Fluence, &dose.params);
        aux(dose.epoch_losses.back() <= 0.5 * dose.epoch_losses.front(),
            name + "/dose loss halves from epoch 1",
            fmt(dose.epoch_losses.front()) + " -> " + fmt(dose.epoch_losses.back()));
        aux(flu.epoch_losses.back() <= 0.5 * flu.epoch_losses.front(),
            name + "/fluence loss halves from epoch 1",
            fmt(flu.epoch_losses.front()) + " -> " + fmt(flu.epoch_losses.back()));
        TwoStageModel m;
        m.dose = dose.params;
        m.fluence = flu.params;
        m.ct_window_lo = cfg.ct_window_lo;
        m.ct_window_hi = cfg.ct_window_hi;
        models.emplace(name, std::move(m));
    }

    const RobustnessReport rep = run_scenarios(cfg, ds, models);
    emit_outputs(rep, "acceptance_out/stress");

    // 5: noise trend
    {
        bool pass = true;
        std::string detail;
        for (const auto& name : cfg.models) {
            std::vector<double> curve;
            for (double s : cfg.scenarios.sigmas)
                curve.push_back(find_row(rep, name, "noise", sev_label("sigma=", s)).ssim_mean);
            std::string mono_detail;
            if (!monotone_with_slack(curve, true, 0.005, &mono_detail)) {
                pass = false;
                detail += name + " ssim-vs-sigma not decreasing" + mono_detail + "; ";
            }
            const double p =
                find_row(rep, name, "noise", sev_label("sigma=", cfg.scenarios.sigmas.back()))
                    .wilcoxon_p;
            if (!(p < 0.05)) {
                pass = false;
                detail += name + " clean-vs-max-sigma p=" + fmt(p) + "; ";
            }
            detail += name + " ssim " + fmt(curve.front()) + "->" + fmt(curve.back()) +
                      " p=" + fmt(p) + "; ";
        }
        report(5, pass, "noise trend", detail);
    }

    // 6: geometric trend
    {
        bool pass = true;
        std::string detail;
        double rot_drop = 0.0, shift_drop = 0.0;
        int n_rot = 0, n_shift = 0;
        for (const auto& name : cfg.models) {
            const double clean = find_row(rep, name, "none", "clean").ssim_mean;
            const double q2 =
                find_row(rep, name, "rotation", sev_label("", cfg.scenarios.rotations_deg.front()) + "deg")
                    .energy_err_q75;
            const double q5 =
                find_row(rep, name, "rotation", sev_label("", cfg.scenarios.rotations_deg.back()) + "deg")
                    .energy_err_q75;
            if (!(q5 >= q2)) {
                pass = false;
                detail += name + " Q75 " + fmt(q5) + " < " + fmt(q2) + " across rotations; ";
            } else {
                detail += name + " rotation Q75 " + fmt(q2) + "->" + fmt(q5) + "; ";
            }
            for (const auto& r : rep.rows) {
                if (r.model != name)
                    continue;
                if (r.scenario == "rotation") {
                    rot_drop += clean - r.ssim_mean;
                    ++n_rot;
                } else if (r.scenario == "shift") {
                    shift_drop += clean - r.ssim_mean;
                    ++n_shift;
                }
            }
        }
        rot_drop /= std::max(1, n_rot);
        shift_drop /= std::max(1, n_shift);
        if (!(rot_drop >= shift_drop)) {
            pass = false;
            detail += "rotation drop " + fmt(rot_drop) + " < shift drop " + fmt(shift_drop) + "; ";
        } else {
            detail += "mean ssim drop: rotation " + fmt(rot_drop) + " >= shift " + fmt(shift_drop);
        }
        report(6, pass, "geometric trend", detail);
    }

    // 7: data-efficiency trend
    {
        bool pass = true;
        std::string detail;
        for (const auto& name : cfg.models) {
            std::vector<double> curve;
            for (double a : cfg.scenarios.alphas)
                curve.push_back(find_row(rep, name, "data_fraction", sev_label("alpha=", a)).ssim_mean);
            const double gap = curve.back() - curve.front();
            if (!(gap >= 0.02)) {
                pass = false;
                detail += name + " alpha gap " + fmt(gap) + " < 0.02; ";
            }
            std::string mono_detail;
            if (!monotone_with_slack(curve, false, 0.005, &mono_detail)) {
                pass = false;
                detail += name + " ssim-vs-alpha not increasing" + mono_detail + "; ";
            }
            detail += name + " ssim " + fmt(curve.front()) + "->" + fmt(curve.back()) + "; ";
        }
        report(7, pass, "data-efficiency trend", detail);
    }

    // 8: windowed-vs-global contrast under severe bias (reported, not ranked)
    {
        bool pass = true;
        std::string detail;
        for (const auto& name : cfg.models) {
            try {
                const double clean = find_row(rep, name, "none", "clean").energy_err_q75;
                const double severe = find_row(rep, name, "bias", "severe").energy_err_q75;
                const double growth = severe - clean;
                if (!std::isfinite(growth))
                    pass = false;
                detail += name + " Q75 growth (severe-clean) = " + fmt(growth) + "; ";
            } catch (const std::exception&) {
                pass = false;
                detail += name + " rows missing; ";
            }
        }
        report(8, pass, "windowed-vs-global bias contrast", detail);
    }
}

// ---------------------------------------------------------------- 9

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void criterion_determinism(bool small) {
    ExperimentConfig cfg;
    cfg.phantom_cases = 16;
    cfg.train_frac = 0.75;
    cfg.val_frac = 0.125;
    cfg.epochs = small ? 1 : 2;
    cfg.models = {"global", "windowed"};
    cfg.scenarios.shifts_mm = {3.0};
    cfg.scenarios.rotations_deg = {2.0};
    cfg.scenarios.sigmas = {0.1};
    cfg.scenarios.bias_levels = {"mild"};
    cfg.scenarios.alphas = {0.5, 1.0};
    cfg.seed = 321;

    const Dataset ds = load_or_generate_dataset(cfg);
    std::map<std::string, TwoStageModel> models;
    for (const auto& name : cfg.models) {
        const TrainResult dose = train_stage(cfg, ds, ds.split.train, name, Stage::Dose, nullptr);
        const TrainResult flu =
            train_stage(cfg, ds, ds.split.train, name, Stage::Fluence, &dose.params);
        TwoStageModel m;
        m.dose = dose.params;
        m.fluence = flu.params;
        models.emplace(name, std::move(m));
    }

    // Same config, different worker counts: report bytes must match.
    setenv("FLUENCEBENCH_THREADS", "1", 1);
    const RobustnessReport r1 = run_scenarios(cfg, ds, models);
    emit_outputs(r1, "acceptance_out/determinism_run1");
    setenv("FLUENCEBENCH_THREADS", "2", 1);
    const RobustnessReport r2 = run_scenarios(cfg, ds, models);
    emit_outputs(r2, "acceptance_out/determinism_run2");
    unsetenv("FLUENCEBENCH_THREADS");

    const std::string b1 = file_bytes("acceptance_out/determinism_run1/report.json");
    const std::string b2 = file_bytes("acceptance_out/determinism_run2/report.json");
    const bool pass = !b1.empty() && b1 == b2;
    report(9, pass, "end-to-end determinism",
           pass ? "byte-identical report.json across worker counts" : "report bytes differ");
}

} // namespace

int main() {
    const char* scale_env = std::getenv("FLUENCEBENCH_ACCEPT_SCALE");
    const bool small = scale_env && std::string(scale_env) == "small";

    criterion_metric_identities();
    criterion_gradient_oracle();
    criterion_wilcoxon_oracle();
    criterion_perturbation_contracts();

    ExperimentConfig cfg;
    cfg.seed = 20250808;
    cfg.out_dir = "acceptance_out";
    if (small) {
        cfg.phantom_cases = 20;
        cfg.epochs = 2;
        std::printf("  (FLUENCEBENCH_ACCEPT_SCALE=small: reduced run, trend criteria not "
                    "meaningful)\n");
    }
    try {
        criteria_trained_trends(cfg);
    } catch (const std::exception& e) {
        std::printf("criterion 5: FAIL - noise trend (exception: %s)\n", e.what());
        std::printf("criterion 6: FAIL - geometric trend (exception)\n");
        std::printf("criterion 7: FAIL - data-efficiency trend (exception)\n");
        std::printf("criterion 8: FAIL - windowed-vs-global bias contrast (exception)\n");
        g_failures += 4;
    }

    try {
        criterion_determinism(small);
    } catch (const std::exception& e) {
        std::printf("criterion 9: FAIL - end-to-end determinism (exception: %s)\n", e.what());
        ++g_failures;
    }

    std::printf("%s: %d criterion failure(s)\n",
                g_failures == 0 ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL", g_failures);
    return g_failures == 0 ? 0 : 1;
}
