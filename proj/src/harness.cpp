#include "fluencebench/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "fluencebench/errors.hpp"
#include "fluencebench/hashrand.hpp"
#include "fluencebench/perturb.hpp"
#include "fluencebench/threadpool.hpp"

namespace fluencebench {

namespace {

std::string format_number(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

std::string format_double17(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

nlohmann::json phantom_to_json(const PhantomConfig& p) {
    nlohmann::json j;
    j["depth"] = p.depth;
    j["height"] = p.height;
    j["width"] = p.width;
    j["spacing_mm"] = {p.spacing_mm[0], p.spacing_mm[1], p.spacing_mm[2]};
    j["beam_count"] = p.beam_count;
    j["attenuation_mu"] = p.attenuation_mu;
    j["fluence_unit"] = p.fluence_unit;
    j["oar_shield"] = p.oar_shield;
    j["body_semi_x_mm"] = p.body_semi_x_mm;
    j["body_semi_y_mm"] = p.body_semi_y_mm;
    j["body_jitter_mm"] = p.body_jitter_mm;
    j["body_taper"] = p.body_taper;
    j["ptv_radius_mm"] = p.ptv_radius_mm;
    j["ptv_radius_jitter_mm"] = p.ptv_radius_jitter_mm;
    j["ptv_offset_mm"] = p.ptv_offset_mm;
    j["ptv_z_offset_mm"] = p.ptv_z_offset_mm;
    j["oar_gap_mm"] = p.oar_gap_mm;
    j["oar_semi_mm"] = {p.oar_semi_mm[0], p.oar_semi_mm[1], p.oar_semi_mm[2]};
    j["oar_jitter_mm"] = p.oar_jitter_mm;
    j["tissue_hu"] = p.tissue_hu;
    j["ptv_delta_hu"] = p.ptv_delta_hu;
    j["oar_left_delta_hu"] = p.oar_left_delta_hu;
    j["oar_right_delta_hu"] = p.oar_right_delta_hu;
    j["air_hu"] = p.air_hu;
    j["texture_noise_hu"] = p.texture_noise_hu;
    return j;
}

PhantomConfig phantom_from_json(const nlohmann::json& j) {
    PhantomConfig p;
    p.depth = j.value("depth", p.depth);
    p.height = j.value("height", p.height);
    p.width = j.value("width", p.width);
    if (j.contains("spacing_mm")) {
        const auto s = j.at("spacing_mm").get<std::vector<double>>();
        if (s.size() != 3)
            throw ConfigError("phantom config: spacing_mm must have 3 entries");
        p.spacing_mm = {s[0], s[1], s[2]};
    }
    p.beam_count = j.value("beam_count", p.beam_count);
    p.attenuation_mu = j.value("attenuation_mu", p.attenuation_mu);
    p.fluence_unit = j.value("fluence_unit", p.fluence_unit);
    p.oar_shield = j.value("oar_shield", p.oar_shield);
    p.body_semi_x_mm = j.value("body_semi_x_mm", p.body_semi_x_mm);
    p.body_semi_y_mm = j.value("body_semi_y_mm", p.body_semi_y_mm);
    p.body_jitter_mm = j.value("body_jitter_mm", p.body_jitter_mm);
    p.body_taper = j.value("body_taper", p.body_taper);
    p.ptv_radius_mm = j.value("ptv_radius_mm", p.ptv_radius_mm);
    p.ptv_radius_jitter_mm = j.value("ptv_radius_jitter_mm", p.ptv_radius_jitter_mm);
    p.ptv_offset_mm = j.value("ptv_offset_mm", p.ptv_offset_mm);
    p.ptv_z_offset_mm = j.value("ptv_z_offset_mm", p.ptv_z_offset_mm);
    p.oar_gap_mm = j.value("oar_gap_mm", p.oar_gap_mm);
    if (j.contains("oar_semi_mm")) {
        const auto s = j.at("oar_semi_mm").get<std::vector<double>>();
        if (s.size() != 3)
            throw ConfigError("phantom config: oar_semi_mm must have 3 entries");
        p.oar_semi_mm = {s[0], s[1], s[2]};
    }
    p.oar_jitter_mm = j.value("oar_jitter_mm", p.oar_jitter_mm);
    p.tissue_hu = j.value("tissue_hu", p.tissue_hu);
    p.ptv_delta_hu = j.value("ptv_delta_hu", p.ptv_delta_hu);
    p.oar_left_delta_hu = j.value("oar_left_delta_hu", p.oar_left_delta_hu);
    p.oar_right_delta_hu = j.value("oar_right_delta_hu", p.oar_right_delta_hu);
    p.air_hu = j.value("air_hu", p.air_hu);
    p.texture_noise_hu = j.value("texture_noise_hu", p.texture_noise_hu);
    return p;
}

FarWeights weights_from_json(const nlohmann::json& j, const FarWeights& defaults) {
    FarWeights w = defaults;
    w.alpha = j.value("alpha", w.alpha);
    w.beta = j.value("beta", w.beta);
    w.gamma = j.value("gamma", w.gamma);
    w.delta = j.value("delta", w.delta);
    return w;
}

nlohmann::json weights_to_json(const FarWeights& w) {
    nlohmann::json j;
    j["alpha"] = w.alpha;
    j["beta"] = w.beta;
    j["gamma"] = w.gamma;
    j["delta"] = w.delta;
    return j;
}

const BiasPreset& bias_preset_by_name(const std::string& name) {
    for (const auto& p : bias_presets())
        if (p.name == name)
            return p;
    throw ConfigError("unknown bias level: " + name);
}

} // namespace

void ExperimentConfig::validate() const {
    if (models.empty())
        throw ConfigError("config: at least one model required");
    std::set<std::string> seen;
    for (const auto& m : models) {
        attention_mode_from_name(m); // throws on unknown
        if (!seen.insert(m).second)
            throw ConfigError("config: duplicate model " + m);
    }
    if (case_dir.empty() && phantom_cases < 3)
        throw ConfigError("config: need at least 3 phantom cases for a split");
    if (!(train_frac > 0.0 && val_frac >= 0.0 && train_frac + val_frac < 1.0))
        throw ConfigError("config: bad split fractions");
    if (epochs < 1)
        throw ConfigError("config: epochs must be >= 1");
    if (batch < 1)
        throw ConfigError("config: batch must be >= 1");
    if (!(lr > 0.0))
        throw ConfigError("config: lr must be > 0");
    if (embed_dim < 1 || heads < 1 || embed_dim % heads != 0)
        throw ConfigError("config: embed_dim must be divisible by heads");
    if (patch < 1 || fluence_patch < 1 || window < 1)
        throw ConfigError("config: patch and window must be >= 1");
    if (!(ct_window_lo < ct_window_hi))
        throw ConfigError("config: ct_window must be ascending");
    fluence_weights.validate();
    dose_weights.validate();
    for (double s : scenarios.shifts_mm)
        if (!std::isfinite(s))
            throw ConfigError("config: bad shift severity");
    for (double r : scenarios.rotations_deg)
        if (!(std::abs(r) <= 45.0))
            throw ConfigError("config: rotation severity must satisfy |theta| <= 45");
    for (double s : scenarios.sigmas)
        if (!(s >= 0.0))
            throw ConfigError("config: sigma severity must be >= 0");
    for (const auto& b : scenarios.bias_levels)
        bias_preset_by_name(b);
    for (double a : scenarios.alphas)
        if (!(a > 0.0 && a <= 1.0))
            throw ConfigError("config: alpha severity must lie in (0,1]");
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j;
    j["dataset"]["case_dir"] = case_dir;
    j["dataset"]["phantom_cases"] = phantom_cases;
    j["dataset"]["phantom"] = phantom_to_json(phantom);
    j["dataset"]["train_frac"] = train_frac;
    j["dataset"]["val_frac"] = val_frac;
    j["model"]["models"] = models;
    j["model"]["embed_dim"] = embed_dim;
    j["model"]["heads"] = heads;
    j["model"]["window"] = window;
    j["model"]["patch"] = patch;
    j["model"]["fluence_patch"] = fluence_patch;
    j["model"]["ct_window"] = {ct_window_lo, ct_window_hi};
    j["training"]["lr"] = lr;
    j["training"]["batch"] = batch;
    j["training"]["epochs"] = epochs;
    j["training"]["far_weights"] = weights_to_json(fluence_weights);
    j["training"]["dose_weights"] = weights_to_json(dose_weights);
    j["scenarios"]["geometric"] = scenarios.geometric;
    j["scenarios"]["noise"] = scenarios.noise;
    j["scenarios"]["bias"] = scenarios.bias;
    j["scenarios"]["data_fraction"] = scenarios.data_fraction;
    j["scenarios"]["shifts_mm"] = scenarios.shifts_mm;
    j["scenarios"]["rotations_deg"] = scenarios.rotations_deg;
    j["scenarios"]["sigmas"] = scenarios.sigmas;
    j["scenarios"]["bias_levels"] = scenarios.bias_levels;
    j["scenarios"]["alphas"] = scenarios.alphas;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    try {
        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            c.case_dir = d.value("case_dir", c.case_dir);
            c.phantom_cases = d.value("phantom_cases", c.phantom_cases);
            if (d.contains("phantom"))
                c.phantom = phantom_from_json(d.at("phantom"));
            c.train_frac = d.value("train_frac", c.train_frac);
            c.val_frac = d.value("val_frac", c.val_frac);
        }
        if (j.contains("model")) {
            const auto& m = j.at("model");
            if (m.contains("models"))
                c.models = m.at("models").get<std::vector<std::string>>();
            c.embed_dim = m.value("embed_dim", c.embed_dim);
            c.heads = m.value("heads", c.heads);
            c.window = m.value("window", c.window);
            c.patch = m.value("patch", c.patch);
            c.fluence_patch = m.value("fluence_patch", c.fluence_patch);
            if (m.contains("ct_window")) {
                const auto w = m.at("ct_window").get<std::vector<float>>();
                if (w.size() != 2)
                    throw ConfigError("config: ct_window must have 2 entries");
                c.ct_window_lo = w[0];
                c.ct_window_hi = w[1];
            }
        }
        if (j.contains("training")) {
            const auto& t = j.at("training");
            c.lr = t.value("lr", c.lr);
            c.batch = t.value("batch", c.batch);
            c.epochs = t.value("epochs", c.epochs);
            if (t.contains("far_weights"))
                c.fluence_weights = weights_from_json(t.at("far_weights"), c.fluence_weights);
            if (t.contains("dose_weights"))
                c.dose_weights = weights_from_json(t.at("dose_weights"), c.dose_weights);
        }
        if (j.contains("scenarios")) {
            const auto& s = j.at("scenarios");
            c.scenarios.geometric = s.value("geometric", c.scenarios.geometric);
            c.scenarios.noise = s.value("noise", c.scenarios.noise);
            c.scenarios.bias = s.value("bias", c.scenarios.bias);
            c.scenarios.data_fraction = s.value("data_fraction", c.scenarios.data_fraction);
            if (s.contains("shifts_mm"))
                c.scenarios.shifts_mm = s.at("shifts_mm").get<std::vector<double>>();
            if (s.contains("rotations_deg"))
                c.scenarios.rotations_deg = s.at("rotations_deg").get<std::vector<double>>();
            if (s.contains("sigmas"))
                c.scenarios.sigmas = s.at("sigmas").get<std::vector<double>>();
            if (s.contains("bias_levels"))
                c.scenarios.bias_levels = s.at("bias_levels").get<std::vector<std::string>>();
            if (s.contains("alphas"))
                c.scenarios.alphas = s.at("alphas").get<std::vector<double>>();
        }
        c.seed = j.value("seed", c.seed);
        c.out_dir = j.value("out_dir", c.out_dir);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: malformed JSON: ") + e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("config: cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: invalid JSON in " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

std::string ExperimentConfig::config_hash() const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(to_json().dump())));
    return buf;
}

const CaseRecord& Dataset::by_id(const std::string& id) const {
    const auto it = index.find(id);
    if (it == index.end())
        throw ConfigError("dataset: unknown case id " + id);
    return cases[static_cast<size_t>(it->second)];
}

Dataset load_or_generate_dataset(const ExperimentConfig& cfg) {
    if (!cfg.case_dir.empty())
        return read_dataset(cfg.case_dir);
    const PhantomDataset pd =
        generate_dataset(cfg.seed, cfg.phantom_cases, cfg.phantom, cfg.train_frac, cfg.val_frac);
    Dataset ds;
    ds.cases = pd.cases;
    ds.split = pd.split;
    for (size_t i = 0; i < ds.cases.size(); ++i)
        ds.index[ds.cases[i].case_id] = static_cast<int>(i);
    return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "cases");
    nlohmann::json manifest;
    nlohmann::json cases = nlohmann::json::array();
    const std::set<std::string> train(ds.split.train.begin(), ds.split.train.end());
    const std::set<std::string> val(ds.split.val.begin(), ds.split.val.end());
    for (const auto& rec : ds.cases) {
        write_case(rec, dir / "cases" / rec.case_id);
        nlohmann::json entry;
        entry["id"] = rec.case_id;
        entry["split"] = train.count(rec.case_id) ? "train" : (val.count(rec.case_id) ? "val" : "test");
        cases.push_back(entry);
    }
    manifest["cases"] = cases;
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out)
        throw ConfigError("write_dataset: cannot open " + (dir / "manifest.json").string());
    out << manifest.dump(2) << "\n";
}

Dataset read_dataset(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in)
        throw ConfigError("read_dataset: cannot open " + (dir / "manifest.json").string());
    nlohmann::json manifest;
    Dataset ds;
    try {
        in >> manifest;
        for (const auto& entry : manifest.at("cases")) {
            const std::string id = entry.at("id").get<std::string>();
            const std::string split = entry.at("split").get<std::string>();
            ds.cases.push_back(read_case(dir / "cases" / id, id));
            ds.index[id] = static_cast<int>(ds.cases.size()) - 1;
            if (split == "train")
                ds.split.train.push_back(id);
            else if (split == "val")
                ds.split.val.push_back(id);
            else if (split == "test")
                ds.split.test.push_back(id);
            else
                throw ConfigError("read_dataset: unknown split label " + split);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("read_dataset: malformed manifest: " + std::string(e.what()));
    }
    return ds;
}

std::string stage_name(Stage s) { return s == Stage::Dose ? "dose" : "fluence"; }

ModelConfig dose_model_config(const ExperimentConfig& cfg, const Dataset& ds,
                              const std::string& model_name) {
    if (ds.cases.empty())
        throw ConfigError("dose_model_config: empty dataset");
    const CaseRecord& rec = ds.cases.front();
    ModelConfig mc;
    mc.attention = attention_mode_from_name(model_name);
    mc.in_channels = 1 + rec.masks.channels;
    mc.out_channels = 1;
    mc.img_h = rec.ct.height;
    mc.img_w = rec.ct.width;
    mc.patch = cfg.patch;
    mc.embed_dim = cfg.embed_dim;
    mc.heads = cfg.heads;
    mc.window = cfg.window;
    mc.input_scale = 1.0;
    mc.relu_head = false; // dose can undershoot; only fluence must clamp
    mc.pos_init = 0.05;   // anatomy tracking needs content to dominate
    mc.validate();
    return mc;
}

ModelConfig fluence_model_config(const ExperimentConfig& cfg, const Dataset& ds,
                                 const std::string& model_name) {
    if (ds.cases.empty())
        throw ConfigError("fluence_model_config: empty dataset");
    const CaseRecord& rec = ds.cases.front();
    ModelConfig mc;
    mc.attention = attention_mode_from_name(model_name);
    mc.in_channels = 1;
    mc.out_channels = 1;
    mc.img_h = rec.beams.fluence_h;
    mc.img_w = rec.beams.fluence_w;
    mc.patch = cfg.fluence_patch;
    mc.embed_dim = cfg.embed_dim;
    mc.heads = cfg.heads;
    mc.window = cfg.window;
    // Projections sum over the dose grid's rows; rescale to O(1) inputs.
    mc.input_scale = 1.0 / static_cast<double>(rec.ct.height);
    mc.pos_init = 0.3; // beam patterns are strongly position-locked
    mc.validate();
    return mc;
}

namespace {

struct TrainSample {
    int case_idx;
    int sub; // slice for the dose stage, beam for the fluence stage
};

// Per-sample forward/backward; returns loss and writes gradients.
double sample_grads(const ModelParams& model, const std::vector<float>& input,
                    const Tensor<float>& target, const FarWeights& weights, ParamMap& grads_out) {
    Tape<float> tp;
    const auto fwd = model_forward(tp, model, input);
    const int target_node = tp.input(target);
    const int loss = far_loss_node(tp, fwd.prediction, target_node, weights);
    tp.backward(loss);
    for (const auto& [name, id] : fwd.params) {
        Tensor<float> g;
        g.shape = model.tensors.at(name).shape;
        g.v = tp.grad(id);
        if (g.v.empty())
            g.v.assign(model.tensors.at(name).v.size(), 0.0f);
        grads_out[name] = std::move(g);
    }
    return static_cast<double>(tp.value(loss)[0]);
}

} // namespace

TrainResult train_stage(const ExperimentConfig& cfg, const Dataset& ds,
                        const std::vector<std::string>& train_ids, const std::string& model_name,
                        Stage stage, const ModelParams* dose_params, const std::string& run_tag) {
    if (train_ids.empty())
        throw ConfigError("train_stage: empty training set");
    {
        const std::set<std::string> test(ds.split.test.begin(), ds.split.test.end());
        for (const auto& id : train_ids)
            if (test.count(id))
                throw ConfigError("train_stage: held-out discipline violated, test case " + id +
                                  " appears in the training set");
    }
    if (stage == Stage::Fluence && dose_params == nullptr)
        throw ConfigError("train_stage: fluence stage requires trained dose parameters");

    const std::string tag = model_name + "/" + stage_name(stage) + (run_tag.empty() ? "" : "/" + run_tag);
    const ModelConfig mc = stage == Stage::Dose ? dose_model_config(cfg, ds, model_name)
                                                : fluence_model_config(cfg, ds, model_name);
    ModelParams model = init_model(mc, model_name, stage_name(stage),
                                   substream(cfg.seed, model_name + "/" + stage_name(stage) + "/init"));
    const FarWeights weights = stage == Stage::Dose ? cfg.dose_weights : cfg.fluence_weights;

    // Precompute per-sample inputs and targets.
    std::vector<std::vector<float>> inputs;
    std::vector<Tensor<float>> targets;
    std::vector<TrainSample> samples;
    if (stage == Stage::Dose) {
        for (const auto& id : train_ids) {
            const CaseRecord& rec = ds.by_id(id);
            const Field ct_norm = normalize_ct(rec.ct, cfg.ct_window_lo, cfg.ct_window_hi);
            for (int d = 0; d < rec.ct.depth; ++d) {
                inputs.push_back(dose_stage_input(ct_norm, rec.masks, d));
                Tensor<float> t({rec.ct.height, rec.ct.width});
                std::copy_n(rec.dose.slice_ptr(0, d), rec.dose.slice_stride(), t.v.data());
                targets.push_back(std::move(t));
                samples.push_back({ds.index.at(id), d});
            }
        }
    } else {
        // The fluence stage consumes the trained dose stage's predictions.
        TwoStageModel upstream;
        upstream.dose = *dose_params;
        upstream.ct_window_lo = cfg.ct_window_lo;
        upstream.ct_window_hi = cfg.ct_window_hi;
        std::vector<Field> dose_preds(train_ids.size());
        parallel_for(static_cast<int64_t>(train_ids.size()), [&](int64_t i) {
            const CaseRecord& rec = ds.by_id(train_ids[static_cast<size_t>(i)]);
            const Field ct_norm = normalize_ct(rec.ct, cfg.ct_window_lo, cfg.ct_window_hi);
            Field pred = make_field(1, rec.ct.depth, rec.ct.height, rec.ct.width, rec.ct.spacing_mm);
            for (int d = 0; d < rec.ct.depth; ++d) {
                Tape<float> tp;
                const auto fwd = model_forward(tp, upstream.dose, dose_stage_input(ct_norm, rec.masks, d));
                const auto& v = tp.value(fwd.prediction);
                std::copy(v.begin(), v.end(), pred.slice_ptr(0, d));
            }
            dose_preds[static_cast<size_t>(i)] = std::move(pred);
        });
        for (size_t i = 0; i < train_ids.size(); ++i) {
            const CaseRecord& rec = ds.by_id(train_ids[i]);
            for (int b = 0; b < rec.beams.beam_count; ++b) {
                const Map2D proj = bev_projection(dose_preds[i], rec.beams.gantry_angles_deg[b]);
                std::vector<float> in(proj.values.size());
                for (size_t p = 0; p < in.size(); ++p)
                    in[p] = static_cast<float>(proj.values[p] * mc.input_scale);
                inputs.push_back(std::move(in));
                Tensor<float> t({rec.fluence.height, rec.fluence.width});
                std::copy_n(rec.fluence.beam_ptr(b), rec.fluence.beam_stride(), t.v.data());
                targets.push_back(std::move(t));
                samples.push_back({ds.index.at(train_ids[i]), b});
            }
        }
    }

    AdamState adam;
    TrainResult result;
    const uint64_t shuffle_seed = substream(cfg.seed, tag + "/shuffle");
    std::vector<int> order(samples.size());
    for (size_t i = 0; i < order.size(); ++i)
        order[i] = static_cast<int>(i);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        deterministic_shuffle(order, hash64(shuffle_seed, static_cast<uint64_t>(epoch)));
        double epoch_loss = 0.0;
        int64_t seen = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
            const size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch));
            const int64_t bs = static_cast<int64_t>(stop - start);
            std::vector<ParamMap> grads(static_cast<size_t>(bs));
            std::vector<double> losses(static_cast<size_t>(bs));
            parallel_for(bs, [&](int64_t k) {
                const int s = order[start + static_cast<size_t>(k)];
                losses[static_cast<size_t>(k)] =
                    sample_grads(model, inputs[static_cast<size_t>(s)], targets[static_cast<size_t>(s)],
                                 weights, grads[static_cast<size_t>(k)]);
            });

            ParamMap mean_grads;
            for (const auto& [name, t] : model.tensors)
                mean_grads.emplace(name, Tensor<float>(t.shape));
            for (int64_t k = 0; k < bs; ++k) {
                if (!std::isfinite(losses[static_cast<size_t>(k)]))
                    throw NumericError("train_stage: non-finite loss for " + tag + " at epoch " +
                                       std::to_string(epoch + 1) + ", batch starting at sample " +
                                       std::to_string(start));
                epoch_loss += losses[static_cast<size_t>(k)];
                for (auto& [name, g] : mean_grads) {
                    const auto& gs = grads[static_cast<size_t>(k)].at(name);
                    for (size_t i = 0; i < g.v.size(); ++i)
                        g.v[i] += gs.v[i];
                }
            }
            const float inv = 1.0f / static_cast<float>(bs);
            for (auto& [name, g] : mean_grads)
                for (float& v : g.v)
                    v *= inv;
            adam_step(model.tensors, mean_grads, adam, cfg.lr);
            seen += bs;
        }
        result.epoch_losses.push_back(epoch_loss / static_cast<double>(seen));
    }

    model.step_count = adam.step;
    result.params = std::move(model);
    return result;
}

namespace {

struct EvalTask {
    std::string model;
    std::string scenario;
    std::string severity;
    double severity_value = 0.0;
    int case_idx = 0;
    std::vector<PerturbationSpec> variants;
    bool want_dvh = false;
    std::string dvh_label;
};

std::vector<double> default_dvh_edges() {
    std::vector<double> edges;
    for (int i = 0; i <= 30; ++i)
        edges.push_back(i * 0.05);
    return edges;
}

MetricRecord evaluate_case(const TwoStageModel& model, const CaseRecord& rec, const EvalTask& task,
                           const std::vector<double>& dvh_edges, std::vector<double>* dvh_out) {
    double l_max = 0.0;
    for (float v : rec.fluence.values)
        l_max = std::max(l_max, static_cast<double>(v));
    if (!(l_max > 0.0))
        throw NumericError("evaluate_case: degenerate ground-truth fluence in " + rec.case_id);

    MetricRecord out;
    out.case_id = rec.case_id;
    out.scenario = task.scenario;
    out.severity = task.severity;
    out.dynamic_range = l_max;
    out.per_beam_energy_err.assign(static_cast<size_t>(rec.fluence.beam_count), 0.0);

    for (size_t v = 0; v < task.variants.size(); ++v) {
        const TwoStageOutput pred = two_stage_forward(model, rec, task.variants[v]);
        double ssim_sum = 0.0;
        for (int b = 0; b < rec.fluence.beam_count; ++b)
            ssim_sum += ssim(pred.fluence.beam(b), rec.fluence.beam(b), l_max);
        out.ssim += ssim_sum / rec.fluence.beam_count;
        std::vector<double> per_beam;
        out.energy_err_pct += energy_error_pct(pred.fluence, rec.fluence, &per_beam);
        for (size_t b = 0; b < per_beam.size(); ++b)
            out.per_beam_energy_err[b] += per_beam[b];
        if (task.want_dvh && v == 0 && dvh_out) {
            const DvhCurve curve = dvh(pred.dose, rec.masks, kMaskOarLeft, dvh_edges, "oar_left");
            *dvh_out = curve.volume_fraction;
        }
    }
    const double inv = 1.0 / static_cast<double>(task.variants.size());
    out.ssim *= inv;
    out.energy_err_pct *= inv;
    for (double& e : out.per_beam_energy_err)
        e *= inv;
    return out;
}

double severity_value_from_label(const std::string& scenario, const std::string& severity) {
    if (scenario == "none")
        return 0.0;
    if (scenario == "bias")
        return bias_preset_by_name(severity).strength;
    std::string digits;
    for (char c : severity)
        if ((c >= '0' && c <= '9') || c == '.' || c == '-')
            digits.push_back(c);
    return digits.empty() ? 0.0 : std::stod(digits);
}

int scenario_rank(const std::string& scenario) {
    if (scenario == "none") return 0;
    if (scenario == "shift") return 1;
    if (scenario == "rotation") return 2;
    if (scenario == "noise") return 3;
    if (scenario == "bias") return 4;
    if (scenario == "data_fraction") return 5;
    return 6;
}

void sort_records(std::vector<MetricRecord>& records) {
    std::sort(records.begin(), records.end(), [](const MetricRecord& a, const MetricRecord& b) {
        const int ra = scenario_rank(a.scenario), rb = scenario_rank(b.scenario);
        if (ra != rb)
            return ra < rb;
        const double va = severity_value_from_label(a.scenario, a.severity);
        const double vb = severity_value_from_label(b.scenario, b.severity);
        if (va != vb)
            return va < vb;
        if (a.severity != b.severity)
            return a.severity < b.severity;
        return a.case_id < b.case_id;
    });
}

} // namespace

std::vector<ReportRow> summarize(const std::map<std::string, std::vector<MetricRecord>>& records_by_model) {
    std::vector<ReportRow> rows;
    for (const auto& [model, records] : records_by_model) {
        if (records.empty())
            throw ConfigError("summarize: empty record group for model " + model);
        std::map<std::pair<std::string, std::string>, std::vector<const MetricRecord*>> groups;
        for (const auto& r : records)
            groups[{r.scenario, r.severity}].push_back(&r);

        std::map<std::string, double> clean_ssim_by_case;
        const auto clean = groups.find({"none", "clean"});
        if (clean != groups.end())
            for (const auto* r : clean->second)
                clean_ssim_by_case[r->case_id] = r->ssim;

        for (const auto& [key, group] : groups) {
            ReportRow row;
            row.model = model;
            row.scenario = key.first;
            row.severity = key.second;
            row.severity_value = severity_value_from_label(key.first, key.second);
            row.n = static_cast<int>(group.size());

            double mean = 0.0;
            std::vector<double> energies;
            for (const auto* r : group) {
                mean += r->ssim;
                energies.push_back(r->energy_err_pct);
            }
            mean /= row.n;
            double var = 0.0;
            for (const auto* r : group)
                var += (r->ssim - mean) * (r->ssim - mean);
            row.ssim_mean = mean;
            row.ssim_std = row.n > 1 ? std::sqrt(var / (row.n - 1)) : 0.0;
            row.energy_err_q75 = quantile(energies, 0.75);

            // Paired against the same model's unperturbed SSIM per case; a
            // group paired against itself gives p = 1.
            std::vector<double> x, y;
            for (const auto* r : group) {
                const auto it = clean_ssim_by_case.find(r->case_id);
                if (it != clean_ssim_by_case.end()) {
                    x.push_back(it->second);
                    y.push_back(r->ssim);
                }
            }
            if (x.empty())
                for (const auto* r : group) {
                    x.push_back(r->ssim);
                    y.push_back(r->ssim);
                }
            row.wilcoxon_p = wilcoxon_signed_rank(x, y).p_two_sided;
            rows.push_back(std::move(row));
        }
    }
    std::sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
        if (a.model != b.model)
            return a.model < b.model;
        const int ra = scenario_rank(a.scenario), rb = scenario_rank(b.scenario);
        if (ra != rb)
            return ra < rb;
        if (a.severity_value != b.severity_value)
            return a.severity_value < b.severity_value;
        return a.severity < b.severity;
    });
    return rows;
}

RobustnessReport run_scenarios(const ExperimentConfig& cfg, const Dataset& ds,
                               const std::map<std::string, TwoStageModel>& models) {
    if (models.empty())
        throw ConfigError("run_scenarios: missing checkpoints");
    if (ds.split.test.empty())
        throw ConfigError("run_scenarios: empty test set");
    {
        const std::set<std::string> train(ds.split.train.begin(), ds.split.train.end());
        for (const auto& id : ds.split.test)
            if (train.count(id))
                throw ConfigError("run_scenarios: held-out discipline violated for " + id);
    }

    const std::vector<double> dvh_edges = default_dvh_edges();
    std::vector<EvalTask> tasks;
    for (const auto& [name, model] : models) {
        (void)model;
        for (size_t ci = 0; ci < ds.split.test.size(); ++ci) {
            const int case_idx = ds.index.at(ds.split.test[ci]);
            const auto add_task = [&](const std::string& scenario, const std::string& severity,
                                      double value, std::vector<PerturbationSpec> variants,
                                      bool want_dvh = false, std::string dvh_label = "") {
                tasks.push_back({name, scenario, severity, value, case_idx, std::move(variants),
                                 want_dvh, std::move(dvh_label)});
            };

            PerturbationSpec none;
            add_task("none", "clean", 0.0, {none});

            if (cfg.scenarios.geometric) {
                for (double s : cfg.scenarios.shifts_mm) {
                    PerturbationSpec row, col;
                    row.kind = col.kind = PerturbationKind::Geometric;
                    row.shift_mm = {s, 0.0};
                    col.shift_mm = {0.0, s};
                    add_task("shift", format_number(s) + "mm", s, {row, col});
                }
                for (double r : cfg.scenarios.rotations_deg) {
                    PerturbationSpec plus, minus;
                    plus.kind = minus.kind = PerturbationKind::Geometric;
                    plus.theta_deg = r;
                    minus.theta_deg = -r;
                    add_task("rotation", format_number(r) + "deg", r, {plus, minus});
                }
            }
            if (cfg.scenarios.noise) {
                for (double s : cfg.scenarios.sigmas) {
                    PerturbationSpec spec;
                    spec.kind = PerturbationKind::Noise;
                    spec.sigma = s;
                    const std::string sev = "sigma=" + format_number(s);
                    spec.seed = hash64(substream(cfg.seed, "eval/noise/" + sev),
                                       static_cast<uint64_t>(case_idx));
                    const bool dvh_wanted = s == 0.05 || s == 0.15;
                    add_task("noise", sev, s, {spec}, dvh_wanted,
                             dvh_wanted ? "noise_" + format_number(s) : "");
                }
            }
            if (cfg.scenarios.bias) {
                for (const auto& level : cfg.scenarios.bias_levels) {
                    const BiasPreset& preset = bias_preset_by_name(level);
                    PerturbationSpec spec;
                    spec.kind = PerturbationKind::Bias;
                    spec.bias_strength = preset.strength;
                    spec.bias_offset = preset.offset;
                    spec.seed = hash64(substream(cfg.seed, "eval/bias/" + level),
                                       static_cast<uint64_t>(case_idx));
                    const bool dvh_wanted = level == "mild";
                    add_task("bias", level, preset.strength, {spec}, dvh_wanted,
                             dvh_wanted ? "bias_mild" : "");
                }
            }
        }
    }

    struct TaskResult {
        MetricRecord record;
        std::vector<double> dvh_fracs;
    };
    std::vector<TaskResult> results(tasks.size());
    parallel_for(static_cast<int64_t>(tasks.size()), [&](int64_t i) {
        const EvalTask& task = tasks[static_cast<size_t>(i)];
        std::vector<double> dvh_fracs;
        results[static_cast<size_t>(i)].record =
            evaluate_case(models.at(task.model), ds.cases[static_cast<size_t>(task.case_idx)], task,
                          dvh_edges, &dvh_fracs);
        results[static_cast<size_t>(i)].dvh_fracs = std::move(dvh_fracs);
    });

    RobustnessReport report;
    std::map<std::string, std::map<std::string, std::vector<std::vector<double>>>> dvh_by_label_model;
    for (size_t i = 0; i < tasks.size(); ++i) {
        report.records_by_model[tasks[i].model].push_back(results[i].record);
        if (tasks[i].want_dvh && !results[i].dvh_fracs.empty())
            dvh_by_label_model[tasks[i].dvh_label][tasks[i].model].push_back(results[i].dvh_fracs);
    }

    // Data-fraction scenario: retrain on nested subsets, evaluate clean.
    if (cfg.scenarios.data_fraction) {
        const uint64_t subset_seed = substream(cfg.seed, "data_fraction");
        std::vector<double> alphas = cfg.scenarios.alphas;
        std::sort(alphas.begin(), alphas.end());
        for (const auto& [name, base_model] : models) {
            for (double alpha : alphas) {
                const std::string severity = "alpha=" + format_number(alpha);
                std::vector<MetricRecord> alpha_records;
                if (alpha == 1.0) {
                    // Full data: identical to the base model's clean run.
                    for (const auto& r : report.records_by_model[name])
                        if (r.scenario == "none") {
                            MetricRecord copy = r;
                            copy.scenario = "data_fraction";
                            copy.severity = severity;
                            alpha_records.push_back(std::move(copy));
                        }
                } else {
                    const std::vector<std::string> subset =
                        subsample_cases(ds.split.train, alpha, subset_seed);
                    const TrainResult dose =
                        train_stage(cfg, ds, subset, name, Stage::Dose, nullptr, severity);
                    const TrainResult flu =
                        train_stage(cfg, ds, subset, name, Stage::Fluence, &dose.params, severity);
                    TwoStageModel retrained;
                    retrained.dose = dose.params;
                    retrained.fluence = flu.params;
                    retrained.ct_window_lo = cfg.ct_window_lo;
                    retrained.ct_window_hi = cfg.ct_window_hi;

                    alpha_records.resize(ds.split.test.size());
                    parallel_for(static_cast<int64_t>(ds.split.test.size()), [&](int64_t i) {
                        EvalTask task;
                        task.model = name;
                        task.scenario = "data_fraction";
                        task.severity = severity;
                        task.severity_value = alpha;
                        task.case_idx = ds.index.at(ds.split.test[static_cast<size_t>(i)]);
                        task.variants = {PerturbationSpec{}};
                        alpha_records[static_cast<size_t>(i)] = evaluate_case(
                            retrained, ds.cases[static_cast<size_t>(task.case_idx)], task, dvh_edges,
                            nullptr);
                    });
                }
                for (auto& r : alpha_records)
                    report.records_by_model[name].push_back(std::move(r));
            }
        }
    }

    for (auto& [name, records] : report.records_by_model)
        sort_records(records);
    report.rows = summarize(report.records_by_model);

    // DVH aggregates for figure-ready output: ground truth band +
    // per-model mean predicted curves.
    std::vector<double> gt_mean(dvh_edges.size(), 0.0), gt_sq(dvh_edges.size(), 0.0);
    for (const auto& id : ds.split.test) {
        const CaseRecord& rec = ds.by_id(id);
        const DvhCurve curve = dvh(rec.dose, rec.masks, kMaskOarLeft, dvh_edges, "oar_left");
        for (size_t e = 0; e < dvh_edges.size(); ++e) {
            gt_mean[e] += curve.volume_fraction[e];
            gt_sq[e] += curve.volume_fraction[e] * curve.volume_fraction[e];
        }
    }
    const double n_test = static_cast<double>(ds.split.test.size());
    for (size_t e = 0; e < dvh_edges.size(); ++e) {
        gt_mean[e] /= n_test;
        const double var = std::max(0.0, gt_sq[e] / n_test - gt_mean[e] * gt_mean[e]);
        gt_sq[e] = std::sqrt(var);
    }
    for (const auto& [label, by_model] : dvh_by_label_model) {
        DvhAggregate agg;
        agg.label = label;
        agg.roi = "oar_left";
        agg.edges = dvh_edges;
        agg.gt_mean = gt_mean;
        agg.gt_std = gt_sq;
        for (const auto& [model, curves] : by_model) {
            std::vector<double> mean(dvh_edges.size(), 0.0);
            for (const auto& c : curves)
                for (size_t e = 0; e < mean.size(); ++e)
                    mean[e] += c[e];
            for (double& v : mean)
                v /= static_cast<double>(curves.size());
            agg.model_mean[model] = std::move(mean);
        }
        report.dvh.push_back(std::move(agg));
    }

    nlohmann::json prov;
    prov["config_hash"] = cfg.config_hash();
    prov["seed"] = cfg.seed;
    const char* commit = std::getenv("FLUENCEBENCH_COMMIT");
    prov["commit_id"] = commit ? commit : "unknown";
    prov["n_train"] = ds.split.train.size();
    prov["n_val"] = ds.split.val.size();
    prov["n_test"] = ds.split.test.size();
    prov["metadata"]["shift_directions"] = "row and column axes, metrics averaged";
    prov["metadata"]["rotation_signs"] = "both signs, metrics averaged";
    prov["metadata"]["ssim_aggregation"] =
        "per-beam fluence SSIM averaged over beams; std across cases; L = per-case max ground-truth fluence";
    prov["metadata"]["wilcoxon"] = "per-case SSIM against the same model's unperturbed baseline";
    report.provenance = std::move(prov);
    return report;
}

nlohmann::json RobustnessReport::to_json() const {
    nlohmann::json j;
    j["provenance"] = provenance;
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json row;
        row["model"] = r.model;
        row["scenario"] = r.scenario;
        row["severity"] = r.severity;
        row["severity_value"] = r.severity_value;
        row["n"] = r.n;
        row["ssim_mean"] = r.ssim_mean;
        row["ssim_std"] = r.ssim_std;
        row["energy_err_q75"] = r.energy_err_q75;
        row["wilcoxon_p"] = r.wilcoxon_p;
        rows_json.push_back(std::move(row));
    }
    j["rows"] = std::move(rows_json);
    return j;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw ConfigError("emit_outputs: cannot open " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out)
        throw ConfigError("emit_outputs: I/O failure writing " + path.string());
}

std::string rows_csv(const std::vector<const ReportRow*>& rows) {
    std::ostringstream os;
    os << "model,scenario,severity,n,ssim_mean,ssim_std,energy_err_q75,wilcoxon_p\n";
    for (const auto* r : rows)
        os << r->model << ',' << r->scenario << ',' << r->severity << ',' << r->n << ','
           << format_double17(r->ssim_mean) << ',' << format_double17(r->ssim_std) << ','
           << format_double17(r->energy_err_q75) << ',' << format_double17(r->wilcoxon_p) << '\n';
    return os.str();
}

} // namespace

void emit_outputs(const RobustnessReport& report, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    write_text(out_dir / "report.json", report.to_json().dump(2) + "\n");
    if (report.rows.empty())
        return;

    // Tables, one CSV per scenario family.
    const std::map<std::string, std::string> family = {
        {"none", "clean"},          {"shift", "geometric"}, {"rotation", "geometric"},
        {"noise", "noise"},         {"bias", "bias"},       {"data_fraction", "data_fraction"},
    };
    std::map<std::string, std::vector<const ReportRow*>> tables;
    for (const auto& r : report.rows)
        tables[family.at(r.scenario)].push_back(&r);
    for (const auto& [name, rows] : tables)
        write_text(out_dir / "tables" / (name + ".csv"), rows_csv(rows));

    // Severity-vs-metric curves per model and scenario.
    const std::map<std::string, std::string> severity_col = {{"shift", "shift_mm"},
                                                             {"rotation", "rotation_deg"},
                                                             {"noise", "sigma"},
                                                             {"bias", "bias_strength"},
                                                             {"data_fraction", "alpha"}};
    std::map<std::string, std::vector<const ReportRow*>> curves;
    for (const auto& r : report.rows)
        if (severity_col.count(r.scenario))
            curves[r.scenario].push_back(&r);
    for (const auto& [scenario, rows] : curves) {
        std::ostringstream os;
        os << "model," << severity_col.at(scenario) << ",ssim_mean,ssim_std,energy_err_q75\n";
        for (const auto* r : rows)
            os << r->model << ',' << format_number(r->severity_value) << ','
               << format_double17(r->ssim_mean) << ',' << format_double17(r->ssim_std) << ','
               << format_double17(r->energy_err_q75) << '\n';
        write_text(out_dir / "curves" / (scenario + ".csv"), os.str());
    }

    // Raw per-case records, one CSV per model.
    for (const auto& [model, records] : report.records_by_model)
        write_text(out_dir / "records" / (model + ".csv"), metric_records_csv(records));

    // DVH bands.
    for (const auto& agg : report.dvh) {
        std::ostringstream os;
        os << "dose_edge,gt_mean,gt_std";
        for (const auto& [model, mean] : agg.model_mean) {
            (void)mean;
            os << ',' << model;
        }
        os << '\n';
        for (size_t e = 0; e < agg.edges.size(); ++e) {
            os << format_number(agg.edges[e]) << ',' << format_double17(agg.gt_mean[e]) << ','
               << format_double17(agg.gt_std[e]);
            for (const auto& [model, mean] : agg.model_mean)
                os << ',' << format_double17(mean[e]);
            os << '\n';
        }
        write_text(out_dir / "dvh" / (agg.label + ".csv"), os.str());
    }
}

} // namespace fluencebench
