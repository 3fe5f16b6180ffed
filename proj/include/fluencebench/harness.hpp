#pragma once
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fluencebench/metrics.hpp"
#include "fluencebench/model.hpp"
#include "fluencebench/phantom.hpp"

namespace fluencebench {

// Which stress families to run and at which severities.
struct ScenarioGrid {
    bool geometric = true;
    bool noise = true;
    bool bias = true;
    bool data_fraction = true;
    std::vector<double> shifts_mm{3.0, 5.0};
    std::vector<double> rotations_deg{2.0, 5.0};
    std::vector<double> sigmas{0.05, 0.10, 0.15, 0.20};
    std::vector<std::string> bias_levels{"mild", "severe"};
    std::vector<double> alphas{0.25, 0.50, 0.75, 1.0};
};

struct ExperimentConfig {
    // dataset: either a case directory with a manifest, or generated cases
    std::string case_dir;
    int phantom_cases = 200;
    PhantomConfig phantom;
    double train_frac = 0.8;
    double val_frac = 0.1;

    // models (one per attention mode)
    std::vector<std::string> models{"global", "windowed"};
    int embed_dim = 16;
    int heads = 2;
    int window = 4;
    int patch = 4;         // dose stage
    int fluence_patch = 2; // fluence maps carry finer modulation detail
    float ct_window_lo = -160.0f;
    float ct_window_hi = 240.0f;

    // training
    double lr = 1e-4;
    int batch = 16;
    int epochs = 30;
    FarWeights fluence_weights{1.0, 0.5, 0.1, 0.01};
    FarWeights dose_weights{1.0, 0.5, 0.0, 0.0};

    ScenarioGrid scenarios;
    uint64_t seed = 1234;
    std::string out_dir = "out";

    void validate() const;
    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::filesystem::path& path);
    std::string config_hash() const;
};

struct Dataset {
    std::vector<CaseRecord> cases;
    std::map<std::string, int> index;
    DatasetSplit split;

    const CaseRecord& by_id(const std::string& id) const;
};

Dataset load_or_generate_dataset(const ExperimentConfig& cfg);
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

enum class Stage { Dose, Fluence };
std::string stage_name(Stage s);

struct TrainResult {
    ModelParams params;
    std::vector<double> epoch_losses;
};

// Trains one stage of one model on the given training ids. The fluence
// stage regresses ground-truth fluence from projections of the *trained*
// dose stage's predictions, so `dose_params` is required there.
TrainResult train_stage(const ExperimentConfig& cfg, const Dataset& ds,
                        const std::vector<std::string>& train_ids, const std::string& model_name,
                        Stage stage, const ModelParams* dose_params,
                        const std::string& run_tag = "");

ModelConfig dose_model_config(const ExperimentConfig& cfg, const Dataset& ds,
                              const std::string& model_name);
ModelConfig fluence_model_config(const ExperimentConfig& cfg, const Dataset& ds,
                                 const std::string& model_name);

struct ReportRow {
    std::string model;
    std::string scenario; // none | shift | rotation | noise | bias | data_fraction
    std::string severity;
    double severity_value = 0.0;
    int n = 0;
    double ssim_mean = 0.0;
    double ssim_std = 0.0;
    double energy_err_q75 = 0.0;
    double wilcoxon_p = 1.0;
};

struct DvhAggregate {
    std::string label; // e.g. "bias_mild"
    std::string roi;
    std::vector<double> edges;
    std::vector<double> gt_mean;
    std::vector<double> gt_std;
    std::map<std::string, std::vector<double>> model_mean;
};

struct RobustnessReport {
    nlohmann::json provenance;
    std::vector<ReportRow> rows;
    std::map<std::string, std::vector<MetricRecord>> records_by_model;
    std::vector<DvhAggregate> dvh;

    nlohmann::json to_json() const;
};

// Deterministic aggregation: per (model, scenario, severity) mean/std SSIM,
// type-7 Q75 of the energy error, and the paired signed-rank p of per-case
// SSIM against the same model's unperturbed baseline.
std::vector<ReportRow> summarize(const std::map<std::string, std::vector<MetricRecord>>& records_by_model);

// Runs every configured scenario for every trained model over the held-out
// test set. Perturbations touch model inputs only; metrics always compare
// against unperturbed ground truth. The data-fraction scenario retrains on
// nested subsets and evaluates clean.
RobustnessReport run_scenarios(const ExperimentConfig& cfg, const Dataset& ds,
                               const std::map<std::string, TwoStageModel>& models);

// report.json + tables/*.csv + curves/*.csv + dvh/*.csv + records/*.csv.
// Re-running on the same report is byte identical. An empty report writes
// report.json only.
void emit_outputs(const RobustnessReport& report, const std::filesystem::path& out_dir);

} // namespace fluencebench
