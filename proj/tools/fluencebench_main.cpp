// fluencebench CLI: generate phantom datasets, train the two-stage models,
// run stress scenarios, and re-aggregate stored metric records.

#include <filesystem>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fluencebench/errors.hpp"
#include "fluencebench/harness.hpp"

namespace fb = fluencebench;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

int cmd_gen(uint64_t seed, int cases, const std::string& out) {
    fb::ExperimentConfig cfg;
    cfg.seed = seed;
    cfg.phantom_cases = cases;
    cfg.validate();
    const fb::Dataset ds = fb::load_or_generate_dataset(cfg);
    fb::write_dataset(ds, out);
    std::cout << "wrote " << ds.cases.size() << " cases to " << out << " (train "
              << ds.split.train.size() << ", val " << ds.split.val.size() << ", test "
              << ds.split.test.size() << ")\n";
    return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& stage_str) {
    const fb::ExperimentConfig cfg = fb::ExperimentConfig::load(config_path);
    const fb::Stage stage = stage_str == "dose" ? fb::Stage::Dose : fb::Stage::Fluence;
    const fb::Dataset ds = fb::load_or_generate_dataset(cfg);

    for (const auto& model_name : cfg.models) {
        const fb::ModelParams* dose_params = nullptr;
        fb::ModelParams dose_loaded;
        if (stage == fb::Stage::Fluence) {
            const fs::path dose_dir = fs::path(cfg.out_dir) / "checkpoints" / model_name / "dose";
            dose_loaded = fb::load_checkpoint(dose_dir);
            dose_params = &dose_loaded;
        }
        const fb::TrainResult result =
            fb::train_stage(cfg, ds, ds.split.train, model_name, stage, dose_params);
        const fs::path ckpt_dir =
            fs::path(cfg.out_dir) / "checkpoints" / model_name / fb::stage_name(stage);
        fb::save_checkpoint(result.params, ckpt_dir);
        std::cout << model_name << "/" << fb::stage_name(stage)
                  << ": first-epoch loss " << result.epoch_losses.front()
                  << ", final-epoch loss " << result.epoch_losses.back() << ", checkpoint "
                  << ckpt_dir.string() << "\n";
    }
    return kExitOk;
}

int cmd_stress(const std::string& config_path, const std::string& checkpoint_dir,
               const std::string& out) {
    const fb::ExperimentConfig cfg = fb::ExperimentConfig::load(config_path);
    const fb::Dataset ds = fb::load_or_generate_dataset(cfg);

    const fs::path base = checkpoint_dir.empty()
                              ? fs::path(cfg.out_dir) / "checkpoints"
                              : fs::path(checkpoint_dir);
    std::map<std::string, fb::TwoStageModel> models;
    for (const auto& model_name : cfg.models) {
        fb::TwoStageModel m;
        m.dose = fb::load_checkpoint(base / model_name / "dose");
        m.fluence = fb::load_checkpoint(base / model_name / "fluence");
        m.ct_window_lo = cfg.ct_window_lo;
        m.ct_window_hi = cfg.ct_window_hi;
        models.emplace(model_name, std::move(m));
    }

    const fb::RobustnessReport report = fb::run_scenarios(cfg, ds, models);
    fb::emit_outputs(report, out.empty() ? fs::path(cfg.out_dir) / "stress" : fs::path(out));
    std::cout << "report rows: " << report.rows.size() << "\n";
    return kExitOk;
}

int cmd_report(const std::string& records_dir, const std::string& out) {
    fb::RobustnessReport report;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(records_dir))
        if (entry.path().extension() == ".csv")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw fb::ConfigError("report: no record CSVs in " + records_dir);
    for (const auto& path : files) {
        std::ifstream in(path, std::ios::binary);
        std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        report.records_by_model[path.stem().string()] = fb::metric_records_from_csv(content);
    }
    report.rows = fb::summarize(report.records_by_model);
    report.provenance["source"] = "reaggregated from " + records_dir;
    fb::emit_outputs(report, out);
    std::cout << "report rows: " << report.rows.size() << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robustness stress testing for two-stage fluence-map prediction"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen", "Generate a phantom case directory");
    uint64_t gen_seed = 1234;
    int gen_cases = 200;
    std::string gen_out = "cases";
    gen->add_option("--seed", gen_seed, "Base seed");
    gen->add_option("--cases", gen_cases, "Number of cases");
    gen->add_option("--out", gen_out, "Output directory")->required();

    auto* train = app.add_subcommand("train", "Train one stage of every configured model");
    std::string train_config, train_stage;
    train->add_option("--config", train_config, "Experiment config JSON")->required();
    train->add_option("--stage", train_stage, "dose or fluence")
        ->required()
        ->check(CLI::IsMember({"dose", "fluence"}));

    auto* stress = app.add_subcommand("stress", "Run the stress scenarios against checkpoints");
    std::string stress_config, stress_ckpt, stress_out;
    stress->add_option("--config", stress_config, "Experiment config JSON")->required();
    stress->add_option("--checkpoint", stress_ckpt, "Checkpoint root (default <out_dir>/checkpoints)");
    stress->add_option("--out", stress_out, "Report directory (default <out_dir>/stress)");

    auto* rep = app.add_subcommand("report", "Re-aggregate stored metric records");
    std::string rep_records, rep_out;
    rep->add_option("--records", rep_records, "Directory of per-model record CSVs")->required();
    rep->add_option("--out", rep_out, "Report directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return cmd_gen(gen_seed, gen_cases, gen_out);
        if (train->parsed())
            return cmd_train(train_config, train_stage);
        if (stress->parsed())
            return cmd_stress(stress_config, stress_ckpt, stress_out);
        if (rep->parsed())
            return cmd_report(rep_records, rep_out);
    } catch (const fb::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const fb::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
