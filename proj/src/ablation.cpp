// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

#include "cxrgaze/ablation.hpp"

#include <algorithm>
#include <fstream>

#include "cxrgaze/errors.hpp"
#include "cxrgaze/log.hpp"

namespace cxrgaze {
namespace {

StageConfig stage_settings(const AblationOptions& options, Stage stage) {
  auto it = options.stages.find(stage);
  if (it == options.stages.end())
    throw ConfigError("ablation: no settings for stage " + std::string(to_string(stage)));
  StageConfig cfg = it->second;
  cfg.stage = stage;
  return cfg;
}

class Runner {
 public:
  Runner(const AblationOptions& options, const StageData& data, AblationResult& result)
      : options_(options), data_(data), result_(result) {}

  Checkpoint train(const std::string& variant, StageConfig cfg, const ModelConfig& model,
                   const std::optional<Checkpoint>& init) {
    log::info("ablation: " + variant + " stage " + std::string(to_string(cfg.stage)));
    auto run = run_stage(cfg, model, data_, init);
    const std::string key = variant + "/" + std::string(to_string(cfg.stage));
    if (options_.work_dir) {
      const auto dir = *options_.work_dir / variant;
      std::filesystem::create_directories(dir);
      const std::string stem(to_string(cfg.stage));
      save_checkpoint(dir / (stem + ".ckpt"), run.checkpoint);
      write_training_log(dir / (stem + "_log.csv"), run.log);
    }
    result_.checkpoints[key] = run.checkpoint;
    return run.checkpoint;
  }

  void evaluate_variant(const std::string& variant, const Checkpoint& ck,
                        const TensorDataset& test) {
    auto model = model_from_checkpoint(ck);
    auto report = evaluate(model, capabilities_of(ck.meta), test, variant, options_.eval_batch_size);
    result_.reports[variant] = std::move(report);
  }

 private:
  const AblationOptions& options_;
  const StageData& data_;
  AblationResult& result_;
};

}  // namespace

AblationOptions default_ablation_options(const ModelConfig& model, const StageConfig& base) {
  AblationOptions o;
  o.model = model;
  for (Stage s : {Stage::S1a, Stage::S1b, Stage::S2, Stage::S3}) {
    StageConfig c = base;
    c.stage = s;
    o.stages[s] = c;
  }
  o.eval_batch_size = base.batch_size;
  return o;
}

AblationResult run_ablation(const std::vector<ImageRecord>& manifest, const AblationOptions& options) {
  for (const auto& s : options.skip)
    if (std::find(ablation_variants().begin(), ablation_variants().end(), s) == ablation_variants().end())
      throw ConfigError("ablation: unknown variant '" + s + "'");
  auto wants = [&](const std::string& v) { return !options.skip.count(v); };

  const auto test_records = select_split(manifest, options.eval_split);
  if (test_records.empty())
    throw ValidationError("ablation: manifest has no " + std::string(to_string(options.eval_split)) +
                          " records");
  const StageData data = prepare_stage_data(manifest, stage_settings(options, Stage::S1a), options.model);
  const TensorDataset test =
      load_tensor_dataset(test_records, options.model.image_height, options.model.image_width);

  AblationResult result;
  Runner runner(options, data, result);

  if (wants("DNet201-CL") || wants("full")) {
    auto s1a = runner.train("DNet201-CL", stage_settings(options, Stage::S1a), options.model, std::nullopt);
    auto s1b = runner.train("DNet201-CL", stage_settings(options, Stage::S1b), options.model, s1a);
    if (wants("DNet201-CL")) runner.evaluate_variant("DNet201-CL", s1b, test);
    if (wants("full")) {
      ModelConfig m = options.model;
      m.salnet.use_backbone_fusion = true;
      auto s2 = runner.train("full", stage_settings(options, Stage::S2), m, s1b);
      auto s3 = runner.train("full", stage_settings(options, Stage::S3), m, s2);
      runner.evaluate_variant("full", s3, test);
    }
  }
  if (wants("DNet201")) {
    auto cfg = stage_settings(options, Stage::S1b);
    cfg.from_scratch = true;
    auto s1b = runner.train("DNet201", cfg, options.model, std::nullopt);
    runner.evaluate_variant("DNet201", s1b, test);
  }
  for (const std::string v : {"Res_SE-UNet", "UNet_S"}) {
    if (!wants(v)) continue;
    ModelConfig m = options.model;
    m.salnet.use_backbone_fusion = false;
    m.salnet.use_res_se = v == "Res_SE-UNet";
    auto s2 = runner.train(v, stage_settings(options, Stage::S2), m, std::nullopt);
    runner.evaluate_variant(v, s2, test);
  }

  if (result.reports.count("full")) {
    auto& full = result.reports["full"];
    for (const std::string b : {"DNet201", "DNet201-CL", "Res_SE-UNet", "UNet_S"})
      if (result.reports.count(b)) add_significance(full, result.reports[b]);
  }

  std::vector<EvalReport> ordered;
  for (const auto& v : ablation_variants())
    if (result.reports.count(v)) ordered.push_back(result.reports[v]);
  result.table = report_table(ordered);

  if (options.work_dir) {
    for (const auto& r : ordered) {
      write_report_json(*options.work_dir / (r.name + "_report.json"), r);
      write_per_image_csv(*options.work_dir / (r.name + "_per_image.csv"), r);
    }
    std::ofstream out(*options.work_dir / "ablation_table.txt");
    if (!out) throw IoError("cannot write " + (*options.work_dir / "ablation_table.txt").string());
    out << result.table;
  }
  return result;
}

}  // namespace cxrgaze
