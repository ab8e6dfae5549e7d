// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

// cxrgaze command-line entry point.
//
// Exit codes: 0 success, 1 validation/configuration error, 2 missing
// dependency (checkpoint, manifest, config), 3 I/O error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cxrgaze/ablation.hpp"
#include "cxrgaze/checkpoint.hpp"
#include "cxrgaze/config.hpp"
#include "cxrgaze/data_pipeline.hpp"
#include "cxrgaze/errors.hpp"
#include "cxrgaze/evaluation.hpp"
#include "cxrgaze/log.hpp"
#include "cxrgaze/trainer.hpp"

namespace fs = std::filesystem;
using namespace cxrgaze;

namespace {

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::string manifest;
  std::string work_dir = "runs";
  std::optional<std::uint64_t> seed;
  std::size_t n = 64;
  std::string out;
  std::string split = "test";
  std::string baseline;
  std::string checkpoint;
  std::string init;
  std::string image;
  std::optional<int> class_index;
  std::vector<std::string> skip;
  bool quiet = false;
};

struct Settings {
  ModelConfig model;
  StageConfig stage;
};

Settings resolve_settings(const Options& o, Stage stage) {
  Settings s;
  s.stage.stage = stage;
  if (!o.config.empty()) load_config_file(o.config, s.model, s.stage);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string t) {
      t.erase(0, t.find_first_not_of(" \t"));
      t.erase(t.find_last_not_of(" \t") + 1);
      return t;
    };
    apply_setting(s.model, s.stage, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (o.seed) s.stage.seed = *o.seed;
  s.stage.stage = stage;
  s.model.validate();
  return s;
}

std::vector<ImageRecord> require_manifest(const Options& o) {
  if (o.manifest.empty()) throw ValidationError("--manifest is required");
  return load_manifest(o.manifest);
}

std::string stage_file(Stage s) { return std::string(to_string(s)) + ".ckpt"; }

int cmd_synth(const Options& o) {
  if (o.out.empty()) throw ValidationError("--out is required");
  const auto manifest = generate_synthetic_dataset(o.n, o.seed.value_or(0), o.out);
  std::cout << manifest.string() << '\n';
  return 0;
}

int cmd_stage(const Options& o, Stage stage) {
  const auto settings = resolve_settings(o, stage);
  const auto records = require_manifest(o);
  const fs::path work(o.work_dir);

  std::optional<Checkpoint> init;
  if (stage != Stage::S1a && !(stage == Stage::S1b && settings.stage.from_scratch)) {
    const Stage up = stage == Stage::S1b ? Stage::S1a : stage == Stage::S2 ? Stage::S1b : Stage::S2;
    const fs::path path = o.init.empty() ? work / stage_file(up) : fs::path(o.init);
    const bool optional_upstream = stage == Stage::S2 && !settings.model.salnet.use_backbone_fusion;
    if (fs::exists(path)) {
      init = load_checkpoint(path);
    } else if (!optional_upstream) {
      throw DependencyError("stage " + std::string(to_string(stage)) + " needs the stage " +
                            std::string(to_string(up)) + " checkpoint " + path.string() +
                            ", which does not exist");
    }
  }
  check_upstream(settings.stage, settings.model, init);

  const auto data = prepare_stage_data(records, settings.stage, settings.model);
  log::info("training on " + std::to_string(data.train.size()) + " images, validating on " +
            std::to_string(data.val.size()));
  auto result = run_stage(settings.stage, settings.model, data, init);
  fs::create_directories(work);
  const fs::path ckpt = o.out.empty() ? work / stage_file(stage) : fs::path(o.out);
  save_checkpoint(ckpt, result.checkpoint);
  const fs::path log_path = work / (std::string(to_string(stage)) + "_log.csv");
  write_training_log(log_path, result.log);
  std::cout << "checkpoint " << ckpt.string() << " (best epoch " << result.checkpoint.meta.epoch
            << ", " << result.checkpoint.meta.monitored << " "
            << result.checkpoint.meta.best_val_metric << ")\n";
  return 0;
}

fs::path default_checkpoint(const Options& o) {
  return o.checkpoint.empty() ? fs::path(o.work_dir) / stage_file(Stage::S3) : fs::path(o.checkpoint);
}

int cmd_eval(const Options& o) {
  const auto records = require_manifest(o);
  const auto split = parse_split(o.split);
  const auto ck = load_checkpoint(default_checkpoint(o));
  auto model = model_from_checkpoint(ck);
  const auto& cfg = model->config();
  const auto subset = select_split(records, split);
  if (subset.empty())
    throw ValidationError("manifest " + o.manifest + " has no " + o.split + " records");
  const auto data = load_tensor_dataset(subset, cfg.image_height, cfg.image_width);
  auto report = evaluate(model, capabilities_of(ck.meta), data,
                         std::string(to_string(ck.meta.stage)));
  if (!o.baseline.empty()) add_significance(report, read_report_json(o.baseline));
  const fs::path out = o.out.empty() ? fs::path(o.work_dir) : fs::path(o.out);
  fs::create_directories(out);
  write_report_json(out / "eval_report.json", report);
  write_per_image_csv(out / "eval_per_image.csv", report);
  std::cout << report_table({report});
  return 0;
}

torch::Tensor load_image_tensor(const std::string& path, const ModelConfig& cfg) {
  if (path.empty()) throw ValidationError("--image is required");
  if (!fs::exists(path)) throw DependencyError("image not found: " + path);
  const auto img = load_canonical_image(path, cfg.image_height, cfg.image_width);
  return torch::from_blob(const_cast<float*>(img.pixels.raw().data()),
                          {cfg.image_height, cfg.image_width}, torch::kFloat)
      .clone();
}

int cmd_predict(const Options& o) {
  const auto ck = load_checkpoint(default_checkpoint(o));
  const auto caps = capabilities_of(ck.meta);
  auto model = model_from_checkpoint(ck);
  const auto& cfg = model->config();
  const auto x = load_image_tensor(o.image, cfg).reshape({1, 1, cfg.image_height, cfg.image_width});

  const fs::path out = o.out.empty() ? fs::path(o.work_dir) / "predict" : fs::path(o.out);
  fs::create_directories(out);
  const std::string stem = fs::path(o.image).stem().string();
  nlohmann::json j;
  j["image_path"] = o.image;
  j["checkpoint_stage"] = std::string(to_string(ck.meta.stage));
  torch::Tensor probs, sal;
  if (caps.classifier == ClassifierHead::fusion) {
    auto full = predict_full(model, x);
    probs = full.probabilities;
    sal = full.saliency;
  } else {
    if (caps.classifier == ClassifierHead::backbone) probs = predict_backbone_probabilities(model, x);
    if (caps.saliency) sal = predict_saliency(model, x);
  }
  if (probs.defined()) {
    auto p = probs[0].to(torch::kDouble);
    std::vector<double> v(p.data_ptr<double>(), p.data_ptr<double>() + 3);
    j["probabilities"] = {{"normal", v[0]}, {"heart_failure", v[1]}, {"pneumonia", v[2]}};
    j["predicted_label"] = std::string(to_string(label_from_index(
        static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin()))));
  } else {
    j["probabilities"] = nullptr;
  }
  if (sal.defined()) {
    GridF grid(cfg.image_height, cfg.image_width);
    auto s = sal[0].contiguous();
    std::copy(s.data_ptr<float>(), s.data_ptr<float>() + s.numel(), grid.values().begin());
    const fs::path png = out / (stem + "_saliency.png");
    write_map_png(png, grid);
    j["saliency_png"] = png.string();
  }
  const fs::path jpath = out / (stem + "_prediction.json");
  std::ofstream js(jpath);
  if (!js) throw IoError("cannot write " + jpath.string());
  js << std::setw(2) << j << '\n';
  std::cout << jpath.string() << '\n';
  return 0;
}

int cmd_gradcam(const Options& o) {
  const fs::path path = o.checkpoint.empty() ? fs::path(o.work_dir) / stage_file(Stage::S1b)
                                             : fs::path(o.checkpoint);
  const auto ck = load_checkpoint(path);
  if (capabilities_of(ck.meta).classifier == ClassifierHead::none)
    throw ValidationError("checkpoint " + path.string() + " has no trained backbone classifier");
  auto model = model_from_checkpoint(ck);
  const auto& cfg = model->config();
  auto cam = gradcam(model, load_image_tensor(o.image, cfg), o.class_index);
  GridF grid(cfg.image_height, cfg.image_width);
  auto c = cam.contiguous();
  std::copy(c.data_ptr<float>(), c.data_ptr<float>() + c.numel(), grid.values().begin());
  const fs::path out = o.out.empty()
                           ? fs::path(o.work_dir) / (fs::path(o.image).stem().string() + "_gradcam.png")
                           : fs::path(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_map_png(out, grid);
  std::cout << out.string() << '\n';
  return 0;
}

int cmd_ablate(const Options& o) {
  const auto settings = resolve_settings(o, Stage::S1a);
  const auto records = require_manifest(o);
  auto options = default_ablation_options(settings.model, settings.stage);
  options.skip.insert(o.skip.begin(), o.skip.end());
  options.work_dir = fs::path(o.work_dir);
  options.eval_split = parse_split(o.split);
  fs::create_directories(*options.work_dir);
  const auto result = run_ablation(records, options);
  std::cout << result.table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cxrgaze: chest X-ray classification with gaze-saliency cooperative training"};
  app.require_subcommand(1);
  app.fallthrough();  // lets -q follow the verb
  Options o;
  app.add_flag("-q,--quiet", o.quiet, "Only print warnings and errors");

  const std::string keys = "\n" + config_keys_help();

  auto add_train_flags = [&](CLI::App* c) {
    c->add_option("--config", o.config, "Key-value config file");
    c->add_option("--set", o.sets, "Override a config key (key=value), repeatable");
    c->add_option("--seed", o.seed, "Seed (overrides config)");
    c->add_option("--work-dir", o.work_dir, "Directory for checkpoints, logs and reports")
        ->capture_default_str();
    c->footer(keys);
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with manifest");
  synth->add_option("--n", o.n, "Number of images")->capture_default_str();
  synth->add_option("--seed", o.seed, "Seed");
  synth->add_option("--out", o.out, "Output directory")->required();

  struct StageVerb {
    const char* name;
    Stage stage;
    const char* help;
  };
  const StageVerb stage_verbs[] = {
      {"stage1a", Stage::S1a, "Contrastive (triplet) pretraining of the backbone"},
      {"stage1b", Stage::S1b, "Classification finetuning of the backbone"},
      {"stage2", Stage::S2, "Saliency network training with the backbone frozen"},
      {"stage3", Stage::S3, "Fusion classifier training with everything else frozen"},
  };
  std::vector<std::pair<CLI::App*, Stage>> stage_cmds;
  for (const auto& v : stage_verbs) {
    auto* c = app.add_subcommand(v.name, v.help);
    add_train_flags(c);
    c->add_option("--manifest", o.manifest, "JSON-Lines manifest")->required();
    c->add_option("--init", o.init, "Upstream checkpoint (default: <work-dir>/<upstream>.ckpt)");
    c->add_option("--out", o.out, "Checkpoint path (default: <work-dir>/<stage>.ckpt)");
    stage_cmds.emplace_back(c, v.stage);
  }

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest split");
  eval->add_option("--manifest", o.manifest, "JSON-Lines manifest")->required();
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint (default: <work-dir>/S3.ckpt)");
  eval->add_option("--split", o.split, "train, val or test")->capture_default_str();
  eval->add_option("--baseline", o.baseline, "Baseline eval_report.json for paired t-tests");
  eval->add_option("--out", o.out, "Output directory (default: work dir)");
  eval->add_option("--work-dir", o.work_dir)->capture_default_str();
  eval->footer(keys);

  auto* predict = app.add_subcommand("predict", "Predict class probabilities and a saliency map");
  predict->add_option("--checkpoint", o.checkpoint, "Checkpoint (default: <work-dir>/S3.ckpt)");
  predict->add_option("--image", o.image, "Grayscale PNG")->required();
  predict->add_option("--out", o.out, "Output directory");
  predict->add_option("--work-dir", o.work_dir)->capture_default_str();
  predict->footer(keys);

  auto* cam = app.add_subcommand("gradcam", "GradCAM map of the backbone classifier");
  cam->add_option("--checkpoint", o.checkpoint, "Checkpoint (default: <work-dir>/S1b.ckpt)");
  cam->add_option("--image", o.image, "Grayscale PNG")->required();
  cam->add_option("--class", o.class_index, "Class index (default: predicted)");
  cam->add_option("--out", o.out, "Output PNG");
  cam->add_option("--work-dir", o.work_dir)->capture_default_str();
  cam->footer(keys);

  auto* ablate = app.add_subcommand("ablate", "Train and compare the ablation variants");
  add_train_flags(ablate);
  ablate->add_option("--manifest", o.manifest, "JSON-Lines manifest")->required();
  ablate->add_option("--split", o.split, "Evaluation split")->capture_default_str();
  ablate->add_option("--skip", o.skip, "Variant to skip (DNet201-CL, DNet201, full, Res_SE-UNet, UNet_S)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  if (o.quiet) log::threshold() = log::Level::warn;

  try {
    if (synth->parsed()) return cmd_synth(o);
    for (auto& [c, stage] : stage_cmds)
      if (c->parsed()) return cmd_stage(o, stage);
    if (eval->parsed()) return cmd_eval(o);
    if (predict->parsed()) return cmd_predict(o);
    if (cam->parsed()) return cmd_gradcam(o);
    if (ablate->parsed()) return cmd_ablate(o);
  } catch (const DependencyError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
