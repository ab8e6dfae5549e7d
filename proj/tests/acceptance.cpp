// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Training criteria use the desk profile
// (160x128 frame, narrower UNet, full DenseNet-201); see README.md.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <string>

#include "cxrgaze/ablation.hpp"
#include "cxrgaze/checkpoint.hpp"
#include "cxrgaze/data_pipeline.hpp"
#include "cxrgaze/errors.hpp"
#include "cxrgaze/evaluation.hpp"
#include "cxrgaze/log.hpp"
#include "cxrgaze/losses.hpp"
#include "cxrgaze/metrics.hpp"
#include "cxrgaze/saliency_net.hpp"
#include "cxrgaze/trainer.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace cxrgaze {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

ModelConfig desk_model_config() {
  ModelConfig m;
  m.image_height = 160;
  m.image_width = 128;
  m.salnet.channels = {16, 32, 64, 128, 256};
  m.salnet.fused_channels = 512;
  m.salnet.se_reduction = 8;
  return m;
}

// Collects named sub-checks and renders the first failures.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    ++total_;
    if (!ok && failed_.size() < 5) failed_.push_back(what);
    if (!ok) ++failures_;
  }
  void near(double got, double want, double tol, const std::string& what) {
    std::ostringstream s;
    s << what << " (got " << got << ", want " << want << " +- " << tol << ")";
    expect(std::abs(got - want) <= tol, s.str());
  }
  bool ok() const { return failures_ == 0; }
  std::string summary() const {
    std::ostringstream s;
    s << total_ - failures_ << "/" << total_ << " checks";
    for (const auto& f : failed_) s << "; " << f;
    return s.str();
  }

 private:
  int total_ = 0;
  int failures_ = 0;
  std::vector<std::string> failed_;
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failed = 0;

void criterion(int id, const std::string& title, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++g_failed;
  std::printf("criterion %2d  %s  %-34s %7.1f s  %s\n", id, o.pass ? "PASS" : "FAIL", title.c_str(),
              seconds_since(t0), o.detail.c_str());
  std::fflush(stdout);
}

double mean_kl(const torch::Tensor& predicted, const torch::Tensor& target) {
  auto p = predicted.to(torch::kDouble).contiguous();
  auto t = target.to(torch::kDouble).contiguous();
  const auto len = static_cast<std::size_t>(p[0].numel());
  double sum = 0;
  for (std::int64_t i = 0; i < p.size(0); ++i)
    sum += metrics::kl_divergence<double>({p.data_ptr<double>() + i * len, len},
                                          {t.data_ptr<double>() + i * len, len});
  return sum / static_cast<double>(p.size(0));
}

double train_accuracy(const torch::Tensor& probabilities, const torch::Tensor& labels) {
  return probabilities.argmax(1).eq(labels).to(torch::kDouble).mean().item<double>();
}

Outcome metric_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2026);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = std::uniform_int_distribution<int>(2, 50)(rng);
    std::vector<metrics::ClassScores> scores(n);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
      labels[i] = std::uniform_int_distribution<int>(0, 2)(rng);
      for (auto& v : scores[i]) v = std::uniform_int_distribution<int>(0, 9)(rng) / 9.0;
    }
    const auto got = metrics::multiclass_auc(scores, labels);
    for (int k = 0; k < 3; ++k) {
      std::vector<double> col(n);
      std::vector<int> pos(n);
      for (int i = 0; i < n; ++i) {
        col[i] = scores[i][k];
        pos[i] = labels[i] == k;
      }
      const auto want = testing::pairwise_auc(col, pos);
      if (want.has_value() != got.per_class[k].has_value()) return {false, "definedness differs"};
      if (want) worst = std::max(worst, std::abs(*want - *got.per_class[k]));
    }
  }
  const double secs = seconds_since(t0);
  std::ostringstream s;
  s << "max |auc - pairwise| = " << worst << " over 100 instances";
  return {worst <= 1e-12 && secs < 10, s.str()};
}

Outcome closed_form() {
  Checks c;
  auto row = [](std::vector<double> v) { return torch::tensor(v, torch::kDouble).unsqueeze(0); };
  auto span = [](const std::vector<double>& v) { return std::span<const double>(v); };

  // Triplet loss.
  c.near(losses::triplet_loss(row({1, 0}), row({1, 0}), row({0, 1})).item<double>(), 0, 0, "triplet satisfied");
  c.near(losses::triplet_loss(row({0.6, 0.8}), row({0.6, 0.8}), row({0.6, 0.8})).item<double>(), 0.2, 1e-12,
         "triplet collapse");
  c.near(losses::triplet_loss(row({0}), row({1}), row({2}), 0.2, false).item<double>(), 0, 0, "triplet 1-D a");
  c.near(losses::triplet_loss(row({0}), row({2}), row({1}), 0.2, false).item<double>(), 3.2, 1e-12,
         "triplet 1-D b");
  // Cross-entropy.
  for (double v : {-4.0, 0.0, 9.0})
    c.near(losses::cross_entropy(row({v, v, v}), torch::tensor({2}, torch::kLong)).item<double>(),
           std::log(3.0), 1e-6, "ce uniform");
  c.expect(losses::cross_entropy(row({20, 0, 0}), torch::tensor({0}, torch::kLong)).item<double>() < 1e-4,
           "ce saturation");
  c.near(losses::cross_entropy(row({1, 0, 0}), torch::tensor({0}, torch::kLong)).item<double>(),
         std::log(1 + 2 / std::exp(1.0)), 1e-12, "ce [1,0,0]");
  // KL loss.
  auto p3 = row({0.1, 0.3, 0.6});
  c.near(losses::kl_saliency_loss(p3, p3).item<double>(), 0, 1e-6, "kl identity");
  c.near(losses::kl_saliency_loss(row({0.25, 0.75}), row({0.5, 0.5})).item<double>(), 0.1438, 1e-4,
         "kl two-pixel toy");
  {
    const std::int64_t n = 640 * 512;
    auto uniform = torch::full({1, n}, 1.0 / n, torch::kDouble);
    auto delta = torch::zeros({1, n}, torch::kDouble);
    delta[0][12345] = 1.0;
    const double kl = losses::kl_saliency_loss(uniform, delta).item<double>();
    c.near(kl, -std::log(1.0 / n + metrics::kKlEpsilon), 1e-9, "kl delta vs uniform (exact)");
    c.near(kl, 12.7, 0.05, "kl delta vs uniform (about ln N)");
  }
  // AUC and accuracy.
  const std::vector<double> s4 = {0.9, 0.8, 0.3, 0.2};
  c.near(*metrics::binary_auc(s4, std::vector<int>{1, 1, 0, 0}, 1), 1.0, 0, "auc perfect");
  c.near(*metrics::binary_auc(std::vector<double>(4, 0.5), std::vector<int>{1, 0, 1, 0}, 1), 0.5, 0,
         "auc ties");
  c.near(*metrics::binary_auc(s4, std::vector<int>{1, 0, 1, 0}, 1), 0.75, 0, "auc 3 of 4");
  const std::vector<int> ten = {0, 1, 2, 0, 1, 2, 0, 1, 2, 0};
  auto eight = ten;
  eight[0] = 1;
  eight[1] = 2;
  c.near(metrics::accuracy(ten, ten), 1.0, 0, "acc identical");
  c.near(metrics::accuracy(std::vector<int>{1, 1}, std::vector<int>{0, 2}), 0.0, 0, "acc disjoint");
  c.near(metrics::accuracy(eight, ten), 0.8, 0, "acc 8 of 10");
  // Saliency metrics.
  const std::vector<double> t3 = {0.25, 0.25, 0.5};
  const auto same = metrics::saliency_metrics(span(t3), span(t3));
  c.near(same.kl, 0, 1e-6, "identity kl");
  c.near(same.pcc.value_or(-9), 1, 1e-6, "identity pcc");
  c.near(same.hs, 1, 1e-6, "identity hs");
  c.near(metrics::histogram_similarity(span({0.5, 0.5, 0, 0}), span({0, 0, 0.5, 0.5})), 0, 0, "hs disjoint");
  c.near(metrics::histogram_similarity(span({0.5, 0.5, 0}), span(t3)), 0.5, 0, "hs toy");
  c.near(metrics::pearson(span({1, 2, 3, 4}), span({2, 4, 6, 8})).value_or(-9), 1.0, 1e-12, "pcc linear");
  c.expect(!metrics::pearson(span({1, 1, 1}), span({1, 2, 3})), "pcc constant undefined");
  // Paired t-test.
  const std::vector<double> a = {1, 2, 3}, zero_diff = {1, 2, 3};
  const auto t_same = metrics::paired_ttest(a, zero_diff);
  c.expect(t_same.t == 0 && t_same.p == 1, "t-test a=b");
  const auto t_sym = metrics::paired_ttest(std::vector<double>{0, 2, 4}, std::vector<double>{2, 2, 2});
  c.expect(t_sym.t == 0 && t_sym.p == 1 && t_sym.dof == 2, "t-test differences [-2,0,2]");
  const auto t_deg = metrics::paired_ttest(std::vector<double>{0, 1, 2}, std::vector<double>{1, 2, 3});
  c.expect(t_deg.degenerate_variance && t_deg.p == 0, "t-test zero variance");
  return {c.ok(), c.summary()};
}

Outcome gradient_checks() {
  const auto t0 = Clock::now();
  const auto s = testing::gradient_check_losses(100, 2026);
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << "max rel err triplet " << s.triplet << ", ce " << s.cross_entropy << ", kl " << s.kl;
  return {s.triplet < 1e-4 && s.cross_entropy < 1e-4 && s.kl < 1e-4 && secs < 60, d.str()};
}

Outcome structural_normalization() {
  const ModelConfig m;  // default 640x512 frame and full UNet widths
  const int cb = m.backbone.feature_channels();
  double worst = 0;
  torch::NoGradGuard guard;
  // 50 random inputs spread over five independently initialized networks.
  for (int net_seed = 0; net_seed < 5; ++net_seed) {
    torch::manual_seed(100 + net_seed);
    SaliencyNet net(m.salnet, cb);
    net->eval();
    for (int batch = 0; batch < 5; ++batch) {
      auto img = torch::rand({2, 1, m.image_height, m.image_width});
      auto feat = torch::randn({2, cb, m.image_height / 32, m.image_width / 32});
      auto probs = net->forward(img, feat).probabilities.to(torch::kDouble);
      if (probs.min().item<double>() < 0) return {false, "negative probability"};
      worst = std::max(worst, (probs.sum({1, 2}) - 1).abs().max().item<double>());
    }
  }
  torch::manual_seed(7);
  SaliencyNet net(m.salnet, cb);
  net->eval();
  net->head()->weight.zero_();
  net->head()->bias.zero_();
  auto probs = net->forward(torch::rand({1, 1, m.image_height, m.image_width}),
                            torch::randn({1, cb, m.image_height / 32, m.image_width / 32}))
                   .probabilities.to(torch::kDouble);
  const double uniform_err = (probs - 1.0 / 327680.0).abs().max().item<double>();
  std::ostringstream d;
  d << "max |sum-1| " << worst << " over 50 inputs; zeroed head max |p - 1/327680| " << uniform_err;
  return {worst <= 1e-5 && uniform_err <= 1e-10, d.str()};
}

// Shared 16-image synthetic set (seed 0) in the desk frame.
struct DeskData {
  testing::TempDir dir;
  std::vector<ImageRecord> records;
  StageData data;
};

DeskData& desk16() {
  static DeskData* d = [] {
    auto* out = new DeskData();
    out->records = load_manifest(generate_synthetic_dataset(16, 0, out->dir.path() / "syn16"));
    StageConfig cfg;
    cfg.val_fraction = 0;
    out->data = prepare_stage_data(out->records, cfg, desk_model_config());
    return out;
  }();
  return *d;
}

StageConfig desk_stage(Stage stage, int epochs) {
  StageConfig s;
  s.stage = stage;
  s.epochs = epochs;
  s.patience = 0;
  s.val_fraction = 0;
  return s;
}

Outcome freeze_invariants() {
  auto& d = desk16();
  const auto m = desk_model_config();
  auto s1b_cfg = desk_stage(Stage::S1b, 1);
  s1b_cfg.from_scratch = true;
  const auto s1b = run_stage(s1b_cfg, m, d.data, std::nullopt);
  const auto s2 = run_stage(desk_stage(Stage::S2, 2), m, d.data, s1b.checkpoint);
  const auto s3 = run_stage(desk_stage(Stage::S3, 2), m, d.data, s2.checkpoint);
  const auto bb = state_digest(s1b.checkpoint.state, "backbone.");
  const bool s2_ok = state_digest(s2.checkpoint.state, "backbone.") == bb;
  const bool s3_ok = state_digest(s3.checkpoint.state, "backbone.") == bb &&
                     state_digest(s3.checkpoint.state, "salnet.") == state_digest(s2.checkpoint.state, "salnet.");
  const bool salnet_trained = state_digest(s2.checkpoint.state, "salnet.") !=
                              state_digest(s1b.checkpoint.state, "salnet.");
  std::ostringstream s;
  s << "S2 backbone digest " << (s2_ok ? "equal" : "CHANGED") << "; S3 backbone+salnet digests "
    << (s3_ok ? "equal" : "CHANGED") << "; S2 salnet " << (salnet_trained ? "updated" : "not updated");
  return {s2_ok && s3_ok && salnet_trained, s.str()};
}

Outcome desk_overfit() {
  const auto t0 = Clock::now();
  auto& d = desk16();
  const auto m = desk_model_config();
  const auto& train = d.data.train;

  auto s1b_cfg = desk_stage(Stage::S1b, 200);
  s1b_cfg.from_scratch = true;
  double s1b_acc = 0;
  StageHooks s1b_hooks;
  s1b_hooks.on_epoch_end = [&](const EpochLog&, CxrGazeModel& model) {
    s1b_acc = train_accuracy(predict_backbone_probabilities(model, train.images), train.labels);
    return s1b_acc == 1.0;
  };
  const auto s1b = run_stage(s1b_cfg, m, d.data, std::nullopt, s1b_hooks);

  StageData pairs{train.subset({0, 1, 2, 3, 4, 5, 6, 7}), d.data.val};
  double kl = std::numeric_limits<double>::infinity();
  StageHooks s2_hooks;
  s2_hooks.on_epoch_end = [&](const EpochLog&, CxrGazeModel& model) {
    kl = mean_kl(predict_saliency(model, pairs.train.images), pairs.train.saliency);
    return kl < 0.1;
  };
  const auto s2 = run_stage(desk_stage(Stage::S2, 600), m, pairs, s1b.checkpoint, s2_hooks);

  double s3_acc = 0;
  StageHooks s3_hooks;
  s3_hooks.on_epoch_end = [&](const EpochLog&, CxrGazeModel& model) {
    s3_acc = train_accuracy(predict_full(model, train.images).probabilities, train.labels);
    return s3_acc == 1.0;
  };
  const auto s3 = run_stage(desk_stage(Stage::S3, 200), m, d.data, s2.checkpoint, s3_hooks);

  const double secs = seconds_since(t0);
  std::ostringstream s;
  s << "S1b acc " << s1b_acc << " after " << s1b.log.size() << " ep; S2 mean KL " << kl << " after "
    << s2.log.size() << " ep; S3 acc " << s3_acc << " after " << s3.log.size() << " ep; total "
    << static_cast<int>(secs) << " s";
  return {s1b_acc == 1.0 && kl < 0.1 && s3_acc == 1.0 && secs < 15 * 60, s.str()};
}

Outcome cooperation() {
  const auto t0 = Clock::now();
  testing::TempDir dir;
  const auto records = load_manifest(generate_synthetic_dataset(256, 0, dir.path() / "syn256"));
  StageConfig base;
  auto options = default_ablation_options(desk_model_config(), base);
  options.stages[Stage::S1a].epochs = 1;
  options.stages[Stage::S1b].epochs = 6;
  options.stages[Stage::S2].epochs = 6;
  options.stages[Stage::S3].epochs = 30;
  options.skip = {"DNet201", "UNet_S"};
  const auto result = run_ablation(records, options);
  std::cout << result.table;
  const auto& full = result.reports.at("full");
  const auto& backbone = result.reports.at("DNet201-CL");
  const auto& alone = result.reports.at("Res_SE-UNet");
  const double auc_full = full.auc->macro.value();
  const double auc_backbone = backbone.auc->macro.value();
  const double kl_full = full.aggregates.at("kl").mean;
  const double kl_alone = alone.aggregates.at("kl").mean;
  const double secs = seconds_since(t0);
  std::ostringstream s;
  s << "macro AUC full " << auc_full << " vs S1b " << auc_backbone << "; KL full " << kl_full
    << " vs Res_SE-UNet " << kl_alone << "; " << static_cast<int>(secs) << " s";
  return {auc_full >= auc_backbone && kl_full <= kl_alone && secs < 30 * 60, s.str()};
}

Outcome pipeline_shapes() {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> side(64, 4096);
  std::uniform_real_distribution<float> value(0.0f, 65535.0f);
  for (int i = 0; i < 50; ++i) {
    GridF raw(side(rng), side(rng));
    for (float& v : raw.raw()) v = value(rng);
    const auto img = preprocess_image(raw);
    if (img.pixels.height() != 640 || img.pixels.width() != 512)
      return {false, "wrong output shape for input " + std::to_string(raw.height()) + "x" +
                         std::to_string(raw.width())};
    const auto [lo, hi] = std::minmax_element(img.pixels.raw().begin(), img.pixels.raw().end());
    if (*lo != 0.0f || *hi != 1.0f) return {false, "range is not exactly [0,1]"};
  }
  return {true, "50 random sizes in [64,4096] -> 640x512, min 0, max 1"};
}

Outcome determinism() {
  auto& d = desk16();
  auto cfg = desk_stage(Stage::S1b, 1);
  cfg.from_scratch = true;
  cfg.seed = 99;
  cfg.reproducible = true;
  const auto a = run_stage(cfg, desk_model_config(), d.data, std::nullopt);
  const auto b = run_stage(cfg, desk_model_config(), d.data, std::nullopt);
  const double la = a.log[0].train_loss, lb = b.log[0].train_loss;
  const double rel = std::abs(la - lb) / std::max(std::abs(la), 1e-12);
  const bool same_digest = state_digest(a.checkpoint.state) == state_digest(b.checkpoint.state);
  std::ostringstream s;
  s << "epoch-1 loss " << la << " vs " << lb << " (rel " << rel << "); checkpoint digests "
    << (same_digest ? "equal" : "differ");
  return {rel <= 1e-6 && same_digest, s.str()};
}

Outcome documented_reproduction() {
  std::ifstream in(CXRGAZE_README_PATH);
  if (!in) return {false, "README.md not found"};
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  for (const char* needle : {"0.925", "0.800", "0.706", "0.183", "0.576", "0.552", "cxrgaze ablate",
                             "cxrgaze eval"})
    if (text.find(needle) == std::string::npos)
      return {false, std::string("README lacks '") + needle + "'"};
  return {true, "documented only, not run here; README records the commands and reference targets"};
}

}  // namespace
}  // namespace cxrgaze

int main() {
  using namespace cxrgaze;
  log::threshold() = log::Level::warn;
  criterion(1, "metric oracle equivalence", metric_oracle);
  criterion(2, "closed-form metric checks", closed_form);
  criterion(3, "loss gradient checks", gradient_checks);
  criterion(4, "structural normalization", structural_normalization);
  criterion(5, "freeze invariants", freeze_invariants);
  criterion(6, "desk-scale overfit", desk_overfit);
  criterion(7, "cooperation surrogate", cooperation);
  criterion(8, "pipeline shape property", pipeline_shapes);
  criterion(9, "determinism", determinism);
  criterion(10, "full-data reproduction (docs)", documented_reproduction);
  std::printf("%d of 10 criteria failed\n", g_failed);
  return g_failed == 0 ? 0 : 1;
}
