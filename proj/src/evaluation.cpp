// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

#include "cxrgaze/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

#include "cxrgaze/errors.hpp"
#include "cxrgaze/log.hpp"

namespace cxrgaze {
namespace {

using nlohmann::json;

bool lineage_contains(const CheckpointMeta& meta, std::string_view stage) {
  std::stringstream ss(meta.lineage);
  std::string part;
  while (std::getline(ss, part, '>'))
    if (part == stage) return true;
  return false;
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

std::string fmt(const std::optional<double>& v, int precision = 3) {
  if (!v) return "-";
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << *v;
  return s.str();
}

const char* const kSaliencyMetrics[] = {"kl", "pcc", "hs"};

}  // namespace

EvalCapabilities capabilities_of(const CheckpointMeta& meta) {
  EvalCapabilities caps;
  switch (meta.stage) {
    case Stage::S1a: break;
    case Stage::S1b: caps.classifier = ClassifierHead::backbone; break;
    case Stage::S2:
      caps.saliency = true;
      if (lineage_contains(meta, "S1b")) caps.classifier = ClassifierHead::backbone;
      break;
    case Stage::S3:
      caps.saliency = true;
      caps.classifier = ClassifierHead::fusion;
      break;
  }
  return caps;
}

EvalReport evaluate(CxrGazeModel& model, const EvalCapabilities& caps, const TensorDataset& data,
                    const std::string& name, int batch_size) {
  if (caps.classifier == ClassifierHead::none && !caps.saliency)
    throw ValidationError("model '" + name + "' has neither a trained classifier nor a saliency network");
  if (data.empty()) throw ValidationError("no records to evaluate for '" + name + "'");
  const bool score_saliency = caps.saliency && data.saliency.defined();
  if (caps.saliency && !data.saliency.defined())
    log::warn("evaluation of '" + name + "': records lack saliency maps, saliency metrics skipped");

  torch::Tensor probs, maps;
  if (caps.classifier == ClassifierHead::fusion) {
    auto full = predict_full(model, data.images, batch_size);
    probs = full.probabilities;
    maps = full.saliency;
  } else {
    if (caps.classifier == ClassifierHead::backbone)
      probs = predict_backbone_probabilities(model, data.images, batch_size);
    if (score_saliency) maps = predict_saliency(model, data.images, batch_size);
  }

  EvalReport report;
  report.name = name;
  const auto n = static_cast<std::size_t>(data.size());
  std::vector<metrics::ClassScores> scores;
  std::vector<int> labels, predictions;
  auto probs_d = probs.defined() ? probs.to(torch::kDouble).contiguous() : probs;
  for (std::size_t i = 0; i < n; ++i) {
    ImageEval e;
    e.image_path = data.records[i].image_path.string();
    e.true_label = index_of(data.records[i].label);
    labels.push_back(e.true_label);
    if (probs_d.defined()) {
      const double* p = probs_d.data_ptr<double>() + 3 * i;
      metrics::ClassScores s{p[0], p[1], p[2]};
      e.probabilities = s;
      e.pred_label = static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
      scores.push_back(s);
      predictions.push_back(*e.pred_label);
    }
    if (score_saliency) {
      auto pred = maps[static_cast<std::int64_t>(i)].contiguous();
      auto target = data.saliency[static_cast<std::int64_t>(i)].contiguous();
      const auto len = static_cast<std::size_t>(pred.numel());
      e.saliency = metrics::saliency_metrics(
          std::span<const float>(pred.data_ptr<float>(), len),
          std::span<const float>(target.data_ptr<float>(), len));
    }
    report.images.push_back(std::move(e));
  }
  if (!scores.empty()) {
    report.accuracy = metrics::accuracy(predictions, labels);
    if (n >= 2) {
      report.auc = metrics::multiclass_auc(scores, labels);
      for (int k = 0; k < 3; ++k)
        if (!report.auc->per_class[k])
          log::warn("evaluation of '" + name + "': class " +
                    std::string(to_string(label_from_index(k))) +
                    " has no positives or no negatives; its AUC is undefined and left out of the macro");
    }
  }
  report.aggregates = saliency_aggregates(report.images);
  return report;
}

std::map<std::string, metrics::MeanStd> saliency_aggregates(const std::vector<ImageEval>& images) {
  std::map<std::string, metrics::MeanStd> out;
  std::vector<double> kl, pcc, hs;
  for (const auto& e : images) {
    if (!e.saliency) continue;
    kl.push_back(e.saliency->kl);
    hs.push_back(e.saliency->hs);
    if (e.saliency->pcc) pcc.push_back(*e.saliency->pcc);
  }
  if (!kl.empty()) {
    out["kl"] = metrics::mean_std(kl);
    out["hs"] = metrics::mean_std(hs);
    out["pcc"] = metrics::mean_std(pcc);
  }
  return out;
}

std::map<std::string, double> per_image_metric(const EvalReport& report, const std::string& metric) {
  std::map<std::string, double> out;
  for (const auto& e : report.images) {
    std::optional<double> v;
    if (metric == "p_true") {
      if (e.probabilities) v = (*e.probabilities)[static_cast<std::size_t>(e.true_label)];
    } else if (e.saliency) {
      if (metric == "kl") v = e.saliency->kl;
      else if (metric == "hs") v = e.saliency->hs;
      else if (metric == "pcc") v = e.saliency->pcc;
      else throw ValidationError("unknown per-image metric '" + metric + "'");
    }
    if (v) out[e.image_path] = *v;
  }
  return out;
}

void add_significance(EvalReport& report, const EvalReport& baseline) {
  for (const std::string metric : {"p_true", "kl", "pcc", "hs"}) {
    const auto a = per_image_metric(report, metric);
    const auto b = per_image_metric(baseline, metric);
    std::vector<double> va, vb;
    for (const auto& [path, v] : a) {
      auto it = b.find(path);
      if (it == b.end()) continue;
      va.push_back(v);
      vb.push_back(it->second);
    }
    if (va.size() < 2) continue;
    report.significance.push_back({metric, baseline.name, metrics::paired_ttest(va, vb), va.size()});
  }
}

void write_report_json(const std::filesystem::path& path, const EvalReport& report) {
  json j;
  j["name"] = report.name;
  if (report.auc) {
    json per = json::array();
    for (const auto& v : report.auc->per_class) per.push_back(opt(v));
    j["per_class_auc"] = per;
    j["macro_auc"] = opt(report.auc->macro);
  } else {
    j["per_class_auc"] = nullptr;
    j["macro_auc"] = nullptr;
  }
  j["accuracy"] = opt(report.accuracy);
  json agg = json::object();
  for (const auto& [k, v] : report.aggregates)
    agg[k] = {{"mean", v.mean}, {"std", v.std}, {"n", v.n}};
  j["aggregates"] = agg;
  json images = json::array();
  for (const auto& e : report.images) {
    json r = {{"image_path", e.image_path}, {"true_label", e.true_label}};
    r["pred_label"] = e.pred_label ? json(*e.pred_label) : json(nullptr);
    r["probabilities"] = e.probabilities ? json(*e.probabilities) : json(nullptr);
    if (e.saliency)
      r["saliency"] = {{"kl", e.saliency->kl}, {"pcc", opt(e.saliency->pcc)}, {"hs", e.saliency->hs}};
    else
      r["saliency"] = nullptr;
    images.push_back(r);
  }
  j["images"] = images;
  json sig = json::array();
  for (const auto& s : report.significance) {
    // JSON has no infinity; degenerate t values are written as null with the flag set.
    sig.push_back({{"metric", s.metric},
                   {"baseline", s.baseline},
                   {"t", std::isfinite(s.test.t) ? json(s.test.t) : json(nullptr)},
                   {"dof", s.test.dof},
                   {"p", s.test.p},
                   {"degenerate_variance", s.test.degenerate_variance},
                   {"pairs", s.pairs}});
  }
  j["significance"] = sig;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report " + path.string());
  out << std::setw(2) << j << '\n';
}

EvalReport read_report_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DependencyError("report not found: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("report " + path.string() + ": " + e.what());
  }
  EvalReport r;
  r.name = j.at("name").get<std::string>();
  if (!j.at("per_class_auc").is_null()) {
    metrics::AucReport auc;
    for (int k = 0; k < 3; ++k) auc.per_class[k] = opt_from(j["per_class_auc"][k]);
    auc.macro = opt_from(j["macro_auc"]);
    r.auc = auc;
  }
  r.accuracy = opt_from(j.at("accuracy"));
  for (const auto& im : j.at("images")) {
    ImageEval e;
    e.image_path = im.at("image_path").get<std::string>();
    e.true_label = im.at("true_label").get<int>();
    if (!im.at("pred_label").is_null()) e.pred_label = im["pred_label"].get<int>();
    if (!im.at("probabilities").is_null()) e.probabilities = im["probabilities"].get<metrics::ClassScores>();
    if (!im.at("saliency").is_null()) {
      const auto& s = im["saliency"];
      e.saliency = metrics::SaliencyScores{s.at("kl").get<double>(), opt_from(s.at("pcc")),
                                           s.at("hs").get<double>()};
    }
    r.images.push_back(std::move(e));
  }
  r.aggregates = saliency_aggregates(r.images);
  return r;
}

void write_per_image_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write per-image records " + path.string());
  out << "image_path,kl,pcc,hs,true_label,pred_label,p0,p1,p2\n";
  out << std::setprecision(10);
  for (const auto& e : report.images) {
    out << e.image_path << ',';
    if (e.saliency) {
      out << e.saliency->kl << ',';
      if (e.saliency->pcc) out << *e.saliency->pcc;
      out << ',' << e.saliency->hs;
    } else {
      out << ",,";
    }
    out << ',' << e.true_label << ',';
    if (e.pred_label) out << *e.pred_label;
    for (int k = 0; k < 3; ++k) {
      out << ',';
      if (e.probabilities) out << (*e.probabilities)[static_cast<std::size_t>(k)];
    }
    out << '\n';
  }
}

std::string report_table(const std::vector<EvalReport>& reports) {
  std::ostringstream t;
  t << std::left << std::setw(14) << "model" << std::setw(8) << "AUC" << std::setw(8) << "ACC"
    << std::setw(8) << "AUC-N" << std::setw(8) << "AUC-HF" << std::setw(8) << "AUC-P"
    << std::setw(16) << "KL" << std::setw(16) << "PCC" << std::setw(16) << "HS" << '\n';
  for (const auto& r : reports) {
    t << std::setw(14) << r.name;
    t << std::setw(8) << fmt(r.auc ? r.auc->macro : std::nullopt)
      << std::setw(8) << fmt(r.accuracy);
    for (int k = 0; k < 3; ++k) t << std::setw(8) << fmt(r.auc ? r.auc->per_class[k] : std::nullopt);
    for (const char* m : kSaliencyMetrics) {
      auto it = r.aggregates.find(m);
      std::string cell = "-";
      if (it != r.aggregates.end() && it->second.n > 0)
        cell = fmt(it->second.mean) + " +- " + fmt(it->second.std);
      t << std::setw(16) << cell;
    }
    t << '\n';
  }
  bool header = false;
  for (const auto& r : reports)
    for (const auto& s : r.significance) {
      if (!header) {
        t << "\npaired t-tests (two-sided)\n";
        header = true;
      }
      char line[256];
      std::snprintf(line, sizeof line, "  %-12s vs %-12s %-7s t=%-10.4g dof=%-4zu p=%.4g%s\n",
                    r.name.c_str(), s.baseline.c_str(), s.metric.c_str(), s.test.t, s.test.dof,
                    s.test.p, s.test.degenerate_variance ? " (zero-variance differences)" : "");
      t << line;
    }
  return t.str();
}

torch::Tensor gradcam(CxrGazeModel& model, const torch::Tensor& image,
                      std::optional<int> class_index) {
  if (image.dim() != 2) throw ShapeError("gradcam expects a single [H,W] image");
  model->eval();
  const auto h = image.size(0);
  const auto w = image.size(1);
  torch::Tensor activations;
  {
    torch::NoGradGuard guard;
    activations = model->backbone->final(image.reshape({1, 1, h, w}));
  }
  activations.requires_grad_(true);
  auto logits = model->cls_head(activations.mean({2, 3}));
  const int k = class_index ? *class_index : static_cast<int>(logits.argmax(1).item<std::int64_t>());
  if (k < 0 || k >= logits.size(1))
    throw ValidationError("gradcam: class index " + std::to_string(k) + " out of range");
  auto grad = torch::autograd::grad({logits[0][k]}, {activations}, {}, false, false, true)[0];
  if (!grad.defined()) grad = torch::zeros_like(activations);
  torch::NoGradGuard guard;
  const auto weights = grad.mean({2, 3}, true);
  auto cam = torch::relu((weights * activations).sum(1, true));
  cam = torch::nn::functional::interpolate(
      cam, torch::nn::functional::InterpolateFuncOptions()
               .size(std::vector<std::int64_t>{h, w})
               .mode(torch::kBilinear)
               .align_corners(false));
  cam = cam.reshape({h, w}).clamp_min(0);
  const double peak = cam.max().item<double>();
  return peak > 0 ? cam / peak : cam;
}

}  // namespace cxrgaze
