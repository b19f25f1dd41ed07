#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "deepglioma/eval/experiment.hpp"

namespace deepglioma::eval {

/// One arm evaluated under one seed.
struct ArmRun {
  std::uint64_t seed = 0;
  std::string dataset_hash;
  Evaluation evaluation;
};

struct Arm {
  std::string name;
  std::vector<ArmRun> runs;
};

struct Ablation {
  std::string name;
  Arm expected_better, expected_worse;
};

struct Summary {
  double mean = 0.0, sd = 0.0;  // sd: sample standard deviation, 0 for a single run
};

inline Summary summarize(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("summarize: no values");
  Summary s;
  for (double x : v) s.mean += x / static_cast<double>(v.size());
  if (v.size() > 1) {
    for (double x : v) s.sd += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(s.sd / static_cast<double>(v.size() - 1));
  }
  return s;
}

inline std::vector<double> metric_values(const Arm& a, double MetricReport::*field) {
  std::vector<double> v;
  for (const auto& r : a.runs) v.push_back(r.evaluation.report.*field);
  return v;
}

/// Arms of one ablation must share the dataset.
inline void require_same_dataset(const std::vector<const Arm*>& arms) {
  std::string ref;
  for (const Arm* a : arms)
    for (const auto& r : a->runs) {
      if (ref.empty()) ref = r.dataset_hash;
      if (r.dataset_hash != ref) {
        throw std::invalid_argument("ablation: arm " + a->name + " seed " + std::to_string(r.seed) + " used dataset " +
                                    r.dataset_hash + ", expected " + ref);
      }
    }
}

inline bool direction_holds(const Ablation& a) {
  return summarize(metric_values(a.expected_better, &MetricReport::mAUC)).mean >=
         summarize(metric_values(a.expected_worse, &MetricReport::mAUC)).mean;
}

inline nlohmann::json arm_json(const Arm& a) {
  static const std::vector<std::pair<const char*, double MetricReport::*>> fields{
      {"mAUC", &MetricReport::mAUC}, {"mAcc", &MetricReport::mAcc}, {"mAP", &MetricReport::mAP},
      {"SubAcc", &MetricReport::SubAcc}, {"ebF1", &MetricReport::ebF1}, {"micF1", &MetricReport::micF1}};
  nlohmann::json runs = nlohmann::json::array(), summary = nlohmann::json::object();
  for (const auto& r : a.runs) {
    runs.push_back({{"seed", r.seed},
                    {"metrics", r.evaluation.report},
                    {"subgroup_accuracy", r.evaluation.subgroup_accuracy},
                    {"validation_patients", r.evaluation.patients}});
  }
  for (const auto& [name, f] : fields) {
    const Summary s = summarize(metric_values(a, f));
    summary[name] = {{"mean", s.mean}, {"sd", s.sd}};
  }
  return {{"name", a.name}, {"runs", runs}, {"summary", summary}};
}

inline nlohmann::json ablation_json(const Ablation& a) {
  require_same_dataset({&a.expected_better, &a.expected_worse});
  return {{"name", a.name},
          {"arms", {arm_json(a.expected_better), arm_json(a.expected_worse)}},
          {"metric", "mAUC"},
          {"expected", a.expected_better.name + " >= " + a.expected_worse.name},
          {"holds", direction_holds(a)}};
}

struct AblationTable {
  std::string config_hash, dataset_hash;
  std::vector<Ablation> ablations;

  bool all_hold() const {
    for (const auto& a : ablations)
      if (!direction_holds(a)) return false;
    return true;
  }
};

inline nlohmann::json table_json(const AblationTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& a : t.ablations) rows.push_back(ablation_json(a));
  return {{"config_hash", t.config_hash}, {"dataset_hash", t.dataset_hash}, {"ablations", rows}, {"all_hold", t.all_hold()}};
}

using ProgressFn = std::function<void(const std::string&)>;

/// (a) patchcon vs cross-entropy pretraining; (b) transformer vs linear head on
/// the patchcon encoder; (c) pretrained vs random label embedding on the same
/// encoder. Each arm runs once per ablation seed with that seed's validation split.
inline AblationTable run_ablations(const ExperimentConfig& cfg, const srh::PatchDataset& ds, const ProgressFn& progress = {}) {
  cfg.validate();
  AblationTable table{config_hash(cfg), dataset_hash(ds), {}};
  auto say = [&](const std::string& s) {
    if (progress) progress(s);
  };
  Ablation pre{"pretraining", {"patchcon", {}}, {"cross_entropy", {}}};
  Ablation head{"classifier", {"transformer", {}}, {"linear", {}}};
  Ablation emb{"embedding", {"pretrained", {}}, {"random", {}}};

  for (std::uint64_t seed : cfg.ablation.seeds) {
    const Split split = make_split(cfg, ds.patients, seed);
    const auto embedding = train_embedding(cfg, seed).embedding.label_matrix();
    auto evaluate = [&](srh::PatchEncoder& enc, const classifier::ClassifierConfig& cc, const ad::Array* e) {
      auto h = classifier_stage(cc, enc, ds, split, e, seed);
      return ArmRun{seed, table.dataset_hash, evaluate_patients(ds, enc, h, split.validation, cfg.thresholds)};
    };
    const std::string tag = " (seed " + std::to_string(seed) + ")";

    classifier::ClassifierConfig transformer = cfg.classifier;
    transformer.strategy = classifier::Strategy::transformer;
    transformer.train_embedding = false;

    say("pretrain patchcon" + tag);
    srh::PatchEncoder contrastive = pretrain_stage(cfg, ds, split, patchcon::Objective::patchcon, seed);
    say("pretrain cross_entropy" + tag);
    srh::PatchEncoder supervised = pretrain_stage(cfg, ds, split, patchcon::Objective::cross_entropy, seed);

    say("classifiers" + tag);
    ArmRun shared = evaluate(contrastive, transformer, &embedding);
    pre.expected_better.runs.push_back(shared);
    pre.expected_worse.runs.push_back(evaluate(supervised, transformer, &embedding));

    head.expected_better.runs.push_back(shared);
    classifier::ClassifierConfig linear = cfg.classifier;
    linear.strategy = classifier::Strategy::linear;
    head.expected_worse.runs.push_back(evaluate(contrastive, linear, nullptr));

    classifier::ClassifierConfig frozen = transformer;
    frozen.provided_fraction = cfg.ablation.embedding_provided_fraction;
    emb.expected_better.runs.push_back(evaluate(contrastive, frozen, &embedding));
    classifier::ClassifierConfig learned = frozen;
    learned.train_embedding = true;
    const ad::Array random = random_label_embedding(embedding, srh::mix_seed(seed, 31));
    emb.expected_worse.runs.push_back(evaluate(contrastive, learned, &random));
  }
  table.ablations = {std::move(pre), std::move(head), std::move(emb)};
  return table;
}

}  // namespace deepglioma::eval
