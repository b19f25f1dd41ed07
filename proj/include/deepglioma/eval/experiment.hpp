#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "deepglioma/classifier/train.hpp"
#include "deepglioma/eval/metrics.hpp"
#include "deepglioma/genomics/cooccurrence.hpp"
#include "deepglioma/heatmap/heatmap.hpp"
#include "deepglioma/inference/patient.hpp"
#include "deepglioma/patchcon/train.hpp"
#include "deepglioma/srh/dataset.hpp"

namespace deepglioma::eval {

// ---------------------------------------------------------------------------
// Configuration

struct EmbeddingConfig {
  std::size_t cohort_patients = 500;  // genomic-only cohort, separate from the imaged patients
  genomics::GloveTrainConfig glove;
};

struct ValidationConfig {
  std::string scheme = "balanced";  // "balanced" or "center"
  std::size_t idh_mutant = 10, idh_wildtype = 10;
  std::size_t center = 0;  // held-out center for the "center" scheme
};

struct HeatmapConfig {
  heatmap::HeatmapThresholds thresholds;
  std::size_t stride = 100;
  std::size_t slides = 2;  // validation slides rendered by the pipeline
};

struct AblationConfig {
  std::vector<std::uint64_t> seeds{1, 2, 3};
  double embedding_provided_fraction = 2.0 / 3.0;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  srh::DatasetConfig dataset;
  EmbeddingConfig embedding;
  srh::EncoderConfig encoder;
  patchcon::PretrainConfig pretrain;
  classifier::ClassifierConfig classifier;
  ValidationConfig validation;
  inference::Thresholds thresholds;
  HeatmapConfig heatmap;
  AblationConfig ablation;

  void validate() const {
    dataset.validate();
    encoder.validate();
    pretrain.validate();
    classifier.validate();
    if (encoder.input_pool != dataset.input_pool) {
      throw std::invalid_argument("config: encoder.input_pool must equal dataset.input_pool");
    }
    if (validation.scheme != "balanced" && validation.scheme != "center") {
      throw std::invalid_argument("config: validation.scheme must be 'balanced' or 'center'");
    }
    if (embedding.cohort_patients == 0) throw std::invalid_argument("config: embedding.cohort_patients must be positive");
    if (ablation.seeds.empty()) throw std::invalid_argument("config: ablation.seeds must not be empty");
    if (heatmap.stride == 0) throw std::invalid_argument("config: heatmap.stride must be positive");
  }
};

inline void to_json(nlohmann::json& j, const EmbeddingConfig& c) {
  j = {{"cohort_patients", c.cohort_patients},
       {"dim", c.glove.dim},
       {"epochs", c.glove.epochs},
       {"batch_pairs", c.glove.batch_pairs},
       {"lr", c.glove.lr},
       {"init_scale", c.glove.init_scale},
       {"alpha", c.glove.weighting.alpha},
       {"x_max", c.glove.weighting.x_max}};
}
inline void from_json(const nlohmann::json& j, EmbeddingConfig& c) {
  EmbeddingConfig d;
  c.cohort_patients = j.value("cohort_patients", d.cohort_patients);
  c.glove.dim = j.value("dim", d.glove.dim);
  c.glove.epochs = j.value("epochs", d.glove.epochs);
  c.glove.batch_pairs = j.value("batch_pairs", d.glove.batch_pairs);
  c.glove.lr = j.value("lr", d.glove.lr);
  c.glove.init_scale = j.value("init_scale", d.glove.init_scale);
  c.glove.weighting.alpha = j.value("alpha", d.glove.weighting.alpha);
  c.glove.weighting.x_max = j.value("x_max", d.glove.weighting.x_max);
}

inline void to_json(nlohmann::json& j, const ValidationConfig& c) {
  j = {{"scheme", c.scheme}, {"idh_mutant", c.idh_mutant}, {"idh_wildtype", c.idh_wildtype}, {"center", c.center}};
}
inline void from_json(const nlohmann::json& j, ValidationConfig& c) {
  ValidationConfig d;
  c.scheme = j.value("scheme", d.scheme);
  c.idh_mutant = j.value("idh_mutant", d.idh_mutant);
  c.idh_wildtype = j.value("idh_wildtype", d.idh_wildtype);
  c.center = j.value("center", d.center);
}

inline void to_json(nlohmann::json& j, const HeatmapConfig& c) {
  j = {{"thresholds", c.thresholds}, {"stride", c.stride}, {"slides", c.slides}};
}
inline void from_json(const nlohmann::json& j, HeatmapConfig& c) {
  HeatmapConfig d;
  c.thresholds = j.value("thresholds", d.thresholds);
  c.stride = j.value("stride", d.stride);
  c.slides = j.value("slides", d.slides);
}

inline void to_json(nlohmann::json& j, const AblationConfig& c) {
  j = {{"seeds", c.seeds}, {"embedding_provided_fraction", c.embedding_provided_fraction}};
}
inline void from_json(const nlohmann::json& j, AblationConfig& c) {
  AblationConfig d;
  c.seeds = j.value("seeds", d.seeds);
  c.embedding_provided_fraction = j.value("embedding_provided_fraction", d.embedding_provided_fraction);
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"seed", c.seed},           {"dataset", c.dataset},       {"embedding", c.embedding},
       {"encoder", c.encoder},     {"pretrain", c.pretrain},     {"classifier", c.classifier},
       {"validation", c.validation}, {"thresholds", c.thresholds}, {"heatmap", c.heatmap},
       {"ablation", c.ablation}};
}
inline ExperimentConfig default_config();

/// Missing keys take the desk-scale defaults.
inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  const ExperimentConfig d = default_config();
  c.seed = j.value("seed", d.seed);
  c.dataset = j.value("dataset", d.dataset);
  c.embedding = j.value("embedding", d.embedding);
  c.encoder = j.value("encoder", d.encoder);
  c.pretrain = j.value("pretrain", d.pretrain);
  c.classifier = j.value("classifier", d.classifier);
  c.validation = j.value("validation", d.validation);
  c.thresholds = j.value("thresholds", d.thresholds);
  c.heatmap = j.value("heatmap", d.heatmap);
  c.ablation = j.value("ablation", d.ablation);
}

/// Desk-scale defaults used by the CLI and the acceptance run.
inline ExperimentConfig default_config() {
  ExperimentConfig c;
  c.encoder.widths = {8, 16, 32, 64, 64, 64};
  c.encoder.feature_dim = 32;
  c.pretrain.epochs = 20;
  c.pretrain.projection_dim = 32;
  c.pretrain.lr = 1e-3;
  c.classifier.epochs = 40;
  c.classifier.lr = 2e-3;
  return c;
}

// ---------------------------------------------------------------------------
// Hashing

inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Hash of the canonical (key-sorted, compact) JSON form.
inline std::string config_hash(const ExperimentConfig& c) {
  const std::string s = nlohmann::json(c).dump();
  return hex64(fnv1a(s.data(), s.size()));
}

inline std::string dataset_hash(const srh::PatchDataset& ds) {
  const std::string m = srh::dataset_manifest(ds).dump();
  std::uint64_t h = fnv1a(m.data(), m.size());
  h = fnv1a(ds.inputs.data(), ds.inputs.size() * sizeof(float), h);
  return hex64(h);
}

// ---------------------------------------------------------------------------
// Patient splits

struct Split {
  std::vector<std::size_t> train, validation;  // patient indices, ascending
};

inline void to_json(nlohmann::json& j, const Split& s) { j = {{"train", s.train}, {"validation", s.validation}}; }

inline bool idh_mutant(const srh::PatientRecord& p) {
  const auto it = p.labels.find("IDH");
  return it != p.labels.end() && it->second == genomics::Call::mutant;
}

/// Validation set with fixed counts of IDH-mutant and IDH-wildtype patients.
inline Split balanced_split(const std::vector<srh::PatientRecord>& patients, std::size_t n_mutant, std::size_t n_wildtype,
                            std::uint64_t seed) {
  std::vector<std::size_t> mut, wt;
  for (std::size_t i = 0; i < patients.size(); ++i) (idh_mutant(patients[i]) ? mut : wt).push_back(i);
  if (mut.size() <= n_mutant || wt.size() <= n_wildtype) {
    throw std::invalid_argument("balanced_split: need more than " + std::to_string(n_mutant) + " IDH-mutant and " +
                                std::to_string(n_wildtype) + " IDH-wildtype patients (have " + std::to_string(mut.size()) +
                                " and " + std::to_string(wt.size()) + ")");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(mut.begin(), mut.end(), rng);
  std::shuffle(wt.begin(), wt.end(), rng);
  std::vector<bool> held(patients.size(), false);
  for (std::size_t i = 0; i < n_mutant; ++i) held[mut[i]] = true;
  for (std::size_t i = 0; i < n_wildtype; ++i) held[wt[i]] = true;
  Split s;
  for (std::size_t i = 0; i < patients.size(); ++i) (held[i] ? s.validation : s.train).push_back(i);
  return s;
}

/// One fold per center tag: that center's patients are held out.
inline std::vector<Split> center_folds(const std::vector<srh::PatientRecord>& patients) {
  std::size_t centers = 0;
  for (const auto& p : patients) centers = std::max(centers, p.center + 1);
  std::vector<Split> folds(centers);
  for (std::size_t i = 0; i < patients.size(); ++i)
    for (std::size_t c = 0; c < centers; ++c) (patients[i].center == c ? folds[c].validation : folds[c].train).push_back(i);
  return folds;
}

inline Split make_split(const ExperimentConfig& cfg, const std::vector<srh::PatientRecord>& patients, std::uint64_t seed) {
  if (cfg.validation.scheme == "center") {
    const auto folds = center_folds(patients);
    if (cfg.validation.center >= folds.size() || folds[cfg.validation.center].validation.empty()) {
      throw std::invalid_argument("make_split: no patients at center " + std::to_string(cfg.validation.center));
    }
    return folds[cfg.validation.center];
  }
  return balanced_split(patients, cfg.validation.idh_mutant, cfg.validation.idh_wildtype, srh::mix_seed(seed, 11));
}

// ---------------------------------------------------------------------------
// Stages shared by the pipeline and the ablations

/// Seeds for one run, all derived from a single value.
struct RunSeeds {
  std::uint64_t split, cohort, glove, encoder, pretrain, classifier;
};

inline RunSeeds run_seeds(std::uint64_t seed) {
  return {seed, srh::mix_seed(seed, 21), srh::mix_seed(seed, 22), srh::mix_seed(seed, 23), srh::mix_seed(seed, 24),
          srh::mix_seed(seed, 25)};
}

inline genomics::GloveTrainResult train_embedding(const ExperimentConfig& cfg, std::uint64_t seed) {
  const RunSeeds s = run_seeds(seed);
  const auto panel = genomics::GenePanel::glioma_default();
  const auto cohort = genomics::synth_cohort(cfg.embedding.cohort_patients, s.cohort, cfg.dataset.priors, "G");
  const auto x = genomics::build_cooccurrence(genomics::profiles_of(cohort), panel);
  genomics::GloveTrainConfig g = cfg.embedding.glove;
  g.seed = s.glove;
  return genomics::train_gene_embedding(x, panel, g);
}

/// Random label embedding with rows rescaled to the mean row norm of `like`.
inline ad::Array random_label_embedding(const ad::Array& like, std::uint64_t seed) {
  ad::Rng rng(seed);
  ad::Array e = ad::random_normal({like.rows(), like.cols()}, 1.0, rng);
  double target = 0.0;
  for (std::size_t r = 0; r < like.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < like.cols(); ++c) s += like.at(r, c) * like.at(r, c);
    target += std::sqrt(s) / static_cast<double>(like.rows());
  }
  for (std::size_t r = 0; r < e.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < e.cols(); ++c) s += e.at(r, c) * e.at(r, c);
    const double k = target / std::sqrt(s);
    for (std::size_t c = 0; c < e.cols(); ++c) e.at(r, c) *= k;
  }
  return e;
}

inline std::vector<std::size_t> patches_of(const srh::PatchDataset& ds, const std::vector<std::size_t>& patients,
                                           bool tumor_only) {
  std::vector<bool> keep(ds.patients.size(), false);
  for (auto p : patients) keep.at(p) = true;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ds.patches.size(); ++i)
    if (keep[ds.patches[i].patient] && (!tumor_only || ds.patches[i].verdict.is_tumor())) out.push_back(i);
  return out;
}

/// Encoder trained on the tumor patches of `split.train`, input statistics fitted on the same patches.
inline srh::PatchEncoder pretrain_stage(const ExperimentConfig& cfg, const srh::PatchDataset& ds, const Split& split,
                                        patchcon::Objective objective, std::uint64_t seed,
                                        patchcon::PretrainResult* result = nullptr,
                                        const patchcon::EpochCallback& on_epoch = {}) {
  const RunSeeds s = run_seeds(seed);
  const auto patches = patches_of(ds, split.train, true);
  srh::EncoderConfig ec = cfg.encoder;
  ec.seed = s.encoder;
  std::vector<const float*> inputs;
  for (auto i : patches) inputs.push_back(ds.input(i));
  srh::fit_input_normalization(ec, inputs);
  srh::PatchEncoder enc(ec);
  patchcon::PretrainConfig pc = cfg.pretrain;
  pc.objective = objective;
  pc.seed = s.pretrain;
  auto r = patchcon::pretrain_encoder(enc, ds, patches, pc, on_epoch);
  if (result) *result = std::move(r);
  return enc;
}

inline ad::Array encode_patches(srh::PatchEncoder& enc, const srh::PatchDataset& ds, const std::vector<std::size_t>& patches) {
  std::vector<const float*> inputs;
  inputs.reserve(patches.size());
  for (auto i : patches) inputs.push_back(ds.input(i));
  return enc.encode(inputs);
}

/// Head fitted on tumor-patch features of the training patients with inherited patient labels.
inline classifier::MolecularHead classifier_stage(const classifier::ClassifierConfig& cc, srh::PatchEncoder& enc,
                                                  const srh::PatchDataset& ds, const Split& split,
                                                  const ad::Array* embedding, std::uint64_t seed,
                                                  classifier::ClassifierResult* result = nullptr) {
  const auto patches = patches_of(ds, split.train, true);
  const ad::Array features = encode_patches(enc, ds, patches);
  std::vector<genomics::LabelVector> labels;
  labels.reserve(patches.size());
  for (auto i : patches) labels.push_back(ds.patient_labels(ds.patches[i].patient));
  classifier::ClassifierConfig c = cc;
  c.seed = run_seeds(seed).classifier;
  auto head = classifier::make_head(c, enc.feature_dim(), ds.panel.size(), embedding);
  auto r = classifier::train_classifier(head, features, labels, c);
  if (result) *result = std::move(r);
  return head;
}

struct Evaluation {
  std::vector<std::size_t> patients;  // scored patients, ascending
  std::vector<inference::PatientPrediction> predictions;
  std::vector<std::string> unscored;  // every slide excluded by the tumor gate
  ad::Array labels;                   // [patients, genes] ground truth, 1 = mutant
  std::vector<genomics::Subgroup> subgroups;  // ground truth
  MetricReport report;
  double subgroup_accuracy = 0.0;
};

/// Patient-level predictions and metrics for `patients`.
inline Evaluation evaluate_patients(const srh::PatchDataset& ds, srh::PatchEncoder& enc, classifier::MolecularHead& head,
                                    const std::vector<std::size_t>& patients, const inference::Thresholds& t) {
  Evaluation ev;
  const std::size_t n = ds.panel.size();
  std::size_t subgroup_hits = 0;
  for (auto p : patients) {
    std::vector<inference::SlidePredictions> slides;
    for (std::size_t s = 0; s < ds.slides.size(); ++s) {
      if (ds.slides[s].patient != p) continue;
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < ds.patches.size(); ++i)
        if (ds.patches[i].slide == s) idx.push_back(i);
      inference::SlidePredictions sp{ds.slides[s].slide_id, {}, head.predict(encode_patches(enc, ds, idx))};
      for (auto i : idx) sp.verdicts.push_back(ds.patches[i].verdict);
      slides.push_back(std::move(sp));
    }
    bool any = false;
    for (const auto& s : slides) any = any || !inference::gate_slide(s.verdicts).excluded;
    if (!any) {
      ev.unscored.push_back(ds.patients[p].id);
      continue;
    }
    ev.patients.push_back(p);
    ev.predictions.push_back(inference::aggregate_patient(ds.patients[p].id, ds.panel.genes(), slides));
    ev.subgroups.push_back(ds.patients[p].subgroup);
    subgroup_hits += ev.predictions.back().subgroup(t) == ds.patients[p].subgroup;
  }
  if (ev.patients.empty()) throw std::invalid_argument("evaluate_patients: no patient could be scored");
  ad::Array probs(ad::Shape{ev.patients.size(), n}), labels(ad::Shape{ev.patients.size(), n});
  const auto targets = ds.patient_targets();
  for (std::size_t k = 0; k < ev.patients.size(); ++k)
    for (std::size_t g = 0; g < n; ++g) {
      probs[k * n + g] = ev.predictions[k].probs[g];
      labels[k * n + g] = targets[ev.patients[k]][g];
    }
  ev.report = multilabel_report(probs, labels, ds.panel.genes());
  ev.labels = std::move(labels);
  ev.subgroup_accuracy = static_cast<double>(subgroup_hits) / static_cast<double>(ev.patients.size());
  return ev;
}

inline nlohmann::json evaluation_json(const Evaluation& ev, const inference::Thresholds& t) {
  nlohmann::json preds = nlohmann::json::array();
  for (std::size_t k = 0; k < ev.predictions.size(); ++k) {
    const auto& p = ev.predictions[k];
    nlohmann::json j = inference::prediction_json(p, t), truth = nlohmann::json::object();
    for (std::size_t g = 0; g < p.genes.size(); ++g) truth[p.genes[g]] = ev.labels.at(k, g) > 0.5 ? "mutant" : "wildtype";
    j["truth"] = {{"genes", truth}, {"subgroup_tag", std::string(genomics::subgroup_tag(ev.subgroups[k]))}};
    preds.push_back(std::move(j));
  }
  return {{"metrics", ev.report}, {"subgroup_accuracy", ev.subgroup_accuracy}, {"unscored", ev.unscored},
          {"predictions", preds}};
}

}  // namespace deepglioma::eval
