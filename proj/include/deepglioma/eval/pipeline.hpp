#pragma once

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "deepglioma/eval/ablation.hpp"
#include "deepglioma/eval/experiment.hpp"
#include "deepglioma/heatmap/dense.hpp"
#include "deepglioma/srh/png_io.hpp"

namespace deepglioma::eval {

namespace fs = std::filesystem;

/// Artifact names inside a run directory.
struct RunLayout {
  fs::path dir;

  fs::path dataset() const { return dir / "dataset.bin"; }
  fs::path embedding() const { return dir / "embedding.bin"; }
  fs::path encoder() const { return dir / "encoder.bin"; }
  fs::path head() const { return dir / "head.bin"; }
  fs::path heatmaps() const { return dir / "heatmaps"; }
  fs::path report(const std::string& stage) const { return dir / (stage + ".json"); }
};

/// Minimum patient-level mAUROC for `report --check`.
inline constexpr double kTargetMAUC = 0.95;

/// Stage failures carry the stage name.
class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& cause)
      : std::runtime_error("stage " + stage + " failed: " + cause), stage_(stage) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

inline nlohmann::json stamp(const ExperimentConfig& cfg) { return {{"config_hash", config_hash(cfg)}, {"seed", cfg.seed}}; }

inline void write_json(const fs::path& path, const nlohmann::json& j) { ad::write_file_bytes(path, j.dump(2) + "\n"); }

inline nlohmann::json read_json(const fs::path& path) { return nlohmann::json::parse(ad::read_file_bytes(path)); }

/// Loads the cached dataset and checks it was built from the same dataset config.
inline srh::PatchDataset load_run_dataset(const ExperimentConfig& cfg, const RunLayout& run) {
  if (!fs::exists(run.dataset())) throw std::runtime_error("missing " + run.dataset().string() + " (run synth first)");
  nlohmann::json meta;
  srh::PatchDataset ds = srh::load_dataset(run.dataset(), &meta);
  if (meta.at("dataset_config") != nlohmann::json(cfg.dataset)) {
    throw std::runtime_error("dataset cache " + run.dataset().string() + " was built from a different dataset config");
  }
  return ds;
}

inline Split run_split(const ExperimentConfig& cfg, const srh::PatchDataset& ds) { return make_split(cfg, ds.patients, cfg.seed); }

using Log = std::function<void(const std::string&)>;

// ---------------------------------------------------------------------------
// Stages

inline nlohmann::json stage_synth(const ExperimentConfig& cfg, const RunLayout& run, const Log& log = {}) {
  const srh::GroundTruthSegmenter seg;
  const srh::PatchDataset ds = srh::build_synthetic_dataset(cfg.dataset, seg);
  const std::string hash = dataset_hash(ds);
  nlohmann::json meta = stamp(cfg);
  meta["dataset_config"] = cfg.dataset;
  meta["dataset_hash"] = hash;
  srh::save_dataset(run.dataset(), ds, meta);
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& p : ds.patients) ++counts[static_cast<int>(p.subgroup)];
  nlohmann::json r = stamp(cfg);
  r["stage"] = "synth";
  r["dataset_hash"] = hash;
  r["patients"] = ds.patients.size();
  r["slides"] = ds.slides.size();
  r["patches"] = ds.patches.size();
  r["tumor_patches"] = ds.tumor_patches().size();
  r["subgroups"] = {{"gbm", counts[0]}, {"oligo", counts[1]}, {"astro", counts[2]}};
  r["split"] = run_split(cfg, ds);
  if (log) log("synth: " + std::to_string(ds.patches.size()) + " patches from " + std::to_string(ds.slides.size()) + " slides");
  write_json(run.report("synth"), r);
  return r;
}

inline nlohmann::json stage_embed(const ExperimentConfig& cfg, const RunLayout& run, const Log& log = {}) {
  const auto result = train_embedding(cfg, cfg.seed);
  nlohmann::json meta = stamp(cfg);
  meta["embedding_config"] = cfg.embedding;
  genomics::save_embedding(run.embedding(), result.embedding, meta);
  const auto& v = result.embedding.vectors;
  nlohmann::json tokens = nlohmann::json::array(), cos = nlohmann::json::array();
  const auto nn = genomics::nearest_neighbors(v);
  for (std::size_t i = 0; i < v.rows(); ++i) {
    tokens.push_back(result.embedding.panel.token_name(i));
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < v.rows(); ++j) row.push_back(genomics::row_cosine(v, i, j));
    cos.push_back(row);
  }
  nlohmann::json neighbors = nlohmann::json::object();
  for (std::size_t i = 0; i < v.rows(); ++i) neighbors[tokens[i].get<std::string>()] = tokens[nn[i]];
  nlohmann::json r = stamp(cfg);
  r["stage"] = "embed-train";
  r["initial_loss"] = result.initial_loss;
  r["final_loss"] = result.final_loss;
  r["tokens"] = tokens;
  r["cosine"] = cos;
  r["nearest_neighbor"] = neighbors;
  if (log) log("embed-train: GloVe loss " + std::to_string(result.initial_loss) + " -> " + std::to_string(result.final_loss));
  write_json(run.report("embed-train"), r);
  return r;
}

inline nlohmann::json stage_pretrain(const ExperimentConfig& cfg, const RunLayout& run, const Log& log = {}) {
  const srh::PatchDataset ds = load_run_dataset(cfg, run);
  const Split split = run_split(cfg, ds);
  patchcon::PretrainResult result;
  auto enc = pretrain_stage(cfg, ds, split, cfg.pretrain.objective, cfg.seed, &result, [&](const patchcon::EpochLog& e) {
    if (log) log("pretrain: epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.loss));
  });
  nlohmann::json meta = stamp(cfg);
  meta["objective"] = patchcon::to_string(cfg.pretrain.objective);
  srh::save_encoder(run.encoder(), enc, meta);
  nlohmann::json r = stamp(cfg);
  r["stage"] = "pretrain";
  r["objective"] = patchcon::to_string(cfg.pretrain.objective);
  r["encoder"] = enc.config();
  r["initial_loss"] = result.initial_loss;
  r["final_loss"] = result.final_loss;
  r["log"] = result.log;
  r["train_patches"] = patches_of(ds, split.train, true).size();
  write_json(run.report("pretrain"), r);
  return r;
}

inline nlohmann::json stage_train(const ExperimentConfig& cfg, const RunLayout& run, const Log& log = {}) {
  const srh::PatchDataset ds = load_run_dataset(cfg, run);
  const Split split = run_split(cfg, ds);
  auto enc = srh::load_encoder(run.encoder());
  const auto emb = genomics::load_embedding(run.embedding());
  if (emb.panel.genes() != ds.panel.genes()) throw std::runtime_error("embedding panel does not match the dataset panel");
  const ad::Array labels = emb.label_matrix();
  classifier::ClassifierResult result;
  auto head = classifier_stage(cfg.classifier, enc, ds, split, &labels, cfg.seed, &result);
  nlohmann::json meta = stamp(cfg);
  meta["classifier"] = cfg.classifier;
  meta["genes"] = ds.panel.genes();
  classifier::save_head(run.head(), head, meta);
  nlohmann::json r = stamp(cfg);
  r["stage"] = "train";
  r["head"] = head.describe();
  r["provided_fraction"] = cfg.classifier.provided_fraction;
  r["initial_loss"] = result.initial_loss;
  r["final_loss"] = result.final_loss;
  r["log"] = result.log;
  if (log) log("train: loss " + std::to_string(result.initial_loss) + " -> " + std::to_string(result.final_loss));
  write_json(run.report("train"), r);
  return r;
}

inline nlohmann::json stage_infer(const ExperimentConfig& cfg, const RunLayout& run, const Log& log = {}) {
  const srh::PatchDataset ds = load_run_dataset(cfg, run);
  const Split split = run_split(cfg, ds);
  auto enc = srh::load_encoder(run.encoder());
  auto head = classifier::load_head(run.head());
  const Evaluation ev = evaluate_patients(ds, enc, head, split.validation, cfg.thresholds);
  nlohmann::json r = stamp(cfg);
  r["stage"] = "infer";
  r.update(evaluation_json(ev, cfg.thresholds));
  if (log) log("infer: " + std::to_string(ev.predictions.size()) + " validation patients scored");
  write_json(run.report("infer"), r);
  return r;
}

/// Dense maps for the first `heatmap.slides` validation slides; one PNG per subgroup.
inline nlohmann::json stage_heatmap(const ExperimentConfig& cfg, const RunLayout& run, const Log& log = {}) {
  const srh::PatchDataset ds = load_run_dataset(cfg, run);
  const Split split = run_split(cfg, ds);
  auto enc = srh::load_encoder(run.encoder());
  auto head = classifier::load_head(run.head());
  const srh::GroundTruthSegmenter seg;
  fs::create_directories(run.heatmaps());
  const heatmap::GeneChannels ch{ds.panel.index_of("IDH"), ds.panel.index_of("1p19q"), ds.panel.index_of("ATRX")};
  nlohmann::json maps = nlohmann::json::array();
  for (std::size_t k = 0; k < std::min(cfg.heatmap.slides, split.validation.size()); ++k) {
    const std::size_t p = split.validation[k];
    const srh::WholeSlide slide = srh::synthetic_slide(cfg.dataset, ds.patients, p, 0).slide;
    const auto dense = heatmap::dense_predict(slide, enc, head, seg, cfg.heatmap.stride);
    for (auto s : genomics::kSubgroups) {
      const std::string file = slide.slide_id + "_" + std::string(genomics::subgroup_tag(s)) + ".png";
      const srh::Image8 img = heatmap::render_subgroup(dense, s, cfg.heatmap.thresholds, ch);
      srh::write_png(run.heatmaps() / file, img);
      maps.push_back({{"slide", slide.slide_id},
                      {"patient", ds.patients[p].id},
                      {"subgroup", genomics::subgroup_tag(s)},
                      {"file", "heatmaps/" + file},
                      {"patches", dense.origins.size()}});
    }
    if (log) log("heatmap: " + slide.slide_id);
  }
  nlohmann::json r = stamp(cfg);
  r["stage"] = "heatmap";
  r["thresholds"] = cfg.heatmap.thresholds;
  r["stride"] = cfg.heatmap.stride;
  r["maps"] = maps;
  write_json(run.report("heatmap"), r);
  return r;
}

inline nlohmann::json stage_ablate(const ExperimentConfig& cfg, const RunLayout& run, const Log& log = {}) {
  const srh::PatchDataset ds = load_run_dataset(cfg, run);
  const AblationTable t = run_ablations(cfg, ds, log);
  nlohmann::json r = stamp(cfg);
  r["stage"] = "ablate";
  r.update(table_json(t));
  write_json(run.report("ablate"), r);
  return r;
}

struct CheckResult {
  bool passed = true;
  std::vector<std::string> lines;
};

/// Summary report from the inference (and, when present, ablation) outputs.
inline nlohmann::json stage_report(const ExperimentConfig& cfg, const RunLayout& run, CheckResult* check = nullptr) {
  if (!fs::exists(run.report("infer"))) throw std::runtime_error("missing " + run.report("infer").string() + " (run infer first)");
  const auto infer = read_json(run.report("infer"));
  const std::string hash = config_hash(cfg);
  if (infer.at("config_hash") != hash) throw std::runtime_error("infer.json was produced by a different config");
  nlohmann::json r = stamp(cfg);
  r["stage"] = "report";
  r["metrics"] = infer.at("metrics");
  r["subgroup_accuracy"] = infer.at("subgroup_accuracy");
  const auto& m = infer.at("metrics").at("mAUC");
  const bool auc_ok = m.is_number() && m.get<double>() >= kTargetMAUC;
  r["checks"] = nlohmann::json::array();
  r["checks"].push_back({{"name", "patient mAUROC >= 0.95"}, {"value", m}, {"passed", auc_ok}});
  if (fs::exists(run.report("ablate"))) {
    const auto ab = read_json(run.report("ablate"));
    if (ab.at("config_hash") != hash) throw std::runtime_error("ablate.json was produced by a different config");
    for (const auto& a : ab.at("ablations")) {
      r["checks"].push_back({{"name", "ablation " + a.at("name").get<std::string>() + ": " + a.at("expected").get<std::string>()},
                             {"passed", a.at("holds")}});
    }
  }
  bool all = true;
  for (const auto& c : r["checks"]) all = all && c.at("passed").get<bool>();
  r["passed"] = all;
  if (check) {
    check->passed = all;
    for (const auto& c : r["checks"])
      check->lines.push_back(std::string(c.at("passed").get<bool>() ? "PASS " : "FAIL ") + c.at("name").get<std::string>());
  }
  write_json(run.report("report"), r);
  return r;
}

struct Stage {
  std::string name;
  std::function<nlohmann::json(const ExperimentConfig&, const RunLayout&, const Log&)> run;
};

inline const std::vector<Stage>& pipeline_stages() {
  static const std::vector<Stage> stages{
      {"synth", stage_synth},     {"embed-train", stage_embed}, {"pretrain", stage_pretrain},
      {"train", stage_train},     {"infer", stage_infer},       {"heatmap", stage_heatmap},
      {"report", [](const ExperimentConfig& c, const RunLayout& r, const Log&) { return stage_report(c, r); }}};
  return stages;
}

/// Runs every stage in order; any failure aborts with the stage name and cause.
inline nlohmann::json run_pipeline(const ExperimentConfig& cfg, const fs::path& dir, const Log& log = {}) {
  cfg.validate();
  const RunLayout run{dir};
  fs::create_directories(dir);
  write_json(run.report("config"), cfg);
  nlohmann::json last;
  for (const auto& s : pipeline_stages()) {
    if (log) log("== " + s.name);
    try {
      last = s.run(cfg, run, log);
    } catch (const std::exception& e) {
      throw StageError(s.name, e.what());
    }
  }
  return last;
}

}  // namespace deepglioma::eval
