#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "deepglioma/core/array_io.hpp"
#include "deepglioma/genomics/cohort.hpp"
#include "deepglioma/genomics/labels.hpp"
#include "deepglioma/srh/encoder.hpp"
#include "deepglioma/srh/segmenter.hpp"
#include "deepglioma/srh/synth.hpp"

namespace deepglioma::srh {

/// splitmix64 finaliser; used to derive independent per-item seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1) + 0xbf58476d1ce4e5b9ULL * (c + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct DatasetConfig {
  std::size_t patients = 60;
  std::size_t slides_per_patient = 1;
  std::size_t slide_height = 1800, slide_width = 1800;
  double tumor_fraction_min = 0.4, tumor_fraction_max = 0.9;
  std::size_t centers = 4;
  genomics::CohortPriors priors;
  TextureParams texture;
  std::size_t input_pool = 4;
  std::uint64_t seed = 0;

  void validate() const {
    if (patients == 0 || slides_per_patient == 0) throw std::invalid_argument("dataset: need at least one patient and slide");
    if (centers == 0) throw std::invalid_argument("dataset: centers must be positive");
    if (!(tumor_fraction_min > 0.0 && tumor_fraction_min <= tumor_fraction_max && tumor_fraction_max <= 1.0)) {
      throw std::invalid_argument("dataset: tumor fraction range must satisfy 0 < min <= max <= 1");
    }
  }
};

inline void to_json(nlohmann::json& j, const DatasetConfig& c) {
  j = {{"patients", c.patients},
       {"slides_per_patient", c.slides_per_patient},
       {"slide_height", c.slide_height},
       {"slide_width", c.slide_width},
       {"tumor_fraction_min", c.tumor_fraction_min},
       {"tumor_fraction_max", c.tumor_fraction_max},
       {"centers", c.centers},
       {"subgroup_share", c.priors.subgroup_share},
       {"atrx_in_astro", c.priors.atrx_in_astro},
       {"atrx_in_gbm", c.priors.atrx_in_gbm},
       {"input_pool", c.input_pool},
       {"seed", c.seed},
       {"texture",
        {{"tumor_level", c.texture.tumor_level},
         {"normal_level", c.texture.normal_level},
         {"pixel_noise", c.texture.pixel_noise},
         {"base_shift", c.texture.base_shift},
         {"lattice_amplitude", c.texture.lattice_amplitude},
         {"lattice_period", c.texture.lattice_period},
         {"spots_per_patch_mutant", c.texture.spots_per_patch_mutant},
         {"spots_per_patch_wildtype", c.texture.spots_per_patch_wildtype},
         {"spot_amplitude", c.texture.spot_amplitude}}}};
}

inline void from_json(const nlohmann::json& j, DatasetConfig& c) {
  DatasetConfig d;
  c.patients = j.value("patients", d.patients);
  c.slides_per_patient = j.value("slides_per_patient", d.slides_per_patient);
  c.slide_height = j.value("slide_height", d.slide_height);
  c.slide_width = j.value("slide_width", d.slide_width);
  c.tumor_fraction_min = j.value("tumor_fraction_min", d.tumor_fraction_min);
  c.tumor_fraction_max = j.value("tumor_fraction_max", d.tumor_fraction_max);
  c.centers = j.value("centers", d.centers);
  c.priors.subgroup_share = j.value("subgroup_share", d.priors.subgroup_share);
  c.priors.atrx_in_astro = j.value("atrx_in_astro", d.priors.atrx_in_astro);
  c.priors.atrx_in_gbm = j.value("atrx_in_gbm", d.priors.atrx_in_gbm);
  c.input_pool = j.value("input_pool", d.input_pool);
  c.seed = j.value("seed", d.seed);
  c.texture = d.texture;
  if (j.contains("texture")) {
    const auto& t = j["texture"];
    c.texture.tumor_level = t.value("tumor_level", d.texture.tumor_level);
    c.texture.normal_level = t.value("normal_level", d.texture.normal_level);
    c.texture.pixel_noise = t.value("pixel_noise", d.texture.pixel_noise);
    c.texture.base_shift = t.value("base_shift", d.texture.base_shift);
    c.texture.lattice_amplitude = t.value("lattice_amplitude", d.texture.lattice_amplitude);
    c.texture.lattice_period = t.value("lattice_period", d.texture.lattice_period);
    c.texture.spots_per_patch_mutant = t.value("spots_per_patch_mutant", d.texture.spots_per_patch_mutant);
    c.texture.spots_per_patch_wildtype = t.value("spots_per_patch_wildtype", d.texture.spots_per_patch_wildtype);
    c.texture.spot_amplitude = t.value("spot_amplitude", d.texture.spot_amplitude);
  }
}

struct PatientRecord {
  std::string id;
  std::map<std::string, genomics::Call> labels;
  genomics::Subgroup subgroup = genomics::Subgroup::glioblastoma;
  std::size_t center = 0;
};

struct SlideRecord {
  std::string slide_id;
  std::size_t patient = 0;
  Shift registration;
  std::size_t rows = 0, cols = 0;
};

struct PatchRecord {
  std::size_t slide = 0, patient = 0;
  std::size_t row = 0, col = 0;
  SegmentationVerdict verdict;
};

/// Registered, subtracted and tiled slide with encoder-resolution inputs.
struct ProcessedSlide {
  Shift registration;
  PatchGrid grid;
  std::vector<SegmentationVerdict> verdicts;  // raster order
  std::vector<float> inputs;                  // grid.count() x [3, e, e]
};

inline ProcessedSlide preprocess_slide(WholeSlide slide, const Segmenter& seg, std::size_t input_pool) {
  ProcessedSlide out;
  out.registration = register_channels(slide);
  const auto patches = extract_patches(slide);
  out.grid = patch_grid(slide.height(), slide.width());
  EncoderConfig ec;
  ec.input_pool = input_pool;
  ec.validate();
  for (const auto& p : patches) {
    out.verdicts.push_back(seg.classify(slide, p.y0(), p.x0(), kPatchSize));
    const auto in = encoder_input(p.pixels, ec);
    out.inputs.insert(out.inputs.end(), in.begin(), in.end());
  }
  return out;
}

/// Patches of a cohort, held at encoder resolution.
struct PatchDataset {
  genomics::GenePanel panel = genomics::GenePanel::glioma_default();
  std::size_t extent = 75;
  std::vector<PatientRecord> patients;
  std::vector<SlideRecord> slides;
  std::vector<PatchRecord> patches;
  std::vector<float> inputs;

  std::size_t input_size() const { return 3 * extent * extent; }
  const float* input(std::size_t patch) const { return inputs.data() + patch * input_size(); }

  void add_slide(const std::string& slide_id, std::size_t patient, const ProcessedSlide& ps) {
    if (ps.inputs.size() != ps.grid.count() * input_size()) throw std::invalid_argument("PatchDataset: input extent mismatch");
    const std::size_t s = slides.size();
    slides.push_back({slide_id, patient, ps.registration, ps.grid.rows, ps.grid.cols});
    for (std::size_t k = 0; k < ps.grid.count(); ++k) {
      patches.push_back({s, patient, k / ps.grid.cols, k % ps.grid.cols, ps.verdicts[k]});
    }
    inputs.insert(inputs.end(), ps.inputs.begin(), ps.inputs.end());
  }

  std::vector<std::size_t> tumor_patches() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < patches.size(); ++i)
      if (patches[i].verdict.is_tumor()) out.push_back(i);
    return out;
  }

  genomics::LabelVector patient_labels(std::size_t patient) const {
    return genomics::LabelVector::from_calls(panel, patients.at(patient).labels);
  }

  /// [n_patients, n_genes] with 1 for mutant.
  std::vector<std::vector<int>> patient_targets() const {
    std::vector<std::vector<int>> y;
    for (std::size_t p = 0; p < patients.size(); ++p) {
      std::vector<int> row;
      for (auto s : patient_labels(p).states) row.push_back(s == genomics::LabelState::positive);
      y.push_back(row);
    }
    return y;
  }
};

inline SynthSpec synthetic_slide_spec(const DatasetConfig& cfg, const PatientRecord& patient, std::size_t patient_index,
                                      std::size_t slide_index) {
  SynthSpec spec;
  spec.slide_id = patient.id + "_S" + std::to_string(slide_index + 1);
  spec.patient_id = patient.id;
  spec.height = cfg.slide_height;
  spec.width = cfg.slide_width;
  spec.labels = patient.labels;
  spec.params = cfg.texture;
  std::mt19937_64 rng(mix_seed(cfg.seed, patient_index, 1000 + slide_index));
  spec.tumor_fraction = std::uniform_real_distribution<double>(cfg.tumor_fraction_min, cfg.tumor_fraction_max)(rng);
  return spec;
}

inline std::vector<PatientRecord> synthetic_patients(const DatasetConfig& cfg) {
  cfg.validate();
  const auto cohort = genomics::synth_cohort(cfg.patients, mix_seed(cfg.seed, 7), cfg.priors);
  std::vector<PatientRecord> out;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    out.push_back({cohort[i].profile.patient_id, cohort[i].profile.calls, cohort[i].subgroup, i % cfg.centers});
  }
  return out;
}

/// Slide `s` of patient `p` exactly as the dataset builder draws it.
inline SynthSlide synthetic_slide(const DatasetConfig& cfg, const std::vector<PatientRecord>& patients, std::size_t p,
                                  std::size_t s) {
  if (p >= patients.size() || s >= cfg.slides_per_patient) throw std::out_of_range("synthetic_slide: no such slide");
  return synth_slide(synthetic_slide_spec(cfg, patients[p], p, s), mix_seed(cfg.seed, p, s));
}

/// Generates every slide, optionally saving it under `slide_dir`, and keeps
/// only the encoder-resolution patch inputs.
inline PatchDataset build_synthetic_dataset(const DatasetConfig& cfg, const Segmenter& seg,
                                            const std::filesystem::path& slide_dir = {}) {
  PatchDataset ds;
  ds.extent = kPatchSize / cfg.input_pool;
  ds.patients = synthetic_patients(cfg);
  for (std::size_t p = 0; p < ds.patients.size(); ++p)
    for (std::size_t s = 0; s < cfg.slides_per_patient; ++s) {
      const SynthSpec spec = synthetic_slide_spec(cfg, ds.patients[p], p, s);
      SynthSlide synth = synthetic_slide(cfg, ds.patients, p, s);
      if (!slide_dir.empty()) {
        save_slide(slide_dir, synth.slide,
                   {{"tumor_fraction", spec.tumor_fraction},
                    {"planted_shift", {synth.planted_shift.dy, synth.planted_shift.dx}},
                    {"center", ds.patients[p].center},
                    {"subgroup", genomics::subgroup_tag(ds.patients[p].subgroup)}});
      }
      ds.add_slide(spec.slide_id, p, preprocess_slide(std::move(synth.slide), seg, cfg.input_pool));
    }
  return ds;
}

// ---------------------------------------------------------------------------
// Patch cache in the binary array format

inline nlohmann::json dataset_manifest(const PatchDataset& ds) {
  nlohmann::json patients = nlohmann::json::array(), slides = nlohmann::json::array(),
                 patches = nlohmann::json::array();
  for (const auto& p : ds.patients) {
    nlohmann::json labels = nlohmann::json::object();
    for (const auto& [g, c] : p.labels) labels[g] = genomics::to_string(c);
    patients.push_back(
        {{"id", p.id}, {"labels", labels}, {"subgroup", genomics::subgroup_tag(p.subgroup)}, {"center", p.center}});
  }
  for (const auto& s : ds.slides) {
    slides.push_back({{"slide_id", s.slide_id},
                      {"patient", s.patient},
                      {"registration", {s.registration.dy, s.registration.dx}},
                      {"rows", s.rows},
                      {"cols", s.cols}});
  }
  for (const auto& p : ds.patches) {
    patches.push_back({p.slide, p.row, p.col, static_cast<int>(p.verdict.label), p.verdict.probs});
  }
  return {{"genes", ds.panel.genes()}, {"extent", ds.extent}, {"patients", patients}, {"slides", slides},
          {"patches", patches}};
}

inline void save_dataset(const std::filesystem::path& path, const PatchDataset& ds, nlohmann::json meta = {}) {
  ad::ArrayBundle b;
  b.meta = meta.is_object() ? std::move(meta) : nlohmann::json::object();
  b.meta["dataset"] = dataset_manifest(ds);
  ad::Array in(ad::Shape{ds.patches.size(), 3, ds.extent, ds.extent});
  for (std::size_t i = 0; i < ds.inputs.size(); ++i) in[i] = ds.inputs[i];
  b.arrays.push_back({"inputs", std::move(in)});
  ad::save_arrays(path, b);
}

inline PatchDataset load_dataset(const std::filesystem::path& path, nlohmann::json* meta = nullptr) {
  const auto b = ad::load_arrays(path);
  const auto& m = b.meta.at("dataset");
  PatchDataset ds;
  ds.panel = genomics::GenePanel(m.at("genes").get<std::vector<std::string>>());
  ds.extent = m.at("extent").get<std::size_t>();
  for (const auto& p : m.at("patients")) {
    PatientRecord r{p.at("id").get<std::string>(), {}, genomics::parse_subgroup(p.at("subgroup").get<std::string>()),
                    p.at("center").get<std::size_t>()};
    for (const auto& [g, c] : p.at("labels").items()) r.labels[g] = genomics::parse_call(c.get<std::string>());
    ds.patients.push_back(std::move(r));
  }
  for (const auto& s : m.at("slides")) {
    const auto reg = s.at("registration");
    ds.slides.push_back({s.at("slide_id").get<std::string>(), s.at("patient").get<std::size_t>(),
                         Shift{reg[0].get<long>(), reg[1].get<long>()}, s.at("rows").get<std::size_t>(),
                         s.at("cols").get<std::size_t>()});
  }
  for (const auto& p : m.at("patches")) {
    PatchRecord r;
    r.slide = p[0].get<std::size_t>();
    r.patient = ds.slides.at(r.slide).patient;
    r.row = p[1].get<std::size_t>();
    r.col = p[2].get<std::size_t>();
    r.verdict = {static_cast<Tissue>(p[3].get<int>()), p[4].get<std::array<double, 3>>()};
    ds.patches.push_back(r);
  }
  const ad::Array& in = b.get("inputs");
  if (in.size() != ds.patches.size() * ds.input_size()) throw std::runtime_error("dataset cache: input size mismatch");
  ds.inputs.resize(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) ds.inputs[i] = static_cast<float>(in[i]);
  if (meta) *meta = b.meta;
  return ds;
}

}  // namespace deepglioma::srh
