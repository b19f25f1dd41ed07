#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "deepglioma/core/array.hpp"
#include "deepglioma/genomics/cohort.hpp"
#include "deepglioma/genomics/panel.hpp"
#include "deepglioma/srh/segmenter.hpp"

namespace deepglioma::inference {

using genomics::Subgroup;

inline constexpr double kMinTumorFraction = 0.10;

struct GateResult {
  std::vector<std::size_t> tumor;  // indices of tumor-class patches
  double tumor_fraction = 0.0;     // by patch count
  bool excluded = false;
};

/// Keeps tumor patches; a slide whose tumor share is below `min_fraction` is excluded.
inline GateResult gate_slide(const std::vector<srh::SegmentationVerdict>& verdicts,
                             double min_fraction = kMinTumorFraction) {
  if (verdicts.empty()) throw std::invalid_argument("gate_slide: slide has no patches");
  GateResult g;
  for (std::size_t i = 0; i < verdicts.size(); ++i)
    if (verdicts[i].is_tumor()) g.tumor.push_back(i);
  g.tumor_fraction = static_cast<double>(g.tumor.size()) / static_cast<double>(verdicts.size());
  g.excluded = g.tumor.empty() || g.tumor_fraction < min_fraction;
  return g;
}

/// Patch-level output of one slide: verdicts and per-gene probabilities [P, n].
struct SlidePredictions {
  std::string slide_id;
  std::vector<srh::SegmentationVerdict> verdicts;
  ad::Array probs;
};

struct Thresholds {
  double tau = 0.5;  // IDH
  double psi = 1.0;  // 1p19q / ATRX ratio
  double eps = 1e-8;
};

inline void to_json(nlohmann::json& j, const Thresholds& t) { j = {{"tau", t.tau}, {"psi", t.psi}, {"eps", t.eps}}; }
inline void from_json(const nlohmann::json& j, Thresholds& t) {
  Thresholds d;
  t.tau = j.value("tau", d.tau);
  t.psi = j.value("psi", d.psi);
  t.eps = j.value("eps", d.eps);
}

/// Mutually exclusive subgroup from IDH, 1p19q and ATRX probabilities.
inline Subgroup predict_subgroup(double p_idh, double p_1p19q, double p_atrx, const Thresholds& t = {}) {
  if (!(t.eps > 0.0)) throw std::invalid_argument("predict_subgroup: eps must be positive");
  if (p_idh < t.tau) return Subgroup::glioblastoma;
  if (p_1p19q / (p_atrx + t.eps) > t.psi) return Subgroup::oligodendroglioma;
  return Subgroup::astrocytoma;
}

struct PatientPrediction {
  std::string patient_id;
  std::vector<std::string> genes;
  std::vector<double> probs;
  std::size_t tumor_patches = 0;  // Z
  std::vector<std::string> slides_used, slides_excluded;

  double prob(const std::string& gene) const {
    for (std::size_t i = 0; i < genes.size(); ++i)
      if (genes[i] == gene) return probs[i];
    throw std::out_of_range("PatientPrediction: no gene '" + gene + "'");
  }

  Subgroup subgroup(const Thresholds& t = {}) const { return predict_subgroup(prob("IDH"), prob("1p19q"), prob("ATRX"), t); }
};

/// Mean of `probs` rows over the selected patches; Z = 0 throws.
inline std::vector<double> tumor_gated_mean(const std::vector<const ad::Array*>& probs,
                                            const std::vector<std::vector<std::size_t>>& selected, std::size_t* z = nullptr) {
  std::vector<double> sum;
  std::size_t count = 0;
  for (std::size_t s = 0; s < probs.size(); ++s) {
    const ad::Array& p = *probs[s];
    if (sum.empty()) sum.assign(p.cols(), 0.0);
    if (p.cols() != sum.size()) throw std::invalid_argument("aggregate_patient: slides disagree on the gene count");
    for (std::size_t i : selected[s]) {
      if (i >= p.rows()) throw std::out_of_range("aggregate_patient: patch index outside predictions");
      for (std::size_t g = 0; g < sum.size(); ++g) sum[g] += p[i * sum.size() + g];
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("aggregate_patient: no tumor patches (Z = 0)");
  for (double& v : sum) v /= static_cast<double>(count);
  if (z) *z = count;
  return sum;
}

/// Tumor-gated mean over every non-excluded slide of a patient.
inline PatientPrediction aggregate_patient(const std::string& patient_id, const std::vector<std::string>& genes,
                                           const std::vector<SlidePredictions>& slides,
                                           double min_fraction = kMinTumorFraction) {
  PatientPrediction out{patient_id, genes, {}, 0, {}, {}};
  std::vector<const ad::Array*> probs;
  std::vector<std::vector<std::size_t>> selected;
  for (const auto& s : slides) {
    if (s.probs.rank() != 2 || s.probs.rows() != s.verdicts.size() || s.probs.cols() != genes.size()) {
      throw std::invalid_argument("aggregate_patient: slide " + s.slide_id + " predictions do not match its patches");
    }
    const GateResult g = gate_slide(s.verdicts, min_fraction);
    if (g.excluded) {
      out.slides_excluded.push_back(s.slide_id);
      continue;
    }
    out.slides_used.push_back(s.slide_id);
    probs.push_back(&s.probs);
    selected.push_back(g.tumor);
  }
  if (probs.empty()) throw std::invalid_argument("aggregate_patient: every slide of " + patient_id + " was excluded (Z = 0)");
  out.probs = tumor_gated_mean(probs, selected, &out.tumor_patches);
  return out;
}

inline nlohmann::json prediction_json(const PatientPrediction& p, const Thresholds& t) {
  nlohmann::json genes = nlohmann::json::object();
  for (std::size_t i = 0; i < p.genes.size(); ++i) genes[p.genes[i]] = p.probs[i];
  return {{"patient_id", p.patient_id},
          {"genes", genes},
          {"Z", p.tumor_patches},
          {"subgroup", std::string(genomics::subgroup_name(p.subgroup(t)))},
          {"subgroup_tag", std::string(genomics::subgroup_tag(p.subgroup(t)))},
          {"thresholds", t},
          {"slides_used", p.slides_used},
          {"slides_excluded", p.slides_excluded}};
}

}  // namespace deepglioma::inference
