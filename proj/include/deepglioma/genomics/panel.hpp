#pragma once

#include <cstddef>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace deepglioma::genomics {

enum class Call { mutant, wildtype, unknown };

inline std::string_view to_string(Call c) {
  switch (c) {
    case Call::mutant: return "mutant";
    case Call::wildtype: return "wildtype";
    case Call::unknown: return "unknown";
  }
  return "unknown";
}

inline Call parse_call(std::string_view s) {
  if (s == "mutant") return Call::mutant;
  if (s == "wildtype") return Call::wildtype;
  if (s == "unknown") return Call::unknown;
  throw std::invalid_argument("unrecognised mutation status '" + std::string(s) + "'");
}

/// Ordered gene vocabulary. Gene i owns token 2i (mutant) and 2i+1 (wildtype).
class GenePanel {
 public:
  GenePanel() = default;
  explicit GenePanel(std::vector<std::string> genes) : genes_(std::move(genes)) {
    for (std::size_t i = 0; i < genes_.size(); ++i) {
      if (!index_.emplace(genes_[i], i).second) {
        throw std::invalid_argument("GenePanel: duplicate gene '" + genes_[i] + "'");
      }
    }
  }

  static GenePanel glioma_default() { return GenePanel({"IDH", "1p19q", "ATRX"}); }

  std::size_t size() const noexcept { return genes_.size(); }
  std::size_t token_count() const noexcept { return 2 * genes_.size(); }
  const std::vector<std::string>& genes() const noexcept { return genes_; }
  const std::string& gene(std::size_t i) const { return genes_.at(i); }

  bool contains(const std::string& gene) const { return index_.count(gene) != 0; }

  std::size_t index_of(const std::string& gene) const {
    auto it = index_.find(gene);
    if (it == index_.end()) throw std::invalid_argument("gene '" + gene + "' is not in the panel");
    return it->second;
  }

  std::size_t token(std::size_t gene, Call status) const {
    if (gene >= genes_.size()) throw std::out_of_range("GenePanel::token: gene index out of range");
    if (status == Call::unknown) throw std::invalid_argument("GenePanel::token: unknown calls have no token");
    return 2 * gene + (status == Call::mutant ? 0 : 1);
  }

  std::string token_name(std::size_t token) const {
    return gene(token / 2) + ":" + std::string(to_string(token % 2 == 0 ? Call::mutant : Call::wildtype));
  }

  friend bool operator==(const GenePanel& a, const GenePanel& b) { return a.genes_ == b.genes_; }

 private:
  std::vector<std::string> genes_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Per-patient calls keyed by gene name. Genes without an entry are unknown.
struct MutationProfile {
  std::string patient_id;
  std::map<std::string, Call> calls;

  Call call(const std::string& gene) const {
    auto it = calls.find(gene);
    return it == calls.end() ? Call::unknown : it->second;
  }
};

/// Reads `patient_id,gene,status` rows (header required). Patients keep the
/// order of first appearance.
inline std::vector<MutationProfile> read_mutation_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("mutation table: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "patient_id,gene,status") {
    throw std::runtime_error("mutation table: expected header 'patient_id,gene,status', got '" + line + "'");
  }
  std::vector<MutationProfile> profiles;
  std::unordered_map<std::string, std::size_t> where;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != 3) {
      throw std::runtime_error("mutation table line " + std::to_string(lineno) + ": expected 3 fields");
    }
    const Call c = parse_call(fields[2]);
    if (c == Call::unknown) {
      throw std::runtime_error("mutation table line " + std::to_string(lineno) +
                               ": status must be mutant or wildtype");
    }
    auto [it, inserted] = where.emplace(fields[0], profiles.size());
    if (inserted) profiles.push_back(MutationProfile{fields[0], {}});
    auto& calls = profiles[it->second].calls;
    if (auto prev = calls.find(fields[1]); prev != calls.end() && prev->second != c) {
      throw std::runtime_error("mutation table line " + std::to_string(lineno) + ": conflicting calls for " +
                               fields[0] + "/" + fields[1]);
    }
    calls[fields[1]] = c;
  }
  return profiles;
}

inline std::vector<MutationProfile> read_mutation_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open mutation table " + path);
  return read_mutation_csv(f);
}

inline void write_mutation_csv(std::ostream& out, const std::vector<MutationProfile>& profiles) {
  out << "patient_id,gene,status\n";
  for (const auto& p : profiles)
    for (const auto& [gene, call] : p.calls)
      if (call != Call::unknown) out << p.patient_id << ',' << gene << ',' << to_string(call) << '\n';
}

}  // namespace deepglioma::genomics
