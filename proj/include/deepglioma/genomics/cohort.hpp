#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "deepglioma/genomics/panel.hpp"

namespace deepglioma::genomics {

enum class Subgroup { glioblastoma, oligodendroglioma, astrocytoma };

inline constexpr std::array<Subgroup, 3> kSubgroups{Subgroup::glioblastoma, Subgroup::oligodendroglioma,
                                                    Subgroup::astrocytoma};

inline std::string_view subgroup_name(Subgroup s) {
  switch (s) {
    case Subgroup::glioblastoma: return "Glioblastoma, IDH-wildtype";
    case Subgroup::oligodendroglioma: return "Oligodendroglioma, IDH-mutant, 1p19q-codeleted";
    case Subgroup::astrocytoma: return "Astrocytoma, IDH-mutant";
  }
  return "";
}

inline std::string_view subgroup_tag(Subgroup s) {
  switch (s) {
    case Subgroup::glioblastoma: return "gbm";
    case Subgroup::oligodendroglioma: return "oligo";
    case Subgroup::astrocytoma: return "astro";
  }
  return "";
}

inline Subgroup parse_subgroup(std::string_view tag) {
  for (auto s : kSubgroups)
    if (subgroup_tag(s) == tag) return s;
  throw std::invalid_argument("unknown subgroup '" + std::string(tag) + "' (expected gbm, oligo or astro)");
}

/// Cohort composition for the three-gene panel {IDH, 1p19q, ATRX}.
struct CohortPriors {
  std::array<double, 3> subgroup_share{0.619, 0.172, 0.21};  // gbm, oligo, astro
  double atrx_in_astro = 0.78;
  double atrx_in_gbm = 0.05;
};

/// Splits `n` into the three subgroups by largest remainder; deterministic.
inline std::array<std::size_t, 3> allocate_subgroups(std::size_t n, const std::array<double, 3>& share) {
  const double total = share[0] + share[1] + share[2];
  if (!(total > 0.0) || *std::min_element(share.begin(), share.end()) < 0.0) {
    throw std::invalid_argument("allocate_subgroups: shares must be non-negative with a positive sum");
  }
  std::array<std::size_t, 3> count{};
  std::array<double, 3> rem{};
  std::size_t used = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = static_cast<double>(n) * share[k] / total;
    count[k] = static_cast<std::size_t>(std::floor(exact));
    rem[k] = exact - static_cast<double>(count[k]);
    used += count[k];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b]; });
  for (std::size_t i = 0; used < n; ++i, ++used) ++count[order[i % 3]];
  return count;
}

/// Calls consistent with a subgroup. IDH and 1p19q are fixed by the subgroup;
/// ATRX is drawn with the subgroup's mutation rate (never in oligodendroglioma).
inline MutationProfile subgroup_profile(const std::string& id, Subgroup s, const CohortPriors& pri, std::mt19937_64& rng) {
  std::bernoulli_distribution astro_atrx(pri.atrx_in_astro), gbm_atrx(pri.atrx_in_gbm);
  MutationProfile p{id, {}};
  auto set = [&](const char* g, bool mutant) { p.calls[g] = mutant ? Call::mutant : Call::wildtype; };
  switch (s) {
    case Subgroup::glioblastoma:
      set("IDH", false), set("1p19q", false), set("ATRX", gbm_atrx(rng));
      break;
    case Subgroup::oligodendroglioma:
      set("IDH", true), set("1p19q", true), set("ATRX", false);
      break;
    case Subgroup::astrocytoma:
      set("IDH", true), set("1p19q", false), set("ATRX", astro_atrx(rng));
      break;
  }
  return p;
}

struct CohortMember {
  MutationProfile profile;
  Subgroup subgroup;
};

/// `n` patients with ids `<prefix>0001`, ..., subgroups allocated by share and
/// shuffled into a seed-determined order.
inline std::vector<CohortMember> synth_cohort(std::size_t n, std::uint64_t seed, const CohortPriors& pri = {},
                                              const std::string& prefix = "P") {
  const auto counts = allocate_subgroups(n, pri.subgroup_share);
  std::vector<Subgroup> groups;
  for (int k = 0; k < 3; ++k) groups.insert(groups.end(), counts[k], kSubgroups[k]);
  std::mt19937_64 rng(seed);
  std::shuffle(groups.begin(), groups.end(), rng);
  std::vector<CohortMember> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "%s%04zu", prefix.c_str(), i + 1);
    out.push_back({subgroup_profile(id, groups[i], pri, rng), groups[i]});
  }
  return out;
}

inline std::vector<MutationProfile> profiles_of(const std::vector<CohortMember>& cohort) {
  std::vector<MutationProfile> out;
  out.reserve(cohort.size());
  for (const auto& m : cohort) out.push_back(m.profile);
  return out;
}

}  // namespace deepglioma::genomics
