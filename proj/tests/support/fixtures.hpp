#pragma once

// Shared synthetic fixtures for unit and acceptance tests.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "deepglioma/genomics/glove.hpp"

namespace dgtest {

namespace gx = deepglioma::genomics;

/// Six genes in two planted subgroups. Type-A patients are mutant for genes
/// 0-2 and wildtype for 3-5; type-B patients the reverse. A `mix` fraction of
/// patients has one random call flipped.
struct BlockCohort {
  gx::GenePanel panel;
  std::vector<gx::MutationProfile> profiles;
  std::vector<gx::TokenGroup> groups;
};

inline BlockCohort block_cohort(std::size_t patients, double mix, std::uint64_t seed) {
  BlockCohort b;
  b.panel = gx::GenePanel({"G0", "G1", "G2", "G3", "G4", "G5"});
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution flip(mix);
  std::uniform_int_distribution<int> pick(0, 5);
  for (std::size_t p = 0; p < patients; ++p) {
    const bool type_a = p % 2 == 0;
    gx::MutationProfile prof{"B" + std::to_string(p), {}};
    for (int g = 0; g < 6; ++g) {
      const bool mutant = (g < 3) == type_a;
      prof.calls[b.panel.gene(g)] = mutant ? gx::Call::mutant : gx::Call::wildtype;
    }
    if (flip(rng)) {
      auto& c = prof.calls[b.panel.gene(pick(rng))];
      c = c == gx::Call::mutant ? gx::Call::wildtype : gx::Call::mutant;
    }
    b.profiles.push_back(std::move(prof));
  }
  gx::TokenGroup a{"A", {}}, bb{"B", {}};
  for (std::size_t g = 0; g < 6; ++g) {
    a.tokens.push_back(b.panel.token(g, g < 3 ? gx::Call::mutant : gx::Call::wildtype));
    bb.tokens.push_back(b.panel.token(g, g < 3 ? gx::Call::wildtype : gx::Call::mutant));
  }
  b.groups = {a, bb};
  return b;
}

/// Block of a token under `groups`, or -1.
inline int block_of(const std::vector<gx::TokenGroup>& groups, std::size_t token) {
  for (std::size_t k = 0; k < groups.size(); ++k)
    for (auto t : groups[k].tokens)
      if (t == token) return static_cast<int>(k);
  return -1;
}

}  // namespace dgtest
