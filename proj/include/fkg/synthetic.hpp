#pragma once

// Synthetic heterogeneous knowledge graphs for desk-scale experiments.
//
// Entities get latent vectors; each relation is a latent translation and
// belongs to one domain. A triple (h, r, t) takes t among the few entities of
// r's domain pool closest to z_h + w_r, so the graph is learnable by
// translation-style models. Domain pools overlap only partially, which makes
// relation co-occurrence block structured. An entity's latent vector differs
// per domain (correlated with a shared one), so the same entity plays
// somewhat different roles on different shards.

#include <cstdint>

#include "fkg/kg.hpp"

namespace fkg {

struct SyntheticSpec {
  std::size_t entities = 2000;
  std::size_t relations = 20;
  std::size_t triples = 10000;
  std::size_t domains = 3;
  std::size_t latent_dim = 8;
  double translation_scale = 2.0;  // std-dev of relation translations
  double domain_correlation = 0.5;  // correlation of per-domain latents with the shared one
  double overlap = 0.3;           // chance an entity also joins a second domain
  std::size_t tail_choices = 3;   // tail drawn among this many nearest candidates
  std::uint64_t seed = 0;
};

/// Labels are "e<i>" and "r<j>". The result may hold slightly fewer triples
/// than requested when a relation runs out of distinct facts.
LoadResult make_synthetic_kg(const SyntheticSpec& spec);

}  // namespace fkg
