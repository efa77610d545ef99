#include "fkg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <unordered_set>

#include "fkg/error.hpp"
#include "fkg/random.hpp"

namespace fkg {

namespace {

double gaussian(Rng& rng) {
  const double u1 = 1.0 - rng.uniform();  // (0, 1]
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

LoadResult make_synthetic_kg(const SyntheticSpec& spec) {
  if (spec.entities < 2 || spec.relations == 0 || spec.domains == 0 || spec.domains > spec.relations) {
    throw ConfigError("synthetic KG needs >= 2 entities and 1 <= domains <= relations");
  }
  Rng rng(derive_seed(spec.seed, 0x5e));
  const std::size_t d = spec.latent_dim;

  std::vector<double> z(spec.entities * d);
  for (auto& x : z) x = gaussian(rng);
  std::vector<double> w(spec.relations * d);
  for (auto& x : w) x = spec.translation_scale * gaussian(rng);

  if (!(spec.domain_correlation >= 0.0 && spec.domain_correlation <= 1.0)) {
    throw ConfigError("domain correlation must be in [0, 1]");
  }
  const double rho = spec.domain_correlation;
  const double noise = std::sqrt(1.0 - rho * rho);
  std::vector<double> zd(spec.domains * spec.entities * d);
  for (std::size_t i = 0; i < zd.size(); ++i) zd[i] = rho * z[i % z.size()] + noise * gaussian(rng);

  std::vector<std::vector<EntityId>> pools(spec.domains);
  for (std::size_t e = 0; e < spec.entities; ++e) {
    const auto home = rng.below(spec.domains);
    pools[home].push_back(static_cast<EntityId>(e));
    if (spec.domains > 1 && rng.uniform() < spec.overlap) {
      auto other = rng.below(spec.domains - 1);
      if (other >= home) ++other;
      pools[other].push_back(static_cast<EntityId>(e));
    }
  }

  Vocabulary vocab;
  for (std::size_t e = 0; e < spec.entities; ++e) vocab.entities.intern("e" + std::to_string(e));
  for (std::size_t r = 0; r < spec.relations; ++r) vocab.relations.intern("r" + std::to_string(r));

  std::vector<Triple> triples;
  std::unordered_set<std::uint64_t> seen;
  const std::size_t per_relation = spec.triples / spec.relations;
  std::vector<std::pair<double, EntityId>> dist;
  for (std::size_t r = 0; r < spec.relations; ++r) {
    const auto& pool = pools[r % spec.domains];
    const double* zr = zd.data() + (r % spec.domains) * spec.entities * d;
    if (pool.size() < 2) continue;
    const std::size_t want = per_relation + (r < spec.triples % spec.relations ? 1 : 0);
    std::size_t made = 0;
    for (std::size_t attempt = 0; made < want && attempt < 20 * want; ++attempt) {
      const EntityId h = pool[rng.below(pool.size())];
      dist.clear();
      for (auto c : pool) {
        if (c == h) continue;
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = zr[h * d + j] + w[r * d + j] - zr[c * d + j];
          s += diff * diff;
        }
        dist.emplace_back(s, c);
      }
      const std::size_t choices = std::min(spec.tail_choices, dist.size());
      std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(choices), dist.end());
      const EntityId t = dist[rng.below(choices)].second;
      const Triple triple{h, static_cast<RelationId>(r), t};
      if (seen.insert(pack(triple)).second) {
        triples.push_back(triple);
        ++made;
      }
    }
  }
  rng.shuffle(std::span<Triple>(triples));
  return {KnowledgeGraph(std::move(triples)), std::move(vocab)};
}

}  // namespace fkg
