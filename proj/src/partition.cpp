#include "fkg/partition.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "fkg/error.hpp"
#include "fkg/random.hpp"

namespace fkg {

CoOccurrenceMatrix build_cooccurrence(const KnowledgeGraph& kg) {
  const std::size_t n = kg.relation_bound();
  CoOccurrenceMatrix m(n);
  std::vector<std::vector<RelationId>> incident(kg.entity_bound());
  for (const auto& t : kg.triples()) {
    incident[t.head].push_back(t.relation);
    incident[t.tail].push_back(t.relation);
  }
  for (auto& rels : incident) {
    std::sort(rels.begin(), rels.end());
    rels.erase(std::unique(rels.begin(), rels.end()), rels.end());
    for (std::size_t i = 0; i < rels.size(); ++i) {
      for (std::size_t j = i + 1; j < rels.size(); ++j) {
        ++m(rels[i], rels[j]);
        ++m(rels[j], rels[i]);
      }
    }
  }
  return m;
}

Matrix laplacian(const CoOccurrenceMatrix& m) {
  const std::size_t n = m.size();
  Matrix l(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double degree = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const auto w = static_cast<double>(m(i, j));
      l(i, j) = -w;
      degree += w;
    }
    l(i, i) = degree;
  }
  return l;
}

std::vector<std::size_t> RelationClustering::sizes() const {
  std::vector<std::size_t> out(k, 0);
  for (auto c : cluster_of) ++out[c];
  return out;
}

std::vector<RelationId> RelationClustering::members(std::uint32_t cluster) const {
  std::vector<RelationId> out;
  for (std::size_t r = 0; r < cluster_of.size(); ++r) {
    if (cluster_of[r] == cluster) out.push_back(static_cast<RelationId>(r));
  }
  return out;
}

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::uint32_t nearest(const Matrix& centroids, std::span<const double> point) {
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = squared_distance(centroids.row(c), point);
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::uint32_t>(c);
    }
  }
  return best;
}

Matrix seed_plus_plus(const Matrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  Matrix centroids(k, points.cols());
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::size_t chosen = rng.below(n);
  for (std::size_t c = 0; c < k; ++c) {
    std::copy_n(points.row(chosen).begin(), points.cols(), centroids.row(c).begin());
    if (c + 1 == k) break;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dist[i] = std::min(dist[i], squared_distance(points.row(i), centroids.row(c)));
      total += dist[i];
    }
    if (total <= 0.0) {
      // Fewer distinct points than clusters; duplicates are resolved by the
      // empty-cluster repair.
      chosen = rng.below(n);
      continue;
    }
    double target = rng.uniform() * total;
    chosen = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      target -= dist[i];
      if (target < 0.0 && dist[i] > 0.0) {
        chosen = i;
        break;
      }
    }
  }
  return centroids;
}

void recompute_centroids(const Matrix& points, const std::vector<std::uint32_t>& labels, Matrix& centroids) {
  const std::size_t k = centroids.rows();
  std::vector<std::size_t> counts(k, 0);
  Matrix sums(k, points.cols());
  for (std::size_t i = 0; i < points.rows(); ++i) {
    auto row = sums.row(labels[i]);
    auto p = points.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += p[j];
    ++counts[labels[i]];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) continue;
    auto dst = centroids.row(c);
    auto src = sums.row(c);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = src[j] / static_cast<double>(counts[c]);
  }
}

// Returns true if any label changed.
bool repair_empty(const Matrix& points, std::vector<std::uint32_t>& labels, Matrix& centroids) {
  const std::size_t k = centroids.rows();
  bool changed = false;
  while (true) {
    std::vector<std::size_t> counts(k, 0);
    for (auto l : labels) ++counts[l];
    const auto empty = std::find(counts.begin(), counts.end(), std::size_t{0});
    if (empty == counts.end()) return changed;
    const auto largest =
        static_cast<std::uint32_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    if (counts[largest] < 2) throw Error("kmeans: more clusters than points");
    std::size_t far = points.rows();
    double far_d = -1.0;
    for (std::size_t i = 0; i < points.rows(); ++i) {
      if (labels[i] != largest) continue;
      const double d = squared_distance(points.row(i), centroids.row(largest));
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    const auto target = static_cast<std::uint32_t>(empty - counts.begin());
    labels[far] = target;
    std::copy_n(points.row(far).begin(), points.cols(), centroids.row(target).begin());
    recompute_centroids(points, labels, centroids);
    changed = true;
  }
}

}  // namespace

KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, int max_iterations) {
  const std::size_t n = points.rows();
  if (k == 0 || k > n) {
    throw Error("kmeans: k=" + std::to_string(k) + " must be in [1, " + std::to_string(n) + "]");
  }
  Rng rng(seed);
  KMeansResult result;
  result.centroids = seed_plus_plus(points, k, rng);
  result.labels.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) result.labels[i] = nearest(result.centroids, points.row(i));
  recompute_centroids(points, result.labels, result.centroids);
  repair_empty(points, result.labels, result.centroids);

  for (result.iterations = 1; result.iterations < max_iterations; ++result.iterations) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = nearest(result.centroids, points.row(i));
      if (c != result.labels[i]) {
        result.labels[i] = c;
        changed = true;
      }
    }
    recompute_centroids(points, result.labels, result.centroids);
    changed = repair_empty(points, result.labels, result.centroids) || changed;
    if (!changed) break;
  }
  return result;
}

RelationClustering spectral_partition(const CoOccurrenceMatrix& m, std::size_t k, std::uint64_t seed) {
  const std::size_t n = m.size();
  if (k == 0 || k > n) {
    throw Error("cannot split " + std::to_string(n) + " relations into " + std::to_string(k) + " clusters");
  }
  RelationClustering out;
  out.k = k;
  if (k == 1) {
    out.cluster_of.assign(n, 0);
    return out;
  }
  const auto eig = symmetric_eigen(laplacian(m));
  Matrix features(n, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) features(i, j) = eig.vectors(i, j);
  out.cluster_of = kmeans(features, k, derive_seed(seed, stream::partition)).labels;
  return out;
}

RelationClustering random_partition(std::size_t relation_count, std::size_t k, std::uint64_t seed) {
  if (k == 0 || k > relation_count) {
    throw Error("cannot split " + std::to_string(relation_count) + " relations into " + std::to_string(k) +
                " clusters");
  }
  std::vector<RelationId> order(relation_count);
  std::iota(order.begin(), order.end(), RelationId{0});
  Rng rng(derive_seed(seed, stream::partition));
  rng.shuffle(std::span<RelationId>(order));
  RelationClustering out;
  out.k = k;
  out.cluster_of.assign(relation_count, 0);
  for (std::size_t i = 0; i < relation_count; ++i) {
    out.cluster_of[order[i]] = static_cast<std::uint32_t>(i % k);
  }
  return out;
}

std::vector<KnowledgeGraph> distribute(const KnowledgeGraph& kg, const RelationClustering& clustering) {
  std::vector<std::vector<Triple>> parts(clustering.k);
  for (const auto& t : kg.triples()) {
    if (t.relation >= clustering.cluster_of.size()) {
      throw Error("relation " + std::to_string(t.relation) + " is not covered by the clustering");
    }
    parts[clustering.cluster_of[t.relation]].push_back(t);
  }
  std::vector<KnowledgeGraph> shards;
  shards.reserve(parts.size());
  for (std::size_t c = 0; c < parts.size(); ++c) {
    if (parts[c].empty()) throw Error("cluster " + std::to_string(c) + " received no triples");
    shards.emplace_back(std::move(parts[c]));
  }
  return shards;
}

ShardSummary summarize_shard(const KnowledgeGraph& shard) {
  ShardSummary s;
  s.relations = shard.relations().size();
  s.entities = shard.entities().size();
  s.triples = shard.size();
  if (s.entities == 0) return s;

  // Compact local ids.
  const auto& ents = shard.entities();
  auto local = [&](EntityId e) {
    return static_cast<std::size_t>(std::lower_bound(ents.begin(), ents.end(), e) - ents.begin());
  };
  std::vector<std::size_t> degree(ents.size(), 0);
  std::vector<std::vector<std::uint32_t>> adj(ents.size());
  for (const auto& t : shard.triples()) {
    const auto h = local(t.head);
    const auto tl = local(t.tail);
    ++degree[h];
    if (tl != h) {
      ++degree[tl];
      adj[h].push_back(static_cast<std::uint32_t>(tl));
      adj[tl].push_back(static_cast<std::uint32_t>(h));
    }
  }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }

  double degree_sum = 0.0;
  for (auto d : degree) {
    degree_sum += static_cast<double>(d);
    ++s.degree_histogram[d];
  }
  s.avg_degree = degree_sum / static_cast<double>(ents.size());

  std::vector<char> mark(ents.size(), 0);
  double coeff_sum = 0.0;
  for (std::size_t v = 0; v < adj.size(); ++v) {
    const auto k = adj[v].size();
    if (k < 2) continue;
    for (auto u : adj[v]) mark[u] = 1;
    std::size_t links = 0;
    for (auto u : adj[v]) {
      for (auto w : adj[u]) links += mark[w];
    }
    for (auto u : adj[v]) mark[u] = 0;
    // Each neighbour-neighbour edge was counted from both ends.
    coeff_sum += static_cast<double>(links) / static_cast<double>(k * (k - 1));
  }
  s.avg_clustering = coeff_sum / static_cast<double>(ents.size());
  return s;
}

ShardStats shard_stats(std::span<const KnowledgeGraph> shards) {
  ShardStats stats;
  std::unordered_map<EntityId, std::size_t> presence;
  for (const auto& shard : shards) {
    stats.shards.push_back(summarize_shard(shard));
    for (auto e : shard.entities()) ++presence[e];
  }
  for (const auto& [e, count] : presence) stats.overlapping_entities += count >= 2 ? 1 : 0;
  return stats;
}

}  // namespace fkg
