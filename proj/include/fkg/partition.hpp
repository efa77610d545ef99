#pragma once

// Heterogeneous federated dataset construction: relation co-occurrence,
// spectral or random relation clustering, and triple distribution.

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "fkg/kg.hpp"
#include "fkg/linalg.hpp"

namespace fkg {

/// Symmetric |R| x |R| count matrix with zero diagonal. Entry (a, b) counts
/// the entities whose incident-relation set contains both a and b.
class CoOccurrenceMatrix {
 public:
  CoOccurrenceMatrix() = default;
  explicit CoOccurrenceMatrix(std::size_t n) : n_(n), counts_(n * n, 0) {}

  std::size_t size() const noexcept { return n_; }
  std::uint64_t operator()(std::size_t a, std::size_t b) const { return counts_[a * n_ + b]; }
  std::uint64_t& operator()(std::size_t a, std::size_t b) { return counts_[a * n_ + b]; }

 private:
  std::size_t n_ = 0;
  std::vector<std::uint64_t> counts_;
};

/// Indexed by relation id, so the dimension is kg.relation_bound().
CoOccurrenceMatrix build_cooccurrence(const KnowledgeGraph& kg);

/// Unnormalized graph Laplacian D - M.
Matrix laplacian(const CoOccurrenceMatrix& m);

struct RelationClustering {
  std::vector<std::uint32_t> cluster_of;  // relation id -> cluster
  std::size_t k = 0;

  std::vector<std::size_t> sizes() const;
  std::vector<RelationId> members(std::uint32_t cluster) const;
};

struct KMeansResult {
  std::vector<std::uint32_t> labels;
  Matrix centroids;
  int iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding. Ties go to the lowest cluster id;
/// empty clusters are refilled with the point farthest from its centroid in
/// the currently largest cluster.
KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, int max_iterations = 100);

/// Spectral relation clustering: eigenvectors of the k smallest Laplacian
/// eigenvalues as features, then k-means.
RelationClustering spectral_partition(const CoOccurrenceMatrix& m, std::size_t k, std::uint64_t seed);

/// Shuffled relations dealt round-robin; cluster sizes differ by at most one.
RelationClustering random_partition(std::size_t relation_count, std::size_t k, std::uint64_t seed);

/// Splits kg by relation cluster. Throws if a relation of kg is not covered
/// or a cluster receives no triples.
std::vector<KnowledgeGraph> distribute(const KnowledgeGraph& kg, const RelationClustering& clustering);

struct ShardSummary {
  std::size_t relations = 0;
  std::size_t entities = 0;
  std::size_t triples = 0;
  double avg_degree = 0.0;
  double avg_clustering = 0.0;
  std::map<std::size_t, std::size_t> degree_histogram;  // degree -> entity count
};

struct ShardStats {
  std::vector<ShardSummary> shards;
  std::size_t overlapping_entities = 0;  // entities present in >= 2 shards
};

/// Degree is the incident triple count (undirected multigraph). The
/// clustering coefficient uses the simple undirected projection without
/// self-loops; entities with fewer than two neighbours contribute 0.
ShardSummary summarize_shard(const KnowledgeGraph& shard);
ShardStats shard_stats(std::span<const KnowledgeGraph> shards);

}  // namespace fkg
