#pragma once

// Filtered link-prediction ranking, Hits@N and MRR.

#include <span>
#include <vector>

#include "fkg/embedding.hpp"
#include "fkg/kg.hpp"

namespace fkg {

enum class Direction { Head, Tail };

/// Entity and relation tables scored together.
struct ModelView {
  ModelKind kind;
  const EmbeddingTable& entities;
  const EmbeddingTable& relations;

  double score(const Triple& t) const {
    return fkg::score(kind, entities.row(t.head), relations.row(t.relation), entities.row(t.tail));
  }
};

/// Filtered rank of the true head (or tail) of `query` among candidate
/// entities [0, candidate_count). Candidates forming other known triples are
/// skipped. rank = 1 + #{strictly higher} + floor(#{equal, excluding the
/// answer} / 2).
std::size_t rank_query(const ModelView& model, const Triple& query, Direction direction,
                       std::size_t candidate_count, const FilterIndex& filter);

struct Metrics {
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  double mrr = 0.0;
  std::size_t queries = 0;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

Metrics metrics_from_ranks(std::span<const std::size_t> ranks);

/// Ranks the head and the tail query of every triple and pools them.
Metrics evaluate(const ModelView& model, std::span<const Triple> triples, std::size_t candidate_count,
                 const FilterIndex& filter, std::size_t workers = 1);

struct MetricsReport {
  std::vector<Metrics> clients;
  Metrics macro;  // unweighted mean over clients
  Metrics micro;  // query-weighted mean
};

MetricsReport make_report(std::vector<Metrics> clients);

}  // namespace fkg
