#pragma once

// Triple storage, vocabularies, splitting and filtered-evaluation indexes.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace fkg {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

/// Packs a triple into 64 bits (21 bits per field).
std::uint64_t pack(const Triple& t);

inline constexpr std::uint32_t kMaxId = (1u << 21) - 1;

/// Label <-> dense id bijection.
class Labels {
 public:
  /// Returns the id of `label`, assigning the next id on first sight.
  std::uint32_t intern(std::string_view label);
  /// Id of an existing label; throws if unknown.
  std::uint32_t id(std::string_view label) const;
  bool contains(std::string_view label) const;
  const std::string& label(std::uint32_t id) const { return labels_.at(id); }
  std::size_t size() const noexcept { return labels_.size(); }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

struct Vocabulary {
  Labels entities;
  Labels relations;
};

/// Triple collection whose entity and relation sets are exactly those used by
/// the triples.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;
  /// Drops duplicates, keeping first occurrences in order.
  explicit KnowledgeGraph(std::vector<Triple> triples);

  std::span<const Triple> triples() const noexcept { return triples_; }
  std::size_t size() const noexcept { return triples_.size(); }
  bool empty() const noexcept { return triples_.empty(); }
  /// Sorted distinct entity ids appearing as head or tail.
  const std::vector<EntityId>& entities() const noexcept { return entities_; }
  /// Sorted distinct relation ids.
  const std::vector<RelationId>& relations() const noexcept { return relations_; }
  /// One past the largest entity / relation id (0 when empty).
  std::size_t entity_bound() const noexcept;
  std::size_t relation_bound() const noexcept;

  std::size_t duplicates_dropped() const noexcept { return duplicates_dropped_; }

 private:
  std::vector<Triple> triples_;
  std::vector<EntityId> entities_;
  std::vector<RelationId> relations_;
  std::size_t duplicates_dropped_ = 0;
};

struct LoadResult {
  KnowledgeGraph graph;
  Vocabulary vocab;
};

/// Parses `head<TAB>relation<TAB>tail` lines; blank lines are skipped and ids
/// are assigned in first-appearance order. Throws ParseError on a line with
/// the wrong number of fields.
LoadResult load_triples(std::string_view text);

/// Same, coding labels against (and extending) an existing vocabulary.
KnowledgeGraph load_triples(std::string_view text, Vocabulary& vocab);

LoadResult load_triples_file(const std::string& path);
KnowledgeGraph load_triples_file(const std::string& path, Vocabulary& vocab);

void write_triples(std::ostream& out, std::span<const Triple> triples, const Vocabulary& vocab);
/// `label<TAB>id` per line.
void write_labels(std::ostream& out, const Labels& labels);
Labels read_labels(std::istream& in);

struct SplitDataset {
  std::vector<Triple> train;
  std::vector<Triple> valid;
  std::vector<Triple> test;

  std::size_t size() const noexcept { return train.size() + valid.size() + test.size(); }
};

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
};

/// Seeded shuffle, then floor(0.8n) / floor(0.1n) / remainder.
SplitDataset split_dataset(const KnowledgeGraph& kg, std::uint64_t seed, SplitRatios ratios = {});

/// Known-true heads and tails over train, valid and test of one dataset.
class FilterIndex {
 public:
  FilterIndex() = default;
  explicit FilterIndex(const SplitDataset& splits);

  const std::vector<EntityId>& tails(EntityId head, RelationId relation) const;
  const std::vector<EntityId>& heads(RelationId relation, EntityId tail) const;
  bool contains(const Triple& t) const { return members_.contains(pack(t)); }
  std::size_t size() const noexcept { return members_.size(); }

 private:
  static std::uint64_t key(std::uint32_t a, std::uint32_t b) {
    return (std::uint64_t{a} << 32) | b;
  }
  std::unordered_map<std::uint64_t, std::vector<EntityId>> tails_;
  std::unordered_map<std::uint64_t, std::vector<EntityId>> heads_;
  std::unordered_set<std::uint64_t> members_;
};

FilterIndex build_filter_index(const SplitDataset& splits);

/// Hash set of packed triples.
class TripleSet {
 public:
  TripleSet() = default;
  explicit TripleSet(std::span<const Triple> triples);
  void insert(const Triple& t) { set_.insert(pack(t)); }
  bool contains(const Triple& t) const { return set_.contains(pack(t)); }
  std::size_t size() const noexcept { return set_.size(); }

 private:
  std::unordered_set<std::uint64_t> set_;
};

}  // namespace fkg
