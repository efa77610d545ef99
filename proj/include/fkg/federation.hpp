#pragma once

// Client-server simulation of federated KG embedding: entity mappings,
// avatar distribution, mutual-distillation local training, aggregation,
// baselines and early stopping.

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fkg/embedding.hpp"
#include "fkg/evaluation.hpp"
#include "fkg/kg.hpp"
#include "fkg/losses.hpp"

namespace fkg {

/// One client's data in local ids. Local entity (relation) i corresponds to
/// entity_globals[i] (relation_globals[i]); both lists are sorted.
struct ClientShard {
  std::size_t id = 0;
  std::vector<EntityId> entity_globals;
  std::vector<RelationId> relation_globals;
  SplitDataset splits;
  FilterIndex filter;  // train + valid + test
  TripleSet known;     // training triples; negatives must avoid these

  std::size_t entity_count() const noexcept { return entity_globals.size(); }
  std::size_t relation_count() const noexcept { return relation_globals.size(); }
};

/// Recodes a shard (global ids) to local ids and splits it 8:1:1 with a
/// stream derived from (seed, id).
ClientShard make_client_shard(std::size_t id, const KnowledgeGraph& shard, std::uint64_t seed);

/// Copy of `shard` whose training set is `train` (local ids). The filter
/// index is kept; the negative-sampling membership follows the new train set.
ClientShard with_training_set(const ClientShard& shard, std::vector<Triple> train);

/// Single shard over the union of all clients' training triples, in global
/// ids. Used by the centralized baseline.
ClientShard make_central_shard(std::span<const std::shared_ptr<const ClientShard>> shards,
                               std::size_t global_entities, std::size_t global_relations);

/// Local-to-global entity maps and how many clients hold each global entity.
struct EntityMapping {
  std::size_t global_entities = 0;
  std::vector<std::vector<EntityId>> local_to_global;
  std::vector<std::uint32_t> counts;

  /// Holder counts restricted to the given clients.
  std::vector<std::uint32_t> counts_for(std::span<const std::size_t> clients) const;
};

EntityMapping make_mappings(std::span<const std::shared_ptr<const ClientShard>> shards, std::size_t global_entities);

/// Rows of `global` for client k, in local order.
EmbeddingTable distribute_avatar(const EmbeddingTable& global, const EntityMapping& mapping, std::size_t client);

/// Per global entity: mean of the avatar rows of the sampled clients that
/// hold it. Entities held by no sampled client keep their row from
/// `previous`. avatars[i] belongs to clients[i].
EmbeddingTable aggregate(const EmbeddingTable& previous, std::span<const std::size_t> clients,
                         std::span<const EmbeddingTable* const> avatars, const EntityMapping& mapping);

enum class TrainingMode { FedLU, FedE, FedProx, Independent, Centralized };

std::string_view to_string(TrainingMode mode);
TrainingMode parse_training_mode(std::string_view name);

/// Which entity table to score with. Relations are always the client's own.
enum class View { Local, Global };
std::string_view to_string(View view);
View parse_view(std::string_view name);

struct TrainConfig {
  ModelKind kind = ModelKind::TransE;
  std::size_t dim = 256;
  double margin = 9.0;
  std::size_t rounds = 100;
  double fraction = 1.0;
  std::size_t local_epochs = 3;
  std::size_t batch_size = 1024;
  std::size_t negatives = 256;
  LossWeights weights;
  AdamConfig adam;
  NegativeWeighting weighting;
  NegativeSampling sampling;
  std::size_t eval_interval = 5;
  std::size_t patience = 3;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  ScoreModel score_model() const { return {kind, margin}; }
};

struct ClientState {
  std::shared_ptr<const ClientShard> shard;
  EmbeddingTable local_entities;
  EmbeddingTable relations;
  EmbeddingTable global_entities;  // the client's copy of its global avatar
  AdamState local_entity_opt;
  AdamState relation_opt;
  AdamState global_entity_opt;

  friend bool operator==(const ClientState& a, const ClientState& b) {
    return a.local_entities == b.local_entities && a.relations == b.relations &&
           a.global_entities == b.global_entities && a.local_entity_opt == b.local_entity_opt &&
           a.relation_opt == b.relation_opt && a.global_entity_opt == b.global_entity_opt;
  }
};

struct ServerState {
  EmbeddingTable entities;
  std::size_t round = 0;
};

/// Complete training state of one run.
struct Federation {
  TrainingMode mode = TrainingMode::FedLU;
  std::vector<std::shared_ptr<const ClientShard>> shards;
  EntityMapping mapping;
  std::size_t global_relations = 0;
  ServerState server;
  std::vector<ClientState> clients;
  std::optional<ClientState> central;  // centralized baseline only

  std::size_t client_count() const noexcept { return shards.size(); }
};

/// Fresh tables seeded from config.seed. Local tables of a client depend only
/// on (seed, client id), so runs in different modes start from the same
/// local initialization.
Federation init_federation(TrainingMode mode, std::vector<std::shared_ptr<const ClientShard>> shards,
                           std::size_t global_entities, std::size_t global_relations, const TrainConfig& config);

/// Clients taking part in `round`: max(1, round(fraction * K)) distinct ids,
/// ascending.
std::vector<std::size_t> sample_clients(std::size_t client_count, double fraction, std::uint64_t seed,
                                        std::size_t round);

// --- Batch procedures -------------------------------------------------------
// Each runs one pass over `triples` (local ids) in shuffled batches with fresh
// negatives drawn from `rng`.

/// Mutual distillation: per batch, update local entities and relations on
/// prediction + mu_distill * KL(local || global), then the global avatar on
/// prediction + mu_distill * KL(global || local) with relations frozen.
/// With train_global = false only the first half runs.
void mutual_epoch(ClientState& client, std::span<const Triple> triples, const TrainConfig& config, Rng& rng,
                  bool train_global = true);

/// Plain prediction-loss training of the avatar and relations; with
/// `anchor` set a proximal term pulls touched rows towards it.
void avatar_epoch(ClientState& client, std::span<const Triple> triples, const TrainConfig& config, Rng& rng,
                  const EmbeddingTable* anchor = nullptr);

/// Retroactive interference on a forgetting set: local tables on
/// hard + mu_soft * soft + mu_distill * KL(local || global), then the avatar
/// on the mirrored loss.
void interference_epoch(ClientState& client, std::span<const Triple> triples, const TrainConfig& config,
                        const LossWeights& weights, bool use_hard, Rng& rng);

/// One communication round of client-side work for `mode`, starting from
/// the received avatar. Returns nothing; the trained avatar is
/// client.global_entities.
void local_round(ClientState& client, const EmbeddingTable& avatar, TrainingMode mode, const TrainConfig& config,
                 std::size_t round);

// --- Evaluation -------------------------------------------------------------

/// Selects, per client, which triples to rank.
using TripleSelector = std::function<std::span<const Triple>(const ClientShard&)>;

TripleSelector select_valid();
TripleSelector select_test();

/// Tables client k is scored with under `view`. For the centralized
/// baseline both views are the central tables projected onto the client.
struct ClientModel {
  EmbeddingTable entities;
  EmbeddingTable relations;
};
ClientModel client_model(const Federation& fed, std::size_t client, View view);

Metrics evaluate_client(const Federation& fed, std::size_t client, View view, std::span<const Triple> triples,
                        std::size_t workers = 1);
MetricsReport evaluate_federation(const Federation& fed, View view, const TripleSelector& select,
                                  std::size_t workers = 1);

/// View driving early stopping: local for FedLU and independent, global for
/// the rest.
View primary_view(TrainingMode mode);
/// Views worth reporting for a mode.
std::vector<View> report_views(TrainingMode mode);

// --- Training loop ----------------------------------------------------------

struct HistoryRow {
  std::size_t round = 0;
  std::optional<std::size_t> client;  // nullopt = macro
  std::string split;
  View view = View::Local;
  Metrics metrics;
};
using History = std::vector<HistoryRow>;

struct TrainingProgress {
  std::size_t completed_rounds = 0;
  double best_metric = -std::numeric_limits<double>::infinity();
  std::size_t best_round = 0;
  std::size_t bad_evaluations = 0;
  bool finished = false;
};

/// Algorithm driver: rounds of sampling, avatar distribution, local training
/// and aggregation; validation macro-MRR every eval_interval rounds (and at
/// the last round); stops after `patience` non-improving evaluations and
/// keeps the best state.
class TrainingSession {
 public:
  TrainingSession(Federation initial, TrainConfig config);
  /// Resume from a saved state.
  TrainingSession(Federation current, Federation best, TrainingProgress progress, History history,
                  TrainConfig config);

  /// Runs one round (plus evaluation when due). Returns false once finished.
  bool step();
  /// Runs to completion. `on_evaluation` fires after every evaluation.
  void run(const std::function<void(const TrainingSession&)>& on_evaluation = {});

  const Federation& current() const noexcept { return current_; }
  const Federation& best() const noexcept { return best_; }
  const History& history() const noexcept { return history_; }
  const TrainingProgress& progress() const noexcept { return progress_; }
  const TrainConfig& config() const noexcept { return config_; }

 private:
  void train_round(std::size_t round);
  void evaluate(std::size_t round);

  TrainConfig config_;
  Federation current_;
  Federation best_;
  TrainingProgress progress_;
  History history_;
  bool evaluated_last_ = false;
};

struct TrainingResult {
  Federation best;
  History history;
  TrainingProgress progress;
};

TrainingResult run_federated_training(TrainingMode mode, std::vector<std::shared_ptr<const ClientShard>> shards,
                                      std::size_t global_entities, std::size_t global_relations,
                                      const TrainConfig& config);

}  // namespace fkg
