#include "fkg/unlearning.hpp"

#include <algorithm>
#include <cmath>

#include "fkg/error.hpp"
#include "fkg/parallel.hpp"

namespace fkg {

const ForgetEntry* ForgetSpec::find(std::size_t client) const {
  for (const auto& e : entries) {
    if (e.client == client) return &e;
  }
  return nullptr;
}

ForgetEntry sample_forget_set(std::size_t client, std::span<const Triple> train, double proportion,
                              std::uint64_t seed) {
  if (!(proportion > 0.0 && proportion < 1.0)) {
    throw ConfigError("forget proportion must be in (0, 1), got " + std::to_string(proportion));
  }
  if (train.empty()) throw Error("client " + std::to_string(client) + " has an empty training set");
  // Guard against 0.01 * 100 evaluating to 1.0000000000000002.
  const double raw = proportion * static_cast<double>(train.size());
  auto count = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
  count = std::clamp<std::size_t>(count, 1, train.size());

  std::vector<std::size_t> idx(train.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(derive_seed(seed, stream::forget, client));
  for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
  std::vector<char> chosen(train.size(), 0);
  for (std::size_t i = 0; i < count; ++i) chosen[idx[i]] = 1;

  ForgetEntry e;
  e.client = client;
  for (std::size_t i = 0; i < train.size(); ++i) (chosen[i] ? e.forget : e.retain).push_back(train[i]);
  return e;
}

ForgetSpec sample_forget_spec(const Federation& fed, std::span<const std::size_t> clients, double proportion,
                              std::uint64_t seed) {
  std::vector<std::size_t> sorted(clients.begin(), clients.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  ForgetSpec spec;
  for (auto k : sorted) {
    if (k >= fed.client_count()) throw Error("no client " + std::to_string(k));
    spec.entries.push_back(sample_forget_set(k, fed.shards[k]->splits.train, proportion, seed));
  }
  return spec;
}

namespace {

TrainConfig with_batch(const TrainConfig& model, const UnlearnConfig& config) {
  TrainConfig c = model;
  c.batch_size = config.batch_size;
  c.weights.distill = config.weights.distill;
  c.weights.soft = config.weights.soft;
  return c;
}

// Epoch quota of round `round` when `total` epochs are spread over `rounds`.
std::size_t quota(std::size_t total, std::size_t rounds, std::size_t round) {
  return total / rounds + (round < total % rounds ? 1 : 0);
}

}  // namespace

void interference_step(ClientState& client, std::span<const Triple> forget, const TrainConfig& model,
                       const UnlearnConfig& config, std::size_t epochs, Rng& rng) {
  const auto cfg = with_batch(model, config);
  for (std::size_t e = 0; e < epochs; ++e) {
    interference_epoch(client, forget, cfg, cfg.weights, config.use_hard_confusion, rng);
  }
}

void decay_step(ClientState& client, std::span<const Triple> retain, const TrainConfig& model,
                const UnlearnConfig& config, std::size_t epochs, Rng& rng) {
  const auto cfg = with_batch(model, config);
  for (std::size_t e = 0; e < epochs; ++e) mutual_epoch(client, retain, cfg, rng, true);
}

void run_federated_unlearning(Federation& fed, const ForgetSpec& spec, const TrainConfig& model,
                              const UnlearnConfig& config) {
  if (spec.entries.empty()) throw Error("unlearning needs at least one client with a forgetting set");
  if (fed.mode == TrainingMode::Centralized) throw Error("unlearning requires client-side tables");
  if (config.rounds == 0) throw ConfigError("unlearning rounds must be >= 1");
  std::vector<std::size_t> clients;
  for (const auto& e : spec.entries) {
    if (e.client >= fed.client_count()) throw Error("no client " + std::to_string(e.client));
    if (e.forget.empty()) throw Error("client " + std::to_string(e.client) + " has an empty forgetting set");
    clients.push_back(e.client);
  }
  for (std::size_t round = 0; round < config.rounds; ++round) {
    parallel_for(spec.entries.size(), config.workers, [&](std::size_t i) {
      const auto& entry = spec.entries[i];
      auto& client = fed.clients[entry.client];
      client.global_entities = distribute_avatar(fed.server.entities, fed.mapping, entry.client);
      Rng rng(derive_seed(config.seed, stream::unlearn_round, entry.client, round));
      interference_step(client, entry.forget, model, config, quota(config.interference_epochs, config.rounds, round),
                        rng);
      decay_step(client, entry.retain, model, config, quota(config.decay_epochs, config.rounds, round), rng);
    });
    std::vector<const EmbeddingTable*> avatars;
    for (auto k : clients) avatars.push_back(&fed.clients[k].global_entities);
    fed.server.entities = aggregate(fed.server.entities, clients, avatars, fed.mapping);
  }
}

TrainingResult retrain_baseline(const Federation& raw, const ForgetSpec& spec, TrainingMode mode,
                                const TrainConfig& config) {
  std::vector<std::shared_ptr<const ClientShard>> shards;
  for (std::size_t k = 0; k < raw.shards.size(); ++k) {
    const auto* entry = spec.find(k);
    shards.push_back(entry ? std::make_shared<const ClientShard>(with_training_set(*raw.shards[k], entry->retain))
                           : raw.shards[k]);
  }
  return run_federated_training(mode, std::move(shards), raw.mapping.global_entities, raw.global_relations, config);
}

}  // namespace fkg
