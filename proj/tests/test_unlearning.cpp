#include <doctest.h>

#include <algorithm>
#include <set>
#include <utility>

#include "fkg/error.hpp"
#include "fkg/unlearning.hpp"
#include "helpers.hpp"

using namespace fkg;
using fkg::test::small_config;
using fkg::test::toy_federation;

namespace {

std::vector<Triple> numbered(std::size_t n) {
  std::vector<Triple> t;
  for (std::size_t i = 0; i < n; ++i) t.push_back({static_cast<EntityId>(i), 0, static_cast<EntityId>(i + 1)});
  return t;
}

double mean_score(const ClientState& c, std::span<const Triple> triples, ModelKind kind, const EmbeddingTable& ent) {
  double s = 0.0;
  for (const auto& t : triples) s += score(kind, ent.row(t.head), c.relations.row(t.relation), ent.row(t.tail));
  return s / static_cast<double>(triples.size());
}

UnlearnConfig small_unlearn(std::uint64_t seed = 0) {
  UnlearnConfig u;
  u.batch_size = 64;
  u.seed = seed;
  return u;
}

}  // namespace

TEST_CASE("forgetting set size is the ceiling of the proportion") {
  CHECK(sample_forget_set(0, numbered(100), 0.01, 1).forget.size() == 1);
  CHECK(sample_forget_set(0, numbered(250), 0.01, 1).forget.size() == 3);
  CHECK(sample_forget_set(0, numbered(7), 0.01, 1).forget.size() == 1);
  CHECK(sample_forget_set(0, numbered(1000), 0.1, 1).forget.size() == 100);
}

TEST_CASE("forget and retain partition the training set in order") {
  const auto train = numbered(300);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto e = sample_forget_set(2, train, 0.05, seed);
    CHECK(e.client == 2);
    CHECK(e.forget.size() + e.retain.size() == train.size());
    std::multiset<Triple> all(e.forget.begin(), e.forget.end());
    all.insert(e.retain.begin(), e.retain.end());
    CHECK(all == std::multiset<Triple>(train.begin(), train.end()));
    CHECK(std::is_sorted(e.forget.begin(), e.forget.end()));
    CHECK(std::is_sorted(e.retain.begin(), e.retain.end()));
    CHECK(sample_forget_set(2, train, 0.05, seed).forget == e.forget);
  }
  CHECK(sample_forget_set(0, train, 0.05, 1).forget != sample_forget_set(1, train, 0.05, 1).forget);
}

TEST_CASE("invalid forgetting requests") {
  CHECK_THROWS_AS(sample_forget_set(0, numbered(10), 0.0, 1), ConfigError);
  CHECK_THROWS_AS(sample_forget_set(0, numbered(10), 1.0, 1), ConfigError);
  CHECK_THROWS_AS(sample_forget_set(0, {}, 0.1, 1), Error);

  const auto toy = toy_federation(1);
  const auto config = small_config();
  auto fed = init_federation(TrainingMode::FedLU, toy.shards, toy.entities, toy.relations, config);
  CHECK_THROWS_AS(run_federated_unlearning(fed, ForgetSpec{}, config, small_unlearn()), Error);
  const std::vector<std::size_t> missing{9};
  CHECK_THROWS_AS(sample_forget_spec(fed, missing, 0.1, 0), Error);
}

TEST_CASE("forget spec covers the listed clients once, ascending") {
  const auto toy = toy_federation(2);
  const auto fed = init_federation(TrainingMode::FedLU, toy.shards, toy.entities, toy.relations, small_config());
  const std::vector<std::size_t> clients{2, 0, 2};
  const auto spec = sample_forget_spec(fed, clients, 0.1, 3);
  REQUIRE(spec.entries.size() == 2);
  CHECK(spec.entries[0].client == 0);
  CHECK(spec.entries[1].client == 2);
  CHECK(spec.find(1) == nullptr);
  CHECK(spec.find(2) == &spec.entries[1]);
}

TEST_CASE("clients outside the unlearning set are untouched") {
  const auto toy = toy_federation(3);
  const auto config = small_config(1);
  auto fed = run_federated_training(TrainingMode::FedLU, toy.shards, toy.entities, toy.relations, config).best;
  const auto before = fed;
  const std::vector<std::size_t> only{0};
  const auto spec = sample_forget_spec(fed, only, 0.1, 2);
  run_federated_unlearning(fed, spec, config, small_unlearn());
  CHECK(fed.clients[1] == before.clients[1]);
  CHECK(fed.clients[2] == before.clients[2]);
  CHECK(!(fed.clients[0].local_entities == before.clients[0].local_entities));
  // Server rows of entities client 0 does not hold keep their value.
  const auto& held = toy.shards[0]->entity_globals;
  for (EntityId e = 0; e < toy.entities; ++e) {
    if (std::binary_search(held.begin(), held.end(), e)) continue;
    const auto a = std::as_const(fed.server.entities).row(e);
    const auto b = before.server.entities.row(e);
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }
}

TEST_CASE("interference lowers forgetting-set scores epoch by epoch") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto toy = toy_federation(10 + seed);
    auto config = small_config(seed);
    config.rounds = 5;
    auto fed = run_federated_training(TrainingMode::FedLU, toy.shards, toy.entities, toy.relations, config).best;
    auto& client = fed.clients[0];
    const auto entry = sample_forget_set(0, client.shard->splits.train, 0.1, seed);
    Rng rng(seed);
    auto u = small_unlearn(seed);
    u.batch_size = 1 << 20;
    double last = mean_score(client, entry.forget, config.kind, client.local_entities);
    for (int epoch = 0; epoch < 5; ++epoch) {
      interference_step(client, entry.forget, config, u, 1, rng);
      const double now = mean_score(client, entry.forget, config.kind, client.local_entities);
      CHECK(now < last);
      last = now;
    }
  }
}

TEST_CASE("zero decay epochs changes nothing") {
  const auto toy = toy_federation(4);
  const auto config = small_config(2);
  auto fed = init_federation(TrainingMode::FedLU, toy.shards, toy.entities, toy.relations, config);
  const auto before = fed.clients[1];
  Rng rng(1);
  decay_step(fed.clients[1], fed.shards[1]->splits.train, config, small_unlearn(), 0, rng);
  CHECK(fed.clients[1] == before);
}

TEST_CASE("unlearning is deterministic and worker independent") {
  const auto toy = toy_federation(5);
  const auto config = small_config(3);
  const auto trained = run_federated_training(TrainingMode::FedLU, toy.shards, toy.entities, toy.relations, config);
  const std::vector<std::size_t> all{0, 1, 2};
  const auto spec = sample_forget_spec(trained.best, all, 0.05, 7);
  auto a = trained.best, b = trained.best;
  auto u = small_unlearn(4);
  u.rounds = 2;
  run_federated_unlearning(a, spec, config, u);
  u.workers = 3;
  run_federated_unlearning(b, spec, config, u);
  CHECK(a.server.entities == b.server.entities);
  for (std::size_t k = 0; k < 3; ++k) CHECK(a.clients[k] == b.clients[k]);
}

TEST_CASE("retraining without forgetting entries is ordinary training") {
  const auto toy = toy_federation(6);
  const auto config = small_config(5);
  const auto trained = run_federated_training(TrainingMode::FedLU, toy.shards, toy.entities, toy.relations, config);
  const auto again = retrain_baseline(trained.best, ForgetSpec{}, TrainingMode::FedLU, config);
  CHECK(again.best.server.entities == trained.best.server.entities);
  for (std::size_t k = 0; k < 3; ++k) CHECK(again.best.clients[k] == trained.best.clients[k]);
}

TEST_CASE("retraining drops the forgetting set from training") {
  const auto toy = toy_federation(7);
  const auto config = small_config(6);
  const auto trained = run_federated_training(TrainingMode::FedE, toy.shards, toy.entities, toy.relations, config);
  const std::vector<std::size_t> one{1};
  const auto spec = sample_forget_spec(trained.best, one, 0.2, 1);
  const auto again = retrain_baseline(trained.best, spec, TrainingMode::FedE, config);
  const auto& shard = *again.best.shards[1];
  CHECK(shard.splits.train == spec.entries[0].retain);
  for (const auto& t : spec.entries[0].forget) CHECK(!shard.known.contains(t));
  CHECK(again.best.shards[0] == trained.best.shards[0]);
}
