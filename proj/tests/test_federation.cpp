#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "fkg/error.hpp"
#include "fkg/federation.hpp"
#include "helpers.hpp"

using namespace fkg;
using fkg::test::small_config;
using fkg::test::toy_federation;

namespace {

std::shared_ptr<const ClientShard> holder(std::size_t id, std::vector<EntityId> globals) {
  auto s = std::make_shared<ClientShard>();
  s->id = id;
  s->entity_globals = std::move(globals);
  return s;
}

EmbeddingTable filled(std::size_t rows, std::size_t dim, Rng& rng) {
  EmbeddingTable t(ModelKind::TransE, TableRole::Entity, rows, dim);
  for (auto& x : t.data()) x = rng.uniform(-1.0, 1.0);
  return t;
}

// Sum of the local-table losses can only be compared through scores, so
// this measures mean prediction loss directly.
double mean_prediction_loss(const ClientState& c, const TrainConfig& config) {
  const auto model = config.score_model();
  Rng rng(99);
  double total = 0.0;
  for (const auto& t : c.shard->splits.train) {
    const auto negs = sample_negatives(t, config.negatives, c.shard->known, c.shard->entity_count(), rng);
    ScoredBatch b;
    b.positive = model(c.global_entities.row(t.head), c.relations.row(t.relation), c.global_entities.row(t.tail));
    for (const auto& n : negs) {
      b.negatives.push_back(
          model(c.global_entities.row(n.head), c.relations.row(n.relation), c.global_entities.row(n.tail)));
    }
    total += prediction_loss(b).value;
  }
  return total / static_cast<double>(c.shard->splits.train.size());
}

}  // namespace

TEST_CASE("entity mappings and holder counts") {
  const std::vector<std::shared_ptr<const ClientShard>> shards{holder(0, {0, 2, 3}), holder(1, {2, 4})};
  const auto m = make_mappings(shards, 6);
  CHECK(m.global_entities == 6);
  CHECK(m.local_to_global[1] == std::vector<EntityId>{2, 4});
  CHECK(m.counts == std::vector<std::uint32_t>{1, 0, 2, 1, 1, 0});
  const std::vector<std::size_t> only_second{1};
  CHECK(m.counts_for(only_second) == std::vector<std::uint32_t>{0, 0, 1, 0, 1, 0});
}

TEST_CASE("avatar distribution copies rows in local order") {
  Rng rng(1);
  const auto global = filled(5, 3, rng);
  const std::vector<std::shared_ptr<const ClientShard>> shards{holder(0, {1, 4})};
  const auto m = make_mappings(shards, 5);
  const auto avatar = distribute_avatar(global, m, 0);
  REQUIRE(avatar.rows() == 2);
  CHECK(std::equal(avatar.row(0).begin(), avatar.row(0).end(), global.row(1).begin()));
  CHECK(std::equal(avatar.row(1).begin(), avatar.row(1).end(), global.row(4).begin()));
}

TEST_CASE("aggregation examples") {
  const std::vector<std::shared_ptr<const ClientShard>> shards{holder(0, {0, 1}), holder(1, {1, 2})};
  const auto m = make_mappings(shards, 4);
  EmbeddingTable prev(ModelKind::TransE, TableRole::Entity, 4, 1);
  for (std::size_t i = 0; i < 4; ++i) prev.row(i)[0] = 10.0 + static_cast<double>(i);
  EmbeddingTable a(ModelKind::TransE, TableRole::Entity, 2, 1), b = a;
  a.row(0)[0] = 1.0;
  a.row(1)[0] = 1.0;
  b.row(0)[0] = 3.0;
  b.row(1)[0] = 5.0;
  const std::vector<std::size_t> both{0, 1};
  const std::vector<const EmbeddingTable*> avatars{&a, &b};
  const auto g = aggregate(prev, both, avatars, m);
  CHECK(g.row(0)[0] == 1.0);
  CHECK(g.row(1)[0] == 2.0);  // mean of 1 and 3
  CHECK(g.row(2)[0] == 5.0);
  CHECK(g.row(3)[0] == 13.0);  // held by nobody: unchanged

  const std::vector<std::size_t> second{1};
  const std::vector<const EmbeddingTable*> one{&b};
  const auto h = aggregate(prev, second, one, m);
  CHECK(h.row(0)[0] == 10.0);  // its holder was not sampled
  CHECK(h.row(1)[0] == 3.0);
}

TEST_CASE("aggregation matches a brute-force oracle") {
  Rng rng(2);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 5 + rng.below(30), k = 1 + rng.below(5), dim = 1 + rng.below(6);
    std::vector<std::shared_ptr<const ClientShard>> shards;
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<EntityId> g;
      for (EntityId e = 0; e < n; ++e) {
        if (rng.uniform(0.0, 1.0) < 0.5) g.push_back(e);
      }
      shards.push_back(holder(c, g));
    }
    const auto m = make_mappings(shards, n);
    const auto prev = filled(n, dim, rng);
    std::vector<EmbeddingTable> avatars;
    for (std::size_t c = 0; c < k; ++c) avatars.push_back(filled(shards[c]->entity_count(), dim, rng));
    std::vector<std::size_t> sampled;
    for (std::size_t c = 0; c < k; ++c) {
      if (rng.uniform(0.0, 1.0) < 0.7) sampled.push_back(c);
    }
    std::vector<const EmbeddingTable*> ptrs;
    for (auto c : sampled) ptrs.push_back(&avatars[c]);
    const auto got = aggregate(prev, sampled, ptrs, m);

    for (EntityId e = 0; e < n; ++e) {
      std::vector<double> sum(dim, 0.0);
      int holders = 0;
      for (auto c : sampled) {
        const auto& g = shards[c]->entity_globals;
        const auto it = std::find(g.begin(), g.end(), e);
        if (it == g.end()) continue;
        const auto row = avatars[c].row(static_cast<std::size_t>(it - g.begin()));
        for (std::size_t d = 0; d < dim; ++d) sum[d] += row[d];
        ++holders;
      }
      for (std::size_t d = 0; d < dim; ++d) {
        const double expect = holders ? sum[d] / holders : prev.row(e)[d];
        worst = std::max(worst, std::abs(got.row(e)[d] - expect));
      }
    }
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("distributing then aggregating untouched avatars is a fixed point") {
  Rng rng(3);
  const std::vector<std::shared_ptr<const ClientShard>> shards{holder(0, {0, 1, 5}), holder(1, {1, 2, 3}),
                                                               holder(2, {3, 5})};
  const auto m = make_mappings(shards, 6);
  const auto global = filled(6, 4, rng);
  std::vector<EmbeddingTable> avatars;
  for (std::size_t c = 0; c < 3; ++c) avatars.push_back(distribute_avatar(global, m, c));
  const std::vector<std::size_t> all{0, 1, 2};
  const std::vector<const EmbeddingTable*> ptrs{&avatars[0], &avatars[1], &avatars[2]};
  CHECK(aggregate(global, all, ptrs, m) == global);
}

TEST_CASE("client sampling") {
  CHECK(sample_clients(5, 1.0, 0, 1) == std::vector<std::size_t>{0, 1, 2, 3, 4});
  for (std::size_t round = 0; round < 20; ++round) {
    const auto s = sample_clients(10, 0.34, 7, round);
    CHECK(s.size() == 3);
    CHECK(std::is_sorted(s.begin(), s.end()));
    CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 3);
    CHECK(s.back() < 10);
    CHECK(sample_clients(10, 0.34, 7, round) == s);
  }
  CHECK(sample_clients(4, 0.01, 0, 0).size() == 1);
}

TEST_CASE("training modes parse and report views") {
  for (auto m : {TrainingMode::FedLU, TrainingMode::FedE, TrainingMode::FedProx, TrainingMode::Independent,
                 TrainingMode::Centralized}) {
    CHECK(parse_training_mode(to_string(m)) == m);
  }
  CHECK_THROWS_AS(parse_training_mode("fedavg"), ConfigError);
  CHECK(parse_view("global") == View::Global);
  CHECK_THROWS_AS(parse_view("both"), ConfigError);
  CHECK(primary_view(TrainingMode::FedLU) == View::Local);
  CHECK(primary_view(TrainingMode::Independent) == View::Local);
  CHECK(primary_view(TrainingMode::FedE) == View::Global);
}

TEST_CASE("client shards are recoded to local ids") {
  const auto toy = toy_federation(1);
  for (const auto& s : toy.shards) {
    CHECK(std::is_sorted(s->entity_globals.begin(), s->entity_globals.end()));
    const auto total = s->splits.train.size() + s->splits.valid.size() + s->splits.test.size();
    CHECK(total > 0);
    for (const auto& t : s->splits.train) {
      CHECK(t.head < s->entity_count());
      CHECK(t.tail < s->entity_count());
      CHECK(t.relation < s->relation_count());
      CHECK(s->known.contains(t));
    }
  }
}

TEST_CASE("FedLU with no distillation trains the same local tables as independent") {
  const auto toy = toy_federation(2);
  auto config = small_config(4);
  config.weights.distill = 0.0;
  const auto fedlu = run_federated_training(TrainingMode::FedLU, toy.shards, toy.entities, toy.relations, config);
  const auto indep =
      run_federated_training(TrainingMode::Independent, toy.shards, toy.entities, toy.relations, config);
  for (std::size_t k = 0; k < toy.shards.size(); ++k) {
    CHECK(fedlu.best.clients[k].local_entities == indep.best.clients[k].local_entities);
    CHECK(fedlu.best.clients[k].relations == indep.best.clients[k].relations);
  }
}

TEST_CASE("training is deterministic and independent of worker count") {
  const auto toy = toy_federation(3);
  for (auto mode : {TrainingMode::FedLU, TrainingMode::FedE, TrainingMode::FedProx, TrainingMode::Centralized}) {
    auto config = small_config(5);
    const auto a = run_federated_training(mode, toy.shards, toy.entities, toy.relations, config);
    config.workers = 3;
    const auto b = run_federated_training(mode, toy.shards, toy.entities, toy.relations, config);
    CHECK(a.best.server.entities == b.best.server.entities);
    for (std::size_t k = 0; k < toy.shards.size(); ++k) CHECK(a.best.clients[k] == b.best.clients[k]);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].metrics == b.history[i].metrics);
    if (mode == TrainingMode::Centralized) CHECK(*a.best.central == *b.best.central);
  }
}

TEST_CASE("a different seed gives a different model") {
  const auto toy = toy_federation(3);
  const auto a = run_federated_training(TrainingMode::FedLU, toy.shards, toy.entities, toy.relations, small_config(1));
  const auto b = run_federated_training(TrainingMode::FedLU, toy.shards, toy.entities, toy.relations, small_config(2));
  CHECK(!(a.best.clients[0].local_entities == b.best.clients[0].local_entities));
}

TEST_CASE("initial local tables depend only on seed and client") {
  const auto toy = toy_federation(4);
  const auto config = small_config(6);
  const auto a = init_federation(TrainingMode::FedLU, toy.shards, toy.entities, toy.relations, config);
  const auto b = init_federation(TrainingMode::Independent, toy.shards, toy.entities, toy.relations, config);
  for (std::size_t k = 0; k < toy.shards.size(); ++k) {
    CHECK(a.clients[k].local_entities == b.clients[k].local_entities);
    CHECK(a.clients[k].relations == b.clients[k].relations);
  }
}

TEST_CASE("an empty training set leaves the avatar unchanged") {
  const auto toy = toy_federation(5);
  const auto config = small_config(1);
  auto fed = init_federation(TrainingMode::FedLU, toy.shards, toy.entities, toy.relations, config);
  auto& client = fed.clients[0];
  const auto before = client.global_entities;
  Rng rng(1);
  mutual_epoch(client, {}, config, rng);
  CHECK(client.global_entities == before);
  avatar_epoch(client, {}, config, rng);
  CHECK(client.global_entities == before);
}

TEST_CASE("avatar training lowers the prediction loss on a toy shard") {
  const auto toy = toy_federation(6);
  auto config = small_config(2);
  config.batch_size = 1 << 20;  // full batch
  auto fed = init_federation(TrainingMode::FedE, toy.shards, toy.entities, toy.relations, config);
  auto& client = fed.clients[0];
  Rng rng(3);
  const double start = mean_prediction_loss(client, config);
  double last = start;
  for (int step = 0; step < 10; ++step) {
    avatar_epoch(client, client.shard->splits.train, config, rng);
    const double now = mean_prediction_loss(client, config);
    CHECK(now <= last + 1e-3);
    last = now;
  }
  CHECK(last < start);
}

TEST_CASE("local round rejects a mis-sized avatar") {
  const auto toy = toy_federation(7);
  const auto config = small_config();
  auto fed = init_federation(TrainingMode::FedLU, toy.shards, toy.entities, toy.relations, config);
  const EmbeddingTable wrong(ModelKind::TransE, TableRole::Entity, 1, config.dim);
  CHECK_THROWS_AS(local_round(fed.clients[0], wrong, TrainingMode::FedLU, config, 1), Error);
}

TEST_CASE("no rounds leaves the initial state as best") {
  const auto toy = toy_federation(8);
  auto config = small_config(3);
  config.rounds = 0;
  const auto init = init_federation(TrainingMode::FedLU, toy.shards, toy.entities, toy.relations, config);
  const auto r = run_federated_training(TrainingMode::FedLU, toy.shards, toy.entities, toy.relations, config);
  CHECK(r.best.server.entities == init.server.entities);
  CHECK(r.best.clients[0].local_entities == init.clients[0].local_entities);
  CHECK(r.progress.completed_rounds == 0);
}

TEST_CASE("early stopping and history bookkeeping") {
  const auto toy = toy_federation(9);
  auto config = small_config(4);
  config.rounds = 6;
  config.eval_interval = 2;
  const auto r = run_federated_training(TrainingMode::FedLU, toy.shards, toy.entities, toy.relations, config);
  CHECK(r.progress.finished);
  std::set<std::size_t> rounds;
  for (const auto& row : r.history) {
    rounds.insert(row.round);
    CHECK(row.split == "valid");
  }
  CHECK(rounds == std::set<std::size_t>{2, 4, 6});
  CHECK(r.progress.best_round >= 2);

  // A fresh session stepped by hand records the same history.
  TrainingSession session(init_federation(TrainingMode::FedLU, toy.shards, toy.entities, toy.relations, config),
                          config);
  while (session.step()) {
  }
  REQUIRE(session.history().size() == r.history.size());
  for (std::size_t i = 0; i < r.history.size(); ++i) CHECK(session.history()[i].metrics == r.history[i].metrics);
}

TEST_CASE("centralized views project the central model") {
  const auto toy = toy_federation(10);
  const auto config = small_config(1);
  const auto r = run_federated_training(TrainingMode::Centralized, toy.shards, toy.entities, toy.relations, config);
  const auto local = client_model(r.best, 1, View::Local);
  const auto global = client_model(r.best, 1, View::Global);
  CHECK(local.entities == global.entities);
  const auto e = toy.shards[1]->entity_globals[0];
  const auto& central = r.best.central->local_entities;
  CHECK(std::equal(local.entities.row(0).begin(), local.entities.row(0).end(), central.row(e).begin()));
}
