#include "fkg/federation.hpp"

#include <algorithm>
#include <cmath>

#include "fkg/error.hpp"
#include "fkg/parallel.hpp"

namespace fkg {

namespace {

template <typename Id>
Id local_id(const std::vector<Id>& globals, Id global) {
  return static_cast<Id>(std::lower_bound(globals.begin(), globals.end(), global) - globals.begin());
}

}  // namespace

ClientShard make_client_shard(std::size_t id, const KnowledgeGraph& shard, std::uint64_t seed) {
  ClientShard out;
  out.id = id;
  out.entity_globals = shard.entities();
  out.relation_globals = shard.relations();
  std::vector<Triple> local;
  local.reserve(shard.size());
  for (const auto& t : shard.triples()) {
    local.push_back({local_id(out.entity_globals, t.head), local_id(out.relation_globals, t.relation),
                     local_id(out.entity_globals, t.tail)});
  }
  out.splits = split_dataset(KnowledgeGraph(std::move(local)), derive_seed(seed, stream::split, id));
  out.filter = FilterIndex(out.splits);
  out.known = TripleSet(out.splits.train);
  return out;
}

ClientShard with_training_set(const ClientShard& shard, std::vector<Triple> train) {
  ClientShard out = shard;
  out.splits.train = std::move(train);
  out.known = TripleSet(out.splits.train);
  return out;
}

ClientShard make_central_shard(std::span<const std::shared_ptr<const ClientShard>> shards,
                               std::size_t global_entities, std::size_t global_relations) {
  ClientShard out;
  out.id = 0;
  out.entity_globals.resize(global_entities);
  for (std::size_t i = 0; i < global_entities; ++i) out.entity_globals[i] = static_cast<EntityId>(i);
  out.relation_globals.resize(global_relations);
  for (std::size_t i = 0; i < global_relations; ++i) out.relation_globals[i] = static_cast<RelationId>(i);
  for (const auto& s : shards) {
    for (const auto& t : s->splits.train) {
      out.splits.train.push_back(
          {s->entity_globals[t.head], s->relation_globals[t.relation], s->entity_globals[t.tail]});
    }
  }
  out.known = TripleSet(out.splits.train);
  return out;
}

std::vector<std::uint32_t> EntityMapping::counts_for(std::span<const std::size_t> clients) const {
  std::vector<std::uint32_t> out(global_entities, 0);
  for (auto k : clients) {
    for (auto g : local_to_global.at(k)) ++out[g];
  }
  return out;
}

EntityMapping make_mappings(std::span<const std::shared_ptr<const ClientShard>> shards, std::size_t global_entities) {
  EntityMapping m;
  m.global_entities = global_entities;
  m.counts.assign(global_entities, 0);
  for (const auto& s : shards) {
    for (auto g : s->entity_globals) {
      if (g >= global_entities) throw Error("entity id " + std::to_string(g) + " outside the global vocabulary");
      ++m.counts[g];
    }
    m.local_to_global.push_back(s->entity_globals);
  }
  return m;
}

EmbeddingTable distribute_avatar(const EmbeddingTable& global, const EntityMapping& mapping, std::size_t client) {
  const auto& ids = mapping.local_to_global.at(client);
  EmbeddingTable avatar(global.kind(), global.role(), ids.size(), global.dim());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto src = global.row(ids[i]);
    std::copy(src.begin(), src.end(), avatar.row(i).begin());
  }
  return avatar;
}

EmbeddingTable aggregate(const EmbeddingTable& previous, std::span<const std::size_t> clients,
                         std::span<const EmbeddingTable* const> avatars, const EntityMapping& mapping) {
  if (clients.size() != avatars.size()) throw Error("aggregate: one avatar per sampled client expected");
  const std::size_t w = previous.width();
  std::vector<double> sums(previous.data().size(), 0.0);
  const auto counts = mapping.counts_for(clients);
  for (std::size_t i = 0; i < clients.size(); ++i) {
    const auto& ids = mapping.local_to_global.at(clients[i]);
    const auto& avatar = *avatars[i];
    if (avatar.rows() != ids.size() || avatar.width() != w) {
      throw Error("aggregate: avatar of client " + std::to_string(clients[i]) + " has the wrong shape");
    }
    for (std::size_t local = 0; local < ids.size(); ++local) {
      const auto src = avatar.row(local);
      double* dst = sums.data() + std::size_t{ids[local]} * w;
      for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
    }
  }
  EmbeddingTable next = previous;
  for (std::size_t g = 0; g < mapping.global_entities; ++g) {
    if (counts[g] == 0) continue;
    auto row = next.row(g);
    const double n = counts[g];
    for (std::size_t j = 0; j < w; ++j) row[j] = sums[g * w + j] / n;
  }
  return next;
}

std::string_view to_string(TrainingMode mode) {
  switch (mode) {
    case TrainingMode::FedLU: return "fedlu";
    case TrainingMode::FedE: return "fede";
    case TrainingMode::FedProx: return "fedprox";
    case TrainingMode::Independent: return "independent";
    case TrainingMode::Centralized: return "centralized";
  }
  return "?";
}

TrainingMode parse_training_mode(std::string_view name) {
  for (auto m : {TrainingMode::FedLU, TrainingMode::FedE, TrainingMode::FedProx, TrainingMode::Independent,
                 TrainingMode::Centralized}) {
    if (name == to_string(m)) return m;
  }
  throw ConfigError("unknown mode '" + std::string(name) +
                    "' (expected fedlu, fede, fedprox, independent or centralized)");
}

std::string_view to_string(View view) { return view == View::Local ? "local" : "global"; }

View parse_view(std::string_view name) {
  if (name == "local") return View::Local;
  if (name == "global") return View::Global;
  throw ConfigError("unknown view '" + std::string(name) + "' (expected local or global)");
}

Federation init_federation(TrainingMode mode, std::vector<std::shared_ptr<const ClientShard>> shards,
                           std::size_t global_entities, std::size_t global_relations, const TrainConfig& config) {
  if (shards.empty()) throw Error("federation needs at least one client");
  Federation fed;
  fed.mode = mode;
  fed.shards = std::move(shards);
  fed.mapping = make_mappings(fed.shards, global_entities);
  fed.global_relations = global_relations;
  fed.server.entities = init_table(global_entities, config.kind, TableRole::Entity, config.dim,
                                   derive_seed(config.seed, stream::init_global_entity));
  for (std::size_t k = 0; k < fed.shards.size(); ++k) {
    const auto& shard = *fed.shards[k];
    for (auto r : shard.relation_globals) {
      if (r >= global_relations) throw Error("relation id " + std::to_string(r) + " outside the global vocabulary");
    }
    ClientState c;
    c.shard = fed.shards[k];
    c.local_entities = init_table(shard.entity_count(), config.kind, TableRole::Entity, config.dim,
                                  derive_seed(config.seed, stream::init_local_entity, shard.id));
    c.relations = init_table(shard.relation_count(), config.kind, TableRole::Relation, config.dim,
                             derive_seed(config.seed, stream::init_relation, shard.id));
    c.global_entities = distribute_avatar(fed.server.entities, fed.mapping, k);
    c.local_entity_opt = AdamState(c.local_entities, config.adam);
    c.relation_opt = AdamState(c.relations, config.adam);
    c.global_entity_opt = AdamState(c.global_entities, config.adam);
    fed.clients.push_back(std::move(c));
  }
  if (mode == TrainingMode::Centralized) {
    ClientState c;
    c.shard = std::make_shared<const ClientShard>(make_central_shard(fed.shards, global_entities, global_relations));
    c.local_entities = init_table(global_entities, config.kind, TableRole::Entity, config.dim,
                                  derive_seed(config.seed, stream::init_central, 0));
    c.relations = init_table(global_relations, config.kind, TableRole::Relation, config.dim,
                             derive_seed(config.seed, stream::init_central, 1));
    c.global_entities = EmbeddingTable(config.kind, TableRole::Entity, 0, config.dim);
    c.local_entity_opt = AdamState(c.local_entities, config.adam);
    c.relation_opt = AdamState(c.relations, config.adam);
    c.global_entity_opt = AdamState(c.global_entities, config.adam);
    fed.server.entities = c.local_entities;
    fed.central = std::move(c);
  }
  return fed;
}

std::vector<std::size_t> sample_clients(std::size_t client_count, double fraction, std::uint64_t seed,
                                        std::size_t round) {
  const auto wanted = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(client_count)));
  const std::size_t m = std::clamp<std::size_t>(wanted, 1, client_count);
  std::vector<std::size_t> ids(client_count);
  for (std::size_t i = 0; i < client_count; ++i) ids[i] = i;
  if (m < client_count) {
    Rng rng(derive_seed(seed, stream::sampling, round));
    for (std::size_t i = 0; i < m; ++i) std::swap(ids[i], ids[i + rng.below(client_count - i)]);
    ids.resize(m);
    std::sort(ids.begin(), ids.end());
  }
  return ids;
}

// --- batch machinery ----------------------------------------------------------

namespace {

ScoredBatch score_batch(const ScoreModel& model, const EmbeddingTable& ent, const EmbeddingTable& rel,
                        const Triple& pos, std::span<const Triple> negs) {
  ScoredBatch out;
  out.positive = model(ent.row(pos.head), rel.row(pos.relation), ent.row(pos.tail));
  out.negatives.resize(negs.size());
  for (std::size_t j = 0; j < negs.size(); ++j) {
    out.negatives[j] = model(ent.row(negs[j].head), rel.row(negs[j].relation), ent.row(negs[j].tail));
  }
  return out;
}

struct Scratch {
  std::vector<double> head, relation, tail;
};

// Adds scale * dL/dscore * dscore/dparams for every scored triple. Null
// accumulators discard that part of the gradient.
void backprop(ModelKind kind, const EmbeddingTable& ent, const EmbeddingTable& rel, const Triple& pos,
              std::span<const Triple> negs, const LossResult& loss, double scale, RowGradients* ge, RowGradients* gr,
              Scratch& scratch) {
  auto one = [&](const Triple& t, double d) {
    if (d == 0.0) return;
    std::span<double> gh, gt, grr;
    if (ge) {
      const auto ih = ge->touch(t.head);
      const auto it = ge->touch(t.tail);
      gh = ge->slot(ih);
      gt = ge->slot(it);
    } else {
      scratch.head.assign(ent.width(), 0.0);
      scratch.tail.assign(ent.width(), 0.0);
      gh = scratch.head;
      gt = scratch.tail;
    }
    if (gr) {
      grr = gr->slot(gr->touch(t.relation));
    } else {
      scratch.relation.assign(rel.width(), 0.0);
      grr = scratch.relation;
    }
    accumulate_score_gradients(kind, ent.row(t.head), rel.row(t.relation), ent.row(t.tail), scale * d, gh, grr, gt);
  };
  one(pos, loss.d_positive);
  for (std::size_t j = 0; j < negs.size(); ++j) one(negs[j], loss.d_negatives[j]);
}

std::vector<Triple> shuffled(std::span<const Triple> triples, Rng& rng) {
  std::vector<Triple> order(triples.begin(), triples.end());
  rng.shuffle(std::span<Triple>(order));
  return order;
}

using StudentTeacherLoss = std::function<LossResult(const ScoredBatch& student, const ScoredBatch& teacher)>;

// Shared driver for the alternating local/global updates. `uses_teacher`
// skips scoring the teacher side when the loss ignores it.
void alternating_epoch(ClientState& client, std::span<const Triple> triples, const TrainConfig& config, Rng& rng,
                       const StudentTeacherLoss& loss_fn, bool uses_teacher, bool train_global) {
  if (triples.empty()) return;
  const auto model = config.score_model();
  const auto& shard = *client.shard;
  const auto order = shuffled(triples, rng);
  const std::size_t batch_size = std::max<std::size_t>(1, config.batch_size);
  std::vector<std::vector<Triple>> negatives(batch_size);
  RowGradients ge(client.local_entities.width());
  RowGradients gr(client.relations.width());
  RowGradients gg(client.global_entities.width());
  Scratch scratch;
  const ScoredBatch no_teacher;

  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(order.size(), begin + batch_size);
    const double scale = 1.0 / static_cast<double>(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      sample_negatives(order[i], config.negatives, shard.known, shard.entity_count(), rng, negatives[i - begin],
                       config.sampling);
    }

    ge.clear();
    gr.clear();
    for (std::size_t i = begin; i < end; ++i) {
      const auto& negs = negatives[i - begin];
      const auto student = score_batch(model, client.local_entities, client.relations, order[i], negs);
      const auto teacher = uses_teacher
                               ? score_batch(model, client.global_entities, client.relations, order[i], negs)
                               : no_teacher;
      const auto loss = loss_fn(student, teacher);
      backprop(config.kind, client.local_entities, client.relations, order[i], negs, loss, scale, &ge, &gr, scratch);
    }
    adam_step(client.local_entities, ge, client.local_entity_opt);
    adam_step(client.relations, gr, client.relation_opt);

    if (!train_global) continue;
    gg.clear();
    for (std::size_t i = begin; i < end; ++i) {
      const auto& negs = negatives[i - begin];
      const auto student = score_batch(model, client.global_entities, client.relations, order[i], negs);
      const auto teacher = uses_teacher
                               ? score_batch(model, client.local_entities, client.relations, order[i], negs)
                               : no_teacher;
      const auto loss = loss_fn(student, teacher);
      backprop(config.kind, client.global_entities, client.relations, order[i], negs, loss, scale, &gg, nullptr,
               scratch);
    }
    adam_step(client.global_entities, gg, client.global_entity_opt);
  }
}

}  // namespace

void mutual_epoch(ClientState& client, std::span<const Triple> triples, const TrainConfig& config, Rng& rng,
                  bool train_global) {
  const double mu = config.weights.distill;
  const auto weighting = config.weighting;
  alternating_epoch(
      client, triples, config, rng,
      [&](const ScoredBatch& s, const ScoredBatch& t) { return joint_loss(s, t, mu, weighting); }, mu != 0.0,
      train_global);
}

void interference_epoch(ClientState& client, std::span<const Triple> triples, const TrainConfig& config,
                        const LossWeights& weights, bool use_hard, Rng& rng) {
  alternating_epoch(
      client, triples, config, rng,
      [&](const ScoredBatch& s, const ScoredBatch& t) { return interference_loss(s, t, weights, use_hard); },
      weights.distill != 0.0, true);
}

void avatar_epoch(ClientState& client, std::span<const Triple> triples, const TrainConfig& config, Rng& rng,
                  const EmbeddingTable* anchor) {
  if (triples.empty()) return;
  const auto model = config.score_model();
  const auto& shard = *client.shard;
  const auto order = shuffled(triples, rng);
  const std::size_t batch_size = std::max<std::size_t>(1, config.batch_size);
  std::vector<Triple> negs;
  RowGradients ge(client.global_entities.width());
  RowGradients gr(client.relations.width());
  Scratch scratch;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(order.size(), begin + batch_size);
    const double scale = 1.0 / static_cast<double>(end - begin);
    ge.clear();
    gr.clear();
    for (std::size_t i = begin; i < end; ++i) {
      sample_negatives(order[i], config.negatives, shard.known, shard.entity_count(), rng, negs, config.sampling);
      const auto scores = score_batch(model, client.global_entities, client.relations, order[i], negs);
      const auto loss = prediction_loss(scores, config.weighting);
      backprop(config.kind, client.global_entities, client.relations, order[i], negs, loss, scale, &ge, &gr, scratch);
    }
    if (anchor) {
      for (std::size_t slot = 0; slot < ge.rows().size(); ++slot) {
        const auto row = ge.rows()[slot];
        proximal_gradient(client.global_entities.row(row), anchor->row(row), config.weights.prox, ge.slot(slot));
      }
    }
    adam_step(client.global_entities, ge, client.global_entity_opt);
    adam_step(client.relations, gr, client.relation_opt);
  }
}

void local_round(ClientState& client, const EmbeddingTable& avatar, TrainingMode mode, const TrainConfig& config,
                 std::size_t round) {
  if (avatar.rows() != client.shard->entity_count()) {
    throw Error("local_round: avatar has " + std::to_string(avatar.rows()) + " rows, client holds " +
                std::to_string(client.shard->entity_count()) + " entities");
  }
  client.global_entities = avatar;
  Rng rng(derive_seed(config.seed, stream::client_round, client.shard->id, round));
  const auto& train = client.shard->splits.train;
  TrainConfig plain = config;
  plain.weights.distill = 0.0;
  for (std::size_t epoch = 0; epoch < config.local_epochs; ++epoch) {
    switch (mode) {
      case TrainingMode::FedLU: mutual_epoch(client, train, config, rng, true); break;
      case TrainingMode::Independent: mutual_epoch(client, train, plain, rng, false); break;
      case TrainingMode::FedE: avatar_epoch(client, train, config, rng, nullptr); break;
      case TrainingMode::FedProx: avatar_epoch(client, train, config, rng, &avatar); break;
      case TrainingMode::Centralized: throw Error("local_round: centralized training has no client rounds");
    }
  }
  if (mode == TrainingMode::FedE || mode == TrainingMode::FedProx) client.local_entities = client.global_entities;
}

// --- evaluation ---------------------------------------------------------------

TripleSelector select_valid() {
  return [](const ClientShard& s) { return std::span<const Triple>(s.splits.valid); };
}

TripleSelector select_test() {
  return [](const ClientShard& s) { return std::span<const Triple>(s.splits.test); };
}

ClientModel client_model(const Federation& fed, std::size_t client, View view) {
  const auto& c = fed.clients.at(client);
  if (fed.mode == TrainingMode::Centralized) {
    const auto& central = *fed.central;
    ClientModel m{distribute_avatar(central.local_entities, fed.mapping, client),
                  EmbeddingTable(central.relations.kind(), TableRole::Relation, c.shard->relation_count(),
                                 central.relations.dim())};
    for (std::size_t r = 0; r < c.shard->relation_count(); ++r) {
      const auto src = central.relations.row(c.shard->relation_globals[r]);
      std::copy(src.begin(), src.end(), m.relations.row(r).begin());
    }
    return m;
  }
  if (view == View::Local || fed.mode == TrainingMode::Independent) return {c.local_entities, c.relations};
  return {distribute_avatar(fed.server.entities, fed.mapping, client), c.relations};
}

Metrics evaluate_client(const Federation& fed, std::size_t client, View view, std::span<const Triple> triples,
                        std::size_t workers) {
  const auto model = client_model(fed, client, view);
  const ModelView mv{model.entities.kind(), model.entities, model.relations};
  const auto& shard = *fed.clients.at(client).shard;
  return evaluate(mv, triples, shard.entity_count(), shard.filter, workers);
}

MetricsReport evaluate_federation(const Federation& fed, View view, const TripleSelector& select,
                                  std::size_t workers) {
  const std::size_t k = fed.client_count();
  std::vector<Metrics> per_client(k);
  // Parallelize across clients first; leftover workers go to queries.
  const std::size_t inner = std::max<std::size_t>(1, workers / std::max<std::size_t>(1, k));
  parallel_for(k, workers, [&](std::size_t i) {
    per_client[i] = evaluate_client(fed, i, view, select(*fed.shards[i]), inner);
  });
  return make_report(std::move(per_client));
}

View primary_view(TrainingMode mode) {
  return mode == TrainingMode::FedLU || mode == TrainingMode::Independent ? View::Local : View::Global;
}

std::vector<View> report_views(TrainingMode mode) {
  switch (mode) {
    case TrainingMode::Independent: return {View::Local};
    case TrainingMode::Centralized: return {View::Global};
    default: return {View::Local, View::Global};
  }
}

// --- training session ---------------------------------------------------------

TrainingSession::TrainingSession(Federation initial, TrainConfig config)
    : config_(std::move(config)), current_(std::move(initial)), best_(current_) {
  if (config_.eval_interval == 0) throw ConfigError("eval_interval must be >= 1");
}

TrainingSession::TrainingSession(Federation current, Federation best, TrainingProgress progress, History history,
                                 TrainConfig config)
    : config_(std::move(config)), current_(std::move(current)), best_(std::move(best)), progress_(progress),
      history_(std::move(history)) {
  if (config_.eval_interval == 0) throw ConfigError("eval_interval must be >= 1");
}

void TrainingSession::train_round(std::size_t round) {
  auto& fed = current_;
  switch (fed.mode) {
    case TrainingMode::Centralized: {
      auto& central = *fed.central;
      TrainConfig plain = config_;
      plain.weights.distill = 0.0;
      Rng rng(derive_seed(config_.seed, stream::central_round, 0, round));
      for (std::size_t e = 0; e < config_.local_epochs; ++e) {
        mutual_epoch(central, central.shard->splits.train, plain, rng, false);
      }
      fed.server.entities = central.local_entities;
      break;
    }
    case TrainingMode::Independent: {
      parallel_for(fed.client_count(), config_.workers, [&](std::size_t k) {
        auto& c = fed.clients[k];
        local_round(c, c.global_entities, fed.mode, config_, round);
      });
      break;
    }
    default: {
      const auto sampled = sample_clients(fed.client_count(), config_.fraction, config_.seed, round);
      parallel_for(sampled.size(), config_.workers, [&](std::size_t i) {
        const auto k = sampled[i];
        local_round(fed.clients[k], distribute_avatar(fed.server.entities, fed.mapping, k), fed.mode, config_, round);
      });
      std::vector<const EmbeddingTable*> avatars;
      for (auto k : sampled) avatars.push_back(&fed.clients[k].global_entities);
      fed.server.entities = aggregate(fed.server.entities, sampled, avatars, fed.mapping);
      break;
    }
  }
  fed.server.round = round + 1;
}

void TrainingSession::evaluate(std::size_t round) {
  double metric = 0.0;
  for (auto view : report_views(current_.mode)) {
    const auto report = evaluate_federation(current_, view, select_valid(), config_.workers);
    for (std::size_t k = 0; k < report.clients.size(); ++k) {
      history_.push_back({round, k, "valid", view, report.clients[k]});
    }
    history_.push_back({round, std::nullopt, "valid", view, report.macro});
    if (view == primary_view(current_.mode)) metric = report.macro.mrr;
  }
  if (metric > progress_.best_metric) {
    progress_.best_metric = metric;
    progress_.best_round = round;
    progress_.bad_evaluations = 0;
    best_ = current_;
  } else if (++progress_.bad_evaluations >= config_.patience) {
    progress_.finished = true;
  }
  evaluated_last_ = true;
}

bool TrainingSession::step() {
  evaluated_last_ = false;
  if (progress_.finished) return false;
  if (progress_.completed_rounds >= config_.rounds) {
    progress_.finished = true;
    return false;
  }
  const std::size_t round = progress_.completed_rounds;
  train_round(round);
  progress_.completed_rounds = round + 1;
  if (progress_.completed_rounds % config_.eval_interval == 0 || progress_.completed_rounds == config_.rounds) {
    evaluate(progress_.completed_rounds);
  }
  if (progress_.completed_rounds >= config_.rounds) progress_.finished = true;
  return !progress_.finished;
}

void TrainingSession::run(const std::function<void(const TrainingSession&)>& on_evaluation) {
  bool more = true;
  while (more) {
    more = step();
    if (evaluated_last_ && on_evaluation) on_evaluation(*this);
  }
}

TrainingResult run_federated_training(TrainingMode mode, std::vector<std::shared_ptr<const ClientShard>> shards,
                                      std::size_t global_entities, std::size_t global_relations,
                                      const TrainConfig& config) {
  TrainingSession session(init_federation(mode, std::move(shards), global_entities, global_relations, config), config);
  session.run();
  return {session.best(), session.history(), session.progress()};
}

}  // namespace fkg
