#include <doctest.h>

#include <algorithm>
#include <set>

#include "fkg/evaluation.hpp"
#include "fkg/random.hpp"

using namespace fkg;

namespace {

// One-dimensional TransE: score(h, r, t) = -|h + r - t|.
struct Line {
  EmbeddingTable entities{ModelKind::TransE, TableRole::Entity, 5, 1};
  EmbeddingTable relations{ModelKind::TransE, TableRole::Relation, 1, 1};
  Line() {
    const double at[] = {0.0, 1.0, 2.0, 3.0, 1.0};
    for (std::size_t i = 0; i < 5; ++i) entities.row(i)[0] = at[i];
    relations.row(0)[0] = 1.0;
  }
  ModelView view() const { return {ModelKind::TransE, entities, relations}; }
};

// Brute-force filtered rank straight from the definition.
std::size_t oracle_rank(const ModelView& m, const Triple& q, Direction d, std::size_t n,
                        const std::set<Triple>& known) {
  const double target = m.score(q);
  std::size_t higher = 0, equal = 0;
  for (EntityId e = 0; e < n; ++e) {
    Triple c = q;
    (d == Direction::Tail ? c.tail : c.head) = e;
    if (c == q || known.count(c)) continue;
    const double s = m.score(c);
    if (s > target) ++higher;
    else if (s == target) ++equal;
  }
  return 1 + higher + equal / 2;
}

}  // namespace

TEST_CASE("hand-built ranks with ties and filtering") {
  const Line line;
  SplitDataset known;
  known.train = {{0, 0, 1}};
  known.test = {{0, 0, 2}};
  const auto filter = build_filter_index(known);
  // Tail candidates score e0=-1, e1=0 (filtered), e2=-1 (answer), e3=-2, e4=0.
  CHECK(rank_query(line.view(), {0, 0, 2}, Direction::Tail, 5, filter) == 2);

  SplitDataset bare;
  bare.test = {{0, 0, 2}};
  CHECK(rank_query(line.view(), {0, 0, 2}, Direction::Tail, 5, build_filter_index(bare)) == 3);
  // Head candidates score e1=0, e4=0 above and e2=-1 tied with the answer e0.
  CHECK(rank_query(line.view(), {0, 0, 2}, Direction::Head, 5, filter) == 3);
}

TEST_CASE("metrics from ranks") {
  const std::vector<std::size_t> ranks{1, 2, 4, 20};
  const auto m = metrics_from_ranks(ranks);
  CHECK(m.hits1 == doctest::Approx(0.25));
  CHECK(m.hits3 == doctest::Approx(0.5));
  CHECK(m.hits10 == doctest::Approx(0.75));
  CHECK(m.mrr == doctest::Approx((1 + 0.5 + 0.25 + 0.05) / 4));
  CHECK(m.queries == 4);
  const std::vector<std::size_t> one{1};
  CHECK(metrics_from_ranks(one).mrr == 1.0);
  CHECK(metrics_from_ranks(std::vector<std::size_t>{}).queries == 0);

  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::size_t> r(1 + rng.below(50));
    for (auto& x : r) x = 1 + rng.below(30);
    double h1 = 0, h3 = 0, h10 = 0, rr = 0;
    for (auto x : r) {
      h1 += x <= 1;
      h3 += x <= 3;
      h10 += x <= 10;
      rr += 1.0 / static_cast<double>(x);
    }
    const double n = static_cast<double>(r.size());
    const auto got = metrics_from_ranks(r);
    CHECK(got.hits1 == doctest::Approx(h1 / n));
    CHECK(got.hits3 == doctest::Approx(h3 / n));
    CHECK(got.hits10 == doctest::Approx(h10 / n));
    CHECK(got.mrr == doctest::Approx(rr / n));
    CHECK(got.hits1 <= got.hits3);
    CHECK(got.hits3 <= got.hits10);
  }
}

TEST_CASE("filtered ranks agree with a brute-force oracle") {
  for (auto kind : {ModelKind::TransE, ModelKind::ComplEx, ModelKind::RotatE}) {
    const std::size_t n = 30;
    const auto ent = init_table(n, kind, TableRole::Entity, 4, 3);
    const auto rel = init_table(3, kind, TableRole::Relation, 4, 4);
    const ModelView m{kind, ent, rel};
    Rng rng(5);
    SplitDataset data;
    for (int i = 0; i < 120; ++i) {
      data.train.push_back({static_cast<EntityId>(rng.below(n)), static_cast<RelationId>(rng.below(3)),
                            static_cast<EntityId>(rng.below(n))});
    }
    const std::set<Triple> known(data.train.begin(), data.train.end());
    const auto filter = build_filter_index(data);
    for (const auto& q : data.train) {
      for (auto d : {Direction::Head, Direction::Tail}) {
        CHECK(rank_query(m, q, d, n, filter) == oracle_rank(m, q, d, n, known));
      }
    }
  }
}

TEST_CASE("filtering more candidates never worsens a rank") {
  const auto ent = init_table(40, ModelKind::TransE, TableRole::Entity, 4, 1);
  const auto rel = init_table(2, ModelKind::TransE, TableRole::Relation, 4, 2);
  const ModelView m{ModelKind::TransE, ent, rel};
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Triple q{static_cast<EntityId>(rng.below(40)), static_cast<RelationId>(rng.below(2)),
                   static_cast<EntityId>(rng.below(40))};
    SplitDataset data;
    data.test = {q};
    std::size_t last = rank_query(m, q, Direction::Tail, 40, build_filter_index(data));
    for (int extra = 0; extra < 10; ++extra) {
      data.train.push_back({q.head, q.relation, static_cast<EntityId>(rng.below(40))});
      const auto r = rank_query(m, q, Direction::Tail, 40, build_filter_index(data));
      CHECK(r <= last);
      last = r;
    }
  }
}

TEST_CASE("ranks are invariant under positive score scaling") {
  auto ent = init_table(50, ModelKind::TransE, TableRole::Entity, 6, 7);
  auto rel = init_table(4, ModelKind::TransE, TableRole::Relation, 6, 8);
  Rng rng(3);
  SplitDataset data;
  for (int i = 0; i < 60; ++i) {
    data.test.push_back({static_cast<EntityId>(rng.below(50)), static_cast<RelationId>(rng.below(4)),
                         static_cast<EntityId>(rng.below(50))});
  }
  const auto filter = build_filter_index(data);
  const auto before = evaluate({ModelKind::TransE, ent, rel}, data.test, 50, filter);
  // Scaling by a power of two keeps every score comparison exact.
  for (auto& x : ent.data()) x *= 4.0;
  for (auto& x : rel.data()) x *= 4.0;
  const auto after = evaluate({ModelKind::TransE, ent, rel}, data.test, 50, filter);
  CHECK(before == after);
}

TEST_CASE("evaluation pools head and tail queries and is worker independent") {
  const auto ent = init_table(60, ModelKind::ComplEx, TableRole::Entity, 8, 1);
  const auto rel = init_table(3, ModelKind::ComplEx, TableRole::Relation, 8, 2);
  const ModelView m{ModelKind::ComplEx, ent, rel};
  Rng rng(4);
  SplitDataset data;
  for (int i = 0; i < 80; ++i) {
    data.test.push_back({static_cast<EntityId>(rng.below(60)), static_cast<RelationId>(rng.below(3)),
                         static_cast<EntityId>(rng.below(60))});
  }
  const auto filter = build_filter_index(data);
  std::vector<std::size_t> ranks;
  for (const auto& q : data.test) {
    ranks.push_back(rank_query(m, q, Direction::Head, 60, filter));
    ranks.push_back(rank_query(m, q, Direction::Tail, 60, filter));
  }
  const auto single = evaluate(m, data.test, 60, filter, 1);
  CHECK(single.queries == 160);
  CHECK(single.mrr == doctest::Approx(metrics_from_ranks(ranks).mrr));
  CHECK(evaluate(m, data.test, 60, filter, 4) == single);
}

TEST_CASE("macro and micro averages") {
  Metrics a{0.5, 0.5, 1.0, 0.6, 10};
  const auto same = make_report({a, a, a});
  CHECK(same.macro.mrr == doctest::Approx(0.6));
  CHECK(same.macro.hits10 == doctest::Approx(1.0));
  CHECK(same.micro.mrr == doctest::Approx(0.6));

  Metrics b{0.0, 0.0, 0.0, 0.2, 30};
  const auto mixed = make_report({a, b});
  CHECK(mixed.macro.mrr == doctest::Approx(0.4));
  CHECK(mixed.micro.mrr == doctest::Approx((0.6 * 10 + 0.2 * 30) / 40));
  CHECK(mixed.clients.size() == 2);
}
