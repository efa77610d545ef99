#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <set>

#include "fkg/embedding.hpp"
#include "fkg/error.hpp"
#include "helpers.hpp"

using namespace fkg;
using fkg::test::random_vector;

namespace {

// Norm-wise relative error between an analytic and a numeric gradient.
double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
  return std::sqrt(diff) / scale;
}

std::vector<double> numeric(std::vector<double> x, const std::function<double(std::span<const double>)>& f) {
  const double h = 1e-5;
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("score examples") {
  const std::vector<double> h{1, 0}, r{0, 1}, t{1, 1};
  CHECK(score(ModelKind::TransE, h, r, t) == 0.0);
  CHECK(score(ModelKind::TransE, std::vector<double>{0, 0}, std::vector<double>{3, 4}, std::vector<double>{0, 0}) ==
        doctest::Approx(-5.0));

  // ComplEx: 4 complex coordinates, all equal to 1 + 0i.
  const std::vector<double> ones{1, 1, 1, 1, 0, 0, 0, 0};
  CHECK(score(ModelKind::ComplEx, ones, ones, ones) == doctest::Approx(4.0));
  // Re(i * 1 * conj(i)) = 1
  const std::vector<double> ii{0, 1}, one{1, 0};
  CHECK(score(ModelKind::ComplEx, ii, one, ii) == doctest::Approx(1.0));

  // RotatE with zero phases is -||h - t||.
  Rng rng(1);
  const auto rh = random_vector(rng, 8), rt = random_vector(rng, 8);
  const std::vector<double> zero(4, 0.0);
  double d = 0.0;
  for (std::size_t i = 0; i < 8; ++i) d += (rh[i] - rt[i]) * (rh[i] - rt[i]);
  CHECK(score(ModelKind::RotatE, rh, zero, rt) == doctest::Approx(-std::sqrt(d)));
  // A rotation by pi maps h to -h.
  const std::vector<double> pi(4, std::numbers::pi);
  std::vector<double> neg(rh);
  for (auto& x : neg) x = -x;
  CHECK(score(ModelKind::RotatE, rh, pi, neg) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("score gradients match central differences") {
  Rng rng(11);
  for (auto kind : {ModelKind::TransE, ModelKind::ComplEx, ModelKind::RotatE}) {
    const std::size_t dim = 8;
    const auto rw = table_width(kind, TableRole::Relation, dim);
    for (int trial = 0; trial < 30; ++trial) {
      const auto h = random_vector(rng, dim), t = random_vector(rng, dim);
      const auto r = kind == ModelKind::RotatE ? random_vector(rng, rw, -3.0, 3.0) : random_vector(rng, rw);
      const auto g = score_gradients(kind, h, r, t);
      CHECK(relative_error(g.head, numeric(h, [&](auto x) { return score(kind, x, r, t); })) < 1e-6);
      CHECK(relative_error(g.relation, numeric(r, [&](auto x) { return score(kind, h, x, t); })) < 1e-6);
      CHECK(relative_error(g.tail, numeric(t, [&](auto x) { return score(kind, h, r, x); })) < 1e-6);
    }
  }
}

TEST_CASE("distance models use a zero subgradient at zero distance") {
  const std::vector<double> h{1, 2}, r{0.5, -1}, t{1.5, 1};
  const auto g = score_gradients(ModelKind::TransE, h, r, t);
  for (const auto* v : {&g.head, &g.relation, &g.tail}) {
    CHECK(std::all_of(v->begin(), v->end(), [](double x) { return x == 0.0; }));
  }
  const std::vector<double> z{0.0};
  const auto gr = score_gradients(ModelKind::RotatE, h, z, h);
  CHECK(std::all_of(gr.head.begin(), gr.head.end(), [](double x) { return x == 0.0; }));
}

TEST_CASE("accumulate adds scaled gradients") {
  Rng rng(2);
  const auto h = random_vector(rng, 4), r = random_vector(rng, 4), t = random_vector(rng, 4);
  const auto g = score_gradients(ModelKind::ComplEx, h, r, t);
  std::vector<double> gh(4, 1.0), gr(4, 0.0), gt(4, 0.0);
  accumulate_score_gradients(ModelKind::ComplEx, h, r, t, -2.0, gh, gr, gt);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(gh[i] == doctest::Approx(1.0 - 2.0 * g.head[i]));
    CHECK(gt[i] == doctest::Approx(-2.0 * g.tail[i]));
  }
  // Head and tail may share one buffer (h == t).
  std::vector<double> shared(4, 0.0), rel(4, 0.0);
  accumulate_score_gradients(ModelKind::TransE, h, r, h, 1.0, shared, rel, shared);
  const auto gs = score_gradients(ModelKind::TransE, h, r, h);
  for (std::size_t i = 0; i < 4; ++i) CHECK(shared[i] == doctest::Approx(gs.head[i] + gs.tail[i]));
}

TEST_CASE("table widths") {
  CHECK(table_width(ModelKind::TransE, TableRole::Entity, 7) == 7);
  CHECK(table_width(ModelKind::ComplEx, TableRole::Relation, 8) == 8);
  CHECK(table_width(ModelKind::RotatE, TableRole::Entity, 8) == 8);
  CHECK(table_width(ModelKind::RotatE, TableRole::Relation, 8) == 4);
  CHECK_THROWS_AS(table_width(ModelKind::ComplEx, TableRole::Entity, 7), Error);
  CHECK(parse_model_kind("RotatE") == ModelKind::RotatE);
  CHECK_THROWS_AS(parse_model_kind("distmult"), ConfigError);
}

TEST_CASE("initialization") {
  CHECK(init_table(0, ModelKind::TransE, TableRole::Entity, 4, 1).rows() == 0);
  const auto a = init_table(50, ModelKind::TransE, TableRole::Entity, 16, 3);
  CHECK(a == init_table(50, ModelKind::TransE, TableRole::Entity, 16, 3));
  CHECK(!(a == init_table(50, ModelKind::TransE, TableRole::Entity, 16, 4)));
  const double bound = 6.0 / std::sqrt(16.0);
  CHECK(std::all_of(a.data().begin(), a.data().end(), [&](double x) { return std::abs(x) <= bound; }));

  const auto big = init_table(2500, ModelKind::TransE, TableRole::Entity, 4, 5);
  double mean = 0.0;
  for (double x : big.data()) mean += x;
  mean /= static_cast<double>(big.data().size());
  CHECK(std::abs(mean) < 0.05);

  const auto phases = init_table(100, ModelKind::RotatE, TableRole::Relation, 8, 6);
  CHECK(phases.width() == 4);
  CHECK(std::all_of(phases.data().begin(), phases.data().end(),
                    [](double x) { return x > -std::numbers::pi && x <= std::numbers::pi; }));
}

TEST_CASE("phase wrapping") {
  CHECK(wrap_phase(0.5) == doctest::Approx(0.5));
  CHECK(wrap_phase(std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_phase(-std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_phase(3 * std::numbers::pi / 2) == doctest::Approx(-std::numbers::pi / 2));
  CHECK(wrap_phase(-7.0) == doctest::Approx(-7.0 + 2 * std::numbers::pi));
}

TEST_CASE("negative sampling avoids known triples") {
  const TripleSet known(std::vector<Triple>{{0, 0, 1}});
  Rng rng(1);
  const auto only = sample_negatives({0, 0, 1}, 1, known, 2, rng);
  REQUIRE(only.size() == 1);
  CHECK(only[0] == Triple{0, 0, 0});

  const TripleSet full(std::vector<Triple>{{0, 0, 0}, {0, 0, 1}});
  CHECK_THROWS_AS(sample_negatives({0, 0, 1}, 1, full, 2, rng), Error);

  std::vector<Triple> train;
  Rng gen(2);
  for (int i = 0; i < 5000; ++i) {
    train.push_back({static_cast<EntityId>(gen.below(200)), 0, static_cast<EntityId>(gen.below(200))});
  }
  const TripleSet members(train);
  Rng a(3), b(3);
  const auto negs = sample_negatives(train[0], 256, members, 200, a);
  CHECK(negs.size() == 256);
  for (const auto& n : negs) {
    CHECK(!members.contains(n));
    CHECK(n.head == train[0].head);
    CHECK(n.relation == train[0].relation);
  }
  CHECK(negs == sample_negatives(train[0], 256, members, 200, b));

  NegativeSampling both;
  both.corrupt_heads = true;
  Rng c(4);
  const auto mixed = sample_negatives(train[0], 200, members, 200, c, both);
  const auto heads = std::count_if(mixed.begin(), mixed.end(), [&](const Triple& t) { return t.tail == train[0].tail; });
  CHECK(heads > 50);
  CHECK(heads < 150);
  for (const auto& n : mixed) CHECK(!members.contains(n));
}

TEST_CASE("row gradients") {
  RowGradients g(2);
  const auto a = g.touch(7);
  const auto b = g.touch(3);
  CHECK(g.touch(7) == a);
  g.slot(a)[0] = 1.0;
  g.slot(b)[1] = 2.0;
  g.scale(0.5);
  CHECK(g.slot(a)[0] == 0.5);
  CHECK(g.slot(b)[1] == 1.0);
  CHECK(g.rows() == std::vector<std::size_t>{7, 3});
  g.clear();
  CHECK(g.empty());
  CHECK(g.slot(g.touch(3))[1] == 0.0);
}

TEST_CASE("Adam single scalar step") {
  EmbeddingTable t(ModelKind::TransE, TableRole::Entity, 1, 1);
  t.row(0)[0] = 0.3;
  AdamState s(t, AdamConfig{});
  RowGradients g(1);
  g.slot(g.touch(0))[0] = 1.0;
  adam_step(t, g, s);
  // First bias-corrected step is lr * g / (|g| + eps).
  CHECK(t.row(0)[0] == doctest::Approx(0.3 - 1e-4 / (1.0 + 1e-8)).epsilon(1e-12));
  CHECK(s.steps[0] == 1);
}

TEST_CASE("Adam touches only the given rows") {
  auto t = init_table(4, ModelKind::TransE, TableRole::Entity, 3, 1);
  const auto before = t;
  AdamState s(t, AdamConfig{0.01});
  RowGradients g(3);
  g.touch(2);  // zero gradient
  g.slot(g.touch(1))[0] = 0.5;
  adam_step(t, g, s);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(t.row(0)[j] == before.row(0)[j]);
    CHECK(t.row(2)[j] == before.row(2)[j]);
    CHECK(t.row(3)[j] == before.row(3)[j]);
  }
  CHECK(t.row(1)[0] != before.row(1)[0]);
  CHECK(s.steps == std::vector<std::uint64_t>{0, 1, 1, 0});
}

TEST_CASE("Adam updates on disjoint rows commute") {
  const auto start = init_table(6, ModelKind::TransE, TableRole::Entity, 2, 2);
  RowGradients g1(2), g2(2);
  g1.slot(g1.touch(0))[0] = 1.0;
  g1.slot(g1.touch(4))[1] = -2.0;
  g2.slot(g2.touch(1))[0] = 0.3;
  g2.slot(g2.touch(5))[1] = 0.7;
  auto a = start, b = start;
  AdamState sa(a, AdamConfig{0.1}), sb(b, AdamConfig{0.1});
  adam_step(a, g1, sa);
  adam_step(a, g2, sa);
  adam_step(b, g2, sb);
  adam_step(b, g1, sb);
  CHECK(a == b);
  CHECK(sa == sb);
}

TEST_CASE("Adam rejects non-finite gradients without modifying anything") {
  auto t = init_table(3, ModelKind::TransE, TableRole::Entity, 2, 3);
  const auto before = t;
  AdamState s(t, AdamConfig{});
  const auto s_before = s;
  RowGradients g(2);
  g.slot(g.touch(0))[0] = 1.0;
  g.slot(g.touch(2))[1] = std::nan("");
  CHECK_THROWS_AS(adam_step(t, g, s), Error);
  CHECK(t == before);
  CHECK(s == s_before);
}

TEST_CASE("Adam keeps RotatE phases wrapped") {
  EmbeddingTable t(ModelKind::RotatE, TableRole::Relation, 1, 2);
  t.row(0)[0] = std::numbers::pi - 1e-6;
  AdamState s(t, AdamConfig{0.1});
  RowGradients g(1);
  g.slot(g.touch(0))[0] = -1.0;
  adam_step(t, g, s);
  CHECK(t.row(0)[0] < 0.0);
  CHECK(t.row(0)[0] > -std::numbers::pi);
}
