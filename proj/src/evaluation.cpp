#include "fkg/evaluation.hpp"

#include <string>

#include "fkg/error.hpp"
#include "fkg/parallel.hpp"

namespace fkg {

std::size_t rank_query(const ModelView& model, const Triple& query, Direction direction,
                       std::size_t candidate_count, const FilterIndex& filter) {
  const EntityId answer = direction == Direction::Tail ? query.tail : query.head;
  if (answer >= candidate_count) {
    throw Error("rank_query: answer " + std::to_string(answer) + " is not among the " +
                std::to_string(candidate_count) + " candidates");
  }
  const auto& known = direction == Direction::Tail ? filter.tails(query.head, query.relation)
                                                   : filter.heads(query.relation, query.tail);
  const double target = model.score(query);
  std::size_t higher = 0;
  std::size_t equal = 0;
  auto next_known = known.begin();
  Triple probe = query;
  for (EntityId c = 0; c < candidate_count; ++c) {
    while (next_known != known.end() && *next_known < c) ++next_known;
    if (c == answer) continue;
    if (next_known != known.end() && *next_known == c) continue;
    (direction == Direction::Tail ? probe.tail : probe.head) = c;
    const double s = model.score(probe);
    if (s > target) {
      ++higher;
    } else if (s == target) {
      ++equal;
    }
  }
  return 1 + higher + equal / 2;
}

Metrics metrics_from_ranks(std::span<const std::size_t> ranks) {
  Metrics m;
  m.queries = ranks.size();
  if (ranks.empty()) return m;
  for (auto r : ranks) {
    m.hits1 += r <= 1 ? 1.0 : 0.0;
    m.hits3 += r <= 3 ? 1.0 : 0.0;
    m.hits10 += r <= 10 ? 1.0 : 0.0;
    m.mrr += 1.0 / static_cast<double>(r);
  }
  const auto n = static_cast<double>(ranks.size());
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
  m.mrr /= n;
  return m;
}

Metrics evaluate(const ModelView& model, std::span<const Triple> triples, std::size_t candidate_count,
                 const FilterIndex& filter, std::size_t workers) {
  std::vector<std::size_t> ranks(triples.size() * 2);
  parallel_for(triples.size(), workers, [&](std::size_t i) {
    ranks[2 * i] = rank_query(model, triples[i], Direction::Head, candidate_count, filter);
    ranks[2 * i + 1] = rank_query(model, triples[i], Direction::Tail, candidate_count, filter);
  });
  return metrics_from_ranks(ranks);
}

MetricsReport make_report(std::vector<Metrics> clients) {
  MetricsReport report;
  report.clients = std::move(clients);
  if (report.clients.empty()) return report;
  const auto k = static_cast<double>(report.clients.size());
  std::size_t total = 0;
  for (const auto& c : report.clients) total += c.queries;
  for (const auto& c : report.clients) {
    report.macro.hits1 += c.hits1;
    report.macro.hits3 += c.hits3;
    report.macro.hits10 += c.hits10;
    report.macro.mrr += c.mrr;
    if (total > 0) {
      const double w = static_cast<double>(c.queries) / static_cast<double>(total);
      report.micro.hits1 += c.hits1 * w;
      report.micro.hits3 += c.hits3 * w;
      report.micro.hits10 += c.hits10 * w;
      report.micro.mrr += c.mrr * w;
    }
  }
  report.macro.hits1 /= k;
  report.macro.hits3 /= k;
  report.macro.hits10 /= k;
  report.macro.mrr /= k;
  report.macro.queries = total;
  report.micro.queries = total;
  return report;
}

}  // namespace fkg
