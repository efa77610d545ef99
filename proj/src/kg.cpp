#include "fkg/kg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "fkg/error.hpp"
#include "fkg/random.hpp"

namespace fkg {

std::uint64_t pack(const Triple& t) {
  return (std::uint64_t{t.head} << 42) | (std::uint64_t{t.relation} << 21) | t.tail;
}

std::uint32_t Labels::intern(std::string_view label) {
  auto it = ids_.find(std::string(label));
  if (it != ids_.end()) return it->second;
  if (labels_.size() > kMaxId) throw Error("vocabulary exceeds 2^21 labels");
  const auto id = static_cast<std::uint32_t>(labels_.size());
  labels_.emplace_back(label);
  ids_.emplace(labels_.back(), id);
  return id;
}

std::uint32_t Labels::id(std::string_view label) const {
  auto it = ids_.find(std::string(label));
  if (it == ids_.end()) throw Error("unknown label '" + std::string(label) + "'");
  return it->second;
}

bool Labels::contains(std::string_view label) const {
  return ids_.contains(std::string(label));
}

KnowledgeGraph::KnowledgeGraph(std::vector<Triple> triples) {
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(triples.size());
  triples_.reserve(triples.size());
  for (const auto& t : triples) {
    if (t.head > kMaxId || t.tail > kMaxId || t.relation > kMaxId) {
      throw Error("triple id exceeds 2^21");
    }
    if (seen.insert(pack(t)).second) {
      triples_.push_back(t);
    } else {
      ++duplicates_dropped_;
    }
  }
  for (const auto& t : triples_) {
    entities_.push_back(t.head);
    entities_.push_back(t.tail);
    relations_.push_back(t.relation);
  }
  std::sort(entities_.begin(), entities_.end());
  entities_.erase(std::unique(entities_.begin(), entities_.end()), entities_.end());
  std::sort(relations_.begin(), relations_.end());
  relations_.erase(std::unique(relations_.begin(), relations_.end()), relations_.end());
}

std::size_t KnowledgeGraph::entity_bound() const noexcept {
  return entities_.empty() ? 0 : std::size_t{entities_.back()} + 1;
}

std::size_t KnowledgeGraph::relation_bound() const noexcept {
  return relations_.empty() ? 0 : std::size_t{relations_.back()} + 1;
}

namespace {

std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    fn(line_no, trim_cr(line));
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

KnowledgeGraph load_triples(std::string_view text, Vocabulary& vocab) {
  std::vector<Triple> triples;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (line.find_first_not_of(" \t") == std::string_view::npos) return;
    if (std::count(line.begin(), line.end(), '\t') != 2) {
      throw ParseError(line_no, "expected 3 tab-separated fields");
    }
    const auto tab1 = line.find('\t');
    const auto tab2 = line.find('\t', tab1 + 1);
    const std::string_view fields[3] = {line.substr(0, tab1), line.substr(tab1 + 1, tab2 - tab1 - 1),
                                        line.substr(tab2 + 1)};
    for (const auto& f : fields) {
      if (f.empty()) throw ParseError(line_no, "empty field");
    }
    Triple t;
    t.head = vocab.entities.intern(fields[0]);
    t.relation = vocab.relations.intern(fields[1]);
    t.tail = vocab.entities.intern(fields[2]);
    triples.push_back(t);
  });
  return KnowledgeGraph(std::move(triples));
}

LoadResult load_triples(std::string_view text) {
  LoadResult result;
  result.graph = load_triples(text, result.vocab);
  return result;
}

LoadResult load_triples_file(const std::string& path) { return load_triples(read_file(path)); }

KnowledgeGraph load_triples_file(const std::string& path, Vocabulary& vocab) {
  return load_triples(read_file(path), vocab);
}

void write_triples(std::ostream& out, std::span<const Triple> triples, const Vocabulary& vocab) {
  for (const auto& t : triples) {
    out << vocab.entities.label(t.head) << '\t' << vocab.relations.label(t.relation) << '\t'
        << vocab.entities.label(t.tail) << '\n';
  }
}

void write_labels(std::ostream& out, const Labels& labels) {
  for (std::uint32_t i = 0; i < labels.size(); ++i) out << labels.label(i) << '\t' << i << '\n';
}

Labels read_labels(std::istream& in) {
  Labels labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = trim_cr(line);
    if (view.empty()) continue;
    const auto tab = view.rfind('\t');
    if (tab == std::string_view::npos) throw ParseError(line_no, "expected label<TAB>id");
    const auto label = view.substr(0, tab);
    std::uint32_t id = 0;
    try {
      id = static_cast<std::uint32_t>(std::stoul(std::string(view.substr(tab + 1))));
    } catch (const std::exception&) {
      throw ParseError(line_no, "bad id");
    }
    if (id != labels.size() || labels.contains(label)) {
      throw ParseError(line_no, "ids must be dense and labels unique");
    }
    labels.intern(label);
  }
  return labels;
}

SplitDataset split_dataset(const KnowledgeGraph& kg, std::uint64_t seed, SplitRatios ratios) {
  const std::size_t n = kg.size();
  if (n < 3) throw Error("split_dataset needs at least 3 triples, got " + std::to_string(n));
  std::vector<Triple> shuffled(kg.triples().begin(), kg.triples().end());
  Rng rng(derive_seed(seed, stream::split));
  rng.shuffle(std::span<Triple>(shuffled));
  const auto n_train = static_cast<std::size_t>(std::floor(ratios.train * static_cast<double>(n)));
  const auto n_valid = static_cast<std::size_t>(std::floor(ratios.valid * static_cast<double>(n)));
  SplitDataset out;
  out.train.assign(shuffled.begin(), shuffled.begin() + n_train);
  out.valid.assign(shuffled.begin() + n_train, shuffled.begin() + n_train + n_valid);
  out.test.assign(shuffled.begin() + n_train + n_valid, shuffled.end());
  return out;
}

FilterIndex::FilterIndex(const SplitDataset& splits) {
  for (const auto* part : {&splits.train, &splits.valid, &splits.test}) {
    for (const auto& t : *part) {
      if (!members_.insert(pack(t)).second) continue;
      tails_[key(t.head, t.relation)].push_back(t.tail);
      heads_[key(t.relation, t.tail)].push_back(t.head);
    }
  }
  for (auto& [k, v] : tails_) std::sort(v.begin(), v.end());
  for (auto& [k, v] : heads_) std::sort(v.begin(), v.end());
}

namespace {
const std::vector<EntityId> kNone;
}

const std::vector<EntityId>& FilterIndex::tails(EntityId head, RelationId relation) const {
  auto it = tails_.find(key(head, relation));
  return it == tails_.end() ? kNone : it->second;
}

const std::vector<EntityId>& FilterIndex::heads(RelationId relation, EntityId tail) const {
  auto it = heads_.find(key(relation, tail));
  return it == heads_.end() ? kNone : it->second;
}

FilterIndex build_filter_index(const SplitDataset& splits) { return FilterIndex(splits); }

TripleSet::TripleSet(std::span<const Triple> triples) {
  set_.reserve(triples.size());
  for (const auto& t : triples) set_.insert(pack(t));
}

}  // namespace fkg
