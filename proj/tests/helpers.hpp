#pragma once

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "fkg/federation.hpp"
#include "fkg/partition.hpp"
#include "fkg/random.hpp"
#include "fkg/synthetic.hpp"

namespace fkg::test {

struct Toy {
  LoadResult kg;
  std::vector<std::shared_ptr<const ClientShard>> shards;
  std::size_t entities = 0;
  std::size_t relations = 0;
};

// Small synthetic federation split by relation round-robin.
inline Toy toy_federation(std::uint64_t seed, std::size_t clients = 3, std::size_t entities = 150,
                          std::size_t relations = 6, std::size_t triples = 900) {
  SyntheticSpec spec;
  spec.entities = entities;
  spec.relations = relations;
  spec.triples = triples;
  spec.domains = std::min<std::size_t>(3, relations);
  spec.seed = seed;
  Toy toy{make_synthetic_kg(spec), {}, entities, relations};
  const auto parts = distribute(toy.kg.graph, random_partition(relations, clients, seed));
  for (std::size_t k = 0; k < parts.size(); ++k) {
    toy.shards.push_back(std::make_shared<const ClientShard>(make_client_shard(k, parts[k], seed)));
  }
  return toy;
}

inline TrainConfig small_config(std::uint64_t seed = 0) {
  TrainConfig c;
  c.dim = 8;
  c.rounds = 3;
  c.local_epochs = 1;
  c.batch_size = 64;
  c.negatives = 8;
  c.eval_interval = 1;
  c.adam.learning_rate = 1e-2;
  c.seed = seed;
  return c;
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name) {
    path_ = std::filesystem::temp_directory_path() / ("fkg_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace fkg::test
