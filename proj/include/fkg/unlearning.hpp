#pragma once

// Two-step federated unlearning (retroactive interference, then passive
// decay by mutual distillation on the retaining set) and the re-train
// baseline.

#include <cstdint>
#include <span>
#include <vector>

#include "fkg/federation.hpp"

namespace fkg {

/// Forgetting / retaining split of one client's training set.
struct ForgetEntry {
  std::size_t client = 0;
  std::vector<Triple> forget;
  std::vector<Triple> retain;
};

struct ForgetSpec {
  std::vector<ForgetEntry> entries;  // one per unlearning client, ascending client id

  const ForgetEntry* find(std::size_t client) const;
};

/// ceil(proportion * |train|) triples drawn uniformly without replacement;
/// the rest form the retaining set (both keep the original order).
ForgetEntry sample_forget_set(std::size_t client, std::span<const Triple> train, double proportion,
                              std::uint64_t seed);

/// Forget sets for every listed client of a federation.
ForgetSpec sample_forget_spec(const Federation& fed, std::span<const std::size_t> clients, double proportion,
                              std::uint64_t seed);

struct UnlearnConfig {
  std::size_t interference_epochs = 5;
  std::size_t decay_epochs = 5;
  std::size_t rounds = 1;
  LossWeights weights;  // soft and distill are used
  bool use_hard_confusion = true;
  std::size_t batch_size = 1024;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

/// `epochs` passes of interference over the forgetting set.
void interference_step(ClientState& client, std::span<const Triple> forget, const TrainConfig& model,
                       const UnlearnConfig& config, std::size_t epochs, Rng& rng);

/// `epochs` passes of mutual distillation over the retaining set.
void decay_step(ClientState& client, std::span<const Triple> retain, const TrainConfig& model,
                const UnlearnConfig& config, std::size_t epochs, Rng& rng);

/// Runs unlearning as communication rounds over the clients of `spec`: each
/// receives its avatar, interferes, decays, and returns its avatar; the
/// server aggregates over those clients only. Other clients are untouched.
void run_federated_unlearning(Federation& fed, const ForgetSpec& spec, const TrainConfig& model,
                              const UnlearnConfig& config);

/// Trains from scratch in `mode` with every unlearning client's training set
/// replaced by its retaining set.
TrainingResult retrain_baseline(const Federation& raw, const ForgetSpec& spec, TrainingMode mode,
                                const TrainConfig& config);

}  // namespace fkg
