#pragma once

// Experiment configuration: a flat key=value text format, presets, command
// line overrides and validation.
//
// Precedence, lowest first: built-in defaults (workers from FKG_WORKERS),
// preset, config file, individual overrides.

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fkg/federation.hpp"
#include "fkg/unlearning.hpp"

namespace fkg {

struct ExperimentConfig {
  TrainingMode mode = TrainingMode::FedLU;
  TrainConfig train;
  UnlearnConfig unlearn;
  double unlearn_lr = 0.0;  // 0: keep the training learning rate
  double forget_proportion = 0.01;
  std::vector<std::size_t> forget_clients;  // empty: every client
  bool retrain = true;
  TrainingMode retrain_mode = TrainingMode::FedLU;
  std::string data = "data";
  std::string out = "out";

  ExperimentConfig();
};

/// Defaults with `workers` taken from the FKG_WORKERS environment variable
/// when it is set.
ExperimentConfig default_config();

/// Known presets: "desk" (dimension 64, batch 256, negatives 64, 50 rounds).
std::vector<std::string> preset_names();
void apply_preset(ExperimentConfig& config, std::string_view name);

/// Sets one key. Throws ConfigError for an unknown key or a malformed value.
void set_value(ExperimentConfig& config, std::string_view key, std::string_view value);

/// Applies "key=value" lines ('#' starts a comment). All problems are
/// collected and reported together in one ConfigError.
void apply_text(ExperimentConfig& config, std::string_view text);
void apply_file(ExperimentConfig& config, const std::string& path);
/// Applies "key=value" strings, collecting problems like apply_text.
void apply_overrides(ExperimentConfig& config, const std::vector<std::string>& assignments);

/// Range and consistency checks; every violation is listed in one ConfigError.
void validate(const ExperimentConfig& config);

/// Every key, sorted, as key=value lines. apply_text(dump(c)) recreates c.
std::string dump(const ExperimentConfig& config);
/// Hash of dump(config).
std::string config_hash(const ExperimentConfig& config);

std::vector<std::string> config_keys();

}  // namespace fkg
