#pragma once

// End-to-end commands behind the command line tool: partitioning a KG into
// client shards, training, unlearning, evaluation and export. Every command
// writes its resolved configuration next to its outputs.
//
// Data directory (written by run_partition):
//   shard_<k>.tsv        triples of client k, labels
//   entities.vocab       global entity vocabulary, label<TAB>id
//   relations.vocab      global relation vocabulary
//   stats.csv            one row per shard
//   degree_hist_<k>.csv  degree,entities
//
// Training directory (written by run_train):
//   config.txt, manifest.txt, history.csv, test.csv, progress.txt,
//   best/ (restored best state), current/ (state for resuming)
//
// Unlearning directory (written by run_unlearn):
//   config.txt, manifest.txt, forget_<k>.tsv, retain_<k>.tsv, report.csv,
//   unlearned/ (state after unlearning)

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fkg/config.hpp"
#include "fkg/federation.hpp"
#include "fkg/kg.hpp"
#include "fkg/partition.hpp"
#include "fkg/unlearning.hpp"

namespace fkg {

enum class PartitionMethod { Spectral, Random };
PartitionMethod parse_partition_method(std::string_view name);

struct PartitionOptions {
  std::string input;
  std::size_t clients = 3;
  PartitionMethod method = PartitionMethod::Spectral;
  std::uint64_t seed = 0;
  std::string out;
};

ShardStats run_partition(const PartitionOptions& options, std::ostream& log);

/// Shards of a data directory, coded against its global vocabulary.
struct Dataset {
  Vocabulary vocab;
  std::vector<KnowledgeGraph> shards;
};
Dataset load_dataset(const std::filesystem::path& dir);

std::vector<std::shared_ptr<const ClientShard>> client_shards(const Dataset& data, std::uint64_t seed);

/// Fresh federation for `config` over the dataset in config.data.
Federation make_federation(const Dataset& data, const ExperimentConfig& config, TrainingMode mode);

/// Trains config.mode and writes the training directory config.out. With
/// `resume` the run continues from config.out/current, which must have been
/// written with the same configuration.
TrainingResult run_train(const ExperimentConfig& config, bool resume, std::ostream& log);

struct ReportRow {
  std::string phase;  // raw, retrained, unlearned
  std::optional<std::size_t> client;
  std::string split;  // forget, test
  View view = View::Local;
  Metrics metrics;
};
using UnlearnReport = std::vector<ReportRow>;

void write_report(std::ostream& out, const UnlearnReport& report);

/// Unlearns from the best state in the training directory `checkpoint` and
/// writes the unlearning directory config.out.
UnlearnReport run_unlearn(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
                          std::ostream& log);

/// Per-client and macro metrics of a saved state (a training directory, its
/// best/ or current/ subdirectory, or an unlearning directory) on `split`
/// (valid or test).
std::vector<std::pair<View, MetricsReport>> run_evaluate(const ExperimentConfig& config,
                                                         const std::filesystem::path& checkpoint,
                                                         const std::string& split);

/// Writes a table file as CSV. Labels come from `labels` (a vocabulary file)
/// or, for a client table, from the data directory and client id.
struct ExportOptions {
  std::string table;
  std::string labels;
  std::string data;
  std::optional<std::size_t> client;
  std::string out;
};
void run_export(const ExportOptions& options);

}  // namespace fkg
