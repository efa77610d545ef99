#pragma once

// Binary persistence of embedding tables, optimizer state and whole
// federations, plus CSV export of tables.
//
// Table file: "FKGT", u32 version, u8 kind, u8 role, u16 zero, u64 rows,
// u64 width, u64 dim, then rows * width little-endian f64 values.
// Adam file:  "FKGA", u32 version, u64 rows, u64 width, 4 x f64 config,
// then first moments, second moments (f64) and step counters (u64).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "fkg/embedding.hpp"
#include "fkg/error.hpp"
#include "fkg/federation.hpp"

namespace fkg {

/// Unreadable or incompatible checkpoint data.
class FormatError : public Error {
 public:
  using Error::Error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_table(std::ostream& out, const EmbeddingTable& table);
EmbeddingTable read_table(std::istream& in);
void save_table(const std::filesystem::path& path, const EmbeddingTable& table);
EmbeddingTable load_table(const std::filesystem::path& path);

void write_adam(std::ostream& out, const AdamState& state);
AdamState read_adam(std::istream& in);

/// "id,label,v0,...,v{width-1}" then one line per row, values printed with
/// 17 significant digits so that re-import is exact. `labels` may be empty
/// (the label column is then left blank) or hold one label per row.
void export_csv(std::ostream& out, const EmbeddingTable& table, const std::vector<std::string>& labels);

struct CsvTable {
  std::vector<std::string> labels;
  std::size_t width = 0;
  std::vector<double> values;  // row-major
};
CsvTable import_csv(std::istream& in);

/// Simple "key value" text manifest.
using Manifest = std::map<std::string, std::string>;
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

/// FNV-1a 64-bit hash, rendered as 16 hex digits.
std::string hash_text(std::string_view text);

/// Tables and optimizer state of a federation, written below `dir`. Shards
/// are not stored; they are rebuilt from the data and must match on load.
void save_federation(const std::filesystem::path& dir, const Federation& fed);
/// Restores tables into `fed`, which must have been initialized from the
/// same shards, mode and model settings.
void load_federation(const std::filesystem::path& dir, Federation& fed);

void save_progress(const std::filesystem::path& path, const TrainingProgress& progress);
TrainingProgress load_progress(const std::filesystem::path& path);

/// History CSV: round,client,split,hits1,hits3,hits10,mrr,view. `client` is
/// the client id or "macro".
void write_history(std::ostream& out, const History& history);
History read_history(std::istream& in);

}  // namespace fkg
