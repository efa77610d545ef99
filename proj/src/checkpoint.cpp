#include "fkg/checkpoint.hpp"

#include <array>
#include <bit>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace fkg {

namespace fs = std::filesystem;

namespace {

constexpr std::array<char, 4> kTableMagic{'F', 'K', 'G', 'T'};
constexpr std::array<char, 4> kAdamMagic{'F', 'K', 'G', 'A'};

void put_u64(std::ostream& out, std::uint64_t v, std::size_t bytes = 8) {
  std::array<char, 8> b{};
  for (std::size_t i = 0; i < bytes; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), static_cast<std::streamsize>(bytes));
}

std::uint64_t get_u64(std::istream& in, std::size_t bytes = 8) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw FormatError("checkpoint truncated");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

void put_doubles(std::ostream& out, std::span<const double> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * 8));
  } else {
    for (double v : values) put_f64(out, v);
  }
}

void get_doubles(std::istream& in, std::span<double> values) {
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * 8));
    if (!in) throw FormatError("checkpoint truncated");
  } else {
    for (double& v : values) v = get_f64(in);
  }
}

void check_header(std::istream& in, const std::array<char, 4>& magic, const char* what) {
  std::array<char, 4> got{};
  in.read(got.data(), 4);
  if (!in || got != magic) throw FormatError(std::string("not a ") + what + " file (bad magic)");
  const auto version = static_cast<std::uint32_t>(get_u64(in, 4));
  if (version != kCheckpointVersion) {
    throw FormatError(std::string(what) + " version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
}

// Guards allocations driven by header fields.
std::size_t checked_count(std::uint64_t rows, std::uint64_t width) {
  constexpr std::uint64_t limit = std::uint64_t{1} << 36;
  if (rows > limit || width > limit || (width != 0 && rows > limit / width)) {
    throw FormatError("checkpoint header has implausible sizes");
  }
  return static_cast<std::size_t>(rows * width);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  return in;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw ParseError(line, "not a number: '" + s + "'");
  return v;
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

void write_table(std::ostream& out, const EmbeddingTable& table) {
  out.write(kTableMagic.data(), 4);
  put_u64(out, kCheckpointVersion, 4);
  put_u64(out, static_cast<std::uint8_t>(table.kind()), 1);
  put_u64(out, static_cast<std::uint8_t>(table.role()), 1);
  put_u64(out, 0, 2);
  put_u64(out, table.rows());
  put_u64(out, table.width());
  put_u64(out, table.dim());
  put_doubles(out, table.data());
}

EmbeddingTable read_table(std::istream& in) {
  check_header(in, kTableMagic, "embedding table");
  const auto kind = get_u64(in, 1);
  const auto role = get_u64(in, 1);
  get_u64(in, 2);
  const auto rows = get_u64(in);
  const auto width = get_u64(in);
  const auto dim = get_u64(in);
  if (kind > 2 || role > 1) throw FormatError("embedding table has an unknown model kind or role");
  checked_count(rows, width);
  EmbeddingTable table;
  try {
    table = EmbeddingTable(static_cast<ModelKind>(kind), static_cast<TableRole>(role), rows, dim);
  } catch (const Error& e) {
    throw FormatError(std::string("embedding table header: ") + e.what());
  }
  if (table.width() != width) throw FormatError("embedding table width does not match its dimension");
  get_doubles(in, table.data());
  return table;
}

void save_table(const fs::path& path, const EmbeddingTable& table) {
  auto out = open_out(path);
  write_table(out, table);
  if (!out) throw Error("write failed: " + path.string());
}

EmbeddingTable load_table(const fs::path& path) {
  auto in = open_in(path);
  try {
    return read_table(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_adam(std::ostream& out, const AdamState& state) {
  out.write(kAdamMagic.data(), 4);
  put_u64(out, kCheckpointVersion, 4);
  put_u64(out, state.steps.size());
  put_u64(out, state.width);
  put_f64(out, state.config.learning_rate);
  put_f64(out, state.config.beta1);
  put_f64(out, state.config.beta2);
  put_f64(out, state.config.epsilon);
  put_doubles(out, state.first_moment);
  put_doubles(out, state.second_moment);
  for (auto s : state.steps) put_u64(out, s);
}

AdamState read_adam(std::istream& in) {
  check_header(in, kAdamMagic, "optimizer state");
  AdamState state;
  const auto rows = get_u64(in);
  state.width = get_u64(in);
  const auto n = checked_count(rows, state.width);
  state.config.learning_rate = get_f64(in);
  state.config.beta1 = get_f64(in);
  state.config.beta2 = get_f64(in);
  state.config.epsilon = get_f64(in);
  state.first_moment.resize(n);
  state.second_moment.resize(n);
  state.steps.resize(rows);
  get_doubles(in, state.first_moment);
  get_doubles(in, state.second_moment);
  for (auto& s : state.steps) s = get_u64(in);
  return state;
}

void export_csv(std::ostream& out, const EmbeddingTable& table, const std::vector<std::string>& labels) {
  if (!labels.empty() && labels.size() != table.rows()) {
    throw Error("export: " + std::to_string(labels.size()) + " labels for " + std::to_string(table.rows()) + " rows");
  }
  out << "id,label";
  for (std::size_t j = 0; j < table.width(); ++j) out << ",v" << j;
  out << '\n';
  for (std::size_t i = 0; i < table.rows(); ++i) {
    out << i << ',';
    if (!labels.empty()) {
      if (labels[i].find_first_of(",\n\r") != std::string::npos) {
        throw Error("export: label '" + labels[i] + "' contains a comma or line break");
      }
      out << labels[i];
    }
    for (double v : table.row(i)) out << ',' << format_double(v);
    out << '\n';
  }
}

CsvTable import_csv(std::istream& in) {
  CsvTable result;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing header");
  const auto header = split_commas(line);
  if (header.size() < 2 || header[0] != "id" || header[1] != "label") {
    throw ParseError(1, "header must start with id,label");
  }
  result.width = header.size() - 2;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != header.size()) {
      throw ParseError(lineno, "expected " + std::to_string(header.size()) + " fields, got " +
                                   std::to_string(fields.size()));
    }
    if (fields[0] != std::to_string(result.labels.size())) throw ParseError(lineno, "ids must be 0, 1, 2, ...");
    result.labels.push_back(fields[1]);
    for (std::size_t j = 2; j < fields.size(); ++j) result.values.push_back(parse_double(fields[j], lineno));
  }
  return result;
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& [k, v] : manifest) out << k << ' ' << v << '\n';
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  Manifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw ParseError(lineno, path.string() + ": expected 'key value'");
    m[line.substr(0, sp)] = line.substr(sp + 1);
  }
  return m;
}

std::string hash_text(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

namespace {

void save_client(const fs::path& dir, const ClientState& c) {
  fs::create_directories(dir);
  save_table(dir / "local_entities.bin", c.local_entities);
  save_table(dir / "relations.bin", c.relations);
  save_table(dir / "global_entities.bin", c.global_entities);
  for (const auto& [name, state] : {std::pair{"local_entities.adam", &c.local_entity_opt},
                                    std::pair{"relations.adam", &c.relation_opt},
                                    std::pair{"global_entities.adam", &c.global_entity_opt}}) {
    auto out = open_out(dir / name);
    write_adam(out, *state);
  }
}

void load_into(const fs::path& path, EmbeddingTable& table) {
  auto loaded = load_table(path);
  if (loaded.kind() != table.kind() || loaded.role() != table.role() || loaded.rows() != table.rows() ||
      loaded.dim() != table.dim()) {
    throw FormatError(path.string() + ": table shape or model does not match the configuration (" +
                      std::to_string(loaded.rows()) + " x " + std::to_string(loaded.dim()) + " " +
                      std::string(to_string(loaded.kind())) + ", expected " + std::to_string(table.rows()) + " x " +
                      std::to_string(table.dim()) + " " + std::string(to_string(table.kind())) + ")");
  }
  table = std::move(loaded);
}

void load_into(const fs::path& path, AdamState& state) {
  auto in = open_in(path);
  AdamState loaded;
  try {
    loaded = read_adam(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (loaded.width != state.width || loaded.steps.size() != state.steps.size()) {
    throw FormatError(path.string() + ": optimizer state does not match its table");
  }
  state = std::move(loaded);
}

void load_client(const fs::path& dir, ClientState& c) {
  load_into(dir / "local_entities.bin", c.local_entities);
  load_into(dir / "relations.bin", c.relations);
  load_into(dir / "global_entities.bin", c.global_entities);
  load_into(dir / "local_entities.adam", c.local_entity_opt);
  load_into(dir / "relations.adam", c.relation_opt);
  load_into(dir / "global_entities.adam", c.global_entity_opt);
}

}  // namespace

void save_federation(const fs::path& dir, const Federation& fed) {
  fs::create_directories(dir);
  write_manifest(dir / "federation.txt", {{"version", std::to_string(kCheckpointVersion)},
                                          {"mode", std::string(to_string(fed.mode))},
                                          {"clients", std::to_string(fed.client_count())},
                                          {"entities", std::to_string(fed.mapping.global_entities)},
                                          {"round", std::to_string(fed.server.round)}});
  save_table(dir / "server_entities.bin", fed.server.entities);
  for (std::size_t k = 0; k < fed.clients.size(); ++k) save_client(dir / ("client_" + std::to_string(k)), fed.clients[k]);
  if (fed.central) save_client(dir / "central", *fed.central);
}

void load_federation(const fs::path& dir, Federation& fed) {
  if (!fs::exists(dir / "federation.txt")) throw Error("no checkpoint at " + dir.string());
  const auto m = read_manifest(dir / "federation.txt");
  auto field = [&](const std::string& key) {
    const auto it = m.find(key);
    if (it == m.end()) throw FormatError(dir.string() + ": manifest lacks '" + key + "'");
    return it->second;
  };
  if (field("version") != std::to_string(kCheckpointVersion)) {
    throw FormatError(dir.string() + ": checkpoint version " + field("version") + " is not supported");
  }
  if (field("mode") != to_string(fed.mode)) {
    throw FormatError(dir.string() + ": checkpoint was trained in mode " + field("mode") + ", not " +
                      std::string(to_string(fed.mode)));
  }
  if (field("clients") != std::to_string(fed.client_count()) ||
      field("entities") != std::to_string(fed.mapping.global_entities)) {
    throw FormatError(dir.string() + ": checkpoint does not match the shards");
  }
  load_into(dir / "server_entities.bin", fed.server.entities);
  fed.server.round = std::stoull(field("round"));
  for (std::size_t k = 0; k < fed.clients.size(); ++k) load_client(dir / ("client_" + std::to_string(k)), fed.clients[k]);
  if (fed.central) load_client(dir / "central", *fed.central);
}

void save_progress(const fs::path& path, const TrainingProgress& p) {
  write_manifest(path, {{"completed_rounds", std::to_string(p.completed_rounds)},
                        {"best_metric", format_double(p.best_metric)},
                        {"best_round", std::to_string(p.best_round)},
                        {"bad_evaluations", std::to_string(p.bad_evaluations)},
                        {"finished", p.finished ? "1" : "0"}});
}

TrainingProgress load_progress(const fs::path& path) {
  const auto m = read_manifest(path);
  auto field = [&](const std::string& key) {
    const auto it = m.find(key);
    if (it == m.end()) throw FormatError(path.string() + ": lacks '" + key + "'");
    return it->second;
  };
  TrainingProgress p;
  p.completed_rounds = std::stoull(field("completed_rounds"));
  p.best_metric = parse_double(field("best_metric"), 0);
  p.best_round = std::stoull(field("best_round"));
  p.bad_evaluations = std::stoull(field("bad_evaluations"));
  p.finished = field("finished") == "1";
  return p;
}

void write_history(std::ostream& out, const History& history) {
  out << "round,client,split,hits1,hits3,hits10,mrr,view\n";
  for (const auto& row : history) {
    out << row.round << ',' << (row.client ? std::to_string(*row.client) : std::string("macro")) << ','
        << row.split << ',' << format_double(row.metrics.hits1) << ',' << format_double(row.metrics.hits3) << ','
        << format_double(row.metrics.hits10) << ',' << format_double(row.metrics.mrr) << ','
        << to_string(row.view) << '\n';
  }
}

History read_history(std::istream& in) {
  History history;
  std::string line;
  if (!std::getline(in, line)) return history;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_commas(line);
    if (f.size() != 8) throw ParseError(lineno, "history rows have 8 fields");
    HistoryRow row;
    row.round = std::stoull(f[0]);
    if (f[1] != "macro") row.client = std::stoull(f[1]);
    row.split = f[2];
    row.metrics.hits1 = parse_double(f[3], lineno);
    row.metrics.hits3 = parse_double(f[4], lineno);
    row.metrics.hits10 = parse_double(f[5], lineno);
    row.metrics.mrr = parse_double(f[6], lineno);
    row.view = parse_view(f[7]);
    history.push_back(row);
  }
  return history;
}

}  // namespace fkg
