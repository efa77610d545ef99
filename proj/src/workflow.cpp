#include "fkg/workflow.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "fkg/checkpoint.hpp"
#include "fkg/error.hpp"

namespace fkg {

namespace fs = std::filesystem;

namespace {

std::ofstream open_text(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::string fixed(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string full(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string client_name(const std::optional<std::size_t>& client) {
  return client ? std::to_string(*client) : std::string("macro");
}

void write_config(const fs::path& dir, const ExperimentConfig& config) {
  auto out = open_text(dir / "config.txt");
  out << dump(config);
}

// The directory holding federation.txt: `dir` itself or a known child.
fs::path state_dir(const fs::path& dir) {
  for (const auto& candidate : {dir, dir / "best", dir / "unlearned"}) {
    if (fs::exists(candidate / "federation.txt")) return candidate;
  }
  throw Error("no saved state at " + dir.string());
}

TrainingMode saved_mode(const fs::path& dir) {
  const auto m = read_manifest(dir / "federation.txt");
  const auto it = m.find("mode");
  if (it == m.end()) throw FormatError(dir.string() + ": manifest lacks 'mode'");
  return parse_training_mode(it->second);
}

std::vector<Triple> to_global(const ClientShard& shard, std::span<const Triple> local) {
  std::vector<Triple> out;
  out.reserve(local.size());
  for (const auto& t : local) {
    out.push_back({shard.entity_globals[t.head], shard.relation_globals[t.relation], shard.entity_globals[t.tail]});
  }
  return out;
}

void print_report(std::ostream& log, const std::vector<std::pair<View, MetricsReport>>& reports) {
  log << "view    client  hits1   hits3   hits10  mrr\n";
  for (const auto& [view, report] : reports) {
    auto line = [&](const std::string& who, const Metrics& m) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "%-7s %-7s %.4f  %.4f  %.4f  %.4f\n", std::string(to_string(view)).c_str(),
                    who.c_str(), m.hits1, m.hits3, m.hits10, m.mrr);
      log << buf;
    };
    for (std::size_t k = 0; k < report.clients.size(); ++k) line(std::to_string(k), report.clients[k]);
    line("macro", report.macro);
  }
}

void write_metrics_csv(std::ostream& out, const std::vector<std::pair<View, MetricsReport>>& reports,
                       const std::string& split) {
  out << "client,split,hits1,hits3,hits10,mrr,view\n";
  for (const auto& [view, report] : reports) {
    auto line = [&](const std::string& who, const Metrics& m) {
      out << who << ',' << split << ',' << full(m.hits1) << ',' << full(m.hits3) << ',' << full(m.hits10) << ','
          << full(m.mrr) << ',' << to_string(view) << '\n';
    };
    for (std::size_t k = 0; k < report.clients.size(); ++k) line(std::to_string(k), report.clients[k]);
    line("macro", report.macro);
  }
}

std::vector<std::pair<View, MetricsReport>> evaluate_views(const Federation& fed, const TripleSelector& select,
                                                           std::size_t workers) {
  std::vector<std::pair<View, MetricsReport>> out;
  for (auto view : report_views(fed.mode)) out.emplace_back(view, evaluate_federation(fed, view, select, workers));
  return out;
}

// Forget- and test-set metrics of the unlearning clients.
void evaluate_phase(const Federation& fed, const std::string& phase, const ForgetSpec& spec, std::size_t workers,
                    UnlearnReport& report) {
  for (auto view : report_views(fed.mode)) {
    std::vector<Metrics> forget;
    std::vector<Metrics> test;
    for (const auto& e : spec.entries) {
      forget.push_back(evaluate_client(fed, e.client, view, e.forget, workers));
      test.push_back(evaluate_client(fed, e.client, view, fed.shards[e.client]->splits.test, workers));
      report.push_back({phase, e.client, "forget", view, forget.back()});
      report.push_back({phase, e.client, "test", view, test.back()});
    }
    report.push_back({phase, std::nullopt, "forget", view, make_report(forget).macro});
    report.push_back({phase, std::nullopt, "test", view, make_report(test).macro});
  }
}

}  // namespace

PartitionMethod parse_partition_method(std::string_view name) {
  if (name == "spectral") return PartitionMethod::Spectral;
  if (name == "random") return PartitionMethod::Random;
  throw ConfigError("unknown partition method '" + std::string(name) + "' (expected spectral or random)");
}

ShardStats run_partition(const PartitionOptions& options, std::ostream& log) {
  if (options.clients == 0) throw ConfigError("clients must be >= 1");
  auto loaded = load_triples_file(options.input);
  const auto& kg = loaded.graph;
  const auto relations = loaded.vocab.relations.size();
  if (options.clients > relations) {
    throw ConfigError("cannot split " + std::to_string(relations) + " relations into " +
                      std::to_string(options.clients) + " clients");
  }
  const auto clustering = options.method == PartitionMethod::Spectral
                              ? spectral_partition(build_cooccurrence(kg), options.clients, options.seed)
                              : random_partition(relations, options.clients, options.seed);
  const auto shards = distribute(kg, clustering);
  const auto stats = shard_stats(shards);

  const fs::path dir = options.out;
  fs::create_directories(dir);
  for (std::size_t k = 0; k < shards.size(); ++k) {
    auto out = open_text(dir / ("shard_" + std::to_string(k) + ".tsv"));
    write_triples(out, shards[k].triples(), loaded.vocab);
    auto hist = open_text(dir / ("degree_hist_" + std::to_string(k) + ".csv"));
    hist << "degree,entities\n";
    for (const auto& [degree, count] : stats.shards[k].degree_histogram) hist << degree << ',' << count << '\n';
  }
  {
    auto out = open_text(dir / "entities.vocab");
    write_labels(out, loaded.vocab.entities);
  }
  {
    auto out = open_text(dir / "relations.vocab");
    write_labels(out, loaded.vocab.relations);
  }
  auto csv = open_text(dir / "stats.csv");
  csv << "shard_id,relations,entities,triples,avg_degree,avg_clustering_coeff\n";
  log << "shard  relations  entities  triples  avg_degree  avg_clustering\n";
  for (std::size_t k = 0; k < stats.shards.size(); ++k) {
    const auto& s = stats.shards[k];
    csv << k << ',' << s.relations << ',' << s.entities << ',' << s.triples << ',' << full(s.avg_degree) << ','
        << full(s.avg_clustering) << '\n';
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-6zu %-10zu %-9zu %-8zu %-11.3f %.4f\n", k, s.relations, s.entities, s.triples,
                  s.avg_degree, s.avg_clustering);
    log << buf;
  }
  log << "entities in >= 2 shards: " << stats.overlapping_entities << '\n';
  return stats;
}

Dataset load_dataset(const fs::path& dir) {
  Dataset data;
  for (const auto& [name, labels] : {std::pair{"entities.vocab", &data.vocab.entities},
                                     std::pair{"relations.vocab", &data.vocab.relations}}) {
    std::ifstream in(dir / name);
    if (!in) throw Error("cannot read " + (dir / name).string() + " (run partition first)");
    try {
      *labels = read_labels(in);
    } catch (const ParseError& e) {
      throw Error((dir / name).string() + ": " + e.what());
    }
  }
  const auto entities = data.vocab.entities.size();
  const auto relations = data.vocab.relations.size();
  for (std::size_t k = 0;; ++k) {
    const auto path = dir / ("shard_" + std::to_string(k) + ".tsv");
    if (!fs::exists(path)) break;
    try {
      data.shards.push_back(load_triples_file(path.string(), data.vocab));
    } catch (const ParseError& e) {
      throw Error(path.string() + ": " + e.what());
    }
    if (data.vocab.entities.size() != entities || data.vocab.relations.size() != relations) {
      throw Error(path.string() + " uses labels missing from the vocabulary");
    }
    if (data.shards.back().empty()) throw Error(path.string() + " holds no triples");
  }
  if (data.shards.empty()) throw Error("no shard_0.tsv in " + dir.string());
  return data;
}

std::vector<std::shared_ptr<const ClientShard>> client_shards(const Dataset& data, std::uint64_t seed) {
  std::vector<std::shared_ptr<const ClientShard>> out;
  for (std::size_t k = 0; k < data.shards.size(); ++k) {
    out.push_back(std::make_shared<const ClientShard>(make_client_shard(k, data.shards[k], seed)));
  }
  return out;
}

Federation make_federation(const Dataset& data, const ExperimentConfig& config, TrainingMode mode) {
  return init_federation(mode, client_shards(data, config.train.seed), data.vocab.entities.size(),
                         data.vocab.relations.size(), config.train);
}

TrainingResult run_train(const ExperimentConfig& config, bool resume, std::ostream& log) {
  validate(config);
  const auto data = load_dataset(config.data);
  const fs::path dir = config.out;
  const auto hash = config_hash(config);

  std::optional<TrainingSession> session;
  if (resume) {
    const auto manifest = read_manifest(dir / "manifest.txt");
    const auto it = manifest.find("config_hash");
    if (it == manifest.end() || it->second != hash) {
      throw ConfigError("cannot resume: configuration differs from the one in " + (dir / "config.txt").string());
    }
    auto current = make_federation(data, config, config.mode);
    auto best = current;
    load_federation(dir / "current", current);
    load_federation(dir / "best", best);
    std::ifstream hin(dir / "history.csv");
    if (!hin) throw Error("cannot read " + (dir / "history.csv").string());
    session.emplace(std::move(current), std::move(best), load_progress(dir / "progress.txt"), read_history(hin),
                    config.train);
    log << "resuming after round " << session->progress().completed_rounds << '\n';
  } else {
    fs::create_directories(dir);
    session.emplace(make_federation(data, config, config.mode), config.train);
  }
  write_config(dir, config);
  write_manifest(dir / "manifest.txt", {{"command", "train"},
                                        {"mode", std::string(to_string(config.mode))},
                                        {"seed", std::to_string(config.train.seed)},
                                        {"config_hash", hash}});

  auto save = [&](const TrainingSession& s) {
    save_federation(dir / "best", s.best());
    save_federation(dir / "current", s.current());
    save_progress(dir / "progress.txt", s.progress());
    auto out = open_text(dir / "history.csv");
    write_history(out, s.history());
  };
  session->run([&](const TrainingSession& s) {
    save(s);
    const auto& p = s.progress();
    log << "round " << p.completed_rounds << "  valid mrr";
    for (const auto& row : s.history()) {
      if (row.round == p.completed_rounds && !row.client) log << "  " << to_string(row.view) << '=' << fixed(row.metrics.mrr);
    }
    log << "  best round " << p.best_round << '\n';
  });
  save(*session);

  const auto& best = session->best();
  const auto reports = evaluate_views(best, select_test(), config.train.workers);
  {
    auto out = open_text(dir / "test.csv");
    write_metrics_csv(out, reports, "test");
  }
  log << "test metrics (" << to_string(config.mode) << ", " << to_string(config.train.kind) << ", best round "
      << session->progress().best_round << ")\n";
  print_report(log, reports);
  return {best, session->history(), session->progress()};
}

void write_report(std::ostream& out, const UnlearnReport& report) {
  out << "phase,client,split,view,hits1,hits3,hits10,mrr\n";
  for (const auto& r : report) {
    out << r.phase << ',' << client_name(r.client) << ',' << r.split << ',' << to_string(r.view) << ','
        << full(r.metrics.hits1) << ',' << full(r.metrics.hits3) << ',' << full(r.metrics.hits10) << ','
        << full(r.metrics.mrr) << '\n';
  }
}

UnlearnReport run_unlearn(const ExperimentConfig& config, const fs::path& checkpoint, std::ostream& log) {
  validate(config);
  const auto data = load_dataset(config.data);
  const auto source = state_dir(checkpoint);
  const auto mode = saved_mode(source);
  if (mode == TrainingMode::Centralized) throw ConfigError("a centralized model has no client tables to unlearn");
  auto raw = make_federation(data, config, mode);
  load_federation(source, raw);

  std::vector<std::size_t> clients = config.forget_clients;
  if (clients.empty()) {
    for (std::size_t k = 0; k < raw.client_count(); ++k) clients.push_back(k);
  }
  const auto spec = sample_forget_spec(raw, clients, config.forget_proportion, config.unlearn.seed);

  const fs::path dir = config.out;
  fs::create_directories(dir);
  write_config(dir, config);
  write_manifest(dir / "manifest.txt", {{"command", "unlearn"},
                                        {"mode", std::string(to_string(mode))},
                                        {"source", source.string()},
                                        {"seed", std::to_string(config.train.seed)},
                                        {"config_hash", config_hash(config)}});
  for (const auto& e : spec.entries) {
    const auto& shard = *raw.shards[e.client];
    auto f = open_text(dir / ("forget_" + std::to_string(e.client) + ".tsv"));
    write_triples(f, to_global(shard, e.forget), data.vocab);
    auto r = open_text(dir / ("retain_" + std::to_string(e.client) + ".tsv"));
    write_triples(r, to_global(shard, e.retain), data.vocab);
    log << "client " << e.client << ": forgetting " << e.forget.size() << " of "
        << e.forget.size() + e.retain.size() << " training triples\n";
  }

  UnlearnReport report;
  const auto workers = config.train.workers;
  evaluate_phase(raw, "raw", spec, workers, report);

  if (config.retrain) {
    log << "re-training (" << to_string(config.retrain_mode) << ") without the forgetting sets\n";
    const auto retrained = retrain_baseline(raw, spec, config.retrain_mode, config.train);
    evaluate_phase(retrained.best, "retrained", spec, workers, report);
  }

  Federation unlearned = raw;
  if (config.unlearn_lr > 0.0) {
    for (auto& c : unlearned.clients) {
      for (auto* opt : {&c.local_entity_opt, &c.relation_opt, &c.global_entity_opt}) {
        opt->config.learning_rate = config.unlearn_lr;
      }
    }
  }
  run_federated_unlearning(unlearned, spec, config.train, config.unlearn);
  save_federation(dir / "unlearned", unlearned);
  evaluate_phase(unlearned, "unlearned", spec, workers, report);

  {
    auto out = open_text(dir / "report.csv");
    write_report(out, report);
  }

  log << "macro hits1 / mrr over unlearning clients\n";
  log << "view    phase      forget-h1  forget-mrr  test-h1  test-mrr\n";
  for (auto view : report_views(mode)) {
    for (const std::string phase : {"raw", "retrained", "unlearned"}) {
      const Metrics* forget = nullptr;
      const Metrics* test = nullptr;
      for (const auto& r : report) {
        if (r.client || r.phase != phase || r.view != view) continue;
        (r.split == "forget" ? forget : test) = &r.metrics;
      }
      if (!forget || !test) continue;
      char buf[160];
      std::snprintf(buf, sizeof buf, "%-7s %-10s %.4f     %.4f      %.4f   %.4f\n",
                    std::string(to_string(view)).c_str(), phase.c_str(), forget->hits1, forget->mrr, test->hits1,
                    test->mrr);
      log << buf;
    }
  }
  return report;
}

std::vector<std::pair<View, MetricsReport>> run_evaluate(const ExperimentConfig& config, const fs::path& checkpoint,
                                                         const std::string& split) {
  if (split != "test" && split != "valid") throw ConfigError("split must be test or valid, got '" + split + "'");
  const auto data = load_dataset(config.data);
  const auto source = state_dir(checkpoint);
  auto fed = make_federation(data, config, saved_mode(source));
  load_federation(source, fed);
  return evaluate_views(fed, split == "test" ? select_test() : select_valid(), config.train.workers);
}

void run_export(const ExportOptions& options) {
  const auto table = load_table(options.table);
  std::vector<std::string> labels;
  if (!options.labels.empty()) {
    std::ifstream in(options.labels);
    if (!in) throw Error("cannot read " + options.labels);
    const auto vocab = read_labels(in);
    for (std::uint32_t i = 0; i < vocab.size(); ++i) labels.push_back(vocab.label(i));
  } else if (options.client) {
    const auto data = load_dataset(options.data);
    if (*options.client >= data.shards.size()) throw ConfigError("no client " + std::to_string(*options.client));
    const auto& shard = data.shards[*options.client];
    if (table.role() == TableRole::Relation) {
      for (auto r : shard.relations()) labels.push_back(data.vocab.relations.label(r));
    } else {
      for (auto e : shard.entities()) labels.push_back(data.vocab.entities.label(e));
    }
  }
  if (!labels.empty() && labels.size() != table.rows()) {
    throw Error("table has " + std::to_string(table.rows()) + " rows but " + std::to_string(labels.size()) +
                " labels were given");
  }
  std::ofstream out(options.out);
  if (!out) throw Error("cannot write " + options.out);
  export_csv(out, table, labels);
}

}  // namespace fkg
