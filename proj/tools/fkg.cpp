// fkg: partition a KG into client shards, train federated embeddings,
// unlearn, evaluate and export.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "fkg/checkpoint.hpp"
#include "fkg/config.hpp"
#include "fkg/error.hpp"
#include "fkg/synthetic.hpp"
#include "fkg/workflow.hpp"

namespace {

struct ConfigFlags {
  std::string file;
  std::string preset;
  std::vector<std::string> sets;
  std::optional<std::string> mode;
  std::optional<std::string> model;
  std::optional<std::string> seed;
  std::optional<std::string> workers;
  std::optional<std::string> data;
  std::optional<std::string> out;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("-c,--config", f.file, "key=value configuration file");
  cmd->add_option("--preset", f.preset, "start from a preset (desk)");
  cmd->add_option("--set", f.sets, "override one key, key=value (repeatable)");
  cmd->add_option("--mode", f.mode, "fedlu, fede, fedprox, independent or centralized");
  cmd->add_option("--model", f.model, "transe, complex or rotate");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("-j,--workers", f.workers, "worker threads (default: FKG_WORKERS or 1)");
  cmd->add_option("--data", f.data, "data directory written by 'partition'");
  cmd->add_option("-o,--out", f.out, "output directory");
}

fkg::ExperimentConfig resolve(const ConfigFlags& f) {
  auto config = fkg::default_config();
  if (!f.preset.empty()) fkg::apply_preset(config, f.preset);
  if (!f.file.empty()) fkg::apply_file(config, f.file);
  std::vector<std::string> sets = f.sets;
  for (const auto& [key, value] : {std::pair{"mode", &f.mode}, std::pair{"model", &f.model},
                                   std::pair{"seed", &f.seed}, std::pair{"workers", &f.workers},
                                   std::pair{"data", &f.data}, std::pair{"out", &f.out}}) {
    if (*value) sets.push_back(std::string(key) + "=" + **value);
  }
  fkg::apply_overrides(config, sets);
  fkg::validate(config);
  return config;
}

void print_reports(const std::vector<std::pair<fkg::View, fkg::MetricsReport>>& reports, const std::string& split,
                   std::ostream& out) {
  out << "client,split,hits1,hits3,hits10,mrr,view\n";
  for (const auto& [view, report] : reports) {
    auto line = [&](const std::string& who, const fkg::Metrics& m) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6f,%.6f,%.6f,%s\n", who.c_str(), split.c_str(), m.hits1, m.hits3,
                    m.hits10, m.mrr, std::string(fkg::to_string(view)).c_str());
      out << buf;
    };
    for (std::size_t k = 0; k < report.clients.size(); ++k) line(std::to_string(k), report.clients[k]);
    line("macro", report.macro);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated knowledge graph embedding with unlearning"};
  app.require_subcommand(1);

  fkg::PartitionOptions part;
  std::string method = "spectral";
  auto* partition = app.add_subcommand("partition", "split a triple file into relation-disjoint client shards");
  partition->add_option("-i,--input", part.input, "triple TSV (head<TAB>relation<TAB>tail)")->required();
  partition->add_option("-k,--clients", part.clients, "number of clients")->capture_default_str();
  partition->add_option("-m,--method", method, "spectral or random")->capture_default_str();
  partition->add_option("--seed", part.seed, "random seed")->capture_default_str();
  partition->add_option("-o,--out", part.out, "output directory")->required();

  fkg::SyntheticSpec synth_spec;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "write a synthetic heterogeneous KG as triple TSV");
  synth->add_option("--entities", synth_spec.entities)->capture_default_str();
  synth->add_option("--relations", synth_spec.relations)->capture_default_str();
  synth->add_option("--triples", synth_spec.triples)->capture_default_str();
  synth->add_option("--domains", synth_spec.domains)->capture_default_str();
  synth->add_option("--overlap", synth_spec.overlap, "chance an entity joins a second domain")->capture_default_str();
  synth->add_option("--correlation", synth_spec.domain_correlation, "per-domain latent correlation")
      ->capture_default_str();
  synth->add_option("--seed", synth_spec.seed)->capture_default_str();
  synth->add_option("-o,--out", synth_out, "output TSV")->required();

  ConfigFlags train_flags;
  bool resume = false;
  auto* train = app.add_subcommand("train", "train a federation and keep the best checkpoint");
  add_config_flags(train, train_flags);
  train->add_flag("--resume", resume, "continue from <out>/current");

  ConfigFlags unlearn_flags;
  std::string unlearn_ckpt;
  std::optional<std::string> proportion;
  auto* unlearn = app.add_subcommand("unlearn", "forget sampled training triples and report against re-training");
  add_config_flags(unlearn, unlearn_flags);
  unlearn->add_option("--checkpoint", unlearn_ckpt, "training directory (or saved state)")->required();
  unlearn->add_option("-p,--proportion", proportion, "forget proportion of each client's training set");

  ConfigFlags eval_flags;
  std::string eval_ckpt;
  std::string split = "test";
  std::string eval_csv;
  auto* evaluate = app.add_subcommand("evaluate", "filtered link prediction metrics of a saved state");
  add_config_flags(evaluate, eval_flags);
  evaluate->add_option("--checkpoint", eval_ckpt, "training or unlearning directory, or saved state")->required();
  evaluate->add_option("--split", split, "test or valid")->capture_default_str();
  evaluate->add_option("--csv", eval_csv, "also write the metrics to this file");

  fkg::ExportOptions exp;
  std::size_t exp_client = 0;
  auto* export_cmd = app.add_subcommand("export", "write an embedding table as CSV");
  export_cmd->add_option("-t,--table", exp.table, "table file (.bin)")->required();
  auto* labels_opt = export_cmd->add_option("--labels", exp.labels, "vocabulary file for a global table");
  auto* client_opt = export_cmd->add_option("--client", exp_client, "client id, labels from --data shards");
  export_cmd->add_option("--data", exp.data, "data directory (with --client)");
  export_cmd->add_option("-o,--out", exp.out, "output CSV")->required();
  labels_opt->excludes(client_opt);
  client_opt->needs(export_cmd->get_option("--data"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*partition) {
      part.method = fkg::parse_partition_method(method);
      fkg::run_partition(part, std::cout);
    } else if (*synth) {
      const auto kg = fkg::make_synthetic_kg(synth_spec);
      std::ofstream out(synth_out);
      if (!out) throw fkg::Error("cannot write " + synth_out);
      fkg::write_triples(out, kg.graph.triples(), kg.vocab);
      std::cout << "wrote " << kg.graph.size() << " triples over " << kg.graph.entities().size() << " entities and "
                << kg.graph.relations().size() << " relations\n";
    } else if (*train) {
      fkg::run_train(resolve(train_flags), resume, std::cout);
    } else if (*unlearn) {
      if (proportion) unlearn_flags.sets.push_back("forget_proportion=" + *proportion);
      fkg::run_unlearn(resolve(unlearn_flags), unlearn_ckpt, std::cout);
    } else if (*evaluate) {
      const auto reports = fkg::run_evaluate(resolve(eval_flags), eval_ckpt, split);
      print_reports(reports, split, std::cout);
      if (!eval_csv.empty()) {
        std::ofstream out(eval_csv);
        if (!out) throw fkg::Error("cannot write " + eval_csv);
        print_reports(reports, split, out);
      }
    } else if (*export_cmd) {
      if (*client_opt) exp.client = exp_client;
      fkg::run_export(exp);
    }
  } catch (const fkg::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
