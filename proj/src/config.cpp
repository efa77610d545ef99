#include "fkg/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "fkg/checkpoint.hpp"
#include "fkg/error.hpp"

namespace fkg {

ExperimentConfig::ExperimentConfig() = default;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t to_size(std::string_view v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw ConfigError("expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

std::uint64_t to_u64(std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw ConfigError("expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

double to_double(std::string_view v) {
  const std::string s(v);
  char* end = nullptr;
  const double out = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(out)) {
    throw ConfigError("expected a finite number, got '" + s + "'");
  }
  return out;
}

bool to_bool(std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("expected true or false, got '" + std::string(v) + "'");
}

std::vector<std::size_t> to_list(std::string_view v) {
  std::vector<std::size_t> out;
  if (v == "all" || v.empty()) return out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto pos = v.find(',', start);
    out.push_back(to_size(trim(v.substr(start, pos - start))));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::string show(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
std::string show(bool v) { return v ? "true" : "false"; }
std::string show(std::size_t v) { return std::to_string(v); }

std::string show_list(const std::vector<std::size_t>& v) {
  if (v.empty()) return "all";
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

struct Key {
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view)> set;
};

#define FKG_SIZE(name, field) \
  {name, {[](const ExperimentConfig& c) { return show(c.field); }, [](ExperimentConfig& c, std::string_view v) { c.field = to_size(v); }}}
#define FKG_REAL(name, field) \
  {name, {[](const ExperimentConfig& c) { return show(c.field); }, [](ExperimentConfig& c, std::string_view v) { c.field = to_double(v); }}}
#define FKG_BOOL(name, field) \
  {name, {[](const ExperimentConfig& c) { return show(c.field); }, [](ExperimentConfig& c, std::string_view v) { c.field = to_bool(v); }}}

const std::map<std::string, Key, std::less<>>& keys() {
  static const std::map<std::string, Key, std::less<>> table = {
      {"mode", {[](const ExperimentConfig& c) { return std::string(to_string(c.mode)); },
                [](ExperimentConfig& c, std::string_view v) { c.mode = parse_training_mode(v); }}},
      {"model", {[](const ExperimentConfig& c) { return std::string(to_string(c.train.kind)); },
                 [](ExperimentConfig& c, std::string_view v) { c.train.kind = parse_model_kind(v); }}},
      {"seed", {[](const ExperimentConfig& c) { return std::to_string(c.train.seed); },
                [](ExperimentConfig& c, std::string_view v) { c.train.seed = c.unlearn.seed = to_u64(v); }}},
      {"workers", {[](const ExperimentConfig& c) { return show(c.train.workers); },
                   [](ExperimentConfig& c, std::string_view v) { c.train.workers = c.unlearn.workers = to_size(v); }}},
      FKG_SIZE("dim", train.dim),
      FKG_REAL("margin", train.margin),
      FKG_SIZE("rounds", train.rounds),
      FKG_REAL("fraction", train.fraction),
      FKG_SIZE("local_epochs", train.local_epochs),
      FKG_SIZE("batch_size", train.batch_size),
      FKG_SIZE("negatives", train.negatives),
      FKG_REAL("lr", train.adam.learning_rate),
      FKG_REAL("beta1", train.adam.beta1),
      FKG_REAL("beta2", train.adam.beta2),
      FKG_REAL("epsilon", train.adam.epsilon),
      {"mu_distill", {[](const ExperimentConfig& c) { return show(c.train.weights.distill); },
                      [](ExperimentConfig& c, std::string_view v) {
                        c.train.weights.distill = c.unlearn.weights.distill = to_double(v);
                      }}},
      {"mu_soft", {[](const ExperimentConfig& c) { return show(c.train.weights.soft); },
                   [](ExperimentConfig& c, std::string_view v) {
                     c.train.weights.soft = c.unlearn.weights.soft = to_double(v);
                   }}},
      {"mu_prox", {[](const ExperimentConfig& c) { return show(c.train.weights.prox); },
                   [](ExperimentConfig& c, std::string_view v) {
                     c.train.weights.prox = c.unlearn.weights.prox = to_double(v);
                   }}},
      FKG_BOOL("self_adversarial", train.weighting.self_adversarial),
      FKG_REAL("adversarial_temperature", train.weighting.temperature),
      FKG_BOOL("corrupt_heads", train.sampling.corrupt_heads),
      FKG_SIZE("eval_interval", train.eval_interval),
      FKG_SIZE("patience", train.patience),
      FKG_REAL("forget_proportion", forget_proportion),
      {"forget_clients", {[](const ExperimentConfig& c) { return show_list(c.forget_clients); },
                          [](ExperimentConfig& c, std::string_view v) { c.forget_clients = to_list(v); }}},
      FKG_SIZE("interference_epochs", unlearn.interference_epochs),
      FKG_SIZE("decay_epochs", unlearn.decay_epochs),
      FKG_SIZE("unlearn_rounds", unlearn.rounds),
      FKG_SIZE("unlearn_batch_size", unlearn.batch_size),
      FKG_REAL("unlearn_lr", unlearn_lr),
      FKG_BOOL("hard_confusion", unlearn.use_hard_confusion),
      FKG_BOOL("retrain", retrain),
      {"retrain_mode", {[](const ExperimentConfig& c) { return std::string(to_string(c.retrain_mode)); },
                        [](ExperimentConfig& c, std::string_view v) { c.retrain_mode = parse_training_mode(v); }}},
      {"data", {[](const ExperimentConfig& c) { return c.data; },
                [](ExperimentConfig& c, std::string_view v) { c.data = std::string(v); }}},
      {"out", {[](const ExperimentConfig& c) { return c.out; },
               [](ExperimentConfig& c, std::string_view v) { c.out = std::string(v); }}},
  };
  return table;
}

#undef FKG_SIZE
#undef FKG_REAL
#undef FKG_BOOL

void throw_all(const std::vector<std::string>& errors) {
  if (errors.empty()) return;
  std::string msg = errors.size() == 1 ? "invalid configuration:" : "invalid configuration (" +
                                                                       std::to_string(errors.size()) + " problems):";
  for (const auto& e : errors) msg += "\n  " + e;
  throw ConfigError(msg);
}

void apply_assignment(ExperimentConfig& config, std::string_view line, std::vector<std::string>& errors,
                      const std::string& where) {
  const auto eq = line.find('=');
  if (eq == std::string_view::npos) {
    errors.push_back(where + "expected key=value, got '" + std::string(line) + "'");
    return;
  }
  const auto key = trim(line.substr(0, eq));
  try {
    set_value(config, key, trim(line.substr(eq + 1)));
  } catch (const ConfigError& e) {
    errors.push_back(where + e.what());
  }
}

}  // namespace

ExperimentConfig default_config() {
  ExperimentConfig c;
  if (const char* env = std::getenv("FKG_WORKERS"); env && *env) {
    try {
      set_value(c, "workers", env);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("FKG_WORKERS: ") + e.what());
    }
  }
  return c;
}

std::vector<std::string> preset_names() { return {"desk"}; }

void apply_preset(ExperimentConfig& config, std::string_view name) {
  if (name == "desk") {
    config.train.dim = 64;
    config.train.batch_size = 256;
    config.train.negatives = 64;
    config.train.rounds = 50;
    config.train.adam.learning_rate = 3e-2;
    config.unlearn.batch_size = 256;
    return;
  }
  throw ConfigError("unknown preset '" + std::string(name) + "' (expected desk)");
}

void set_value(ExperimentConfig& config, std::string_view key, std::string_view value) {
  const auto& table = keys();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown key '" + std::string(key) + "'");
  try {
    it->second.set(config, value);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

void apply_text(ExperimentConfig& config, std::string_view text) {
  std::vector<std::string> errors;
  std::size_t lineno = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++lineno;
    auto line = text.substr(start, end - start);
    start = end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    apply_assignment(config, line, errors, "line " + std::to_string(lineno) + ": ");
  }
  throw_all(errors);
}

void apply_file(ExperimentConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    apply_text(config, buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void apply_overrides(ExperimentConfig& config, const std::vector<std::string>& assignments) {
  std::vector<std::string> errors;
  for (const auto& a : assignments) apply_assignment(config, a, errors, "");
  throw_all(errors);
}

void validate(const ExperimentConfig& c) {
  std::vector<std::string> errors;
  const auto& t = c.train;
  auto require = [&](bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  };
  require(t.dim >= 1, "dim must be >= 1");
  require(t.kind == ModelKind::TransE || t.dim % 2 == 0, "dim must be even for complex and rotate");
  require(t.margin >= 0.0, "margin must be >= 0");
  require(t.rounds >= 1, "rounds must be >= 1");
  require(t.fraction > 0.0 && t.fraction <= 1.0, "fraction must be in (0, 1]");
  require(t.local_epochs >= 1, "local_epochs must be >= 1");
  require(t.batch_size >= 1, "batch_size must be >= 1");
  require(t.negatives >= 1, "negatives must be >= 1");
  require(t.adam.learning_rate > 0.0, "lr must be > 0");
  require(t.adam.beta1 >= 0.0 && t.adam.beta1 < 1.0, "beta1 must be in [0, 1)");
  require(t.adam.beta2 >= 0.0 && t.adam.beta2 < 1.0, "beta2 must be in [0, 1)");
  require(t.adam.epsilon > 0.0, "epsilon must be > 0");
  require(t.weights.distill >= 0.0, "mu_distill must be >= 0");
  require(t.weights.soft >= 0.0, "mu_soft must be >= 0");
  require(t.weights.prox >= 0.0, "mu_prox must be >= 0");
  require(t.weighting.temperature > 0.0, "adversarial_temperature must be > 0");
  require(t.eval_interval >= 1, "eval_interval must be >= 1");
  require(t.patience >= 1, "patience must be >= 1");
  require(t.workers >= 1, "workers must be >= 1");
  require(c.forget_proportion > 0.0 && c.forget_proportion < 1.0, "forget_proportion must be in (0, 1)");
  require(c.unlearn.rounds >= 1, "unlearn_rounds must be >= 1");
  require(c.unlearn.batch_size >= 1, "unlearn_batch_size must be >= 1");
  require(c.unlearn_lr >= 0.0, "unlearn_lr must be >= 0");
  require(c.retrain_mode != TrainingMode::Centralized, "retrain_mode cannot be centralized");
  require(!c.data.empty(), "data must not be empty");
  require(!c.out.empty(), "out must not be empty");
  throw_all(errors);
}

std::string dump(const ExperimentConfig& config) {
  std::string out;
  for (const auto& [name, key] : keys()) out += name + "=" + key.get(config) + "\n";
  return out;
}

std::string config_hash(const ExperimentConfig& config) { return hash_text(dump(config)); }

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [name, key] : keys()) out.push_back(name);
  return out;
}

}  // namespace fkg
