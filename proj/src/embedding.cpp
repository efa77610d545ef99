#include "fkg/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "fkg/error.hpp"

namespace fkg {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::TransE: return "transe";
    case ModelKind::ComplEx: return "complex";
    case ModelKind::RotatE: return "rotate";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "transe") return ModelKind::TransE;
  if (lower == "complex") return ModelKind::ComplEx;
  if (lower == "rotate") return ModelKind::RotatE;
  throw ConfigError("unknown model '" + std::string(name) + "' (expected transe, complex or rotate)");
}

std::size_t table_width(ModelKind kind, TableRole role, std::size_t dim) {
  if (kind != ModelKind::TransE && dim % 2 != 0) {
    throw ConfigError(std::string(to_string(kind)) + " needs an even dimension, got " + std::to_string(dim));
  }
  if (kind == ModelKind::RotatE && role == TableRole::Relation) return dim / 2;
  return dim;
}

EmbeddingTable::EmbeddingTable(ModelKind kind, TableRole role, std::size_t rows, std::size_t dim)
    : kind_(kind), role_(role), rows_(rows), dim_(dim), width_(table_width(kind, role, dim)),
      data_(rows * width_, 0.0) {}

EmbeddingTable init_table(std::size_t count, ModelKind kind, TableRole role, std::size_t dim,
                          std::uint64_t seed) {
  EmbeddingTable table(kind, role, count, dim);
  Rng rng(seed);
  if (kind == ModelKind::RotatE && role == TableRole::Relation) {
    // uniform() is in [0, 1), so pi - 2 pi u lies in (-pi, pi].
    for (auto& x : table.data()) x = std::numbers::pi - 2.0 * std::numbers::pi * rng.uniform();
  } else {
    const double bound = 6.0 / std::sqrt(static_cast<double>(dim));
    for (auto& x : table.data()) x = rng.uniform(-bound, bound);
  }
  return table;
}

namespace {

double transe_distance(std::span<const double> h, std::span<const double> r, std::span<const double> t) {
  double s = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double d = h[i] + r[i] - t[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double complex_score(std::span<const double> h, std::span<const double> r, std::span<const double> t) {
  const std::size_t half = h.size() / 2;
  double s = 0.0;
  for (std::size_t i = 0; i < half; ++i) {
    const double hr = h[i], hi = h[half + i];
    const double rr = r[i], ri = r[half + i];
    const double tr = t[i], ti = t[half + i];
    // Re((hr + i hi)(rr + i ri)(tr - i ti))
    s += hr * rr * tr + hr * ri * ti + hi * rr * ti - hi * ri * tr;
  }
  return s;
}

double rotate_distance(std::span<const double> h, std::span<const double> phase, std::span<const double> t) {
  const std::size_t half = h.size() / 2;
  double s = 0.0;
  for (std::size_t i = 0; i < half; ++i) {
    const double c = std::cos(phase[i]);
    const double sn = std::sin(phase[i]);
    const double dr = h[i] * c - h[half + i] * sn - t[i];
    const double di = h[i] * sn + h[half + i] * c - t[half + i];
    s += dr * dr + di * di;
  }
  return std::sqrt(s);
}

}  // namespace

double score(ModelKind kind, std::span<const double> h, std::span<const double> r, std::span<const double> t) {
  switch (kind) {
    case ModelKind::TransE: return -transe_distance(h, r, t);
    case ModelKind::ComplEx: return complex_score(h, r, t);
    case ModelKind::RotatE: return -rotate_distance(h, r, t);
  }
  return 0.0;
}

void accumulate_score_gradients(ModelKind kind, std::span<const double> h, std::span<const double> r,
                                std::span<const double> t, double scale, std::span<double> gh,
                                std::span<double> gr, std::span<double> gt) {
  switch (kind) {
    case ModelKind::TransE: {
      const double dist = transe_distance(h, r, t);
      if (dist == 0.0) return;
      const double k = -scale / dist;
      for (std::size_t i = 0; i < h.size(); ++i) {
        const double g = k * (h[i] + r[i] - t[i]);
        gh[i] += g;
        gr[i] += g;
        gt[i] -= g;
      }
      return;
    }
    case ModelKind::ComplEx: {
      const std::size_t half = h.size() / 2;
      for (std::size_t i = 0; i < half; ++i) {
        const double hr = h[i], hi = h[half + i];
        const double rr = r[i], ri = r[half + i];
        const double tr = t[i], ti = t[half + i];
        gh[i] += scale * (rr * tr + ri * ti);
        gh[half + i] += scale * (rr * ti - ri * tr);
        gr[i] += scale * (hr * tr + hi * ti);
        gr[half + i] += scale * (hr * ti - hi * tr);
        gt[i] += scale * (hr * rr - hi * ri);
        gt[half + i] += scale * (hr * ri + hi * rr);
      }
      return;
    }
    case ModelKind::RotatE: {
      const std::size_t half = h.size() / 2;
      const double dist = rotate_distance(h, r, t);
      if (dist == 0.0) return;
      const double k = -scale / dist;
      for (std::size_t i = 0; i < half; ++i) {
        const double c = std::cos(r[i]);
        const double sn = std::sin(r[i]);
        const double hr = h[i], hi = h[half + i];
        const double dr = hr * c - hi * sn - t[i];
        const double di = hr * sn + hi * c - t[half + i];
        gh[i] += k * (dr * c + di * sn);
        gh[half + i] += k * (-dr * sn + di * c);
        gr[i] += k * (dr * (-hr * sn - hi * c) + di * (hr * c - hi * sn));
        gt[i] -= k * dr;
        gt[half + i] -= k * di;
      }
      return;
    }
  }
}

ScoreGradients score_gradients(ModelKind kind, std::span<const double> h, std::span<const double> r,
                               std::span<const double> t) {
  ScoreGradients g{std::vector<double>(h.size()), std::vector<double>(r.size()), std::vector<double>(t.size())};
  accumulate_score_gradients(kind, h, r, t, 1.0, g.head, g.relation, g.tail);
  return g;
}

std::size_t RowGradients::touch(std::size_t row) {
  auto [it, inserted] = index_.try_emplace(row, rows_.size());
  if (inserted) {
    rows_.push_back(row);
    values_.resize(values_.size() + width_, 0.0);
  }
  return it->second;
}

void RowGradients::clear() {
  rows_.clear();
  values_.clear();
  index_.clear();
}

void RowGradients::scale(double factor) {
  for (auto& v : values_) v *= factor;
}

AdamState::AdamState(const EmbeddingTable& table, AdamConfig cfg)
    : config(cfg), width(table.width()), first_moment(table.data().size(), 0.0),
      second_moment(table.data().size(), 0.0), steps(table.rows(), 0) {}

double wrap_phase(double theta) {
  double w = std::remainder(theta, 2.0 * std::numbers::pi);
  if (w <= -std::numbers::pi) w += 2.0 * std::numbers::pi;
  return w;
}

void adam_step(EmbeddingTable& table, const RowGradients& grads, AdamState& state) {
  if (grads.width() != table.width() || state.width != table.width() || state.steps.size() != table.rows()) {
    throw Error("adam_step: gradient/state shape does not match the table");
  }
  const auto& rows = grads.rows();
  for (std::size_t slot = 0; slot < rows.size(); ++slot) {
    if (rows[slot] >= table.rows()) throw Error("adam_step: row " + std::to_string(rows[slot]) + " out of range");
    for (double g : grads.slot(slot)) {
      if (!std::isfinite(g)) throw Error("adam_step: non-finite gradient in row " + std::to_string(rows[slot]));
    }
  }
  const auto& cfg = state.config;
  const bool phases = table.kind() == ModelKind::RotatE && table.role() == TableRole::Relation;
  const std::size_t w = table.width();
  for (std::size_t slot = 0; slot < rows.size(); ++slot) {
    const std::size_t r = rows[slot];
    const auto step = ++state.steps[r];
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    auto param = table.row(r);
    auto g = grads.slot(slot);
    double* m = state.first_moment.data() + r * w;
    double* v = state.second_moment.data() + r * w;
    for (std::size_t j = 0; j < w; ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      param[j] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
      if (phases) param[j] = wrap_phase(param[j]);
    }
  }
}

void sample_negatives(const Triple& positive, std::size_t n, const TripleSet& known, std::size_t entity_pool,
                      Rng& rng, std::vector<Triple>& out, const NegativeSampling& options) {
  out.clear();
  if (n == 0) return;
  if (entity_pool == 0) throw Error("sample_negatives: empty entity pool");
  const std::size_t limit = options.max_rejections_per_sample * n;
  std::size_t rejected = 0;
  while (out.size() < n) {
    Triple candidate = positive;
    const auto e = static_cast<EntityId>(rng.below(entity_pool));
    if (options.corrupt_heads && (rng.next() & 1u)) {
      candidate.head = e;
    } else {
      candidate.tail = e;
    }
    if (known.contains(candidate)) {
      if (++rejected >= limit) {
        throw Error("sample_negatives: " + std::to_string(rejected) +
                    " consecutive rejections; entity pool has no valid corruptions");
      }
      continue;
    }
    rejected = 0;
    out.push_back(candidate);
  }
}

std::vector<Triple> sample_negatives(const Triple& positive, std::size_t n, const TripleSet& known,
                                     std::size_t entity_pool, Rng& rng, const NegativeSampling& options) {
  std::vector<Triple> out;
  sample_negatives(positive, n, known, entity_pool, rng, out, options);
  return out;
}

}  // namespace fkg
