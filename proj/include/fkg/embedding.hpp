#pragma once

// Embedding tables, TransE / ComplEx / RotatE scoring with analytic
// gradients, tail-corruption negative sampling, and row-sparse Adam.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fkg/kg.hpp"
#include "fkg/random.hpp"

namespace fkg {

enum class ModelKind : std::uint8_t { TransE = 0, ComplEx = 1, RotatE = 2 };
enum class TableRole : std::uint8_t { Entity = 0, Relation = 1 };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

/// True for models whose raw score is a negated distance.
constexpr bool is_distance_model(ModelKind kind) { return kind != ModelKind::ComplEx; }

/// Complex-valued kinds store a row as [real parts | imaginary parts], so a
/// dimension of `dim` holds dim/2 complex coordinates. RotatE relations keep
/// one phase angle per complex coordinate.
std::size_t table_width(ModelKind kind, TableRole role, std::size_t dim);

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(ModelKind kind, TableRole role, std::size_t rows, std::size_t dim);

  ModelKind kind() const noexcept { return kind_; }
  TableRole role() const noexcept { return role_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t width() const noexcept { return width_; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * width_, width_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * width_, width_}; }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;

 private:
  ModelKind kind_ = ModelKind::TransE;
  TableRole role_ = TableRole::Entity;
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
};

/// Entries uniform on [-6/sqrt(dim), 6/sqrt(dim)]; RotatE relation phases
/// uniform on (-pi, pi].
EmbeddingTable init_table(std::size_t count, ModelKind kind, TableRole role, std::size_t dim,
                          std::uint64_t seed);

/// Raw plausibility score (no margin).
///   TransE:  -||h + r - t||
///   ComplEx: Re(sum_i h_i r_i conj(t_i))
///   RotatE:  -||h o e^{i theta} - t||
double score(ModelKind kind, std::span<const double> h, std::span<const double> r,
             std::span<const double> t);

struct ScoreGradients {
  std::vector<double> head;
  std::vector<double> relation;
  std::vector<double> tail;
};

/// Analytic gradient of score(). Distance models use a zero subgradient when
/// the distance vanishes; RotatE relation gradients are w.r.t. phases.
ScoreGradients score_gradients(ModelKind kind, std::span<const double> h, std::span<const double> r,
                               std::span<const double> t);

/// Adds scale * d score / d{h,r,t} into the given buffers (which may alias
/// each other but not the inputs).
void accumulate_score_gradients(ModelKind kind, std::span<const double> h, std::span<const double> r,
                                std::span<const double> t, double scale, std::span<double> gh,
                                std::span<double> gr, std::span<double> gt);

/// Score as seen by the losses: margin + raw for distance models, raw for
/// ComplEx (a sigmoid over a negated distance is always below 1/2).
struct ScoreModel {
  ModelKind kind = ModelKind::TransE;
  double margin = 9.0;

  double operator()(std::span<const double> h, std::span<const double> r, std::span<const double> t) const {
    return score(kind, h, r, t) + (is_distance_model(kind) ? margin : 0.0);
  }
};

/// Row-sparse gradient accumulator.
class RowGradients {
 public:
  explicit RowGradients(std::size_t width = 0) : width_(width) {}

  /// Ensures `row` has a (zeroed) slot. Call for every row of a group before
  /// taking spans with slot(), since growth invalidates earlier spans.
  std::size_t touch(std::size_t row);
  std::span<double> slot(std::size_t index) { return {values_.data() + index * width_, width_}; }
  std::span<const double> slot(std::size_t index) const { return {values_.data() + index * width_, width_}; }

  /// Touched rows in first-touch order.
  const std::vector<std::size_t>& rows() const noexcept { return rows_; }
  std::size_t width() const noexcept { return width_; }
  bool empty() const noexcept { return rows_.empty(); }
  void clear();
  void scale(double factor);

 private:
  std::size_t width_;
  std::vector<std::size_t> rows_;
  std::vector<double> values_;
  std::unordered_map<std::size_t, std::size_t> index_;
};

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

/// Lazy Adam state: moments and step counters per row; rows that receive no
/// gradient are neither updated nor decayed.
struct AdamState {
  AdamConfig config;
  std::size_t width = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::vector<std::uint64_t> steps;

  AdamState() = default;
  AdamState(const EmbeddingTable& table, AdamConfig cfg);

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Bias-corrected Adam on the touched rows only. Throws (before modifying
/// anything) if a gradient entry is not finite. RotatE phase tables are
/// wrapped back into (-pi, pi].
void adam_step(EmbeddingTable& table, const RowGradients& grads, AdamState& state);

/// Wraps an angle into (-pi, pi].
double wrap_phase(double theta);

struct NegativeSampling {
  bool corrupt_heads = false;  // 50/50 head or tail corruption when set
  std::size_t max_rejections_per_sample = 1000;
};

/// Draws `n` corrupted copies of `positive` from entity ids [0, entity_pool)
/// that are not members of `known`. Throws after max_rejections * n
/// consecutive rejections.
void sample_negatives(const Triple& positive, std::size_t n, const TripleSet& known, std::size_t entity_pool,
                      Rng& rng, std::vector<Triple>& out, const NegativeSampling& options = {});

std::vector<Triple> sample_negatives(const Triple& positive, std::size_t n, const TripleSet& known,
                                     std::size_t entity_pool, Rng& rng, const NegativeSampling& options = {});

}  // namespace fkg
