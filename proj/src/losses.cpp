#include "fkg/losses.hpp"

#include <algorithm>
#include <cmath>

#include "fkg/error.hpp"

namespace fkg {

namespace {

// log(1 + e^x)
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

void add_scaled(LossResult& into, const LossResult& term, double weight) {
  into.value += weight * term.value;
  into.d_positive += weight * term.d_positive;
  for (std::size_t j = 0; j < into.d_negatives.size(); ++j) into.d_negatives[j] += weight * term.d_negatives[j];
}

std::vector<double> negative_weights(std::span<const double> negatives, const NegativeWeighting& weighting) {
  const std::size_t n = negatives.size();
  if (!weighting.self_adversarial) return std::vector<double>(n, n ? 1.0 / static_cast<double>(n) : 0.0);
  std::vector<double> scaled(n);
  for (std::size_t j = 0; j < n; ++j) scaled[j] = weighting.temperature * negatives[j];
  const double m = n ? *std::max_element(scaled.begin(), scaled.end()) : 0.0;
  double z = 0.0;
  for (auto& s : scaled) {
    s = std::exp(s - m);
    z += s;
  }
  for (auto& s : scaled) s /= z;
  return scaled;
}

// Sum over negatives of w_j * softplus(S-_j), i.e. -w_j log s(-S-_j).
void add_negative_terms(LossResult& out, std::span<const double> negatives, std::span<const double> weights) {
  for (std::size_t j = 0; j < negatives.size(); ++j) {
    out.value += weights[j] * softplus(negatives[j]);
    out.d_negatives[j] += weights[j] * sigmoid(negatives[j]);
  }
}

std::vector<double> log_distribution(const ScoredBatch& b) {
  std::vector<double> x(b.negatives.size() + 1);
  x[0] = b.positive;
  std::copy(b.negatives.begin(), b.negatives.end(), x.begin() + 1);
  const double m = *std::max_element(x.begin(), x.end());
  double z = 0.0;
  for (double v : x) z += std::exp(v - m);
  const double log_z = m + std::log(z);
  for (auto& v : x) v -= log_z;
  return x;
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) { return -softplus(-x); }

LossResult prediction_loss(const ScoredBatch& batch, const NegativeWeighting& weighting) {
  LossResult out{softplus(-batch.positive), -sigmoid(-batch.positive),
                 std::vector<double>(batch.negatives.size(), 0.0)};
  add_negative_terms(out, batch.negatives, negative_weights(batch.negatives, weighting));
  return out;
}

std::vector<double> score_distribution(double positive, std::span<const double> negatives) {
  std::vector<double> p(negatives.size() + 1);
  p[0] = positive;
  std::copy(negatives.begin(), negatives.end(), p.begin() + 1);
  const double m = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (auto& x : p) {
    x = std::exp(x - m);
    z += x;
  }
  for (auto& x : p) x /= z;
  return p;
}

double distill_loss(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw Error("distill_loss: distributions have lengths " + std::to_string(p.size()) + " and " +
                std::to_string(q.size()));
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return kl;
}

LossResult distill_loss(const ScoredBatch& student, const ScoredBatch& teacher) {
  if (student.negatives.size() != teacher.negatives.size()) throw Error("distill_loss: student and teacher differ in size");
  // Log-softmax on both sides so an underflowed teacher probability stays finite.
  const auto log_p = log_distribution(student);
  const auto log_q = log_distribution(teacher);
  double kl = 0.0;
  std::vector<double> p(log_p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(log_p[i]);
    kl += p[i] * (log_p[i] - log_q[i]);
  }
  // d KL / d s_j = p_j (ln(p_j / q_j) - KL)
  LossResult out{kl, p[0] * (log_p[0] - log_q[0] - kl), std::vector<double>(student.negatives.size())};
  for (std::size_t j = 0; j < out.d_negatives.size(); ++j) out.d_negatives[j] = p[j + 1] * (log_p[j + 1] - log_q[j + 1] - kl);
  return out;
}

LossResult joint_loss(const ScoredBatch& student, const ScoredBatch& teacher, double mu_distill,
                      const NegativeWeighting& weighting) {
  auto out = prediction_loss(student, weighting);
  if (mu_distill != 0.0) add_scaled(out, distill_loss(student, teacher), mu_distill);
  return out;
}

LossResult hard_confusion_loss(const ScoredBatch& batch) {
  LossResult out{softplus(batch.positive), sigmoid(batch.positive), std::vector<double>(batch.negatives.size(), 0.0)};
  add_negative_terms(out, batch.negatives, negative_weights(batch.negatives, {}));
  return out;
}

LossResult soft_confusion_loss(const ScoredBatch& batch) {
  const std::size_t n = batch.negatives.size();
  LossResult out{0.0, 0.0, std::vector<double>(n, 0.0)};
  if (n == 0) return out;
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double diff = batch.negatives[j] - batch.positive;
    out.value += inv * std::abs(diff);
    const double sign = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
    out.d_negatives[j] = inv * sign;
    out.d_positive -= inv * sign;
  }
  return out;
}

LossResult interference_loss(const ScoredBatch& student, const ScoredBatch& teacher, const LossWeights& weights,
                             bool use_hard) {
  LossResult out{0.0, 0.0, std::vector<double>(student.negatives.size(), 0.0)};
  if (use_hard) add_scaled(out, hard_confusion_loss(student), 1.0);
  if (weights.soft != 0.0) add_scaled(out, soft_confusion_loss(student), weights.soft);
  if (weights.distill != 0.0) add_scaled(out, distill_loss(student, teacher), weights.distill);
  return out;
}

double proximal_term(std::span<const double> local, std::span<const double> anchor, double mu) {
  if (local.size() != anchor.size()) throw Error("proximal_term: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < local.size(); ++i) {
    const double d = local[i] - anchor[i];
    s += d * d;
  }
  return 0.5 * mu * s;
}

void proximal_gradient(std::span<const double> local, std::span<const double> anchor, double mu,
                       std::span<double> grad) {
  if (local.size() != anchor.size() || grad.size() != local.size()) throw Error("proximal_gradient: shape mismatch");
  for (std::size_t i = 0; i < local.size(); ++i) grad[i] += mu * (local[i] - anchor[i]);
}

}  // namespace fkg
