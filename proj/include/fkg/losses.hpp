#pragma once

// Per-triple training and unlearning losses over model scores, each returned
// together with its gradient w.r.t. the student scores. Teacher scores are
// constants.

#include <span>
#include <vector>

namespace fkg {

/// Scores of one positive triple and its n negatives.
struct ScoredBatch {
  double positive = 0.0;
  std::vector<double> negatives;
};

struct LossWeights {
  double distill = 2.0;
  double soft = 0.1;
  double prox = 0.1;
};

struct LossResult {
  double value = 0.0;
  double d_positive = 0.0;
  std::vector<double> d_negatives;
};

/// Optional self-adversarial weighting of negatives: weights are
/// softmax(temperature * s_j), held constant. Off means uniform 1/n.
struct NegativeWeighting {
  bool self_adversarial = false;
  double temperature = 1.0;
};

double log_sigmoid(double x);
double sigmoid(double x);

/// -log s(S+) - (1/n) sum_j log s(-S-_j)
LossResult prediction_loss(const ScoredBatch& batch, const NegativeWeighting& weighting = {});

/// Softmax over {S+} u {S-_j}, positive first.
std::vector<double> score_distribution(double positive, std::span<const double> negatives);

/// KL(p || q) = sum_i p_i ln(p_i / q_i). Throws on length mismatch.
double distill_loss(std::span<const double> p, std::span<const double> q);

/// KL(softmax(student) || softmax(teacher)) with gradient w.r.t. the
/// student scores.
LossResult distill_loss(const ScoredBatch& student, const ScoredBatch& teacher);

/// prediction + mu_distill * KL(student || teacher). Used for both the local
/// update (student = local scores) and the mirrored global update.
LossResult joint_loss(const ScoredBatch& student, const ScoredBatch& teacher, double mu_distill,
                      const NegativeWeighting& weighting = {});

/// -log s(-S+) - (1/n) sum_j log s(-S-_j): the positive is pushed down like
/// a negative.
LossResult hard_confusion_loss(const ScoredBatch& batch);

/// (1/n) sum_j |S-_j - S+|. Zero subgradient where the difference vanishes.
LossResult soft_confusion_loss(const ScoredBatch& batch);

/// hard + mu_soft * soft + mu_distill * KL(student || teacher). With
/// use_hard = false the hard term is dropped.
LossResult interference_loss(const ScoredBatch& student, const ScoredBatch& teacher, const LossWeights& weights,
                             bool use_hard = true);

/// (mu/2) * sum ||local - anchor||^2 over equally sized buffers.
double proximal_term(std::span<const double> local, std::span<const double> anchor, double mu);

/// Adds mu * (local - anchor) into grad.
void proximal_gradient(std::span<const double> local, std::span<const double> anchor, double mu,
                       std::span<double> grad);

}  // namespace fkg
