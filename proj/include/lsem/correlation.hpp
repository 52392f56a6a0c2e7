#pragma once

#include <span>
#include <vector>

#include "lsem/numerics.hpp"

namespace lsem {

/// Probabilities are clamped to [kProbFloor, 1 - kProbFloor] before logs.
inline constexpr double kProbFloor = 1e-12;

/// e_k = sigmoid(sum_j z_j G_jk).
std::vector<double> correlate_logits(std::span<const double> logits, const Matrix& correlation);

/// y' = clamp(y G, 0, 1).
std::vector<double> soft_targets(std::span<const double> labels, const Matrix& correlation);

/// Mean binary cross-entropy over the label dimension.
double bce(std::span<const double> scores, std::span<const double> targets);

/// bce(e, y) + lambda * bce(e, soft_targets(y, G)).
double total_loss(std::span<const double> scores, std::span<const double> labels,
                  const Matrix& correlation, double lambda_corr);

/// |e_i - e_j|, shifted down by one when the coupling is negative.
double pair_distance(double e_i, double e_j, double coupling);

/// Batch mean of sum_{i != j} G_ij * pair_distance(e_i, e_j, G_ij).
double reg_loss(const std::vector<std::vector<double>>& batch_scores, const Matrix& correlation);

/// Loss value with its gradient w.r.t. the logits z and (when present) G.
struct HeadGradient {
  double loss = 0.0;
  std::vector<double> scores;  // e (supervised head only)
  std::vector<double> logits;  // dL/dz
  Matrix correlation;          // dL/dG, empty without a correlation matrix
};

/// Supervised loss for one instance. A null correlation means independent
/// sigmoid outputs and plain bce(sigmoid(z), y).
/// When `target_correlation` is given, soft targets are built from it and
/// treated as constants; otherwise they come from `correlation` and the
/// gradient w.r.t. G includes the path through y'.
HeadGradient supervised_head(std::span<const double> logits, std::span<const double> labels,
                             const Matrix* correlation, double lambda_corr,
                             const Matrix* target_correlation = nullptr);

/// Regularizer over a batch of logit vectors, differentiated w.r.t. G along
/// both the direct path and the path through the scores. `grad_logits`, when
/// non-null, receives dL/dz per instance.
HeadGradient regularizer_head(const std::vector<std::vector<double>>& batch_logits,
                              const Matrix& correlation,
                              std::vector<std::vector<double>>* grad_logits = nullptr);

}  // namespace lsem
