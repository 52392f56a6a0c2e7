#include "lsem/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lsem {

namespace {

void check_square(const Matrix& g, std::size_t k) {
  if (g.rows() != k || g.cols() != k) {
    throw std::invalid_argument("correlation matrix must be " + std::to_string(k) + "x" +
                                std::to_string(k));
  }
}

double clamp_prob(double e) { return std::clamp(e, kProbFloor, 1.0 - kProbFloor); }

// d bce / d s for one label when e = sigmoid(s); zero where the clamp is active.
double bce_logit_grad(double e, double target, double k) {
  if (e < kProbFloor || e > 1.0 - kProbFloor) return 0.0;
  return (e - target) / k;
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

std::vector<double> correlate_logits(std::span<const double> logits, const Matrix& correlation) {
  check_square(correlation, logits.size());
  std::vector<double> e = vecmat(logits, correlation);
  for (auto& v : e) v = sigmoid(v);
  return e;
}

std::vector<double> soft_targets(std::span<const double> labels, const Matrix& correlation) {
  check_square(correlation, labels.size());
  std::vector<double> t = vecmat(labels, correlation);
  for (auto& v : t) v = std::clamp(v, 0.0, 1.0);
  return t;
}

double bce(std::span<const double> scores, std::span<const double> targets) {
  if (scores.size() != targets.size() || scores.empty()) throw std::invalid_argument("bce: length mismatch");
  double total = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    const double e = clamp_prob(scores[k]);
    total -= targets[k] * std::log(e) + (1.0 - targets[k]) * std::log(1.0 - e);
  }
  return total / static_cast<double>(scores.size());
}

double total_loss(std::span<const double> scores, std::span<const double> labels,
                  const Matrix& correlation, double lambda_corr) {
  const auto soft = soft_targets(labels, correlation);
  return bce(scores, labels) + lambda_corr * bce(scores, soft);
}

double pair_distance(double e_i, double e_j, double coupling) {
  const double gap = std::abs(e_i - e_j);
  return coupling >= 0.0 ? gap : gap - 1.0;
}

double reg_loss(const std::vector<std::vector<double>>& batch_scores, const Matrix& correlation) {
  if (batch_scores.empty()) throw std::invalid_argument("reg_loss: empty batch");
  double total = 0.0;
  for (const auto& e : batch_scores) {
    check_square(correlation, e.size());
    for (std::size_t i = 0; i < e.size(); ++i)
      for (std::size_t j = 0; j < e.size(); ++j)
        if (i != j) total += correlation(i, j) * pair_distance(e[i], e[j], correlation(i, j));
  }
  return total / static_cast<double>(batch_scores.size());
}

HeadGradient supervised_head(std::span<const double> logits, std::span<const double> labels,
                             const Matrix* correlation, double lambda_corr,
                             const Matrix* target_correlation) {
  const std::size_t k = logits.size();
  if (labels.size() != k) throw std::invalid_argument("supervised_head: label length mismatch");
  const double kd = static_cast<double>(k);
  HeadGradient out;
  out.logits.assign(k, 0.0);

  if (correlation == nullptr) {
    out.scores.resize(k);
    for (std::size_t i = 0; i < k; ++i) out.scores[i] = sigmoid(logits[i]);
    out.loss = bce(out.scores, labels);
    for (std::size_t i = 0; i < k; ++i) out.logits[i] = bce_logit_grad(out.scores[i], labels[i], kd);
    return out;
  }

  const Matrix& g = *correlation;
  check_square(g, k);
  out.scores = correlate_logits(logits, g);
  if (target_correlation != nullptr) check_square(*target_correlation, k);
  const std::vector<double> raw_soft = vecmat(labels, target_correlation ? *target_correlation : g);
  std::vector<double> soft(k);
  for (std::size_t i = 0; i < k; ++i) soft[i] = std::clamp(raw_soft[i], 0.0, 1.0);
  out.loss = bce(out.scores, labels) + lambda_corr * bce(out.scores, soft);

  // Gradient w.r.t. the pre-sigmoid scores s = G^T z.
  std::vector<double> grad_s(k);
  for (std::size_t i = 0; i < k; ++i) {
    grad_s[i] = bce_logit_grad(out.scores[i], labels[i], kd) +
                lambda_corr * bce_logit_grad(out.scores[i], soft[i], kd);
  }
  out.logits = matvec(g, grad_s);

  out.correlation = Matrix(k, k);
  add_outer(out.correlation, logits, grad_s);
  if (target_correlation != nullptr) return out;
  // Soft targets depend on G as well: d bce / d t_k = -(ln e_k - ln(1 - e_k)) / K.
  for (std::size_t c = 0; c < k; ++c) {
    if (raw_soft[c] < 0.0 || raw_soft[c] > 1.0) continue;
    const double e = clamp_prob(out.scores[c]);
    const double grad_t = -lambda_corr * (std::log(e) - std::log(1.0 - e)) / kd;
    for (std::size_t r = 0; r < k; ++r)
      if (labels[r] != 0.0) out.correlation(r, c) += labels[r] * grad_t;
  }
  return out;
}

HeadGradient regularizer_head(const std::vector<std::vector<double>>& batch_logits,
                              const Matrix& correlation,
                              std::vector<std::vector<double>>* grad_logits) {
  if (batch_logits.empty()) throw std::invalid_argument("regularizer_head: empty batch");
  const std::size_t k = correlation.rows();
  const double inv_n = 1.0 / static_cast<double>(batch_logits.size());
  HeadGradient out;
  out.correlation = Matrix(k, k);
  if (grad_logits) grad_logits->clear();

  std::vector<double> grad_e(k);
  std::vector<double> grad_s(k);
  for (const auto& z : batch_logits) {
    const std::vector<double> e = correlate_logits(z, correlation);
    std::fill(grad_e.begin(), grad_e.end(), 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        if (i == j) continue;
        const double gij = correlation(i, j);
        const double dist = pair_distance(e[i], e[j], gij);
        out.loss += gij * dist * inv_n;
        out.correlation(i, j) += dist * inv_n;
        const double s = sign(e[i] - e[j]) * gij * inv_n;
        grad_e[i] += s;
        grad_e[j] -= s;
      }
    }
    for (std::size_t c = 0; c < k; ++c) grad_s[c] = grad_e[c] * e[c] * (1.0 - e[c]);
    add_outer(out.correlation, z, grad_s);
    if (grad_logits) grad_logits->push_back(matvec(correlation, grad_s));
  }
  return out;
}

}  // namespace lsem
