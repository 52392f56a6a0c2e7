#include "lsem/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lsem {

namespace {

std::vector<double> row_norms(const Matrix& m) {
  std::vector<double> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = norm(m.row(r));
  return out;
}

void check_window(std::size_t window) {
  if (window == 0 || window % 2 == 0) throw std::invalid_argument("attention window must be odd and >= 1");
}

Matrix smooth_rows(const Matrix& compat, std::size_t window) {
  if (window == 1) return compat;
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(window / 2);
  const std::ptrdiff_t tokens = static_cast<std::ptrdiff_t>(compat.cols());
  const double inv = 1.0 / static_cast<double>(window);
  Matrix out(compat.rows(), compat.cols());
  for (std::size_t l = 0; l < compat.rows(); ++l) {
    for (std::ptrdiff_t t = 0; t < tokens; ++t) {
      double s = 0.0;
      for (std::ptrdiff_t k = std::max<std::ptrdiff_t>(0, t - half); k <= std::min(tokens - 1, t + half); ++k)
        s += compat(l, static_cast<std::size_t>(k));
      out(l, static_cast<std::size_t>(t)) = s * inv;
    }
  }
  return out;
}

}  // namespace

Matrix compatibility(const Matrix& labels, const Matrix& states) {
  if (labels.cols() != states.cols()) {
    throw std::invalid_argument("compatibility: label dim " + std::to_string(labels.cols()) +
                                " != token dim " + std::to_string(states.cols()));
  }
  const auto label_norms = row_norms(labels);
  const auto state_norms = row_norms(states);
  Matrix h(labels.rows(), states.rows());
  for (std::size_t l = 0; l < labels.rows(); ++l) {
    for (std::size_t t = 0; t < states.rows(); ++t) {
      const double denom = label_norms[l] * state_norms[t];
      if (denom == 0.0) continue;
      // Round-off can push |cos| a hair past 1.
      h(l, t) = std::clamp(dot(labels.row(l), states.row(t)) / denom, -1.0, 1.0);
    }
  }
  return h;
}

std::vector<double> softmax(std::span<const double> scores) {
  if (scores.empty()) return {};
  const double peak = *std::max_element(scores.begin(), scores.end());
  std::vector<double> out(scores.size());
  double total = 0.0;
  for (std::size_t t = 0; t < scores.size(); ++t) {
    out[t] = std::exp(scores[t] - peak);
    total += out[t];
  }
  for (auto& w : out) w /= total;
  return out;
}

AttentionResult attend(const Matrix& compat, const Matrix& states, std::size_t window) {
  check_window(window);
  if (compat.cols() != states.rows()) throw std::invalid_argument("attend: token count mismatch");
  if (compat.rows() == 0 || states.rows() == 0) throw std::invalid_argument("attend: empty input");

  const Matrix smoothed = smooth_rows(compat, window);
  const std::size_t tokens = states.rows();
  AttentionResult res;
  res.scores.assign(tokens, 0.0);
  res.best_label.assign(tokens, 0);
  for (std::size_t t = 0; t < tokens; ++t) {
    std::size_t best = 0;
    for (std::size_t l = 1; l < smoothed.rows(); ++l)
      if (smoothed(l, t) > smoothed(best, t)) best = l;
    res.best_label[t] = best;
    res.scores[t] = smoothed(best, t);
  }

  res.weights = softmax(res.scores);

  res.representation.assign(states.cols(), 0.0);
  for (std::size_t t = 0; t < tokens; ++t)
    for (std::size_t c = 0; c < states.cols(); ++c) res.representation[c] += res.weights[t] * states(t, c);
  return res;
}

AttentionGradients attention_backward(const Matrix& labels, const Matrix& states,
                                      const AttentionResult& result, std::size_t window,
                                      std::span<const double> grad_representation) {
  const std::size_t tokens = states.rows();
  const std::size_t d = states.cols();
  AttentionGradients g{Matrix(labels.rows(), labels.cols()), Matrix(tokens, d)};

  // Pooling.
  std::vector<double> grad_weights(tokens);
  for (std::size_t t = 0; t < tokens; ++t) {
    grad_weights[t] = dot(states.row(t), grad_representation);
    for (std::size_t c = 0; c < d; ++c) g.states(t, c) += result.weights[t] * grad_representation[c];
  }
  // Softmax.
  double mean = 0.0;
  for (std::size_t t = 0; t < tokens; ++t) mean += result.weights[t] * grad_weights[t];
  // Max over labels, then window smoothing, routed back to compat entries.
  Matrix grad_compat(labels.rows(), tokens);
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(window / 2);
  const double inv = 1.0 / static_cast<double>(window);
  for (std::size_t t = 0; t < tokens; ++t) {
    const double grad_score = result.weights[t] * (grad_weights[t] - mean);
    const std::size_t l = result.best_label[t];
    const std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(t);
    for (std::ptrdiff_t k = std::max<std::ptrdiff_t>(0, ti - half);
         k <= std::min(static_cast<std::ptrdiff_t>(tokens) - 1, ti + half); ++k)
      grad_compat(l, static_cast<std::size_t>(k)) += grad_score * inv;
  }

  // Cosine similarity.
  const auto label_norms = row_norms(labels);
  const auto state_norms = row_norms(states);
  for (std::size_t l = 0; l < labels.rows(); ++l) {
    for (std::size_t t = 0; t < tokens; ++t) {
      const double gh = grad_compat(l, t);
      const double denom = label_norms[l] * state_norms[t];
      if (gh == 0.0 || denom == 0.0) continue;
      const double cosine = dot(labels.row(l), states.row(t)) / denom;
      const double inv_ll = 1.0 / (label_norms[l] * label_norms[l]);
      const double inv_tt = 1.0 / (state_norms[t] * state_norms[t]);
      for (std::size_t c = 0; c < d; ++c) {
        g.labels(l, c) += gh * (states(t, c) / denom - cosine * labels(l, c) * inv_ll);
        g.states(t, c) += gh * (labels(l, c) / denom - cosine * states(t, c) * inv_tt);
      }
    }
  }
  return g;
}

}  // namespace lsem
