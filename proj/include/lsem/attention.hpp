#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lsem/numerics.hpp"

namespace lsem {

/// Cosine compatibility between every label embedding (rows of `labels`,
/// K x d) and every token state (rows of `states`, T x d). Result is K x T;
/// pairs involving a zero vector score 0.
Matrix compatibility(const Matrix& labels, const Matrix& states);

struct AttentionResult {
  std::vector<double> scores;          // u_t, per token
  std::vector<std::size_t> best_label; // label attaining the max for each token
  std::vector<double> weights;         // softmax(u)
  std::vector<double> representation;  // sum_t weights_t * b_t
};

/// Max-shifted softmax.
std::vector<double> softmax(std::span<const double> scores);

/// Smooths each row of `compat` with a centred uniform window (zero padded,
/// always divided by `window`), takes the max over labels per token, and
/// softmax-pools the token states with the resulting scores.
AttentionResult attend(const Matrix& compat, const Matrix& states, std::size_t window = 1);

struct AttentionGradients {
  Matrix labels;  // K x d
  Matrix states;  // T x d
};

/// Backward pass of compatibility + attend for an upstream gradient on the
/// pooled representation.
AttentionGradients attention_backward(const Matrix& labels, const Matrix& states,
                                      const AttentionResult& result, std::size_t window,
                                      std::span<const double> grad_representation);

}  // namespace lsem
