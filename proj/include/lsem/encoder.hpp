#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lsem/data.hpp"
#include "lsem/numerics.hpp"

namespace lsem {

enum class InputMode { plain, labels_as_input };

/// Lowercases every token. Lowercasing is the only normalization applied.
std::string normalize_token(std::string_view token);

/// "<character> is <adjective>" for label k, lowercased.
Sentence label_sentence(std::string_view character, std::size_t label);

/// Plain: each context sentence followed by SEP, then the target sentence.
/// With labels: the eight label sentences follow, each preceded by SEP.
Sentence assemble_input(const Instance& instance, InputMode mode);

/// Context part and sentence part for separately pooled encoding. The
/// context part is empty for a first line; label sentences, when requested,
/// extend the sentence part.
struct SplitInput {
  Sentence context;
  Sentence sentence;
};
SplitInput assemble_split_input(const Instance& instance, InputMode mode);

struct EncoderParams {
  Matrix embedding;   // |V| x d
  Matrix mix_weight;  // d x 3d, acting on [e_{t-1}; e_t; e_{t+1}]
  Matrix mix_bias;    // 1 x d

  std::size_t dim() const { return embedding.cols(); }
};

/// b_t = tanh(W [e_{t-1}; e_t; e_{t+1}] + bias), zero vectors past both ends.
Matrix encode_tokens(std::span<const std::size_t> ids, const EncoderParams& params);

/// Accumulates into `grad` (shaped like `params`) the gradient flowing back
/// from `grad_states` (T x d) through an encoding that produced `states`.
void encode_tokens_backward(std::span<const std::size_t> ids, const EncoderParams& params,
                            const Matrix& states, const Matrix& grad_states, EncoderParams& grad);

enum class LabelEmbeddingMode { static_table, dynamic };

/// Static mode stores a trainable K x d table; dynamic mode stores one token
/// sequence per label, encoded and mean-pooled on demand.
struct LabelEmbeddingBank {
  LabelEmbeddingMode mode = LabelEmbeddingMode::static_table;
  Matrix table;
  std::vector<std::vector<std::size_t>> sentences;
};

Matrix label_embeddings(const LabelEmbeddingBank& bank, const EncoderParams& params);

/// Backward pass of the dynamic mode; static mode gradients go straight to
/// the table and are handled by the caller.
void label_embeddings_backward(const LabelEmbeddingBank& bank, const EncoderParams& params,
                               const Matrix& grad_labels, EncoderParams& grad);

}  // namespace lsem
