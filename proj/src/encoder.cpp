#include "lsem/encoder.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>

namespace lsem {

std::string normalize_token(std::string_view token) {
  std::string out(token);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

Sentence label_sentence(std::string_view character, std::size_t label) {
  return {normalize_token(character), "is", std::string(LabelScheme::adjectives.at(label))};
}

namespace {

void append_normalized(Sentence& out, const Sentence& tokens) {
  for (const auto& t : tokens) out.push_back(normalize_token(t));
}

void append_label_sentences(Sentence& out, std::string_view character) {
  for (std::size_t k = 0; k < kNumLabels; ++k) {
    out.emplace_back(Vocabulary::kSepToken);
    append_normalized(out, label_sentence(character, k));
  }
}

}  // namespace

Sentence assemble_input(const Instance& instance, InputMode mode) {
  Sentence out;
  for (const auto& ctx : instance.context) {
    append_normalized(out, ctx);
    out.emplace_back(Vocabulary::kSepToken);
  }
  if (instance.context.empty()) out.emplace_back(Vocabulary::kSepToken);
  append_normalized(out, instance.sentence);
  if (mode == InputMode::labels_as_input) append_label_sentences(out, instance.character);
  return out;
}

SplitInput assemble_split_input(const Instance& instance, InputMode mode) {
  SplitInput out;
  for (std::size_t i = 0; i < instance.context.size(); ++i) {
    if (i > 0) out.context.emplace_back(Vocabulary::kSepToken);
    append_normalized(out.context, instance.context[i]);
  }
  append_normalized(out.sentence, instance.sentence);
  if (mode == InputMode::labels_as_input) append_label_sentences(out.sentence, instance.character);
  return out;
}

// Token encoder -----------------------------------------------------------------

namespace {

// Window input [e_{t-1}; e_t; e_{t+1}] with zero padding.
void window_input(std::span<const std::size_t> ids, std::size_t t, const Matrix& embedding,
                  std::vector<double>& x) {
  const std::size_t d = embedding.cols();
  std::fill(x.begin(), x.end(), 0.0);
  for (std::size_t slot = 0; slot < 3; ++slot) {
    const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(slot) - 1;
    if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(ids.size())) continue;
    auto e = embedding.row(ids[static_cast<std::size_t>(pos)]);
    std::copy(e.begin(), e.end(), x.begin() + static_cast<std::ptrdiff_t>(slot * d));
  }
}

void check_shapes(const EncoderParams& p) {
  const std::size_t d = p.dim();
  if (p.mix_weight.rows() != d || p.mix_weight.cols() != 3 * d || p.mix_bias.rows() != 1 ||
      p.mix_bias.cols() != d) {
    throw std::invalid_argument("encoder parameter shapes are inconsistent with d=" + std::to_string(d));
  }
}

}  // namespace

Matrix encode_tokens(std::span<const std::size_t> ids, const EncoderParams& params) {
  if (ids.empty()) throw std::invalid_argument("encode_tokens: empty token sequence");
  check_shapes(params);
  const std::size_t d = params.dim();
  Matrix states(ids.size(), d);
  std::vector<double> x(3 * d);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] >= params.embedding.rows()) throw std::out_of_range("encode_tokens: token id out of range");
    window_input(ids, t, params.embedding, x);
    for (std::size_t r = 0; r < d; ++r) {
      states(t, r) = std::tanh(dot(params.mix_weight.row(r), x) + params.mix_bias(0, r));
    }
  }
  return states;
}

void encode_tokens_backward(std::span<const std::size_t> ids, const EncoderParams& params,
                            const Matrix& states, const Matrix& grad_states, EncoderParams& grad) {
  const std::size_t d = params.dim();
  std::vector<double> x(3 * d);
  std::vector<double> pre(d);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    bool any = false;
    for (std::size_t r = 0; r < d; ++r) {
      const double b = states(t, r);
      pre[r] = grad_states(t, r) * (1.0 - b * b);
      any = any || pre[r] != 0.0;
    }
    if (!any) continue;
    window_input(ids, t, params.embedding, x);
    add_outer(grad.mix_weight, pre, x);
    for (std::size_t r = 0; r < d; ++r) grad.mix_bias(0, r) += pre[r];
    for (std::size_t slot = 0; slot < 3; ++slot) {
      const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(slot) - 1;
      if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(ids.size())) continue;
      auto ge = grad.embedding.row(ids[static_cast<std::size_t>(pos)]);
      for (std::size_t r = 0; r < d; ++r) {
        const double p = pre[r];
        if (p == 0.0) continue;
        auto w = params.mix_weight.row(r).subspan(slot * d, d);
        for (std::size_t c = 0; c < d; ++c) ge[c] += p * w[c];
      }
    }
  }
}

// Label embeddings --------------------------------------------------------------

Matrix label_embeddings(const LabelEmbeddingBank& bank, const EncoderParams& params) {
  if (bank.mode == LabelEmbeddingMode::static_table) return bank.table;

  const std::size_t d = params.dim();
  Matrix out(bank.sentences.size(), d);
  for (std::size_t l = 0; l < bank.sentences.size(); ++l) {
    const Matrix states = encode_tokens(bank.sentences[l], params);
    const double inv = 1.0 / static_cast<double>(states.rows());
    for (std::size_t t = 0; t < states.rows(); ++t)
      for (std::size_t c = 0; c < d; ++c) out(l, c) += states(t, c) * inv;
  }
  return out;
}

void label_embeddings_backward(const LabelEmbeddingBank& bank, const EncoderParams& params,
                               const Matrix& grad_labels, EncoderParams& grad) {
  if (bank.mode == LabelEmbeddingMode::static_table) return;
  const std::size_t d = params.dim();
  for (std::size_t l = 0; l < bank.sentences.size(); ++l) {
    const auto& ids = bank.sentences[l];
    const Matrix states = encode_tokens(ids, params);
    const double inv = 1.0 / static_cast<double>(ids.size());
    Matrix grad_states(ids.size(), d);
    for (std::size_t t = 0; t < ids.size(); ++t)
      for (std::size_t c = 0; c < d; ++c) grad_states(t, c) = grad_labels(l, c) * inv;
    encode_tokens_backward(ids, params, states, grad_states, grad);
  }
}

}  // namespace lsem
