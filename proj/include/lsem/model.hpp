#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lsem/attention.hpp"
#include "lsem/data.hpp"
#include "lsem/encoder.hpp"
#include "lsem/numerics.hpp"

namespace lsem {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The ablation ladder: mean-pooled baseline, label attention, attention plus
/// the correlation head, and the same with the unlabeled-data regularizer.
enum class Variant { baseline, leam, leam_corr, leam_corr_semi };
enum class CorrelationInit { empirical, identity };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);
bool uses_attention(Variant v);
bool uses_correlation(Variant v);

struct ModelConfig {
  Variant variant = Variant::leam_corr;
  std::size_t dim = 64;
  std::size_t window = 1;
  double lambda_corr = 1.0;
  double threshold = 0.5;
  double step_size = 0.01;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 13;
  bool labels_as_input = false;
  bool separate_context = false;
  LabelEmbeddingMode label_embedding = LabelEmbeddingMode::static_table;
  CorrelationInit correlation_init = CorrelationInit::empirical;
  bool freeze_correlation = false;
  OptimizerKind optimizer = OptimizerKind::adam;
  /// Step size of the correlation-only update, relative to step_size.
  double reg_step_scale = 0.1;
  /// Unlabeled batches per labeled batch in a semi-supervised epoch.
  std::size_t unlabeled_ratio = 1;
  /// Epochs without dev-F1 improvement before stopping; 0 disables.
  std::size_t patience = 0;

  void validate() const;
  InputMode input_mode() const {
    return labels_as_input ? InputMode::labels_as_input : InputMode::plain;
  }
};

nlohmann::json config_to_json(const ModelConfig& config);
/// Fields absent from `j` keep their value from `base`.
ModelConfig config_from_json(const nlohmann::json& j, ModelConfig base = {});

/// Every trainable tensor. Optional tensors are left empty when the variant
/// does not use them.
struct ModelParams {
  EncoderParams encoder;
  Matrix label_table;        // K x d, static label embeddings
  Matrix classifier_weight;  // K x r, r = d or 2d with separate context
  Matrix classifier_bias;    // 1 x K
  Matrix correlation;        // K x K

  /// Non-empty tensors in a fixed order, paired with their names.
  std::vector<std::pair<std::string, Matrix*>> tensors();
  std::vector<std::pair<std::string, const Matrix*>> tensors() const;
  ModelParams zeros_like() const;
  bool has_correlation() const { return !correlation.empty(); }
};

struct Prediction {
  std::vector<double> logits;  // z
  std::vector<double> scores;  // e
  LabelVector labels;
};

enum class Inference { automatic, correlated, independent };

class Model {
 public:
  Model(ModelConfig config, Vocabulary vocabulary);

  /// Draws weights from the seeded generator (uniform in +-0.08, zero
  /// biases), then overrides embeddings found in `vectors`. G starts from the
  /// empirical correlations of `train_labels` blended with identity, or from
  /// identity when configured or when no labels are given.
  void initialize(Rng& rng, const WordVectorTable* vectors = nullptr,
                  const std::vector<LabelVector>* train_labels = nullptr);

  const ModelConfig& config() const { return config_; }
  ModelConfig& config() { return config_; }
  const Vocabulary& vocabulary() const { return vocabulary_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }
  std::size_t representation_dim() const;

  std::vector<double> logits(const Instance& instance) const;
  /// Automatic inference applies G when the model has one.
  Prediction predict(const Instance& instance, Inference inference = Inference::automatic) const;
  Prediction predict(const Instance& instance, Inference inference, double threshold) const;

  /// Mean supervised loss over the batch; the mean gradient is added to
  /// `grad` when given. Soft targets come from `target_correlation` (the
  /// model's own G when null) and are held constant in the gradient.
  double supervised_loss(std::span<const Instance> batch, ModelParams* grad,
                         const Matrix* target_correlation = nullptr) const;

  /// Mean regularizer over the batch. The gradient w.r.t. G is added to
  /// `grad`; with `all_params` the gradient also flows into every other tensor.
  double regularization_loss(std::span<const Instance> batch, ModelParams* grad,
                             bool all_params = false) const;

  /// Score vectors of a batch (correlated when G exists).
  std::vector<std::vector<double>> batch_scores(std::span<const Instance> batch) const;

  /// Keeps G's diagonal in [0.5, 1.5].
  void clamp_correlation_diagonal();

 private:
  struct Segment {
    std::vector<std::size_t> ids;
    Matrix states;
    AttentionResult attention;
    std::vector<double> pooled;
  };
  struct Forward {
    std::vector<Segment> segments;
    LabelEmbeddingBank bank;
    Matrix labels;
    std::vector<double> representation;
    std::vector<double> logits;
  };

  Forward forward(const Instance& instance) const;
  void backward(const Forward& fwd, std::span<const double> grad_logits, ModelParams& grad) const;
  LabelEmbeddingBank label_bank(const Instance& instance) const;

  ModelConfig config_;
  Vocabulary vocabulary_;
  ModelParams params_;
};

/// Vocabulary over every token the configured input assembly can produce
/// for the given instances, label-sentence tokens included.
Vocabulary build_vocabulary(const std::vector<Instance>& instances, const ModelConfig& config);

}  // namespace lsem
