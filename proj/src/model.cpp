#include "lsem/model.hpp"

#include <algorithm>
#include <set>

#include "lsem/correlation.hpp"
#include "lsem/evaluation.hpp"

namespace lsem {

using nlohmann::json;

namespace {

constexpr double kInitScale = 0.08;

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view name, const std::array<std::pair<std::string_view, Enum>, N>& table,
                const char* what) {
  for (const auto& [n, v] : table)
    if (n == name) return v;
  throw DataError(std::string("unknown ") + what + " '" + std::string(name) + "'");
}

template <typename Enum, std::size_t N>
std::string_view enum_name(Enum value, const std::array<std::pair<std::string_view, Enum>, N>& table) {
  for (const auto& [n, v] : table)
    if (v == value) return n;
  return "?";
}

constexpr std::array<std::pair<std::string_view, Variant>, 4> kVariants{{
    {"baseline", Variant::baseline},
    {"leam", Variant::leam},
    {"leam_corr", Variant::leam_corr},
    {"leam_corr_semi", Variant::leam_corr_semi},
}};
constexpr std::array<std::pair<std::string_view, LabelEmbeddingMode>, 2> kLabelModes{{
    {"static", LabelEmbeddingMode::static_table},
    {"dynamic", LabelEmbeddingMode::dynamic},
}};
constexpr std::array<std::pair<std::string_view, CorrelationInit>, 2> kCorrInits{{
    {"empirical", CorrelationInit::empirical},
    {"identity", CorrelationInit::identity},
}};
constexpr std::array<std::pair<std::string_view, OptimizerKind>, 2> kOptimizers{{
    {"adam", OptimizerKind::adam},
    {"sgd", OptimizerKind::sgd},
}};

void fill_uniform(Matrix& m, Rng& rng) {
  for (auto& v : m.values()) v = rng.uniform(-kInitScale, kInitScale);
}

void add_scaled(Matrix& dst, const Matrix& src, double scale) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
}

}  // namespace

std::string_view variant_name(Variant v) { return enum_name(v, kVariants); }
Variant parse_variant(std::string_view name) { return parse_enum(name, kVariants, "variant"); }
bool uses_attention(Variant v) { return v != Variant::baseline; }
bool uses_correlation(Variant v) { return v == Variant::leam_corr || v == Variant::leam_corr_semi; }

void ModelConfig::validate() const {
  if (dim == 0) throw DataError("config: d must be positive");
  if (window == 0 || window % 2 == 0) throw DataError("config: window must be odd and >= 1");
  if (!(lambda_corr >= 0.0)) throw DataError("config: lambda_corr must be >= 0");
  if (!(threshold > 0.0 && threshold < 1.0)) throw DataError("config: threshold must lie in (0, 1)");
  if (!(step_size > 0.0)) throw DataError("config: step_size must be positive");
  if (batch_size == 0) throw DataError("config: batch_size must be positive");
  if (!(reg_step_scale >= 0.0)) throw DataError("config: reg_step_scale must be >= 0");
  if (unlabeled_ratio == 0) throw DataError("config: unlabeled_ratio must be positive");
}

json config_to_json(const ModelConfig& c) {
  return {
      {"variant", variant_name(c.variant)},
      {"d", c.dim},
      {"window", c.window},
      {"lambda_corr", c.lambda_corr},
      {"threshold", c.threshold},
      {"step_size", c.step_size},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"seed", c.seed},
      {"labels_as_input", c.labels_as_input},
      {"separate_context", c.separate_context},
      {"label_embedding", enum_name(c.label_embedding, kLabelModes)},
      {"correlation_init", enum_name(c.correlation_init, kCorrInits)},
      {"freeze_correlation", c.freeze_correlation},
      {"optimizer", enum_name(c.optimizer, kOptimizers)},
      {"reg_step_scale", c.reg_step_scale},
      {"unlabeled_ratio", c.unlabeled_ratio},
      {"patience", c.patience},
  };
}

ModelConfig config_from_json(const json& j, ModelConfig c) {
  if (!j.is_object()) throw DataError("config must be a JSON object");
  static const std::set<std::string> known{
      "variant", "d", "window", "lambda_corr", "threshold", "step_size", "batch_size", "epochs",
      "seed", "labels_as_input", "separate_context", "label_embedding", "correlation_init",
      "freeze_correlation", "optimizer", "reg_step_scale", "unlabeled_ratio", "patience"};
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw DataError("unknown config field '" + key + "'");
  try {
    if (j.contains("variant")) c.variant = parse_variant(j["variant"].get<std::string>());
    if (j.contains("d")) c.dim = j["d"].get<std::size_t>();
    if (j.contains("window")) c.window = j["window"].get<std::size_t>();
    if (j.contains("lambda_corr")) c.lambda_corr = j["lambda_corr"].get<double>();
    if (j.contains("threshold")) c.threshold = j["threshold"].get<double>();
    if (j.contains("step_size")) c.step_size = j["step_size"].get<double>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("epochs")) c.epochs = j["epochs"].get<std::size_t>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("labels_as_input")) c.labels_as_input = j["labels_as_input"].get<bool>();
    if (j.contains("separate_context")) c.separate_context = j["separate_context"].get<bool>();
    if (j.contains("label_embedding"))
      c.label_embedding = parse_enum(j["label_embedding"].get<std::string>(), kLabelModes, "label_embedding");
    if (j.contains("correlation_init"))
      c.correlation_init = parse_enum(j["correlation_init"].get<std::string>(), kCorrInits, "correlation_init");
    if (j.contains("freeze_correlation")) c.freeze_correlation = j["freeze_correlation"].get<bool>();
    if (j.contains("optimizer"))
      c.optimizer = parse_enum(j["optimizer"].get<std::string>(), kOptimizers, "optimizer");
    if (j.contains("reg_step_scale")) c.reg_step_scale = j["reg_step_scale"].get<double>();
    if (j.contains("unlabeled_ratio")) c.unlabeled_ratio = j["unlabeled_ratio"].get<std::size_t>();
    if (j.contains("patience")) c.patience = j["patience"].get<std::size_t>();
  } catch (const json::exception& e) {
    throw DataError(std::string("config field has the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

// Parameters --------------------------------------------------------------------

std::vector<std::pair<std::string, Matrix*>> ModelParams::tensors() {
  std::vector<std::pair<std::string, Matrix*>> out{
      {"embedding", &encoder.embedding},
      {"mix_weight", &encoder.mix_weight},
      {"mix_bias", &encoder.mix_bias},
  };
  if (!label_table.empty()) out.emplace_back("label_table", &label_table);
  out.emplace_back("classifier_weight", &classifier_weight);
  out.emplace_back("classifier_bias", &classifier_bias);
  if (!correlation.empty()) out.emplace_back("correlation", &correlation);
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> ModelParams::tensors() const {
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (auto& [name, m] : const_cast<ModelParams*>(this)->tensors()) out.emplace_back(name, m);
  return out;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  for (auto& [_, m] : z.tensors()) m->fill(0.0);
  return z;
}

// Model -------------------------------------------------------------------------

Model::Model(ModelConfig config, Vocabulary vocabulary)
    : config_(std::move(config)), vocabulary_(std::move(vocabulary)) {
  config_.validate();
  const std::size_t d = config_.dim;
  params_.encoder.embedding = Matrix(vocabulary_.size(), d);
  params_.encoder.mix_weight = Matrix(d, 3 * d);
  params_.encoder.mix_bias = Matrix(1, d);
  if (uses_attention(config_.variant) && config_.label_embedding == LabelEmbeddingMode::static_table) {
    params_.label_table = Matrix(kNumLabels, d);
  }
  params_.classifier_weight = Matrix(kNumLabels, representation_dim());
  params_.classifier_bias = Matrix(1, kNumLabels);
  if (uses_correlation(config_.variant)) params_.correlation = Matrix::identity(kNumLabels);
}

std::size_t Model::representation_dim() const {
  return config_.separate_context ? 2 * config_.dim : config_.dim;
}

void Model::initialize(Rng& rng, const WordVectorTable* vectors,
                       const std::vector<LabelVector>* train_labels) {
  fill_uniform(params_.encoder.embedding, rng);
  fill_uniform(params_.encoder.mix_weight, rng);
  params_.encoder.mix_bias.fill(0.0);
  if (!params_.label_table.empty()) fill_uniform(params_.label_table, rng);
  fill_uniform(params_.classifier_weight, rng);
  params_.classifier_bias.fill(0.0);

  if (vectors != nullptr && vectors->size() > 0) {
    if (vectors->dim != config_.dim) {
      throw DataError("word vectors have dimension " + std::to_string(vectors->dim) +
                      " but the model uses d=" + std::to_string(config_.dim));
    }
    for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
      if (const auto* v = vectors->find(vocabulary_.token(i))) {
        std::copy(v->begin(), v->end(), params_.encoder.embedding.row(i).begin());
      }
    }
    if (!params_.label_table.empty()) {
      for (std::size_t k = 0; k < kNumLabels; ++k) {
        if (const auto* v = vectors->find(std::string(LabelScheme::names[k]))) {
          std::copy(v->begin(), v->end(), params_.label_table.row(k).begin());
        }
      }
    }
  }

  if (params_.has_correlation()) {
    params_.correlation = Matrix::identity(kNumLabels);
    if (config_.correlation_init == CorrelationInit::empirical && train_labels != nullptr &&
        !train_labels->empty()) {
      const Matrix rho = empirical_correlations(*train_labels);
      for (std::size_t i = 0; i < kNumLabels; ++i)
        for (std::size_t j = 0; j < kNumLabels; ++j)
          params_.correlation(i, j) = 0.5 * (i == j ? 1.0 : 0.0) + 0.5 * rho(i, j);
    }
    clamp_correlation_diagonal();
  }
}

void Model::clamp_correlation_diagonal() {
  for (std::size_t k = 0; k < params_.correlation.rows(); ++k)
    params_.correlation(k, k) = std::clamp(params_.correlation(k, k), 0.5, 1.5);
}

LabelEmbeddingBank Model::label_bank(const Instance& instance) const {
  LabelEmbeddingBank bank;
  bank.mode = config_.label_embedding;
  if (bank.mode == LabelEmbeddingMode::static_table) {
    bank.table = params_.label_table;
  } else {
    for (std::size_t k = 0; k < kNumLabels; ++k)
      bank.sentences.push_back(vocabulary_.encode(label_sentence(instance.character, k)));
  }
  return bank;
}

Model::Forward Model::forward(const Instance& instance) const {
  Forward fwd;
  const std::size_t d = config_.dim;
  std::vector<Sentence> parts;
  if (config_.separate_context) {
    SplitInput split = assemble_split_input(instance, config_.input_mode());
    parts.push_back(std::move(split.context));
    parts.push_back(std::move(split.sentence));
  } else {
    parts.push_back(assemble_input(instance, config_.input_mode()));
  }

  const bool attention = uses_attention(config_.variant);
  if (attention) {
    fwd.bank = label_bank(instance);
    fwd.labels = label_embeddings(fwd.bank, params_.encoder);
  }

  for (const auto& part : parts) {
    Segment seg;
    seg.ids = vocabulary_.encode(part);
    seg.pooled.assign(d, 0.0);
    if (!seg.ids.empty()) {
      seg.states = encode_tokens(seg.ids, params_.encoder);
      if (attention) {
        seg.attention = attend(compatibility(fwd.labels, seg.states), seg.states, config_.window);
        seg.pooled = seg.attention.representation;
      } else {
        const double inv = 1.0 / static_cast<double>(seg.states.rows());
        for (std::size_t t = 0; t < seg.states.rows(); ++t)
          for (std::size_t c = 0; c < d; ++c) seg.pooled[c] += seg.states(t, c) * inv;
      }
    }
    fwd.representation.insert(fwd.representation.end(), seg.pooled.begin(), seg.pooled.end());
    fwd.segments.push_back(std::move(seg));
  }

  fwd.logits = matvec(params_.classifier_weight, fwd.representation);
  for (std::size_t k = 0; k < kNumLabels; ++k) fwd.logits[k] += params_.classifier_bias(0, k);
  return fwd;
}

void Model::backward(const Forward& fwd, std::span<const double> grad_logits, ModelParams& grad) const {
  const std::size_t d = config_.dim;
  add_outer(grad.classifier_weight, grad_logits, fwd.representation);
  for (std::size_t k = 0; k < kNumLabels; ++k) grad.classifier_bias(0, k) += grad_logits[k];
  const std::vector<double> grad_repr = vecmat(grad_logits, params_.classifier_weight);

  const bool attention = uses_attention(config_.variant);
  Matrix grad_labels;
  if (attention) grad_labels = Matrix(kNumLabels, d);

  for (std::size_t s = 0; s < fwd.segments.size(); ++s) {
    const Segment& seg = fwd.segments[s];
    if (seg.ids.empty()) continue;
    std::span<const double> grad_pooled(grad_repr.data() + s * d, d);
    Matrix grad_states;
    if (attention) {
      AttentionGradients g = attention_backward(fwd.labels, seg.states, seg.attention, config_.window, grad_pooled);
      add_scaled(grad_labels, g.labels, 1.0);
      grad_states = std::move(g.states);
    } else {
      grad_states = Matrix(seg.states.rows(), d);
      const double inv = 1.0 / static_cast<double>(seg.states.rows());
      for (std::size_t t = 0; t < seg.states.rows(); ++t)
        for (std::size_t c = 0; c < d; ++c) grad_states(t, c) = grad_pooled[c] * inv;
    }
    encode_tokens_backward(seg.ids, params_.encoder, seg.states, grad_states, grad.encoder);
  }

  if (attention) {
    if (fwd.bank.mode == LabelEmbeddingMode::static_table) {
      add_scaled(grad.label_table, grad_labels, 1.0);
    } else {
      label_embeddings_backward(fwd.bank, params_.encoder, grad_labels, grad.encoder);
    }
  }
}

std::vector<double> Model::logits(const Instance& instance) const { return forward(instance).logits; }

Prediction Model::predict(const Instance& instance, Inference inference) const {
  return predict(instance, inference, config_.threshold);
}

Prediction Model::predict(const Instance& instance, Inference inference, double threshold) const {
  bool correlated = params_.has_correlation();
  if (inference == Inference::correlated && !correlated) {
    throw ModelError("model variant '" + std::string(variant_name(config_.variant)) +
                     "' has no correlation matrix; correlated inference is unavailable");
  }
  if (inference == Inference::independent) correlated = false;

  Prediction p;
  p.logits = logits(instance);
  if (correlated) {
    p.scores = correlate_logits(p.logits, params_.correlation);
  } else {
    p.scores.resize(p.logits.size());
    for (std::size_t k = 0; k < p.logits.size(); ++k) p.scores[k] = sigmoid(p.logits[k]);
  }
  p.labels.resize(p.scores.size());
  for (std::size_t k = 0; k < p.scores.size(); ++k) p.labels[k] = p.scores[k] >= threshold ? 1 : 0;
  return p;
}

double Model::supervised_loss(std::span<const Instance> batch, ModelParams* grad,
                              const Matrix* target_correlation) const {
  if (batch.empty()) throw std::invalid_argument("supervised_loss: empty batch");
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const Matrix* g = params_.has_correlation() ? &params_.correlation : nullptr;
  const Matrix* target = target_correlation ? target_correlation : g;
  double loss = 0.0;
  std::vector<double> y(kNumLabels);
  for (const auto& inst : batch) {
    if (!inst.labels) throw DataError("supervised_loss: instance " + inst.story_id + " has no labels");
    for (std::size_t k = 0; k < kNumLabels; ++k) y[k] = (*inst.labels)[k];
    const Forward fwd = forward(inst);
    HeadGradient head = supervised_head(fwd.logits, y, g, config_.lambda_corr, g ? target : nullptr);
    loss += head.loss * inv_n;
    if (grad == nullptr) continue;
    for (auto& v : head.logits) v *= inv_n;
    backward(fwd, head.logits, *grad);
    if (g != nullptr) add_scaled(grad->correlation, head.correlation, inv_n);
  }
  return loss;
}

double Model::regularization_loss(std::span<const Instance> batch, ModelParams* grad, bool all_params) const {
  if (!params_.has_correlation()) throw ModelError("regularization requires a correlation matrix");
  if (batch.empty()) throw std::invalid_argument("regularization_loss: empty batch");
  std::vector<Forward> passes;
  std::vector<std::vector<double>> batch_logits;
  for (const auto& inst : batch) {
    passes.push_back(forward(inst));
    batch_logits.push_back(passes.back().logits);
  }
  std::vector<std::vector<double>> grad_logits;
  HeadGradient head = regularizer_head(batch_logits, params_.correlation,
                                       (grad != nullptr && all_params) ? &grad_logits : nullptr);
  if (grad != nullptr) {
    add_scaled(grad->correlation, head.correlation, 1.0);
    if (all_params)
      for (std::size_t i = 0; i < passes.size(); ++i) backward(passes[i], grad_logits[i], *grad);
  }
  return head.loss;
}

std::vector<std::vector<double>> Model::batch_scores(std::span<const Instance> batch) const {
  std::vector<std::vector<double>> out;
  out.reserve(batch.size());
  for (const auto& inst : batch) out.push_back(predict(inst).scores);
  return out;
}

Vocabulary build_vocabulary(const std::vector<Instance>& instances, const ModelConfig& config) {
  Vocabulary vocab;
  const bool dynamic_labels =
      uses_attention(config.variant) && config.label_embedding == LabelEmbeddingMode::dynamic;
  for (const auto& inst : instances) {
    for (const auto& tok : assemble_input(inst, config.input_mode())) vocab.add(tok);
    if (dynamic_labels)
      for (std::size_t k = 0; k < kNumLabels; ++k)
        for (const auto& tok : label_sentence(inst.character, k)) vocab.add(tok);
  }
  return vocab;
}

}  // namespace lsem
