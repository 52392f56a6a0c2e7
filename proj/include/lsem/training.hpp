#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "lsem/evaluation.hpp"
#include "lsem/model.hpp"

namespace lsem {

/// Non-finite loss during training. The message carries a diagnostic dump.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochReport {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  /// Mean regularizer over the correlation-only steps (semi-supervised only).
  std::optional<double> mean_reg_loss;
  /// max |G - G^T|; G is not kept symmetric.
  std::optional<double> symmetry_drift;
  std::optional<MetricReport> dev;
};

nlohmann::json epoch_report_to_json(const EpochReport& report);

/// Owns the optimizer state and the shuffling stream of one training run.
/// Shuffling uses a stream derived from the config seed, separate from the
/// initialization stream.
class Trainer {
 public:
  explicit Trainer(Model& model);

  /// Full forward/backward on a labeled batch; updates every trainable
  /// tensor (G excluded when frozen). Returns the batch loss.
  double supervised_step(std::span<const Instance> batch);

  /// Regularizer on an unlabeled batch; updates G and nothing else.
  double regularization_step(std::span<const Instance> batch);

  EpochReport supervised_epoch(const std::vector<Instance>& labeled);

  /// Alternates supervised steps on labeled batches with correlation-only
  /// steps on unlabeled batches (unlabeled_ratio of them per labeled batch,
  /// cycling through the pool).
  EpochReport semi_supervised_epoch(const std::vector<Instance>& labeled,
                                    const std::vector<Instance>& unlabeled);

  std::size_t epochs_run() const { return epochs_run_; }

 private:
  std::vector<std::vector<std::size_t>> batches(std::size_t count);

  Model& model_;
  Rng shuffle_rng_;
  OptimizerState main_state_;
  OptimizerState reg_state_;
  std::size_t epochs_run_ = 0;
};

struct TrainResult {
  Model model;
  std::vector<EpochReport> epochs;
};

/// Builds the vocabulary, initializes and trains for config.epochs epochs
/// (fewer with patience). Progress lines go to `log` when given.
TrainResult train_model(const ModelConfig& config, const std::vector<Instance>& train,
                        const std::vector<Instance>* dev = nullptr,
                        const std::vector<Instance>* unlabeled = nullptr,
                        const WordVectorTable* vectors = nullptr, std::ostream* log = nullptr);

MetricReport evaluate_model(const Model& model, const std::vector<Instance>& labeled);

// Model directory ---------------------------------------------------------------

inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr const char* kModelMetadataFile = "model.json";
inline constexpr const char* kModelWeightsFile = "weights.bin";

/// Writes model.json (format version, label scheme, config, vocabulary and
/// the optional `run` provenance object) and weights.bin.
void save_model(const Model& model, const std::filesystem::path& directory,
                const nlohmann::json& run = nlohmann::json::object());
Model load_model(const std::filesystem::path& directory);

/// Binary tensor container: "LSML", u32 version, u32 tensor count, then per
/// tensor u32 name length, name bytes, u32 rows, u32 cols and row-major
/// little-endian doubles.
std::vector<std::pair<std::string, Matrix>> read_weights(const std::filesystem::path& path);
void write_weights(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, const Matrix*>>& tensors);

}  // namespace lsem
