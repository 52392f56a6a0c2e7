#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lsem/numerics.hpp"

namespace lsem {

/// Raised for malformed inputs: data files, model directories, configs.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kNumLabels = 8;

/// The eight Plutchik emotions in wheel order. Every label-indexed vector and
/// matrix in the library uses this order.
struct LabelScheme {
  static constexpr std::array<std::string_view, kNumLabels> names{
      "joy", "trust", "fear", "surprise", "sadness", "disgust", "anger", "anticipation"};
  static constexpr std::array<std::string_view, kNumLabels> adjectives{
      "joyful", "trusting", "afraid", "surprised", "sad", "disgusted", "angry", "anticipating"};

  static std::optional<std::size_t> index_of(std::string_view name);
};

/// Binary label vector, one 0/1 entry per label.
using LabelVector = std::vector<std::uint8_t>;
using Sentence = std::vector<std::string>;

/// One character-line pair. `labels` is empty for unlabeled instances.
struct Instance {
  std::string story_id;
  std::int64_t line = 1;
  std::string character;
  Sentence sentence;
  std::vector<Sentence> context;
  std::optional<LabelVector> labels;

  bool labeled() const { return labels.has_value(); }
  bool operator==(const Instance&) const = default;
};

nlohmann::json instance_to_json(const Instance& instance);
/// `line_number` is only used in error messages.
Instance instance_from_json(const nlohmann::json& j, std::size_t line_number);

/// Reads a JSON Lines instance file. With `labeled` set, every line must carry
/// labels; otherwise labels are dropped.
std::vector<Instance> load_instances(const std::filesystem::path& path, bool labeled);
void save_instances(const std::filesystem::path& path, const std::vector<Instance>& instances);

std::vector<LabelVector> gold_labels(const std::vector<Instance>& instances);
std::vector<std::string> label_names(const LabelVector& labels);

class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kSep = 2;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";
  static constexpr std::string_view kSepToken = "<sep>";

  Vocabulary();
  /// Rebuilds from an index-ordered token list whose first three entries are
  /// the reserved tokens.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  std::size_t add(const std::string& token);
  /// Unknown tokens map to kUnk.
  std::size_t index_of(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.contains(token); }
  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }

  std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct WordVectorTable {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;

  const std::vector<double>* find(const std::string& token) const;
  std::size_t size() const { return vectors.size(); }
};

/// Plain-text "token v1 ... vd" per line; blank lines are skipped.
WordVectorTable load_word_vectors(const std::filesystem::path& path, std::size_t expected_dim);

struct SyntheticSpec {
  std::size_t n = 1000;
  Matrix target_corr = Matrix::identity(kNumLabels);
  std::size_t vocab_size = 50;
  std::size_t sentence_len = 10;
  double signal_strength = 0.7;
};

/// Correlation matrix with the given off-diagonal entries set symmetrically,
/// e.g. {{"joy", "sadness", -0.6}}.
struct LabelPairCorrelation {
  std::string a;
  std::string b;
  double rho = 0.0;
};
Matrix planted_correlation(const std::vector<LabelPairCorrelation>& pairs);

/// Token that signals label k in synthetic sentences (the label name itself).
std::string indicator_token(std::size_t label);
std::string noise_token(std::size_t index);

/// Labeled dataset whose labels threshold a latent correlated Gaussian at 0.
/// Each positive label plants its indicator token with probability
/// `signal_strength`; remaining slots hold uniform noise tokens.
std::vector<Instance> gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Lower Cholesky factor of a positive semi-definite matrix. Throws
/// DataError when a pivot is negative beyond round-off.
Matrix psd_cholesky(const Matrix& m);

std::vector<Instance> strip_labels(std::vector<Instance> instances);

}  // namespace lsem
