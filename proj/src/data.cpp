#include "lsem/data.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace lsem {

using nlohmann::json;

std::optional<std::size_t> LabelScheme::index_of(std::string_view name) {
  for (std::size_t k = 0; k < kNumLabels; ++k)
    if (names[k] == name) return k;
  return std::nullopt;
}

// Instances ---------------------------------------------------------------------

json instance_to_json(const Instance& instance) {
  json j;
  j["story_id"] = instance.story_id;
  j["line"] = instance.line;
  j["character"] = instance.character;
  j["sentence"] = instance.sentence;
  j["context"] = instance.context;
  if (instance.labels) j["labels"] = label_names(*instance.labels);
  return j;
}

namespace {

std::string at_line(std::size_t line_number) { return " at line " + std::to_string(line_number); }

template <typename T>
T required(const json& j, const char* key, std::size_t line_number) {
  auto it = j.find(key);
  if (it == j.end()) throw DataError(std::string("missing field '") + key + "'" + at_line(line_number));
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw DataError(std::string("field '") + key + "' has the wrong type" + at_line(line_number));
  }
}

}  // namespace

Instance instance_from_json(const json& j, std::size_t line_number) {
  if (!j.is_object()) throw DataError("expected a JSON object" + at_line(line_number));
  Instance inst;
  inst.story_id = required<std::string>(j, "story_id", line_number);
  inst.line = required<std::int64_t>(j, "line", line_number);
  inst.character = required<std::string>(j, "character", line_number);
  inst.sentence = required<Sentence>(j, "sentence", line_number);
  inst.context = required<std::vector<Sentence>>(j, "context", line_number);
  if (inst.line < 1) throw DataError("field 'line' must be >= 1" + at_line(line_number));
  if (inst.sentence.empty()) throw DataError("empty sentence" + at_line(line_number));

  if (auto it = j.find("labels"); it != j.end()) {
    const auto names = required<std::vector<std::string>>(j, "labels", line_number);
    LabelVector y(kNumLabels, 0);
    for (const auto& name : names) {
      auto k = LabelScheme::index_of(name);
      if (!k) throw DataError("unknown label '" + name + "'" + at_line(line_number));
      y[*k] = 1;
    }
    inst.labels = std::move(y);
  }
  return inst;
}

std::vector<Instance> load_instances(const std::filesystem::path& path, bool labeled) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open instance file " + path.string());
  std::vector<Instance> out;
  std::string text;
  std::size_t line_number = 0;
  while (std::getline(in, text)) {
    ++line_number;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw DataError("malformed JSON" + at_line(line_number) + ": " + e.what());
    }
    Instance inst = instance_from_json(j, line_number);
    if (labeled && !inst.labels) throw DataError("missing field 'labels'" + at_line(line_number));
    if (!labeled) inst.labels.reset();
    out.push_back(std::move(inst));
  }
  return out;
}

void save_instances(const std::filesystem::path& path, const std::vector<Instance>& instances) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& inst : instances) out << instance_to_json(inst).dump() << '\n';
}

std::vector<LabelVector> gold_labels(const std::vector<Instance>& instances) {
  std::vector<LabelVector> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) {
    if (!inst.labels) throw DataError("instance " + inst.story_id + " has no labels");
    out.push_back(*inst.labels);
  }
  return out;
}

std::vector<std::string> label_names(const LabelVector& labels) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < labels.size() && k < kNumLabels; ++k)
    if (labels[k]) out.emplace_back(LabelScheme::names[k]);
  return out;
}

// Vocabulary --------------------------------------------------------------------

Vocabulary::Vocabulary() {
  add(std::string(kPadToken));
  add(std::string(kUnkToken));
  add(std::string(kSepToken));
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < 3 || tokens[kPad] != kPadToken || tokens[kUnk] != kUnkToken ||
      tokens[kSep] != kSepToken) {
    throw DataError("vocabulary does not start with the reserved tokens");
  }
  Vocabulary v;
  for (std::size_t i = 3; i < tokens.size(); ++i) {
    if (v.contains(tokens[i])) throw DataError("duplicate vocabulary token '" + tokens[i] + "'");
    v.add(tokens[i]);
  }
  return v;
}

std::size_t Vocabulary::add(const std::string& token) {
  auto [it, inserted] = index_.try_emplace(token, tokens_.size());
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::size_t Vocabulary::index_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<std::size_t> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(index_of(t));
  return ids;
}

// Word vectors ------------------------------------------------------------------

const std::vector<double>* WordVectorTable::find(const std::string& token) const {
  auto it = vectors.find(token);
  return it == vectors.end() ? nullptr : &it->second;
}

WordVectorTable load_word_vectors(const std::filesystem::path& path, std::size_t expected_dim) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open word-vector file " + path.string());
  WordVectorTable table;
  table.dim = expected_dim;
  std::string text;
  std::size_t line_number = 0;
  while (std::getline(in, text)) {
    ++line_number;
    std::istringstream fields(text);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<double> values;
    std::string field;
    while (fields >> field) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw DataError("non-numeric value '" + field + "' in word vectors" + at_line(line_number));
      }
    }
    if (values.size() != expected_dim) {
      throw DataError("word vector for '" + token + "' has " + std::to_string(values.size()) +
                      " values, expected " + std::to_string(expected_dim) + at_line(line_number));
    }
    table.vectors.insert_or_assign(token, std::move(values));
  }
  return table;
}

// Synthetic data ----------------------------------------------------------------

Matrix planted_correlation(const std::vector<LabelPairCorrelation>& pairs) {
  Matrix c = Matrix::identity(kNumLabels);
  for (const auto& p : pairs) {
    auto a = LabelScheme::index_of(p.a);
    auto b = LabelScheme::index_of(p.b);
    if (!a || !b) throw DataError("unknown label in correlation pair " + p.a + ":" + p.b);
    if (*a == *b) throw DataError("correlation pair must name two different labels");
    c(*a, *b) = p.rho;
    c(*b, *a) = p.rho;
  }
  return c;
}

std::string indicator_token(std::size_t label) { return std::string(LabelScheme::names.at(label)); }

std::string noise_token(std::size_t index) { return "w" + std::to_string(index); }

Matrix psd_cholesky(const Matrix& m) {
  const std::size_t n = m.rows();
  constexpr double kTol = 1e-10;
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = m(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (diag < -kTol) throw DataError("target correlation matrix is not positive semi-definite");
    const double root = diag > kTol ? std::sqrt(diag) : 0.0;
    l(j, j) = root;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = m(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (root == 0.0) {
        if (std::abs(s) > 1e-8) throw DataError("target correlation matrix is not positive semi-definite");
        l(i, j) = 0.0;
      } else {
        l(i, j) = s / root;
      }
    }
  }
  return l;
}

std::vector<Instance> gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  const Matrix& c = spec.target_corr;
  if (c.rows() != kNumLabels || c.cols() != kNumLabels) {
    throw DataError("target correlation must be 8x8");
  }
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    if (std::abs(c(i, i) - 1.0) > 1e-12) throw DataError("target correlation needs a unit diagonal");
    for (std::size_t j = 0; j < kNumLabels; ++j) {
      if (std::abs(c(i, j) - c(j, i)) > 1e-12) throw DataError("target correlation must be symmetric");
      if (c(i, j) < -1.0 || c(i, j) > 1.0) throw DataError("correlation entries must lie in [-1, 1]");
    }
  }
  if (spec.vocab_size == 0) throw DataError("synthetic vocab_size must be positive");
  if (spec.signal_strength < 0.0 || spec.signal_strength > 1.0) {
    throw DataError("signal_strength must be a probability");
  }
  const Matrix factor = psd_cholesky(c);

  static constexpr std::array<std::string_view, 6> kCharacters{"alex", "blair", "casey",
                                                                "drew", "emery", "frankie"};
  Rng rng(seed);
  std::vector<Instance> out;
  out.reserve(spec.n);
  std::vector<double> noise(kNumLabels);
  for (std::size_t i = 0; i < spec.n; ++i) {
    for (auto& v : noise) v = rng.normal();
    const std::vector<double> latent = matvec(factor, noise);
    LabelVector y(kNumLabels, 0);
    for (std::size_t k = 0; k < kNumLabels; ++k) y[k] = latent[k] > 0.0 ? 1 : 0;

    std::vector<std::size_t> planted;
    for (std::size_t k = 0; k < kNumLabels; ++k)
      if (y[k] && rng.bernoulli(spec.signal_strength)) planted.push_back(k);

    const std::size_t length = std::max(spec.sentence_len, std::max<std::size_t>(planted.size(), 1));
    Sentence sentence(length);
    for (auto& tok : sentence) tok = noise_token(rng.below(spec.vocab_size));
    // Distinct slots for the planted indicators: partial Fisher-Yates.
    std::vector<std::size_t> slots(length);
    for (std::size_t s = 0; s < length; ++s) slots[s] = s;
    for (std::size_t p = 0; p < planted.size(); ++p) {
      std::swap(slots[p], slots[p + rng.below(length - p)]);
      sentence[slots[p]] = indicator_token(planted[p]);
    }

    Instance inst;
    inst.story_id = "synth-" + std::to_string(seed) + "-" + std::to_string(i);
    inst.line = 1;
    inst.character = std::string(kCharacters[rng.below(kCharacters.size())]);
    inst.sentence = std::move(sentence);
    inst.labels = std::move(y);
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<Instance> strip_labels(std::vector<Instance> instances) {
  for (auto& inst : instances) inst.labels.reset();
  return instances;
}

}  // namespace lsem
