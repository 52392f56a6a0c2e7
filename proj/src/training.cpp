#include "lsem/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <ostream>
#include <sstream>

namespace lsem {

using nlohmann::json;

json epoch_report_to_json(const EpochReport& r) {
  json j{{"epoch", r.epoch}, {"mean_loss", r.mean_loss}};
  if (r.mean_reg_loss) j["mean_reg_loss"] = *r.mean_reg_loss;
  if (r.symmetry_drift) j["symmetry_drift"] = *r.symmetry_drift;
  if (r.dev) j["dev"] = metrics_to_json(*r.dev);
  return j;
}

namespace {

constexpr std::uint64_t kShuffleStream = 1;

std::vector<Instance> gather(const std::vector<Instance>& pool, const std::vector<std::size_t>& idx) {
  std::vector<Instance> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(pool[i]);
  return out;
}

double symmetry_drift(const Matrix& g) {
  double drift = 0.0;
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = i + 1; j < g.cols(); ++j) drift = std::max(drift, std::abs(g(i, j) - g(j, i)));
  return drift;
}

[[noreturn]] void fail_non_finite(const char* stage, double loss, std::span<const Instance> batch,
                                  const Model& model) {
  std::ostringstream msg;
  msg << stage << ": non-finite loss " << loss << " on a batch of " << batch.size() << " instances (";
  for (std::size_t i = 0; i < batch.size() && i < 5; ++i) msg << (i ? ", " : "") << batch[i].story_id;
  msg << (batch.size() > 5 ? ", ..." : "") << ")";
  for (const auto& [name, m] : model.params().tensors())
    msg << "; " << name << (m->all_finite() ? " finite" : " NON-FINITE");
  throw TrainingError(msg.str());
}

}  // namespace

Trainer::Trainer(Model& model)
    : model_(model), shuffle_rng_(Rng::derive_seed(model.config().seed, kShuffleStream)) {
  main_state_.options.kind = model.config().optimizer;
  main_state_.options.step_size = model.config().step_size;
  reg_state_.options.kind = model.config().optimizer;
  reg_state_.options.step_size = model.config().step_size * model.config().reg_step_scale;
}

double Trainer::supervised_step(std::span<const Instance> batch) {
  ModelParams grad = model_.params().zeros_like();
  const double loss = model_.supervised_loss(batch, &grad);
  if (!std::isfinite(loss)) fail_non_finite("supervised_step", loss, batch, model_);

  std::vector<Matrix*> params;
  std::vector<const Matrix*> grads;
  auto param_tensors = model_.params().tensors();
  auto grad_tensors = grad.tensors();
  for (std::size_t i = 0; i < param_tensors.size(); ++i) {
    if (param_tensors[i].first == "correlation" && model_.config().freeze_correlation) continue;
    params.push_back(param_tensors[i].second);
    grads.push_back(grad_tensors[i].second);
  }
  optimizer_step(params, grads, main_state_);
  if (model_.params().has_correlation()) model_.clamp_correlation_diagonal();
  return loss;
}

double Trainer::regularization_step(std::span<const Instance> batch) {
  ModelParams grad = model_.params().zeros_like();
  const double loss = model_.regularization_loss(batch, &grad, false);
  if (!std::isfinite(loss)) fail_non_finite("regularization_step", loss, batch, model_);
  if (model_.config().freeze_correlation) return loss;
  Matrix* g = &model_.params().correlation;
  const Matrix* dg = &grad.correlation;
  optimizer_step(std::span<Matrix* const>(&g, 1), std::span<const Matrix* const>(&dg, 1), reg_state_);
  model_.clamp_correlation_diagonal();
  return loss;
}

std::vector<std::vector<std::size_t>> Trainer::batches(std::size_t count) {
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  shuffle_rng_.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  const std::size_t size = model_.config().batch_size;
  for (std::size_t start = 0; start < count; start += size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(count, start + size)));
  }
  return out;
}

EpochReport Trainer::supervised_epoch(const std::vector<Instance>& labeled) {
  if (labeled.empty()) throw DataError("training requires at least one labeled instance");
  EpochReport report;
  report.epoch = ++epochs_run_;
  double total = 0.0;
  for (const auto& idx : batches(labeled.size())) {
    const auto batch = gather(labeled, idx);
    total += supervised_step(batch) * static_cast<double>(batch.size());
  }
  report.mean_loss = total / static_cast<double>(labeled.size());
  if (model_.params().has_correlation()) report.symmetry_drift = symmetry_drift(model_.params().correlation);
  return report;
}

EpochReport Trainer::semi_supervised_epoch(const std::vector<Instance>& labeled,
                                           const std::vector<Instance>& unlabeled) {
  if (unlabeled.empty()) throw DataError("semi-supervised variant requires unlabeled data");
  if (labeled.empty()) throw DataError("training requires at least one labeled instance");
  if (!model_.params().has_correlation()) throw ModelError("semi-supervised training requires a correlation matrix");

  EpochReport report;
  report.epoch = ++epochs_run_;
  const auto labeled_batches = batches(labeled.size());
  const auto unlabeled_batches = batches(unlabeled.size());
  std::size_t cursor = 0;
  double total = 0.0;
  double reg_total = 0.0;
  std::size_t reg_steps = 0;
  for (const auto& idx : labeled_batches) {
    const auto batch = gather(labeled, idx);
    total += supervised_step(batch) * static_cast<double>(batch.size());
    for (std::size_t r = 0; r < model_.config().unlabeled_ratio; ++r) {
      const auto pool_batch = gather(unlabeled, unlabeled_batches[cursor]);
      cursor = (cursor + 1) % unlabeled_batches.size();
      reg_total += regularization_step(pool_batch);
      ++reg_steps;
    }
  }
  report.mean_loss = total / static_cast<double>(labeled.size());
  report.mean_reg_loss = reg_total / static_cast<double>(reg_steps);
  report.symmetry_drift = symmetry_drift(model_.params().correlation);
  return report;
}

MetricReport evaluate_model(const Model& model, const std::vector<Instance>& labeled) {
  std::vector<LabelVector> pred;
  pred.reserve(labeled.size());
  for (const auto& inst : labeled) pred.push_back(model.predict(inst).labels);
  return micro_prf(gold_labels(labeled), pred);
}

TrainResult train_model(const ModelConfig& config, const std::vector<Instance>& train,
                        const std::vector<Instance>* dev, const std::vector<Instance>* unlabeled,
                        const WordVectorTable* vectors, std::ostream* log) {
  config.validate();
  const bool semi = config.variant == Variant::leam_corr_semi;
  if (semi && (unlabeled == nullptr || unlabeled->empty())) {
    throw DataError("semi-supervised variant requires unlabeled data");
  }
  if (train.empty()) throw DataError("training requires at least one labeled instance");

  std::vector<Instance> vocab_source = train;
  if (unlabeled != nullptr) vocab_source.insert(vocab_source.end(), unlabeled->begin(), unlabeled->end());
  Model model(config, build_vocabulary(vocab_source, config));
  const auto train_labels = gold_labels(train);
  Rng init_rng(config.seed);
  model.initialize(init_rng, vectors, &train_labels);

  TrainResult result{std::move(model), {}};
  Trainer trainer(result.model);
  std::optional<ModelParams> best;
  double best_f1 = -1.0;
  std::size_t stale = 0;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    EpochReport report =
        semi ? trainer.semi_supervised_epoch(train, *unlabeled) : trainer.supervised_epoch(train);
    if (dev != nullptr && !dev->empty()) report.dev = evaluate_model(result.model, *dev);
    if (log != nullptr) *log << epoch_report_to_json(report).dump() << '\n';
    result.epochs.push_back(report);

    if (config.patience > 0 && report.dev) {
      if (report.dev->f1 > best_f1) {
        best_f1 = report.dev->f1;
        best = result.model.params();
        stale = 0;
      } else if (++stale >= config.patience) {
        break;
      }
    }
  }
  if (best) result.model.params() = *best;
  return result;
}

// Serialization -----------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'L', 'S', 'M', 'L'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffU));
}

class ByteReader {
 public:
  explicit ByteReader(std::string bytes) : bytes_(std::move(bytes)) {}

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError("truncated weight file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
    return std::bit_cast<double>(bits);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_weights(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, const Matrix*>>& tensors) {
  std::string out(kMagic, 4);
  put_u32(out, kModelFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(m->rows()));
    put_u32(out, static_cast<std::uint32_t>(m->cols()));
    for (double v : m->values()) put_f64(out, v);
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot write " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
}

std::vector<std::pair<std::string, Matrix>> read_weights(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot open weight file " + path.string());
  ByteReader in(std::string(std::istreambuf_iterator<char>(file), {}));
  try {
    if (in.str(4) != std::string(kMagic, 4)) throw DataError("unrecognized model file");
  } catch (const DataError&) {
    throw DataError("unrecognized model file");
  }
  const auto version = in.u32();
  if (version != kModelFormatVersion) {
    throw DataError("unsupported model format version " + std::to_string(version) + " (expected " +
                    std::to_string(kModelFormatVersion) + ")");
  }
  const auto count = in.u32();
  std::vector<std::pair<std::string, Matrix>> out;
  for (std::uint32_t t = 0; t < count; ++t) {
    std::string name = in.str(in.u32());
    const std::size_t rows = in.u32();
    const std::size_t cols = in.u32();
    in.need(rows * cols * 8);
    std::vector<double> data(rows * cols);
    for (auto& v : data) v = in.f64();
    out.emplace_back(std::move(name), Matrix(rows, cols, std::move(data)));
  }
  if (!in.done()) throw DataError("trailing bytes in weight file");
  return out;
}

void save_model(const Model& model, const std::filesystem::path& directory, const json& run) {
  std::filesystem::create_directories(directory);
  json meta;
  meta["format"] = "lsem-model";
  meta["format_version"] = kModelFormatVersion;
  meta["labels"] = std::vector<std::string>(LabelScheme::names.begin(), LabelScheme::names.end());
  meta["config"] = config_to_json(model.config());
  meta["vocabulary"] = model.vocabulary().tokens();
  meta["weights"] = kModelWeightsFile;
  if (!run.empty()) meta["run"] = run;
  std::ofstream out(directory / kModelMetadataFile);
  if (!out) throw DataError("cannot write model metadata in " + directory.string());
  out << meta.dump(2) << '\n';
  write_weights(directory / kModelWeightsFile, model.params().tensors());
}

Model load_model(const std::filesystem::path& directory) {
  std::ifstream in(directory / kModelMetadataFile);
  if (!in) throw DataError("no model metadata in " + directory.string());
  json meta;
  try {
    meta = json::parse(in);
  } catch (const json::parse_error&) {
    throw DataError("unrecognized model file");
  }
  if (!meta.is_object() || meta.value("format", "") != "lsem-model") throw DataError("unrecognized model file");
  if (meta.value("format_version", 0U) != kModelFormatVersion) {
    throw DataError("unsupported model format version " + meta["format_version"].dump());
  }
  const auto labels = meta.at("labels").get<std::vector<std::string>>();
  if (!std::equal(labels.begin(), labels.end(), LabelScheme::names.begin(), LabelScheme::names.end())) {
    throw DataError("model label scheme does not match the library's label order");
  }
  Model model(config_from_json(meta.at("config")),
              Vocabulary::from_tokens(meta.at("vocabulary").get<std::vector<std::string>>()));

  auto stored = read_weights(directory / kModelWeightsFile);
  auto expected = model.params().tensors();
  if (stored.size() != expected.size()) {
    throw DataError("weight file holds " + std::to_string(stored.size()) + " tensors, the '" +
                    std::string(variant_name(model.config().variant)) + "' variant needs " +
                    std::to_string(expected.size()));
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    auto& [name, target] = expected[i];
    if (stored[i].first != name) throw DataError("unexpected tensor '" + stored[i].first + "' in weight file");
    if (!stored[i].second.same_shape(*target)) throw DataError("tensor '" + name + "' has the wrong shape");
    *target = std::move(stored[i].second);
  }
  return model;
}

}  // namespace lsem
