#include "lsem/cli.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <tuple>

#include <CLI11.hpp>
#include <json.hpp>

#include "lsem/data.hpp"
#include "lsem/evaluation.hpp"
#include "lsem/gradcheck.hpp"
#include "lsem/model.hpp"
#include "lsem/training.hpp"

namespace lsem::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

// Prediction files --------------------------------------------------------------

struct PredictionLine {
  std::string story_id;
  std::int64_t line = 0;
  std::string character;
  std::vector<double> scores;
  LabelVector labels;
};

using InstanceKey = std::tuple<std::string, std::int64_t, std::string>;

std::vector<PredictionLine> load_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open prediction file " + path.string());
  std::vector<PredictionLine> out;
  std::string text;
  std::size_t n = 0;
  while (std::getline(in, text)) {
    ++n;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(text);
      PredictionLine p;
      p.story_id = j.at("story_id").get<std::string>();
      p.line = j.at("line").get<std::int64_t>();
      p.character = j.at("character").get<std::string>();
      p.scores = j.value("scores", std::vector<double>{});
      if (!p.scores.empty() && p.scores.size() != kNumLabels) {
        throw DataError("expected 8 scores at line " + std::to_string(n) + " of " + path.string());
      }
      p.labels.assign(kNumLabels, 0);
      for (const auto& name : j.at("labels").get<std::vector<std::string>>()) {
        auto k = LabelScheme::index_of(name);
        if (!k) throw DataError("unknown label '" + name + "' at line " + std::to_string(n) + " of " + path.string());
        p.labels[*k] = 1;
      }
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw DataError("malformed prediction at line " + std::to_string(n) + " of " + path.string() + ": " + e.what());
    }
  }
  return out;
}

json prediction_to_json(const Instance& inst, const Prediction& p) {
  return {{"story_id", inst.story_id}, {"line", inst.line}, {"character", inst.character},
          {"scores", p.scores},        {"labels", label_names(p.labels)}};
}

/// Reorders predictions to follow the gold file.
std::vector<PredictionLine> align(const std::vector<Instance>& gold, const std::vector<PredictionLine>& preds,
                                  const std::string& what) {
  std::map<InstanceKey, const PredictionLine*> index;
  for (const auto& p : preds) {
    if (!index.emplace(InstanceKey{p.story_id, p.line, p.character}, &p).second) {
      throw DataError(what + ": duplicate prediction for " + p.story_id + " line " + std::to_string(p.line));
    }
  }
  if (preds.size() != gold.size()) {
    throw DataError(what + ": " + std::to_string(preds.size()) + " predictions for " +
                    std::to_string(gold.size()) + " gold instances");
  }
  std::vector<PredictionLine> out;
  for (const auto& g : gold) {
    auto it = index.find({g.story_id, g.line, g.character});
    if (it == index.end()) {
      throw DataError(what + ": no prediction for " + g.story_id + " line " + std::to_string(g.line) + " (" +
                      g.character + ")");
    }
    out.push_back(*it->second);
  }
  return out;
}

std::vector<LabelVector> predicted_labels(const std::vector<PredictionLine>& preds) {
  std::vector<LabelVector> out;
  for (const auto& p : preds) out.push_back(p.labels);
  return out;
}

// Subcommand options ------------------------------------------------------------

struct ConfigOverrides {
  std::string config_path;
  std::optional<std::string> variant, label_embedding, correlation_init, optimizer;
  std::optional<std::size_t> dim, window, batch_size, epochs, unlabeled_ratio, patience;
  std::optional<double> lambda_corr, threshold, step_size, reg_step_scale;
  std::optional<std::uint64_t> seed;
  bool labels_as_input = false, separate_context = false, freeze_correlation = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON model configuration");
    app->add_option("--variant", variant, "baseline | leam | leam_corr | leam_corr_semi");
    app->add_option("--d", dim, "embedding dimension");
    app->add_option("--window", window, "attention smoothing window (odd)");
    app->add_option("--lambda-corr", lambda_corr, "weight of the correlation loss");
    app->add_option("--threshold", threshold, "decision threshold");
    app->add_option("--step-size", step_size, "optimizer step size");
    app->add_option("--batch-size", batch_size);
    app->add_option("--epochs", epochs);
    app->add_option("--seed", seed);
    app->add_option("--label-embedding", label_embedding, "static | dynamic");
    app->add_option("--correlation-init", correlation_init, "empirical | identity");
    app->add_option("--optimizer", optimizer, "adam | sgd");
    app->add_option("--reg-step-scale", reg_step_scale, "correlation-step size relative to --step-size");
    app->add_option("--unlabeled-ratio", unlabeled_ratio, "unlabeled batches per labeled batch");
    app->add_option("--patience", patience, "dev-F1 patience in epochs, 0 disables");
    app->add_flag("--labels-as-input", labels_as_input, "append the eight label sentences to the input");
    app->add_flag("--separate-context", separate_context, "pool context and sentence separately");
    app->add_flag("--freeze-correlation", freeze_correlation, "keep G at its initial value");
  }

  ModelConfig resolve() const {
    json j = config_path.empty() ? json::object() : read_json_file(config_path);
    if (variant) j["variant"] = *variant;
    if (dim) j["d"] = *dim;
    if (window) j["window"] = *window;
    if (lambda_corr) j["lambda_corr"] = *lambda_corr;
    if (threshold) j["threshold"] = *threshold;
    if (step_size) j["step_size"] = *step_size;
    if (batch_size) j["batch_size"] = *batch_size;
    if (epochs) j["epochs"] = *epochs;
    if (seed) j["seed"] = *seed;
    if (label_embedding) j["label_embedding"] = *label_embedding;
    if (correlation_init) j["correlation_init"] = *correlation_init;
    if (optimizer) j["optimizer"] = *optimizer;
    if (reg_step_scale) j["reg_step_scale"] = *reg_step_scale;
    if (unlabeled_ratio) j["unlabeled_ratio"] = *unlabeled_ratio;
    if (patience) j["patience"] = *patience;
    if (labels_as_input) j["labels_as_input"] = true;
    if (separate_context) j["separate_context"] = true;
    if (freeze_correlation) j["freeze_correlation"] = true;
    return config_from_json(j);
  }
};

struct TrainArgs {
  ConfigOverrides overrides;
  std::string train, dev, unlabeled, embeddings, out;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const ModelConfig config = a.overrides.resolve();
  if (config.variant == Variant::leam_corr_semi && a.unlabeled.empty()) {
    throw UsageError("variant leam_corr_semi requires --unlabeled (semi-supervised variant requires unlabeled data)");
  }
  const auto train = load_instances(a.train, true);
  std::optional<std::vector<Instance>> dev, unlabeled;
  if (!a.dev.empty()) dev = load_instances(a.dev, true);
  if (!a.unlabeled.empty()) unlabeled = load_instances(a.unlabeled, false);
  std::optional<WordVectorTable> vectors;
  if (!a.embeddings.empty()) vectors = load_word_vectors(a.embeddings, config.dim);

  std::ostringstream log;
  TrainResult result = train_model(config, train, dev ? &*dev : nullptr, unlabeled ? &*unlabeled : nullptr,
                                   vectors ? &*vectors : nullptr, &log);
  json run{{"command", "train"},  {"config", config_to_json(config)}, {"seed", config.seed},
           {"train", a.train},    {"dev", a.dev},                     {"unlabeled", a.unlabeled},
           {"embeddings", a.embeddings}};
  save_model(result.model, a.out, run);
  write_text(fs::path(a.out) / "train_log.jsonl", log.str());
  err << log.str();

  json summary{{"model", a.out}, {"epochs", result.epochs.size()}};
  if (!result.epochs.empty()) summary["final"] = epoch_report_to_json(result.epochs.back());
  out << summary.dump() << '\n';
  return kExitOk;
}

struct PredictArgs {
  std::string model, input, output, inference = "auto";
  std::optional<double> threshold;
};

int cmd_predict(const PredictArgs& a, std::ostream& out, std::ostream&) {
  const Model model = load_model(a.model);
  const auto instances = load_instances(a.input, false);
  Inference inference = Inference::automatic;
  if (a.inference == "correlated") inference = Inference::correlated;
  else if (a.inference == "independent") inference = Inference::independent;
  else if (a.inference != "auto") throw UsageError("--inference must be auto, correlated or independent");
  const double threshold = a.threshold.value_or(model.config().threshold);

  std::ostringstream lines;
  for (const auto& inst : instances) lines << prediction_to_json(inst, model.predict(inst, inference, threshold)).dump() << '\n';
  write_text(a.output, lines.str());

  json run{{"command", "predict"},  {"model", a.model},       {"input", a.input},
           {"inference", a.inference}, {"threshold", threshold}, {"config", config_to_json(model.config())},
           {"seed", model.config().seed}};
  write_text(a.output + ".run.json", run.dump(2) + '\n');
  out << json{{"predictions", a.output}, {"instances", instances.size()}}.dump() << '\n';
  return kExitOk;
}

struct EvaluateArgs {
  std::string gold, pred, format = "json", name = "model";
  bool sweep = false;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream&) {
  const auto gold = load_instances(a.gold, true);
  const auto preds = align(gold, load_predictions(a.pred), "evaluate");
  const auto gold_vecs = gold_labels(gold);

  MetricReport report;
  std::optional<double> threshold;
  if (a.sweep) {
    std::vector<std::vector<double>> scores;
    for (const auto& p : preds) {
      if (p.scores.empty()) throw DataError("--sweep needs scores in the prediction file");
      scores.push_back(p.scores);
    }
    std::vector<double> grid;
    for (int i = 1; i < 20; ++i) grid.push_back(i * 0.05);
    const ThresholdChoice best = threshold_sweep(gold_vecs, scores, grid);
    report = best.report;
    threshold = best.threshold;
  } else {
    report = micro_prf(gold_vecs, predicted_labels(preds));
  }

  if (a.format == "table") {
    out << metrics_table_header() << '\n' << metrics_table_row(a.name, report) << '\n';
  } else if (a.format == "json") {
    json j = metrics_to_json(report);
    if (threshold) j["threshold"] = *threshold;
    out << j.dump() << '\n';
  } else {
    throw UsageError("--format must be json or table");
  }
  return kExitOk;
}

struct CorrArgs {
  std::string input, json_out, csv_out;
};

int cmd_corr(const CorrArgs& a, std::ostream& out, std::ostream& err) {
  const auto instances = load_instances(a.input, true);
  std::vector<std::size_t> constant;
  const Matrix rho = empirical_correlations(gold_labels(instances), &constant);
  for (auto k : constant) {
    err << "warning: label '" << LabelScheme::names[k] << "' is constant; its correlations are reported as 0\n";
  }

  json matrix = json::object();
  std::ostringstream csv;
  csv << "label";
  for (auto name : LabelScheme::names) csv << ',' << name;
  csv << '\n';
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    const std::string row_name(LabelScheme::names[i]);
    csv << row_name;
    for (std::size_t j = 0; j < kNumLabels; ++j) {
      matrix[row_name][std::string(LabelScheme::names[j])] = rho(i, j);
      csv << ',' << json(rho(i, j)).dump();
    }
    csv << '\n';
  }
  json doc{{"labels", std::vector<std::string>(LabelScheme::names.begin(), LabelScheme::names.end())},
           {"instances", instances.size()},
           {"matrix", matrix}};
  if (!a.csv_out.empty()) write_text(a.csv_out, csv.str());
  if (!a.json_out.empty()) {
    write_text(a.json_out, doc.dump(2) + '\n');
  } else {
    out << doc.dump() << '\n';
  }
  return kExitOk;
}

struct SigtestArgs {
  std::string pred_a, pred_b, gold;
  std::size_t permutations = 100000;
  std::uint64_t seed = 13;
  std::size_t threads = 1;
};

int cmd_sigtest(const SigtestArgs& a, std::ostream& out, std::ostream&) {
  const auto gold = load_instances(a.gold, true);
  const auto pa = predicted_labels(align(gold, load_predictions(a.pred_a), "sigtest --pred-a"));
  const auto pb = predicted_labels(align(gold, load_predictions(a.pred_b), "sigtest --pred-b"));
  const SignificanceResult r = randomization_test(pa, pb, gold_labels(gold), a.permutations, a.seed, a.threads);
  out << json{{"observed", r.observed},
              {"f1_a", r.f1_a},
              {"f1_b", r.f1_b},
              {"permutations", r.permutations},
              {"at_least_as_extreme", r.at_least_as_extreme},
              {"p_value", r.p_value},
              {"seed", a.seed},
              {"threads", a.threads}}
             .dump()
      << '\n';
  return kExitOk;
}

struct GradcheckArgs {
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 7;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  bool ok = true;
  for (const auto& check : run_gradcheck_suite(a.seed, a.epsilon, a.tolerance)) {
    out << "[" << (check.report.passed() ? "PASS" : "FAIL") << "] " << check.name << " ("
        << (check.objective == Objective::supervised ? "supervised loss" : "regularizer") << ")\n"
        << check.report.summary();
    ok = ok && check.report.passed();
  }
  if (!ok) err << "gradient check failed\n";
  return ok ? kExitOk : kExitData;
}

struct SynthArgs {
  std::size_t n = 1000;
  std::uint64_t seed = 13;
  std::string out;
  std::vector<std::string> rho;
  std::size_t vocab_size = 50;
  std::size_t sentence_len = 10;
  double signal = 0.7;
  bool unlabeled = false;
};

LabelPairCorrelation parse_pair(const std::string& spec) {
  const auto colon = spec.find(':');
  const auto eq = spec.find('=');
  if (colon == std::string::npos || eq == std::string::npos || eq < colon) {
    throw UsageError("--rho expects label_a:label_b=value, got '" + spec + "'");
  }
  try {
    return {spec.substr(0, colon), spec.substr(colon + 1, eq - colon - 1), std::stod(spec.substr(eq + 1))};
  } catch (const std::exception&) {
    throw UsageError("--rho value is not a number in '" + spec + "'");
  }
}

int cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream&) {
  std::vector<LabelPairCorrelation> pairs;
  for (const auto& s : a.rho) pairs.push_back(parse_pair(s));
  SyntheticSpec spec;
  spec.n = a.n;
  spec.target_corr = planted_correlation(pairs);
  spec.vocab_size = a.vocab_size;
  spec.sentence_len = a.sentence_len;
  spec.signal_strength = a.signal;
  auto data = gen_synthetic(spec, a.seed);
  if (a.unlabeled) data = strip_labels(std::move(data));
  std::ostringstream lines;
  for (const auto& inst : data) lines << instance_to_json(inst).dump() << '\n';
  write_text(a.out, lines.str());
  out << json{{"output", a.out}, {"instances", data.size()}, {"seed", a.seed}}.dump() << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-label classification with label semantics", "lsem"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  train.overrides.attach(train_cmd);
  train_cmd->add_option("--train", train.train, "labeled JSONL")->required();
  train_cmd->add_option("--dev", train.dev, "labeled JSONL for per-epoch evaluation");
  train_cmd->add_option("--unlabeled", train.unlabeled, "unlabeled JSONL (semi-supervised variant)");
  train_cmd->add_option("--embeddings", train.embeddings, "word vectors, one 'token v1 ... vd' per line");
  train_cmd->add_option("--out", train.out, "model directory")->required();

  PredictArgs predict;
  auto* predict_cmd = app.add_subcommand("predict", "score instances with a trained model");
  predict_cmd->add_option("--model", predict.model)->required();
  predict_cmd->add_option("--input", predict.input)->required();
  predict_cmd->add_option("--output", predict.output)->required();
  predict_cmd->add_option("--threshold", predict.threshold);
  predict_cmd->add_option("--inference", predict.inference, "auto | correlated | independent");

  EvaluateArgs evaluate;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "micro-averaged precision, recall and F1");
  evaluate_cmd->add_option("--gold", evaluate.gold)->required();
  evaluate_cmd->add_option("--pred", evaluate.pred)->required();
  evaluate_cmd->add_option("--format", evaluate.format, "json | table");
  evaluate_cmd->add_option("--name", evaluate.name, "row name in table format");
  evaluate_cmd->add_flag("--sweep", evaluate.sweep, "pick the best threshold on a 0.05 grid");

  CorrArgs corr;
  auto* corr_cmd = app.add_subcommand("corr", "empirical label correlations");
  corr_cmd->add_option("--input", corr.input)->required();
  corr_cmd->add_option("--json", corr.json_out);
  corr_cmd->add_option("--csv", corr.csv_out);

  SigtestArgs sig;
  auto* sig_cmd = app.add_subcommand("sigtest", "approximate randomization test on micro-F1");
  sig_cmd->add_option("--pred-a", sig.pred_a)->required();
  sig_cmd->add_option("--pred-b", sig.pred_b)->required();
  sig_cmd->add_option("--gold", sig.gold)->required();
  sig_cmd->add_option("--permutations", sig.permutations)->check(CLI::PositiveNumber);
  sig_cmd->add_option("--seed", sig.seed);
  sig_cmd->add_option("--threads", sig.threads)->check(CLI::PositiveNumber);

  GradcheckArgs grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "verify analytic gradients on a tiny model");
  grad_cmd->add_option("--epsilon", grad.epsilon);
  grad_cmd->add_option("--tolerance", grad.tolerance);
  grad_cmd->add_option("--seed", grad.seed);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic correlated-label dataset");
  synth_cmd->add_option("--n", synth.n);
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--out", synth.out)->required();
  synth_cmd->add_option("--rho", synth.rho, "planted correlation, e.g. joy:sadness=-0.6 (repeatable)");
  synth_cmd->add_option("--vocab-size", synth.vocab_size);
  synth_cmd->add_option("--sentence-len", synth.sentence_len);
  synth_cmd->add_option("--signal", synth.signal, "probability a positive label plants its token");
  synth_cmd->add_flag("--unlabeled", synth.unlabeled, "omit labels");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train, out, err);
    if (*predict_cmd) return cmd_predict(predict, out, err);
    if (*evaluate_cmd) return cmd_evaluate(evaluate, out, err);
    if (*corr_cmd) return cmd_corr(corr, out, err);
    if (*sig_cmd) return cmd_sigtest(sig, out, err);
    if (*grad_cmd) return cmd_gradcheck(grad, out, err);
    if (*synth_cmd) return cmd_synth(synth, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace lsem::cli
