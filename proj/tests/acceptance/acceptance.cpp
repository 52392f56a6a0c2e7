// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
// Optional data for criterion 9: first argument or LSEM_EMOTION_DATA (labeled JSONL).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsem/attention.hpp"
#include "lsem/cli.hpp"
#include "lsem/correlation.hpp"
#include "lsem/data.hpp"
#include "lsem/evaluation.hpp"
#include "lsem/gradcheck.hpp"
#include "lsem/training.hpp"

namespace fs = std::filesystem;
using namespace lsem;
using nlohmann::json;

namespace {

struct Outcome {
  enum class Status { pass, fail, skip } status = Status::fail;
  std::string detail;
};

Outcome pass(std::string d) { return {Outcome::Status::pass, std::move(d)}; }
Outcome fail(std::string d) { return {Outcome::Status::fail, std::move(d)}; }
Outcome verdict(bool ok, std::string d) { return ok ? pass(std::move(d)) : fail(std::move(d)); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

fs::path workdir() {
  fs::path dir = fs::path(LSEM_ACCEPTANCE_WORKDIR);
  fs::create_directories(dir);
  return dir;
}

Matrix planted() { return planted_correlation({{"joy", "sadness", -0.6}, {"joy", "trust", 0.6}}); }

std::vector<Instance> synthetic(std::size_t n, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n = n;
  spec.target_corr = planted();
  spec.signal_strength = 0.7;
  return gen_synthetic(spec, seed);
}

// 1 -----------------------------------------------------------------------------

Outcome gradient_integrity() {
  const auto start = std::chrono::steady_clock::now();
  const auto checks = run_gradcheck_suite(7, 1e-5, 1e-4);
  const double elapsed = seconds_since(start);

  std::set<std::string> variants;
  std::size_t tensors = 0;
  double worst = 0.0;
  std::string failed;
  for (const auto& c : checks) {
    for (const auto& t : c.report.tensors) {
      ++tensors;
      worst = std::max(worst, t.max_relative_error);
    }
    if (!c.report.passed()) failed += " " + c.name;
  }
  for (const auto& [name, config] : gradcheck_configurations()) variants.insert(std::string(variant_name(config.variant)));

  const bool ok = failed.empty() && variants.size() == 4 && elapsed < 60.0;
  return verdict(ok, fmt("%zu checks, %zu tensors over %zu variants, worst rel err %.2e (< 1e-4), %.1f s%s",
                         checks.size(), tensors, variants.size(), worst, elapsed,
                         failed.empty() ? "" : (" failed:" + failed).c_str()));
}

// 2 -----------------------------------------------------------------------------

Outcome identity_reduction() {
  const auto data = synthetic(100, 41);
  ModelConfig leam;
  leam.variant = Variant::leam;
  leam.dim = 16;
  leam.epochs = 2;
  leam.seed = 5;
  ModelConfig reduced = leam;
  reduced.variant = Variant::leam_corr;
  reduced.correlation_init = CorrelationInit::identity;
  reduced.freeze_correlation = true;
  reduced.lambda_corr = 0.0;

  const Model a = train_model(leam, data).model;
  const Model b = train_model(reduced, data).model;
  double worst = 0.0;
  for (const auto& inst : data) {
    const auto sa = a.predict(inst).scores;
    const auto sb = b.predict(inst).scores;
    for (std::size_t k = 0; k < kNumLabels; ++k) worst = std::max(worst, std::abs(sa[k] - sb[k]));
  }
  return verdict(worst <= 1e-12, fmt("100 instances after 2 training epochs, max |score diff| = %.3e (<= 1e-12)", worst));
}

// 3 and 4 -------------------------------------------------------------------------

struct PlantedRun {
  double f1_baseline = 0.0;
  double f1_corr = 0.0;
  std::size_t sign_total = 0;
  std::size_t sign_agree = 0;
  std::size_t sym_total = 0;
  std::size_t sym_agree = 0;
  double seconds = 0.0;
  bool done = false;
};

PlantedRun& planted_run() {
  static PlantedRun run;
  if (run.done) return run;
  const auto start = std::chrono::steady_clock::now();
  const Matrix rho = planted();
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  for (auto seed : seeds) {
    const auto train = synthetic(2000, seed);
    const auto test = synthetic(1000, seed + 1000);
    ModelConfig config;
    config.seed = seed;
    config.variant = Variant::baseline;
    run.f1_baseline += evaluate_model(train_model(config, train).model, test).f1 / seeds.size();
    config.variant = Variant::leam_corr;
    const Model corr = train_model(config, train).model;
    run.f1_corr += evaluate_model(corr, test).f1 / seeds.size();

    const Matrix& g = corr.params().correlation;
    for (std::size_t i = 0; i < kNumLabels; ++i) {
      for (std::size_t j = 0; j < kNumLabels; ++j) {
        if (i == j || std::abs(rho(i, j)) < 0.3) continue;
        ++run.sign_total;
        run.sign_agree += (g(i, j) > 0) == (rho(i, j) > 0) && g(i, j) != 0.0;
        if (i < j) {
          const double sym = g(i, j) + g(j, i);
          ++run.sym_total;
          run.sym_agree += (sym > 0) == (rho(i, j) > 0) && sym != 0.0;
        }
      }
    }
  }
  run.seconds = seconds_since(start);
  run.done = true;
  return run;
}

Outcome planted_benefit() {
  const auto& r = planted_run();
  const double gain = 100.0 * (r.f1_corr - r.f1_baseline);
  return verdict(gain >= 1.0 && r.seconds < 300.0,
                 fmt("mean micro-F1 over 5 seeds: leam_corr %.2f vs baseline %.2f, gain %+.2f points (>= 1.00), %.1f s",
                     100.0 * r.f1_corr, 100.0 * r.f1_baseline, gain, r.seconds));
}

Outcome correlation_recovery() {
  const auto& r = planted_run();
  const double frac = static_cast<double>(r.sign_agree) / static_cast<double>(r.sign_total);
  return verdict(frac >= 0.8, fmt("sign(G_ij) matches planted sign on %zu/%zu entries (%.0f%%, >= 80%%); "
                                  "symmetrized G: %zu/%zu pairs",
                                  r.sign_agree, r.sign_total, 100.0 * frac, r.sym_agree, r.sym_total));
}

// 5 -----------------------------------------------------------------------------

std::vector<std::uint64_t> non_correlation_hashes(const Model& model) {
  std::vector<std::uint64_t> out;
  for (const auto& [name, m] : model.params().tensors())
    if (name != "correlation") out.push_back(content_hash(*m));
  return out;
}

Outcome semi_supervision() {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double mean_reduction = 0.0;
  bool frozen_ok = true;
  std::size_t reg_steps_checked = 0;
  std::string per_seed;
  for (auto seed : seeds) {
    const auto train = synthetic(2000, seed);
    const auto unlabeled = strip_labels(synthetic(4000, seed + 2000));
    const auto held_out = strip_labels(synthetic(500, seed + 3000));

    ModelConfig config;
    config.variant = Variant::leam_corr_semi;
    config.seed = seed;
    std::vector<Instance> vocab_source = train;
    vocab_source.insert(vocab_source.end(), unlabeled.begin(), unlabeled.end());
    Model model(config, build_vocabulary(vocab_source, config));
    const auto labels = gold_labels(train);
    Rng rng(seed);
    model.initialize(rng, nullptr, &labels);

    // Supervised warm start at the default epoch count, then one semi-supervised epoch.
    Trainer trainer(model);
    for (std::size_t e = 0; e < config.epochs; ++e) trainer.supervised_epoch(train);
    const double before = model.regularization_loss(held_out, nullptr);
    trainer.semi_supervised_epoch(train, unlabeled);
    const double after = model.regularization_loss(held_out, nullptr);
    const double reduction = (before - after) / std::abs(before);
    mean_reduction += reduction / seeds.size();
    per_seed += fmt(" %.0f%%", 100.0 * reduction);

    for (std::size_t b = 0; b < 10; ++b) {
      const std::span<const Instance> batch(unlabeled.data() + b * config.batch_size, config.batch_size);
      const auto hashes = non_correlation_hashes(model);
      const auto g_before = content_hash(model.params().correlation);
      trainer.regularization_step(batch);
      frozen_ok = frozen_ok && hashes == non_correlation_hashes(model) &&
                  g_before != content_hash(model.params().correlation);
      ++reg_steps_checked;
    }
  }
  const double elapsed = seconds_since(start);
  return verdict(mean_reduction >= 0.2 && frozen_ok && elapsed < 300.0,
                 fmt("after a %zu-epoch supervised warm start, held-out reg_loss reduced by %.1f%% on average (>= 20%%; per seed:%s); "
                     "%zu correlation-only steps left all other tensors hash-identical: %s, %.1f s",
                     ModelConfig{}.epochs, 100.0 * mean_reduction, per_seed.c_str(), reg_steps_checked, frozen_ok ? "yes" : "NO",
                     elapsed));
}

// 6 -----------------------------------------------------------------------------

MetricReport brute_force_prf(const std::vector<LabelVector>& gold, const std::vector<LabelVector>& pred) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i)
    for (std::size_t k = 0; k < kNumLabels; ++k) {
      if (gold[i][k] == 1 && pred[i][k] == 1) ++tp;
      if (gold[i][k] == 0 && pred[i][k] == 1) ++fp;
      if (gold[i][k] == 1 && pred[i][k] == 0) ++fn;
    }
  MetricReport r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  r.precision = tp + fp ? double(tp) / double(tp + fp) : 0.0;
  r.recall = tp + fn ? double(tp) / double(tp + fn) : 0.0;
  r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

std::vector<LabelVector> random_labels(Rng& rng, std::size_t n, double p) {
  std::vector<LabelVector> out(n, LabelVector(kNumLabels, 0));
  for (auto& row : out)
    for (auto& v : row) v = rng.uniform() < p ? 1 : 0;
  return out;
}

Outcome metric_oracle() {
  Rng rng(2024);
  std::size_t mismatches = 0;
  for (int c = 0; c < 1000; ++c) {
    const std::size_t n = 1 + rng.below(40);
    const double p = rng.uniform();
    const auto gold = random_labels(rng, n, p);
    const auto pred = random_labels(rng, n, rng.uniform());
    const MetricReport a = micro_prf(gold, pred);
    const MetricReport b = brute_force_prf(gold, pred);
    if (a.tp != b.tp || a.fp != b.fp || a.fn != b.fn || a.precision != b.precision || a.recall != b.recall ||
        a.f1 != b.f1)
      ++mismatches;
  }

  // Report formats through the command line.
  const fs::path dir = workdir() / "metrics";
  fs::create_directories(dir);
  auto data = synthetic(60, 77);
  const auto pred_labels = random_labels(rng, data.size(), 0.5);
  {
    std::ofstream gold(dir / "gold.jsonl"), pred(dir / "pred.jsonl");
    for (std::size_t i = 0; i < data.size(); ++i) {
      gold << instance_to_json(data[i]).dump() << '\n';
      pred << json{{"story_id", data[i].story_id}, {"line", data[i].line}, {"character", data[i].character},
                   {"labels", label_names(pred_labels[i])}}
                  .dump()
           << '\n';
    }
  }
  const MetricReport expected = micro_prf(gold_labels(data), pred_labels);
  std::ostringstream out, err;
  const std::vector<std::string> base{"evaluate", "--gold", (dir / "gold.jsonl").string(), "--pred",
                                      (dir / "pred.jsonl").string()};
  const int rc_json = cli::run(base, out, err);
  const MetricReport from_json = metrics_from_json(json::parse(out.str()));
  const bool json_ok = rc_json == 0 && from_json.tp == expected.tp && from_json.fp == expected.fp &&
                       from_json.fn == expected.fn && from_json.f1 == expected.f1 &&
                       from_json.precision == expected.precision && from_json.recall == expected.recall;

  std::ostringstream table, terr;
  auto args = base;
  args.insert(args.end(), {"--format", "table", "--name", "Random"});
  const int rc_table = cli::run(args, table, terr);
  const std::string expected_table = metrics_table_header() + "\n" + metrics_table_row("Random", expected) + "\n";
  std::string row;
  {
    std::istringstream lines(table.str());
    std::getline(lines, row);
    std::getline(lines, row);
  }
  double p = -1, r = -1, f = -1;
  char name[64] = {};
  const bool parsed = std::sscanf(row.c_str(), "%63[^|]| %lf | %lf | %lf", name, &p, &r, &f) == 4;
  const bool table_ok = rc_table == 0 && table.str() == expected_table && parsed &&
                        std::abs(p - 100.0 * expected.precision) <= 0.005 &&
                        std::abs(r - 100.0 * expected.recall) <= 0.005 && std::abs(f - 100.0 * expected.f1) <= 0.005;

  return verdict(mismatches == 0 && json_ok && table_ok,
                 fmt("%zu/1000 mismatches against brute-force counter; CLI json round trip %s; table row '%s' %s",
                     mismatches, json_ok ? "exact" : "MISMATCH", row.c_str(), table_ok ? "round-trips" : "MISMATCH"));
}

// 7 -----------------------------------------------------------------------------

/// Exact two-sided p over all 2^n swap assignments (counts every assignment,
/// including the identity, matching the add-one convention).
double exact_p(const std::vector<LabelVector>& a, const std::vector<LabelVector>& b,
               const std::vector<LabelVector>& gold) {
  const std::size_t n = gold.size();
  const double observed = std::abs(brute_force_prf(gold, a).f1 - brute_force_prf(gold, b).f1);
  std::size_t extreme = 0;
  for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
    auto x = a, y = b;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1) std::swap(x[i], y[i]);
    if (std::abs(brute_force_prf(gold, x).f1 - brute_force_prf(gold, y).f1) >= observed - 1e-12) ++extreme;
  }
  return static_cast<double>(extreme) / static_cast<double>(1ULL << n);
}

Outcome significance() {
  Rng rng(99);
  const auto gold = random_labels(rng, 200, 0.5);
  const auto same = random_labels(rng, 200, 0.5);
  const double p_same = randomization_test(same, same, gold, 100000, 7).p_value;

  std::string detail = fmt("identical systems p = %.3f; fixtures:", p_same);
  bool ok = p_same == 1.0;
  for (std::size_t n : {10, 11, 12}) {
    const auto g = random_labels(rng, n, 0.5);
    auto a = g;
    for (auto& row : a)  // system A: mostly right
      for (auto& v : row)
        if (rng.uniform() < 0.15) v ^= 1;
    const auto b = random_labels(rng, n, 0.5);  // system B: random
    const double exact = exact_p(a, b, g);
    const double sampled = randomization_test(a, b, g, 100000, 1000 + n).p_value;
    ok = ok && std::abs(sampled - exact) <= 0.02;
    detail += fmt(" n=%zu exact %.4f sampled %.4f;", n, exact, sampled);
  }
  detail += " (tolerance 0.02)";
  return verdict(ok, detail);
}

// 8 -----------------------------------------------------------------------------

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (rng.uniform() < 0.05) continue;  // zero rows exercise the guard
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = rng.normal() * std::exp(rng.uniform(-3.0, 3.0));
  }
  return m;
}

Outcome attention_properties() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(8);
  std::size_t h_bad = 0, sum_bad = 0, hull_bad = 0, shift_bad = 0;
  double worst_sum = 0.0, worst_shift = 0.0;
  const std::size_t windows[] = {1, 3, 5};
  for (int c = 0; c < 10000; ++c) {
    const std::size_t k = 1 + rng.below(8), t = 1 + rng.below(12), d = 1 + rng.below(6);
    const std::size_t w = windows[rng.below(3)];
    const Matrix labels = random_matrix(rng, k, d);
    const Matrix states = random_matrix(rng, t, d);
    const Matrix h = compatibility(labels, states);
    for (double v : h.values()) h_bad += !(v >= -1.0 && v <= 1.0);

    const AttentionResult res = attend(h, states, w);
    double total = 0.0;
    for (double a : res.weights) {
      total += a;
      sum_bad += a < 0.0;
    }
    worst_sum = std::max(worst_sum, std::abs(total - 1.0));
    sum_bad += std::abs(total - 1.0) > 1e-12;

    for (std::size_t col = 0; col < d; ++col) {
      double lo = states(0, col), hi = states(0, col);
      for (std::size_t r = 1; r < t; ++r) {
        lo = std::min(lo, states(r, col));
        hi = std::max(hi, states(r, col));
      }
      const double slack = 1e-12 * std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
      hull_bad += res.representation[col] < lo - slack || res.representation[col] > hi + slack;
    }

    const double shift = rng.uniform(-5.0, 5.0);
    std::vector<double> moved = res.scores;
    for (auto& u : moved) u += shift;
    const auto alpha = softmax(moved);
    if (w == 1) {
      Matrix h_shift = h;
      for (auto& v : h_shift.values()) v += shift;
      const auto via_h = attend(h_shift, states, 1).weights;
      for (std::size_t i = 0; i < t; ++i) worst_shift = std::max(worst_shift, std::abs(via_h[i] - res.weights[i]));
    }
    for (std::size_t i = 0; i < t; ++i) worst_shift = std::max(worst_shift, std::abs(alpha[i] - res.weights[i]));
  }
  shift_bad = worst_shift > 1e-12;
  const double elapsed = seconds_since(start);
  const bool ok = h_bad == 0 && sum_bad == 0 && hull_bad == 0 && shift_bad == 0 && elapsed < 30.0;
  return verdict(ok, fmt("10000 cases: H out of range %zu, max |sum(alpha)-1| %.1e, envelope violations %zu, "
                         "max shift deviation %.1e, %.2f s",
                         h_bad, worst_sum, hull_bad, worst_shift, elapsed));
}

// 9 -----------------------------------------------------------------------------

Outcome dataset_signs(const std::string& path) {
  if (path.empty()) {
    return {Outcome::Status::skip,
            "no annotated emotion dataset supplied (pass a labeled JSONL path or set LSEM_EMOTION_DATA)"};
  }
  std::ostringstream out, err;
  const int rc = cli::run({"corr", "--input", path}, out, err);
  if (rc != 0) return fail("corr failed: " + err.str());
  const json m = json::parse(out.str()).at("matrix");
  const double joy_sad = m.at("joy").at("sadness").get<double>();
  const double joy_trust = m.at("joy").at("trust").get<double>();
  return verdict(joy_sad < 0.0 && joy_trust > 0.0,
                 fmt("rho(joy,sadness) = %.3f (< 0), rho(joy,trust) = %.3f (> 0)", joy_sad, joy_trust));
}

}  // namespace

int main(int argc, char** argv) {
  std::string data_path = argc > 1 ? argv[1] : "";
  if (data_path.empty())
    if (const char* env = std::getenv("LSEM_EMOTION_DATA")) data_path = env;

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient integrity", gradient_integrity},
      {"identity reduction", identity_reduction},
      {"planted-correlation benefit", planted_benefit},
      {"correlation recovery", correlation_recovery},
      {"semi-supervision effect", semi_supervision},
      {"metric oracle equivalence", metric_oracle},
      {"significance test", significance},
      {"attention properties", attention_properties},
      {"dataset correlation signs", [&] { return dataset_signs(data_path); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const char* tag = o.status == Outcome::Status::pass ? "PASS" : o.status == Outcome::Status::skip ? "SKIP" : "FAIL";
    failures += o.status == Outcome::Status::fail;
    std::cout << "[" << tag << "] " << (i + 1) << " " << criteria[i].first << ": " << o.detail << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria met" : std::to_string(failures) + " criterion(s) failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
