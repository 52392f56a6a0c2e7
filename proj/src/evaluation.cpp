#include "lsem/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <thread>

namespace lsem {

MetricReport metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  MetricReport r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  const double t = static_cast<double>(tp);
  r.precision = tp + fp == 0 ? 0.0 : t / static_cast<double>(tp + fp);
  r.recall = tp + fn == 0 ? 0.0 : t / static_cast<double>(tp + fn);
  r.f1 = r.precision + r.recall == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

MetricReport micro_prf(const std::vector<LabelVector>& gold, const std::vector<LabelVector>& pred) {
  if (gold.size() != pred.size()) {
    throw std::invalid_argument("micro_prf: " + std::to_string(gold.size()) + " gold rows but " +
                                std::to_string(pred.size()) + " predicted rows");
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].size() != pred[i].size()) throw std::invalid_argument("micro_prf: label count mismatch");
    for (std::size_t k = 0; k < gold[i].size(); ++k) {
      const bool g = gold[i][k] != 0;
      const bool p = pred[i][k] != 0;
      tp += g && p;
      fp += !g && p;
      fn += g && !p;
    }
  }
  return metrics_from_counts(tp, fp, fn);
}

nlohmann::json metrics_to_json(const MetricReport& r) {
  return {{"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1},
          {"tp", r.tp},               {"fp", r.fp},         {"fn", r.fn}};
}

MetricReport metrics_from_json(const nlohmann::json& j) {
  MetricReport r;
  try {
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.tp = j.at("tp").get<std::size_t>();
    r.fp = j.at("fp").get<std::size_t>();
    r.fn = j.at("fn").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed metric report: ") + e.what());
  }
  return r;
}

std::string metrics_table_header() { return "Model | Precision | Recall | F1"; }

std::string metrics_table_row(const std::string& name, const MetricReport& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, " | %.2f | %.2f | %.2f", 100.0 * r.precision, 100.0 * r.recall,
                100.0 * r.f1);
  return name + buf;
}

std::vector<LabelVector> threshold_scores(const std::vector<std::vector<double>>& scores, double threshold) {
  std::vector<LabelVector> out;
  out.reserve(scores.size());
  for (const auto& row : scores) {
    LabelVector y(row.size(), 0);
    for (std::size_t k = 0; k < row.size(); ++k) y[k] = row[k] >= threshold ? 1 : 0;
    out.push_back(std::move(y));
  }
  return out;
}

ThresholdChoice threshold_sweep(const std::vector<LabelVector>& gold,
                                const std::vector<std::vector<double>>& scores,
                                const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("threshold_sweep: empty grid");
  auto better = [](const ThresholdChoice& cand, const ThresholdChoice& best) {
    if (cand.report.f1 != best.report.f1) return cand.report.f1 > best.report.f1;
    if ((cand.threshold == 0.5) != (best.threshold == 0.5)) return cand.threshold == 0.5;
    return cand.threshold < best.threshold;
  };
  ThresholdChoice best;
  bool first = true;
  for (double t : grid) {
    ThresholdChoice cand{t, micro_prf(gold, threshold_scores(scores, t))};
    if (first || better(cand, best)) best = cand;
    first = false;
  }
  return best;
}

Matrix empirical_correlations(const std::vector<LabelVector>& labels,
                              std::vector<std::size_t>* constant_columns) {
  const std::size_t k = labels.empty() ? kNumLabels : labels.front().size();
  const double n = static_cast<double>(labels.size());
  std::vector<double> mean(k, 0.0);
  for (const auto& row : labels) {
    if (row.size() != k) throw std::invalid_argument("empirical_correlations: ragged label rows");
    for (std::size_t i = 0; i < k; ++i) mean[i] += row[i];
  }
  for (auto& m : mean) m = labels.empty() ? 0.0 : m / n;

  Matrix cov(k, k);
  for (const auto& row : labels)
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = i; j < k; ++j) cov(i, j) += (row[i] - mean[i]) * (row[j] - mean[j]);

  Matrix rho(k, k);
  std::vector<bool> constant(k);
  for (std::size_t i = 0; i < k; ++i) {
    constant[i] = !(cov(i, i) > 0.0);
    if (constant[i] && constant_columns) constant_columns->push_back(i);
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (constant[i]) continue;
    rho(i, i) = 1.0;
    for (std::size_t j = i + 1; j < k; ++j) {
      if (constant[j]) continue;
      const double r = std::clamp(cov(i, j) / std::sqrt(cov(i, i) * cov(j, j)), -1.0, 1.0);
      rho(i, j) = r;
      rho(j, i) = r;
    }
  }
  return rho;
}

namespace {

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

Counts cell_counts(const LabelVector& gold, const LabelVector& pred) {
  if (gold.size() != pred.size()) throw std::invalid_argument("randomization_test: label count mismatch");
  Counts c;
  for (std::size_t k = 0; k < gold.size(); ++k) {
    const bool g = gold[k] != 0;
    const bool p = pred[k] != 0;
    c.tp += g && p;
    c.fp += !g && p;
    c.fn += g && !p;
  }
  return c;
}

double f1_of(const Counts& c) { return metrics_from_counts(c.tp, c.fp, c.fn).f1; }

// Number of permutations, out of `count`, whose |statistic| reaches `threshold`.
std::size_t count_extreme(const std::vector<Counts>& a, const std::vector<Counts>& b, std::size_t count,
                          std::uint64_t stream_seed, double threshold) {
  Rng rng(stream_seed);
  std::size_t extreme = 0;
  const std::size_t n = a.size();
  for (std::size_t p = 0; p < count; ++p) {
    Counts ca, cb;
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i % 64 == 0) bits = rng.next_u64();
      const bool swap = (bits >> (i % 64)) & 1U;
      const Counts& x = swap ? b[i] : a[i];
      const Counts& y = swap ? a[i] : b[i];
      ca.tp += x.tp; ca.fp += x.fp; ca.fn += x.fn;
      cb.tp += y.tp; cb.fp += y.fp; cb.fn += y.fn;
    }
    if (std::abs(f1_of(ca) - f1_of(cb)) >= threshold) ++extreme;
  }
  return extreme;
}

}  // namespace

SignificanceResult randomization_test(const std::vector<LabelVector>& preds_a,
                                      const std::vector<LabelVector>& preds_b,
                                      const std::vector<LabelVector>& gold,
                                      std::size_t permutations, std::uint64_t seed,
                                      std::size_t threads) {
  if (preds_a.size() != gold.size() || preds_b.size() != gold.size()) {
    throw std::invalid_argument("randomization_test: prediction lists are not aligned with gold");
  }
  if (permutations == 0) throw std::invalid_argument("randomization_test: permutations must be >= 1");
  if (threads == 0) threads = 1;

  std::vector<Counts> a, b;
  Counts total_a, total_b;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    a.push_back(cell_counts(gold[i], preds_a[i]));
    b.push_back(cell_counts(gold[i], preds_b[i]));
    total_a.tp += a.back().tp; total_a.fp += a.back().fp; total_a.fn += a.back().fn;
    total_b.tp += b.back().tp; total_b.fp += b.back().fp; total_b.fn += b.back().fn;
  }

  SignificanceResult res;
  res.f1_a = f1_of(total_a);
  res.f1_b = f1_of(total_b);
  res.observed = res.f1_a - res.f1_b;
  res.permutations = permutations;
  // Absorb round-off so that permutations reproducing the observed split
  // (or its mirror) always count as ties.
  const double threshold = std::abs(res.observed) - 1e-12;

  if (threads == 1) {
    res.at_least_as_extreme = count_extreme(a, b, permutations, seed, threshold);
  } else {
    std::vector<std::size_t> partial(threads, 0);
    std::vector<std::thread> workers;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t share = permutations / threads + (t < permutations % threads ? 1 : 0);
      workers.emplace_back([&, t, share] {
        partial[t] = count_extreme(a, b, share, Rng::derive_seed(seed, t), threshold);
      });
    }
    for (auto& w : workers) w.join();
    for (auto c : partial) res.at_least_as_extreme += c;
  }
  res.p_value = static_cast<double>(1 + res.at_least_as_extreme) / static_cast<double>(1 + permutations);
  return res;
}

}  // namespace lsem
