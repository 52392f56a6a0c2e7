#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "lsem/data.hpp"
#include "lsem/numerics.hpp"

namespace lsem {

struct MetricReport {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  bool operator==(const MetricReport&) const = default;
};

/// P/R/F1 from pooled counts, with 0/0 read as 0.
MetricReport metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

/// Micro-averaged metrics over every (instance, label) cell.
MetricReport micro_prf(const std::vector<LabelVector>& gold, const std::vector<LabelVector>& pred);

nlohmann::json metrics_to_json(const MetricReport& report);
MetricReport metrics_from_json(const nlohmann::json& j);

/// One table row: "<name> | P | R | F1" with percentages to two decimals.
std::string metrics_table_row(const std::string& name, const MetricReport& report);
std::string metrics_table_header();

std::vector<LabelVector> threshold_scores(const std::vector<std::vector<double>>& scores, double threshold);

struct ThresholdChoice {
  double threshold = 0.5;
  MetricReport report;
};

/// Best micro-F1 over the grid. Ties go to 0.5 when it is in the grid, then
/// to the lowest threshold.
ThresholdChoice threshold_sweep(const std::vector<LabelVector>& gold,
                                const std::vector<std::vector<double>>& scores,
                                const std::vector<double>& grid);

/// Pearson correlation between label columns (the phi coefficient for 0/1
/// data). A constant column gets an all-zero row and column, diagonal
/// included; its index is appended to `constant_columns` when given.
Matrix empirical_correlations(const std::vector<LabelVector>& labels,
                              std::vector<std::size_t>* constant_columns = nullptr);

struct SignificanceResult {
  double observed = 0.0;  // F1(A) - F1(B)
  double f1_a = 0.0;
  double f1_b = 0.0;
  std::size_t permutations = 0;
  std::size_t at_least_as_extreme = 0;
  double p_value = 1.0;
};

/// Two-sided approximate randomization test on the micro-F1 difference.
/// Each permutation swaps the two systems' prediction vectors per instance
/// with probability 1/2; p = (1 + #{|stat| >= |observed|}) / (1 + N).
/// With threads > 1 the permutations are split into per-thread streams
/// seeded from (seed, thread ordinal); threads == 1 uses a single stream.
SignificanceResult randomization_test(const std::vector<LabelVector>& preds_a,
                                      const std::vector<LabelVector>& preds_b,
                                      const std::vector<LabelVector>& gold,
                                      std::size_t permutations, std::uint64_t seed,
                                      std::size_t threads = 1);

}  // namespace lsem
