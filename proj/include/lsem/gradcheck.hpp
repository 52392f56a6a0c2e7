#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lsem/model.hpp"

namespace lsem {

enum class Objective { supervised, regularizer };

struct ModelGradCheck {
  std::string name;  // configuration label
  Objective objective = Objective::supervised;
  GradCheckReport report;
};

/// Tiny labeled batch over a 20-entry vocabulary (17 words plus the reserved
/// tokens), every plain input at most 6 tokens long.
std::vector<Instance> tiny_fixture_instances();

/// Configurations covering every variant and input/pooling option at d=8.
std::vector<std::pair<std::string, ModelConfig>> gradcheck_configurations();

/// Model over the tiny fixture with weights spread wider than the training
/// initialization so that no gradient is trivially small, and an asymmetric G
/// with mixed-sign couplings.
Model tiny_fixture_model(const ModelConfig& config, std::uint64_t seed);

/// Checks every tensor of `model` for one objective on `batch`.
GradCheckReport check_model_gradients(Model& model, const std::vector<Instance>& batch,
                                      Objective objective, double epsilon = 1e-5,
                                      double tolerance = 1e-4);

/// Runs every configuration (the semi-supervised one for both objectives).
std::vector<ModelGradCheck> run_gradcheck_suite(std::uint64_t seed = 7, double epsilon = 1e-5,
                                                double tolerance = 1e-4);

}  // namespace lsem
