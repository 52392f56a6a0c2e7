#include "lsem/gradcheck.hpp"

namespace lsem {

std::vector<Instance> tiny_fixture_instances() {
  auto make = [](std::string id, std::int64_t line, Sentence sentence, std::vector<Sentence> context,
                 LabelVector labels) {
    Instance inst;
    inst.story_id = std::move(id);
    inst.line = line;
    inst.character = "Mark";
    inst.sentence = std::move(sentence);
    inst.context = std::move(context);
    inst.labels = std::move(labels);
    return inst;
  };
  return {
      make("g1", 1, {"w0", "w1", "w2"}, {}, {1, 1, 0, 0, 0, 0, 0, 1}),
      make("g2", 2, {"w3", "w4"}, {{"w0", "w5"}}, {0, 0, 1, 0, 1, 0, 0, 0}),
      make("g3", 3, {"w6", "w2", "w1"}, {{"w4"}}, {0, 0, 0, 1, 1, 1, 1, 0}),
      make("g4", 2, {"w5"}, {{"w3", "w6"}}, {1, 0, 0, 0, 0, 0, 0, 0}),
  };
}

std::vector<std::pair<std::string, ModelConfig>> gradcheck_configurations() {
  auto base = [](Variant v) {
    ModelConfig c;
    c.variant = v;
    c.dim = 8;
    c.lambda_corr = 0.7;
    return c;
  };
  std::vector<std::pair<std::string, ModelConfig>> out;
  out.emplace_back("baseline", base(Variant::baseline));
  out.emplace_back("leam", base(Variant::leam));
  out.emplace_back("leam_corr", base(Variant::leam_corr));
  out.emplace_back("leam_corr_semi", base(Variant::leam_corr_semi));
  {
    auto c = base(Variant::leam_corr);
    c.window = 3;
    out.emplace_back("leam_corr window=3", c);
  }
  {
    auto c = base(Variant::leam_corr);
    c.label_embedding = LabelEmbeddingMode::dynamic;
    out.emplace_back("leam_corr dynamic labels", c);
  }
  {
    auto c = base(Variant::leam_corr);
    c.labels_as_input = true;
    out.emplace_back("leam_corr labels_as_input", c);
  }
  {
    auto c = base(Variant::leam);
    c.separate_context = true;
    c.window = 5;
    out.emplace_back("leam separate_context window=5", c);
  }
  {
    auto c = base(Variant::baseline);
    c.separate_context = true;
    c.labels_as_input = true;
    out.emplace_back("baseline separate_context labels_as_input", c);
  }
  return out;
}

Model tiny_fixture_model(const ModelConfig& config, std::uint64_t seed) {
  ModelConfig c = config;
  Vocabulary vocab;
  for (int i = 0; i < 7; ++i) vocab.add("w" + std::to_string(i));
  for (const auto& tok : label_sentence("Mark", 0)) vocab.add(tok);
  for (std::size_t k = 1; k < kNumLabels; ++k) vocab.add(label_sentence("Mark", k)[2]);
  Model model(c, vocab);
  Rng rng(seed);
  for (auto& [name, m] : model.params().tensors()) {
    if (name == "correlation") continue;
    for (auto& v : m->values()) v = rng.uniform(-0.5, 0.5);
  }
  if (model.params().has_correlation()) {
    Matrix& g = model.params().correlation;
    for (std::size_t i = 0; i < kNumLabels; ++i)
      for (std::size_t j = 0; j < kNumLabels; ++j)
        g(i, j) = i == j ? rng.uniform(0.7, 1.3) : rng.uniform(-0.4, 0.4);
  }
  return model;
}

GradCheckReport check_model_gradients(Model& model, const std::vector<Instance>& batch,
                                      Objective objective, double epsilon, double tolerance) {
  std::vector<std::string> names;
  std::vector<Matrix> point;
  for (const auto& [name, m] : model.params().tensors()) {
    names.push_back(name);
    point.push_back(*m);
  }
  const Instance* first = batch.data();
  const std::size_t count = batch.size();
  // Soft targets are constants of the supervised objective; freeze them at the probe centre.
  const Matrix target = model.params().correlation;
  const Matrix* target_ptr = target.size() > 0 ? &target : nullptr;
  DifferentiableLoss loss = [&model, objective, first, count, target_ptr](const std::vector<Matrix>& at,
                                                                           std::vector<Matrix>* grad) {
    auto tensors = model.params().tensors();
    for (std::size_t i = 0; i < tensors.size(); ++i) *tensors[i].second = at[i];
    ModelParams g = model.params().zeros_like();
    std::span<const Instance> b(first, count);
    const double value = objective == Objective::supervised
                             ? model.supervised_loss(b, grad ? &g : nullptr, target_ptr)
                             : model.regularization_loss(b, grad ? &g : nullptr, true);
    if (grad != nullptr) {
      grad->clear();
      for (const auto& [_, m] : g.tensors()) grad->push_back(*m);
    }
    return value;
  };
  GradCheckReport report = grad_check(loss, names, point, epsilon, tolerance);
  auto tensors = model.params().tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) *tensors[i].second = point[i];
  return report;
}

std::vector<ModelGradCheck> run_gradcheck_suite(std::uint64_t seed, double epsilon, double tolerance) {
  const auto batch = tiny_fixture_instances();
  std::vector<ModelGradCheck> out;
  for (const auto& [name, config] : gradcheck_configurations()) {
    Model model = tiny_fixture_model(config, seed);
    out.push_back({name, Objective::supervised,
                   check_model_gradients(model, batch, Objective::supervised, epsilon, tolerance)});
    if (config.variant == Variant::leam_corr_semi) {
      out.push_back({name, Objective::regularizer,
                     check_model_gradients(model, batch, Objective::regularizer, epsilon, tolerance)});
    }
  }
  return out;
}

}  // namespace lsem
