#include "blade/synthetic.hpp"

#include <cmath>
#include <cstdio>

#include "blade/error.hpp"
#include "blade/rng.hpp"

namespace blade {

namespace {

constexpr double kThresholdLow = 0.2;
constexpr double kThresholdHigh = 0.8;

}  // namespace

double SyntheticTask::threshold_for(const std::string& example_id) const {
  const auto it = thresholds.find(example_id);
  if (it == thresholds.end()) {
    throw Error(Errc::ValidationError, "synthetic task has no threshold for " + example_id);
  }
  return it->second;
}

const std::string& SyntheticTask::fact_token_for(const std::string& example_id) const {
  const auto it = fact_tokens.find(example_id);
  if (it == fact_tokens.end()) {
    throw Error(Errc::ValidationError, "synthetic task has no fact token for " + example_id);
  }
  return it->second;
}

double utility(const SyntheticTask& task, const Eigen::VectorXd& flat_embedding) {
  if (flat_embedding.size() != task.target.size()) {
    throw Error(Errc::DimMismatch, "embedding length " + std::to_string(flat_embedding.size()) +
                                       " != target length " + std::to_string(task.target.size()));
  }
  return std::exp(-(flat_embedding - task.target).squaredNorm() / (2.0 * task.bandwidth * task.bandwidth));
}

double utility(const SyntheticTask& task, const SoftEmbedding& embedding) { return utility(task, embedding.flat()); }

std::string make_fact_token(const std::string& example_id, std::uint64_t seed) {
  char suffix[17];
  std::snprintf(suffix, sizeof(suffix), "%016llx",
                static_cast<unsigned long long>(mix_seed(seed, stable_hash(example_id))));
  return "[[FACT:" + example_id + ":" + std::string(suffix, 8) + "]]";
}

SyntheticTask make_task(const ProjectionMatrix& projection, const LowDimPrompt& optimum,
                        const std::vector<McqExample>& examples, double bandwidth_scale, std::uint64_t seed) {
  if (!(bandwidth_scale > 0.0)) {
    throw Error(Errc::InvalidConfig, "bandwidth scale must be positive");
  }
  SyntheticTask task;
  task.seed = seed;
  task.target = project_flat(projection, optimum);
  task.bandwidth = bandwidth_scale * std::sqrt(static_cast<double>(projection.full_dim()) / 3.0);
  for (const auto& example : examples) {
    Rng rng(mix_seed(seed, stable_hash(example.id())));
    task.thresholds[example.id()] = rng.uniform(kThresholdLow, kThresholdHigh);
    task.fact_tokens[example.id()] = make_fact_token(example.id(), seed);
  }
  return task;
}

std::vector<McqExample> make_synthetic_questions(std::size_t count, std::uint64_t seed) {
  std::vector<McqExample> out;
  out.reserve(count);
  Rng rng(mix_seed(seed, 7));
  for (std::size_t i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "syn-%04zu", i + 1);
    std::vector<OptionEntry> options;
    for (char label = 'A'; label <= 'D'; ++label) {
      options.push_back({label, std::string("Option ") + label + " for question " + std::to_string(i + 1)});
    }
    LabelSet golden;
    golden.insert(static_cast<char>('A' + rng.below(4)));
    if (rng.below(5) == 0) {
      golden.insert(static_cast<char>('A' + rng.below(4)));
    }
    out.emplace_back(id, "Synthetic question " + std::to_string(i + 1) + ": which statement applies to case " + id + "?",
                     std::move(options), golden, std::string(i % 2 == 0 ? "KD" : "CA"), "en");
  }
  return out;
}

SyntheticFixture make_fixture(const FixtureSpec& spec) {
  if (spec.n_questions == 0) {
    throw Error(Errc::InvalidConfig, "fixture needs at least one question");
  }
  ProjectionMatrix projection(spec.d, spec.n_tokens * spec.hidden_dim, spec.projection_seed);
  Rng rng(mix_seed(spec.seed, 3));
  Eigen::VectorXd optimum(static_cast<Eigen::Index>(spec.d));
  for (Eigen::Index i = 0; i < optimum.size(); ++i) {
    optimum[i] = rng.uniform(-spec.optimum_radius, spec.optimum_radius);
  }
  LowDimPrompt optimum_prompt(optimum);
  auto batch = make_synthetic_questions(spec.n_questions, spec.seed);
  auto task = make_task(projection, optimum_prompt, batch, spec.bandwidth_scale, spec.seed);
  return SyntheticFixture{spec, std::move(projection), std::move(task), std::move(batch), std::move(optimum_prompt)};
}

nlohmann::json to_json(const SyntheticTask& task, const LowDimPrompt& optimum) {
  return {{"seed", task.seed},
          {"bandwidth", task.bandwidth},
          {"optimum", optimum.to_vector()},
          {"thresholds", task.thresholds},
          {"fact_tokens", task.fact_tokens}};
}

SyntheticTask task_from_json(const nlohmann::json& doc, const ProjectionMatrix& projection) {
  SyntheticTask task;
  task.seed = doc.at("seed").get<std::uint64_t>();
  task.bandwidth = doc.at("bandwidth").get<double>();
  task.target = project_flat(projection, LowDimPrompt(doc.at("optimum").get<std::vector<double>>()));
  task.thresholds = doc.at("thresholds").get<std::map<std::string, double>>();
  task.fact_tokens = doc.at("fact_tokens").get<std::map<std::string, std::string>>();
  return task;
}

}  // namespace blade
