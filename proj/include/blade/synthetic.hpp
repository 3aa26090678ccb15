#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "blade/core.hpp"
#include "blade/projection.hpp"

namespace blade {

// Stand-in for the LLM stack: knowledge utility is a Gaussian bump
// exp(-||e - t||^2 / (2 s^2)) around a hidden target embedding t, and each
// question is answered correctly once the utility clears its threshold or the
// knowledge carries its fact token.
struct SyntheticTask {
  Eigen::VectorXd target;
  double bandwidth = 1.0;
  std::map<std::string, double> thresholds;
  std::map<std::string, std::string> fact_tokens;
  std::uint64_t seed = 0;

  double threshold_for(const std::string& example_id) const;
  const std::string& fact_token_for(const std::string& example_id) const;
};

// Throws DimMismatch when the flattened embedding length differs from t.
double utility(const SyntheticTask& task, const SoftEmbedding& embedding);
double utility(const SyntheticTask& task, const Eigen::VectorXd& flat_embedding);

struct FixtureSpec {
  std::size_t n_questions = 64;
  std::size_t d = 10;
  std::size_t n_tokens = 5;
  std::size_t hidden_dim = 2048;
  std::uint64_t seed = 0;
  std::uint64_t projection_seed = 0;
  // Bandwidth in low-dimensional units; s = bandwidth_scale * sqrt(D / 3),
  // the typical embedding distance per unit of prompt distance.
  double bandwidth_scale = 6.0;
  // The reachable optimum p† is drawn uniformly from [-optimum_radius, optimum_radius]^d.
  double optimum_radius = 2.5;
};

struct SyntheticFixture {
  FixtureSpec spec;
  ProjectionMatrix projection;
  SyntheticTask task;
  std::vector<McqExample> batch;
  LowDimPrompt optimum;
};

std::string make_fact_token(const std::string& example_id, std::uint64_t seed);

// Thresholds uniform on [0.2, 0.8] and fact tokens for an existing question set.
SyntheticTask make_task(const ProjectionMatrix& projection, const LowDimPrompt& optimum,
                        const std::vector<McqExample>& examples, double bandwidth_scale, std::uint64_t seed);

// Builds the projection from spec.projection_seed, samples p† and sets
// t = (p†)^T A so that the optimum is reachable and scores 1.0.
SyntheticFixture make_fixture(const FixtureSpec& spec);

// Synthetic multiple-choice questions with ids "syn-0001", ... Subsets
// alternate between "KD" and "CA"; roughly one question in five has two answers.
std::vector<McqExample> make_synthetic_questions(std::size_t count, std::uint64_t seed);

// The optimum prompt, bandwidth and per-question tables; the target is
// rebuilt from the projection on load.
nlohmann::json to_json(const SyntheticTask& task, const LowDimPrompt& optimum);
SyntheticTask task_from_json(const nlohmann::json& doc, const ProjectionMatrix& projection);

}  // namespace blade
