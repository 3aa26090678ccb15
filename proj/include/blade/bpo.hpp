#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "blade/cmaes.hpp"
#include "blade/core.hpp"
#include "blade/gp.hpp"
#include "blade/llm/chat.hpp"
#include "blade/projection.hpp"

namespace blade::bpo {

struct BpoConfig {
  std::size_t d = 10;
  std::size_t n_tokens = 5;
  std::size_t hidden_dim = 2048;
  std::size_t max_iterations = 50;
  // Converged once best_so_far improves by less than this for `patience`
  // consecutive successful iterations.
  double convergence_threshold = 0.005;
  std::size_t patience = 5;
  std::size_t batch_size = 64;
  // Draw a fresh evaluation batch every iteration instead of once per run.
  bool resample_batch = false;
  std::uint64_t seed = 0;
  // Defaults to `seed`.
  std::optional<std::uint64_t> projection_seed;
  double box_low = -5.0;
  double box_high = 5.0;
  GpOptions gp;
  std::size_t cma_budget = 2000;
  int concurrency = 1;
  std::string instruction;

  BpoConfig();
  void validate() const;
  std::size_t full_dim() const { return n_tokens * hidden_dim; }
  std::uint64_t effective_projection_seed() const { return projection_seed.value_or(seed); }
  SearchBox search_box() const;

  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static BpoConfig from_json(const nlohmann::json& doc);
};

enum class RunStatus { Running, Converged, BudgetExhausted };
std::string_view status_name(RunStatus status);

struct HistoryEntry {
  std::size_t iteration;
  LowDimPrompt prompt;
  // Unset when evaluation failed twice; such points never enter the GP.
  std::optional<double> score;
  // Unset until the first successful evaluation.
  std::optional<double> best_so_far;
  std::optional<std::string> error;
};

struct BpoRunState {
  ProjectionMatrix projection;
  GpState gp;
  std::vector<HistoryEntry> history;
  RunStatus status = RunStatus::Running;
  std::size_t stall_count = 0;

  std::optional<double> best_score() const;
  // Prompt of the first iteration that attained best_score().
  std::optional<LowDimPrompt> best_prompt() const;
  std::size_t successful_iterations() const;
};

// F(p) for a given iteration; throwing marks the attempt failed.
using Objective = std::function<double(const LowDimPrompt& prompt, std::size_t iteration)>;

struct LlmDeps {
  const ProjectionMatrix* projection = nullptr;
  llm::KnowledgeGenerator* generator = nullptr;
  llm::ChatClient* blackbox = nullptr;
  std::string instruction;
  int concurrency = 1;
};

// Batch accuracy of the black box with knowledge generated from p^T A, one
// generator call per question. Throws EmptyInput on an empty batch and
// EvaluationFailed if any question hit an endpoint error.
double evaluate_objective(const LowDimPrompt& prompt, const LlmDeps& deps, const std::vector<McqExample>& batch);

// Seeded subset of `size` examples (all of them when size >= count), in dataset order.
std::vector<McqExample> sample_batch(const std::vector<McqExample>& examples, std::size_t size, std::uint64_t seed);

// Objective over a batch drawn once from the config seed, or per iteration when resample_batch is set.
Objective make_llm_objective(const BpoConfig& config, LlmDeps deps, std::vector<McqExample> examples);

// Point used when the GP is still empty: uniform in the box from (seed, iteration).
LowDimPrompt random_prompt(const SearchBox& box, std::uint64_t seed, std::size_t iteration);

BpoRunState init_run(const BpoConfig& config);
BpoRunState init_run(const BpoConfig& config, ProjectionMatrix projection);

// One BO iteration: propose (random while the GP is empty, EI + CMA-ES
// afterwards), evaluate with one retry, update GP, history and status.
// Throws InvalidState unless the run is still running.
BpoRunState step(BpoRunState state, const BpoConfig& config, const Objective& objective);

using IterationObserver = std::function<void(const BpoRunState&)>;

// Steps until converged or max_iterations is reached. `stop_after` limits the
// number of iterations executed by this call (the run stays resumable).
BpoRunState run_bpo(const BpoConfig& config, BpoRunState state, const Objective& objective,
                    const IterationObserver& observer = {}, std::optional<std::size_t> stop_after = std::nullopt);
BpoRunState run_bpo(const BpoConfig& config, const Objective& objective);

struct RandomSearchEntry {
  std::size_t iteration;
  LowDimPrompt prompt;
  double score;
  double best_so_far;
};

// Uniform random search over the box with max_iterations evaluations; its
// first point equals the first point of a BPO run with the same config.
std::vector<RandomSearchEntry> run_random_search(const BpoConfig& config, const Objective& objective);

// Columns: iteration, score, best_so_far (empty cells for failed iterations).
std::string history_csv(const BpoRunState& state);

// Best-prompt binary: "BLDP", u32 version, u64 d, then d f64, little-endian.
void save_prompt(const std::filesystem::path& path, const LowDimPrompt& prompt);
LowDimPrompt load_prompt(const std::filesystem::path& path);

nlohmann::json state_to_json(const BpoRunState& state);
BpoRunState state_from_json(const nlohmann::json& doc, const BpoConfig& config, ProjectionMatrix projection);

// Run directory: config.json, projection.bin, gp/iter_NNNN.json,
// history.csv, state.json and best_prompt.bin.
class RunDirectory {
 public:
  explicit RunDirectory(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path config_path() const { return root_ / "config.json"; }
  std::filesystem::path projection_path() const { return root_ / "projection.bin"; }
  std::filesystem::path history_path() const { return root_ / "history.csv"; }
  std::filesystem::path state_path() const { return root_ / "state.json"; }
  std::filesystem::path best_prompt_path() const { return root_ / "best_prompt.bin"; }
  std::filesystem::path gp_path(std::size_t iteration) const;

  void initialize(const BpoConfig& config, const ProjectionMatrix& projection) const;
  // Writes the GP snapshot, history CSV, state and best prompt for the latest iteration.
  void checkpoint(const BpoRunState& state) const;
  bool has_state() const;
  BpoConfig load_config() const;
  BpoRunState load_state(const BpoConfig& config) const;

 private:
  std::filesystem::path root_;
};

}  // namespace blade::bpo
