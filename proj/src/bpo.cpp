#include "blade/bpo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "blade/acquisition.hpp"
#include "blade/error.hpp"
#include "blade/eval.hpp"
#include "blade/io.hpp"
#include "blade/llm/prompts.hpp"
#include "blade/rng.hpp"

namespace blade::bpo {

namespace {

constexpr std::uint64_t kStreamRandomPoint = 0x5241'4e44;
constexpr std::uint64_t kStreamBatch = 0x4241'5443;
constexpr std::uint64_t kStreamPropose = 0x5052'4f50;

template <typename T>
void read_key(const nlohmann::json& doc, const char* key, T& out) {
  if (doc.contains(key)) out = doc.at(key).get<T>();
}

}  // namespace

BpoConfig::BpoConfig() : instruction(llm::kKnowledgeInstruction) {
  // Lengthscale matched to the [-5, 5]^d search box.
  gp.kernel.lengthscale = 2.0;
}

void BpoConfig::validate() const {
  if (d == 0 || n_tokens == 0 || hidden_dim == 0 || d >= full_dim())
    throw Error(Errc::InvalidConfig, "require 1 <= d < n_tokens * hidden_dim");
  if (max_iterations == 0) throw Error(Errc::InvalidConfig, "max_iterations must be positive");
  if (!(convergence_threshold >= 0.0)) throw Error(Errc::InvalidConfig, "convergence_threshold must be >= 0");
  if (patience == 0) throw Error(Errc::InvalidConfig, "patience must be positive");
  if (batch_size == 0) throw Error(Errc::InvalidConfig, "batch_size must be positive");
  if (!(box_low < box_high) || !std::isfinite(box_low) || !std::isfinite(box_high))
    throw Error(Errc::InvalidConfig, "search box requires finite low < high");
  if (concurrency < 1) throw Error(Errc::InvalidConfig, "concurrency must be >= 1");
  if (!(gp.noise_variance > 0.0)) throw Error(Errc::InvalidConfig, "noise_variance must be positive");
  gp.kernel.validate();
}

SearchBox BpoConfig::search_box() const { return SearchBox::uniform(d, box_low, box_high); }

nlohmann::json BpoConfig::to_json() const {
  nlohmann::json doc = {
      {"d", d},
      {"n_tokens", n_tokens},
      {"hidden_dim", hidden_dim},
      {"max_iterations", max_iterations},
      {"convergence_threshold", convergence_threshold},
      {"patience", patience},
      {"batch_size", batch_size},
      {"resample_batch", resample_batch},
      {"seed", seed},
      {"box_low", box_low},
      {"box_high", box_high},
      {"signal_variance", gp.kernel.signal_variance},
      {"lengthscale", gp.kernel.lengthscale},
      {"noise_variance", gp.noise_variance},
      {"center_targets", gp.center_targets},
      {"cma_budget", cma_budget},
      {"concurrency", concurrency},
      {"instruction", instruction},
  };
  if (projection_seed) doc["projection_seed"] = *projection_seed;
  return doc;
}

BpoConfig BpoConfig::from_json(const nlohmann::json& doc) {
  static const char* const kKeys[] = {"d",          "n_tokens",      "hidden_dim",     "max_iterations",
                                      "convergence_threshold",       "patience",       "batch_size",
                                      "resample_batch",              "seed",           "projection_seed",
                                      "box_low",    "box_high",      "signal_variance", "lengthscale",
                                      "noise_variance",              "center_targets", "cma_budget",
                                      "concurrency", "instruction"};
  if (!doc.is_object()) throw Error(Errc::InvalidConfig, "optimizer config must be an object");
  for (const auto& item : doc.items()) {
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* k) { return item.key() == k; }) ==
        std::end(kKeys))
      throw Error(Errc::InvalidConfig, "unknown optimizer key '" + item.key() + "'");
  }
  BpoConfig config;
  try {
    read_key(doc, "d", config.d);
    read_key(doc, "n_tokens", config.n_tokens);
    read_key(doc, "hidden_dim", config.hidden_dim);
    read_key(doc, "max_iterations", config.max_iterations);
    read_key(doc, "convergence_threshold", config.convergence_threshold);
    read_key(doc, "patience", config.patience);
    read_key(doc, "batch_size", config.batch_size);
    read_key(doc, "resample_batch", config.resample_batch);
    read_key(doc, "seed", config.seed);
    if (doc.contains("projection_seed") && !doc.at("projection_seed").is_null())
      config.projection_seed = doc.at("projection_seed").get<std::uint64_t>();
    read_key(doc, "box_low", config.box_low);
    read_key(doc, "box_high", config.box_high);
    read_key(doc, "signal_variance", config.gp.kernel.signal_variance);
    read_key(doc, "lengthscale", config.gp.kernel.lengthscale);
    read_key(doc, "noise_variance", config.gp.noise_variance);
    read_key(doc, "center_targets", config.gp.center_targets);
    read_key(doc, "cma_budget", config.cma_budget);
    read_key(doc, "concurrency", config.concurrency);
    read_key(doc, "instruction", config.instruction);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("bad optimizer value: ") + e.what());
  }
  config.validate();
  return config;
}

std::string_view status_name(RunStatus status) {
  switch (status) {
    case RunStatus::Running:
      return "running";
    case RunStatus::Converged:
      return "converged";
    case RunStatus::BudgetExhausted:
      return "budget_exhausted";
  }
  return "unknown";
}

namespace {

RunStatus status_from_name(const std::string& name) {
  if (name == "running") return RunStatus::Running;
  if (name == "converged") return RunStatus::Converged;
  if (name == "budget_exhausted") return RunStatus::BudgetExhausted;
  throw Error(Errc::ParseError, "unknown run status '" + name + "'");
}

}  // namespace

std::optional<double> BpoRunState::best_score() const {
  if (history.empty()) return std::nullopt;
  return history.back().best_so_far;
}

std::optional<LowDimPrompt> BpoRunState::best_prompt() const {
  const auto best = best_score();
  if (!best) return std::nullopt;
  for (const auto& entry : history)
    if (entry.score && *entry.score == *best) return entry.prompt;
  return std::nullopt;
}

std::size_t BpoRunState::successful_iterations() const {
  return static_cast<std::size_t>(
      std::count_if(history.begin(), history.end(), [](const HistoryEntry& e) { return e.score.has_value(); }));
}

double evaluate_objective(const LowDimPrompt& prompt, const LlmDeps& deps, const std::vector<McqExample>& batch) {
  if (batch.empty()) throw Error(Errc::EmptyInput, "evaluation batch is empty");
  if (!deps.projection || !deps.generator || !deps.blackbox)
    throw Error(Errc::InvalidConfig, "objective dependencies are incomplete");
  eval::KnowledgeSource source{deps.generator, deps.projection, &prompt, deps.instruction};
  eval::EvalOptions options;
  options.concurrency = deps.concurrency;
  const auto report = eval::run_eval(*deps.blackbox, source, batch, options);
  if (report.failures > 0) {
    std::string first;
    for (const auto& outcome : report.outcomes)
      if (outcome.error) {
        first = outcome.example_id + ": " + *outcome.error;
        break;
      }
    throw Error(Errc::EvaluationFailed,
                std::to_string(report.failures) + " of " + std::to_string(report.total) + " questions failed (" +
                    first + ")");
  }
  return report.accuracy;
}

std::vector<McqExample> sample_batch(const std::vector<McqExample>& examples, std::size_t size, std::uint64_t seed) {
  if (size >= examples.size()) return examples;
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  // Partial Fisher-Yates, then restore dataset order.
  for (std::size_t i = 0; i < size; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(order.size() - i));
    std::swap(order[i], order[j]);
  }
  order.resize(size);
  std::sort(order.begin(), order.end());
  std::vector<McqExample> batch;
  batch.reserve(size);
  for (auto index : order) batch.push_back(examples[index]);
  return batch;
}

Objective make_llm_objective(const BpoConfig& config, LlmDeps deps, std::vector<McqExample> examples) {
  if (examples.empty()) throw Error(Errc::EmptyInput, "no examples to optimize on");
  const auto seed = config.seed;
  const auto size = config.batch_size;
  if (!config.resample_batch) {
    auto batch = sample_batch(examples, size, mix_seed(seed, kStreamBatch));
    return [deps, batch = std::move(batch)](const LowDimPrompt& prompt, std::size_t) {
      return evaluate_objective(prompt, deps, batch);
    };
  }
  return [deps, examples = std::move(examples), seed, size](const LowDimPrompt& prompt, std::size_t iteration) {
    const auto batch = sample_batch(examples, size, mix_seed(mix_seed(seed, kStreamBatch), iteration));
    return evaluate_objective(prompt, deps, batch);
  };
}

LowDimPrompt random_prompt(const SearchBox& box, std::uint64_t seed, std::size_t iteration) {
  Rng rng(mix_seed(mix_seed(seed, kStreamRandomPoint), iteration));
  Eigen::VectorXd values(box.low.size());
  for (Eigen::Index i = 0; i < values.size(); ++i) values[i] = rng.uniform(box.low[i], box.high[i]);
  return LowDimPrompt(std::move(values));
}

BpoRunState init_run(const BpoConfig& config) {
  config.validate();
  return init_run(config, ProjectionMatrix(config.d, config.full_dim(), config.effective_projection_seed()));
}

BpoRunState init_run(const BpoConfig& config, ProjectionMatrix projection) {
  config.validate();
  if (projection.low_dim() != config.d || projection.full_dim() != config.full_dim())
    throw Error(Errc::DimMismatch, "projection shape does not match the config");
  return BpoRunState{std::move(projection), GpState(config.gp), {}, RunStatus::Running, 0};
}

BpoRunState step(BpoRunState state, const BpoConfig& config, const Objective& objective) {
  if (state.status != RunStatus::Running)
    throw Error(Errc::InvalidState, "run is already " + std::string(status_name(state.status)));
  const std::size_t iteration = state.history.size() + 1;
  const auto box = config.search_box();

  std::optional<LowDimPrompt> candidate;
  if (state.gp.empty()) {
    candidate = random_prompt(box, config.seed, iteration);
  } else {
    AcquisitionContext context;
    context.gp = &state.gp;
    context.search_box = box;
    context.cma_budget = config.cma_budget;
    context.seed = mix_seed(mix_seed(config.seed, kStreamPropose), iteration);
    candidate = propose_next(context).prompt;
  }

  std::optional<double> score;
  std::optional<std::string> error;
  for (int attempt = 0; attempt < 2 && !score; ++attempt) {
    try {
      const double value = objective(*candidate, iteration);
      if (!std::isfinite(value)) throw Error(Errc::NonFinite, "objective returned a non-finite value");
      score = value;
      error.reset();
    } catch (const std::exception& e) {
      error = e.what();
    }
  }

  const auto previous_best = state.best_score();
  std::optional<double> best = previous_best;
  if (score) {
    state.gp = state.gp.update(*candidate, *score);
    best = previous_best ? std::max(*previous_best, *score) : *score;
    if (previous_best) {
      if (*best - *previous_best < config.convergence_threshold)
        ++state.stall_count;
      else
        state.stall_count = 0;
    }
  }
  state.history.push_back(HistoryEntry{iteration, *candidate, score, best, error});

  if (state.stall_count >= config.patience)
    state.status = RunStatus::Converged;
  else if (state.history.size() >= config.max_iterations)
    state.status = RunStatus::BudgetExhausted;
  return state;
}

BpoRunState run_bpo(const BpoConfig& config, BpoRunState state, const Objective& objective,
                    const IterationObserver& observer, std::optional<std::size_t> stop_after) {
  config.validate();
  std::size_t executed = 0;
  while (state.status == RunStatus::Running && (!stop_after || executed < *stop_after)) {
    state = step(std::move(state), config, objective);
    ++executed;
    if (observer) observer(state);
  }
  return state;
}

BpoRunState run_bpo(const BpoConfig& config, const Objective& objective) {
  return run_bpo(config, init_run(config), objective);
}

std::vector<RandomSearchEntry> run_random_search(const BpoConfig& config, const Objective& objective) {
  config.validate();
  const auto box = config.search_box();
  std::vector<RandomSearchEntry> entries;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t iteration = 1; iteration <= config.max_iterations; ++iteration) {
    auto prompt = random_prompt(box, config.seed, iteration);
    const double score = objective(prompt, iteration);
    best = std::max(best, score);
    entries.push_back({iteration, std::move(prompt), score, best});
  }
  return entries;
}

std::string history_csv(const BpoRunState& state) {
  std::string out = "iteration,score,best_so_far\n";
  for (const auto& entry : state.history) {
    out += std::to_string(entry.iteration);
    out += ',';
    if (entry.score) out += io::format_double(*entry.score);
    out += ',';
    if (entry.best_so_far) out += io::format_double(*entry.best_so_far);
    out += '\n';
  }
  return out;
}

void save_prompt(const std::filesystem::path& path, const LowDimPrompt& prompt) {
  std::ostringstream out(std::ios::binary);
  out.write("BLDP", 4);
  io::write_u32_le(out, 1);
  io::write_u64_le(out, prompt.dim());
  for (std::size_t i = 0; i < prompt.dim(); ++i) io::write_f64_le(out, prompt[i]);
  io::atomic_write(path, out.str());
}

LowDimPrompt load_prompt(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path), std::ios::binary);
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != "BLDP")
    throw Error(Errc::ParseError, path.string() + ": not a prompt file");
  if (io::read_u32_le(in) != 1) throw Error(Errc::ParseError, path.string() + ": unsupported prompt version");
  const auto dim = io::read_u64_le(in);
  if (dim == 0 || dim > (1u << 20)) throw Error(Errc::ParseError, path.string() + ": bad prompt dimension");
  std::vector<double> values(dim);
  for (auto& v : values) v = io::read_f64_le(in);
  return LowDimPrompt(values);
}

nlohmann::json state_to_json(const BpoRunState& state) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& entry : state.history) {
    nlohmann::json item = {{"iteration", entry.iteration}, {"p", entry.prompt.to_vector()}};
    item["score"] = entry.score ? nlohmann::json(*entry.score) : nlohmann::json(nullptr);
    item["best_so_far"] = entry.best_so_far ? nlohmann::json(*entry.best_so_far) : nlohmann::json(nullptr);
    if (entry.error) item["error"] = *entry.error;
    history.push_back(std::move(item));
  }
  return {{"status", status_name(state.status)},
          {"stall_count", state.stall_count},
          {"projection_seed", state.projection.seed()},
          {"history", std::move(history)}};
}

BpoRunState state_from_json(const nlohmann::json& doc, const BpoConfig& config, ProjectionMatrix projection) {
  auto state = init_run(config, std::move(projection));
  try {
    std::vector<Observation> observations;
    for (const auto& item : doc.at("history")) {
      HistoryEntry entry{item.at("iteration").get<std::size_t>(),
                         LowDimPrompt(item.at("p").get<std::vector<double>>()),
                         std::nullopt,
                         std::nullopt,
                         std::nullopt};
      if (entry.prompt.dim() != config.d) throw Error(Errc::DimMismatch, "history prompt has the wrong dimension");
      if (!item.at("score").is_null()) entry.score = item.at("score").get<double>();
      if (!item.at("best_so_far").is_null()) entry.best_so_far = item.at("best_so_far").get<double>();
      if (item.contains("error")) entry.error = item.at("error").get<std::string>();
      if (entry.iteration != state.history.size() + 1) throw Error(Errc::ParseError, "history is not contiguous");
      if (entry.score) observations.push_back({entry.prompt, *entry.score});
      state.history.push_back(std::move(entry));
    }
    state.gp = GpState::from_observations(config.gp, observations);
    state.stall_count = doc.at("stall_count").get<std::size_t>();
    state.status = status_from_name(doc.at("status").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("malformed run state: ") + e.what());
  }
  return state;
}

std::filesystem::path RunDirectory::gp_path(std::size_t iteration) const {
  char name[32];
  std::snprintf(name, sizeof name, "iter_%04zu.json", iteration);
  return root_ / "gp" / name;
}

void RunDirectory::initialize(const BpoConfig& config, const ProjectionMatrix& projection) const {
  std::filesystem::create_directories(root_ / "gp");
  io::atomic_write(config_path(), config.to_json().dump(2) + "\n");
  projection.save(projection_path());
}

void RunDirectory::checkpoint(const BpoRunState& state) const {
  std::filesystem::create_directories(root_ / "gp");
  if (!state.history.empty()) io::atomic_write(gp_path(state.history.size()), state.gp.to_json().dump() + "\n");
  io::atomic_write(history_path(), history_csv(state));
  if (auto best = state.best_prompt()) save_prompt(best_prompt_path(), *best);
  io::atomic_write(state_path(), state_to_json(state).dump(2) + "\n");
}

bool RunDirectory::has_state() const { return std::filesystem::exists(state_path()); }

BpoConfig RunDirectory::load_config() const {
  try {
    return BpoConfig::from_json(nlohmann::json::parse(io::read_file(config_path())));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::ParseError, config_path().string() + ": " + e.what());
  }
}

BpoRunState RunDirectory::load_state(const BpoConfig& config) const {
  auto projection = ProjectionMatrix::load(projection_path());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(io::read_file(state_path()));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::ParseError, state_path().string() + ": " + e.what());
  }
  return state_from_json(doc, config, std::move(projection));
}

}  // namespace blade::bpo
