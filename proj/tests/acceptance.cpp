// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "blade/acquisition.hpp"
#include "blade/bpo.hpp"
#include "blade/cli.hpp"
#include "blade/cmaes.hpp"
#include "blade/eval.hpp"
#include "blade/gp.hpp"
#include "blade/io.hpp"
#include "blade/kit.hpp"
#include "blade/llm/simulators.hpp"
#include "blade/projection.hpp"
#include "blade/rng.hpp"
#include "blade/synthetic.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace blade;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, format, value);
  return buffer;
}

Eigen::VectorXd random_point(Rng& rng, std::size_t dim, double low, double high) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(low, high);
  return x;
}

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("blade-acceptance-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int cli(const std::vector<std::string>& args, std::string* out_text = nullptr) {
  std::vector<const char*> argv{"blade"};
  for (const auto& arg : args) argv.push_back(arg.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (code != 0) std::cerr << "  cli " << args.front() << " exited " << code << ": " << err.str();
  return code;
}

Outcome gp_correctness() {
  const auto start = Clock::now();
  Rng rng(101);
  double worst = 0.0;
  for (int instance = 0; instance < 50; ++instance) {
    GpOptions options;
    options.noise_variance = instance % 2 == 0 ? 0.0 : 1e-4;
    options.kernel.lengthscale = rng.uniform(0.8, 2.0);
    options.kernel.signal_variance = rng.uniform(0.5, 2.0);
    std::vector<Observation> observations;
    std::vector<Eigen::VectorXd> xs;
    std::vector<double> ys;
    for (int i = 0; i < 20; ++i) {
      xs.push_back(random_point(rng, 10, -1.0, 1.0));
      ys.push_back(rng.uniform(0.0, 1.0));
      observations.push_back({LowDimPrompt(xs.back()), ys.back()});
    }
    const auto gp = GpState::from_observations(options, observations);
    for (int q = 0; q < 10; ++q) {
      const Eigen::VectorXd query = random_point(rng, 10, -1.5, 1.5);
      const auto got = gp.posterior(LowDimPrompt(query));
      const auto want = oracle::dense_gp(xs, ys, query, options.kernel.signal_variance, options.kernel.lengthscale,
                                         options.noise_variance + gp.jitter(), gp.target_offset());
      worst = std::max({worst, std::abs(got.mean - want.mean), std::abs(got.variance - std::max(0.0, want.variance))});
    }
  }
  const double elapsed = seconds_since(start);
  return {worst <= 1e-8 && elapsed < 5.0,
          "max abs deviation " + fmt("%.3g", worst) + ", " + fmt("%.2f", elapsed) + " s"};
}

Outcome gp_interpolation() {
  Rng rng(202);
  double worst_mean = 0.0;
  double worst_var = 0.0;
  for (int instance = 0; instance < 100; ++instance) {
    GpOptions options;
    options.noise_variance = 0.0;
    options.kernel.lengthscale = rng.uniform(0.8, 2.0);
    std::vector<Observation> observations;
    for (int i = 0; i < 20; ++i)
      observations.push_back({LowDimPrompt(random_point(rng, 10, -1.0, 1.0)), rng.uniform(-1.0, 1.0)});
    const auto gp = GpState::from_observations(options, observations);
    for (const auto& obs : observations) {
      const auto post = gp.posterior(obs.prompt);
      worst_mean = std::max(worst_mean, std::abs(post.mean - obs.score));
      worst_var = std::max(worst_var, post.variance);
    }
  }
  return {worst_mean <= 1e-8 && worst_var <= 1e-10,
          "max |mu - y| " + fmt("%.3g", worst_mean) + ", max var " + fmt("%.3g", worst_var)};
}

Outcome ei_correctness() {
  Rng rng(303);
  int within = 0;
  double worst_z = 0.0;
  bool nonnegative = true;
  for (int t = 0; t < 100; ++t) {
    const double mean = rng.uniform(-2.0, 2.0);
    const double sigma = rng.uniform(0.05, 2.0);
    const double incumbent = mean + rng.uniform(-2.0, 2.0) * sigma;
    const double closed = expected_improvement(mean, sigma * sigma, incumbent);
    const auto mc = oracle::mc_expected_improvement(mean, sigma, incumbent, 1000000, mix_seed(303, t));
    const double z = std::abs(closed - mc.mean) / mc.standard_error;
    worst_z = std::max(worst_z, z);
    within += z <= 3.0 ? 1 : 0;
  }
  for (double mu = -5.0; mu <= 5.0; mu += 0.25)
    for (double var : {0.0, 1e-12, 1e-4, 0.5, 4.0})
      for (double best : {-3.0, 0.0, 3.0}) nonnegative = nonnegative && expected_improvement(mu, var, best) >= 0.0;
  return {within == 100 && nonnegative, std::to_string(within) + "/100 within 3 SE (worst " + fmt("%.2f", worst_z) +
                                            " SE), EI >= 0 " + (nonnegative ? "everywhere" : "VIOLATED")};
}

Outcome ei_maximization() {
  Rng rng(404);
  const auto box = SearchBox::uniform(2, -5.0, 5.0);
  double worst_ratio = 1e300;
  for (int instance = 0; instance < 20; ++instance) {
    GpOptions options;
    options.kernel.lengthscale = 2.0;
    std::vector<Observation> observations;
    const int n = 3 + static_cast<int>(rng.below(8));
    for (int i = 0; i < n; ++i)
      observations.push_back({LowDimPrompt(random_point(rng, 2, -5.0, 5.0)), rng.uniform(0.0, 1.0)});
    const auto gp = GpState::from_observations(options, observations);
    const double incumbent = gp.incumbent();
    double grid_best = 0.0;
    for (int i = 0; i < 200; ++i)
      for (int j = 0; j < 200; ++j) {
        Eigen::Vector2d x(-5.0 + 10.0 * i / 199.0, -5.0 + 10.0 * j / 199.0);
        const auto post = gp.posterior(Eigen::VectorXd(x));
        grid_best = std::max(grid_best, expected_improvement(post.mean, post.variance, incumbent));
      }
    AcquisitionContext context;
    context.gp = &gp;
    context.search_box = box;
    context.seed = mix_seed(404, instance);
    const auto proposal = propose_next(context);
    worst_ratio = std::min(worst_ratio, grid_best > 0.0 ? proposal.expected_improvement / grid_best : 1.0);
  }
  return {worst_ratio >= 0.999, "worst proposal/grid EI ratio " + fmt("%.6f", worst_ratio)};
}

Outcome cmaes_sanity() {
  const auto start = Clock::now();
  int sphere_ok = 0;
  int rosen_ok = 0;
  double worst_sphere = 0.0;
  for (int seed = 0; seed < 10; ++seed) {
    Rng rng(mix_seed(505, seed));
    const auto result = cma_maximize([](const Eigen::VectorXd& x) { return -oracle::sphere(x); },
                                     random_point(rng, 10, -3.0, 3.0), 1.0, 5000, mix_seed(506, seed));
    sphere_ok += result.best_f >= -1e-8 ? 1 : 0;
    worst_sphere = std::min(worst_sphere, result.best_f);
  }
  for (int seed = 0; seed < 10; ++seed) {
    Rng rng(mix_seed(507, seed));
    const auto result = cma_maximize([](const Eigen::VectorXd& x) { return -oracle::rosenbrock(x); },
                                     random_point(rng, 5, -2.0, 2.0), 0.5, 20000, mix_seed(508, seed));
    rosen_ok += result.best_f >= -1e-4 ? 1 : 0;
  }
  const double elapsed = seconds_since(start);
  return {sphere_ok == 10 && rosen_ok >= 8 && elapsed < 60.0,
          "sphere " + std::to_string(sphere_ok) + "/10 (worst " + fmt("%.2g", worst_sphere) + "), rosenbrock " +
              std::to_string(rosen_ok) + "/10, " + fmt("%.2f", elapsed) + " s"};
}

Outcome projection_check() {
  const ProjectionMatrix a(10, 10240, 77);
  const ProjectionMatrix b(10, 10240, 77);
  const ProjectionMatrix c(10, 10240, 78);
  const auto& entries = a.entries();
  const bool in_range = entries.minCoeff() >= -1.0 && entries.maxCoeff() <= 1.0;
  const bool reproducible = std::memcmp(entries.data(), b.entries().data(), sizeof(double) * entries.size()) == 0;
  const bool seed_sensitive = !(a == c);
  // Mean and variance of U[-1, 1] are 0 and 1/3.
  const double mean = entries.mean();
  const double var = (entries.array() - mean).square().mean();
  const bool moments = std::abs(mean) < 0.01 && std::abs(var - 1.0 / 3.0) < 0.01;
  const auto report = distortion_report(a, 1000, 99);
  const bool distortion = report.pairs_used == 1000 && std::abs(report.mean_ratio - 1.0) <= 0.05;
  return {in_range && reproducible && seed_sensitive && moments && distortion,
          std::string("range ") + (in_range ? "ok" : "BAD") + ", bitwise " + (reproducible ? "ok" : "BAD") +
              ", moments mean " + fmt("%.4f", mean) + " var " + fmt("%.4f", var) + ", distortion mean " +
              fmt("%.4f", report.mean_ratio) + " over " + std::to_string(report.pairs_used) + " pairs"};
}

Outcome bpo_vs_random() {
  const auto start = Clock::now();
  double bpo_sum = 0.0;
  double random_sum = 0.0;
  int wins = 0;
  bool monotone = true;
  for (std::uint64_t pair = 0; pair < 20; ++pair) {
    FixtureSpec spec;
    spec.seed = 1000 + pair;
    spec.projection_seed = 2000 + pair;
    spec.n_questions = 64;
    const auto fixture = make_fixture(spec);
    llm::UtilityGenerator generator(fixture.task, spec.n_tokens, spec.hidden_dim);
    llm::OracleBlackBox blackbox(fixture.task, fixture.batch, llm::OracleMode::Threshold);

    bpo::BpoConfig config;
    config.seed = 3000 + pair;
    config.projection_seed = spec.projection_seed;
    config.batch_size = 64;
    config.max_iterations = 50;
    // Every iteration runs: improvement is never negative.
    config.convergence_threshold = 0.0;
    bpo::LlmDeps deps{&fixture.projection, &generator, &blackbox, config.instruction, 1};
    const auto objective = bpo::make_llm_objective(config, deps, fixture.batch);

    const auto run = bpo::run_bpo(config, bpo::init_run(config, fixture.projection), objective);
    const auto baseline = bpo::run_random_search(config, objective);
    for (std::size_t i = 1; i < run.history.size(); ++i)
      monotone = monotone && *run.history[i].best_so_far >= *run.history[i - 1].best_so_far;
    monotone = monotone && run.history.size() == 50;
    bpo_sum += *run.best_score();
    random_sum += baseline.back().best_so_far;
    wins += *run.best_score() > baseline.back().best_so_far ? 1 : 0;
  }
  const double elapsed = seconds_since(start);
  return {bpo_sum / 20.0 > random_sum / 20.0 && monotone && elapsed < 600.0,
          "mean best BPO " + fmt("%.4f", bpo_sum / 20.0) + " vs random " + fmt("%.4f", random_sum / 20.0) + " (" +
              std::to_string(wins) + "/20 strict wins), monotone " + (monotone ? "yes" : "NO") + ", " +
              fmt("%.1f", elapsed) + " s"};
}

Outcome stopping_rule() {
  bpo::BpoConfig config;
  config.d = 3;
  config.n_tokens = 1;
  config.hidden_dim = 16;
  config.convergence_threshold = 0.01;
  config.patience = 5;
  config.cma_budget = 200;
  const auto constant = bpo::run_bpo(config, [](const LowDimPrompt&, std::size_t) { return 0.5; });
  const auto rising = bpo::run_bpo(config, [](const LowDimPrompt&, std::size_t it) { return 0.02 * it; });
  const bool first = constant.status == bpo::RunStatus::Converged && constant.history.size() == 6;
  const bool second = rising.status == bpo::RunStatus::BudgetExhausted && rising.history.size() == 50;
  return {first && second, "constant: " + std::string(bpo::status_name(constant.status)) + " at " +
                               std::to_string(constant.history.size()) + "; always-improving: " +
                               std::string(bpo::status_name(rising.status)) + " at " +
                               std::to_string(rising.history.size())};
}

Outcome filtering_soundness() {
  const auto dir = scratch_dir("filter");
  FixtureSpec spec;
  spec.n_questions = 200;
  spec.seed = 909;
  spec.hidden_dim = 64;
  const auto fixture = make_fixture(spec);
  const auto covered = llm::select_covered(fixture.batch, 0.6, 909);
  llm::OracleBlackBox blackbox(fixture.task, fixture.batch, llm::OracleMode::FactToken, covered);
  const auto generated =
      kit::generate_candidates(blackbox, kit::GenerationPromptTemplate::defaults(), fixture.batch, {});
  auto records = generated.records;
  kit::verify_records(blackbox, fixture.batch, records);
  const auto stats = kit::filter_and_emit(records, fixture.batch, "Answer the question.", dir / "kit.jsonl");

  std::set<std::string> truth;
  for (const auto& record : records)
    if (record.knowledge_text.find(fixture.task.fact_token_for(record.example_id)) != std::string::npos)
      truth.insert(record.example_id);
  std::set<std::string> emitted;
  std::istringstream lines(io::read_file(dir / "kit.jsonl"));
  std::string line;
  while (std::getline(lines, line))
    if (!line.empty()) emitted.insert(nlohmann::json::parse(line).at("source_id").get<std::string>());
  std::size_t hits = 0;
  for (const auto& id : emitted) hits += truth.count(id);
  const double precision = emitted.empty() ? 0.0 : static_cast<double>(hits) / emitted.size();
  const double recall = truth.empty() ? 0.0 : static_cast<double>(hits) / truth.size();
  return {records.size() == 200 && precision == 1.0 && recall == 1.0 && stats.kept == truth.size(),
          std::to_string(records.size()) + " records, keep set " + std::to_string(truth.size()) + ", emitted " +
              std::to_string(emitted.size()) + ", precision " + fmt("%.3f", precision) + ", recall " +
              fmt("%.3f", recall)};
}

Outcome exact_match() {
  struct Case {
    const char* gold;
    const char* completion;
    bool expected;
  };
  const Case cases[] = {
      {"AC", "答案是A", false},        {"AC", "答案是AC", true},           {"AC", "答案是ACD", false},
      {"AC", "答案是A、C", true},      {"AC", "答案是C", false},           {"A", "答案是A", true},
      {"A", "答案是AB", false},        {"ABCD", "答案是ABC", false},       {"ABCD", "答案是ABCD", true},
      {"BD", "The answer is D, B", true}, {"B", "答案是B和C", false},     {"CD", "无法判断", false},
  };
  int deviations = 0;
  int index = 0;
  for (const auto& c : cases) {
    nlohmann::json doc = {{"id", "em-" + std::to_string(++index)},
                          {"question", "q"},
                          {"options", {{"A", "a"}, {"B", "b"}, {"C", "c"}, {"D", "d"}}},
                          {"answer", c.gold}};
    const auto example = validate_example(doc);
    const auto predicted = eval::extract_answer(c.completion, LabelSet::first(4), true);
    const auto outcome = eval::score_example(example, predicted, c.completion);
    deviations += outcome.correct == c.expected ? 0 : 1;
  }
  return {deviations == 0, "12 cases, " + std::to_string(deviations) + " deviations"};
}

Outcome oracle_eval() {
  const auto dir = scratch_dir("eval");
  const auto world = (dir / "world").string();
  if (cli({"--seed", "11", "synth", "--out", world, "--questions", "40"}) != 0) return {false, "synth failed"};
  const ProjectionMatrix projection(10, 10240, 11);
  projection.save(dir / "projection.bin");
  bpo::save_prompt(dir / "prompt.bin", LowDimPrompt::zeros(10));
  std::string text;
  const int code = cli({"--config", world + "/config.json", "--simulate", "eval", "--dataset", world + "/dataset.jsonl",
                        "--prompt", (dir / "prompt.bin").string(), "--projection", (dir / "projection.bin").string(),
                        "--sim-generator", "fact", "--sim-coverage", "0.7", "--out", (dir / "report").string()},
                       &text);
  const auto report = nlohmann::json::parse(io::read_file(dir / "report" / "report.json"));
  const double accuracy = report.at("blade").at("accuracy").get<double>();
  const bool table = text.find("Original") != std::string::npos && text.find("+BLADE") != std::string::npos &&
                     text.find("Gain%") != std::string::npos && text.find("All") != std::string::npos;
  const bool printed = text.find("+BLADE accuracy: 0.700") != std::string::npos;
  return {code == 0 && accuracy == 0.7 && printed && table,
          "+BLADE accuracy " + fmt("%.3f", accuracy) + ", table " + (table ? "rendered" : "MISSING")};
}

struct PipelineOutputs {
  std::string history;
  std::string dataset;
};

std::optional<PipelineOutputs> run_pipeline(const fs::path& dir) {
  const auto world = (dir / "world").string();
  const auto config = world + "/config.json";
  const auto dataset = world + "/dataset.jsonl";
  if (cli({"--seed", "21", "synth", "--out", world, "--questions", "64"}) != 0) return std::nullopt;
  if (cli({"--config", config, "--simulate", "kit", "generate", "--dataset", dataset, "--template",
           world + "/template.txt", "--demos", world + "/demos.jsonl", "--out", (dir / "candidates.jsonl").string(),
           "--sim-coverage", "0.5"}) != 0)
    return std::nullopt;
  if (cli({"--config", config, "--simulate", "kit", "filter", "--candidates", (dir / "candidates.jsonl").string(),
           "--dataset", dataset, "--out", (dir / "kit.jsonl").string()}) != 0)
    return std::nullopt;
  if (cli({"--config", config, "--simulate", "optimize", "--run-dir", (dir / "run").string()}) != 0)
    return std::nullopt;
  if (cli({"--config", config, "--simulate", "eval", "--dataset", dataset, "--run-dir", (dir / "run").string(),
           "--sim-generator", "utility", "--out", (dir / "eval").string()}) != 0)
    return std::nullopt;
  return PipelineOutputs{io::read_file(dir / "run" / "history.csv"), io::read_file(dir / "kit.jsonl")};
}

Outcome determinism() {
  const auto first = run_pipeline(scratch_dir("det-a"));
  const auto second = run_pipeline(scratch_dir("det-b"));
  if (!first || !second) return {false, "pipeline run failed"};
  const bool history = first->history == second->history;
  const bool dataset = first->dataset == second->dataset;
  const auto rows = std::count(first->history.begin(), first->history.end(), '\n') - 1;
  return {history && dataset && !first->dataset.empty(),
          std::string("history.csv ") + (history ? "identical" : "DIFFERS") + " (" + std::to_string(rows) +
              " rows), emitted dataset " + (dataset ? "identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  // Optional arguments select criteria by number.
  std::set<std::string> only(argv + 1, argv + argc);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 gp-correctness", gp_correctness},     {"2 gp-interpolation", gp_interpolation},
      {"3 ei-correctness", ei_correctness},     {"4 ei-maximization", ei_maximization},
      {"5 cmaes-sanity", cmaes_sanity},         {"6 projection", projection_check},
      {"7 bpo-vs-random", bpo_vs_random},       {"8 stopping-rule", stopping_rule},
      {"9 filtering-soundness", filtering_soundness}, {"10 exact-match", exact_match},
      {"11 oracle-eval", oracle_eval},          {"12 determinism", determinism},
  };
  int failures = 0;
  int ran = 0;
  for (const auto& [name, check] : criteria) {
    if (!only.empty() && !only.count(name.substr(0, name.find(' ')))) continue;
    Outcome outcome{false, ""};
    try {
      outcome = check();
    } catch (const std::exception& e) {
      outcome = {false, std::string("threw: ") + e.what()};
    }
    ++ran;
    failures += outcome.pass ? 0 : 1;
    std::cout << (outcome.pass ? "PASS" : "FAIL") << "  " << name << ": " << outcome.detail << std::endl;
  }
  std::cout << (ran - failures) << "/" << ran << " criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
