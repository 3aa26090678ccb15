#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "blade/bpo.hpp"
#include "blade/cli.hpp"
#include "blade/error.hpp"
#include "blade/eval.hpp"
#include "blade/io.hpp"
#include "blade/kit.hpp"
#include "blade/llm/http_client.hpp"
#include "blade/llm/prompts.hpp"
#include "blade/llm/simulators.hpp"
#include "blade/synthetic.hpp"

namespace blade::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool simulate = false;
  bool resume = false;
  bool verbose = false;
};

std::string fixed(double value, int precision = 3) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.*f", precision, value);
  return buffer;
}

class Session {
 public:
  Session(Globals globals, std::ostream& out, std::ostream& err) : g(std::move(globals)), out(out), err(err) {}

  void load() {
    if (!g.config_path.empty()) {
      config = load_config_file(g.config_path);
      if (!config.is_object()) throw Error(Errc::InvalidConfig, "config root must be a table/object");
      config_dir = fs::path(g.config_path).parent_path();
    }
    std::optional<std::uint64_t> from_config;
    const auto* optimizer = section("optimizer");
    try {
      if (optimizer && optimizer->contains("seed"))
        from_config = optimizer->at("seed").get<std::uint64_t>();
      else if (config.contains("seed"))
        from_config = config.at("seed").get<std::uint64_t>();
    } catch (const json::exception&) {
      throw Error(Errc::InvalidConfig, "seed must be a non-negative integer");
    }
    if (g.seed && from_config && *g.seed != *from_config)
      err << "warning: --seed " << *g.seed << " overrides config seed " << *from_config << "\n";
    seed = g.seed ? *g.seed : from_config.value_or(0);
  }

  const json* section(const std::string& name) const {
    if (!config.contains(name)) return nullptr;
    const auto& node = config.at(name);
    if (!node.is_object()) throw Error(Errc::InvalidConfig, "config section '" + name + "' must be a table");
    return &node;
  }

  template <typename T>
  T setting(const std::string& sec, const std::string& key, T fallback) const {
    const auto* node = section(sec);
    if (!node || !node->contains(key)) return fallback;
    try {
      return node->at(key).get<T>();
    } catch (const json::exception&) {
      throw Error(Errc::InvalidConfig, "bad value for " + sec + "." + key);
    }
  }

  fs::path resolve(const fs::path& path) const {
    if (path.is_absolute() || config_dir.empty()) return path;
    return config_dir / path;
  }

  void log(const std::string& message) const {
    if (g.verbose) err << message << "\n";
  }

  Globals g;
  std::ostream& out;
  std::ostream& err;
  json config = json::object();
  fs::path config_dir;
  std::uint64_t seed = 0;
};

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw UsageError(what + " is required");
  if (!fs::exists(path)) throw UsageError(what + " not found: " + path);
}

std::vector<McqExample> load_examples(const std::string& path) {
  require_file(path, "--dataset");
  return eval::load_dataset(path).examples;
}

// ---- simulated world ----

struct SimWorld {
  FixtureSpec spec;
  ProjectionMatrix projection;
  SyntheticTask task;
  LowDimPrompt optimum;
  std::vector<McqExample> questions;
};

json spec_to_json(const FixtureSpec& spec) {
  return {{"n_questions", spec.n_questions}, {"d", spec.d},
          {"n_tokens", spec.n_tokens},       {"hidden_dim", spec.hidden_dim},
          {"seed", spec.seed},               {"projection_seed", spec.projection_seed},
          {"bandwidth_scale", spec.bandwidth_scale}, {"optimum_radius", spec.optimum_radius}};
}

FixtureSpec spec_from_json(const json& doc) {
  FixtureSpec spec;
  spec.n_questions = doc.at("n_questions").get<std::size_t>();
  spec.d = doc.at("d").get<std::size_t>();
  spec.n_tokens = doc.at("n_tokens").get<std::size_t>();
  spec.hidden_dim = doc.at("hidden_dim").get<std::size_t>();
  spec.seed = doc.at("seed").get<std::uint64_t>();
  spec.projection_seed = doc.at("projection_seed").get<std::uint64_t>();
  spec.bandwidth_scale = doc.at("bandwidth_scale").get<double>();
  spec.optimum_radius = doc.at("optimum_radius").get<double>();
  return spec;
}

SimWorld load_world_file(const fs::path& path) {
  if (!fs::exists(path)) throw UsageError("fixture not found: " + path.string());
  try {
    const auto doc = json::parse(io::read_file(path));
    const auto spec = spec_from_json(doc.at("spec"));
    ProjectionMatrix projection(spec.d, spec.n_tokens * spec.hidden_dim, spec.projection_seed);
    auto task = task_from_json(doc.at("task"), projection);
    LowDimPrompt optimum(doc.at("task").at("optimum").get<std::vector<double>>());
    auto questions = make_synthetic_questions(spec.n_questions, spec.seed);
    return SimWorld{spec, std::move(projection), std::move(task), std::move(optimum), std::move(questions)};
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
}

// The fixture file wins; otherwise a world is built from the seed, covering
// `examples` when given.
SimWorld make_world(const Session& s, const std::string& fixture_flag, const std::vector<McqExample>* examples) {
  std::string fixture = fixture_flag;
  if (fixture.empty()) fixture = s.setting<std::string>("simulate", "fixture", "");
  if (!fixture.empty()) {
    const fs::path path = fixture_flag.empty() ? s.resolve(fixture) : fs::path(fixture);
    s.log("simulator fixture: " + path.string());
    return load_world_file(path);
  }
  FixtureSpec spec;
  spec.seed = s.seed;
  spec.projection_seed = s.seed;
  spec.d = s.setting<std::size_t>("optimizer", "d", spec.d);
  spec.n_tokens = s.setting<std::size_t>("optimizer", "n_tokens", spec.n_tokens);
  spec.hidden_dim = s.setting<std::size_t>("optimizer", "hidden_dim", spec.hidden_dim);
  spec.n_questions = s.setting<std::size_t>("optimizer", "batch_size", spec.n_questions);
  spec.bandwidth_scale = s.setting<double>("simulate", "bandwidth_scale", spec.bandwidth_scale);
  auto fixture_world = make_fixture(spec);
  SimWorld world{spec, std::move(fixture_world.projection), std::move(fixture_world.task),
                 std::move(fixture_world.optimum), std::move(fixture_world.batch)};
  if (examples) world.task = make_task(world.projection, world.optimum, *examples, spec.bandwidth_scale, spec.seed);
  return world;
}

// ---- real endpoints ----

llm::EndpointConfig endpoint_from(const json& doc, const std::string& role) {
  if (doc.contains("base_url")) return llm::EndpointConfig::from_json(doc);
  if (doc.contains("endpoints") && doc.at("endpoints").contains(role))
    return llm::EndpointConfig::from_json(doc.at("endpoints").at(role));
  if (doc.contains(role)) return llm::EndpointConfig::from_json(doc.at(role));
  throw Error(Errc::InvalidConfig, "no '" + role + "' endpoint configured");
}

std::shared_ptr<llm::EndpointClient> make_endpoint(const Session& s, const std::string& endpoint_file,
                                                   const std::string& role) {
  llm::EndpointConfig config = [&] {
    if (!endpoint_file.empty()) {
      require_file(endpoint_file, "--endpoint-config");
      return endpoint_from(load_config_file(endpoint_file), role);
    }
    return endpoint_from(s.config, role);
  }();
  config.validate();
  auto transport = llm::make_http_transport(config.base_url);
  return std::make_shared<llm::EndpointClient>(config, std::move(transport), llm::RetryPolicy{}, nullptr, s.seed);
}

// ---- commands ----

int cmd_synth(Session& s, const std::string& out_dir, std::size_t questions, double bandwidth_scale) {
  s.load();
  FixtureSpec spec;
  spec.seed = s.seed;
  spec.projection_seed = s.seed;
  spec.n_questions = questions;
  spec.d = s.setting<std::size_t>("optimizer", "d", spec.d);
  spec.n_tokens = s.setting<std::size_t>("optimizer", "n_tokens", spec.n_tokens);
  spec.hidden_dim = s.setting<std::size_t>("optimizer", "hidden_dim", spec.hidden_dim);
  spec.bandwidth_scale = bandwidth_scale;
  const auto fixture = make_fixture(spec);

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  eval::write_dataset(dir / "dataset.jsonl", fixture.batch);
  const json doc = {{"spec", spec_to_json(spec)}, {"task", to_json(fixture.task, fixture.optimum)}};
  io::atomic_write(dir / "fixture.json", doc.dump(2) + "\n");

  const auto tmpl = kit::GenerationPromptTemplate::defaults();
  io::atomic_write(dir / "template.txt", tmpl.system_text + "\n---\n" + tmpl.user_template + "\n");
  std::string demos;
  for (const auto& demo : tmpl.demonstrations) {
    demos += json{{"question", demo.question}, {"options", demo.options}, {"answer", demo.answer},
                  {"knowledge", demo.knowledge}}
                 .dump() +
             "\n";
  }
  io::atomic_write(dir / "demos.jsonl", demos);

  json config = {{"seed", s.seed},
                 {"optimizer",
                  {{"d", spec.d}, {"n_tokens", spec.n_tokens}, {"hidden_dim", spec.hidden_dim},
                   {"batch_size", questions}, {"max_iterations", 50}}},
                 {"simulate", {{"fixture", "fixture.json"}}}};
  io::atomic_write(dir / "config.json", config.dump(2) + "\n");
  s.out << "wrote " << fixture.batch.size() << " questions and fixture to " << dir.string() << "\n";
  return kExitOk;
}

struct KitGenerateArgs {
  std::string dataset, template_path, demos, endpoint_config, out, checkpoint, fixture;
  std::size_t samples = 1;
  int concurrency = 0;
  double coverage = -1.0;
};

int cmd_kit_generate(Session& s, const KitGenerateArgs& a) {
  if (a.template_path.empty()) throw UsageError("--template is required");
  s.load();
  auto examples = load_examples(a.dataset);
  require_file(a.template_path, "--template");
  if (!a.demos.empty()) require_file(a.demos, "--demos");
  const auto tmpl = kit::GenerationPromptTemplate::load(
      a.template_path, a.demos.empty() ? std::nullopt : std::optional<fs::path>(a.demos));

  kit::GenerationOptions options;
  options.concurrency = a.concurrency > 0 ? a.concurrency : s.setting<int>("kit", "concurrency", 1);
  options.samples_per_question = a.samples;
  options.checkpoint = a.checkpoint.empty() ? fs::path(a.out + ".ckpt") : fs::path(a.checkpoint);
  options.resume = s.g.resume;

  std::unique_ptr<llm::ChatClient> client;
  if (s.g.simulate) {
    auto world = make_world(s, a.fixture, &examples);
    const double coverage = a.coverage >= 0.0 ? a.coverage : s.setting<double>("simulate", "coverage", 1.0);
    auto covered = llm::select_covered(examples, coverage, s.seed);
    client = std::make_unique<llm::OracleBlackBox>(world.task, examples, llm::OracleMode::FactToken, covered);
    // Timestamps would make simulated runs differ byte-wise.
    options.clock = [] { return std::string("1970-01-01T00:00:00Z"); };
  } else {
    if (a.endpoint_config.empty() && !s.config.contains("endpoints"))
      throw UsageError("--endpoint-config is required without --simulate");
    client = std::make_unique<llm::HttpChatClient>(make_endpoint(s, a.endpoint_config, "blackbox"));
  }

  const auto result = kit::generate_candidates(*client, tmpl, examples, options);
  kit::write_candidates(a.out, result.records);
  s.out << "generated " << result.generated << ", resumed " << result.resumed << ", failed "
        << result.failures.size() << "; " << result.records.size() << " candidates written to " << a.out << "\n";
  for (const auto& failure : result.failures) s.log("failed " + failure.example_id + ": " + failure.error);
  return result.failures.empty() ? kExitOk : kExitRuntime;
}

struct KitFilterArgs {
  std::string candidates, dataset, out, endpoint_config, fixture, instruction;
  int concurrency = 0;
};

int cmd_kit_filter(Session& s, const KitFilterArgs& a) {
  s.load();
  require_file(a.candidates, "--candidates");
  auto examples = load_examples(a.dataset);
  auto records = kit::read_candidates(a.candidates);

  std::unique_ptr<llm::ChatClient> client;
  if (s.g.simulate) {
    auto world = make_world(s, a.fixture, &examples);
    client = std::make_unique<llm::OracleBlackBox>(world.task, examples, llm::OracleMode::FactToken);
  } else {
    client = std::make_unique<llm::HttpChatClient>(make_endpoint(s, a.endpoint_config, "blackbox"));
  }

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (!records[i].consistency_verdict) pending.push_back(i);
  std::vector<KnowledgeRecord> batch;
  for (auto i : pending) batch.push_back(records[i]);
  const int concurrency = a.concurrency > 0 ? a.concurrency : s.setting<int>("kit", "concurrency", 1);
  const auto verification = kit::verify_records(*client, examples, batch, concurrency);
  for (std::size_t k = 0; k < pending.size(); ++k) records[pending[k]] = batch[k];
  kit::write_candidates(a.candidates, records);

  const std::string instruction =
      !a.instruction.empty() ? a.instruction
                             : s.setting<std::string>("kit", "instruction", std::string(llm::kKnowledgeInstruction));
  const auto stats = kit::filter_and_emit(records, examples, instruction, a.out);
  s.out << "verified " << verification.verified << " (" << records.size() - pending.size()
        << " already verified), unverified " << verification.unverified << "\n";
  s.out << "kept " << stats.kept << ", dropped " << stats.dropped << ", unverified " << stats.unverified
        << "; dataset written to " << a.out << "\n";
  return kExitOk;
}

struct OptimizeArgs {
  std::string run_dir, dataset, fixture;
  std::optional<std::size_t> stop_after;
  std::optional<std::size_t> max_iterations;
};

void print_run_summary(const Session& s, const bpo::BpoRunState& state) {
  const auto best = state.best_score();
  std::size_t best_iteration = 0;
  for (const auto& entry : state.history)
    if (entry.score && best && *entry.score == *best) {
      best_iteration = entry.iteration;
      break;
    }
  s.out << "status: " << bpo::status_name(state.status) << ", iterations: " << state.history.size()
        << ", successful: " << state.successful_iterations() << "\n";
  if (best)
    s.out << "best score: " << fixed(*best, 4) << " at iteration " << best_iteration << "\n";
  else
    s.out << "best score: none\n";
}

int cmd_optimize(Session& s, const OptimizeArgs& a) {
  if (a.run_dir.empty()) throw UsageError("--run-dir is required");
  s.load();
  if (s.g.config_path.empty() && !s.g.simulate) throw UsageError("--config is required without --simulate");
  bpo::RunDirectory dir(a.run_dir);

  const bool resuming = s.g.resume && dir.has_state();
  if (!s.g.resume && dir.has_state())
    throw UsageError("run directory " + a.run_dir + " already holds a run; pass --resume to continue it");

  bpo::BpoConfig config;
  if (resuming) {
    config = dir.load_config();
    if (s.g.seed && *s.g.seed != config.seed)
      s.err << "warning: resuming with the run's stored seed " << config.seed << "\n";
  } else {
    json optimizer = s.section("optimizer") ? *s.section("optimizer") : json::object();
    optimizer["seed"] = s.seed;
    if (a.max_iterations) optimizer["max_iterations"] = *a.max_iterations;
    config = bpo::BpoConfig::from_json(optimizer);
  }

  std::vector<McqExample> examples;
  if (!a.dataset.empty()) examples = load_examples(a.dataset);

  std::optional<SimWorld> world;
  std::unique_ptr<llm::KnowledgeGenerator> generator;
  std::unique_ptr<llm::ChatClient> blackbox;
  if (s.g.simulate) {
    world = make_world(s, a.fixture, examples.empty() ? nullptr : &examples);
    if (world->spec.d != config.d || world->spec.n_tokens != config.n_tokens ||
        world->spec.hidden_dim != config.hidden_dim)
      throw Error(Errc::InvalidConfig, "optimizer dimensions do not match the simulator fixture");
    if (config.projection_seed && *config.projection_seed != world->spec.projection_seed)
      throw Error(Errc::InvalidConfig, "optimizer projection_seed differs from the simulator fixture");
    config.projection_seed = world->spec.projection_seed;
    if (examples.empty()) examples = world->questions;
    generator = std::make_unique<llm::UtilityGenerator>(world->task, config.n_tokens, config.hidden_dim);
    blackbox = std::make_unique<llm::OracleBlackBox>(world->task, examples, llm::OracleMode::Threshold);
  } else {
    if (examples.empty()) throw UsageError("--dataset is required without --simulate");
    generator = std::make_unique<llm::HttpGeneratorClient>(make_endpoint(s, "", "generator"), config.n_tokens,
                                                           config.hidden_dim);
    blackbox = std::make_unique<llm::HttpChatClient>(make_endpoint(s, "", "blackbox"));
  }

  std::optional<bpo::BpoRunState> state;
  if (resuming) {
    state = dir.load_state(config);
    s.out << "resuming at iteration " << state->history.size() + 1 << "\n";
  } else {
    auto projection = ProjectionMatrix(config.d, config.full_dim(), config.effective_projection_seed());
    dir.initialize(config, projection);
    state = bpo::init_run(config, std::move(projection));
  }

  const ProjectionMatrix projection = state->projection;
  bpo::LlmDeps deps{&projection, generator.get(), blackbox.get(), config.instruction, config.concurrency};
  const auto objective = bpo::make_llm_objective(config, deps, examples);
  auto observer = [&](const bpo::BpoRunState& current) {
    dir.checkpoint(current);
    const auto& entry = current.history.back();
    if (s.g.verbose) {
      s.err << "iteration " << entry.iteration << ": "
            << (entry.score ? fixed(*entry.score, 4) : "failed (" + entry.error.value_or("") + ")")
            << ", best " << (entry.best_so_far ? fixed(*entry.best_so_far, 4) : "-") << "\n";
    }
  };
  auto final_state = bpo::run_bpo(config, std::move(*state), objective, observer, a.stop_after);
  if (final_state.history.empty()) dir.checkpoint(final_state);
  print_run_summary(s, final_state);
  s.out << "run directory: " << a.run_dir << "\n";
  return final_state.history.empty() || final_state.successful_iterations() > 0 ? kExitOk : kExitRuntime;
}

struct EvalArgs {
  std::string dataset, prompt, projection, run_dir, out, fixture, sim_generator;
  std::vector<std::string> arms;
  double coverage = -1.0;
};

std::string render_table(const std::vector<std::pair<std::string, eval::EvalReport>>& arms,
                         const std::set<std::string>& subsets) {
  std::vector<std::string> columns(subsets.begin(), subsets.end());
  columns.push_back("All");
  auto cell = [](const std::string& text) {
    std::string padded = text;
    if (padded.size() < 10) padded.insert(0, 10 - padded.size(), ' ');
    return padded;
  };
  auto accuracy = [](const eval::EvalReport& report, const std::string& column) -> std::optional<double> {
    if (column == "All") return report.accuracy;
    const auto it = report.per_subset.find(column);
    if (it == report.per_subset.end()) return std::nullopt;
    return it->second.accuracy;
  };
  std::string table = "Method    ";
  for (const auto& column : columns) table += cell(column);
  table += "\n";
  for (const auto& [name, report] : arms) {
    std::string label = name;
    label.resize(10, ' ');
    table += label;
    for (const auto& column : columns) {
      const auto value = accuracy(report, column);
      table += cell(value ? fixed(*value) : "-");
    }
    table += "\n";
  }
  if (arms.size() == 2) {
    table += "Gain%     ";
    for (const auto& column : columns) {
      const auto base = accuracy(arms[0].second, column);
      const auto improved = accuracy(arms[1].second, column);
      if (!base || !improved || *base == 0.0) {
        table += cell("n/a");
      } else {
        const double gain = (*improved - *base) / *base * 100.0;
        table += cell((gain >= 0 ? "+" : "") + fixed(gain, 2) + "%");
      }
    }
    table += "\n";
  }
  return table;
}

int cmd_eval(Session& s, EvalArgs a) {
  s.load();
  auto examples = load_examples(a.dataset);
  if (!a.run_dir.empty()) {
    const bpo::RunDirectory dir(a.run_dir);
    if (a.prompt.empty()) a.prompt = dir.best_prompt_path().string();
    if (a.projection.empty()) a.projection = dir.projection_path().string();
  }
  if (a.arms.empty()) a.arms = a.prompt.empty() ? std::vector<std::string>{"original"}
                                                 : std::vector<std::string>{"original", "blade"};
  bool want_original = false;
  bool want_blade = false;
  for (const auto& arm : a.arms) {
    if (arm == "original")
      want_original = true;
    else if (arm == "blade")
      want_blade = true;
    else
      throw UsageError("unknown arm '" + arm + "' (expected original or blade)");
  }

  std::optional<LowDimPrompt> prompt;
  std::optional<ProjectionMatrix> projection;
  if (want_blade) {
    require_file(a.prompt, "--prompt");
    require_file(a.projection, "--projection");
    prompt = bpo::load_prompt(a.prompt);
    projection = ProjectionMatrix::load(a.projection);
    if (prompt->dim() != projection->low_dim())
      throw Error(Errc::InvalidConfig, "prompt dimension does not match the projection");
  }
  const auto n_tokens = s.setting<std::size_t>("optimizer", "n_tokens", 5);
  const std::size_t hidden_dim = projection ? projection->full_dim() / n_tokens : 0;
  if (projection && n_tokens * hidden_dim != projection->full_dim())
    throw Error(Errc::InvalidConfig, "projection width is not a multiple of n_tokens");

  std::unique_ptr<llm::KnowledgeGenerator> generator;
  std::unique_ptr<llm::ChatClient> blackbox;
  if (s.g.simulate) {
    auto world = make_world(s, a.fixture, &examples);
    std::string kind = a.sim_generator.empty() ? s.setting<std::string>("simulate", "generator", "fact")
                                               : a.sim_generator;
    if (kind == "fact") {
      const double coverage = a.coverage >= 0.0 ? a.coverage : s.setting<double>("simulate", "coverage", 1.0);
      auto covered = llm::select_covered(examples, coverage, s.seed);
      blackbox = std::make_unique<llm::OracleBlackBox>(world.task, examples, llm::OracleMode::FactToken);
      if (projection)
        generator = std::make_unique<llm::FactTokenGenerator>(world.task, covered, n_tokens, hidden_dim);
    } else if (kind == "utility") {
      blackbox = std::make_unique<llm::OracleBlackBox>(world.task, examples, llm::OracleMode::Threshold);
      if (projection) generator = std::make_unique<llm::UtilityGenerator>(world.task, n_tokens, hidden_dim);
    } else {
      throw UsageError("--sim-generator must be fact or utility");
    }
  } else {
    blackbox = std::make_unique<llm::HttpChatClient>(make_endpoint(s, "", "blackbox"));
    if (projection)
      generator = std::make_unique<llm::HttpGeneratorClient>(make_endpoint(s, "", "generator"), n_tokens, hidden_dim);
  }

  eval::EvalOptions options;
  options.concurrency = s.setting<int>("optimizer", "concurrency", 1);
  std::vector<std::pair<std::string, eval::EvalReport>> reports;
  if (want_original) reports.emplace_back("Original", eval::run_eval(*blackbox, std::nullopt, examples, options));
  if (want_blade) {
    eval::KnowledgeSource source{generator.get(), &*projection, &*prompt,
                                 s.setting<std::string>("optimizer", "instruction",
                                                        std::string(llm::kKnowledgeInstruction))};
    reports.emplace_back("+BLADE", eval::run_eval(*blackbox, source, examples, options));
  }

  std::set<std::string> subsets;
  for (const auto& example : examples)
    if (example.subset_tag()) subsets.insert(*example.subset_tag());
  const auto table = render_table(reports, subsets);
  for (const auto& [name, report] : reports)
    s.out << name << " accuracy: " << fixed(report.accuracy) << " (" << report.correct << "/" << report.total
          << ", failures " << report.failures << ")\n";
  s.out << "\n" << table;

  if (!a.out.empty()) {
    const fs::path dir(a.out);
    fs::create_directories(dir);
    json doc = json::object();
    for (const auto& [name, report] : reports) {
      const std::string key = name == "Original" ? "original" : "blade";
      doc[key] = eval::report_to_json(report);
      io::atomic_write(dir / (key + "_outcomes.csv"), eval::outcomes_csv(report, examples));
    }
    if (reports.size() == 2 && reports[0].second.accuracy > 0.0)
      doc["gain_percent"] =
          (reports[1].second.accuracy - reports[0].second.accuracy) / reports[0].second.accuracy * 100.0;
    io::atomic_write(dir / "report.json", doc.dump(2) + "\n");
    io::atomic_write(dir / "summary.txt", table);
  }
  for (const auto& [name, report] : reports)
    if (report.failures > 0) return kExitRuntime;
  return kExitOk;
}

int cmd_report(Session& s, const std::string& run_dir, std::string out_dir, const std::string& eval_report) {
  s.load();
  if (run_dir.empty() && eval_report.empty()) throw UsageError("--run-dir or --eval-report is required");
  if (out_dir.empty()) out_dir = run_dir.empty() ? std::string("plots") : (fs::path(run_dir) / "plots").string();
  fs::create_directories(out_dir);

  if (!run_dir.empty()) {
    const bpo::RunDirectory dir(run_dir);
    if (!dir.has_state()) throw UsageError("no run state in " + run_dir);
    const auto config = dir.load_config();
    const auto state = dir.load_state(config);
    std::string csv = "iteration,score,best_so_far";
    for (std::size_t i = 0; i < config.d; ++i) csv += ",p" + std::to_string(i + 1);
    csv += "\n";
    for (const auto& entry : state.history) {
      csv += std::to_string(entry.iteration) + "," + (entry.score ? io::format_double(*entry.score) : "") + "," +
             (entry.best_so_far ? io::format_double(*entry.best_so_far) : "");
      for (std::size_t i = 0; i < entry.prompt.dim(); ++i) csv += "," + io::format_double(entry.prompt[i]);
      csv += "\n";
    }
    io::atomic_write(fs::path(out_dir) / "convergence.csv", csv);
    print_run_summary(s, state);
  }

  if (!eval_report.empty()) {
    require_file(eval_report, "--eval-report");
    const auto doc = json::parse(io::read_file(eval_report));
    std::string csv = "method,subset,accuracy,correct,total\n";
    for (const auto& key : {"original", "blade"}) {
      if (!doc.contains(key)) continue;
      const auto& report = doc.at(key);
      for (const auto& [subset, stats] : report.at("per_subset").items())
        csv += std::string(key) + "," + subset + "," + io::format_double(stats.at("accuracy").get<double>()) + "," +
               std::to_string(stats.at("correct").get<std::size_t>()) + "," +
               std::to_string(stats.at("total").get<std::size_t>()) + "\n";
      csv += std::string(key) + ",All," + io::format_double(report.at("accuracy").get<double>()) + "," +
             std::to_string(report.at("correct").get<std::size_t>()) + "," +
             std::to_string(report.at("total").get<std::size_t>()) + "\n";
    }
    io::atomic_write(fs::path(out_dir) / "accuracy.csv", csv);
  }
  s.out << "plot data written to " << out_dir << "\n";
  return kExitOk;
}

bool is_usage_code(Errc code) {
  return code == Errc::InvalidConfig || code == Errc::TemplateSlotMissing;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Black-box LLM knowledge generation and soft-prompt optimization", "blade"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed_value = 0;
  app.add_option("--config", g.config_path, "Config file (.json or .toml)");
  auto* seed_option = app.add_option("--seed", seed_value, "Run seed (overrides the config)");
  app.add_flag("--simulate", g.simulate, "Use simulated endpoints");
  app.add_flag("--resume", g.resume, "Continue from existing checkpoints");
  app.add_flag("--verbose", g.verbose, "Log progress to stderr");

  std::function<int(Session&)> action;

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset, simulator fixture and starter files");
  synth->fallthrough();
  std::string synth_out;
  std::size_t synth_questions = 64;
  double synth_bandwidth = FixtureSpec{}.bandwidth_scale;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--questions", synth_questions, "Number of questions")->check(CLI::PositiveNumber);
  synth->add_option("--bandwidth-scale", synth_bandwidth, "Utility bandwidth relative to sqrt(D/3)");
  synth->callback([&] { action = [&](Session& s) { return cmd_synth(s, synth_out, synth_questions, synth_bandwidth); }; });

  auto* kit = app.add_subcommand("kit", "Knowledge instruction tuning data pipeline");
  kit->require_subcommand(1);
  kit->fallthrough();
  auto* generate = kit->add_subcommand("generate", "Generate candidate knowledge records");
  generate->fallthrough();
  KitGenerateArgs gen;
  generate->add_option("--dataset", gen.dataset, "Questions JSONL")->required();
  generate->add_option("--template", gen.template_path, "Generation prompt template");
  generate->add_option("--demos", gen.demos, "Demonstrations JSONL");
  generate->add_option("--endpoint-config", gen.endpoint_config, "Endpoint config file");
  generate->add_option("--out", gen.out, "Candidates JSONL")->required();
  generate->add_option("--checkpoint", gen.checkpoint, "Checkpoint JSONL (default: <out>.ckpt)");
  generate->add_option("--samples", gen.samples, "Samples per question")->check(CLI::PositiveNumber);
  generate->add_option("--concurrency", gen.concurrency, "Concurrent requests");
  generate->add_option("--fixture", gen.fixture, "Simulator fixture JSON");
  generate->add_option("--sim-coverage", gen.coverage, "Fraction of questions the simulated generator knows");
  generate->callback([&] { action = [&](Session& s) { return cmd_kit_generate(s, gen); }; });

  auto* filter = kit->add_subcommand("filter", "Consistency-filter candidates and emit the tuning dataset");
  filter->fallthrough();
  KitFilterArgs flt;
  filter->add_option("--candidates", flt.candidates, "Candidates JSONL")->required();
  filter->add_option("--dataset", flt.dataset, "Questions JSONL")->required();
  filter->add_option("--out", flt.out, "Emitted dataset JSONL")->required();
  filter->add_option("--endpoint-config", flt.endpoint_config, "Endpoint config file");
  filter->add_option("--instruction", flt.instruction, "Instruction field for emitted rows");
  filter->add_option("--concurrency", flt.concurrency, "Concurrent requests");
  filter->add_option("--fixture", flt.fixture, "Simulator fixture JSON");
  filter->callback([&] { action = [&](Session& s) { return cmd_kit_filter(s, flt); }; });

  auto* optimize = app.add_subcommand("optimize", "Run Bayesian prompt optimization");
  optimize->fallthrough();
  OptimizeArgs opt;
  std::size_t stop_after = 0;
  std::size_t max_iterations = 0;
  optimize->add_option("--run-dir", opt.run_dir, "Run directory");
  optimize->add_option("--dataset", opt.dataset, "Questions JSONL (simulator default: fixture questions)");
  optimize->add_option("--fixture", opt.fixture, "Simulator fixture JSON");
  auto* stop_option = optimize->add_option("--stop-after", stop_after, "Stop after this many iterations");
  auto* max_option = optimize->add_option("--max-iterations", max_iterations, "Override max_iterations");
  optimize->callback([&] {
    if (stop_option->count()) opt.stop_after = stop_after;
    if (max_option->count()) opt.max_iterations = max_iterations;
    action = [&](Session& s) { return cmd_optimize(s, opt); };
  });

  auto* evaluate = app.add_subcommand("eval", "Evaluate the original and +BLADE arms");
  evaluate->fallthrough();
  EvalArgs ev;
  evaluate->add_option("--dataset", ev.dataset, "Questions JSONL")->required();
  evaluate->add_option("--prompt", ev.prompt, "Best-prompt binary for the +BLADE arm");
  evaluate->add_option("--projection", ev.projection, "Projection binary for the +BLADE arm");
  evaluate->add_option("--run-dir", ev.run_dir, "Take prompt and projection from a run directory");
  evaluate->add_option("--arms", ev.arms, "Arms to run: original, blade")->delimiter(',');
  evaluate->add_option("--out", ev.out, "Report directory");
  evaluate->add_option("--fixture", ev.fixture, "Simulator fixture JSON");
  evaluate->add_option("--sim-generator", ev.sim_generator, "Simulated generator: fact or utility");
  evaluate->add_option("--sim-coverage", ev.coverage, "Fraction of questions the fact generator knows");
  evaluate->callback([&] { action = [&](Session& s) { return cmd_eval(s, ev); }; });

  auto* report = app.add_subcommand("report", "Write plot data as CSV");
  report->fallthrough();
  std::string report_run, report_out, report_eval;
  report->add_option("--run-dir", report_run, "Run directory");
  report->add_option("--eval-report", report_eval, "report.json written by eval");
  report->add_option("--out", report_out, "Output directory (default: <run-dir>/plots)");
  report->callback([&] { action = [&](Session& s) { return cmd_report(s, report_run, report_out, report_eval); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }
  if (seed_option->count()) g.seed = seed_value;

  Session session(g, out, err);
  try {
    return action(session);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return is_usage_code(e.code()) ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace blade::cli
