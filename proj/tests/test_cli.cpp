#include <doctest.h>

#include <sstream>

#include "blade/bpo.hpp"
#include "blade/cli.hpp"
#include "blade/io.hpp"
#include "blade/kit.hpp"
#include "support/common.hpp"

using namespace blade;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "blade");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// A small synthetic world with a low-dimensional optimizer config.
struct World {
  testing::TempDir dir;
  std::string root;
  std::string config;
  std::string dataset;

  explicit World(const std::string& name) : dir(name), root((dir / "world").string()) {
    REQUIRE(run({"--seed", "5", "synth", "--out", root, "--questions", "12"}).code == 0);
    config = root + "/config.json";
    dataset = root + "/dataset.jsonl";
  }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("synth writes the starter files") {
    World world("cli-synth");
    for (const char* name : {"dataset.jsonl", "fixture.json", "template.txt", "demos.jsonl", "config.json"})
      CHECK(std::filesystem::exists(std::filesystem::path(world.root) / name));
    CHECK(kit::GenerationPromptTemplate::load(world.root + "/template.txt", world.root + "/demos.jsonl")
              .demonstrations.size() == 3);
  }

  TEST_CASE("usage errors exit with code 2") {
    World world("cli-usage");
    CHECK(run({}).code == cli::kExitUsage);
    CHECK(run({"frobnicate"}).code == cli::kExitUsage);
    const auto missing_template = run({"--config", world.config, "--simulate", "kit", "generate", "--dataset",
                                       world.dataset, "--out", (world.dir / "c.jsonl").string()});
    CHECK(missing_template.code == cli::kExitUsage);
    CHECK(run({"--config", world.config, "--simulate", "eval", "--dataset", world.dataset, "--arms", "blade"}).code ==
          cli::kExitUsage);
    CHECK(run({"--config", (world.dir / "nope.yaml").string(), "synth", "--out", (world.dir / "x").string()}).code ==
          cli::kExitUsage);
  }

  TEST_CASE("seed flag overriding the config warns") {
    World world("cli-seed");
    const auto result = run({"--config", world.config, "--seed", "6", "--simulate", "eval", "--dataset", world.dataset,
                             "--arms", "original"});
    CHECK(result.code == 0);
    CHECK(result.err.find("warning: --seed 6 overrides config seed 5") != std::string::npos);
    CHECK(result.out.find("Original accuracy: 0.000") != std::string::npos);
    const auto same = run({"--config", world.config, "--seed", "5", "--simulate", "eval", "--dataset", world.dataset,
                           "--arms", "original"});
    CHECK(same.err.find("warning") == std::string::npos);
  }

  TEST_CASE("kit generate resumes and filter reruns idempotently") {
    World world("cli-kit");
    const std::string cands = (world.dir / "cands.jsonl").string();
    const std::string out = (world.dir / "kit.jsonl").string();
    std::vector<std::string> generate = {"--config", world.config, "--simulate", "kit", "generate",
                                         "--dataset", world.dataset, "--template", world.root + "/template.txt",
                                         "--out", cands, "--sim-coverage", "0.5"};
    REQUIRE(run(generate).code == 0);
    const std::string first = io::read_file(cands);
    CHECK(kit::read_candidates(cands).size() == 12);

    std::vector<std::string> resume = generate;
    resume.insert(resume.begin(), "--resume");
    const auto resumed = run(resume);
    CHECK(resumed.code == 0);
    CHECK(io::read_file(cands) == first);

    std::vector<std::string> filter = {"--config", world.config, "--simulate", "kit", "filter", "--candidates", cands,
                                       "--dataset", world.dataset, "--out", out};
    const auto filtered = run(filter);
    REQUIRE(filtered.code == 0);
    const std::string emitted = io::read_file(out);
    std::size_t lines = 0;
    for (char c : emitted) lines += c == '\n';
    CHECK(lines == 6);
    CHECK(run(filter).code == 0);
    CHECK(io::read_file(out) == emitted);
  }

  TEST_CASE("interrupted optimize resumes to the uninterrupted history") {
    World world("cli-opt");
    const std::string full = (world.dir / "full").string();
    const std::string part = (world.dir / "part").string();
    REQUIRE(run({"--config", world.config, "--simulate", "optimize", "--run-dir", full, "--max-iterations", "6"}).code == 0);
    REQUIRE(run({"--config", world.config, "--simulate", "optimize", "--run-dir", part, "--max-iterations", "6",
                 "--stop-after", "3"})
                .code == 0);
    CHECK(run({"--config", world.config, "--simulate", "optimize", "--run-dir", part}).code != 0);
    const auto resumed = run({"--config", world.config, "--simulate", "--resume", "optimize", "--run-dir", part});
    REQUIRE(resumed.code == 0);
    CHECK(resumed.out.find("best score:") != std::string::npos);
    CHECK(io::read_file(part + "/history.csv") == io::read_file(full + "/history.csv"));

    const auto report = run({"--config", world.config, "report", "--run-dir", full, "--out",
                             (world.dir / "plots").string()});
    REQUIRE(report.code == 0);
    const std::string csv = io::read_file(world.dir / "plots/convergence.csv");
    CHECK(csv.rfind("iteration,score,best_so_far,p1,", 0) == 0);
  }

  TEST_CASE("eval writes a report and a gain table") {
    World world("cli-eval");
    const std::string run_dir = (world.dir / "run").string();
    REQUIRE(run({"--config", world.config, "--simulate", "optimize", "--run-dir", run_dir, "--max-iterations", "3"})
                .code == 0);
    const std::string out = (world.dir / "eval").string();
    const auto result = run({"--config", world.config, "--simulate", "eval", "--dataset", world.dataset, "--run-dir",
                             run_dir, "--sim-generator", "fact", "--sim-coverage", "1.0", "--out", out});
    REQUIRE(result.code == 0);
    CHECK(result.out.find("+BLADE accuracy: 1.000 (12/12") != std::string::npos);
    CHECK(result.out.find("Gain%") != std::string::npos);
    const auto doc = nlohmann::json::parse(io::read_file(out + "/report.json"));
    CHECK(doc.contains("original"));
    CHECK(doc["blade"]["accuracy"] == 1.0);
  }

  TEST_CASE("toml configs") {
    const auto doc = cli::parse_toml(
        "seed = 7\n"
        "name = \"demo\"\n"
        "[optimizer]\n"
        "d = 4\n"
        "convergence_threshold = 0.01\n"
        "resample_batch = true\n"
        "[endpoints.blackbox]\n"
        "base_url = \"http://localhost:8000\"\n");
    CHECK(doc["seed"] == 7);
    CHECK(doc["name"] == "demo");
    CHECK(doc["optimizer"]["d"] == 4);
    CHECK(doc["optimizer"]["convergence_threshold"].get<double>() == doctest::Approx(0.01));
    CHECK(doc["optimizer"]["resample_batch"] == true);
    CHECK(doc["endpoints"]["blackbox"]["base_url"] == "http://localhost:8000");

    testing::TempDir dir("cli-toml");
    io::atomic_write(dir / "c.toml", "seed = 3\n");
    CHECK(cli::load_config_file(dir / "c.toml")["seed"] == 3);
    io::atomic_write(dir / "c.json", "{\"seed\": 4}");
    CHECK(cli::load_config_file(dir / "c.json")["seed"] == 4);
    CHECK_ERRC(cli::load_config_file(dir / "missing.json"), Errc::InvalidConfig);
  }
}
