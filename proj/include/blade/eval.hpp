#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "blade/core.hpp"
#include "blade/error.hpp"
#include "blade/llm/chat.hpp"
#include "blade/projection.hpp"

namespace blade::eval {

struct LoadIssue {
  std::size_t line;
  Errc code;
  std::string message;
};

struct LoadResult {
  std::vector<McqExample> examples;
  // Only populated in lenient mode.
  std::vector<LoadIssue> issues;
  bool empty = false;
};

// Reads a JSONL dataset. Strict mode throws Error(ParseError | ValidationError)
// carrying the 1-based line; lenient mode skips bad lines and records them.
// Blank lines are ignored; duplicate ids are a ValidationError.
LoadResult load_dataset(const std::filesystem::path& path, bool lenient = false);
void write_dataset(const std::filesystem::path& path, const std::vector<McqExample>& examples);

// Pulls the predicted label set out of a completion. Rules, first match wins:
//  1. an anchor phrase (答案是 / 正确答案是 / 答案为 / 答案： / "correct answer is" /
//     "answer is" / "answer:"; case-insensitive) followed by a label run;
//  2. a line consisting only of a label run, optionally wrapped in brackets
//     or followed by a period;
//  3. when multi is false, the first standalone uppercase label letter.
// A label run is labels separated by nothing, commas, 、, 和, "and", "&", "/"
// or spaces, e.g. "AC", "A,C", "A和C", "A and C". Labels are case-insensitive
// in rules 1 and 2. The result is restricted to `allowed`; an empty set means
// extraction failed.
LabelSet extract_answer(std::string_view completion, const LabelSet& allowed, bool multi);

// correct iff predicted equals the golden set exactly.
EvalOutcome score_example(const McqExample& example, const LabelSet& predicted, std::string raw_completion = {});

struct SubsetStats {
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

struct EvalReport {
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  std::size_t failures = 0;
  std::map<std::string, SubsetStats> per_subset;
  // Sorted by example id.
  std::vector<EvalOutcome> outcomes;
};

// The knowledge arm: one generator call per question with the soft embedding
// p^T A split into the generator's (n_tokens, hidden_dim).
struct KnowledgeSource {
  llm::KnowledgeGenerator* generator = nullptr;
  const ProjectionMatrix* projection = nullptr;
  const LowDimPrompt* prompt = nullptr;
  std::string instruction;
};

struct EvalOptions {
  int concurrency = 1;
  // Defaults to true when any example has more than one golden label.
  std::optional<bool> multi_answer;
};

// Queries the black box for every example, with generated knowledge prepended
// when a knowledge source is given. Endpoint failures make that example
// incorrect and are flagged in its outcome; they do not abort the run.
EvalReport run_eval(llm::ChatClient& blackbox, const std::optional<KnowledgeSource>& knowledge,
                    const std::vector<McqExample>& examples, const EvalOptions& options = {});

// Aggregates outcomes (any order) into a report.
EvalReport assemble_report(std::vector<EvalOutcome> outcomes, const std::vector<McqExample>& examples);

nlohmann::json report_to_json(const EvalReport& report);
// Columns: example_id, subset, golden, predicted, correct, error.
std::string outcomes_csv(const EvalReport& report, const std::vector<McqExample>& examples);

}  // namespace blade::eval
