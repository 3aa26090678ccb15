#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "blade/core.hpp"
#include "blade/llm/chat.hpp"

namespace blade::kit {

struct Demonstration {
  std::string question;
  std::string options;
  std::string answer;
  std::string knowledge;
};

// Prompt used to ask the black-box model for knowledge behind a known answer.
// The user template carries the slots {{demonstrations}}, {{question}},
// {{options}} and {{answer}}; the system text is the knowledge instruction,
// copied verbatim into every emitted dataset record.
struct GenerationPromptTemplate {
  std::string system_text;
  std::string user_template;
  std::vector<Demonstration> demonstrations;
  std::size_t demonstration_count = 3;

  // TemplateSlotMissing for a missing slot; InvalidConfig when the number of
  // demonstrations differs from demonstration_count.
  void validate() const;

  static GenerationPromptTemplate defaults();
  // Template file: optional system text, a line "---", then the user
  // template. Without the separator the whole file is the user template and
  // the default instruction is used. Demonstrations come from `demos`
  // (JSONL of {"question", "options", "answer", "knowledge"}) when given,
  // otherwise from the built-in set.
  static GenerationPromptTemplate load(const std::filesystem::path& template_path,
                                       const std::optional<std::filesystem::path>& demos = std::nullopt);
};

// Supplies optional reference text for a question; it is shown to the
// generating model only and never copied into emitted records.
class ContextProvider {
 public:
  virtual ~ContextProvider() = default;
  virtual std::optional<std::string> context_for(const McqExample& example) = 0;
};

// System message, then one user message with the demonstrations in order and
// the target question, its options and its golden answer.
llm::ChatRequest build_generation_prompt(const GenerationPromptTemplate& tmpl, const McqExample& example,
                                         const std::optional<std::string>& context = std::nullopt,
                                         const llm::Decoding& decoding = {});

struct GenerationOptions {
  int concurrency = 1;
  std::size_t samples_per_question = 1;
  // JSONL of per-(example, sample) status; appended as work completes.
  std::optional<std::filesystem::path> checkpoint;
  // Reuse successful entries of an existing checkpoint instead of starting over.
  bool resume = false;
  ContextProvider* context = nullptr;
  llm::Decoding decoding;
  std::function<std::string()> clock;
};

struct GenerationFailure {
  std::string example_id;
  std::size_t sample = 0;
  std::string error;
};

struct GenerationResult {
  // Dataset order, samples in order; verdicts unset.
  std::vector<KnowledgeRecord> records;
  std::vector<GenerationFailure> failures;
  std::size_t resumed = 0;
  std::size_t generated = 0;
};

// Throws EmptyInput for an empty example list. Endpoint failures are
// collected per example and do not abort the batch.
GenerationResult generate_candidates(llm::ChatClient& client, const GenerationPromptTemplate& tmpl,
                                     const std::vector<McqExample>& examples, const GenerationOptions& options = {});

// Asks the black box the question with the knowledge prepended and compares
// the extracted labels to the golden set exactly. Endpoint errors propagate.
bool consistency_check(llm::ChatClient& client, const McqExample& example, const std::string& knowledge,
                       bool multi_answer);

struct VerificationStats {
  std::size_t verified = 0;
  std::size_t unverified = 0;
};

// Fills consistency verdicts in place; a record whose check hit an endpoint
// error keeps an unset verdict so it can be retried.
VerificationStats verify_records(llm::ChatClient& client, const std::vector<McqExample>& examples,
                                 std::vector<KnowledgeRecord>& records, int concurrency = 1);

struct EmitStats {
  std::size_t kept = 0;
  std::size_t dropped = 0;
  std::size_t unverified = 0;
  friend bool operator==(const EmitStats&, const EmitStats&) = default;
};

// Writes {"instruction", "input", "output", "source_id"} lines for records
// whose verdict is true, at most one per source example, in input order.
// Records with verdict false (and surplus true samples) count as dropped;
// records without a verdict count as unverified and are not written.
EmitStats filter_and_emit(const std::vector<KnowledgeRecord>& records, const std::vector<McqExample>& examples,
                          const std::string& instruction, const std::filesystem::path& out_path);

void write_candidates(const std::filesystem::path& path, const std::vector<KnowledgeRecord>& records);
std::vector<KnowledgeRecord> read_candidates(const std::filesystem::path& path);

}  // namespace blade::kit
