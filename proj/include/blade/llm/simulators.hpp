#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "blade/core.hpp"
#include "blade/error.hpp"
#include "blade/llm/chat.hpp"
#include "blade/synthetic.hpp"

namespace blade::llm {

enum class OracleMode {
  // Correct iff the knowledge contains the question's fact token.
  FactToken,
  // Correct iff the knowledge carries a utility tag at or above the question's threshold.
  Threshold,
};

// "答案是" followed by the concatenated labels.
std::string render_answer(const LabelSet& labels);

// First option label outside the golden set; empty when every option is golden.
LabelSet wrong_answer(const McqExample& example);

// "<utility=...>" tag carried by simulated generator output.
std::string utility_tag(double value);
std::optional<double> parse_utility_tag(const std::string& knowledge);

// Oracle black-box answer for one question given a knowledge text.
std::string simulated_blackbox(const SyntheticTask& task, const std::string& knowledge, const McqExample& question,
                               OracleMode mode);

// Ids of round(fraction * n) examples chosen by a seeded hash order.
std::set<std::string> select_covered(const std::vector<McqExample>& examples, double fraction, std::uint64_t seed);

// Finds the example a prompt is about: the one whose question text occurs
// last in the final user message (longest text on ties).
class ExampleIndex {
 public:
  explicit ExampleIndex(std::vector<McqExample> examples);
  const McqExample* find(const std::string& content) const;
  const McqExample* by_id(const std::string& id) const;
  const std::vector<McqExample>& examples() const { return examples_; }

 private:
  std::vector<McqExample> examples_;
  std::map<std::string, std::size_t> by_id_;
};

class EchoChatSimulator final : public ChatClient {
 public:
  std::string complete(const ChatRequest& request) override;
  std::string id() const override { return "echo-sim"; }
};

// Serves both roles of the black-box model. Answer prompts (under the answer
// system prompt) are answered by simulated_blackbox. Any other prompt is
// treated as a knowledge-generation request and answered with a knowledge
// text that carries the fact token only for examples in `knowledgeable_ids`.
class OracleBlackBox final : public ChatClient {
 public:
  OracleBlackBox(SyntheticTask task, std::vector<McqExample> examples, OracleMode mode,
                 std::set<std::string> knowledgeable_ids = {});

  std::string complete(const ChatRequest& request) override;
  std::string id() const override { return "oracle-sim"; }

  std::size_t answer_calls() const { return answer_calls_.load(); }
  std::size_t generation_calls() const { return generation_calls_.load(); }
  const SyntheticTask& task() const { return task_; }

 private:
  SyntheticTask task_;
  ExampleIndex index_;
  OracleMode mode_;
  std::set<std::string> knowledgeable_;
  std::atomic<std::size_t> answer_calls_{0};
  std::atomic<std::size_t> generation_calls_{0};
};

// Fails requests concerning the listed example ids with the given error, a
// limited number of times per id (forever when the count is unset).
class FlakyChatClient final : public ChatClient {
 public:
  FlakyChatClient(ChatClient& inner, std::vector<McqExample> examples, std::map<std::string, int> failures,
                  Errc error = Errc::TransportError);
  std::string complete(const ChatRequest& request) override;
  std::string id() const override { return inner_.id(); }

 private:
  ChatClient& inner_;
  ExampleIndex index_;
  std::map<std::string, int> remaining_;
  Errc error_;
  std::mutex mutex_;
};

// Emits the fact token for covered question ids and generic text otherwise.
class FactTokenGenerator final : public KnowledgeGenerator {
 public:
  FactTokenGenerator(SyntheticTask task, std::set<std::string> covered, std::size_t n_tokens, std::size_t hidden_dim);
  std::size_t n_tokens() const override { return n_tokens_; }
  std::size_t hidden_dim() const override { return hidden_dim_; }
  std::string id() const override { return "fact-generator-sim"; }
  std::size_t calls() const { return calls_.load(); }

 protected:
  std::string generate(const GeneratorRequest& request) override;

 private:
  SyntheticTask task_;
  std::set<std::string> covered_;
  std::size_t n_tokens_;
  std::size_t hidden_dim_;
  std::atomic<std::size_t> calls_{0};
};

// Scores the soft embedding with the task's Gaussian-bump utility and reports
// it in a utility tag; deterministic in the embedding.
class UtilityGenerator final : public KnowledgeGenerator {
 public:
  UtilityGenerator(SyntheticTask task, std::size_t n_tokens, std::size_t hidden_dim);
  std::size_t n_tokens() const override { return n_tokens_; }
  std::size_t hidden_dim() const override { return hidden_dim_; }
  std::string id() const override { return "utility-generator-sim"; }
  std::size_t calls() const { return calls_.load(); }

 protected:
  std::string generate(const GeneratorRequest& request) override;

 private:
  SyntheticTask task_;
  std::size_t n_tokens_;
  std::size_t hidden_dim_;
  std::atomic<std::size_t> calls_{0};
};

// Fixed knowledge per question id.
class CannedGenerator final : public KnowledgeGenerator {
 public:
  CannedGenerator(std::map<std::string, std::string> knowledge, std::size_t n_tokens, std::size_t hidden_dim);
  std::size_t n_tokens() const override { return n_tokens_; }
  std::size_t hidden_dim() const override { return hidden_dim_; }
  std::string id() const override { return "canned-generator-sim"; }

 protected:
  std::string generate(const GeneratorRequest& request) override;

 private:
  std::map<std::string, std::string> knowledge_;
  std::size_t n_tokens_;
  std::size_t hidden_dim_;
};

}  // namespace blade::llm
